use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::packet::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommClass {
    PhoneCloud,
    DeviceCloud,
    PhoneDevice,
}

impl fmt::Display for CommClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommClass::PhoneCloud => "phone-cloud",
            CommClass::DeviceCloud => "device-cloud",
            CommClass::PhoneDevice => "phone-device",
        })
    }
}

/// One packet position of a sequence: direction plus the lengths seen in
/// training (`min..=max`) and the extent of the clustering core points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionSpec {
    pub direction: Direction,
    pub min: u32,
    pub max: u32,
    pub core_min: u32,
    pub core_max: u32,
}

impl PositionSpec {
    pub fn exact(direction: Direction, len: u32) -> Self {
        PositionSpec {
            direction,
            min: len,
            max: len,
            core_min: len,
            core_max: len,
        }
    }

    pub fn ranged(direction: Direction, min: u32, max: u32) -> Self {
        PositionSpec {
            direction,
            min,
            max,
            core_min: min,
            core_max: max,
        }
    }

    pub fn has_variation(&self) -> bool {
        self.min != self.max
    }
}

impl fmt::Display for PositionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.has_variation() {
            write!(f, "{}-[{}-{}]", self.direction, self.min, self.max)
        } else {
            write!(f, "{}-{}", self.direction, self.min)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    pub positions: Vec<PositionSpec>,
}

impl SetSpec {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationStats {
    pub min_ms: u64,
    pub avg_ms: u64,
    pub max_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub capture_sha256: String,
    pub window_t_s: f64,
    pub eps: f64,
    pub min_pts: u64,
    pub tool_version: String,
}

/// An ordered list of packet-sequence sets identifying one device event.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub id: String,
    pub device: String,
    pub label: String,
    pub comm_class: CommClass,
    pub sets: Vec<SetSpec>,
    pub duration: DurationStats,
    pub layer2_offset: u32,
    pub provenance: Option<Provenance>,
}

impl Signature {
    pub fn total_packets(&self) -> usize {
        self.sets.iter().map(SetSpec::len).sum()
    }

    pub fn positions(&self) -> impl Iterator<Item = &PositionSpec> {
        self.sets.iter().flat_map(|s| s.positions.iter())
    }

    /// Same set count, sequence lengths and per-position directions.
    pub fn same_shape(&self, other: &Signature) -> bool {
        self.sets.len() == other.sets.len()
            && self.sets.iter().zip(&other.sets).all(|(a, b)| {
                a.len() == b.len()
                    && a.positions
                        .iter()
                        .zip(&b.positions)
                        .all(|(p, q)| p.direction == q.direction)
            })
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Signature("empty id".into()));
        }
        if self.sets.is_empty() || self.sets.iter().any(SetSpec::is_empty) {
            return Err(Error::Signature(format!("{}: empty sequence set", self.id)));
        }
        for (i, p) in self.positions().enumerate() {
            if p.min > p.max {
                return Err(Error::Signature(format!(
                    "{}: position {i} has min {} > max {}",
                    self.id, p.min, p.max
                )));
            }
            if p.core_min > p.core_max {
                return Err(Error::Signature(format!(
                    "{}: position {i} has core_min {} > core_max {}",
                    self.id, p.core_min, p.core_max
                )));
            }
        }
        let d = self.duration;
        if d.min_ms > d.avg_ms || d.avg_ms > d.max_ms {
            return Err(Error::Signature(format!(
                "{}: duration stats not ordered ({}/{}/{})",
                self.id, d.min_ms, d.avg_ms, d.max_ms
            )));
        }
        if self.total_packets() >= 2 && d.max_ms == 0 {
            return Err(Error::Signature(format!(
                "{}: multi-packet signature needs a positive max duration",
                self.id
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, set) in self.sets.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "S{}:", i + 1)?;
            for p in &set.positions {
                write!(f, " {p}")?;
            }
        }
        Ok(())
    }
}
