//! Trace profiles: what a synthetic capture should contain.
//!
//! ```toml
//! device = "tplink-plug"
//! n_per_label = 50
//! event_spacing_s = 131.0
//! window_s = 15.0
//!
//! [[events]]
//! label = "ON"
//! [[events.sets]]
//! class = "device-cloud"
//! packets = ["C-556", "S-1293"]
//!
//! [[background]]
//! kind = "periodic"
//! period_s = 7.0
//! request = [100, 120]
//! reply = [200, 220]
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::packet::Direction;
use crate::signature::model::CommClass;

fn default_n() -> usize {
    50
}
fn default_spacing() -> f64 {
    131.0
}
fn default_window() -> f64 {
    15.0
}
fn default_start() -> f64 {
    1_500_000_000.0
}
fn default_delay() -> [u64; 2] {
    [20, 200]
}
fn default_gap() -> [u64; 2] {
    [1, 50]
}
fn default_true() -> bool {
    true
}
fn default_offset() -> u32 {
    crate::ingest::DEFAULT_LAYER2_OFFSET
}
fn default_connections() -> usize {
    1
}
fn default_class() -> CommClass {
    CommClass::DeviceCloud
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceProfile {
    pub device: String,
    #[serde(default = "default_n")]
    pub n_per_label: usize,
    #[serde(default = "default_spacing")]
    pub event_spacing_s: f64,
    /// Training window the capture is meant for; events are spaced by more than twice this.
    #[serde(default = "default_window")]
    pub window_s: f64,
    #[serde(default = "default_start")]
    pub start_epoch_s: f64,
    /// Delay from the event timestamp to its first packet, ms.
    #[serde(default = "default_delay")]
    pub delay_ms: [u64; 2],
    /// Gap between consecutive packets of an event, ms.
    #[serde(default = "default_gap")]
    pub gap_ms: [u64; 2],
    #[serde(default = "default_true")]
    pub tls: bool,
    #[serde(default = "default_true")]
    pub acks: bool,
    #[serde(default = "default_true")]
    pub handshake: bool,
    #[serde(default = "default_offset")]
    pub layer2_offset: u32,
    /// Also write an 802.11 radiotap capture of the same traffic.
    #[serde(default)]
    pub radiotap: bool,
    pub events: Vec<EventTemplate>,
    #[serde(default)]
    pub background: Vec<BackgroundFlow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventTemplate {
    pub label: String,
    pub sets: Vec<SetTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetTemplate {
    #[serde(default = "default_class")]
    pub class: CommClass,
    /// `C-556`, `S-1293` or ranged `C-[338-339]`.
    pub packets: Vec<String>,
}

impl SetTemplate {
    pub fn parsed(&self) -> Result<Vec<PacketTemplate>> {
        self.packets.iter().map(|p| p.parse().map_err(Error::Profile)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketTemplate {
    pub direction: Direction,
    pub min: u32,
    pub max: u32,
}

impl FromStr for PacketTemplate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("bad packet template {s:?}");
        let (dir, rest) = s.trim().split_once('-').ok_or_else(bad)?;
        let direction = match dir {
            "C" => Direction::ClientToServer,
            "S" => Direction::ServerToClient,
            _ => return Err(bad()),
        };
        let (min, max) = match rest.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            Some(range) => {
                let (a, b) = range.split_once('-').ok_or_else(bad)?;
                (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)
            }
            None => {
                let v = rest.parse().map_err(|_| bad())?;
                (v, v)
            }
        };
        if min > max || min == 0 {
            return Err(bad());
        }
        Ok(PacketTemplate { direction, min, max })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Host {
    #[default]
    Device,
    Phone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackgroundFlow {
    /// One persistent connection with a request/reply every `period_s`.
    Periodic {
        period_s: f64,
        request: [u32; 2],
        reply: [u32; 2],
        #[serde(default)]
        host: Host,
    },
    /// Poisson request/reply exchanges spread over `connections` connections.
    Random {
        rate_per_s: f64,
        request: [u32; 2],
        reply: [u32; 2],
        #[serde(default = "default_connections")]
        connections: usize,
        #[serde(default)]
        host: Host,
    },
    /// A small request answered by a burst of equal-size segments.
    Bulk {
        interval_s: f64,
        segments: usize,
        segment_len: u32,
        #[serde(default)]
        host: Host,
    },
}

impl TraceProfile {
    pub fn parse(text: &str) -> Result<Self> {
        let p: TraceProfile = toml::from_str(text).map_err(|e| Error::Profile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Profile(m));
        if self.events.is_empty() {
            return err("no event templates".into());
        }
        if self.n_per_label == 0 {
            return err("n_per_label must be positive".into());
        }
        let spaced = self.window_s > 0.0 && self.event_spacing_s > 2.0 * self.window_s;
        if !spaced {
            return err(format!(
                "event spacing {} s must exceed twice the window {} s",
                self.event_spacing_s, self.window_s
            ));
        }
        if self.delay_ms[0] > self.delay_ms[1] || self.gap_ms[0] > self.gap_ms[1] || self.gap_ms[0] == 0 {
            return err("delay/gap ranges must be ordered and gaps positive".into());
        }
        let min_len = if self.tls { 5 } else { 1 };
        for e in &self.events {
            if e.sets.is_empty() || e.sets.iter().any(|s| s.packets.is_empty()) {
                return err(format!("event {} has an empty set", e.label));
            }
            for s in &e.sets {
                for p in s.parsed()? {
                    if p.min < min_len {
                        return err(format!("event {}: lengths must be at least {min_len}", e.label));
                    }
                }
            }
        }
        for b in &self.background {
            let ok = match b {
                BackgroundFlow::Periodic { period_s, request, reply, .. } => {
                    *period_s > 0.0 && request[0] <= request[1] && reply[0] <= reply[1] && request[0] >= min_len && reply[0] >= min_len
                }
                BackgroundFlow::Random { rate_per_s, request, reply, connections, .. } => {
                    *rate_per_s > 0.0
                        && *connections > 0
                        && request[0] <= request[1]
                        && reply[0] <= reply[1]
                        && request[0] >= min_len
                        && reply[0] >= min_len
                }
                BackgroundFlow::Bulk { interval_s, segments, segment_len, .. } => {
                    *interval_s > 0.0 && *segments > 0 && *segment_len >= min_len
                }
            };
            if !ok {
                return err(format!("invalid background flow {b:?}"));
            }
        }
        Ok(())
    }

    /// Every (direction, min, max) used by an event template.
    pub fn template_lengths(&self) -> Vec<PacketTemplate> {
        self.events
            .iter()
            .flat_map(|e| e.sets.iter())
            .flat_map(|s| s.parsed().unwrap_or_default())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_notation() {
        let p: PacketTemplate = "C-[338-339]".parse().unwrap();
        assert_eq!((p.direction, p.min, p.max), (Direction::ClientToServer, 338, 339));
        let p: PacketTemplate = "S-1293".parse().unwrap();
        assert_eq!((p.min, p.max), (1293, 1293));
        assert!("X-1".parse::<PacketTemplate>().is_err());
        assert!("C-[5-3]".parse::<PacketTemplate>().is_err());
    }

    #[test]
    fn parse_with_defaults() {
        let p = TraceProfile::parse(
            r#"
            device = "plug"
            [[events]]
            label = "ON"
            [[events.sets]]
            packets = ["C-556", "S-1293"]
            [[background]]
            kind = "random"
            rate_per_s = 2.0
            request = [100, 200]
            reply = [300, 400]
            "#,
        )
        .unwrap();
        assert_eq!(p.n_per_label, 50);
        assert_eq!(p.event_spacing_s, 131.0);
        assert_eq!(p.events[0].sets[0].class, CommClass::DeviceCloud);
        assert_eq!(TraceProfile::parse(&p.to_toml()).unwrap(), p);
    }

    #[test]
    fn rejects_tight_spacing() {
        let text = "device = \"d\"\nevent_spacing_s = 20.0\n[[events]]\nlabel = \"ON\"\n[[events.sets]]\npackets = [\"C-556\"]\n";
        assert!(matches!(TraceProfile::parse(text), Err(Error::Profile(_))));
    }
}
