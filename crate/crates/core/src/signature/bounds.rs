//! Per-position length bounds used by the matchers.

use std::fmt;
use std::str::FromStr;

use crate::ingest::packet::Direction;
use crate::signature::model::Signature;

/// Default neighborhood radius, shared by clustering and range matching.
pub const DEFAULT_EPS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchStrategy {
    Exact,
    Range,
    /// Widen the given flat positions (all when `None`) by ±delta.
    Relaxed { delta: u32, positions: Option<Vec<usize>> },
}

impl fmt::Display for MatchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchStrategy::Exact => f.write_str("exact"),
            MatchStrategy::Range => f.write_str("range"),
            MatchStrategy::Relaxed { delta, .. } => write!(f, "relaxed({delta})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bound {
    pub direction: Direction,
    pub lower: u32,
    pub upper: u32,
}

impl Bound {
    pub fn matches(&self, direction: Direction, length: u32) -> bool {
        self.direction == direction && self.lower <= length && length <= self.upper
    }

    pub fn shifted(self, by: u32) -> Bound {
        Bound {
            lower: self.lower.saturating_add(by),
            upper: self.upper.saturating_add(by),
            ..self
        }
    }

    fn overlaps(&self, other: &Bound) -> bool {
        self.direction == other.direction && self.lower <= other.upper && other.lower <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchBounds {
    pub sets: Vec<Vec<Bound>>,
}

impl MatchBounds {
    pub fn flat(&self) -> impl Iterator<Item = &Bound> {
        self.sets.iter().flatten()
    }

    /// Adds a constant to every bound (layer-2 or tunnel header offsets).
    pub fn shifted(&self, by: u32) -> MatchBounds {
        self.shifted_by(|_| by)
    }

    pub fn shifted_by(&self, f: impl Fn(Direction) -> u32) -> MatchBounds {
        MatchBounds {
            sets: self
                .sets
                .iter()
                .map(|s| s.iter().map(|b| b.shifted(f(b.direction))).collect())
                .collect(),
        }
    }

    /// Whether some packet pattern could satisfy both bounds position-by-position.
    pub fn overlaps(&self, other: &MatchBounds) -> bool {
        self.sets.len() == other.sets.len()
            && self.sets.iter().zip(&other.sets).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.overlaps(y))
            })
    }
}

/// `[min - eps, max + eps]` per position, clamped at zero.
pub fn range_bounds(core: &[(u32, u32)], eps: f64) -> Vec<(u32, u32)> {
    core.iter()
        .map(|&(lo, hi)| {
            let lower = (lo as f64 - eps).ceil().max(0.0) as u32;
            let upper = (hi as f64 + eps).floor().max(0.0).min(u32::MAX as f64) as u32;
            (lower, upper)
        })
        .collect()
}

/// Bounds admitting exactly the trained lengths.
pub fn exact_bounds(sig: &Signature) -> MatchBounds {
    MatchBounds {
        sets: sig
            .sets
            .iter()
            .map(|s| {
                s.positions
                    .iter()
                    .map(|p| Bound {
                        direction: p.direction,
                        lower: p.min,
                        upper: p.max,
                    })
                    .collect()
            })
            .collect(),
    }
}

fn widened_core_bounds(sig: &Signature, eps: f64) -> MatchBounds {
    MatchBounds {
        sets: sig
            .sets
            .iter()
            .map(|s| {
                let core: Vec<(u32, u32)> = s.positions.iter().map(|p| (p.core_min, p.core_max)).collect();
                s.positions
                    .iter()
                    .zip(range_bounds(&core, eps))
                    .map(|(p, (lower, upper))| Bound {
                        direction: p.direction,
                        lower: lower.min(p.min),
                        upper: upper.max(p.max),
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Widens the listed flat positions of the trained bounds by ±delta.
pub fn relaxed_bounds(sig: &Signature, delta: u32, positions: &[usize]) -> MatchBounds {
    let mut bounds = exact_bounds(sig);
    let mut flat = 0usize;
    for set in bounds.sets.iter_mut() {
        for b in set.iter_mut() {
            if positions.contains(&flat) {
                b.lower = b.lower.saturating_sub(delta);
                b.upper = b.upper.saturating_add(delta);
            }
            flat += 1;
        }
    }
    bounds
}

/// Resolves the bounds a detector should use for `sig`.
///
/// Range matching only applies to positions that varied in training, and is
/// refused (falling back to exact) for 2-packet signatures or when the widened
/// bounds would overlap another signature of the same device.
pub fn effective_bounds(sig: &Signature, strategy: &MatchStrategy, siblings: &[Signature], eps: f64) -> MatchBounds {
    match strategy {
        MatchStrategy::Exact => exact_bounds(sig),
        MatchStrategy::Relaxed { delta, positions } => {
            let all: Vec<usize> = (0..sig.total_packets()).collect();
            relaxed_bounds(sig, *delta, positions.as_deref().unwrap_or(&all))
        }
        MatchStrategy::Range => {
            if !range_allowed(sig, siblings, eps) {
                return exact_bounds(sig);
            }
            let widened = widened_core_bounds(sig, eps);
            let exact = exact_bounds(sig);
            let mut out = exact.clone();
            for ((set, wide), spec) in out.sets.iter_mut().zip(&widened.sets).zip(&sig.sets) {
                for ((b, w), p) in set.iter_mut().zip(wide).zip(&spec.positions) {
                    if p.has_variation() {
                        *b = *w;
                    }
                }
            }
            out
        }
    }
}

pub fn range_allowed(sig: &Signature, siblings: &[Signature], eps: f64) -> bool {
    if sig.total_packets() == 2 {
        return false;
    }
    let mine = widened_core_bounds(sig, eps);
    !siblings
        .iter()
        .filter(|o| o.device == sig.device && o.id != sig.id)
        .any(|o| mine.overlaps(&widened_core_bounds(o, eps)))
}

/// Maximum span allowed for a full match: ⌊1.1 × max trained duration⌋ ms.
pub fn detection_window_ms(duration_max_ms: u64) -> u64 {
    duration_max_ms + duration_max_ms / 10
}

impl FromStr for MatchStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(MatchStrategy::Exact),
            "range" => Ok(MatchStrategy::Range),
            other => Err(format!("unknown match strategy {other:?}")),
        }
    }
}
