//! Position-by-position comparison of two signatures.

use serde::Serialize;

use crate::signature::model::Signature;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Comparison {
    /// Set count, sequence lengths or directions differ.
    ShapeMismatch { reason: String },
    /// Signed `b - a` deltas of each position's lower length, per set.
    Comparable {
        deltas: Vec<Vec<i64>>,
        max_abs_delta: u64,
        identical: bool,
    },
}

impl Comparison {
    /// The smallest delta that lets relaxed matching accept both signatures.
    pub fn relaxed_delta(&self) -> Option<u64> {
        match self {
            Comparison::Comparable { max_abs_delta, .. } => Some(*max_abs_delta),
            Comparison::ShapeMismatch { .. } => None,
        }
    }
}

pub fn compare_signatures(a: &Signature, b: &Signature) -> Comparison {
    if a.sets.len() != b.sets.len() {
        return Comparison::ShapeMismatch {
            reason: format!("{} vs {} sequence sets", a.sets.len(), b.sets.len()),
        };
    }
    for (i, (x, y)) in a.sets.iter().zip(&b.sets).enumerate() {
        if x.len() != y.len() {
            return Comparison::ShapeMismatch {
                reason: format!("set {}: {} vs {} packets", i + 1, x.len(), y.len()),
            };
        }
        if let Some(j) = x
            .positions
            .iter()
            .zip(&y.positions)
            .position(|(p, q)| p.direction != q.direction)
        {
            return Comparison::ShapeMismatch {
                reason: format!("set {}, position {}: direction differs", i + 1, j + 1),
            };
        }
    }
    let deltas: Vec<Vec<i64>> = a
        .sets
        .iter()
        .zip(&b.sets)
        .map(|(x, y)| {
            x.positions
                .iter()
                .zip(&y.positions)
                .map(|(p, q)| q.min as i64 - p.min as i64)
                .collect()
        })
        .collect();
    let max_abs_delta = deltas.iter().flatten().map(|d| d.unsigned_abs()).max().unwrap_or(0);
    let identical = a.sets == b.sets;
    Comparison::Comparable {
        deltas,
        max_abs_delta,
        identical,
    }
}
