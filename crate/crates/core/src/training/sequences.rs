//! Joining clustered pairs into packet sequences and ordering sequence sets.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ingest::packet::{Direction, Timestamp};
use crate::signature::model::PositionSpec;
use crate::training::dbscan::PairCluster;
use crate::training::pairs::PacketPair;

/// A pair together with where it sits in the training data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub pair: PacketPair,
    /// Connection number.
    pub conn: usize,
    /// Position in that connection's pair list.
    pub pos: usize,
    /// Event window index.
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeqPacket {
    pub direction: Direction,
    pub length: u32,
    pub ts: Timestamp,
    /// Came from a core point of its pair cluster.
    pub core: bool,
}

/// One occurrence of a packet sequence: consecutive pairs of one connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceMember {
    pub conn: usize,
    pub window: usize,
    pub first_pair: usize,
    pub last_pair: usize,
    pub packets: Vec<SeqPacket>,
}

impl SequenceMember {
    pub fn first_ts(&self) -> Timestamp {
        self.packets[0].ts
    }

    pub fn last_ts(&self) -> Timestamp {
        self.packets[self.packets.len() - 1].ts
    }

    fn join(&self, next: &SequenceMember) -> SequenceMember {
        SequenceMember {
            conn: self.conn,
            window: self.window,
            first_pair: self.first_pair,
            last_pair: next.last_pair,
            packets: self.packets.iter().chain(&next.packets).copied().collect(),
        }
    }
}

/// Similar packet sequences: same length and per-position directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSet {
    pub members: Vec<SequenceMember>,
}

impl SequenceSet {
    pub fn sequence_len(&self) -> usize {
        self.members[0].packets.len()
    }

    pub fn earliest_ts(&self) -> Timestamp {
        self.members.iter().map(SequenceMember::first_ts).min().unwrap()
    }

    /// Per-position direction, observed length range and core-point range.
    pub fn positions(&self) -> Vec<PositionSpec> {
        (0..self.sequence_len())
            .map(|k| {
                let all = self.members.iter().map(|m| m.packets[k]);
                let direction = self.members[0].packets[k].direction;
                let min = all.clone().map(|p| p.length).min().unwrap();
                let max = all.clone().map(|p| p.length).max().unwrap();
                let core: Vec<u32> = all.filter(|p| p.core).map(|p| p.length).collect();
                let (core_min, core_max) = match (core.iter().min(), core.iter().max()) {
                    (Some(&a), Some(&b)) => (a, b),
                    _ => (min, max),
                };
                PositionSpec {
                    direction,
                    min,
                    max,
                    core_min,
                    core_max,
                }
            })
            .collect()
    }
}

fn initial_set(cluster: &PairCluster, pairs: &[TrainingPair]) -> SequenceSet {
    let members = cluster
        .members
        .iter()
        .map(|&i| {
            let tp = &pairs[i];
            let core = cluster.core.binary_search(&i).is_ok();
            SequenceMember {
                conn: tp.conn,
                window: tp.window,
                first_pair: tp.pos,
                last_pair: tp.pos,
                packets: tp
                    .pair
                    .packets()
                    .map(|p| SeqPacket {
                        direction: p.direction,
                        length: p.length,
                        ts: p.ts,
                        core,
                    })
                    .collect(),
            }
        })
        .collect();
    SequenceSet { members }
}

/// Joins every member of `all` with the member of `other` that sits right
/// after it (`all_first`) or right before it in the same connection and
/// window. `None` unless every member of `all` finds a partner.
fn try_join(all: &SequenceSet, other: &SequenceSet, all_first: bool) -> Option<SequenceSet> {
    let key: HashMap<(usize, usize, usize), &SequenceMember> = other
        .members
        .iter()
        .map(|m| {
            let pos = if all_first { m.first_pair } else { m.last_pair };
            ((m.conn, m.window, pos), m)
        })
        .collect();
    let mut members = Vec::with_capacity(all.members.len());
    for m in &all.members {
        let members_out = if all_first {
            let partner = key.get(&(m.conn, m.window, m.last_pair + 1))?;
            m.join(partner)
        } else {
            let before = m.first_pair.checked_sub(1)?;
            let partner = key.get(&(m.conn, m.window, before))?;
            partner.join(m)
        };
        members.push(members_out);
    }
    Some(SequenceSet { members })
}

fn merge(a: &SequenceSet, b: &SequenceSet) -> Option<SequenceSet> {
    try_join(a, b, true)
        .or_else(|| try_join(b, a, false))
        .or_else(|| try_join(a, b, false))
        .or_else(|| try_join(b, a, true))
}

/// Turns pruned pair clusters into sequence sets, repeatedly joining two sets
/// when every occurrence of one is directly adjacent (same connection, next
/// or previous pair) to an occurrence of the other. Unmatched occurrences of
/// the other set are dropped. Sets are tried in order of earliest occurrence.
pub fn concatenate_pairs(clusters: &[PairCluster], pairs: &[TrainingPair]) -> Vec<SequenceSet> {
    let mut sets: Vec<SequenceSet> = clusters.iter().map(|c| initial_set(c, pairs)).collect();
    sets.sort_by_key(SequenceSet::earliest_ts);
    'outer: loop {
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                if let Some(joined) = merge(&sets[i], &sets[j]) {
                    sets[i] = joined;
                    sets.remove(j);
                    sets.sort_by_key(SequenceSet::earliest_ts);
                    continue 'outer;
                }
            }
        }
        break;
    }
    sets
}

/// `x` goes before `y` when every sequence of `x` is followed, within the
/// window, by some sequence of `y`.
pub fn precedes(x: &SequenceSet, y: &SequenceSet, window_us: i64) -> bool {
    x.members.iter().all(|sx| {
        y.members.iter().any(|sy| {
            sx.last_ts() < sy.first_ts() && sy.last_ts().micros() - sx.first_ts().micros() <= window_us
        })
    })
}

/// Orders sets by occurrence. Incomparable sets are resolved by dropping the
/// one with shorter sequences (then fewer occurrences, then the later one).
pub fn order_sequence_sets(mut sets: Vec<SequenceSet>, window_us: i64) -> Result<Vec<SequenceSet>> {
    if sets.is_empty() {
        return Err(Error::Extraction("no sequence sets".into()));
    }
    let comparable = |a: &SequenceSet, b: &SequenceSet| precedes(a, b, window_us) || precedes(b, a, window_us);
    if sets.len() > 1 {
        let same_len = sets.iter().all(|s| s.sequence_len() == sets[0].sequence_len());
        let none_comparable = (0..sets.len())
            .all(|i| (i + 1..sets.len()).all(|j| !comparable(&sets[i], &sets[j])));
        if same_len && none_comparable {
            return Err(Error::Extraction(format!(
                "{} sequence sets of length {} with no consistent order",
                sets.len(),
                sets[0].sequence_len()
            )));
        }
    }

    'resolve: loop {
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                if comparable(&sets[i], &sets[j]) {
                    continue;
                }
                let (a, b) = (&sets[i], &sets[j]);
                let key = |s: &SequenceSet| (s.sequence_len(), s.members.len(), std::cmp::Reverse(s.earliest_ts()));
                let drop = if key(a) < key(b) { i } else { j };
                log::debug!("dropping incomparable sequence set of length {}", sets[drop].sequence_len());
                sets.remove(drop);
                continue 'resolve;
            }
        }
        break;
    }

    let n = sets.len();
    for i in 0..n {
        for j in i + 1..n {
            if precedes(&sets[i], &sets[j], window_us) && precedes(&sets[j], &sets[i], window_us) {
                return Err(Error::Extraction("sequence set order is not antisymmetric".into()));
            }
        }
    }
    let mut keyed: Vec<(usize, SequenceSet)> = sets
        .iter()
        .map(|s| sets.iter().filter(|o| precedes(s, o, window_us)).count())
        .zip(sets.iter().cloned())
        .collect();
    keyed.sort_by_key(|(ahead, s)| (std::cmp::Reverse(*ahead), s.earliest_ts()));
    let ordered: Vec<SequenceSet> = keyed.into_iter().map(|(_, s)| s).collect();
    if ordered.windows(2).any(|w| !precedes(&w[0], &w[1], window_us)) {
        return Err(Error::Extraction("sequence sets admit no total order".into()));
    }
    Ok(ordered)
}
