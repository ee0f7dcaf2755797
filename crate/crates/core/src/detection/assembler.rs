//! Joins per-set completions into full signature matches.

use crate::detection::machine::Hit;
use crate::ingest::packet::Timestamp;

/// A completed sequence for one set of a signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub set: usize,
    pub hits: Vec<Hit>,
}

impl Completion {
    pub fn first_ts(&self) -> Timestamp {
        self.hits[0].ts
    }

    pub fn last_ts(&self) -> Timestamp {
        self.hits[self.hits.len() - 1].ts
    }
}

/// Single-writer assembler for one signature.
///
/// Completions of the earlier sets wait until the final set completes. The
/// final completion then takes, walking backwards, the unconsumed completion
/// with the latest start that still ends before its successor starts, keeping
/// the whole span inside the window.
#[derive(Debug, Clone)]
pub struct Assembler {
    sets: usize,
    window_us: i64,
    pending: Vec<Vec<Completion>>,
}

impl Assembler {
    pub fn new(sets: usize, window_us: i64) -> Self {
        assert!(sets > 0);
        Assembler {
            sets,
            window_us,
            pending: vec![Vec::new(); sets - 1],
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.iter().map(Vec::len).sum()
    }

    pub fn push(&mut self, c: Completion) -> Option<Vec<Completion>> {
        let now = c.last_ts();
        let horizon = now.micros() - self.window_us;
        for list in &mut self.pending {
            list.retain(|p| p.first_ts().micros() >= horizon);
        }
        if c.set + 1 < self.sets {
            self.pending[c.set].push(c);
            return None;
        }
        if now.micros() - c.first_ts().micros() > self.window_us {
            return None;
        }

        let mut picks = Vec::with_capacity(self.sets - 1);
        let mut bound = c.first_ts();
        for set in (0..self.sets - 1).rev() {
            let mut best: Option<usize> = None;
            for (i, p) in self.pending[set].iter().enumerate() {
                if p.last_ts() >= bound || p.first_ts().micros() < horizon {
                    continue;
                }
                if best.is_none_or(|b| p.first_ts() > self.pending[set][b].first_ts()) {
                    best = Some(i);
                }
            }
            let i = best?;
            bound = self.pending[set][i].first_ts();
            picks.push((set, i));
        }
        let mut out: Vec<Completion> = picks
            .into_iter()
            .map(|(set, i)| self.pending[set].remove(i))
            .collect();
        out.reverse();
        out.push(c);
        Some(out)
    }
}
