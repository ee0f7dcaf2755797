//! Per-flow state machines for one packet sequence.

use crate::ingest::packet::{Direction, Timestamp};
use crate::signature::bounds::Bound;

/// How a partial match reacts to a packet that does not fit the next position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semantics {
    /// Layer-3 observer: the partial match is discarded.
    Reset,
    /// Layer-2 observer: the packet is skipped.
    Ignore,
}

/// A packet recorded by a machine: its position in the input stream and its timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hit {
    pub index: usize,
    pub ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SequenceMachine {
    pub recorded: Vec<Hit>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Advanced,
    Completed(Vec<Hit>),
    Ignored,
    Reset,
}

impl SequenceMachine {
    pub fn state(&self) -> usize {
        self.recorded.len()
    }

    pub fn last_ts(&self) -> Option<Timestamp> {
        self.recorded.last().map(|h| h.ts)
    }

    pub fn advance(
        &mut self,
        pattern: &[Bound],
        hit: Hit,
        direction: Direction,
        length: u32,
        semantics: Semantics,
    ) -> Step {
        let state = self.state();
        if pattern[state].matches(direction, length) {
            self.recorded.push(hit);
            if self.recorded.len() == pattern.len() {
                Step::Completed(std::mem::take(&mut self.recorded))
            } else {
                Step::Advanced
            }
        } else {
            match semantics {
                Semantics::Ignore => Step::Ignored,
                Semantics::Reset => {
                    self.recorded.clear();
                    Step::Reset
                }
            }
        }
    }
}

/// All machines of one sequence on one flow. At most one machine per state;
/// the state-0 machine is implicit and always present.
#[derive(Debug, Clone)]
pub struct SequencePool {
    pattern: Vec<Bound>,
    slots: Vec<Option<SequenceMachine>>,
}

impl SequencePool {
    pub fn new(pattern: Vec<Bound>) -> Self {
        assert!(!pattern.is_empty(), "empty sequence pattern");
        let slots = vec![None; pattern.len()];
        SequencePool { pattern, slots }
    }

    pub fn pattern(&self) -> &[Bound] {
        &self.pattern
    }

    /// Machines beyond state 0, as `(state, recorded)`.
    pub fn partials(&self) -> impl Iterator<Item = (usize, &[Hit])> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(s, m)| m.as_ref().map(|m| (s, m.recorded.as_slice())))
    }

    pub fn is_idle(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }

    /// Feeds one packet to every machine. Machines are stepped from a snapshot
    /// in descending state order, so a packet moves each machine at most once.
    /// A completion clears the pool.
    pub fn advance(&mut self, hit: Hit, direction: Direction, length: u32, semantics: Semantics) -> Option<Vec<Hit>> {
        let len = self.pattern.len();
        let mut old = std::mem::replace(&mut self.slots, vec![None; len]);
        let mut done = None;
        for s in (1..len).rev() {
            let Some(mut m) = old[s].take() else { continue };
            match m.advance(&self.pattern, hit, direction, length, semantics) {
                Step::Completed(r) => done = Some(r),
                Step::Advanced => self.place(s + 1, m),
                Step::Ignored => self.place(s, m),
                Step::Reset => {}
            }
        }
        let mut fresh = SequenceMachine::default();
        match fresh.advance(&self.pattern, hit, direction, length, semantics) {
            Step::Completed(r) => done = done.or(Some(r)),
            Step::Advanced => self.place(1, fresh),
            Step::Ignored | Step::Reset => {}
        }
        if done.is_some() {
            self.slots.iter_mut().for_each(|s| *s = None);
        }
        done
    }

    /// Replacement rule: an arriving machine displaces the occupant only if its
    /// last packet is strictly later.
    fn place(&mut self, state: usize, m: SequenceMachine) {
        let slot = &mut self.slots[state];
        match slot {
            Some(existing) if existing.last_ts() >= m.last_ts() => {}
            _ => *slot = Some(m),
        }
    }
}
