use serde::Serialize;

use crate::ingest::packet::Timestamp;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefenseScore {
    pub true_events: usize,
    pub positives: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub recall: f64,
    pub fp_per_100: f64,
    pub positives_per_event: f64,
}

/// A positive is true when it starts within `tolerance_us` after a true event
/// that no earlier positive has claimed.
pub fn score_defense(positives: &[Timestamp], truth: &[Timestamp], tolerance_us: i64) -> DefenseScore {
    let mut starts = positives.to_vec();
    starts.sort_unstable();
    let mut events = truth.to_vec();
    events.sort_unstable();
    let mut claimed = vec![false; events.len()];
    let mut tp = 0;
    let mut lo = 0;
    for s in &starts {
        while lo < events.len() && events[lo].micros() + tolerance_us < s.micros() {
            lo += 1;
        }
        let hit = (lo..events.len())
            .take_while(|&i| events[i] <= *s)
            .find(|&i| !claimed[i]);
        if let Some(i) = hit {
            claimed[i] = true;
            tp += 1;
        }
    }
    let n = events.len();
    let fp = starts.len() - tp;
    let per = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    DefenseScore {
        true_events: n,
        positives: starts.len(),
        true_positives: tp,
        false_positives: fp,
        recall: per(tp),
        fp_per_100: 100.0 * per(fp),
        positives_per_event: per(starts.len()),
    }
}
