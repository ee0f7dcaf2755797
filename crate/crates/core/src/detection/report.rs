//! Scoring detections against ground-truth event logs.

use serde::Serialize;

use crate::detection::engine::MatchEvent;
use crate::ingest::packet::Timestamp;
use crate::training::events::EventLog;

/// Assigns each detection (in the given order) to the earliest unclaimed event
/// whose label it carries and whose window `[e.ts, e.ts + tolerance]` holds the
/// detection's start. `None` marks a false positive.
pub fn attribute<L: Fn(&str) -> bool>(detections: &[(Timestamp, L)], truth: &EventLog, tolerance_us: i64) -> Vec<Option<usize>> {
    let mut claimed = vec![false; truth.len()];
    detections
        .iter()
        .map(|(start, accepts)| {
            let hit = truth.entries.iter().enumerate().position(|(i, e)| {
                !claimed[i]
                    && accepts(&e.label)
                    && e.ts <= *start
                    && start.micros() - e.ts.micros() <= tolerance_us
            });
            if let Some(i) = hit {
                claimed[i] = true;
            }
            hit
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelScore {
    pub label: String,
    pub events: usize,
    pub detected: usize,
    pub missed: usize,
    pub false_positives: usize,
    pub recall_per_100: f64,
    pub fp_per_100: f64,
}

/// Recall and false positives per label, both per 100 true events.
pub fn score_matches(matches: &[MatchEvent], truth: &EventLog, tolerance_us: i64) -> Vec<LabelScore> {
    let dets: Vec<(Timestamp, _)> = matches
        .iter()
        .map(|m| {
            let labels: Vec<String> = m.labels().map(str::to_string).collect();
            (m.first_ts, move |l: &str| labels.iter().any(|x| x == l))
        })
        .collect();
    let assigned = attribute(&dets, truth, tolerance_us);

    let mut labels = truth.labels();
    for m in matches {
        for l in m.labels() {
            if !labels.iter().any(|x| x == l) {
                labels.push(l.to_string());
            }
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let events = truth.count(&label);
            let detected = assigned
                .iter()
                .filter(|a| a.is_some_and(|i| truth.entries[i].label == label))
                .count();
            let false_positives = matches
                .iter()
                .zip(&assigned)
                .filter(|(m, a)| a.is_none() && m.labels().next() == Some(label.as_str()))
                .count();
            let per_100 = |x: usize| if events == 0 { 0.0 } else { 100.0 * x as f64 / events as f64 };
            LabelScore {
                recall_per_100: per_100(detected),
                fp_per_100: per_100(false_positives),
                label,
                events,
                detected,
                missed: events - detected,
                false_positives,
            }
        })
        .collect()
}
