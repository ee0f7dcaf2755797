//! Event timestamp logs: one `<epoch-seconds> <label>` line per triggered event.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::packet::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub ts: Timestamp,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub entries: Vec<Event>,
}

impl EventLog {
    /// Builds a log, checking that timestamps strictly increase.
    pub fn new(entries: Vec<Event>) -> Result<Self> {
        for (i, w) in entries.windows(2).enumerate() {
            if w[1].ts <= w[0].ts {
                return Err(Error::EventLog {
                    line: i + 2,
                    reason: format!("timestamp {} does not increase", w[1].ts),
                });
            }
        }
        Ok(EventLog { entries })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut last: Option<(usize, Timestamp)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::EventLog { line: i + 1, reason };
            let mut fields = line.split_whitespace();
            let ts_text = fields.next().unwrap();
            let label = fields.next().ok_or_else(|| err("missing label".into()))?;
            if fields.next().is_some() {
                return Err(err("expected `<epoch-seconds> <label>`".into()));
            }
            let ts = parse_seconds(ts_text).ok_or_else(|| err(format!("bad timestamp {ts_text:?}")))?;
            if let Some((_, prev)) = last {
                if ts <= prev {
                    return Err(err(format!("timestamp {ts} does not increase")));
                }
            }
            last = Some((i, ts));
            entries.push(Event {
                ts,
                label: label.to_string(),
            });
        }
        Ok(EventLog { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{} {}", e.ts, e.label);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.label) {
                out.push(e.label.clone());
            }
        }
        out
    }

    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.label.clone()).or_insert(0) += 1;
        }
        out
    }

    pub fn count(&self, label: &str) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn with_labels(&self, labels: &[&str]) -> EventLog {
        EventLog {
            entries: self
                .entries
                .iter()
                .filter(|e| labels.contains(&e.label.as_str()))
                .cloned()
                .collect(),
        }
    }
}

/// Decimal seconds to microseconds without going through floating point.
fn parse_seconds(s: &str) -> Option<Timestamp> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let mut micros: i64 = 0;
    for (i, b) in frac.bytes().enumerate() {
        if i < 6 {
            micros = micros * 10 + (b - b'0') as i64;
        }
    }
    for _ in frac.len()..6 {
        micros *= 10;
    }
    let total = secs.checked_mul(1_000_000)?.checked_add(micros)?;
    Some(Timestamp(if neg { -total } else { total }))
}
