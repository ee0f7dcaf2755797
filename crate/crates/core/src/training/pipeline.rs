//! End-to-end signature extraction for one device.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::detection::engine::{detect, DetectMode, DetectOptions, MatchEvent};
use crate::detection::report::attribute;
use crate::error::{Error, Result};
use crate::ingest::packet::{CaptureMode, ConnKey, Timestamp};
use crate::ingest::reassembly::{reassemble_tcp, Connection};
use crate::ingest::roster::{Address, EndpointRoster, Role};
use crate::ingest::Capture;
use crate::signature::bounds::{MatchStrategy, DEFAULT_EPS};
use crate::signature::model::{CommClass, DurationStats, Provenance, SetSpec, Signature};
use crate::training::dbscan::{dbscan, min_pts_for, prune_clusters, PairPoint};
use crate::training::events::EventLog;
use crate::training::filter::{check_windows, filter_trace};
use crate::training::pairs::{form_pairs, PairPattern};
use crate::training::sequences::{concatenate_pairs, order_sequence_sets, SequenceSet, TrainingPair};

pub const DEFAULT_WINDOW_S: f64 = 15.0;

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub device: String,
    pub window_us: i64,
    pub eps: f64,
    pub min_pts: Option<usize>,
    pub layer2_offset: u32,
    /// Matching strategy used by the validation pass.
    pub strategy: MatchStrategy,
    pub capture_sha256: Option<String>,
}

impl TrainOptions {
    pub fn new(device: impl Into<String>) -> Self {
        TrainOptions {
            device: device.into(),
            window_us: (DEFAULT_WINDOW_S * 1e6) as i64,
            eps: DEFAULT_EPS,
            min_pts: None,
            layer2_offset: crate::ingest::DEFAULT_LAYER2_OFFSET,
            strategy: MatchStrategy::Range,
            capture_sha256: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterSummary {
    pub pattern: String,
    pub frequency: usize,
    pub kept: bool,
    pub first: (u32, u32),
    pub second: Option<(u32, u32)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelReport {
    pub label: String,
    pub events: usize,
    pub pairs: usize,
    pub min_pts: usize,
    pub clusters: Vec<ClusterSummary>,
    pub sequence_sets: usize,
    /// Signature id, or why none was produced.
    pub outcome: std::result::Result<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Validation {
    pub signature_id: String,
    pub accepted: bool,
    pub events: usize,
    pub matched_events: usize,
    pub matches: usize,
    /// Start times of matches outside every event window.
    pub extra: Vec<Timestamp>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingReport {
    pub labels: Vec<LabelReport>,
    pub validations: Vec<Validation>,
}

#[derive(Debug, Clone)]
pub struct TrainingResult {
    pub signatures: Vec<Signature>,
    pub report: TrainingReport,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Pairs of every connection restricted to event windows.
pub fn training_pairs(
    conns: &[Connection],
    events: &EventLog,
    window_us: i64,
    roster: &EndpointRoster,
) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::new();
    for (ci, conn) in conns.iter().enumerate() {
        let kept = filter_trace(&conn.payload, events, window_us, roster)?;
        let mut pos = 0;
        let mut start = 0;
        while start < kept.len() {
            let window = kept[start].window;
            let end = start + kept[start..].iter().take_while(|w| w.window == window).count();
            let run: Vec<_> = kept[start..end].iter().map(|w| w.packet.clone()).collect();
            for pair in form_pairs(&run) {
                out.push(TrainingPair {
                    pair,
                    conn: ci,
                    pos,
                    window,
                });
                pos += 1;
            }
            // Keep runs of different windows non-adjacent.
            pos += 1;
            start = end;
        }
    }
    Ok(out)
}

fn comm_class(key: &ConnKey, roster: &EndpointRoster) -> CommClass {
    let a = roster.role(Address::Ip(key.a.ip));
    let b = roster.role(Address::Ip(key.b.ip));
    match (a, b) {
        (Some(_), Some(_)) => CommClass::PhoneDevice,
        (Some(Role::Phone), None) | (None, Some(Role::Phone)) => CommClass::PhoneCloud,
        _ => CommClass::DeviceCloud,
    }
}

/// Per-window spans of full occurrences: one sequence per set, in set order.
pub fn occurrence_spans(sets: &[SequenceSet]) -> Vec<i64> {
    let mut windows: Vec<usize> = sets[0].members.iter().map(|m| m.window).collect();
    windows.sort_unstable();
    windows.dedup();
    let mut spans = Vec::new();
    'window: for w in windows {
        let mut first: Option<Timestamp> = None;
        let mut last: Option<Timestamp> = None;
        for set in sets {
            let pick = set
                .members
                .iter()
                .filter(|m| m.window == w && last.is_none_or(|l| m.first_ts() > l))
                .min_by_key(|m| m.first_ts());
            let Some(m) = pick else { continue 'window };
            first.get_or_insert(m.first_ts());
            last = Some(m.last_ts());
        }
        spans.push(last.unwrap().micros() - first.unwrap().micros());
    }
    spans
}

/// Min / average / max over spans in microseconds, as milliseconds. The
/// maximum is rounded up so the detection window never undercuts training.
pub fn duration_stats(spans_us: &[i64]) -> Option<DurationStats> {
    let min = *spans_us.iter().min()?;
    let max = *spans_us.iter().max()?;
    let avg = spans_us.iter().sum::<i64>() as f64 / spans_us.len() as f64;
    Some(DurationStats {
        min_ms: (min / 1000) as u64,
        avg_ms: (avg / 1000.0).round() as u64,
        max_ms: (max as u64).div_ceil(1000),
    })
}

fn signature_id(device: &str, label: &str) -> String {
    let raw = format!("{device}-{label}").to_lowercase();
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

struct Candidate {
    label: String,
    sig: Signature,
    spans: Vec<i64>,
}

fn extract_label(
    label: &str,
    pairs: &[TrainingPair],
    conns: &[Connection],
    events: &EventLog,
    roster: &EndpointRoster,
    opts: &TrainOptions,
) -> (LabelReport, Option<Candidate>) {
    let n = events.count(label);
    let mine: Vec<TrainingPair> = pairs
        .iter()
        .filter(|p| events.entries[p.window].label == label)
        .cloned()
        .collect();
    let min_pts = opts.min_pts.unwrap_or_else(|| min_pts_for(n));
    let points: Vec<PairPoint> = mine.iter().map(|p| PairPoint::of(&p.pair)).collect();
    let clustering = dbscan(&points, opts.eps, min_pts);
    let kept = prune_clusters(clustering.clusters.clone(), n);
    let summaries = clustering
        .clusters
        .iter()
        .map(|c| {
            let range = |f: &dyn Fn(&PairPoint) -> u32| {
                let v = c.members.iter().map(|&i| f(&points[i]));
                (v.clone().min().unwrap(), v.max().unwrap())
            };
            let nil = matches!(c.pattern, PairPattern::ClientNil | PairPattern::ServerNil);
            ClusterSummary {
                pattern: c.pattern.to_string(),
                frequency: c.frequency(),
                kept: kept.contains(c),
                first: range(&|p| p.len1),
                second: (!nil).then(|| range(&|p| p.len2)),
            }
        })
        .collect();
    let mut report = LabelReport {
        label: label.to_string(),
        events: n,
        pairs: mine.len(),
        min_pts,
        clusters: summaries,
        sequence_sets: 0,
        outcome: Err(String::new()),
    };
    if kept.is_empty() {
        report.outcome = Err("no cluster with an event-like frequency".into());
        return (report, None);
    }
    let sets = concatenate_pairs(&kept, &mine);
    report.sequence_sets = sets.len();
    let ordered = match order_sequence_sets(sets, opts.window_us) {
        Ok(o) => o,
        Err(e) => {
            report.outcome = Err(e.to_string());
            return (report, None);
        }
    };
    let spans = occurrence_spans(&ordered);
    let Some(duration) = duration_stats(&spans) else {
        report.outcome = Err("no complete occurrence in training data".into());
        return (report, None);
    };
    let first = &ordered[0].members[0];
    let sig = Signature {
        id: signature_id(&opts.device, label),
        device: opts.device.clone(),
        label: label.to_string(),
        comm_class: comm_class(&conns[first.conn].key, roster),
        sets: ordered.iter().map(|s| SetSpec { positions: s.positions() }).collect(),
        duration,
        layer2_offset: opts.layer2_offset,
        provenance: Some(Provenance {
            capture_sha256: opts.capture_sha256.clone().unwrap_or_default(),
            window_t_s: opts.window_us as f64 / 1e6,
            eps: opts.eps,
            min_pts: min_pts as u64,
            tool_version: crate::VERSION.to_string(),
        }),
    };
    report.outcome = Ok(sig.id.clone());
    (
        report,
        Some(Candidate {
            label: label.to_string(),
            sig,
            spans,
        }),
    )
}

/// Candidates with identical patterns are one label-indistinguishable signature.
fn merge_identical(cands: Vec<Candidate>, device: &str) -> Vec<Signature> {
    let mut groups: Vec<Vec<Candidate>> = Vec::new();
    for c in cands {
        match groups
            .iter_mut()
            .find(|g| g[0].sig.sets == c.sig.sets && g[0].sig.comm_class == c.sig.comm_class)
        {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            if g.len() == 1 {
                return g.into_iter().next().unwrap().sig;
            }
            let label = g.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join("/");
            let spans: Vec<i64> = g.iter().flat_map(|c| c.spans.iter().copied()).collect();
            let mut sig = g[0].sig.clone();
            sig.id = signature_id(device, &label);
            sig.label = label;
            sig.duration = duration_stats(&spans).unwrap();
            if let Some(p) = sig.provenance.as_mut() {
                p.min_pts = g.iter().filter_map(|c| c.sig.provenance.as_ref()).map(|p| p.min_pts).min().unwrap();
            }
            sig
        })
        .collect()
}

/// Runs detection over the whole training capture and checks that every
/// match of `sig` lands in a distinct window of one of its events.
pub fn validate_signature(
    sig: &Signature,
    matches: &[MatchEvent],
    events: &EventLog,
    window_us: i64,
) -> Validation {
    let labels: Vec<&str> = sig.label.split('/').collect();
    let relevant = events.with_labels(&labels);
    let mine: Vec<&MatchEvent> = matches
        .iter()
        .filter(|m| m.signature_ids.contains(&sig.id))
        .collect();
    let dets: Vec<(Timestamp, _)> = mine.iter().map(|m| (m.first_ts, |_: &str| true)).collect();
    let assigned = attribute(&dets, &relevant, window_us);
    let extra: Vec<Timestamp> = mine
        .iter()
        .zip(&assigned)
        .filter(|(_, a)| a.is_none())
        .map(|(m, _)| m.first_ts)
        .collect();
    Validation {
        signature_id: sig.id.clone(),
        accepted: mine.len() <= relevant.len() && extra.is_empty(),
        events: relevant.len(),
        matched_events: assigned.iter().flatten().count(),
        matches: mine.len(),
        extra,
    }
}

pub fn train(
    capture: &Capture,
    events: &EventLog,
    roster: &EndpointRoster,
    opts: &TrainOptions,
) -> Result<TrainingResult> {
    if capture.mode != CaptureMode::Layer3 {
        return Err(Error::Config("training needs a layer-3 capture".into()));
    }
    if events.is_empty() {
        return Err(Error::Config("event log is empty".into()));
    }
    check_windows(events, opts.window_us)?;
    let conns = reassemble_tcp(&capture.packets);
    let pairs = training_pairs(&conns, events, opts.window_us, roster)?;

    let mut labels = Vec::new();
    let mut cands = Vec::new();
    for label in events.labels() {
        let (rep, cand) = extract_label(&label, &pairs, &conns, events, roster, opts);
        labels.push(rep);
        cands.extend(cand);
    }
    let merged = merge_identical(cands, &opts.device);
    for rep in &mut labels {
        if let Ok(id) = &rep.outcome {
            if let Some(s) = merged.iter().find(|s| s.label.split('/').any(|l| l == rep.label)) {
                if *id != s.id {
                    rep.outcome = Ok(s.id.clone());
                }
            }
        }
    }

    let mut detect_opts = DetectOptions::new(DetectMode::Wan, opts.strategy.clone());
    detect_opts.eps = opts.eps;
    let detection = detect(capture, &merged, &detect_opts)?;
    let mut validations = Vec::new();
    let mut signatures = Vec::new();
    for sig in merged {
        let v = validate_signature(&sig, &detection.matches, events, opts.window_us);
        if v.accepted {
            signatures.push(sig);
        } else {
            for rep in labels.iter_mut().filter(|r| r.outcome.as_ref() == Ok(&sig.id)) {
                rep.outcome = Err(format!(
                    "rejected by validation: {} match(es) outside event windows",
                    v.extra.len().max(v.matches.saturating_sub(v.events))
                ));
            }
        }
        validations.push(v);
    }
    Ok(TrainingResult {
        signatures,
        report: TrainingReport { labels, validations },
    })
}
