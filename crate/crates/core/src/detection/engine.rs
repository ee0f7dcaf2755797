use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::Serialize;

use crate::detection::assembler::{Assembler, Completion};
use crate::detection::machine::{Hit, Semantics, SequencePool};
use crate::error::{Error, Result};
use crate::ingest::packet::{CaptureMode, Direction, FlowKey, PacketMeta, Timestamp};
use crate::ingest::reassembly::reassemble_tcp;
use crate::ingest::{map_to_layer2, Capture};
use crate::signature::bounds::{detection_window_ms, effective_bounds, MatchBounds, MatchStrategy, DEFAULT_EPS};
use crate::signature::model::{CommClass, Signature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectMode {
    Wan,
    Wifi,
}

impl DetectMode {
    pub fn semantics(self) -> Semantics {
        match self {
            DetectMode::Wan => Semantics::Reset,
            DetectMode::Wifi => Semantics::Ignore,
        }
    }
}

impl std::str::FromStr for DetectMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "wan" => Ok(DetectMode::Wan),
            "wifi" => Ok(DetectMode::Wifi),
            other => Err(format!("unknown detection mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectOptions {
    pub mode: DetectMode,
    pub strategy: MatchStrategy,
    pub eps: f64,
    /// Overrides each signature's own layer-2 offset.
    pub layer2_offset: Option<u32>,
}

impl DetectOptions {
    pub fn new(mode: DetectMode, strategy: MatchStrategy) -> Self {
        DetectOptions {
            mode,
            strategy,
            eps: DEFAULT_EPS,
            layer2_offset: None,
        }
    }
}

/// One packet as seen by the matchers. `flow` is a dense flow number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamPacket {
    pub flow: usize,
    pub ts: Timestamp,
    pub direction: Direction,
    pub length: u32,
}

/// A signature reduced to what the matchers need.
#[derive(Debug, Clone)]
pub struct CompiledSignature {
    pub bounds: MatchBounds,
    pub window_us: i64,
}

impl CompiledSignature {
    pub fn new(bounds: MatchBounds, window_ms: u64) -> Self {
        CompiledSignature {
            bounds,
            window_us: window_ms as i64 * 1000,
        }
    }
}

/// A full match before it is tied back to flows and labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMatch {
    pub signature: usize,
    pub sets: Vec<Vec<Hit>>,
}

impl RawMatch {
    pub fn first_ts(&self) -> Timestamp {
        self.sets[0][0].ts
    }

    pub fn last_ts(&self) -> Timestamp {
        *self.sets.last().and_then(|s| s.last()).map(|h| &h.ts).unwrap()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.sets.iter().flatten().map(|h| h.index).collect()
    }
}

/// Runs every signature over `stream`. Machines are kept per (flow, signature,
/// set); assembly is per signature across flows. Hit indices are positions in
/// `stream`.
pub fn run_matchers(stream: &[StreamPacket], sigs: &[CompiledSignature], semantics: Semantics) -> Vec<RawMatch> {
    let mut pools: HashMap<(usize, usize, usize), SequencePool> = HashMap::new();
    let mut assemblers: Vec<Assembler> = sigs
        .iter()
        .map(|s| Assembler::new(s.bounds.sets.len(), s.window_us))
        .collect();
    let mut out = Vec::new();
    for (index, p) in stream.iter().enumerate() {
        let hit = Hit { index, ts: p.ts };
        for (si, sig) in sigs.iter().enumerate() {
            for (set, pattern) in sig.bounds.sets.iter().enumerate() {
                let key = (p.flow, si, set);
                let pool = match pools.entry(key) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => {
                        if !pattern[0].matches(p.direction, p.length) {
                            continue;
                        }
                        e.insert(SequencePool::new(pattern.clone()))
                    }
                };
                let done = pool.advance(hit, p.direction, p.length, semantics);
                if pool.is_idle() {
                    pools.remove(&key);
                }
                if let Some(hits) = done {
                    if let Some(full) = assemblers[si].push(Completion { set, hits }) {
                        out.push(RawMatch {
                            signature: si,
                            sets: full.into_iter().map(|c| c.hits).collect(),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Merges per-flow packet lists into one stream ordered by timestamp, keeping
/// each flow's own order. Returns the stream and, per stream position, the
/// (flow, position-in-flow) it came from.
pub fn merge_flows(flows: &[Vec<(Timestamp, Direction, u32)>]) -> (Vec<StreamPacket>, Vec<(usize, usize)>) {
    let mut heap: BinaryHeap<Reverse<(Timestamp, usize, usize)>> = flows
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.is_empty())
        .map(|(i, f)| Reverse((f[0].0, i, 0)))
        .collect();
    let total = flows.iter().map(Vec::len).sum();
    let mut stream = Vec::with_capacity(total);
    let mut origin = Vec::with_capacity(total);
    while let Some(Reverse((_, flow, pos))) = heap.pop() {
        let (ts, direction, length) = flows[flow][pos];
        stream.push(StreamPacket {
            flow,
            ts,
            direction,
            length,
        });
        origin.push((flow, pos));
        if let Some(next) = flows[flow].get(pos + 1) {
            heap.push(Reverse((next.0, flow, pos + 1)));
        }
    }
    (stream, origin)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchEvent {
    /// Every signature whose pattern matched these packets (ON and OFF
    /// signatures with identical patterns report one event).
    pub signature_ids: Vec<String>,
    pub device: String,
    pub label: String,
    pub first_ts: Timestamp,
    pub last_ts: Timestamp,
    /// Matched packets per set.
    pub packets: Vec<Vec<MatchedPacket>>,
    pub flows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchedPacket {
    pub ts: Timestamp,
    pub direction: Direction,
    pub length: u32,
}

impl MatchEvent {
    pub fn signature_id(&self) -> &str {
        &self.signature_ids[0]
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.label.split('/')
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Detection {
    pub matches: Vec<MatchEvent>,
    pub counts: BTreeMap<String, usize>,
}

/// Per-signature match bounds for a detection run, layer-2 offset applied in WiFi mode.
pub fn compile_signatures(sigs: &[Signature], opts: &DetectOptions) -> Vec<CompiledSignature> {
    sigs.iter()
        .map(|s| {
            let mut bounds = effective_bounds(s, &opts.strategy, sigs, opts.eps);
            if opts.mode == DetectMode::Wifi {
                bounds = bounds.shifted(opts.layer2_offset.unwrap_or(s.layer2_offset));
            }
            CompiledSignature::new(bounds, detection_window_ms(s.duration.max_ms))
        })
        .collect()
}

/// Builds the matcher input for a capture: reassembled payload lists per TCP
/// connection (WAN) or every frame per MAC pair (WiFi).
pub fn build_stream(capture: &Capture, opts: &DetectOptions) -> Result<(Vec<StreamPacket>, Vec<FlowKey>)> {
    let mut keys: Vec<FlowKey> = Vec::new();
    let mut flows: Vec<Vec<(Timestamp, Direction, u32)>> = Vec::new();
    match opts.mode {
        DetectMode::Wan => {
            if capture.mode != CaptureMode::Layer3 {
                return Err(Error::Config("WAN detection needs a layer-3 capture".into()));
            }
            for conn in reassemble_tcp(&capture.packets) {
                keys.push(FlowKey::Layer3(conn.key));
                flows.push(conn.payload.iter().map(|p| (p.ts, p.direction, p.length)).collect());
            }
        }
        DetectMode::Wifi => {
            let offset = opts.layer2_offset.unwrap_or(crate::ingest::DEFAULT_LAYER2_OFFSET);
            let mut index: HashMap<FlowKey, usize> = HashMap::new();
            for p in &capture.packets {
                let Some((key, length)) = layer2_view(p, capture.mode, offset) else { continue };
                let slot = *index.entry(key).or_insert_with(|| {
                    keys.push(key);
                    flows.push(Vec::new());
                    keys.len() - 1
                });
                flows[slot].push((p.ts, p.direction, length));
            }
            for f in &mut flows {
                f.sort_by_key(|e| e.0);
            }
        }
    }
    let (stream, origin) = merge_flows(&flows);
    debug_assert_eq!(stream.len(), origin.len());
    Ok((stream, keys))
}

fn layer2_view(p: &PacketMeta, mode: CaptureMode, offset: u32) -> Option<(FlowKey, u32)> {
    match mode {
        CaptureMode::Layer2 => Some((p.flow, p.length)),
        CaptureMode::Layer3 => p.link.map(|l| (FlowKey::Layer2(l), map_to_layer2(p.length, offset))),
    }
}

pub fn check_compatibility(sigs: &[Signature], mode: DetectMode) -> Result<()> {
    if mode == DetectMode::Wan {
        if let Some(s) = sigs.iter().find(|s| s.comm_class == CommClass::PhoneDevice) {
            return Err(Error::Config(format!(
                "signature {} is phone-device traffic, which only a WiFi observer sees",
                s.id
            )));
        }
    }
    Ok(())
}

pub fn detect(capture: &Capture, sigs: &[Signature], opts: &DetectOptions) -> Result<Detection> {
    check_compatibility(sigs, opts.mode)?;
    let (stream, keys) = build_stream(capture, opts)?;
    let compiled = compile_signatures(sigs, opts);
    let raw = run_matchers(&stream, &compiled, opts.mode.semantics());
    Ok(finish(raw, sigs, &stream, &keys))
}

/// Ties raw matches to signatures and flows, merges identical matches of
/// sibling signatures and orders the result.
pub fn finish(raw: Vec<RawMatch>, sigs: &[Signature], stream: &[StreamPacket], keys: &[FlowKey]) -> Detection {
    let mut grouped: BTreeMap<(String, Vec<usize>), Vec<usize>> = BTreeMap::new();
    let mut order: Vec<(String, Vec<usize>, RawMatch)> = Vec::new();
    for m in raw {
        let device = sigs[m.signature].device.clone();
        let idx = m.indices();
        let entry = grouped.entry((device.clone(), idx.clone())).or_default();
        if entry.is_empty() {
            order.push((device, idx, m.clone()));
        }
        if !entry.contains(&m.signature) {
            entry.push(m.signature);
        }
    }

    let mut matches: Vec<MatchEvent> = order
        .into_iter()
        .map(|(device, idx, m)| {
            let mut members = grouped.remove(&(device.clone(), idx)).unwrap();
            members.sort_unstable();
            let mut labels: Vec<&str> = Vec::new();
            for &s in &members {
                for l in sigs[s].label.split('/') {
                    if !labels.contains(&l) {
                        labels.push(l);
                    }
                }
            }
            let mut flows: Vec<String> = Vec::new();
            for h in m.sets.iter().flatten() {
                let f = keys[stream[h.index].flow].to_string();
                if !flows.contains(&f) {
                    flows.push(f);
                }
            }
            MatchEvent {
                signature_ids: members.iter().map(|&s| sigs[s].id.clone()).collect(),
                device,
                label: labels.join("/"),
                first_ts: m.first_ts(),
                last_ts: m.last_ts(),
                packets: m
                    .sets
                    .iter()
                    .map(|set| {
                        set.iter()
                            .map(|h| MatchedPacket {
                                ts: h.ts,
                                direction: stream[h.index].direction,
                                length: stream[h.index].length,
                            })
                            .collect()
                    })
                    .collect(),
                flows,
            }
        })
        .collect();
    matches.sort_by(|a, b| (a.first_ts, &a.signature_ids).cmp(&(b.first_ts, &b.signature_ids)));

    let mut counts: BTreeMap<String, usize> = sigs.iter().map(|s| (s.id.clone(), 0)).collect();
    for m in &matches {
        for id in &m.signature_ids {
            *counts.entry(id.clone()).or_default() += 1;
        }
    }
    Detection { matches, counts }
}
