use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::defense::{DefenseConfig, ViewPacket};
use crate::detection::{build_stream, check_compatibility, run_matchers, CompiledSignature, DetectMode, DetectOptions, Semantics, StreamPacket};
use crate::error::{Error, Result};
use crate::ingest::packet::{CaptureMode, Timestamp};
use crate::ingest::Capture;
use crate::signature::bounds::{detection_window_ms, effective_bounds};
use crate::signature::model::Signature;

const ATTEMPTS_PER_DUMMY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StpEvent {
    /// Time of the event's first signature packet.
    pub ts: Timestamp,
    pub dummy: bool,
}

/// A tunneled trace with injected dummy events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StpTrace {
    pub packets: Vec<ViewPacket>,
    pub events: Vec<StpEvent>,
}

impl StpTrace {
    pub fn true_events(&self) -> Vec<Timestamp> {
        self.events.iter().filter(|e| !e.dummy).map(|e| e.ts).collect()
    }

    pub fn dummy_events(&self) -> Vec<Timestamp> {
        self.events.iter().filter(|e| e.dummy).map(|e| e.ts).collect()
    }
}

fn compile(sig: &Signature, opts: &DetectOptions) -> CompiledSignature {
    let bounds = effective_bounds(sig, &opts.strategy, std::slice::from_ref(sig), opts.eps);
    CompiledSignature::new(bounds, detection_window_ms(sig.duration.max_ms))
}

/// Finds the signature's true events with WAN detection, then tunnels the
/// capture: every packet gains the VPN header for its direction and `dummies`
/// copies of detected event traffic are placed at random, non-overlapping times.
pub fn simulate_stp(capture: &Capture, sig: &Signature, cfg: &DefenseConfig, opts: &DetectOptions) -> Result<StpTrace> {
    cfg.validate()?;
    if capture.mode != CaptureMode::Layer3 {
        return Err(Error::Config("STP simulation needs a layer-3 capture".into()));
    }
    let wan = DetectOptions {
        mode: DetectMode::Wan,
        ..opts.clone()
    };
    check_compatibility(std::slice::from_ref(sig), wan.mode)?;
    let (stream, _) = build_stream(capture, &wan)?;
    let compiled = compile(sig, &wan);
    let window_us = compiled.window_us;
    let raw = run_matchers(&stream, std::slice::from_ref(&compiled), wan.mode.semantics());

    let mut templates: Vec<Vec<StreamPacket>> = raw
        .iter()
        .map(|m| m.indices().into_iter().map(|i| stream[i]).collect())
        .collect();
    templates.iter_mut().for_each(|t| t.sort_by_key(|p| p.ts));
    let mut events: Vec<StpEvent> = templates
        .iter()
        .map(|t| StpEvent {
            ts: t[0].ts,
            dummy: false,
        })
        .collect();

    let mut packets: Vec<ViewPacket> = capture
        .packets
        .iter()
        .map(|p| ViewPacket {
            ts: p.ts,
            direction: p.direction,
            length: p.length + cfg.header(p.direction),
        })
        .collect();

    if cfg.dummies > 0 {
        if templates.is_empty() {
            return Err(Error::Config(format!("no {} event in the capture to copy as a dummy", sig.label)));
        }
        let span = (
            capture.packets.iter().map(|p| p.ts.micros()).min().unwrap_or(0),
            capture.packets.iter().map(|p| p.ts.micros()).max().unwrap_or(0),
        );
        let mut busy: Vec<(i64, i64)> = templates
            .iter()
            .map(|t| (t[0].ts.micros(), t[t.len() - 1].ts.micros()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for k in 0..cfg.dummies {
            let template = &templates[k % templates.len()];
            let origin = template[0].ts.micros();
            let dur = template[template.len() - 1].ts.micros() - origin;
            let placed = (0..ATTEMPTS_PER_DUMMY).find_map(|_| {
                if span.1 - dur < span.0 {
                    return None;
                }
                let at = rng.gen_range(span.0..=span.1 - dur);
                let free = busy
                    .iter()
                    .all(|&(a, b)| at + dur + window_us < a || b + window_us < at);
                free.then_some(at)
            });
            let Some(at) = placed else {
                return Err(Error::Placement {
                    attempts: ATTEMPTS_PER_DUMMY,
                });
            };
            busy.push((at, at + dur));
            events.push(StpEvent {
                ts: Timestamp(at),
                dummy: true,
            });
            packets.extend(template.iter().map(|p| ViewPacket {
                ts: Timestamp(at + p.ts.micros() - origin),
                direction: p.direction,
                length: p.length + cfg.header(p.direction),
            }));
        }
    }
    packets.sort_by_key(|p| p.ts);
    events.sort_by_key(|e| e.ts);
    Ok(StpTrace { packets, events })
}

/// Length-aware detection on the tunnel with bounds raised by the VPN headers.
/// Returns the first-packet time of every match.
pub fn detect_tunnel(trace: &StpTrace, sig: &Signature, cfg: &DefenseConfig, opts: &DetectOptions) -> Vec<Timestamp> {
    let mut compiled = compile(sig, opts);
    compiled.bounds = compiled.bounds.shifted_by(|d| cfg.header(d));
    let stream: Vec<StreamPacket> = trace
        .packets
        .iter()
        .map(|p| StreamPacket {
            flow: 0,
            ts: p.ts,
            direction: p.direction,
            length: p.length,
        })
        .collect();
    let mut out: Vec<Timestamp> = run_matchers(&stream, std::slice::from_ref(&compiled), Semantics::Ignore)
        .iter()
        .map(|m| m.first_ts())
        .collect();
    out.sort_unstable();
    out
}
