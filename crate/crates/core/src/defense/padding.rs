use crate::defense::{DefenseConfig, DefenseStrategy, View, ViewPacket};
use crate::error::{Error, Result};
use crate::ingest::packet::{CaptureMode, Direction, PacketMeta, PayloadKind, Timestamp};
use crate::ingest::reassembly::reassemble_tcp;
use crate::ingest::roster::EndpointRoster;
use crate::ingest::Capture;
use crate::signature::model::Signature;

fn padded(p: &PacketMeta, mtu: u32) -> ViewPacket {
    ViewPacket {
        ts: p.ts,
        direction: p.direction,
        length: mtu,
    }
}

/// Applies a padding defense. Every length becomes the MTU, so only
/// timing, direction and flow identity survive.
pub fn simulate_padding(capture: &Capture, roster: &EndpointRoster, cfg: &DefenseConfig) -> Result<View> {
    cfg.validate()?;
    if capture.mode != CaptureMode::Layer3 {
        return Err(Error::Config("padding simulation needs a layer-3 capture".into()));
    }
    let app = |p: &&PacketMeta| p.kind == PayloadKind::TlsAppData;
    let flows = match cfg.strategy {
        DefenseStrategy::PadMtuVpn => {
            let mut all: Vec<ViewPacket> = capture.packets.iter().map(|p| padded(p, cfg.mtu)).collect();
            all.sort_by_key(|p| p.ts);
            vec![all]
        }
        DefenseStrategy::PadMtuTlsPerConn => reassemble_tcp(&capture.packets)
            .into_iter()
            .filter(|c| match &cfg.servers {
                Some(servers) => servers.iter().any(|s| *s == c.key.a.ip || *s == c.key.b.ip),
                None => true,
            })
            .map(|c| c.packets.iter().filter(app).map(|p| padded(p, cfg.mtu)).collect::<Vec<_>>())
            .filter(|f| !f.is_empty())
            .collect(),
        DefenseStrategy::PadMtuHybrid => {
            let mut merged: Vec<ViewPacket> = reassemble_tcp(&capture.packets)
                .into_iter()
                .filter(|c| roster.is_device_ip(c.key.a.ip) || roster.is_device_ip(c.key.b.ip))
                .flat_map(|c| c.packets.into_iter().filter(|p| p.kind == PayloadKind::TlsAppData))
                .map(|p| padded(&p, cfg.mtu))
                .collect();
            merged.sort_by_key(|p| p.ts);
            vec![merged]
        }
        DefenseStrategy::StpVpn => {
            return Err(Error::Config("STP is simulated with simulate_stp, not as padding".into()))
        }
    };
    Ok(View { flows })
}

/// The signature's packet directions in order, all sets concatenated.
pub fn direction_pattern(sig: &Signature) -> Vec<Direction> {
    sig.positions().map(|p| p.direction).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectionHit {
    pub start: Timestamp,
    pub end: Timestamp,
}

/// Counts packets that end an occurrence of `pattern` (as a subsequence of
/// their flow, ignoring everything in between) spanning at most `window_ms`.
/// Occurrences may share packets, so merging flows never lowers the count.
pub fn detect_direction_only(view: &View, pattern: &[Direction], window_ms: u64) -> Vec<DirectionHit> {
    let window_us = window_ms as i64 * 1000;
    let mut hits = Vec::new();
    if pattern.is_empty() {
        return hits;
    }
    let m = pattern.len();
    for flow in &view.flows {
        // latest[k]: latest start of a match of the first k+1 pattern entries.
        let mut latest: Vec<Option<Timestamp>> = vec![None; m];
        for p in flow {
            for k in (0..m).rev() {
                if pattern[k] != p.direction {
                    continue;
                }
                let start = if k == 0 { Some(p.ts) } else { latest[k - 1] };
                let Some(start) = start else { continue };
                if k == m - 1 {
                    if p.ts.micros() - start.micros() <= window_us {
                        hits.push(DirectionHit { start, end: p.ts });
                    }
                } else if latest[k].is_none_or(|s| s < start) {
                    latest[k] = Some(start);
                }
            }
        }
    }
    hits.sort_by_key(|h| (h.start, h.end));
    hits
}
