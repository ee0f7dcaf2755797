use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::packet::{Direction, Timestamp};
use crate::synth::generate::{addr, cloud_host, clear_length, local_host, Ctx, Generated, SynthPacket};
use crate::synth::profile::{EventTemplate, Host};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Each payload segment is re-sent 300 µs later with probability `rate`.
    Retransmissions,
    /// Unrelated device-to-cloud exchanges at `rate` per second, sharing the
    /// device's link-layer pair with event traffic.
    InterleavedFlows,
    /// Copies of event traffic placed between event windows, `rate` copies per gap on average.
    OffWindowChatter,
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retransmissions" => Ok(NoiseKind::Retransmissions),
            "interleaved-flows" => Ok(NoiseKind::InterleavedFlows),
            "off-window-chatter" => Ok(NoiseKind::OffWindowChatter),
            other => Err(Error::Config(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Adds noise to a generated capture. Noise packets are tallied in the ground
/// truth but never become expected events.
pub fn inject_noise(gen: &Generated, kind: NoiseKind, rate: f64, seed: u64) -> Result<Generated> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::Config(format!("noise rate must be a finite non-negative number, got {rate}")));
    }
    let mut ctx = Ctx::with_ports(&gen.profile, seed, 52000);
    let mut added = Vec::new();
    match kind {
        NoiseKind::Retransmissions => {
            let p = rate.min(1.0);
            for pkt in gen.packets.iter().filter(|p| !p.payload.is_empty()) {
                if ctx.rng.gen_bool(p) {
                    let mut dup = pkt.clone();
                    dup.ts = pkt.ts.saturating_add_micros(300);
                    added.push(dup);
                }
            }
        }
        NoiseKind::InterleavedFlows => {
            if rate > 0.0 {
                interleave(gen, &mut ctx, rate, &mut added)?;
            }
        }
        NoiseKind::OffWindowChatter => chatter(gen, &mut ctx, rate, &mut added)?,
    }
    let mut out = gen.clone();
    out.truth.noise_packets += added.iter().filter(|p| !p.payload.is_empty()).count();
    out.packets.extend(added);
    out.packets.sort_by_key(|p| p.ts);
    Ok(out)
}

fn span(gen: &Generated) -> (Timestamp, Timestamp) {
    let first = gen.packets.first().map_or(Timestamp(0), |p| p.ts);
    let last = gen.packets.last().map_or(Timestamp(0), |p| p.ts);
    (first, last)
}

fn interleave(gen: &Generated, ctx: &mut Ctx, rate: f64, out: &mut Vec<SynthPacket>) -> Result<()> {
    let (start, end) = span(gen);
    let client = local_host(Host::Device, 39000);
    let server = cloud_host(addr::background_server(199));
    let (mut conn, mut t) = ctx.start_conn(client, server, start, out);
    let avoid = ctx.avoid.clone();
    loop {
        let u: f64 = ctx.rng.gen_range(f64::MIN_POSITIVE..1.0);
        t = t.saturating_add_micros((-u.ln() / rate * 1e6).round().max(1.0) as i64);
        if t >= end {
            break;
        }
        let dir = if ctx.rng.gen_bool(0.5) {
            Direction::ClientToServer
        } else {
            Direction::ServerToClient
        };
        let len = clear_length([60, 1400], dir, &avoid, &mut ctx.rng)?;
        let body = ctx.exchange_payload(len);
        conn.send(t, dir, body, out);
    }
    Ok(())
}

fn chatter(gen: &Generated, ctx: &mut Ctx, rate: f64, out: &mut Vec<SynthPacket>) -> Result<()> {
    let templates: &[EventTemplate] = &gen.profile.events;
    let window_us = (gen.profile.window_s * 1e6) as i64;
    let entries = &gen.events.entries;
    let mut next_template = 0;
    for pair in entries.windows(2) {
        let copies = rate.floor() as usize + usize::from(ctx.rng.gen_bool(rate.fract()));
        // Room between the end of one window and the start of the next, less
        // a window's worth of margin for the copy's own traffic.
        let lo = pair[0].ts.micros() + window_us + 1_000_000;
        let hi = pair[1].ts.micros() - window_us - 1_000_000;
        if hi <= lo {
            continue;
        }
        let mut slots: Vec<i64> = (0..copies).map(|_| ctx.rng.gen_range(lo..hi)).collect();
        slots.sort_unstable();
        for at in slots {
            let template = &templates[next_template % templates.len()];
            next_template += 1;
            ctx.event_traffic(&template.sets, Timestamp(at), out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate::generate;
    use crate::synth::profile::TraceProfile;

    fn profile() -> TraceProfile {
        TraceProfile::parse(
            "device = \"plug\"\nn_per_label = 3\nevent_spacing_s = 60.0\n[[events]]\nlabel = \"ON\"\n[[events.sets]]\npackets = [\"C-556\", \"S-1293\"]\n",
        )
        .unwrap()
    }

    #[test]
    fn retransmissions_duplicate_payload_only() {
        let gen = generate(&profile(), 1).unwrap();
        let noisy = inject_noise(&gen, NoiseKind::Retransmissions, 1.0, 2).unwrap();
        let payload = gen.packets.iter().filter(|p| !p.payload.is_empty()).count();
        assert_eq!(noisy.packets.len(), gen.packets.len() + payload);
        assert_eq!(noisy.truth.noise_packets, payload);
        assert_eq!(noisy.truth.events, gen.truth.events);
    }

    #[test]
    fn chatter_lands_between_windows() {
        let gen = generate(&profile(), 1).unwrap();
        let noisy = inject_noise(&gen, NoiseKind::OffWindowChatter, 2.0, 5).unwrap();
        // Two copies per gap, each with four handshake records and two data records.
        assert_eq!(noisy.truth.noise_packets, 2 * 2 * 6);
        let window = (gen.profile.window_s * 1e6) as i64;
        for p in noisy.packets.iter().filter(|p| !gen.packets.contains(p)) {
            assert!(gen.events.entries.iter().all(|e| p.ts.micros() < e.ts.micros() || p.ts.micros() > e.ts.micros() + window));
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        let gen = generate(&profile(), 1).unwrap();
        for kind in [NoiseKind::Retransmissions, NoiseKind::InterleavedFlows, NoiseKind::OffWindowChatter] {
            assert_eq!(inject_noise(&gen, kind, 0.0, 3).unwrap().packets, gen.packets);
        }
        assert!(inject_noise(&gen, NoiseKind::Retransmissions, -1.0, 3).is_err());
    }
}
