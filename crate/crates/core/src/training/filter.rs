//! Keeps only packets inside an event's training window.

use crate::error::{Error, Result};
use crate::ingest::packet::{FlowKey, PacketMeta};
use crate::ingest::roster::{Address, EndpointRoster};
use crate::training::events::EventLog;

/// A packet kept by the trace filter, tagged with the event window it fell in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowedPacket {
    pub packet: PacketMeta,
    pub window: usize,
}

/// Checks that windows `[e.ts, e.ts + window]` are disjoint. Warns when events
/// are closer than twice the window.
pub fn check_windows(events: &EventLog, window_us: i64) -> Result<()> {
    if window_us <= 0 {
        return Err(Error::Config("training window must be positive".into()));
    }
    for w in events.entries.windows(2) {
        let gap = w[1].ts.micros() - w[0].ts.micros();
        if gap <= window_us {
            return Err(Error::Config(format!(
                "event windows overlap: events at {} and {} are closer than the {} s window",
                w[0].ts,
                w[1].ts,
                window_us as f64 / 1e6
            )));
        }
        if gap < 2 * window_us {
            log::warn!(
                "events at {} and {} are spaced less than twice the training window",
                w[0].ts,
                w[1].ts
            );
        }
    }
    Ok(())
}

/// Window index of `ts`, if any.
pub fn window_of(events: &EventLog, window_us: i64, ts: crate::Timestamp) -> Option<usize> {
    let i = events.entries.partition_point(|e| e.ts <= ts);
    let i = i.checked_sub(1)?;
    (ts.micros() - events.entries[i].ts.micros() <= window_us).then_some(i)
}

fn touches_roster(flow: &FlowKey, roster: &EndpointRoster) -> bool {
    match flow {
        FlowKey::Layer3(k) => roster.is_local(Address::Ip(k.a.ip)) || roster.is_local(Address::Ip(k.b.ip)),
        FlowKey::Layer2(p) => roster.is_local(Address::Mac(p.a)) || roster.is_local(Address::Mac(p.b)),
    }
}

pub fn filter_trace(
    packets: &[PacketMeta],
    events: &EventLog,
    window_us: i64,
    roster: &EndpointRoster,
) -> Result<Vec<WindowedPacket>> {
    check_windows(events, window_us)?;
    Ok(packets
        .iter()
        .filter(|p| touches_roster(&p.flow, roster))
        .filter_map(|p| {
            window_of(events, window_us, p.ts).map(|window| WindowedPacket {
                packet: p.clone(),
                window,
            })
        })
        .collect())
}
