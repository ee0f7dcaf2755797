//! Per-connection TCP reassembly with retransmission filtering.

use std::collections::{BTreeMap, HashMap};

use crate::ingest::packet::{ConnKey, Direction, FlowKey, PacketMeta, PayloadKind};

#[derive(Debug, Clone)]
pub struct Connection {
    pub key: ConnKey,
    /// Every packet of the connection in arrival order, retransmissions flagged.
    pub packets: Vec<PacketMeta>,
    /// Payload-bearing packets used for signature work: retransmissions removed,
    /// restricted to TLS application data when the connection carries TLS.
    pub payload: Vec<PacketMeta>,
    pub is_tls: bool,
}

impl Connection {
    pub fn first_ts(&self) -> crate::Timestamp {
        self.packets.first().map(|p| p.ts).unwrap_or_default()
    }
}

/// Union of half-open byte ranges, kept merged.
#[derive(Default)]
struct Coverage {
    ranges: BTreeMap<i64, i64>,
}

impl Coverage {
    fn contains(&self, start: i64, end: i64) -> bool {
        self.ranges
            .range(..=start)
            .next_back()
            .is_some_and(|(_, &e)| e >= end)
    }

    fn insert(&mut self, mut start: i64, mut end: i64) {
        if let Some((&s, &e)) = self.ranges.range(..=start).next_back() {
            if e >= start {
                start = s;
                end = end.max(e);
            }
        }
        let overlapping: Vec<i64> = self
            .ranges
            .range(start..=end)
            .map(|(&s, _)| s)
            .collect();
        for s in overlapping {
            let e = self.ranges.remove(&s).unwrap();
            end = end.max(e);
        }
        self.ranges.insert(start, end);
    }
}

struct HalfState {
    base: u32,
    coverage: Coverage,
}

impl HalfState {
    fn relative(&self, seq: u32) -> i64 {
        (seq.wrapping_sub(self.base) as i32) as i64
    }
}

/// Marks payload segments whose byte range is already fully covered by earlier
/// segments of the same direction. First arrival wins on overlap.
pub fn flag_retransmissions(packets: &mut [PacketMeta]) {
    let mut halves: HashMap<(FlowKey, Direction), HalfState> = HashMap::new();
    for p in packets.iter_mut() {
        let Some(seq) = p.seq else { continue };
        if !p.kind.has_payload() || p.length == 0 {
            continue;
        }
        let half = halves.entry((p.flow, p.direction)).or_insert_with(|| HalfState {
            base: seq,
            coverage: Coverage::default(),
        });
        let start = half.relative(seq);
        let end = start + p.length as i64;
        if half.coverage.contains(start, end) {
            p.retransmission = true;
        } else {
            half.coverage.insert(start, end);
        }
    }
}

/// Groups layer-3 packets into connections and builds each connection's
/// payload list. Non-layer-3 packets are ignored.
pub fn reassemble_tcp(packets: &[PacketMeta]) -> Vec<Connection> {
    let mut order: Vec<ConnKey> = Vec::new();
    let mut by_conn: HashMap<ConnKey, Vec<PacketMeta>> = HashMap::new();
    for p in packets {
        let FlowKey::Layer3(key) = p.flow else { continue };
        by_conn
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(p.clone());
    }

    let mut conns: Vec<Connection> = order
        .into_iter()
        .map(|key| {
            let mut pkts = by_conn.remove(&key).unwrap();
            flag_retransmissions(&mut pkts);
            let is_tls = pkts
                .iter()
                .any(|p| !p.retransmission && p.kind == PayloadKind::TlsAppData);
            let payload = order_payload(&pkts, is_tls);
            Connection {
                key,
                packets: pkts,
                payload,
                is_tls,
            }
        })
        .collect();
    conns.sort_by_key(|c| (c.first_ts(), c.key));
    conns
}

fn order_payload(pkts: &[PacketMeta], is_tls: bool) -> Vec<PacketMeta> {
    let mut kept: Vec<&PacketMeta> = pkts
        .iter()
        .filter(|p| !p.retransmission && p.kind.has_payload() && p.length > 0)
        .filter(|p| !is_tls || p.kind == PayloadKind::TlsAppData)
        .collect();
    kept.sort_by_key(|p| p.ts);

    // Direction interleaving follows arrival time; within a direction the
    // slots are refilled in sequence-number order.
    let mut out: Vec<PacketMeta> = kept.iter().map(|p| (*p).clone()).collect();
    for dir in [Direction::ClientToServer, Direction::ServerToClient] {
        let slots: Vec<usize> = (0..kept.len()).filter(|&i| kept[i].direction == dir).collect();
        let Some(&first) = slots.first() else { continue };
        let base = kept[first].seq.unwrap_or(0);
        let mut in_seq: Vec<&PacketMeta> = slots.iter().map(|&i| kept[i]).collect();
        in_seq.sort_by_key(|p| (p.seq.unwrap_or(0).wrapping_sub(base) as i32, p.ts));
        for (slot, p) in slots.into_iter().zip(in_seq) {
            out[slot] = p.clone();
        }
    }
    out
}
