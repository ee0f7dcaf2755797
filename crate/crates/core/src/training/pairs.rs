//! Request/reply packet pairs and their distance.

use std::fmt;

use crate::ingest::packet::{Direction, PacketMeta, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PairPattern {
    ClientServer,
    ServerClient,
    ClientNil,
    ServerNil,
}

impl PairPattern {
    pub fn of(first: Direction, has_second: bool) -> Self {
        match (first, has_second) {
            (Direction::ClientToServer, true) => PairPattern::ClientServer,
            (Direction::ServerToClient, true) => PairPattern::ServerClient,
            (Direction::ClientToServer, false) => PairPattern::ClientNil,
            (Direction::ServerToClient, false) => PairPattern::ServerNil,
        }
    }
}

impl fmt::Display for PairPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairPattern::ClientServer => "C->S",
            PairPattern::ServerClient => "S->C",
            PairPattern::ClientNil => "C->nil",
            PairPattern::ServerNil => "S->nil",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketPair {
    pub first: PacketMeta,
    pub second: Option<PacketMeta>,
}

impl PacketPair {
    pub fn pattern(&self) -> PairPattern {
        PairPattern::of(self.first.direction, self.second.is_some())
    }

    pub fn lengths(&self) -> (u32, Option<u32>) {
        (self.first.length, self.second.as_ref().map(|p| p.length))
    }

    pub fn first_ts(&self) -> Timestamp {
        self.first.ts
    }

    pub fn last_ts(&self) -> Timestamp {
        self.second.as_ref().map_or(self.first.ts, |p| p.ts)
    }

    pub fn packets(&self) -> impl Iterator<Item = &PacketMeta> {
        std::iter::once(&self.first).chain(self.second.as_ref())
    }
}

/// Greedy left-to-right pairing: a packet pairs with its successor when their
/// directions differ, otherwise it stands alone.
pub fn form_pairs(payload: &[PacketMeta]) -> Vec<PacketPair> {
    let mut out = Vec::with_capacity(payload.len() / 2 + 1);
    let mut i = 0;
    while i < payload.len() {
        match payload.get(i + 1) {
            Some(next) if next.direction != payload[i].direction => {
                out.push(PacketPair {
                    first: payload[i].clone(),
                    second: Some(next.clone()),
                });
                i += 2;
            }
            _ => {
                out.push(PacketPair {
                    first: payload[i].clone(),
                    second: None,
                });
                i += 1;
            }
        }
    }
    out
}

/// Euclidean distance over the two lengths; infinite across direction patterns.
pub fn pair_distance(a: &PacketPair, b: &PacketPair) -> f64 {
    point_distance(
        (a.pattern(), a.first.length, a.lengths().1.unwrap_or(0)),
        (b.pattern(), b.first.length, b.lengths().1.unwrap_or(0)),
    )
}

pub(crate) fn point_distance(a: (PairPattern, u32, u32), b: (PairPattern, u32, u32)) -> f64 {
    if a.0 != b.0 {
        return f64::INFINITY;
    }
    let d1 = a.1 as f64 - b.1 as f64;
    let d2 = a.2 as f64 - b.2 as f64;
    (d1 * d1 + d2 * d2).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::packet::{ConnKey, Endpoint, FlowKey, PayloadKind};
    use proptest::prelude::*;
    use std::net::Ipv4Addr;
    use Direction::{ClientToServer as C, ServerToClient as S};

    fn p(dir: Direction, len: u32) -> PacketMeta {
        let e = Endpoint {
            ip: Ipv4Addr::new(192, 0, 2, 1),
            port: 1,
        };
        PacketMeta {
            ts: Timestamp(0),
            length: len,
            direction: dir,
            flow: FlowKey::Layer3(ConnKey::new(e, e, 6)),
            kind: PayloadKind::TcpPayload,
            retransmission: false,
            seq: None,
            link: None,
        }
    }

    fn labels(pairs: &[PacketPair]) -> Vec<String> {
        pairs
            .iter()
            .map(|x| match &x.second {
                Some(s) => format!("{},{}", x.first.label(), s.label()),
                None => format!("{},nil", x.first.label()),
            })
            .collect()
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(labels(&form_pairs(&[p(C, 556), p(S, 1293)])), ["C-556,S-1293"]);
        assert_eq!(
            labels(&form_pairs(&[p(C, 100), p(C, 200), p(S, 300)])),
            ["C-100,nil", "C-200,S-300"]
        );
        assert!(form_pairs(&[]).is_empty());
    }

    #[test]
    fn distance_examples() {
        let a = &form_pairs(&[p(C, 338), p(S, 541)])[0];
        let b = &form_pairs(&[p(C, 339), p(S, 542)])[0];
        assert!((pair_distance(a, b) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(pair_distance(a, a), 0.0);
        let rev = &form_pairs(&[p(S, 338), p(C, 541)])[0];
        assert_eq!(pair_distance(a, rev), f64::INFINITY);
        let nil = &form_pairs(&[p(C, 338)])[0];
        assert_eq!(pair_distance(a, nil), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn pairs_partition_the_payload(dirs in proptest::collection::vec(any::<bool>(), 0..60)) {
            let payload: Vec<PacketMeta> = dirs
                .iter()
                .enumerate()
                .map(|(i, &d)| p(if d { C } else { S }, i as u32))
                .collect();
            let pairs = form_pairs(&payload);
            let total: usize = pairs.iter().map(|x| if x.second.is_some() { 2 } else { 1 }).sum();
            prop_assert_eq!(total, payload.len());
            let flat: Vec<u32> = pairs.iter().flat_map(|x| x.packets().map(|q| q.length)).collect();
            prop_assert_eq!(flat, (0..payload.len() as u32).collect::<Vec<_>>());
            for (i, x) in pairs.iter().enumerate() {
                match &x.second {
                    Some(s) => prop_assert_ne!(s.direction, x.first.direction),
                    None => {
                        // Nil only when last, or when the next pair starts with the same direction.
                        if let Some(n) = pairs.get(i + 1) {
                            prop_assert_eq!(n.first.direction, x.first.direction);
                        }
                    }
                }
            }
        }
    }
}
