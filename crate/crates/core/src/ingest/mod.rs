//! Capture ingestion: pcap parsing, direction inference, TLS classification
//! and TCP reassembly for both observer models.

pub mod frame;
pub mod packet;
pub mod pcap;
pub mod reassembly;
pub mod roster;

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use frame::{Skip, TcpFrame};
use packet::{CaptureMode, ConnKey, FlowKey, MacPair, PacketMeta, PayloadKind};
use pcap::{PcapReader, LINKTYPE_ETHERNET, LINKTYPE_IEEE802_11_RADIOTAP};
use roster::{infer_direction, Address, EndpointRoster};

/// Default constant added to a layer-3 payload length to obtain the 802.11 frame length.
pub const DEFAULT_LAYER2_OFFSET: u32 = 80;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub records: usize,
    pub truncated: usize,
    pub non_ipv4: usize,
    pub non_tcp: usize,
    pub fragments: usize,
    pub not_data: usize,
    pub malformed: usize,
    /// Packets where neither endpoint is in the roster.
    pub foreign: usize,
}

#[derive(Debug, Clone)]
pub struct Capture {
    pub mode: CaptureMode,
    pub packets: Vec<PacketMeta>,
    pub stats: IngestStats,
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub mode: CaptureMode,
    pub layer2_offset: u32,
}

impl IngestOptions {
    pub fn layer3() -> Self {
        IngestOptions {
            mode: CaptureMode::Layer3,
            layer2_offset: DEFAULT_LAYER2_OFFSET,
        }
    }

    pub fn layer2(offset: u32) -> Self {
        IngestOptions {
            mode: CaptureMode::Layer2,
            layer2_offset: offset,
        }
    }
}

/// TLS "Application Data" record header check on a packet's leading bytes.
pub fn classify_tls(head: &[u8]) -> PayloadKind {
    match head {
        [0x17, 0x03, _, ..] => PayloadKind::TlsAppData,
        _ => PayloadKind::TcpPayload,
    }
}

/// Layer-3 payload length as seen by an 802.11 observer.
pub fn map_to_layer2(length_l3: u32, offset: u32) -> u32 {
    length_l3 + offset
}

pub fn parse_capture(path: &Path, opts: IngestOptions, roster: &EndpointRoster) -> Result<Capture> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_capture_from(BufReader::new(file), opts, roster)
}

pub fn parse_capture_from<R: Read>(
    reader: R,
    opts: IngestOptions,
    roster: &EndpointRoster,
) -> Result<Capture> {
    if roster.is_empty() {
        return Err(Error::Roster("direction inference needs a non-empty roster".into()));
    }
    let mut rdr = PcapReader::new(reader)?;
    let linktype = rdr.header().linktype;
    match (linktype, opts.mode) {
        (LINKTYPE_ETHERNET, _) | (LINKTYPE_IEEE802_11_RADIOTAP, CaptureMode::Layer2) => {}
        (LINKTYPE_IEEE802_11_RADIOTAP, CaptureMode::Layer3) => {
            return Err(Error::Unsupported(
                "radiotap captures can only be read in layer-2 mode".into(),
            ))
        }
        (other, _) => return Err(Error::Unsupported(format!("link type {other}"))),
    }

    let mut stats = IngestStats::default();
    let mut packets = Vec::new();
    while let Some(rec) = rdr.next_record()? {
        stats.records += 1;
        let decoded = if linktype == LINKTYPE_ETHERNET {
            frame::decode_ethernet(&rec.data).map(|f| match opts.mode {
                CaptureMode::Layer3 => layer3_meta(&f, roster),
                CaptureMode::Layer2 => layer2_meta_from_ethernet(&f, roster, opts.layer2_offset),
            })
        } else {
            frame::decode_radiotap(&rec.data, rec.orig_len).map(|w| {
                let direction = infer_direction(Address::Mac(w.transmitter), Address::Mac(w.receiver), roster);
                direction.map(|direction| PartialMeta {
                    length: w.frame_len,
                    direction,
                    flow: FlowKey::Layer2(MacPair::new(w.transmitter, w.receiver)),
                    kind: PayloadKind::Other,
                    seq: None,
                    link: Some(MacPair::new(w.transmitter, w.receiver)),
                })
            })
        };
        match decoded {
            Ok(Some(m)) => packets.push(PacketMeta {
                ts: rec.ts,
                length: m.length,
                direction: m.direction,
                flow: m.flow,
                kind: m.kind,
                retransmission: false,
                seq: m.seq,
                link: m.link,
            }),
            Ok(None) => stats.foreign += 1,
            Err(Skip::NotIpv4) => stats.non_ipv4 += 1,
            Err(Skip::NotTcp) => stats.non_tcp += 1,
            Err(Skip::Fragment) => stats.fragments += 1,
            Err(Skip::NotData) => stats.not_data += 1,
            Err(Skip::Malformed) => stats.malformed += 1,
        }
    }
    stats.truncated = rdr.truncated();
    if stats.truncated > 0 {
        log::warn!("{} truncated record(s) skipped", stats.truncated);
    }
    Ok(Capture {
        mode: opts.mode,
        packets,
        stats,
    })
}

struct PartialMeta {
    length: u32,
    direction: packet::Direction,
    flow: FlowKey,
    kind: PayloadKind,
    seq: Option<u32>,
    link: Option<MacPair>,
}

fn layer3_meta(f: &TcpFrame, roster: &EndpointRoster) -> Option<PartialMeta> {
    let direction = infer_direction(Address::Ip(f.src.ip), Address::Ip(f.dst.ip), roster)?;
    let kind = if f.payload_len == 0 {
        PayloadKind::Other
    } else {
        classify_tls(&f.payload_head)
    };
    Some(PartialMeta {
        length: f.payload_len,
        direction,
        flow: FlowKey::Layer3(ConnKey::new(f.src, f.dst, 6)),
        kind,
        seq: Some(f.seq),
        link: Some(MacPair::new(f.src_mac, f.dst_mac)),
    })
}

fn layer2_meta_from_ethernet(f: &TcpFrame, roster: &EndpointRoster, offset: u32) -> Option<PartialMeta> {
    let direction = infer_direction(Address::Mac(f.src_mac), Address::Mac(f.dst_mac), roster)
        .or_else(|| infer_direction(Address::Ip(f.src.ip), Address::Ip(f.dst.ip), roster))?;
    Some(PartialMeta {
        length: map_to_layer2(f.payload_len, offset),
        direction,
        flow: FlowKey::Layer2(MacPair::new(f.src_mac, f.dst_mac)),
        kind: PayloadKind::Other,
        seq: None,
        link: Some(MacPair::new(f.src_mac, f.dst_mac)),
    })
}
