use std::fs::File;
use std::io::BufWriter;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::frame::{build_ethernet_tcp, build_radiotap_data};
use crate::ingest::packet::{Direction, Endpoint, MacAddr, Timestamp};
use crate::ingest::pcap::{Endianness, PcapWriter, LINKTYPE_ETHERNET, LINKTYPE_IEEE802_11_RADIOTAP};
use crate::ingest::roster::{Address, EndpointRoster};
use crate::signature::bounds::DEFAULT_EPS;
use crate::signature::model::CommClass;
use crate::synth::profile::{BackgroundFlow, Host, PacketTemplate, TraceProfile};
use crate::training::events::{Event, EventLog};

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_PSH: u8 = 0x08;
pub const TCP_ACK: u8 = 0x10;

/// Addresses used by generated captures (documentation ranges).
pub mod addr {
    use super::*;

    pub const DEVICE_IP: Ipv4Addr = Ipv4Addr::new(192, 0, 2, 10);
    pub const PHONE_IP: Ipv4Addr = Ipv4Addr::new(192, 0, 2, 20);
    pub const DEVICE_MAC: MacAddr = MacAddr([0x02, 0, 0, 0, 0, 0x10]);
    pub const PHONE_MAC: MacAddr = MacAddr([0x02, 0, 0, 0, 0, 0x20]);
    pub const ROUTER_MAC: MacAddr = MacAddr([0x02, 0, 0, 0, 0, 0x01]);

    /// Cloud server for the `set`-th sequence set of an event.
    pub fn event_server(set: usize) -> Ipv4Addr {
        Ipv4Addr::new(203, 0, 113, 10 + set as u8)
    }

    pub fn background_server(flow: usize) -> Ipv4Addr {
        Ipv4Addr::new(198, 51, 100, 10 + (flow % 200) as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetHost {
    pub ip: Ipv4Addr,
    pub mac: MacAddr,
    pub port: u16,
}

impl NetHost {
    pub fn endpoint(&self) -> Endpoint {
        Endpoint {
            ip: self.ip,
            port: self.port,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPacket {
    pub ts: Timestamp,
    pub src: NetHost,
    pub dst: NetHost,
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
    pub payload: Vec<u8>,
    /// Client-to-server relative to the connection.
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthPacket {
    pub ts: Timestamp,
    pub direction: Direction,
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub ts: Timestamp,
    pub label: String,
    /// Injected to mimic an event; not a real one.
    #[serde(default)]
    pub dummy: bool,
    /// Payload packets of each sequence set, in order.
    pub sets: Vec<Vec<TruthPacket>>,
    /// Server address of each set's connection.
    pub servers: Vec<Ipv4Addr>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub device: String,
    pub events: Vec<TruthEvent>,
    /// Packets added as noise; never part of an expected match.
    #[serde(default)]
    pub noise_packets: usize,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub packets: Vec<SynthPacket>,
    pub events: EventLog,
    pub roster: EndpointRoster,
    pub truth: GroundTruth,
    pub profile: TraceProfile,
}

/// One TCP connection being written out.
pub(crate) struct ConnWriter {
    client: NetHost,
    server: NetHost,
    cseq: u32,
    sseq: u32,
    acks: bool,
}

impl ConnWriter {
    pub(crate) fn new(client: NetHost, server: NetHost, acks: bool, rng: &mut ChaCha8Rng) -> Self {
        ConnWriter {
            client,
            server,
            cseq: rng.gen(),
            sseq: rng.gen(),
            acks,
        }
    }

    fn packet(&mut self, ts: Timestamp, dir: Direction, flags: u8, payload: Vec<u8>) -> SynthPacket {
        let (src, dst, seq, ack) = match dir {
            Direction::ClientToServer => (self.client, self.server, self.cseq, self.sseq),
            Direction::ServerToClient => (self.server, self.client, self.sseq, self.cseq),
        };
        let advance = payload.len() as u32 + u32::from(flags & (TCP_SYN | TCP_FIN) != 0);
        match dir {
            Direction::ClientToServer => self.cseq = self.cseq.wrapping_add(advance),
            Direction::ServerToClient => self.sseq = self.sseq.wrapping_add(advance),
        }
        SynthPacket {
            ts,
            src,
            dst,
            seq,
            ack,
            flags,
            payload,
            direction: dir,
        }
    }

    pub(crate) fn open(&mut self, ts: Timestamp, out: &mut Vec<SynthPacket>) -> Timestamp {
        out.push(self.packet(ts, Direction::ClientToServer, TCP_SYN, Vec::new()));
        let t1 = ts.saturating_add_micros(300);
        out.push(self.packet(t1, Direction::ServerToClient, TCP_SYN | TCP_ACK, Vec::new()));
        let t2 = t1.saturating_add_micros(300);
        out.push(self.packet(t2, Direction::ClientToServer, TCP_ACK, Vec::new()));
        t2.saturating_add_micros(300)
    }

    /// Data segment, followed by the peer's ACK 100 µs later when enabled.
    pub(crate) fn send(&mut self, ts: Timestamp, dir: Direction, payload: Vec<u8>, out: &mut Vec<SynthPacket>) {
        let p = self.packet(ts, dir, TCP_PSH | TCP_ACK, payload);
        out.push(p);
        if self.acks {
            let a = self.packet(ts.saturating_add_micros(100), dir.flip(), TCP_ACK, Vec::new());
            out.push(a);
        }
    }

    pub(crate) fn close(&mut self, ts: Timestamp, out: &mut Vec<SynthPacket>) {
        out.push(self.packet(ts, Direction::ClientToServer, TCP_FIN | TCP_ACK, Vec::new()));
        let t1 = ts.saturating_add_micros(300);
        out.push(self.packet(t1, Direction::ServerToClient, TCP_FIN | TCP_ACK, Vec::new()));
        out.push(self.packet(t1.saturating_add_micros(300), Direction::ClientToServer, TCP_ACK, Vec::new()));
    }
}

/// Payload bytes of the given size: a TLS record of `content_type` or, without
/// TLS, filler that does not look like a record header.
pub(crate) fn payload(len: u32, tls: Option<u8>, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let len = len as usize;
    let mut v = Vec::with_capacity(len);
    match tls {
        Some(ct) => {
            v.extend_from_slice(&[ct, 0x03, 0x03]);
            v.extend_from_slice(&((len.saturating_sub(5)) as u16).to_be_bytes());
            v.truncate(len);
            while v.len() < len {
                v.push(rng.gen());
            }
        }
        None => {
            v.resize(len, b'D');
        }
    }
    v
}

pub(crate) struct Ports(u16);

impl Ports {
    pub(crate) fn next(&mut self) -> u16 {
        self.0 = if self.0 >= 65000 { 40000 } else { self.0 + 1 };
        self.0
    }
}

pub(crate) fn local_host(host: Host, port: u16) -> NetHost {
    match host {
        Host::Device => NetHost {
            ip: addr::DEVICE_IP,
            mac: addr::DEVICE_MAC,
            port,
        },
        Host::Phone => NetHost {
            ip: addr::PHONE_IP,
            mac: addr::PHONE_MAC,
            port,
        },
    }
}

pub(crate) fn cloud_host(ip: Ipv4Addr) -> NetHost {
    NetHost {
        ip,
        mac: addr::ROUTER_MAC,
        port: 443,
    }
}

pub(crate) fn uniform_ms(range: [u64; 2], rng: &mut ChaCha8Rng) -> i64 {
    let ms = rng.gen_range(range[0] as f64..=range[1] as f64);
    (ms * 1000.0).round() as i64
}

/// Draws a length in `range` that stays clear of every template length in the
/// same direction (by more than the clustering radius).
pub(crate) fn clear_length(
    range: [u32; 2],
    dir: Direction,
    avoid: &[PacketTemplate],
    rng: &mut ChaCha8Rng,
) -> Result<u32> {
    let margin = DEFAULT_EPS as u32;
    let clashes = |l: u32| {
        avoid
            .iter()
            .any(|t| t.direction == dir && l + margin >= t.min && l <= t.max + margin)
    };
    for _ in 0..1000 {
        let l = rng.gen_range(range[0]..=range[1]);
        if !clashes(l) {
            return Ok(l);
        }
    }
    Err(Error::Profile(format!(
        "background length range {range:?} leaves no room clear of signature lengths"
    )))
}

const HANDSHAKE: [(Direction, u32); 4] = [
    (Direction::ClientToServer, 517),
    (Direction::ServerToClient, 1418),
    (Direction::ClientToServer, 126),
    (Direction::ServerToClient, 51),
];

/// Handshake record sizes, nudged away from template lengths.
fn handshake_lengths(avoid: &[PacketTemplate]) -> Vec<(Direction, u32)> {
    let margin = DEFAULT_EPS as u32;
    HANDSHAKE
        .iter()
        .map(|&(dir, mut len)| {
            while avoid
                .iter()
                .any(|t| t.direction == dir && len + margin >= t.min && len <= t.max + margin)
            {
                len += 2 * margin + 1;
            }
            (dir, len)
        })
        .collect()
}

pub(crate) struct Ctx<'a> {
    pub profile: &'a TraceProfile,
    pub rng: ChaCha8Rng,
    pub ports: Ports,
    pub avoid: Vec<PacketTemplate>,
    pub handshake: Vec<(Direction, u32)>,
}

impl<'a> Ctx<'a> {
    pub(crate) fn new(profile: &'a TraceProfile, seed: u64) -> Self {
        Self::with_ports(profile, seed, 40000)
    }

    /// Client ports are handed out upward from `first_port`.
    pub(crate) fn with_ports(profile: &'a TraceProfile, seed: u64, first_port: u16) -> Self {
        let avoid = profile.template_lengths();
        let handshake = handshake_lengths(&avoid);
        Ctx {
            profile,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ports: Ports(first_port),
            avoid,
            handshake,
        }
    }

    fn tls_data(&self) -> Option<u8> {
        self.profile.tls.then_some(0x17)
    }

    /// Opens a connection (with TLS handshake when enabled) and returns it with
    /// the time the first data packet may go out.
    pub(crate) fn start_conn(
        &mut self,
        client: NetHost,
        server: NetHost,
        ts: Timestamp,
        out: &mut Vec<SynthPacket>,
    ) -> (ConnWriter, Timestamp) {
        let mut c = ConnWriter::new(client, server, self.profile.acks, &mut self.rng);
        let mut t = if self.profile.handshake { c.open(ts, out) } else { ts };
        if self.profile.tls && self.profile.handshake {
            for (dir, len) in self.handshake.clone() {
                let body = payload(len, Some(0x16), &mut self.rng);
                c.send(t, dir, body, out);
                t = t.saturating_add_micros(400);
            }
        }
        (c, t)
    }

    /// Writes one event occurrence of `template` sets starting near `at`.
    pub(crate) fn event_traffic(
        &mut self,
        sets: &[crate::synth::profile::SetTemplate],
        at: Timestamp,
        out: &mut Vec<SynthPacket>,
    ) -> Result<(Vec<Vec<TruthPacket>>, Vec<Ipv4Addr>)> {
        let mut t = at;
        let mut truth_sets = Vec::new();
        let mut servers = Vec::new();
        for (si, set) in sets.iter().enumerate() {
            let (client, server) = match set.class {
                CommClass::DeviceCloud => (local_host(Host::Device, self.ports.next()), cloud_host(addr::event_server(si))),
                CommClass::PhoneCloud => (local_host(Host::Phone, self.ports.next()), cloud_host(addr::event_server(si))),
                CommClass::PhoneDevice => (local_host(Host::Phone, self.ports.next()), local_host(Host::Device, 8443)),
            };
            servers.push(server.ip);
            let (mut conn, mut data_t) = self.start_conn(client, server, t, out);
            let mut truth = Vec::new();
            for (k, p) in set.parsed()?.into_iter().enumerate() {
                if k > 0 {
                    data_t = data_t.saturating_add_micros(uniform_ms(self.profile.gap_ms, &mut self.rng));
                }
                let len = self.rng.gen_range(p.min..=p.max);
                let body = payload(len, self.tls_data(), &mut self.rng);
                conn.send(data_t, p.direction, body, out);
                truth.push(TruthPacket {
                    ts: data_t,
                    direction: p.direction,
                    length: len,
                });
            }
            conn.close(data_t.saturating_add_micros(1000), out);
            truth_sets.push(truth);
            t = data_t.saturating_add_micros(uniform_ms(self.profile.gap_ms, &mut self.rng));
        }
        Ok((truth_sets, servers))
    }

    pub(crate) fn exchange_payload(&mut self, len: u32) -> Vec<u8> {
        let tls = self.tls_data();
        payload(len, tls, &mut self.rng)
    }

    fn background(&mut self, idx: usize, flow: &BackgroundFlow, span: (Timestamp, Timestamp), out: &mut Vec<SynthPacket>) -> Result<()> {
        let server = cloud_host(addr::background_server(idx));
        let (start, end) = span;
        match *flow {
            BackgroundFlow::Periodic { period_s, request, reply, host } => {
                let client = local_host(host, self.ports.next());
                let (mut conn, t0) = self.start_conn(client, server, start, out);
                let phase = self.rng.gen_range(0.0..period_s);
                let mut t = t0.saturating_add_micros((phase * 1e6) as i64);
                while t < end {
                    self.exchange(&mut conn, t, request, reply, out)?;
                    t = t.saturating_add_micros((period_s * 1e6) as i64);
                }
            }
            BackgroundFlow::Random { rate_per_s, request, reply, connections, host } => {
                let mut conns = Vec::new();
                let mut t = start;
                for _ in 0..connections {
                    let client = local_host(host, self.ports.next());
                    let (c, t1) = self.start_conn(client, server, t, out);
                    conns.push(c);
                    t = t1;
                }
                loop {
                    let u: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
                    t = t.saturating_add_micros((-u.ln() / rate_per_s * 1e6).round().max(1.0) as i64);
                    if t >= end {
                        break;
                    }
                    let k = self.rng.gen_range(0..conns.len());
                    let mut c = std::mem::replace(&mut conns[k], ConnWriter::new(server, server, false, &mut self.rng));
                    self.exchange(&mut c, t, request, reply, out)?;
                    conns[k] = c;
                }
            }
            BackgroundFlow::Bulk { interval_s, segments, segment_len, host } => {
                let client = local_host(host, self.ports.next());
                let (mut conn, t0) = self.start_conn(client, server, start, out);
                let mut t = t0.saturating_add_micros(self.rng.gen_range(0..(interval_s * 1e6) as i64));
                let avoid = self.avoid.clone();
                while t < end {
                    let req = clear_length([200, 400], Direction::ClientToServer, &avoid, &mut self.rng)?;
                    let body = self.exchange_payload(req);
                    conn.send(t, Direction::ClientToServer, body, out);
                    let mut st = t;
                    for _ in 0..segments {
                        st = st.saturating_add_micros(200);
                        let body = self.exchange_payload(segment_len);
                        conn.send(st, Direction::ServerToClient, body, out);
                    }
                    t = t.saturating_add_micros((interval_s * 1e6) as i64);
                }
            }
        }
        Ok(())
    }

    fn exchange(&mut self, conn: &mut ConnWriter, t: Timestamp, request: [u32; 2], reply: [u32; 2], out: &mut Vec<SynthPacket>) -> Result<()> {
        let avoid = self.avoid.clone();
        let req = clear_length(request, Direction::ClientToServer, &avoid, &mut self.rng)?;
        let rep = clear_length(reply, Direction::ServerToClient, &avoid, &mut self.rng)?;
        let body = self.exchange_payload(req);
        conn.send(t, Direction::ClientToServer, body, out);
        let body = self.exchange_payload(rep);
        let gap = uniform_ms(self.profile.gap_ms, &mut self.rng);
        conn.send(t.saturating_add_micros(gap), Direction::ServerToClient, body, out);
        Ok(())
    }
}

pub fn roster() -> EndpointRoster {
    EndpointRoster {
        device: [Address::Ip(addr::DEVICE_IP), Address::Mac(addr::DEVICE_MAC)].into_iter().collect(),
        phone: [Address::Ip(addr::PHONE_IP), Address::Mac(addr::PHONE_MAC)].into_iter().collect(),
        router_wan: None,
    }
}

/// Deterministic synthetic capture for `profile`. Events cycle through the
/// templates (ON, OFF, ON, ...) until each label has `n_per_label` events.
pub fn generate(profile: &TraceProfile, seed: u64) -> Result<Generated> {
    profile.validate()?;
    let mut ctx = Ctx::new(profile, seed);
    let mut packets = Vec::new();
    let mut log = Vec::new();
    let mut truth = Vec::new();
    let total = profile.n_per_label * profile.events.len();
    let start = Timestamp::from_secs_f64(profile.start_epoch_s);
    for k in 0..total {
        let template = &profile.events[k % profile.events.len()];
        let ts = start.saturating_add_micros((k as f64 * profile.event_spacing_s * 1e6).round() as i64);
        let first = ts.saturating_add_micros(uniform_ms(profile.delay_ms, &mut ctx.rng));
        let (sets, servers) = ctx.event_traffic(&template.sets, first, &mut packets)?;
        log.push(Event {
            ts,
            label: template.label.clone(),
        });
        truth.push(TruthEvent {
            ts,
            label: template.label.clone(),
            dummy: false,
            sets,
            servers,
        });
    }

    let span_end = start.saturating_add_micros(((total as f64 - 1.0) * profile.event_spacing_s * 1e6 + profile.window_s * 1e6) as i64);
    let span = (start.saturating_add_micros(-1_000_000), span_end);
    for (i, flow) in profile.background.iter().enumerate() {
        ctx.background(i, flow, span, &mut packets)?;
    }
    packets.sort_by_key(|p| p.ts);

    Ok(Generated {
        packets,
        events: EventLog::new(log)?,
        roster: roster(),
        truth: GroundTruth {
            device: profile.device.clone(),
            events: truth,
            noise_packets: 0,
        },
        profile: profile.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub capture: PathBuf,
    pub wifi_capture: Option<PathBuf>,
    pub events: PathBuf,
    pub roster: PathBuf,
    pub truth: PathBuf,
}

pub fn write_ethernet(packets: &[SynthPacket], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = PcapWriter::new(BufWriter::new(file), LINKTYPE_ETHERNET, Endianness::Little).map_err(|e| Error::io(path, e))?;
    for p in packets {
        let frame = build_ethernet_tcp(p.src.mac, p.dst.mac, p.src.endpoint(), p.dst.endpoint(), p.seq, p.ack, p.flags, &p.payload);
        w.write_record(p.ts, &frame, frame.len() as u32).map_err(|e| Error::io(path, e))?;
    }
    use std::io::Write;
    w.into_inner().flush().map_err(|e| Error::io(path, e))
}

/// 802.11 view: record length = payload length + offset, bytes cut after the header.
pub fn write_radiotap(packets: &[SynthPacket], roster: &EndpointRoster, offset: u32, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = PcapWriter::new(BufWriter::new(file), LINKTYPE_IEEE802_11_RADIOTAP, Endianness::Little)
        .map_err(|e| Error::io(path, e))?;
    for p in packets {
        let frame_len = p.payload.len() + offset as usize;
        let to_ds = roster.is_local(Address::Mac(p.src.mac)) && !roster.is_local(Address::Mac(p.dst.mac));
        let full = build_radiotap_data(p.src.mac, p.dst.mac, to_ds, 0);
        w.write_record(p.ts, &full, frame_len as u32).map_err(|e| Error::io(path, e))?;
    }
    use std::io::Write;
    w.into_inner().flush().map_err(|e| Error::io(path, e))
}

pub fn write_outputs(gen: &Generated, dir: &Path) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = OutputPaths {
        capture: dir.join("capture.pcap"),
        wifi_capture: gen.profile.radiotap.then(|| dir.join("capture-wifi.pcap")),
        events: dir.join("events.txt"),
        roster: dir.join("roster.toml"),
        truth: dir.join("truth.json"),
    };
    write_ethernet(&gen.packets, &paths.capture)?;
    if let Some(p) = &paths.wifi_capture {
        write_radiotap(&gen.packets, &gen.roster, gen.profile.layer2_offset, p)?;
    }
    std::fs::write(&paths.events, gen.events.to_text()).map_err(|e| Error::io(&paths.events, e))?;
    std::fs::write(&paths.roster, gen.roster.to_toml()).map_err(|e| Error::io(&paths.roster, e))?;
    let json = serde_json::to_string_pretty(&gen.truth).expect("truth serializes");
    std::fs::write(&paths.truth, json).map_err(|e| Error::io(&paths.truth, e))?;
    Ok(paths)
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Real (non-dummy) events as an event log.
    pub fn event_log(&self) -> EventLog {
        EventLog {
            entries: self
                .events
                .iter()
                .filter(|e| !e.dummy)
                .map(|e| Event {
                    ts: e.ts,
                    label: e.label.clone(),
                })
                .collect(),
        }
    }
}
