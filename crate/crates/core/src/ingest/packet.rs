//! Normalized packet metadata shared by every stage of the toolkit.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Capture timestamp in microseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_micros(us: i64) -> Self {
        Timestamp(us)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp((secs * 1e6).round() as i64)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub const fn saturating_add_micros(self, us: i64) -> Self {
        Timestamp(self.0.saturating_add(us))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:06}", abs / 1_000_000, abs % 1_000_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "C")]
    ClientToServer,
    #[serde(rename = "S")]
    ServerToClient,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::ClientToServer => Direction::ServerToClient,
            Direction::ServerToClient => Direction::ClientToServer,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Direction::ClientToServer => 'C',
            Direction::ServerToClient => 'S',
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadKind {
    TcpPayload,
    TlsAppData,
    Other,
}

impl PayloadKind {
    /// Whether the packet carries TCP payload bytes (TLS application data included).
    pub fn has_payload(self) -> bool {
        matches!(self, PayloadKind::TcpPayload | PayloadKind::TlsAppData)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaptureMode {
    Layer3,
    Layer2,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl FromStr for MacAddr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for byte in out.iter_mut() {
            let part = parts.next().ok_or_else(|| format!("bad MAC address {s:?}"))?;
            if part.len() != 2 {
                return Err(format!("bad MAC address {s:?}"));
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| format!("bad MAC address {s:?}"))?;
        }
        if parts.next().is_some() {
            return Err(format!("bad MAC address {s:?}"));
        }
        Ok(MacAddr(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

/// Direction-agnostic 5-tuple: `a <= b` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConnKey {
    pub a: Endpoint,
    pub b: Endpoint,
    pub protocol: u8,
}

impl ConnKey {
    pub fn new(x: Endpoint, y: Endpoint, protocol: u8) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        ConnKey { a, b, protocol }
    }
}

/// Unordered pair of MAC addresses: `a <= b` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacPair {
    pub a: MacAddr,
    pub b: MacAddr,
}

impl MacPair {
    pub fn new(x: MacAddr, y: MacAddr) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        MacPair { a, b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowKey {
    Layer3(ConnKey),
    Layer2(MacPair),
}

impl FlowKey {
    pub fn mode(&self) -> CaptureMode {
        match self {
            FlowKey::Layer3(_) => CaptureMode::Layer3,
            FlowKey::Layer2(_) => CaptureMode::Layer2,
        }
    }

    pub fn ips(&self) -> Option<(Ipv4Addr, Ipv4Addr)> {
        match self {
            FlowKey::Layer3(k) => Some((k.a.ip, k.b.ip)),
            FlowKey::Layer2(_) => None,
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowKey::Layer3(k) => write!(f, "{}<->{}/{}", k.a, k.b, k.protocol),
            FlowKey::Layer2(p) => write!(f, "{}<->{}", p.a, p.b),
        }
    }
}

/// One captured packet reduced to what signature work needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketMeta {
    pub ts: Timestamp,
    /// Application payload bytes (layer 3) or frame length (layer 2).
    pub length: u32,
    pub direction: Direction,
    pub flow: FlowKey,
    pub kind: PayloadKind,
    pub retransmission: bool,
    /// TCP sequence number; absent for layer-2 frames.
    pub seq: Option<u32>,
    /// Ethernet address pair of the carrying frame, when known.
    pub link: Option<MacPair>,
}

impl PacketMeta {
    /// `C-556` / `S-1293` notation.
    pub fn label(&self) -> String {
        format!("{}-{}", self.direction, self.length)
    }
}
