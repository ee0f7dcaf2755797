//! Trace-level simulation of traffic-shaping defenses and the weakened
//! detectors that still work against them.

mod padding;
mod score;
mod stp;

use std::net::Ipv4Addr;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::packet::{Direction, Timestamp};

pub use padding::{detect_direction_only, direction_pattern, simulate_padding, DirectionHit};
pub use score::{score_defense, DefenseScore};
pub use stp::{detect_tunnel, simulate_stp, StpEvent, StpTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefenseStrategy {
    /// Every packet padded to the MTU and carried in one VPN tunnel.
    PadMtuVpn,
    /// TLS application records padded, connections still distinguishable.
    PadMtuTlsPerConn,
    /// The device's TLS application records padded and treated as one connection.
    PadMtuHybrid,
    /// Dummy events injected and everything tunneled, lengths kept.
    StpVpn,
}

impl FromStr for DefenseStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "padmtuvpn" | "vpn" => Ok(DefenseStrategy::PadMtuVpn),
            "padmtutlsperconn" | "tlsperconn" | "tls" => Ok(DefenseStrategy::PadMtuTlsPerConn),
            "padmtuhybrid" | "hybrid" => Ok(DefenseStrategy::PadMtuHybrid),
            "stpvpn" | "stp" => Ok(DefenseStrategy::StpVpn),
            _ => Err(Error::Config(format!("unknown defense strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefenseConfig {
    pub strategy: DefenseStrategy,
    pub mtu: u32,
    pub vpn_header_c2s: u32,
    pub vpn_header_s2c: u32,
    pub dummies: usize,
    pub seed: u64,
    /// Restricts the per-connection view to connections with these servers.
    pub servers: Option<Vec<Ipv4Addr>>,
}

impl DefenseConfig {
    pub fn new(strategy: DefenseStrategy) -> Self {
        DefenseConfig {
            strategy,
            mtu: 1500,
            vpn_header_c2s: 52,
            vpn_header_s2c: 49,
            dummies: 0,
            seed: 0,
            servers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mtu == 0 {
            return Err(Error::Config("mtu must be positive".into()));
        }
        Ok(())
    }

    pub fn header(&self, direction: Direction) -> u32 {
        match direction {
            Direction::ClientToServer => self.vpn_header_c2s,
            Direction::ServerToClient => self.vpn_header_s2c,
        }
    }
}

/// One packet as the defended observer sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewPacket {
    pub ts: Timestamp,
    pub direction: Direction,
    pub length: u32,
}

/// The flows an observer can tell apart after a defense is applied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct View {
    pub flows: Vec<Vec<ViewPacket>>,
}

impl View {
    pub fn packet_count(&self) -> usize {
        self.flows.iter().map(Vec::len).sum()
    }
}
