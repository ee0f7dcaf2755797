//! Local endpoint roster and client/server direction inference.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::packet::{Direction, MacAddr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Address {
    Ip(Ipv4Addr),
    Mac(MacAddr),
}

impl FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(ip) = s.parse::<Ipv4Addr>() {
            return Ok(Address::Ip(ip));
        }
        s.parse::<MacAddr>()
            .map(Address::Mac)
            .map_err(|_| format!("{s:?} is neither an IPv4 nor a MAC address"))
    }
}

impl std::fmt::Display for Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Address::Ip(ip) => write!(f, "{ip}"),
            Address::Mac(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Device,
    Phone,
    Router,
}

/// Addresses of the profiled device and its controlling phone.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EndpointRoster {
    pub device: BTreeSet<Address>,
    pub phone: BTreeSet<Address>,
    /// NAT address seen by an upstream (WAN) observer.
    pub router_wan: Option<Ipv4Addr>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RosterFile {
    #[serde(default)]
    device: Vec<String>,
    #[serde(default)]
    phone: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    router_wan: Option<String>,
}

impl EndpointRoster {
    pub fn is_empty(&self) -> bool {
        self.device.is_empty() && self.phone.is_empty() && self.router_wan.is_none()
    }

    pub fn role(&self, addr: Address) -> Option<Role> {
        if self.device.contains(&addr) {
            Some(Role::Device)
        } else if self.phone.contains(&addr) {
            Some(Role::Phone)
        } else {
            match (addr, self.router_wan) {
                (Address::Ip(ip), Some(wan)) if ip == wan => Some(Role::Router),
                _ => None,
            }
        }
    }

    pub fn is_local(&self, addr: Address) -> bool {
        self.role(addr).is_some()
    }

    /// Whether `ip` belongs to the profiled device (NAT address included).
    pub fn is_device_ip(&self, ip: Ipv4Addr) -> bool {
        matches!(
            self.role(Address::Ip(ip)),
            Some(Role::Device) | Some(Role::Router)
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RosterFile = toml::from_str(text).map_err(|e| Error::Roster(e.to_string()))?;
        let parse_all = |v: &[String]| -> Result<BTreeSet<Address>> {
            v.iter()
                .map(|s| s.parse::<Address>().map_err(Error::Roster))
                .collect()
        };
        let router_wan = raw
            .router_wan
            .as_deref()
            .map(|s| {
                s.trim()
                    .parse::<Ipv4Addr>()
                    .map_err(|_| Error::Roster(format!("router_wan {s:?} is not an IPv4 address")))
            })
            .transpose()?;
        let roster = EndpointRoster {
            device: parse_all(&raw.device)?,
            phone: parse_all(&raw.phone)?,
            router_wan,
        };
        if roster.is_empty() {
            return Err(Error::Roster("roster lists no addresses".into()));
        }
        Ok(roster)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        let raw = RosterFile {
            device: self.device.iter().map(ToString::to_string).collect(),
            phone: self.phone.iter().map(ToString::to_string).collect(),
            router_wan: self.router_wan.map(|ip| ip.to_string()),
        };
        toml::to_string(&raw).expect("roster serializes")
    }
}

/// Client-to-server iff the source is local. When both ends are local, the
/// phone is the client; between equal roles the lower address is.
/// `None` when neither endpoint is in the roster.
pub fn infer_direction(src: Address, dst: Address, roster: &EndpointRoster) -> Option<Direction> {
    match (roster.role(src), roster.role(dst)) {
        (None, None) => None,
        (Some(_), None) => Some(Direction::ClientToServer),
        (None, Some(_)) => Some(Direction::ServerToClient),
        (Some(rs), Some(rd)) => Some(match (rs, rd) {
            (Role::Phone, r) if r != Role::Phone => Direction::ClientToServer,
            (r, Role::Phone) if r != Role::Phone => Direction::ServerToClient,
            _ if src <= dst => Direction::ClientToServer,
            _ => Direction::ServerToClient,
        }),
    }
}
