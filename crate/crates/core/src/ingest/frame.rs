//! Link/network/transport header decoding for the two supported link types.

use std::net::Ipv4Addr;

use crate::ingest::packet::{Endpoint, MacAddr};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;
const IPPROTO_TCP: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpFrame {
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub seq: u32,
    pub flags: u8,
    /// Payload size from the IP/TCP length fields (independent of snaplen).
    pub payload_len: u32,
    /// Leading captured payload bytes (at most 5).
    pub payload_head: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WifiFrame {
    pub transmitter: MacAddr,
    pub receiver: MacAddr,
    pub frame_len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Skip {
    NotIpv4,
    NotTcp,
    Fragment,
    NotData,
    Malformed,
}

pub fn decode_ethernet(data: &[u8]) -> Result<TcpFrame, Skip> {
    if data.len() < 14 {
        return Err(Skip::Malformed);
    }
    let dst_mac = mac_at(data, 0);
    let src_mac = mac_at(data, 6);
    let mut ethertype = u16::from_be_bytes([data[12], data[13]]);
    let mut off = 14;
    while ethertype == ETHERTYPE_VLAN {
        if data.len() < off + 4 {
            return Err(Skip::Malformed);
        }
        ethertype = u16::from_be_bytes([data[off + 2], data[off + 3]]);
        off += 4;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return Err(Skip::NotIpv4);
    }
    decode_ipv4_tcp(&data[off..], src_mac, dst_mac)
}

fn decode_ipv4_tcp(ip: &[u8], src_mac: MacAddr, dst_mac: MacAddr) -> Result<TcpFrame, Skip> {
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return Err(Skip::Malformed);
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    if ihl < 20 || total_len < ihl || ip.len() < ihl {
        return Err(Skip::Malformed);
    }
    let frag = u16::from_be_bytes([ip[6], ip[7]]);
    let more_fragments = frag & 0x2000 != 0;
    if more_fragments || frag & 0x1fff != 0 {
        return Err(Skip::Fragment);
    }
    if ip[9] != IPPROTO_TCP {
        return Err(Skip::NotTcp);
    }
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let tcp = &ip[ihl..];
    if tcp.len() < 20 {
        return Err(Skip::Malformed);
    }
    let data_off = ((tcp[12] >> 4) as usize) * 4;
    if data_off < 20 || total_len < ihl + data_off || tcp.len() < data_off {
        return Err(Skip::Malformed);
    }
    let payload_len = (total_len - ihl - data_off) as u32;
    let captured = &tcp[data_off..];
    let head_len = captured.len().min(payload_len as usize).min(5);
    Ok(TcpFrame {
        src_mac,
        dst_mac,
        src: Endpoint {
            ip: src_ip,
            port: u16::from_be_bytes([tcp[0], tcp[1]]),
        },
        dst: Endpoint {
            ip: dst_ip,
            port: u16::from_be_bytes([tcp[2], tcp[3]]),
        },
        seq: u32::from_be_bytes([tcp[4], tcp[5], tcp[6], tcp[7]]),
        flags: tcp[13],
        payload_len,
        payload_head: captured[..head_len].to_vec(),
    })
}

/// Radiotap + 802.11: only data frames that carry a body are kept.
pub fn decode_radiotap(data: &[u8], orig_len: u32) -> Result<WifiFrame, Skip> {
    if data.len() < 8 || data[0] != 0 {
        return Err(Skip::Malformed);
    }
    let rt_len = u16::from_le_bytes([data[2], data[3]]) as usize;
    if rt_len < 8 || data.len() < rt_len + 16 {
        return Err(Skip::Malformed);
    }
    let dot11 = &data[rt_len..];
    let fc0 = dot11[0];
    let frame_type = (fc0 >> 2) & 0x3;
    let subtype = fc0 >> 4;
    // Type 2 is data; subtypes with bit 2 set (null function, QoS null) carry no body.
    if frame_type != 2 || subtype & 0x4 != 0 {
        return Err(Skip::NotData);
    }
    Ok(WifiFrame {
        receiver: mac_at(dot11, 4),
        transmitter: mac_at(dot11, 10),
        frame_len: orig_len,
    })
}

fn mac_at(b: &[u8], off: usize) -> MacAddr {
    let mut m = [0u8; 6];
    m.copy_from_slice(&b[off..off + 6]);
    MacAddr(m)
}

/// Build an Ethernet/IPv4/TCP frame with valid checksums.
#[allow(clippy::too_many_arguments)]
pub fn build_ethernet_tcp(
    src_mac: MacAddr,
    dst_mac: MacAddr,
    src: Endpoint,
    dst: Endpoint,
    seq: u32,
    ack: u32,
    flags: u8,
    payload: &[u8],
) -> Vec<u8> {
    let tcp_len = 20 + payload.len();
    let total_len = 20 + tcp_len;
    let mut f = Vec::with_capacity(14 + total_len);
    f.extend_from_slice(&dst_mac.0);
    f.extend_from_slice(&src_mac.0);
    f.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

    let ip_start = f.len();
    f.extend_from_slice(&[0x45, 0]);
    f.extend_from_slice(&(total_len as u16).to_be_bytes());
    f.extend_from_slice(&[0, 0, 0x40, 0, 64, IPPROTO_TCP, 0, 0]);
    f.extend_from_slice(&src.ip.octets());
    f.extend_from_slice(&dst.ip.octets());
    let csum = internet_checksum(&f[ip_start..ip_start + 20], 0);
    f[ip_start + 10..ip_start + 12].copy_from_slice(&csum.to_be_bytes());

    let tcp_start = f.len();
    f.extend_from_slice(&src.port.to_be_bytes());
    f.extend_from_slice(&dst.port.to_be_bytes());
    f.extend_from_slice(&seq.to_be_bytes());
    f.extend_from_slice(&ack.to_be_bytes());
    f.extend_from_slice(&[5 << 4, flags]);
    f.extend_from_slice(&65535u16.to_be_bytes());
    f.extend_from_slice(&[0, 0, 0, 0]);
    f.extend_from_slice(payload);

    let mut pseudo: u32 = 0;
    for pair in src.ip.octets().chunks(2).chain(dst.ip.octets().chunks(2)) {
        pseudo += u16::from_be_bytes([pair[0], pair[1]]) as u32;
    }
    pseudo += IPPROTO_TCP as u32 + tcp_len as u32;
    let csum = internet_checksum(&f[tcp_start..], pseudo);
    f[tcp_start + 16..tcp_start + 18].copy_from_slice(&csum.to_be_bytes());
    f
}

/// Radiotap (8-byte, no fields) + 802.11 protected data frame padded to `frame_len` bytes.
pub fn build_radiotap_data(transmitter: MacAddr, receiver: MacAddr, to_ds: bool, frame_len: usize) -> Vec<u8> {
    let mut f = Vec::with_capacity(frame_len.max(36));
    f.extend_from_slice(&[0, 0, 8, 0, 0, 0, 0, 0]);
    let flags = if to_ds { 0x41 } else { 0x42 }; // protected + ToDS/FromDS
    f.extend_from_slice(&[0x08, flags, 0, 0]);
    f.extend_from_slice(&receiver.0);
    f.extend_from_slice(&transmitter.0);
    f.extend_from_slice(&if to_ds { receiver.0 } else { transmitter.0 });
    f.extend_from_slice(&[0, 0]);
    f.resize(frame_len.max(f.len()), 0xa5);
    f
}

fn internet_checksum(data: &[u8], seed: u32) -> u16 {
    let mut sum = seed;
    for chunk in data.chunks(2) {
        let word = if chunk.len() == 2 {
            u16::from_be_bytes([chunk[0], chunk[1]])
        } else {
            u16::from_be_bytes([chunk[0], 0])
        };
        sum += word as u32;
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
