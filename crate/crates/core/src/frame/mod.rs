//! Ethernet II frames carrying IPv4 (TCP/UDP) or ARP, parsed into structured
//! values and written back byte-for-byte.
//!
//! Parsing never repairs anything: checksum and length fields are kept as
//! they appeared on the wire, so a frame whose addresses were rewritten
//! without [`Frame::recompute_checksums`] fails [`Frame::verify_checksums`].

mod arp;
mod checksum;
mod hexdump;
mod ipv4;
mod transport;

use std::fmt;
use std::io::{self, Write};
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use arp::{ArpMessage, ArpOp};
pub use checksum::{ipv4_checksum, transport_checksum, Checksum};
pub use hexdump::{parse_hex_lines, to_hex_line, write_hex_lines};
pub use ipv4::{IpProtocol, Ipv4Body, Ipv4Packet, IPV4_HEADER_LEN};
pub use transport::{TcpFlags, TcpSegment, UdpDatagram, TCP_HEADER_LEN, UDP_HEADER_LEN};

pub const ETHERNET_HEADER_LEN: usize = 14;
pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("truncated {layer} header: need {needed} bytes, have {available}")]
    Truncated {
        layer: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("unsupported {0}")]
    Unsupported(String),
    #[error("checksum input has odd length {0}")]
    OddLength(usize),
    #[error("invalid MAC address {0:?}")]
    InvalidMac(String),
    #[error("hex dump line {line}: {reason}")]
    HexLine { line: usize, reason: String },
}

fn need(layer: &'static str, bytes: &[u8], needed: usize) -> Result<(), FrameError> {
    if bytes.len() < needed {
        Err(FrameError::Truncated {
            layer,
            needed,
            available: bytes.len(),
        })
    } else {
        Ok(())
    }
}

/// A 48-bit Ethernet hardware address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr([0xff; 6]);
    pub const ZERO: MacAddr = MacAddr([0; 6]);

    pub const fn new(a: u8, b: u8, c: u8, d: u8, e: u8, f: u8) -> Self {
        MacAddr([a, b, c, d, e, f])
    }

    pub fn is_broadcast(&self) -> bool {
        *self == Self::BROADCAST
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MacAddr {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for slot in out.iter_mut() {
            let part = parts.next().ok_or_else(|| FrameError::InvalidMac(s.into()))?;
            if part.len() != 2 {
                return Err(FrameError::InvalidMac(s.into()));
            }
            *slot = u8::from_str_radix(part, 16).map_err(|_| FrameError::InvalidMac(s.into()))?;
        }
        if parts.next().is_some() {
            return Err(FrameError::InvalidMac(s.into()));
        }
        Ok(MacAddr(out))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Body of an Ethernet frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Ipv4(Ipv4Packet),
    Arp(ArpMessage),
    /// Any other ethertype, kept verbatim.
    Other { ethertype: u16, bytes: Vec<u8> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub dst_mac: MacAddr,
    pub src_mac: MacAddr,
    pub payload: Payload,
    /// Bytes after the end of the parsed payload (Ethernet padding).
    pub trailer: Vec<u8>,
}

impl Frame {
    pub fn new(dst_mac: MacAddr, src_mac: MacAddr, payload: Payload) -> Self {
        Frame {
            dst_mac,
            src_mac,
            payload,
            trailer: Vec::new(),
        }
    }

    pub fn ethertype(&self) -> u16 {
        match &self.payload {
            Payload::Ipv4(_) => ETHERTYPE_IPV4,
            Payload::Arp(_) => ETHERTYPE_ARP,
            Payload::Other { ethertype, .. } => *ethertype,
        }
    }

    pub fn parse(bytes: &[u8]) -> Result<Frame, FrameError> {
        need("ethernet", bytes, ETHERNET_HEADER_LEN)?;
        let dst_mac = MacAddr(bytes[0..6].try_into().unwrap());
        let src_mac = MacAddr(bytes[6..12].try_into().unwrap());
        let ethertype = u16::from_be_bytes([bytes[12], bytes[13]]);
        let body = &bytes[ETHERNET_HEADER_LEN..];
        let (payload, used) = match ethertype {
            ETHERTYPE_IPV4 => {
                let (p, used) = Ipv4Packet::parse(body)?;
                (Payload::Ipv4(p), used)
            }
            ETHERTYPE_ARP => (Payload::Arp(ArpMessage::parse(body)?), arp::ARP_LEN),
            _ => (
                Payload::Other {
                    ethertype,
                    bytes: body.to_vec(),
                },
                body.len(),
            ),
        };
        Ok(Frame {
            dst_mac,
            src_mac,
            payload,
            trailer: body[used..].to_vec(),
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.dst_mac.0)?;
        w.write_all(&self.src_mac.0)?;
        w.write_all(&self.ethertype().to_be_bytes())?;
        match &self.payload {
            Payload::Ipv4(p) => p.write_to(w)?,
            Payload::Arp(a) => a.write_to(w)?,
            Payload::Other { bytes, .. } => w.write_all(bytes)?,
        }
        w.write_all(&self.trailer)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Serialized length in bytes, computed from the structure.
    pub fn wire_len(&self) -> usize {
        let body = match &self.payload {
            Payload::Ipv4(p) => p.wire_len(),
            Payload::Arp(_) => arp::ARP_LEN,
            Payload::Other { bytes, .. } => bytes.len(),
        };
        ETHERNET_HEADER_LEN + body + self.trailer.len()
    }

    pub fn ipv4(&self) -> Option<&Ipv4Packet> {
        match &self.payload {
            Payload::Ipv4(p) => Some(p),
            _ => None,
        }
    }

    pub fn ipv4_mut(&mut self) -> Option<&mut Ipv4Packet> {
        match &mut self.payload {
            Payload::Ipv4(p) => Some(p),
            _ => None,
        }
    }

    pub fn arp(&self) -> Option<&ArpMessage> {
        match &self.payload {
            Payload::Arp(a) => Some(a),
            _ => None,
        }
    }

    pub fn src_ip(&self) -> Option<Ipv4Addr> {
        self.ipv4().map(|p| p.src)
    }

    pub fn dst_ip(&self) -> Option<Ipv4Addr> {
        self.ipv4().map(|p| p.dst)
    }

    /// (source port, destination port) for TCP and UDP payloads.
    pub fn ports(&self) -> Option<(u16, u16)> {
        match &self.ipv4()?.body {
            Ipv4Body::Tcp(t) => Some((t.src_port, t.dst_port)),
            Ipv4Body::Udp(u) => Some((u.src_port, u.dst_port)),
            Ipv4Body::Other { .. } => None,
        }
    }

    pub fn tcp(&self) -> Option<&TcpSegment> {
        match &self.ipv4()?.body {
            Ipv4Body::Tcp(t) => Some(t),
            _ => None,
        }
    }

    /// Recompute IP header and transport checksums in place.
    pub fn recompute_checksums(&mut self) {
        if let Some(p) = self.ipv4_mut() {
            p.recompute_checksums();
        }
    }

    /// True iff the IP header checksum and the transport checksum both verify.
    /// Frames that are not IPv4 verify vacuously.
    pub fn verify_checksums(&self) -> bool {
        self.ipv4().is_none_or(Ipv4Packet::verify_checksums)
    }

    /// Builds a checksummed IPv4/TCP frame.
    #[allow(clippy::too_many_arguments)]
    pub fn new_tcp(
        dst_mac: MacAddr,
        src_mac: MacAddr,
        src: (Ipv4Addr, u16),
        dst: (Ipv4Addr, u16),
        flags: TcpFlags,
        seq: u32,
        ack: u32,
        payload: Vec<u8>,
    ) -> Frame {
        let seg = TcpSegment::new(src.1, dst.1, seq, ack, flags, payload);
        let mut p = Ipv4Packet::new(src.0, dst.0, 64, Ipv4Body::Tcp(seg));
        p.recompute_checksums();
        Frame::new(dst_mac, src_mac, Payload::Ipv4(p))
    }

    /// Builds a checksummed IPv4/UDP frame.
    pub fn new_udp(
        dst_mac: MacAddr,
        src_mac: MacAddr,
        src: (Ipv4Addr, u16),
        dst: (Ipv4Addr, u16),
        payload: Vec<u8>,
    ) -> Frame {
        let dgram = UdpDatagram::new(src.1, dst.1, payload);
        let mut p = Ipv4Packet::new(src.0, dst.0, 64, Ipv4Body::Udp(dgram));
        p.recompute_checksums();
        Frame::new(dst_mac, src_mac, Payload::Ipv4(p))
    }

    pub fn new_arp(dst_mac: MacAddr, src_mac: MacAddr, msg: ArpMessage) -> Frame {
        Frame::new(dst_mac, src_mac, Payload::Arp(msg))
    }

    /// One-line human readable description used in event traces.
    pub fn summary(&self) -> String {
        match &self.payload {
            Payload::Ipv4(p) => match &p.body {
                Ipv4Body::Tcp(t) => format!(
                    "{} > {} TCP {}:{} > {}:{} [{}] seq={} ack={} len={}",
                    self.src_mac,
                    self.dst_mac,
                    p.src,
                    t.src_port,
                    p.dst,
                    t.dst_port,
                    t.flags,
                    t.seq,
                    t.ack,
                    t.payload.len()
                ),
                Ipv4Body::Udp(u) => format!(
                    "{} > {} UDP {}:{} > {}:{} len={}",
                    self.src_mac,
                    self.dst_mac,
                    p.src,
                    u.src_port,
                    p.dst,
                    u.dst_port,
                    u.payload.len()
                ),
                Ipv4Body::Other { protocol, bytes } => format!(
                    "{} > {} IPv4 {} > {} proto={} len={}",
                    self.src_mac,
                    self.dst_mac,
                    p.src,
                    p.dst,
                    protocol,
                    bytes.len()
                ),
            },
            Payload::Arp(a) => format!("{} > {} {}", self.src_mac, self.dst_mac, a),
            Payload::Other { ethertype, bytes } => format!(
                "{} > {} ethertype=0x{:04x} len={}",
                self.src_mac,
                self.dst_mac,
                ethertype,
                bytes.len()
            ),
        }
    }
}
