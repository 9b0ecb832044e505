use std::fmt;
use std::io::{self, Write};
use std::net::Ipv4Addr;

use super::checksum::{ipv4_checksum, transport_checksum, transport_verifies};
use super::transport::{TcpSegment, UdpDatagram};
use super::{need, FrameError};

/// Fixed header length; IPv4 options are not supported.
pub const IPV4_HEADER_LEN: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IpProtocol {
    Tcp,
    Udp,
    Other(u8),
}

impl IpProtocol {
    pub fn number(self) -> u8 {
        match self {
            IpProtocol::Tcp => 6,
            IpProtocol::Udp => 17,
            IpProtocol::Other(n) => n,
        }
    }

    pub fn from_number(n: u8) -> Self {
        match n {
            6 => IpProtocol::Tcp,
            17 => IpProtocol::Udp,
            n => IpProtocol::Other(n),
        }
    }
}

impl fmt::Display for IpProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IpProtocol::Tcp => f.write_str("tcp"),
            IpProtocol::Udp => f.write_str("udp"),
            IpProtocol::Other(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ipv4Body {
    Tcp(TcpSegment),
    Udp(UdpDatagram),
    Other { protocol: u8, bytes: Vec<u8> },
}

impl Ipv4Body {
    pub fn protocol(&self) -> IpProtocol {
        match self {
            Ipv4Body::Tcp(_) => IpProtocol::Tcp,
            Ipv4Body::Udp(_) => IpProtocol::Udp,
            Ipv4Body::Other { protocol, .. } => IpProtocol::from_number(*protocol),
        }
    }

    fn wire_len(&self) -> usize {
        match self {
            Ipv4Body::Tcp(t) => t.wire_len(),
            Ipv4Body::Udp(u) => u.wire_len(),
            Ipv4Body::Other { bytes, .. } => bytes.len(),
        }
    }

    fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        match self {
            Ipv4Body::Tcp(t) => t.write_to(w),
            Ipv4Body::Udp(u) => u.write_to(w),
            Ipv4Body::Other { bytes, .. } => w.write_all(bytes),
        }
    }
}

/// IPv4 packet with a 20-byte header. Length and checksum fields hold
/// whatever was parsed or last computed; nothing is fixed up on write.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ipv4Packet {
    pub dscp_ecn: u8,
    pub total_len: u16,
    pub identification: u16,
    pub flags_fragment: u16,
    pub ttl: u8,
    pub header_checksum: u16,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub body: Ipv4Body,
}

impl Ipv4Packet {
    /// New packet with consistent `total_len`, don't-fragment set, and a zero checksum.
    pub fn new(src: Ipv4Addr, dst: Ipv4Addr, ttl: u8, body: Ipv4Body) -> Self {
        let total_len = (IPV4_HEADER_LEN + body.wire_len()) as u16;
        Ipv4Packet {
            dscp_ecn: 0,
            total_len,
            identification: 0,
            flags_fragment: 0x4000,
            ttl,
            header_checksum: 0,
            src,
            dst,
            body,
        }
    }

    pub fn protocol(&self) -> IpProtocol {
        self.body.protocol()
    }

    pub(super) fn parse(bytes: &[u8]) -> Result<(Ipv4Packet, usize), FrameError> {
        need("ipv4", bytes, IPV4_HEADER_LEN)?;
        let version = bytes[0] >> 4;
        let ihl = usize::from(bytes[0] & 0x0f) * 4;
        if version != 4 {
            return Err(FrameError::Unsupported(format!("ip version {version}")));
        }
        if ihl != IPV4_HEADER_LEN {
            return Err(FrameError::Unsupported(format!("ipv4 header length {ihl} (options)")));
        }
        let total_len = u16::from_be_bytes([bytes[2], bytes[3]]);
        let total = usize::from(total_len);
        if total < IPV4_HEADER_LEN {
            return Err(FrameError::Unsupported(format!("ipv4 total length {total}")));
        }
        need("ipv4 payload", bytes, total)?;
        let protocol = bytes[9];
        let body_bytes = &bytes[IPV4_HEADER_LEN..total];
        let body = match IpProtocol::from_number(protocol) {
            IpProtocol::Tcp => Ipv4Body::Tcp(TcpSegment::parse(body_bytes)?),
            IpProtocol::Udp => Ipv4Body::Udp(UdpDatagram::parse(body_bytes)?),
            IpProtocol::Other(p) => Ipv4Body::Other {
                protocol: p,
                bytes: body_bytes.to_vec(),
            },
        };
        let packet = Ipv4Packet {
            dscp_ecn: bytes[1],
            total_len,
            identification: u16::from_be_bytes([bytes[4], bytes[5]]),
            flags_fragment: u16::from_be_bytes([bytes[6], bytes[7]]),
            ttl: bytes[8],
            header_checksum: u16::from_be_bytes([bytes[10], bytes[11]]),
            src: Ipv4Addr::from(<[u8; 4]>::try_from(&bytes[12..16]).unwrap()),
            dst: Ipv4Addr::from(<[u8; 4]>::try_from(&bytes[16..20]).unwrap()),
            body,
        };
        Ok((packet, total))
    }

    /// Header bytes with the checksum field as stored.
    pub fn header_bytes(&self) -> [u8; IPV4_HEADER_LEN] {
        let mut h = [0u8; IPV4_HEADER_LEN];
        h[0] = 0x45;
        h[1] = self.dscp_ecn;
        h[2..4].copy_from_slice(&self.total_len.to_be_bytes());
        h[4..6].copy_from_slice(&self.identification.to_be_bytes());
        h[6..8].copy_from_slice(&self.flags_fragment.to_be_bytes());
        h[8] = self.ttl;
        h[9] = self.protocol().number();
        h[10..12].copy_from_slice(&self.header_checksum.to_be_bytes());
        h[12..16].copy_from_slice(&self.src.octets());
        h[16..20].copy_from_slice(&self.dst.octets());
        h
    }

    pub(super) fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.header_bytes())?;
        self.body.write_to(w)
    }

    pub fn wire_len(&self) -> usize {
        IPV4_HEADER_LEN + self.body.wire_len()
    }

    /// Transport segment bytes exactly as they would be written.
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.body.wire_len());
        self.body.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn compute_header_checksum(&self) -> u16 {
        let mut h = self.header_bytes();
        h[10] = 0;
        h[11] = 0;
        ipv4_checksum(&h).expect("ipv4 header is word aligned")
    }

    /// Transport checksum for the current addresses, or `None` for opaque bodies.
    pub fn compute_transport_checksum(&self) -> Option<u16> {
        let seg = match &self.body {
            Ipv4Body::Tcp(t) => t.with_checksum(0).to_bytes(),
            Ipv4Body::Udp(u) => u.with_checksum(0).to_bytes(),
            Ipv4Body::Other { .. } => return None,
        };
        let c = transport_checksum(self.src, self.dst, self.protocol(), &seg);
        // a computed UDP checksum of zero is sent as all ones
        Some(match (&self.body, c) {
            (Ipv4Body::Udp(_), 0) => 0xffff,
            _ => c,
        })
    }

    pub fn recompute_checksums(&mut self) {
        if let Some(c) = self.compute_transport_checksum() {
            match &mut self.body {
                Ipv4Body::Tcp(t) => t.checksum = c,
                Ipv4Body::Udp(u) => u.checksum = c,
                Ipv4Body::Other { .. } => {}
            }
        }
        self.header_checksum = self.compute_header_checksum();
    }

    pub fn header_checksum_valid(&self) -> bool {
        self.header_checksum == self.compute_header_checksum()
    }

    /// UDP checksum 0 means "not computed" and verifies vacuously; TCP always counts.
    pub fn transport_checksum_valid(&self) -> bool {
        match &self.body {
            Ipv4Body::Tcp(t) => {
                transport_verifies(self.src, self.dst, IpProtocol::Tcp, &t.to_bytes())
            }
            Ipv4Body::Udp(u) => {
                u.checksum == 0
                    || transport_verifies(self.src, self.dst, IpProtocol::Udp, &u.to_bytes())
            }
            Ipv4Body::Other { .. } => true,
        }
    }

    pub fn verify_checksums(&self) -> bool {
        self.header_checksum_valid() && self.transport_checksum_valid()
    }
}
