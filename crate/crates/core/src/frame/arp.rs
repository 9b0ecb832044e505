use std::fmt;
use std::io::{self, Write};
use std::net::Ipv4Addr;

use super::{need, FrameError, MacAddr};

pub(super) const ARP_LEN: usize = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArpOp {
    Request,
    Response,
}

/// Ethernet/IPv4 ARP message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ArpMessage {
    pub op: ArpOp,
    pub sender_mac: MacAddr,
    pub sender_ip: Ipv4Addr,
    pub target_mac: MacAddr,
    pub target_ip: Ipv4Addr,
}

impl ArpMessage {
    /// "Who has `target_ip`?" with a zero target MAC.
    pub fn request(sender_mac: MacAddr, sender_ip: Ipv4Addr, target_ip: Ipv4Addr) -> Self {
        ArpMessage {
            op: ArpOp::Request,
            sender_mac,
            sender_ip,
            target_mac: MacAddr::ZERO,
            target_ip,
        }
    }

    pub fn response(
        sender_mac: MacAddr,
        sender_ip: Ipv4Addr,
        target_mac: MacAddr,
        target_ip: Ipv4Addr,
    ) -> Self {
        ArpMessage {
            op: ArpOp::Response,
            sender_mac,
            sender_ip,
            target_mac,
            target_ip,
        }
    }

    pub(super) fn parse(b: &[u8]) -> Result<Self, FrameError> {
        need("arp", b, ARP_LEN)?;
        let htype = u16::from_be_bytes([b[0], b[1]]);
        let ptype = u16::from_be_bytes([b[2], b[3]]);
        if htype != 1 || ptype != 0x0800 || b[4] != 6 || b[5] != 4 {
            return Err(FrameError::Unsupported(format!(
                "arp htype={htype} ptype=0x{ptype:04x} hlen={} plen={}",
                b[4], b[5]
            )));
        }
        let op = match u16::from_be_bytes([b[6], b[7]]) {
            1 => ArpOp::Request,
            2 => ArpOp::Response,
            other => return Err(FrameError::Unsupported(format!("arp opcode {other}"))),
        };
        Ok(ArpMessage {
            op,
            sender_mac: MacAddr(b[8..14].try_into().unwrap()),
            sender_ip: Ipv4Addr::from(<[u8; 4]>::try_from(&b[14..18]).unwrap()),
            target_mac: MacAddr(b[18..24].try_into().unwrap()),
            target_ip: Ipv4Addr::from(<[u8; 4]>::try_from(&b[24..28]).unwrap()),
        })
    }

    pub(super) fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let op: u16 = match self.op {
            ArpOp::Request => 1,
            ArpOp::Response => 2,
        };
        w.write_all(&[0, 1, 0x08, 0x00, 6, 4])?;
        w.write_all(&op.to_be_bytes())?;
        w.write_all(&self.sender_mac.0)?;
        w.write_all(&self.sender_ip.octets())?;
        w.write_all(&self.target_mac.0)?;
        w.write_all(&self.target_ip.octets())
    }
}

impl fmt::Display for ArpMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            ArpOp::Request => write!(f, "ARP who-has {} tell {} ({})", self.target_ip, self.sender_ip, self.sender_mac),
            ArpOp::Response => write!(f, "ARP {} is-at {}", self.sender_ip, self.sender_mac),
        }
    }
}
