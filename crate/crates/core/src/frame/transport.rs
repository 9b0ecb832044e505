use std::fmt;
use std::io::{self, Write};
use std::ops::{BitOr, BitOrAssign};

use super::{need, FrameError};

pub const TCP_HEADER_LEN: usize = 20;
pub const UDP_HEADER_LEN: usize = 8;

/// The 12 low bits of TCP header bytes 12-13 (reserved bits included so
/// that unusual inputs round-trip).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TcpFlags(pub u16);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x001);
    pub const SYN: TcpFlags = TcpFlags(0x002);
    pub const RST: TcpFlags = TcpFlags(0x004);
    pub const PSH: TcpFlags = TcpFlags(0x008);
    pub const ACK: TcpFlags = TcpFlags(0x010);
    pub const URG: TcpFlags = TcpFlags(0x020);

    pub fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }
}

impl BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: Self) -> Self {
        TcpFlags(self.0 | rhs.0)
    }
}

impl BitOrAssign for TcpFlags {
    fn bitor_assign(&mut self, rhs: Self) {
        self.0 |= rhs.0;
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [(TcpFlags, char); 5] = [
            (TcpFlags::SYN, 'S'),
            (TcpFlags::FIN, 'F'),
            (TcpFlags::RST, 'R'),
            (TcpFlags::PSH, 'P'),
            (TcpFlags::URG, 'U'),
        ];
        for (flag, c) in NAMES {
            if self.contains(flag) {
                write!(f, "{c}")?;
            }
        }
        if self.contains(TcpFlags::ACK) {
            f.write_str(".")?;
        }
        Ok(())
    }
}

impl fmt::Debug for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TcpFlags({self})")
    }
}

/// TCP segment. Options are carried as raw bytes and not interpreted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TcpSegment {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: TcpFlags,
    pub window: u16,
    pub checksum: u16,
    pub urgent: u16,
    pub options: Vec<u8>,
    pub payload: Vec<u8>,
}

impl TcpSegment {
    pub fn new(src_port: u16, dst_port: u16, seq: u32, ack: u32, flags: TcpFlags, payload: Vec<u8>) -> Self {
        TcpSegment {
            src_port,
            dst_port,
            seq,
            ack,
            flags,
            window: 65535,
            checksum: 0,
            urgent: 0,
            options: Vec::new(),
            payload,
        }
    }

    pub(super) fn parse(b: &[u8]) -> Result<Self, FrameError> {
        need("tcp", b, TCP_HEADER_LEN)?;
        let data_offset = usize::from(b[12] >> 4) * 4;
        if data_offset < TCP_HEADER_LEN {
            return Err(FrameError::Unsupported(format!("tcp data offset {data_offset}")));
        }
        need("tcp options", b, data_offset)?;
        Ok(TcpSegment {
            src_port: u16::from_be_bytes([b[0], b[1]]),
            dst_port: u16::from_be_bytes([b[2], b[3]]),
            seq: u32::from_be_bytes([b[4], b[5], b[6], b[7]]),
            ack: u32::from_be_bytes([b[8], b[9], b[10], b[11]]),
            flags: TcpFlags(u16::from_be_bytes([b[12], b[13]]) & 0x0fff),
            window: u16::from_be_bytes([b[14], b[15]]),
            checksum: u16::from_be_bytes([b[16], b[17]]),
            urgent: u16::from_be_bytes([b[18], b[19]]),
            options: b[TCP_HEADER_LEN..data_offset].to_vec(),
            payload: b[data_offset..].to_vec(),
        })
    }

    pub fn header_len(&self) -> usize {
        TCP_HEADER_LEN + self.options.len()
    }

    pub fn wire_len(&self) -> usize {
        self.header_len() + self.payload.len()
    }

    pub(super) fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        debug_assert!(self.options.len().is_multiple_of(4) && self.header_len() <= 60);
        let offset_flags = ((self.header_len() as u16 / 4) << 12) | (self.flags.0 & 0x0fff);
        w.write_all(&self.src_port.to_be_bytes())?;
        w.write_all(&self.dst_port.to_be_bytes())?;
        w.write_all(&self.seq.to_be_bytes())?;
        w.write_all(&self.ack.to_be_bytes())?;
        w.write_all(&offset_flags.to_be_bytes())?;
        w.write_all(&self.window.to_be_bytes())?;
        w.write_all(&self.checksum.to_be_bytes())?;
        w.write_all(&self.urgent.to_be_bytes())?;
        w.write_all(&self.options)?;
        w.write_all(&self.payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.wire_len());
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub(super) fn with_checksum(&self, checksum: u16) -> Self {
        TcpSegment { checksum, ..self.clone() }
    }
}

/// UDP datagram. `length` is kept as parsed; [`UdpDatagram::new`] sets it
/// from the payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UdpDatagram {
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u16,
    pub checksum: u16,
    pub payload: Vec<u8>,
}

impl UdpDatagram {
    pub fn new(src_port: u16, dst_port: u16, payload: Vec<u8>) -> Self {
        UdpDatagram {
            src_port,
            dst_port,
            length: (UDP_HEADER_LEN + payload.len()) as u16,
            checksum: 0,
            payload,
        }
    }

    pub(super) fn parse(b: &[u8]) -> Result<Self, FrameError> {
        need("udp", b, UDP_HEADER_LEN)?;
        Ok(UdpDatagram {
            src_port: u16::from_be_bytes([b[0], b[1]]),
            dst_port: u16::from_be_bytes([b[2], b[3]]),
            length: u16::from_be_bytes([b[4], b[5]]),
            checksum: u16::from_be_bytes([b[6], b[7]]),
            payload: b[UDP_HEADER_LEN..].to_vec(),
        })
    }

    pub fn wire_len(&self) -> usize {
        UDP_HEADER_LEN + self.payload.len()
    }

    pub(super) fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.src_port.to_be_bytes())?;
        w.write_all(&self.dst_port.to_be_bytes())?;
        w.write_all(&self.length.to_be_bytes())?;
        w.write_all(&self.checksum.to_be_bytes())?;
        w.write_all(&self.payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.wire_len());
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub(super) fn with_checksum(&self, checksum: u16) -> Self {
        UdpDatagram { checksum, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tcp_options_kept_raw() {
        let mut seg = TcpSegment::new(1, 2, 3, 4, TcpFlags::SYN, vec![0xaa]);
        seg.options = vec![2, 4, 5, 0xb4];
        let b = seg.to_bytes();
        assert_eq!(b[12] >> 4, 6);
        assert_eq!(TcpSegment::parse(&b).unwrap(), seg);
    }

    #[test]
    fn bad_data_offset() {
        let mut b = TcpSegment::new(1, 2, 3, 4, TcpFlags::ACK, vec![]).to_bytes();
        b[12] = 0x40;
        assert!(matches!(TcpSegment::parse(&b), Err(FrameError::Unsupported(_))));
        b[12] = 0xf0;
        assert!(matches!(TcpSegment::parse(&b), Err(FrameError::Truncated { .. })));
    }

    #[test]
    fn flag_display() {
        assert_eq!((TcpFlags::SYN | TcpFlags::ACK).to_string(), "S.");
        assert_eq!(TcpFlags::FIN.to_string(), "F");
    }
}
