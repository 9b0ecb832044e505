//! Internet checksum (RFC 1071) over IPv4 headers and TCP/UDP segments.

use std::net::Ipv4Addr;

use super::{FrameError, IpProtocol};

/// Running ones'-complement sum of big-endian 16-bit words.
///
/// Words are accumulated into a wide register and folded once at the end.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Checksum {
    sum: u64,
    // a dangling high byte from an odd-length slice, waiting for its partner
    pending: Option<u8>,
}

impl Checksum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_u16(mut self, word: u16) -> Self {
        self = self.flush_pending();
        self.sum += u64::from(word);
        self
    }

    pub fn add_bytes(mut self, mut bytes: &[u8]) -> Self {
        if let Some(hi) = self.pending.take() {
            match bytes.split_first() {
                Some((lo, rest)) => {
                    self.sum += u64::from(u16::from_be_bytes([hi, *lo]));
                    bytes = rest;
                }
                None => {
                    self.pending = Some(hi);
                    return self;
                }
            }
        }
        let mut chunks = bytes.chunks_exact(4);
        for c in &mut chunks {
            self.sum += u64::from(u32::from_be_bytes([c[0], c[1], c[2], c[3]]));
        }
        let mut rest = chunks.remainder();
        if rest.len() >= 2 {
            self.sum += u64::from(u16::from_be_bytes([rest[0], rest[1]]));
            rest = &rest[2..];
        }
        if let Some(&b) = rest.first() {
            self.pending = Some(b);
        }
        self
    }

    fn flush_pending(mut self) -> Self {
        if let Some(hi) = self.pending.take() {
            self.sum += u64::from(u16::from_be_bytes([hi, 0]));
        }
        self
    }

    /// Folded ones'-complement sum (not complemented).
    pub fn sum(self) -> u16 {
        let mut s = self.flush_pending().sum;
        while s > 0xffff {
            s = (s & 0xffff) + (s >> 16);
        }
        s as u16
    }

    /// Complement of the folded sum: the value written into a checksum field.
    pub fn finish(self) -> u16 {
        !self.sum()
    }
}

/// Header checksum of an IPv4 header whose checksum field is zeroed.
pub fn ipv4_checksum(header: &[u8]) -> Result<u16, FrameError> {
    if !header.len().is_multiple_of(2) {
        return Err(FrameError::OddLength(header.len()));
    }
    Ok(Checksum::new().add_bytes(header).finish())
}

fn pseudo_header(src: Ipv4Addr, dst: Ipv4Addr, protocol: IpProtocol, len: usize) -> Checksum {
    Checksum::new()
        .add_bytes(&src.octets())
        .add_bytes(&dst.octets())
        .add_u16(u16::from(protocol.number()))
        .add_u16(len as u16)
}

/// TCP/UDP checksum over the pseudo-header plus `segment` (checksum field zeroed).
/// An odd trailing byte is padded with zero.
pub fn transport_checksum(
    src: Ipv4Addr,
    dst: Ipv4Addr,
    protocol: IpProtocol,
    segment: &[u8],
) -> u16 {
    pseudo_header(src, dst, protocol, segment.len())
        .add_bytes(segment)
        .finish()
}

/// True when `segment`, with its checksum field as transmitted, sums to 0xffff.
pub(crate) fn transport_verifies(
    src: Ipv4Addr,
    dst: Ipv4Addr,
    protocol: IpProtocol,
    segment: &[u8],
) -> bool {
    pseudo_header(src, dst, protocol, segment.len())
        .add_bytes(segment)
        .sum()
        == 0xffff
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_header() {
        assert_eq!(ipv4_checksum(&[0u8; 20]).unwrap(), 0xffff);
    }

    #[test]
    fn all_ones_sum_complements_to_zero() {
        let mut h = [0u8; 20];
        h[0] = 0xff;
        h[1] = 0xff;
        assert_eq!(ipv4_checksum(&h).unwrap(), 0x0000);
        // 0x8000 + 0x7fff also folds to 0xffff
        let mut h = [0u8; 20];
        h[2] = 0x80;
        h[4] = 0x7f;
        h[5] = 0xff;
        assert_eq!(ipv4_checksum(&h).unwrap(), 0x0000);
    }

    #[test]
    fn odd_length_rejected() {
        assert!(matches!(ipv4_checksum(&[0u8; 19]), Err(FrameError::OddLength(19))));
    }

    #[test]
    fn rfc1071_example() {
        // 0001 f203 f4f5 f6f7 -> sum ddf2, checksum 220d
        let data = [0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7];
        assert_eq!(Checksum::new().add_bytes(&data).sum(), 0xddf2);
        assert_eq!(Checksum::new().add_bytes(&data).finish(), 0x220d);
    }

    #[test]
    fn split_slices_match_contiguous() {
        let data: Vec<u8> = (0u8..=40).collect();
        let whole = Checksum::new().add_bytes(&data).finish();
        for cut in 0..data.len() {
            let (a, b) = data.split_at(cut);
            assert_eq!(Checksum::new().add_bytes(a).add_bytes(b).finish(), whole, "cut {cut}");
        }
    }

    #[test]
    fn known_ipv4_header() {
        // classic example header 4500 0073 0000 4000 4011 b861 c0a8 0001 c0a8 00c7
        let mut h = [
            0x45, 0x00, 0x00, 0x73, 0x00, 0x00, 0x40, 0x00, 0x40, 0x11, 0x00, 0x00, 0xc0, 0xa8,
            0x00, 0x01, 0xc0, 0xa8, 0x00, 0xc7,
        ];
        assert_eq!(ipv4_checksum(&h).unwrap(), 0xb861);
        h[10] = 0xb8;
        h[11] = 0x61;
        assert_eq!(Checksum::new().add_bytes(&h).sum(), 0xffff);
    }
}
