use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::frame::MacAddr;

/// A NIC role on a host: label, hardware address, and IPv4 address/mask.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InterfaceIdentity {
    pub name: String,
    pub mac: MacAddr,
    pub ip: Ipv4Addr,
    pub subnet_mask: Ipv4Addr,
}

impl InterfaceIdentity {
    pub fn new(name: impl Into<String>, mac: MacAddr, ip: Ipv4Addr, prefix_len: u8) -> Self {
        InterfaceIdentity {
            name: name.into(),
            mac,
            ip,
            subnet_mask: prefix_mask(prefix_len),
        }
    }

    pub fn network(&self) -> Ipv4Addr {
        mask_addr(self.ip, self.subnet_mask)
    }

    /// Whether `ip` falls in this interface's subnet.
    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        mask_addr(ip, self.subnet_mask) == self.network()
    }

    pub fn prefix_len(&self) -> u32 {
        u32::from(self.subnet_mask).leading_ones()
    }
}

impl fmt::Display for InterfaceIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}/{} {}", self.name, self.ip, self.prefix_len(), self.mac)
    }
}

pub fn prefix_mask(prefix_len: u8) -> Ipv4Addr {
    let bits = match prefix_len {
        0 => 0,
        n => u32::MAX << (32 - u32::from(n.min(32))),
    };
    Ipv4Addr::from(bits)
}

pub fn mask_addr(ip: Ipv4Addr, mask: Ipv4Addr) -> Ipv4Addr {
    Ipv4Addr::from(u32::from(ip) & u32::from(mask))
}

/// True for masks of the form 1...10...0.
pub fn is_contiguous_mask(mask: Ipv4Addr) -> bool {
    let m = u32::from(mask);
    m.leading_ones() + m.trailing_zeros() == 32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subnet_membership() {
        let b2 = InterfaceIdentity::new("B-2", MacAddr::ZERO, Ipv4Addr::new(192, 168, 2, 100), 24);
        assert!(b2.contains(Ipv4Addr::new(192, 168, 2, 1)));
        assert!(!b2.contains(Ipv4Addr::new(192, 168, 1, 1)));
        assert_eq!(b2.prefix_len(), 24);
        assert_eq!(prefix_mask(0), Ipv4Addr::UNSPECIFIED);
        assert_eq!(prefix_mask(32), Ipv4Addr::BROADCAST);
        assert!(is_contiguous_mask(prefix_mask(17)));
        assert!(!is_contiguous_mask(Ipv4Addr::new(255, 0, 255, 0)));
    }
}
