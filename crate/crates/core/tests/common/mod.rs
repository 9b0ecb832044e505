#![allow(dead_code)]

pub mod bond;

use std::net::Ipv4Addr;
use std::sync::OnceLock;

use rand::Rng;
use vlcwifi::engine::{Mode, ScenarioConfig, Topology};
use vlcwifi::frame::{
    ArpMessage, ArpOp, Frame, Ipv4Body, Ipv4Packet, MacAddr, Payload, TcpFlags, TcpSegment, UdpDatagram,
};
use vlcwifi::relay::RelayConfig;
use vlcwifi::spoof::SpoofConfig;

/// Ones'-complement sum written from scratch: bytes are paired by index,
/// accumulated in a u64 and folded once at the end.
pub fn oracle_checksum(data: &[u8]) -> u16 {
    let mut sum: u64 = 0;
    for (i, &b) in data.iter().enumerate() {
        sum += if i % 2 == 0 { u64::from(b) << 8 } else { u64::from(b) };
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

pub fn oracle_ip_checksum(p: &Ipv4Packet) -> u16 {
    let mut h = p.header_bytes();
    h[10] = 0;
    h[11] = 0;
    oracle_checksum(&h)
}

/// Transport checksum via an explicit pseudo-header buffer.
pub fn oracle_transport_checksum(p: &Ipv4Packet) -> Option<u16> {
    let (proto, mut seg) = match &p.body {
        Ipv4Body::Tcp(_) => (6u8, p.body_bytes()),
        Ipv4Body::Udp(_) => (17u8, p.body_bytes()),
        Ipv4Body::Other { .. } => return None,
    };
    let at = if proto == 6 { 16 } else { 6 };
    seg[at] = 0;
    seg[at + 1] = 0;
    let mut buf = Vec::with_capacity(12 + seg.len());
    buf.extend_from_slice(&p.src.octets());
    buf.extend_from_slice(&p.dst.octets());
    buf.push(0);
    buf.push(proto);
    buf.extend_from_slice(&(seg.len() as u16).to_be_bytes());
    buf.extend_from_slice(&seg);
    let c = oracle_checksum(&buf);
    Some(if proto == 17 && c == 0 { 0xffff } else { c })
}

pub fn random_mac<R: Rng>(rng: &mut R) -> MacAddr {
    MacAddr(rng.random())
}

pub fn random_ip<R: Rng>(rng: &mut R) -> Ipv4Addr {
    Ipv4Addr::from(rng.random::<u32>())
}

fn bytes<R: Rng>(rng: &mut R, max: usize) -> Vec<u8> {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| rng.random()).collect()
}

/// A well-formed frame with random contents. Checksums are valid about
/// half the time and arbitrary otherwise.
pub fn random_frame<R: Rng>(rng: &mut R) -> Frame {
    let dst = random_mac(rng);
    let src = random_mac(rng);
    let kind = rng.random_range(0..20);
    if kind == 0 {
        let op = if rng.random() { ArpOp::Request } else { ArpOp::Response };
        let msg = ArpMessage {
            op,
            sender_mac: random_mac(rng),
            sender_ip: random_ip(rng),
            target_mac: random_mac(rng),
            target_ip: random_ip(rng),
        };
        let mut f = Frame::new_arp(dst, src, msg);
        f.trailer = vec![0; rng.random_range(0..=18)];
        return f;
    }
    let body = match kind {
        1 => Ipv4Body::Other { protocol: rng.random_range(18..=255), bytes: bytes(rng, 200) },
        2..=7 => {
            let mut u = UdpDatagram::new(rng.random(), rng.random(), bytes(rng, 1472));
            u.checksum = rng.random();
            Ipv4Body::Udp(u)
        }
        _ => {
            let mut t = TcpSegment::new(
                rng.random(),
                rng.random(),
                rng.random(),
                rng.random(),
                TcpFlags(rng.random::<u16>() & 0x0fff),
                bytes(rng, 1460),
            );
            t.window = rng.random();
            t.urgent = rng.random();
            t.checksum = rng.random();
            t.options = (0..4 * rng.random_range(0..=10)).map(|_| rng.random()).collect();
            Ipv4Body::Tcp(t)
        }
    };
    let mut p = Ipv4Packet::new(random_ip(rng), random_ip(rng), rng.random(), body);
    p.dscp_ecn = rng.random();
    p.identification = rng.random();
    p.flags_fragment = rng.random();
    p.header_checksum = rng.random();
    if rng.random() {
        p.recompute_checksums();
    }
    let mut f = Frame::new(dst, src, Payload::Ipv4(p));
    if rng.random_range(0..4) == 0 {
        f.trailer = bytes(rng, 16);
    }
    f
}

pub fn hybrid_topology() -> &'static Topology {
    static TOPO: OnceLock<Topology> = OnceLock::new();
    TOPO.get_or_init(|| {
        Topology::from_config(&ScenarioConfig { mode: Mode::Hybrid, ..ScenarioConfig::default() }).unwrap()
    })
}

pub fn relay_config() -> RelayConfig {
    hybrid_topology().relay.clone().unwrap()
}

pub fn spoof_config() -> SpoofConfig {
    hybrid_topology().spoof.clone().unwrap()
}
