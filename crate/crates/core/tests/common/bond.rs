//! Randomized operation sequences for the ALB bond and the properties
//! checked over them.

use std::net::Ipv4Addr;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use vlcwifi::bond::{BondError, BondInterface};
use vlcwifi::frame::{ArpMessage, MacAddr};
use vlcwifi::iface::InterfaceIdentity;

pub const BOND_IP: Ipv4Addr = Ipv4Addr::new(192, 168, 1, 100);

pub fn peer_ip(i: u8) -> Ipv4Addr {
    Ipv4Addr::new(192, 168, 1, 10 + i)
}

pub fn peer_mac(i: u8) -> MacAddr {
    MacAddr::new(2, 0, 0, 0, 0xee, i)
}

pub fn bond(capacities: &[f64]) -> BondInterface {
    let slaves = capacities
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let id = InterfaceIdentity::new(format!("s{i}"), MacAddr::new(2, 0, 0, 0, 0xc0, i as u8), BOND_IP, 24);
            (id, c)
        })
        .collect();
    BondInterface::new("bond0", BOND_IP, MacAddr::new(2, 0, 0, 0, 0xc0, 0), slaves).unwrap()
}

/// The host's own ARP answer to `peer`, before the bond rewrites it.
pub fn answer(b: &BondInterface, peer: u8) -> ArpMessage {
    ArpMessage::response(b.logical_mac(), BOND_IP, peer_mac(peer), peer_ip(peer))
}

#[derive(Clone, Debug)]
pub enum Op {
    Arp { peer: u8, load: f64 },
    Observe { peer: u8, mbps: f64 },
    Capacity { slave: usize, mbps: f64 },
    Link { slave: usize, up: bool },
    Rebalance,
}

pub fn capacities() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..200.0, 2..=4)
}

pub fn ops() -> impl Strategy<Value = Vec<Op>> {
    let op = prop_oneof![
        4 => (0u8..12, 0.0f64..120.0).prop_map(|(peer, load)| Op::Arp { peer, load }),
        2 => (0u8..12, 0.0f64..150.0).prop_map(|(peer, mbps)| Op::Observe { peer, mbps }),
        1 => (0usize..4, 0.5f64..200.0).prop_map(|(slave, mbps)| Op::Capacity { slave, mbps }),
        2 => (0usize..4, any::<bool>()).prop_map(|(slave, up)| Op::Link { slave, up }),
        1 => Just(Op::Rebalance),
    ];
    prop::collection::vec(op, 1..40)
}

fn up_count(b: &BondInterface) -> usize {
    b.slaves().iter().filter(|s| s.up).count()
}

/// Applies one op. Only the all-slaves-down refusal may fail.
pub fn apply(b: &mut BondInterface, op: &Op) -> Result<(), TestCaseError> {
    let n = b.slaves().len();
    match *op {
        Op::Arp { peer, load } => {
            let msg = answer(b, peer);
            match b.intercept_arp_response(&msg, load) {
                Ok(out) => {
                    let s = b.slave_for_mac(out.sender_mac).expect("rewritten to a slave MAC");
                    prop_assert!(b.slaves()[s].up);
                    prop_assert_eq!(out.target_ip, msg.target_ip);
                    prop_assert_eq!(out.target_mac, msg.target_mac);
                    prop_assert_eq!(out.sender_ip, BOND_IP);
                }
                Err(BondError::AllSlavesDown) => prop_assert_eq!(up_count(b), 0),
                Err(e) => return Err(TestCaseError::fail(format!("unexpected {e}"))),
            }
        }
        Op::Observe { peer, mbps } => b.observe_peer_load(peer_ip(peer), mbps),
        Op::Capacity { slave, mbps } => b.set_capacity_estimate(slave % n, mbps).unwrap(),
        Op::Link { slave, up } => {
            b.set_slave_up(slave % n, up).unwrap();
        }
        Op::Rebalance => {
            b.rebalance();
        }
    }
    Ok(())
}

/// Every peer the bond has answered sits on an up slave while any slave is
/// up, and per-slave loads equal the sum of their peers' loads.
pub fn totality(caps: Vec<f64>, ops: Vec<Op>) -> Result<(), TestCaseError> {
    let mut b = bond(&caps);
    let mut answered = std::collections::BTreeSet::new();
    for op in &ops {
        apply(&mut b, op)?;
        if let Op::Arp { peer, .. } = op {
            if up_count(&b) > 0 {
                answered.insert(peer_ip(*peer));
            }
        }
        b.check_invariants().map_err(TestCaseError::fail)?;
        if up_count(&b) > 0 {
            for p in &answered {
                let a = b.peer_assignment(*p);
                prop_assert!(a.is_some(), "{} unassigned", p);
                prop_assert!(b.slaves()[a.unwrap().slave].up);
            }
        }
    }
    Ok(())
}

/// Rebalancing moves peers but never creates, drops or resizes them.
pub fn conservation(caps: Vec<f64>, ops: Vec<Op>) -> Result<(), TestCaseError> {
    let mut b = bond(&caps);
    for op in &ops {
        apply(&mut b, op)?;
        let before: Vec<(Ipv4Addr, f64)> = b.peer_assignments().iter().map(|(ip, a)| (*ip, a.load)).collect();
        let total = b.total_assigned_load();
        let msgs = b.rebalance();
        let after: Vec<(Ipv4Addr, f64)> = b.peer_assignments().iter().map(|(ip, a)| (*ip, a.load)).collect();
        prop_assert_eq!(&before, &after);
        prop_assert!((b.total_assigned_load() - total).abs() <= 1e-6 * (1.0 + total));
        prop_assert!(msgs.len() <= before.len());
        for m in &msgs {
            let s = b.slave_for_mac(m.sender_mac).expect("update carries a slave MAC");
            prop_assert_eq!(b.peer_assignment(m.target_ip).map(|a| a.slave), Some(s));
        }
    }
    Ok(())
}

fn argmax(caps: &[f64]) -> usize {
    (0..caps.len()).max_by(|&a, &b| caps[a].total_cmp(&caps[b]).then(b.cmp(&a))).unwrap()
}

/// A first peer that fits lands on the widest slave, and scaling every
/// capacity (and the load) by the same positive factor doesn't change that.
pub fn widest_first(caps: Vec<f64>, frac: f64, scale: f64) -> Result<(), TestCaseError> {
    let widest = argmax(&caps);
    let load = frac * caps[widest];
    let mut b = bond(&caps);
    let out = b.intercept_arp_response(&answer(&b, 0), load).unwrap();
    prop_assert_eq!(b.slave_for_mac(out.sender_mac), Some(widest));
    let scaled: Vec<f64> = caps.iter().map(|c| c * scale).collect();
    prop_assert_eq!(argmax(&scaled), widest);
    let mut b = bond(&scaled);
    let out = b.intercept_arp_response(&answer(&b, 0), load * scale).unwrap();
    prop_assert_eq!(b.slave_for_mac(out.sender_mac), Some(widest));
    Ok(())
}

/// After a slave goes down with another still up, nothing is left on it and
/// every displaced peer is told about its new slave.
pub fn failover_empties(caps: Vec<f64>, ops: Vec<Op>, victim: usize) -> Result<(), TestCaseError> {
    let mut b = bond(&caps);
    for op in &ops {
        apply(&mut b, op)?;
    }
    let victim = victim % caps.len();
    for i in 0..caps.len() {
        if i != victim {
            b.set_slave_up(i, true).unwrap();
        }
    }
    let displaced: Vec<Ipv4Addr> =
        b.peer_assignments().iter().filter(|(_, a)| a.slave == victim).map(|(ip, _)| *ip).collect();
    let msgs = b.set_slave_up(victim, false).unwrap();
    prop_assert!(b.peer_assignments().values().all(|a| a.slave != victim));
    prop_assert!(b.slaves()[victim].assigned_rx_load.abs() < 1e-9);
    for p in displaced {
        prop_assert!(msgs.iter().any(|m| m.target_ip == p), "no update for {}", p);
    }
    for m in &msgs {
        let s = b.slave_for_mac(m.sender_mac).unwrap();
        prop_assert!(s != victim && b.slaves()[s].up);
    }
    Ok(())
}
