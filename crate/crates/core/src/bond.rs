//! Adaptive load balancing (bonding mode 6) over a WiFi and a VLC slave.
//!
//! Of the seven Linux bonding modes, balance-rr, balance-xor and 802.3ad
//! need switch cooperation, active-backup never uses more than one slave,
//! and broadcast duplicates every frame. Only mode 6 aggregates bandwidth
//! without touching the peer, so it is the only mode implemented here.
//!
//! Transmit balancing picks a slave per frame. Receive balancing works by
//! answering ARP on behalf of the logical interface with a chosen slave's
//! MAC, so each peer sends its traffic to that slave. Peers never learn any
//! address other than the bond's single IP.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{ArpMessage, ArpOp, Frame, MacAddr};
use crate::iface::InterfaceIdentity;

/// Smoothing weight for peer load estimates, applied once per
/// [`LOAD_TICK_S`] of simulated time.
pub const LOAD_SMOOTHING: f64 = 0.5;
pub const LOAD_TICK_S: f64 = 0.1;

const EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BondError {
    #[error("all slaves are down")]
    AllSlavesDown,
    #[error("bond has no slaves")]
    NoSlaves,
    #[error("expected an ARP response")]
    NotAResponse,
    #[error("ARP sender {0} is not the bond address")]
    ForeignSender(Ipv4Addr),
    #[error("no slave with index {0}")]
    NoSuchSlave(usize),
    #[error("bonding mode {0}: {1}")]
    UnsupportedMode(String, &'static str),
    #[error("slave {0}: {1}")]
    BadSlave(String, String),
}

/// The seven Linux bonding modes, by their usual labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BondMode {
    BalanceRr,
    ActiveBackup,
    BalanceXor,
    Broadcast,
    Ieee8023ad,
    BalanceTlb,
    AdaptiveLoadBalancing,
}

impl FromStr for BondMode {
    type Err = BondError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "0" | "balance-rr" => BondMode::BalanceRr,
            "1" | "active-backup" => BondMode::ActiveBackup,
            "2" | "balance-xor" => BondMode::BalanceXor,
            "3" | "broadcast" => BondMode::Broadcast,
            "4" | "802.3ad" => BondMode::Ieee8023ad,
            "5" | "balance-tlb" => BondMode::BalanceTlb,
            "6" | "balance-alb" | "adaptive-load-balancing" => BondMode::AdaptiveLoadBalancing,
            _ => return Err(BondError::UnsupportedMode(s.into(), "unknown mode")),
        })
    }
}

impl fmt::Display for BondMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BondMode::BalanceRr => "balance-rr",
            BondMode::ActiveBackup => "active-backup",
            BondMode::BalanceXor => "balance-xor",
            BondMode::Broadcast => "broadcast",
            BondMode::Ieee8023ad => "802.3ad",
            BondMode::BalanceTlb => "balance-tlb",
            BondMode::AdaptiveLoadBalancing => "adaptive-load-balancing",
        })
    }
}

impl BondMode {
    pub fn ensure_supported(self) -> Result<(), BondError> {
        let why = match self {
            BondMode::AdaptiveLoadBalancing => return Ok(()),
            BondMode::BalanceRr | BondMode::BalanceXor | BondMode::Ieee8023ad => "requires switch support",
            BondMode::ActiveBackup => "uses a single active slave",
            BondMode::Broadcast => "duplicates every frame on all slaves",
            BondMode::BalanceTlb => "does not balance receive traffic",
        };
        Err(BondError::UnsupportedMode(self.to_string(), why))
    }
}

/// Bond section of a scenario file: mode label plus ordered slave names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BondConfig {
    pub mode: String,
    pub slaves: Vec<String>,
}

impl Default for BondConfig {
    fn default() -> Self {
        BondConfig {
            mode: "adaptive-load-balancing".into(),
            slaves: vec!["C-1".into(), "C-2".into()],
        }
    }
}

impl BondConfig {
    pub fn validate(&self) -> Result<(), BondError> {
        self.mode.parse::<BondMode>()?.ensure_supported()?;
        if self.slaves.is_empty() {
            return Err(BondError::NoSlaves);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlaveState {
    pub iface: InterfaceIdentity,
    /// Mbps
    pub capacity_estimate: f64,
    /// Mbps of receive load steered here via ARP.
    pub assigned_rx_load: f64,
    /// Transmit load in the current window, Mb.
    pub tx_load: f64,
    pub up: bool,
}

impl SlaveState {
    fn utilization_with(&self, load: f64) -> f64 {
        if self.capacity_estimate <= 0.0 {
            f64::INFINITY
        } else {
            load / self.capacity_estimate
        }
    }

    pub fn rx_utilization(&self) -> f64 {
        self.utilization_with(self.assigned_rx_load)
    }

    /// Assigned receive load has reached the estimated capacity.
    pub fn is_exhausted(&self) -> bool {
        self.assigned_rx_load >= self.capacity_estimate
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeerAssignment {
    pub slave: usize,
    /// Estimated receive load from this peer, Mbps.
    pub load: f64,
    /// The peer learned the bond's logical MAC rather than one handed out
    /// by receive balancing.
    pub mislearned: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BondInterface {
    name: String,
    logical_ip: Ipv4Addr,
    logical_mac: MacAddr,
    slaves: Vec<SlaveState>,
    peer_assignments: BTreeMap<Ipv4Addr, PeerAssignment>,
    /// Peers this host has asked for, with their MAC once a reply arrived.
    saved_peers: BTreeMap<Ipv4Addr, Option<MacAddr>>,
}

impl BondInterface {
    /// Slaves are given in declaration order with their initial capacity
    /// estimates. All start up.
    pub fn new(
        name: impl Into<String>,
        logical_ip: Ipv4Addr,
        logical_mac: MacAddr,
        slaves: Vec<(InterfaceIdentity, f64)>,
    ) -> Result<Self, BondError> {
        if slaves.is_empty() {
            return Err(BondError::NoSlaves);
        }
        let slaves = slaves
            .into_iter()
            .map(|(iface, cap)| {
                if !(cap.is_finite() && cap >= 0.0) {
                    return Err(BondError::BadSlave(iface.name.clone(), format!("capacity {cap}")));
                }
                Ok(SlaveState {
                    iface,
                    capacity_estimate: cap,
                    assigned_rx_load: 0.0,
                    tx_load: 0.0,
                    up: true,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BondInterface {
            name: name.into(),
            logical_ip,
            logical_mac,
            slaves,
            peer_assignments: BTreeMap::new(),
            saved_peers: BTreeMap::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn logical_ip(&self) -> Ipv4Addr {
        self.logical_ip
    }

    pub fn logical_mac(&self) -> MacAddr {
        self.logical_mac
    }

    pub fn slaves(&self) -> &[SlaveState] {
        &self.slaves
    }

    pub fn slave(&self, i: usize) -> Result<&SlaveState, BondError> {
        self.slaves.get(i).ok_or(BondError::NoSuchSlave(i))
    }

    pub fn slave_index(&self, name: &str) -> Option<usize> {
        self.slaves.iter().position(|s| s.iface.name == name)
    }

    /// Slave whose MAC is `mac`, with the logical MAC resolving to the slave
    /// that carries it (the first slave when none does).
    pub fn slave_for_mac(&self, mac: MacAddr) -> Option<usize> {
        self.slaves
            .iter()
            .position(|s| s.iface.mac == mac)
            .or_else(|| (mac == self.logical_mac).then_some(0))
    }

    pub fn peer_assignments(&self) -> &BTreeMap<Ipv4Addr, PeerAssignment> {
        &self.peer_assignments
    }

    pub fn peer_assignment(&self, peer: Ipv4Addr) -> Option<&PeerAssignment> {
        self.peer_assignments.get(&peer)
    }

    pub fn saved_peers(&self) -> &BTreeMap<Ipv4Addr, Option<MacAddr>> {
        &self.saved_peers
    }

    pub fn total_assigned_load(&self) -> f64 {
        self.slaves.iter().map(|s| s.assigned_rx_load).sum()
    }

    fn up_slaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.slaves.iter().enumerate().filter(|(_, s)| s.up).map(|(i, _)| i)
    }

    /// Receive-load placement for a new peer: widest slave first, taking the
    /// first one with room; if none has room, the least utilized afterwards.
    fn choose_rx_slave(&self, load: f64) -> Result<usize, BondError> {
        let mut order: Vec<usize> = self.up_slaves().collect();
        if order.is_empty() {
            return Err(BondError::AllSlavesDown);
        }
        order.sort_by(|&a, &b| {
            self.slaves[b]
                .capacity_estimate
                .total_cmp(&self.slaves[a].capacity_estimate)
                .then(a.cmp(&b))
        });
        if let Some(&i) = order.iter().find(|&&i| {
            let s = &self.slaves[i];
            s.capacity_estimate > 0.0 && s.assigned_rx_load + load <= s.capacity_estimate + EPS
        }) {
            return Ok(i);
        }
        Ok(order
            .into_iter()
            .min_by(|&a, &b| {
                let ua = self.slaves[a].utilization_with(self.slaves[a].assigned_rx_load + load);
                let ub = self.slaves[b].utilization_with(self.slaves[b].assigned_rx_load + load);
                ua.total_cmp(&ub)
            })
            .expect("order is non-empty"))
    }

    fn unassign(&mut self, peer: Ipv4Addr) -> Option<PeerAssignment> {
        let old = self.peer_assignments.remove(&peer)?;
        let s = &mut self.slaves[old.slave];
        s.assigned_rx_load = (s.assigned_rx_load - old.load).max(0.0);
        Some(old)
    }

    fn assign(&mut self, peer: Ipv4Addr, slave: usize, load: f64, mislearned: bool) {
        self.unassign(peer);
        self.slaves[slave].assigned_rx_load += load;
        self.peer_assignments.insert(peer, PeerAssignment { slave, load, mislearned });
    }

    fn response_for(&self, slave: usize, peer: Ipv4Addr, peer_mac: MacAddr) -> ArpMessage {
        ArpMessage::response(self.slaves[slave].iface.mac, self.logical_ip, peer_mac, peer)
    }

    /// Rewrites the host's ARP response so the asking peer learns one slave's
    /// MAC. The destination (the peer's MAC) is left untouched.
    pub fn intercept_arp_response(&mut self, arp: &ArpMessage, est_peer_load: f64) -> Result<ArpMessage, BondError> {
        if arp.op != ArpOp::Response {
            return Err(BondError::NotAResponse);
        }
        if arp.sender_ip != self.logical_ip {
            return Err(BondError::ForeignSender(arp.sender_ip));
        }
        let peer = arp.target_ip;
        let load = est_peer_load.max(0.0);
        let previous = self.unassign(peer);
        let slave = match self.choose_rx_slave(load) {
            Ok(s) => s,
            Err(e) => {
                if let Some(p) = previous {
                    self.peer_assignments.insert(peer, p);
                    self.slaves[p.slave].assigned_rx_load += p.load;
                }
                return Err(e);
            }
        };
        self.assign(peer, slave, load, false);
        Ok(ArpMessage {
            sender_mac: self.slaves[slave].iface.mac,
            ..*arp
        })
    }

    /// Remembers the target of an ARP request this host sends. Requests from
    /// other hosts leave the bond unchanged. Returns whether anything changed.
    pub fn record_arp_request(&mut self, arp: &ArpMessage) -> bool {
        if arp.op != ArpOp::Request || arp.sender_ip != self.logical_ip {
            return false;
        }
        if self.saved_peers.contains_key(&arp.target_ip) {
            return false;
        }
        self.saved_peers.insert(arp.target_ip, None);
        true
    }

    /// Handles the reply to one of our requests: learns the peer's MAC and
    /// answers it with the MAC of the slave it should send to. Replies from
    /// peers we never asked for are ignored.
    pub fn on_peer_arp_reply(&mut self, arp: &ArpMessage) -> Result<Option<ArpMessage>, BondError> {
        if arp.op != ArpOp::Response || !self.saved_peers.contains_key(&arp.sender_ip) {
            return Ok(None);
        }
        let peer = arp.sender_ip;
        self.saved_peers.insert(peer, Some(arp.sender_mac));
        let load = self.peer_assignments.get(&peer).map_or(0.0, |a| a.load);
        self.unassign(peer);
        let slave = self.choose_rx_slave(load)?;
        self.assign(peer, slave, load, false);
        Ok(Some(self.response_for(slave, peer, arp.sender_mac)))
    }

    /// Records that `peer` learned the logical MAC (for instance from the
    /// sender field of one of our ARP requests). Its traffic lands on
    /// whichever slave carries that MAC until the next rebalance.
    pub fn note_mislearned(&mut self, peer: Ipv4Addr, load: f64) {
        let slave = self.slave_for_mac(self.logical_mac).unwrap_or(0);
        let load = self.peer_assignments.get(&peer).map_or(load, |a| a.load);
        self.assign(peer, slave, load, true);
    }

    /// Folds an observed receive rate from `peer` into its load estimate.
    pub fn observe_peer_load(&mut self, peer: Ipv4Addr, observed_mbps: f64) {
        if let Some(a) = self.peer_assignments.get(&peer).copied() {
            let est = LOAD_SMOOTHING * observed_mbps + (1.0 - LOAD_SMOOTHING) * a.load;
            self.slaves[a.slave].assigned_rx_load += est - a.load;
            if let Some(p) = self.peer_assignments.get_mut(&peer) {
                p.load = est;
            }
        }
    }

    /// Smooths a slave's capacity estimate toward an observed rate.
    pub fn observe_slave_capacity(&mut self, slave: usize, observed_mbps: f64) -> Result<(), BondError> {
        let s = self.slaves.get_mut(slave).ok_or(BondError::NoSuchSlave(slave))?;
        s.capacity_estimate = LOAD_SMOOTHING * observed_mbps + (1.0 - LOAD_SMOOTHING) * s.capacity_estimate;
        Ok(())
    }

    pub fn set_capacity_estimate(&mut self, slave: usize, mbps: f64) -> Result<(), BondError> {
        self.slaves.get_mut(slave).ok_or(BondError::NoSuchSlave(slave))?.capacity_estimate = mbps.max(0.0);
        Ok(())
    }

    /// Marks a slave up or down and rebalances, returning the ARP responses
    /// to send.
    pub fn set_slave_up(&mut self, slave: usize, up: bool) -> Result<Vec<ArpMessage>, BondError> {
        let s = self.slaves.get_mut(slave).ok_or(BondError::NoSuchSlave(slave))?;
        if s.up == up {
            return Ok(Vec::new());
        }
        s.up = up;
        Ok(self.rebalance())
    }

    pub fn any_exhausted_beyond_capacity(&self) -> bool {
        self.slaves
            .iter()
            .any(|s| s.assigned_rx_load > s.capacity_estimate + EPS && s.assigned_rx_load > 0.0)
    }

    fn max_utilization(&self, loads: &[f64]) -> f64 {
        self.slaves
            .iter()
            .zip(loads)
            .filter(|(_, &l)| l > 0.0)
            .map(|(s, &l)| s.utilization_with(l))
            .fold(0.0, f64::max)
    }

    /// Largest peer first, each onto the up slave with the lowest resulting
    /// utilization (wider slave, then declaration order, on ties).
    fn plan(&self) -> Option<(BTreeMap<Ipv4Addr, usize>, Vec<f64>)> {
        let up: Vec<usize> = self.up_slaves().collect();
        if up.is_empty() {
            return None;
        }
        let mut peers: Vec<(Ipv4Addr, f64)> = self.peer_assignments.iter().map(|(ip, a)| (*ip, a.load)).collect();
        peers.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut loads = vec![0.0; self.slaves.len()];
        let mut plan = BTreeMap::new();
        for (peer, load) in peers {
            let best = *up
                .iter()
                .min_by(|&&a, &&b| {
                    let ua = self.slaves[a].utilization_with(loads[a] + load);
                    let ub = self.slaves[b].utilization_with(loads[b] + load);
                    ua.total_cmp(&ub)
                        .then(self.slaves[b].capacity_estimate.total_cmp(&self.slaves[a].capacity_estimate))
                        .then(a.cmp(&b))
                })
                .expect("up is non-empty");
            loads[best] += load;
            plan.insert(peer, best);
        }
        Some((plan, loads))
    }

    /// Redistributes peers across up slaves. Emits one unsolicited ARP
    /// response per peer that moves (or that had learned the logical MAC),
    /// each carrying the new slave's MAC. Nothing is emitted when the current
    /// placement is already as good as the plan.
    pub fn rebalance(&mut self) -> Vec<ArpMessage> {
        let Some((plan, planned_loads)) = self.plan() else {
            return Vec::new();
        };
        let current: Vec<f64> = self.slaves.iter().map(|s| s.assigned_rx_load).collect();
        let forced = self
            .peer_assignments
            .values()
            .any(|a| a.mislearned || !self.slaves[a.slave].up);
        let improves = self.max_utilization(&planned_loads) + EPS < self.max_utilization(&current);
        if !forced && !improves {
            return Vec::new();
        }
        let mut out = Vec::new();
        for (peer, slave) in plan {
            let a = self.peer_assignments[&peer];
            if a.slave != slave || a.mislearned || !self.slaves[a.slave].up {
                self.assign(peer, slave, a.load, false);
                let peer_mac = self.saved_peers.get(&peer).copied().flatten().unwrap_or(MacAddr::BROADCAST);
                out.push(self.response_for(slave, peer, peer_mac));
            }
        }
        out
    }

    /// Transmit slave for `frame`: lowest utilization once the frame is
    /// counted, ties broken by declaration order.
    pub fn select_tx_slave(&self, frame: &Frame) -> Result<usize, BondError> {
        self.select_tx_slave_for_bits(frame.wire_len() as f64 * 8e-6)
    }

    pub fn select_tx_slave_for_bits(&self, megabits: f64) -> Result<usize, BondError> {
        self.up_slaves()
            .min_by(|&a, &b| {
                let ua = self.slaves[a].utilization_with(self.slaves[a].tx_load + megabits);
                let ub = self.slaves[b].utilization_with(self.slaves[b].tx_load + megabits);
                ua.total_cmp(&ub).then(a.cmp(&b))
            })
            .ok_or(BondError::AllSlavesDown)
    }

    pub fn record_tx(&mut self, slave: usize, megabits: f64) -> Result<(), BondError> {
        self.slaves.get_mut(slave).ok_or(BondError::NoSuchSlave(slave))?.tx_load += megabits;
        Ok(())
    }

    pub fn set_tx_load(&mut self, slave: usize, megabits: f64) -> Result<(), BondError> {
        self.slaves.get_mut(slave).ok_or(BondError::NoSuchSlave(slave))?.tx_load = megabits;
        Ok(())
    }

    /// Ages transmit counters at the end of a window.
    pub fn decay_tx(&mut self, factor: f64) {
        for s in &mut self.slaves {
            s.tx_load *= factor;
        }
    }

    /// Checks the structural invariants; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        let any_up = self.slaves.iter().any(|s| s.up);
        for (peer, a) in &self.peer_assignments {
            let s = self.slaves.get(a.slave).ok_or(format!("{peer}: slave {} missing", a.slave))?;
            if any_up && !s.up {
                return Err(format!("{peer} assigned to down slave {}", s.iface.name));
            }
        }
        for (peer, mac) in &self.saved_peers {
            if mac.is_some() && any_up && !self.peer_assignments.contains_key(peer) {
                return Err(format!("saved peer {peer} has no slave"));
            }
        }
        for (i, s) in self.slaves.iter().enumerate() {
            let sum: f64 = self.peer_assignments.values().filter(|a| a.slave == i).map(|a| a.load).sum();
            if (sum - s.assigned_rx_load).abs() > 1e-6 * (1.0 + sum.abs()) {
                return Err(format!("slave {} load {} != assigned sum {sum}", s.iface.name, s.assigned_rx_load));
            }
            if s.assigned_rx_load < -EPS {
                return Err(format!("slave {} negative load", s.iface.name));
            }
        }
        Ok(())
    }
}
