//! Client-side "OS spoofing" for the asymmetric link.
//!
//! The client's default route points at a gateway that does not exist on
//! the VLC subnet, pinned with a static ARP entry, so applications bind to
//! the VLC interface address. Outgoing frames stall at the VLC NIC (the
//! phantom gateway's MAC never answers) and are picked up by a capture hook
//! that re-addresses them and sends them out of the WiFi NIC instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, IpProtocol, MacAddr};
use crate::iface::{is_contiguous_mask, mask_addr, InterfaceIdentity};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpoofError {
    #[error("interface {iface} ({ip}) is not in the phantom gateway's subnet {gateway}")]
    GatewayOutsideSubnet {
        iface: String,
        ip: Ipv4Addr,
        gateway: Ipv4Addr,
    },
    #[error("phantom gateway MAC {0} belongs to a real interface")]
    PhantomMacInUse(MacAddr),
    #[error("route {0}: {1}")]
    BadRoute(String, String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub destination: Ipv4Addr,
    pub genmask: Ipv4Addr,
    /// 0.0.0.0 for directly connected networks.
    pub gateway: Ipv4Addr,
    pub interface: String,
    pub metric: u32,
}

impl Route {
    pub fn connected(iface: &InterfaceIdentity, metric: u32) -> Self {
        Route {
            destination: iface.network(),
            genmask: iface.subnet_mask,
            gateway: Ipv4Addr::UNSPECIFIED,
            interface: iface.name.clone(),
            metric,
        }
    }

    pub fn default_via(gateway: Ipv4Addr, interface: &str, metric: u32) -> Self {
        Route {
            destination: Ipv4Addr::UNSPECIFIED,
            genmask: Ipv4Addr::UNSPECIFIED,
            gateway,
            interface: interface.to_string(),
            metric,
        }
    }

    pub fn is_default(&self) -> bool {
        self.genmask.is_unspecified()
    }

    pub fn matches(&self, dst: Ipv4Addr) -> bool {
        mask_addr(dst, self.genmask) == self.destination
    }

    pub fn prefix_len(&self) -> u32 {
        u32::from(self.genmask).leading_ones()
    }

    pub fn flags(&self) -> &'static str {
        match (self.gateway.is_unspecified(), self.genmask == Ipv4Addr::BROADCAST) {
            (true, false) => "U",
            (true, true) => "UH",
            (false, false) => "UG",
            (false, true) => "UGH",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArpEntry {
    pub mac: MacAddr,
    pub is_static: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Transport {
    Tcp,
    Udp,
}

impl Transport {
    pub fn of(p: IpProtocol) -> Option<Self> {
        match p {
            IpProtocol::Tcp => Some(Transport::Tcp),
            IpProtocol::Udp => Some(Transport::Udp),
            IpProtocol::Other(_) => None,
        }
    }
}

/// An address-specific socket binding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Listener {
    pub ip: Ipv4Addr,
    pub port: u16,
    pub protocol: Transport,
}

/// Per-host routing table, ARP cache and socket bindings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostTables {
    pub routes: Vec<Route>,
    pub arp_cache: BTreeMap<Ipv4Addr, ArpEntry>,
    pub listeners: BTreeSet<Listener>,
}

impl HostTables {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a route. A second default route replaces the first.
    pub fn add_route(&mut self, route: Route) -> Result<(), SpoofError> {
        if !is_contiguous_mask(route.genmask) {
            return Err(SpoofError::BadRoute(
                route.destination.to_string(),
                format!("non-contiguous mask {}", route.genmask),
            ));
        }
        if mask_addr(route.destination, route.genmask) != route.destination {
            return Err(SpoofError::BadRoute(
                route.destination.to_string(),
                format!("host bits set under mask {}", route.genmask),
            ));
        }
        if route.is_default() {
            self.routes.retain(|r| !r.is_default());
            self.routes.insert(0, route);
        } else {
            self.routes.push(route);
        }
        Ok(())
    }

    pub fn default_route(&self) -> Option<&Route> {
        self.routes.iter().find(|r| r.is_default())
    }

    /// Longest prefix, then lowest metric, then table order.
    pub fn lookup(&self, dst: Ipv4Addr) -> Option<&Route> {
        self.routes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.matches(dst))
            .min_by_key(|(i, r)| (std::cmp::Reverse(r.prefix_len()), r.metric, *i))
            .map(|(_, r)| r)
    }

    pub fn set_arp(&mut self, ip: Ipv4Addr, mac: MacAddr) {
        // dynamic learning never overrides a static entry
        match self.arp_cache.get(&ip) {
            Some(e) if e.is_static => {}
            _ => {
                self.arp_cache.insert(ip, ArpEntry { mac, is_static: false });
            }
        }
    }

    pub fn set_static_arp(&mut self, ip: Ipv4Addr, mac: MacAddr) {
        self.arp_cache.insert(ip, ArpEntry { mac, is_static: true });
    }

    pub fn arp_lookup(&self, ip: Ipv4Addr) -> Option<MacAddr> {
        self.arp_cache.get(&ip).map(|e| e.mac)
    }

    pub fn listen(&mut self, listener: Listener) {
        self.listeners.insert(listener);
    }

    /// Route table in `route -n` layout.
    pub fn dump_routes(&self) -> String {
        let mut out = String::from("Destination     Gateway         Genmask         Flags Metric Iface\n");
        for r in &self.routes {
            let _ = writeln!(
                out,
                "{:<15} {:<15} {:<15} {:<5} {:<6} {}",
                r.destination.to_string(),
                r.gateway.to_string(),
                r.genmask.to_string(),
                r.flags(),
                r.metric,
                r.interface
            );
        }
        out
    }

    pub fn dump_arp(&self) -> String {
        let mut out = String::from("Address         HWaddress          Flags\n");
        for (ip, e) in &self.arp_cache {
            let _ = writeln!(
                out,
                "{:<15} {}  {}",
                ip.to_string(),
                e.mac,
                if e.is_static { "CM" } else { "C" }
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpoofConfig {
    pub phantom_gw_ip: Ipv4Addr,
    pub phantom_gw_mac: MacAddr,
    /// B-2
    pub vlc_if: InterfaceIdentity,
    /// B-1
    pub wifi_if: InterfaceIdentity,
    pub router_lan_mac: MacAddr,
}

impl SpoofConfig {
    pub fn validate(&self) -> Result<(), SpoofError> {
        if !self.vlc_if.contains(self.phantom_gw_ip) {
            return Err(SpoofError::GatewayOutsideSubnet {
                iface: self.vlc_if.name.clone(),
                ip: self.vlc_if.ip,
                gateway: self.phantom_gw_ip,
            });
        }
        if [self.vlc_if.mac, self.wifi_if.mac, self.router_lan_mac].contains(&self.phantom_gw_mac) {
            return Err(SpoofError::PhantomMacInUse(self.phantom_gw_mac));
        }
        Ok(())
    }
}

/// Replaces the default route with one through the phantom gateway on the
/// VLC interface and pins the phantom gateway's MAC. Idempotent.
pub fn install_spoof(tables: &HostTables, config: &SpoofConfig) -> Result<HostTables, SpoofError> {
    config.validate()?;
    let mut out = tables.clone();
    out.add_route(Route::default_via(config.phantom_gw_ip, &config.vlc_if.name, 0))?;
    out.set_static_arp(config.phantom_gw_ip, config.phantom_gw_mac);
    Ok(out)
}

/// Re-addresses a frame captured at the VLC NIC so the router sees it coming
/// from the WiFi NIC. Only frames sourced from the VLC address are taken; the
/// capture also returns received frames, which this skips.
pub fn uplink_rewrite(frame: &Frame, config: &SpoofConfig) -> Option<Frame> {
    if frame.src_ip()? != config.vlc_if.ip {
        return None;
    }
    let mut out = frame.clone();
    out.src_mac = config.wifi_if.mac;
    out.dst_mac = config.router_lan_mac;
    out.ipv4_mut()?.src = config.wifi_if.ip;
    out.recompute_checksums();
    Some(out)
}

/// Whether some socket on the host accepts this frame.
pub fn socket_match(tables: &HostTables, frame: &Frame) -> bool {
    let (Some(p), Some((_, dst_port))) = (frame.ipv4(), frame.ports()) else {
        return false;
    };
    let Some(protocol) = Transport::of(p.protocol()) else {
        return false;
    };
    tables.listeners.contains(&Listener {
        ip: p.dst,
        port: dst_port,
        protocol,
    })
}
