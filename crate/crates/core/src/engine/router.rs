use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::frame::MacAddr;
use crate::iface::{is_contiguous_mask, mask_addr, InterfaceIdentity};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticRoute {
    pub destination: Ipv4Addr,
    pub genmask: Ipv4Addr,
    pub next_hop: Ipv4Addr,
    pub metric: u32,
}

impl StaticRoute {
    pub fn prefix_len(&self) -> u32 {
        u32::from(self.genmask).count_ones()
    }

    pub fn matches(&self, dst: Ipv4Addr) -> bool {
        mask_addr(dst, self.genmask) == self.destination
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RouterPort {
    Lan,
    Wan,
}

impl fmt::Display for RouterPort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RouterPort::Lan => "LAN",
            RouterPort::Wan => "WAN",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NextHop {
    pub port: RouterPort,
    /// Address to resolve with ARP: the destination itself when directly
    /// connected.
    pub gateway: Ipv4Addr,
    pub metric: u32,
    pub is_static: bool,
}

/// Edge router with one LAN and one WAN port.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Router {
    pub lan: InterfaceIdentity,
    pub wan: InterfaceIdentity,
    #[serde(default)]
    pub arp_cache: BTreeMap<Ipv4Addr, MacAddr>,
    #[serde(default)]
    pub static_routes: Vec<StaticRoute>,
}

impl Router {
    pub fn new(lan: InterfaceIdentity, wan: InterfaceIdentity) -> Self {
        Router {
            lan,
            wan,
            arp_cache: BTreeMap::new(),
            static_routes: Vec::new(),
        }
    }

    pub fn iface(&self, port: RouterPort) -> &InterfaceIdentity {
        match port {
            RouterPort::Lan => &self.lan,
            RouterPort::Wan => &self.wan,
        }
    }

    pub fn port_named(&self, name: &str) -> Option<RouterPort> {
        if name == self.lan.name {
            Some(RouterPort::Lan)
        } else if name == self.wan.name {
            Some(RouterPort::Wan)
        } else {
            None
        }
    }

    fn connected_port(&self, ip: Ipv4Addr) -> Option<RouterPort> {
        if self.lan.contains(ip) {
            Some(RouterPort::Lan)
        } else if self.wan.contains(ip) {
            Some(RouterPort::Wan)
        } else {
            None
        }
    }

    pub fn owns(&self, ip: Ipv4Addr) -> bool {
        ip == self.lan.ip || ip == self.wan.ip
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        for r in &self.static_routes {
            let bad = |why: String| EngineError::Topology(format!("static route {}/{}: {why}", r.destination, r.genmask));
            if !is_contiguous_mask(r.genmask) {
                return Err(bad("non-contiguous mask".into()));
            }
            if mask_addr(r.destination, r.genmask) != r.destination {
                return Err(bad("host bits set".into()));
            }
            if self.connected_port(r.next_hop).is_none() {
                return Err(bad(format!("next hop {} is not on a connected network", r.next_hop)));
            }
        }
        Ok(())
    }

    pub fn add_static_route(&mut self, route: StaticRoute) -> Result<(), EngineError> {
        self.static_routes.push(route);
        if let Err(e) = self.validate() {
            self.static_routes.pop();
            return Err(e);
        }
        Ok(())
    }

    /// Longest prefix wins; at equal prefix a static entry beats the
    /// connected network, then the lower metric wins.
    pub fn route_lookup(&self, dst: Ipv4Addr) -> Result<NextHop, EngineError> {
        let connected = [RouterPort::Lan, RouterPort::Wan].into_iter().filter_map(|port| {
            let i = self.iface(port);
            i.contains(dst).then_some((
                i.prefix_len(),
                NextHop {
                    port,
                    gateway: dst,
                    metric: 0,
                    is_static: false,
                },
            ))
        });
        let statics = self.static_routes.iter().filter(|r| r.matches(dst)).filter_map(|r| {
            Some((
                r.prefix_len(),
                NextHop {
                    port: self.connected_port(r.next_hop)?,
                    gateway: r.next_hop,
                    metric: r.metric,
                    is_static: true,
                },
            ))
        });
        connected
            .chain(statics)
            .enumerate()
            .min_by_key(|(i, (len, h))| (std::cmp::Reverse(*len), !h.is_static, h.metric, *i))
            .map(|(_, (_, h))| h)
            .ok_or(EngineError::NoRoute(dst))
    }

    /// Static routes as "Destination Gateway Genmask Metric".
    pub fn dump_static_routes(&self) -> String {
        let mut out = String::from("Destination     Gateway         Genmask         Metric\n");
        for r in &self.static_routes {
            let _ = writeln!(
                out,
                "{:<15} {:<15} {:<15} {}",
                r.destination.to_string(),
                r.next_hop.to_string(),
                r.genmask.to_string(),
                r.metric
            );
        }
        out
    }
}
