use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::{EngineError, Flow, Mode, Router, StaticRoute};
use crate::bond::BondConfig;
use crate::channel::{BlockingSchedule, VlcChannel, WifiChannel};
use crate::frame::MacAddr;
use crate::iface::InterfaceIdentity;
use crate::relay::{RelayConfig, DEFAULT_MTU};
use crate::spoof::{install_spoof, HostTables, Route, SpoofConfig};

pub const ROUTER: &str = "router";
pub const CLIENT: &str = "client";
pub const RELAY: &str = "relay";
pub const SERVER: &str = "server";

fn mac(a: u8, b: u8) -> MacAddr {
    MacAddr::new(0x02, 0, 0, 0, a, b)
}

fn ident(name: &str, mac: MacAddr, ip: [u8; 4]) -> InterfaceIdentity {
    InterfaceIdentity::new(name, mac, Ipv4Addr::from(ip), 24)
}

/// Interface identities of every node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Addressing {
    pub router_lan: InterfaceIdentity,
    pub router_wan: InterfaceIdentity,
    pub server: InterfaceIdentity,
    /// A-1
    pub relay_lan: InterfaceIdentity,
    /// A-2
    pub relay_vlc: InterfaceIdentity,
    /// B-1
    pub client_wifi: InterfaceIdentity,
    /// B-2
    pub client_vlc: InterfaceIdentity,
    pub phantom_gw_ip: Ipv4Addr,
    pub phantom_gw_mac: MacAddr,
    /// C-1, whose MAC the bond also uses as its own.
    pub bond_vlc: InterfaceIdentity,
    /// C-2
    pub bond_wifi: InterfaceIdentity,
    pub bond_ip: Ipv4Addr,
    /// First contender address; the rest follow consecutively.
    pub contender_base: Ipv4Addr,
}

impl Default for Addressing {
    fn default() -> Self {
        Addressing {
            router_lan: ident("LAN", mac(1, 1), [192, 168, 1, 1]),
            router_wan: ident("WAN", mac(1, 2), [10, 0, 0, 1]),
            server: ident("eth0", mac(5, 1), [10, 0, 0, 2]),
            relay_lan: ident("A-1", mac(0xa1, 1), [192, 168, 1, 200]),
            relay_vlc: ident("A-2", mac(0xa2, 2), [192, 168, 2, 200]),
            client_wifi: ident("B-1", mac(0xb1, 1), [192, 168, 1, 100]),
            client_vlc: ident("B-2", mac(0xb2, 2), [192, 168, 2, 100]),
            phantom_gw_ip: Ipv4Addr::new(192, 168, 2, 1),
            phantom_gw_mac: MacAddr::new(0xab, 0xab, 0xab, 0xab, 0xab, 0xab),
            bond_vlc: ident("C-1", mac(0xc1, 1), [192, 168, 1, 100]),
            bond_wifi: ident("C-2", mac(0xc2, 2), [192, 168, 1, 100]),
            bond_ip: Ipv4Addr::new(192, 168, 1, 100),
            contender_base: Ipv4Addr::new(192, 168, 1, 10),
        }
    }
}

/// Everything a scenario file can set. Unset fields take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub addressing: Addressing,
    pub wifi: WifiChannel,
    pub vlc: VlcChannel,
    pub blocking: BlockingSchedule,
    /// Saturated WiFi stations besides the measured client.
    pub contenders: u32,
    /// Fraction of the VLC link rate the user-space relay sustains.
    pub relay_efficiency: f64,
    pub ethernet_latency_ms: f64,
    pub mtu: usize,
    pub tick_ms: f64,
    pub horizon_s: f64,
    pub bond: BondConfig,
    pub flows: Vec<Flow>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            mode: Mode::Hybrid,
            addressing: Addressing::default(),
            wifi: WifiChannel::default(),
            vlc: VlcChannel::default(),
            blocking: BlockingSchedule::default(),
            contenders: 0,
            relay_efficiency: 70.0 / 74.0,
            ethernet_latency_ms: 0.1,
            mtu: DEFAULT_MTU,
            tick_ms: 100.0,
            horizon_s: 3600.0,
            bond: BondConfig::default(),
            flows: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostRole {
    Client,
    Relay,
    Server,
    /// Saturated WiFi station, present only as channel load.
    Contender,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Host {
    pub name: String,
    pub role: HostRole,
    pub interfaces: Vec<InterfaceIdentity>,
    pub tables: HostTables,
    pub ip_forward: bool,
}

impl Host {
    pub fn iface(&self, name: &str) -> Option<&InterfaceIdentity> {
        self.interfaces.iter().find(|i| i.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: String,
    pub iface: String,
}

impl Endpoint {
    pub fn new(node: &str, iface: &str) -> Self {
        Endpoint { node: node.into(), iface: iface.into() }
    }

    pub fn is(&self, node: &str, iface: &str) -> bool {
        self.node == node && self.iface == iface
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Ethernet,
    Wifi,
    Vlc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: Endpoint,
    pub b: Endpoint,
    pub kind: LinkKind,
    /// Frames only travel from `a` to `b`.
    pub one_way: bool,
}

impl Link {
    fn new(a: Endpoint, b: Endpoint, kind: LinkKind) -> Self {
        Link { a, b, kind, one_way: false }
    }

    /// Far end when sending from `from`, if that direction is allowed.
    pub fn peer_of(&self, from: &Endpoint) -> Option<&Endpoint> {
        if &self.a == from {
            Some(&self.b)
        } else if &self.b == from && !self.one_way {
            Some(&self.a)
        } else {
            None
        }
    }

    pub fn touches(&self, ep: &Endpoint) -> bool {
        &self.a == ep || &self.b == ep
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub mode: Mode,
    pub hosts: Vec<Host>,
    pub router: Router,
    pub links: Vec<Link>,
    pub wifi: WifiChannel,
    pub vlc: VlcChannel,
    pub blocking: BlockingSchedule,
    pub relay_efficiency: f64,
    pub ethernet_latency_ms: f64,
    pub mtu: usize,
    pub tick_ms: f64,
    pub horizon_s: f64,
    pub relay: Option<RelayConfig>,
    pub spoof: Option<SpoofConfig>,
    pub bond: Option<BondConfig>,
}

impl Topology {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Topology, EngineError> {
        let ad = &cfg.addressing;
        let mut router = Router::new(ad.router_lan.clone(), ad.router_wan.clone());
        let mut hosts = Vec::new();
        let mut links = Vec::new();
        let lan = || Endpoint::new(ROUTER, &ad.router_lan.name);

        let mut server_tables = HostTables::new();
        server_tables.add_route(Route::connected(&ad.server, 0))?;
        server_tables.add_route(Route::default_via(ad.router_wan.ip, &ad.server.name, 0))?;
        hosts.push(Host {
            name: SERVER.into(),
            role: HostRole::Server,
            interfaces: vec![ad.server.clone()],
            tables: server_tables,
            ip_forward: false,
        });
        links.push(Link::new(
            Endpoint::new(ROUTER, &ad.router_wan.name),
            Endpoint::new(SERVER, &ad.server.name),
            LinkKind::Ethernet,
        ));

        let (mut relay, mut spoof, mut bond) = (None, None, None);
        match cfg.mode {
            Mode::WifiOnly => {
                let mut t = HostTables::new();
                t.add_route(Route::default_via(ad.router_lan.ip, &ad.client_wifi.name, 0))?;
                t.add_route(Route::connected(&ad.client_wifi, 0))?;
                hosts.push(Host {
                    name: CLIENT.into(),
                    role: HostRole::Client,
                    interfaces: vec![ad.client_wifi.clone()],
                    tables: t,
                    ip_forward: false,
                });
                links.push(Link::new(Endpoint::new(CLIENT, &ad.client_wifi.name), lan(), LinkKind::Wifi));
            }
            Mode::Hybrid => {
                let mut t = HostTables::new();
                t.add_route(Route::default_via(ad.router_lan.ip, &ad.client_wifi.name, 0))?;
                t.add_route(Route {
                    destination: Ipv4Addr::new(169, 254, 0, 0),
                    genmask: Ipv4Addr::new(255, 255, 0, 0),
                    gateway: Ipv4Addr::UNSPECIFIED,
                    interface: ad.client_wifi.name.clone(),
                    metric: 1000,
                })?;
                t.add_route(Route::connected(&ad.client_vlc, 2))?;
                let sc = SpoofConfig {
                    phantom_gw_ip: ad.phantom_gw_ip,
                    phantom_gw_mac: ad.phantom_gw_mac,
                    vlc_if: ad.client_vlc.clone(),
                    wifi_if: ad.client_wifi.clone(),
                    router_lan_mac: ad.router_lan.mac,
                };
                let t = install_spoof(&t, &sc)?;
                hosts.push(Host {
                    name: CLIENT.into(),
                    role: HostRole::Client,
                    interfaces: vec![ad.client_wifi.clone(), ad.client_vlc.clone()],
                    tables: t,
                    ip_forward: false,
                });
                let mut rt = HostTables::new();
                rt.add_route(Route::connected(&ad.relay_lan, 0))?;
                rt.add_route(Route::connected(&ad.relay_vlc, 0))?;
                hosts.push(Host {
                    name: RELAY.into(),
                    role: HostRole::Relay,
                    interfaces: vec![ad.relay_lan.clone(), ad.relay_vlc.clone()],
                    tables: rt,
                    ip_forward: false,
                });
                links.push(Link::new(Endpoint::new(CLIENT, &ad.client_wifi.name), lan(), LinkKind::Wifi));
                links.push(Link::new(Endpoint::new(RELAY, &ad.relay_lan.name), lan(), LinkKind::Ethernet));
                links.push(Link {
                    one_way: true,
                    ..Link::new(
                        Endpoint::new(RELAY, &ad.relay_vlc.name),
                        Endpoint::new(CLIENT, &ad.client_vlc.name),
                        LinkKind::Vlc,
                    )
                });
                router.add_static_route(StaticRoute {
                    destination: ad.client_wifi.ip,
                    genmask: Ipv4Addr::new(255, 255, 255, 255),
                    next_hop: ad.relay_lan.ip,
                    metric: 2,
                })?;
                relay = Some(RelayConfig {
                    capture_if: ad.relay_lan.clone(),
                    emit_if: ad.relay_vlc.clone(),
                    client_wifi_ip: ad.client_wifi.ip,
                    client_vlc_mac: ad.client_vlc.mac,
                    client_vlc_ip: ad.client_vlc.ip,
                    mtu: cfg.mtu,
                });
                spoof = Some(sc);
            }
            Mode::Aggregated => {
                cfg.bond.validate()?;
                let logical = InterfaceIdentity::new("bond0", ad.bond_vlc.mac, ad.bond_ip, ad.bond_vlc.prefix_len() as u8);
                let mut t = HostTables::new();
                t.add_route(Route::default_via(ad.router_lan.ip, "bond0", 0))?;
                t.add_route(Route::connected(&logical, 0))?;
                hosts.push(Host {
                    name: CLIENT.into(),
                    role: HostRole::Client,
                    interfaces: vec![logical, ad.bond_vlc.clone(), ad.bond_wifi.clone()],
                    tables: t,
                    ip_forward: false,
                });
                links.push(Link::new(Endpoint::new(CLIENT, &ad.bond_vlc.name), lan(), LinkKind::Vlc));
                links.push(Link::new(Endpoint::new(CLIENT, &ad.bond_wifi.name), lan(), LinkKind::Wifi));
                bond = Some(cfg.bond.clone());
            }
        }

        let base = u32::from(ad.contender_base);
        for i in 0..cfg.contenders {
            let name = format!("sta-{}", i + 1);
            let id = InterfaceIdentity::new(
                "wlan0",
                MacAddr::new(0x02, 0, 0, 0x5a, (i >> 8) as u8, i as u8),
                Ipv4Addr::from(base + i),
                24,
            );
            let mut t = HostTables::new();
            t.add_route(Route::connected(&id, 0))?;
            links.push(Link::new(Endpoint::new(&name, "wlan0"), lan(), LinkKind::Wifi));
            hosts.push(Host {
                name,
                role: HostRole::Contender,
                interfaces: vec![id],
                tables: t,
                ip_forward: false,
            });
        }

        let topo = Topology {
            mode: cfg.mode,
            hosts,
            router,
            links,
            wifi: cfg.wifi.clone(),
            vlc: cfg.vlc.clone(),
            blocking: cfg.blocking,
            relay_efficiency: cfg.relay_efficiency,
            ethernet_latency_ms: cfg.ethernet_latency_ms,
            mtu: cfg.mtu,
            tick_ms: cfg.tick_ms,
            horizon_s: cfg.horizon_s,
            relay,
            spoof,
            bond,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn host(&self, name: &str) -> Option<&Host> {
        self.hosts.iter().find(|h| h.name == name)
    }

    pub fn contenders(&self) -> u32 {
        self.hosts.iter().filter(|h| h.role == HostRole::Contender).count() as u32
    }

    fn endpoint_exists(&self, ep: &Endpoint) -> bool {
        if ep.node == ROUTER {
            return self.router.port_named(&ep.iface).is_some();
        }
        self.host(&ep.node).is_some_and(|h| h.iface(&ep.iface).is_some())
    }

    pub fn link_latency_ms(&self, kind: LinkKind) -> f64 {
        match kind {
            LinkKind::Ethernet => self.ethernet_latency_ms,
            LinkKind::Wifi => self.wifi.base_latency,
            LinkKind::Vlc => self.vlc.one_way_latency,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let topo = |m: String| Err(EngineError::Topology(m));
        self.router.validate()?;
        self.wifi.validate()?;
        self.vlc.validate()?;
        self.blocking.validate()?;
        for l in &self.links {
            for ep in [&l.a, &l.b] {
                if !self.endpoint_exists(ep) {
                    return topo(format!("link endpoint {}/{} does not exist", ep.node, ep.iface));
                }
            }
        }
        let mut names: Vec<&str> = self.hosts.iter().map(|h| h.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) || names.contains(&ROUTER) {
            return topo("host names must be unique and differ from the router".into());
        }
        for (role, name) in [(HostRole::Client, CLIENT), (HostRole::Server, SERVER)] {
            if !self.host(name).is_some_and(|h| h.role == role) {
                return topo(format!("missing {name} host"));
            }
        }
        if self.mode == Mode::Hybrid {
            match self.host(RELAY) {
                Some(h) if h.role == HostRole::Relay && !h.ip_forward => {}
                Some(_) => return topo("relay host must have IP forwarding disabled".into()),
                None => return topo("hybrid mode needs a relay host".into()),
            }
            match (&self.relay, &self.spoof) {
                (Some(r), Some(s)) => {
                    r.validate()?;
                    s.validate()?;
                }
                _ => return topo("hybrid mode needs relay and spoof settings".into()),
            }
        }
        if self.mode == Mode::Aggregated {
            self.bond
                .as_ref()
                .ok_or_else(|| EngineError::Topology("aggregated mode needs a bond".into()))?
                .validate()?;
        }
        if !(self.relay_efficiency > 0.0 && self.relay_efficiency <= 1.0) {
            return topo(format!("relay_efficiency {} not in (0, 1]", self.relay_efficiency));
        }
        if !(self.ethernet_latency_ms >= 0.0 && self.ethernet_latency_ms.is_finite()) {
            return topo("ethernet_latency_ms must be a non-negative time".into());
        }
        if self.mtu < 68 {
            return topo(format!("mtu {} too small", self.mtu));
        }
        if !(self.tick_ms > 0.0 && self.tick_ms.is_finite()) {
            return topo("tick_ms must be positive".into());
        }
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return topo("horizon_s must be positive".into());
        }
        Ok(())
    }
}
