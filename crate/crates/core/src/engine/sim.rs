use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;
use std::net::{Ipv4Addr, SocketAddrV4};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::topology::{CLIENT, RELAY, ROUTER, SERVER};
use super::{
    ns_to_secs, secs_to_ns, Direction, EngineError, Endpoint, Flow, FlowKind, FrameTag, HostRole, LinkKind, Mode,
    RouterPort, Topology, TraceEntry,
};
use crate::bond::BondInterface;
use crate::frame::{ArpMessage, ArpOp, Frame, MacAddr, TcpFlags};
use crate::iface::InterfaceIdentity;
use crate::relay::{Relay, RelayStats};
use crate::spoof::{socket_match, uplink_rewrite, HostTables, Listener, Transport};

const CLIENT_PORT_BASE: u16 = 40000;
const BULK_PORT: u16 = 5001;
const HTTP_PORT: u16 = 80;
/// Ethernet + IPv4 + TCP headers.
const FRAME_OVERHEAD: usize = 54;
const DONE_EPS_BITS: f64 = 1e-6;
const REQUEST: &[u8] = b"GET / HTTP/1.1\r\n\r\n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub id: u32,
    pub kind: String,
    /// Client's bound address; the VLC address in hybrid mode.
    pub local: Option<SocketAddrV4>,
    pub remote: SocketAddrV4,
    pub established_s: Option<f64>,
    pub completed_s: Option<f64>,
    pub throughput_mbps: Option<f64>,
    pub page_load_time_s: Option<f64>,
    pub sent_bytes: f64,
    pub delivered_bytes: f64,
    /// Frames of this flow the client stack accepted.
    pub frames_accepted: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BondCounters {
    pub arp_intercepts: u64,
    pub arp_updates_sent: u64,
    pub rebalances: u64,
    pub slave_state_changes: u64,
    pub tx_frames: Vec<(String, u64)>,
    pub capacity_estimates: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub mode: Mode,
    pub seed: u64,
    pub server: String,
    pub flows: Vec<FlowResult>,
    pub trace: Vec<TraceEntry>,
    pub relay_stats: Option<RelayStats>,
    pub bond: Option<BondCounters>,
    pub socket_mismatches: u64,
    /// Frames that could never leave a permanently blocked link.
    pub frames_stranded: u64,
    pub end_s: f64,
    pub events: u64,
}

impl ScenarioResult {
    pub fn flow(&self, id: u32) -> Option<&FlowResult> {
        self.flows.iter().find(|f| f.id == id)
    }

    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            let _ = writeln!(out, "{e}");
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Path {
    ClientWifi,
    HybridVlc,
    BondVlc,
    BondWifi,
}

#[derive(Debug)]
struct Transfer {
    flow: usize,
    path: Path,
    /// Infinite for bulk flows.
    remaining_bits: f64,
    rate_bps: f64,
}

#[derive(Debug)]
enum Event {
    FlowStart(usize),
    Arrive {
        to: Endpoint,
        link: usize,
        frame: Frame,
        tag: FrameTag,
        flow: Option<u32>,
    },
    Tick,
    BlockEdge,
    FluidCheck(u64),
    RoundStart(usize),
    BulkEnd(usize),
    PageDone(usize),
}

impl Event {
    fn is_timer(&self) -> bool {
        matches!(
            self,
            Event::FlowStart(_) | Event::RoundStart(_) | Event::BulkEnd(_) | Event::PageDone(_)
        )
    }
}

struct Scheduled {
    time: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug)]
struct FlowState {
    spec: Flow,
    client_port: u16,
    server_port: u16,
    isn_c: u32,
    isn_s: u32,
    local: Option<SocketAddrV4>,
    established_ns: Option<u64>,
    data_start_ns: Option<u64>,
    sent_bits: f64,
    delivered_bits: f64,
    fluid_bits: f64,
    frames_accepted: u64,
    rounds: Vec<Vec<f64>>,
    next_round: usize,
    round_paths: BTreeSet<Path>,
    done_ns: Option<u64>,
    throughput_mbps: Option<f64>,
    load_time_s: Option<f64>,
}

/// IP-level state of an end host: tables plus frames waiting on ARP.
struct HostNet {
    tables: HostTables,
    pending: Vec<(Ipv4Addr, Frame, FrameTag, Option<u32>)>,
    asked: BTreeSet<Ipv4Addr>,
}

impl HostNet {
    fn new(tables: HostTables) -> Self {
        HostNet { tables, pending: Vec::new(), asked: BTreeSet::new() }
    }
}

struct BondState {
    iface: BondInterface,
    vlc_slave: usize,
    wifi_slave: usize,
    bits: Vec<f64>,
    busy_ns: Vec<u64>,
    tx_frames: Vec<u64>,
    counters: BondCounters,
}

struct Sim<'a> {
    topo: &'a Topology,
    now: u64,
    seq: u64,
    events: u64,
    queue: BinaryHeap<Scheduled>,
    rng: ChaCha8Rng,
    trace: Vec<TraceEntry>,
    flows: Vec<FlowState>,
    transfers: Vec<Transfer>,
    fluid_gen: u64,
    last_advance: u64,
    in_flight: usize,
    timers: usize,
    // channels
    tick_ns: u64,
    vlc_link_mbps: f64,
    vlc_blocked: bool,
    next_edge_s: Option<f64>,
    wifi_share: Option<f64>,
    stations_besides_client: u32,
    // nodes
    client: HostNet,
    server: HostNet,
    client_ifaces: Vec<InterfaceIdentity>,
    server_if: InterfaceIdentity,
    relay: Option<Relay>,
    bond: Option<BondState>,
    router_pending: Vec<(Ipv4Addr, RouterPort, Frame, FrameTag, Option<u32>)>,
    router_asked: BTreeSet<Ipv4Addr>,
    router_arp: BTreeMap<Ipv4Addr, MacAddr>,
    mac_table: BTreeMap<MacAddr, usize>,
    socket_mismatches: u64,
    stranded: u64,
}

/// Runs `flows` over `topology`. The result depends only on the inputs and
/// `seed`.
pub fn run_scenario(topology: &Topology, flows: &[Flow], seed: u64) -> Result<ScenarioResult, EngineError> {
    topology.validate()?;
    let mut ids = BTreeSet::new();
    for f in flows {
        f.validate()?;
        if !ids.insert(f.id) {
            return Err(EngineError::Flow { id: f.id, reason: "duplicate flow id".into() });
        }
        if f.client != CLIENT || f.server != SERVER {
            return Err(EngineError::Flow {
                id: f.id,
                reason: format!("endpoints must be {CLIENT} and {SERVER}"),
            });
        }
    }
    if flows.len() > usize::from(u16::MAX - CLIENT_PORT_BASE) {
        return Err(EngineError::Topology("too many flows".into()));
    }
    let mut sim = Sim::new(topology, flows, seed)?;
    sim.run()?;
    Ok(sim.finish(seed))
}

fn path_kind(path: Path) -> LinkKind {
    match path {
        Path::ClientWifi | Path::BondWifi => LinkKind::Wifi,
        Path::HybridVlc | Path::BondVlc => LinkKind::Vlc,
    }
}

impl<'a> Sim<'a> {
    fn new(topo: &'a Topology, flows: &[Flow], seed: u64) -> Result<Self, EngineError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let client_host = topo.host(CLIENT).expect("validated");
        let server_host = topo.host(SERVER).expect("validated");
        let mut server = HostNet::new(server_host.tables.clone());
        let server_if = server_host.interfaces[0].clone();
        for port in [BULK_PORT, HTTP_PORT] {
            server.tables.listen(Listener { ip: server_if.ip, port, protocol: Transport::Tcp });
        }
        let flows = flows
            .iter()
            .enumerate()
            .map(|(i, f)| FlowState {
                spec: f.clone(),
                client_port: CLIENT_PORT_BASE + i as u16,
                server_port: match f.kind {
                    FlowKind::Bulk { .. } => BULK_PORT,
                    FlowKind::PageLoad { .. } => HTTP_PORT,
                },
                isn_c: rng.random(),
                isn_s: rng.random(),
                local: None,
                established_ns: None,
                data_start_ns: None,
                sent_bits: 0.0,
                delivered_bits: 0.0,
                fluid_bits: 0.0,
                frames_accepted: 0,
                rounds: match &f.kind {
                    FlowKind::PageLoad { page } => page.rounds(),
                    FlowKind::Bulk { .. } => Vec::new(),
                },
                next_round: 0,
                round_paths: BTreeSet::new(),
                done_ns: None,
                throughput_mbps: None,
                load_time_s: None,
            })
            .collect();

        let relay = topo.relay.clone().map(Relay::new).transpose()?;
        let vlc_link_mbps = topo.vlc.throughput();
        let bond = match (&topo.bond, topo.mode) {
            (Some(cfg), Mode::Aggregated) => {
                let mut slaves = Vec::new();
                let (mut vlc_slave, mut wifi_slave) = (None, None);
                for (i, name) in cfg.slaves.iter().enumerate() {
                    let id = client_host.iface(name).ok_or_else(|| {
                        EngineError::Topology(format!("bond slave {name} is not a client interface"))
                    })?;
                    let ep = Endpoint::new(CLIENT, name);
                    let kind = topo
                        .links
                        .iter()
                        .find(|l| l.touches(&ep))
                        .map(|l| l.kind)
                        .ok_or_else(|| EngineError::Topology(format!("bond slave {name} has no link")))?;
                    let cap = match kind {
                        LinkKind::Vlc => {
                            vlc_slave = Some(i);
                            vlc_link_mbps
                        }
                        _ => {
                            wifi_slave = Some(i);
                            topo.wifi.per_user_throughput(1)?
                        }
                    };
                    slaves.push((id.clone(), cap));
                }
                let (Some(vlc_slave), Some(wifi_slave)) = (vlc_slave, wifi_slave) else {
                    return Err(EngineError::Topology("bond needs one VLC and one WiFi slave".into()));
                };
                let logical = client_host.iface("bond0").expect("aggregated client has bond0");
                let n = slaves.len();
                Some(BondState {
                    iface: BondInterface::new("bond0", logical.ip, logical.mac, slaves)?,
                    vlc_slave,
                    wifi_slave,
                    bits: vec![0.0; n],
                    busy_ns: vec![0; n],
                    tx_frames: vec![0; n],
                    counters: BondCounters::default(),
                })
            }
            _ => None,
        };

        let uses_vlc = topo.mode != Mode::WifiOnly;
        let mut sim = Sim {
            topo,
            now: 0,
            seq: 0,
            events: 0,
            queue: BinaryHeap::new(),
            rng,
            trace: Vec::new(),
            flows,
            transfers: Vec::new(),
            fluid_gen: 0,
            last_advance: 0,
            in_flight: 0,
            timers: 0,
            tick_ns: secs_to_ns(topo.tick_ms / 1e3).max(1),
            vlc_link_mbps,
            vlc_blocked: uses_vlc && topo.blocking.is_blocked(0.0),
            next_edge_s: if uses_vlc { topo.blocking.next_edge(0.0) } else { None },
            wifi_share: None,
            stations_besides_client: topo.contenders(),
            client: HostNet::new(client_host.tables.clone()),
            server,
            client_ifaces: client_host.interfaces.clone(),
            server_if,
            relay,
            bond,
            router_pending: Vec::new(),
            router_asked: BTreeSet::new(),
            router_arp: topo.router.arp_cache.clone(),
            mac_table: BTreeMap::new(),
            socket_mismatches: 0,
            stranded: 0,
        };
        if let Some(b) = sim.bond.as_mut() {
            if sim.vlc_blocked {
                b.iface.set_slave_up(b.vlc_slave, false)?;
            }
        }
        Ok(sim)
    }

    fn schedule(&mut self, time: u64, event: Event) {
        if event.is_timer() {
            self.timers += 1;
        }
        self.seq += 1;
        self.queue.push(Scheduled { time, seq: self.seq, event });
    }

    fn all_done(&self) -> bool {
        self.flows.iter().all(|f| f.done_ns.is_some())
    }

    fn run(&mut self) -> Result<(), EngineError> {
        for i in 0..self.flows.len() {
            let t = secs_to_ns(self.flows[i].spec.start_s);
            self.schedule(t, Event::FlowStart(i));
        }
        if self.flows.is_empty() {
            return Ok(());
        }
        self.schedule(self.tick_ns, Event::Tick);
        if let Some(e) = self.next_edge_s {
            self.schedule(secs_to_ns(e), Event::BlockEdge);
        }
        let horizon = secs_to_ns(self.topo.horizon_s);
        while !self.all_done() {
            let Some(Scheduled { time, event, .. }) = self.queue.pop() else {
                return Err(self.deadlock());
            };
            if time > horizon {
                return Err(EngineError::Horizon(self.topo.horizon_s));
            }
            if event.is_timer() {
                self.timers -= 1;
            }
            if matches!(event, Event::FluidCheck(g) if g != self.fluid_gen) {
                continue;
            }
            self.advance(time);
            self.now = time;
            self.events += 1;
            self.handle(event)?;
            self.settle();
            self.reschedule_fluid()?;
        }
        Ok(())
    }

    fn deadlock(&self) -> EngineError {
        EngineError::Deadlock {
            time_s: ns_to_secs(self.now),
            pending: self.flows.iter().filter(|f| f.done_ns.is_none()).count(),
        }
    }

    fn handle(&mut self, event: Event) -> Result<(), EngineError> {
        match event {
            Event::FlowStart(i) => self.open_connection(i),
            Event::Arrive { to, link, frame, tag, flow } => {
                self.in_flight -= 1;
                self.record(&to.node, &to.iface, Direction::Rx, &frame, tag, flow);
                match to.node.as_str() {
                    ROUTER => self.router_receive(link, &to.iface, frame, tag, flow),
                    RELAY => self.relay_receive(&to.iface, frame, tag, flow),
                    SERVER => self.server_receive(frame, tag, flow),
                    CLIENT => self.client_receive(&to.iface, frame, tag, flow),
                    _ => Ok(()),
                }
            }
            Event::Tick => self.on_tick(),
            Event::BlockEdge => self.on_block_edge(),
            Event::FluidCheck(_) => Ok(()), // advance + settle do the work
            Event::RoundStart(i) => {
                self.start_round(i);
                Ok(())
            }
            Event::BulkEnd(i) => {
                self.transfers.retain(|t| t.flow != i);
                let f = &mut self.flows[i];
                if let FlowKind::Bulk { duration_s } = f.spec.kind {
                    f.throughput_mbps = Some(f.fluid_bits / duration_s / 1e6);
                }
                f.done_ns = Some(self.now);
                Ok(())
            }
            Event::PageDone(i) => {
                let f = &mut self.flows[i];
                f.done_ns = Some(self.now);
                f.load_time_s = Some(ns_to_secs(self.now - f.established_ns.expect("page flows finish after setup")));
                Ok(())
            }
        }
    }

    // ---- tracing and link layer -------------------------------------------------

    fn record(&mut self, node: &str, iface: &str, dir: Direction, frame: &Frame, tag: FrameTag, flow: Option<u32>) {
        self.trace.push(TraceEntry {
            time_ns: self.now,
            node: node.into(),
            iface: iface.into(),
            dir,
            flow,
            tag,
            summary: frame.summary(),
        });
    }

    fn send(&mut self, node: &str, iface: &str, frame: Frame, tag: FrameTag, flow: Option<u32>) {
        self.record(node, iface, Direction::Tx, &frame, tag, flow);
        let from = Endpoint::new(node, iface);
        let links: Vec<usize> = self
            .topo
            .links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.peer_of(&from).is_some())
            .map(|(i, _)| i)
            .collect();
        let chosen: Vec<usize> = if links.len() <= 1 {
            links
        } else {
            // the router's LAN side behaves as a learning switch
            match self.mac_table.get(&frame.dst_mac) {
                Some(&l) if !frame.dst_mac.is_broadcast() && links.contains(&l) => vec![l],
                _ => links
                    .into_iter()
                    .filter(|&l| {
                        let peer = self.topo.links[l].peer_of(&from).expect("filtered");
                        self.topo.host(&peer.node).is_none_or(|h| h.role != HostRole::Contender)
                    })
                    .collect(),
            }
        };
        for l in chosen {
            self.put_on_link(l, &from, frame.clone(), tag, flow);
        }
    }

    fn put_on_link(&mut self, l: usize, from: &Endpoint, frame: Frame, tag: FrameTag, flow: Option<u32>) {
        let link = &self.topo.links[l];
        let to = link.peer_of(from).expect("direction checked").clone();
        let mut depart = self.now;
        if link.kind == LinkKind::Vlc && self.vlc_blocked {
            match self.next_edge_s {
                Some(e) => depart = depart.max(secs_to_ns(e)),
                None => {
                    self.stranded += 1;
                    return;
                }
            }
        }
        let arrive = depart + secs_to_ns(self.topo.link_latency_ms(link.kind) / 1e3);
        self.in_flight += 1;
        self.schedule(arrive, Event::Arrive { to, link: l, frame, tag, flow });
    }

    fn flow_of_port(&self, port: u16) -> Option<usize> {
        let i = port.checked_sub(CLIENT_PORT_BASE)? as usize;
        (i < self.flows.len()).then_some(i)
    }

    // ---- router ------------------------------------------------------------------

    fn router_receive(
        &mut self,
        link: usize,
        iface: &str,
        frame: Frame,
        tag: FrameTag,
        flow: Option<u32>,
    ) -> Result<(), EngineError> {
        let router = &self.topo.router;
        let Some(port) = router.port_named(iface) else {
            return Ok(());
        };
        if port == RouterPort::Lan {
            self.mac_table.insert(frame.src_mac, link);
        }
        let me = router.iface(port).clone();
        if let Some(arp) = frame.arp().copied() {
            if arp.target_ip != me.ip {
                return Ok(());
            }
            self.router_arp.insert(arp.sender_ip, arp.sender_mac);
            match arp.op {
                ArpOp::Request => {
                    let reply = ArpMessage::response(me.mac, me.ip, arp.sender_mac, arp.sender_ip);
                    self.send(ROUTER, &me.name, Frame::new_arp(arp.sender_mac, me.mac, reply), FrameTag::Arp, None);
                }
                ArpOp::Response => self.router_flush(arp.sender_ip),
            }
            return Ok(());
        }
        let Some(dst) = frame.dst_ip() else {
            return Ok(());
        };
        if router.owns(dst) || frame.dst_mac != me.mac {
            return Ok(());
        }
        let Ok(hop) = router.route_lookup(dst) else {
            return Ok(());
        };
        let mut out = frame;
        let Some(p) = out.ipv4_mut() else {
            return Ok(());
        };
        if p.ttl <= 1 {
            return Ok(());
        }
        p.ttl -= 1;
        p.header_checksum = p.compute_header_checksum();
        self.router_output(hop.gateway, hop.port, out, tag, flow);
        Ok(())
    }

    fn router_output(&mut self, gateway: Ipv4Addr, port: RouterPort, mut frame: Frame, tag: FrameTag, flow: Option<u32>) {
        let me = self.topo.router.iface(port).clone();
        frame.src_mac = me.mac;
        match self.router_arp.get(&gateway) {
            Some(&mac) => {
                frame.dst_mac = mac;
                self.send(ROUTER, &me.name, frame, tag, flow);
            }
            None => {
                self.router_pending.push((gateway, port, frame, tag, flow));
                if self.router_asked.insert(gateway) {
                    let req = ArpMessage::request(me.mac, me.ip, gateway);
                    self.send(ROUTER, &me.name, Frame::new_arp(MacAddr::BROADCAST, me.mac, req), FrameTag::Arp, None);
                }
            }
        }
    }

    fn router_flush(&mut self, ip: Ipv4Addr) {
        self.router_asked.remove(&ip);
        let (ready, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.router_pending).into_iter().partition(|p| p.0 == ip);
        self.router_pending = rest;
        for (gw, port, frame, tag, flow) in ready {
            self.router_output(gw, port, frame, tag, flow);
        }
    }

    // ---- relay -------------------------------------------------------------------

    fn relay_receive(&mut self, iface: &str, frame: Frame, tag: FrameTag, flow: Option<u32>) -> Result<(), EngineError> {
        let Some(relay) = self.relay.as_mut() else {
            return Ok(());
        };
        let cfg = relay.config().clone();
        if iface != cfg.capture_if.name {
            return Ok(());
        }
        // the kernel still answers ARP for A-1 with forwarding off
        if let Some(arp) = frame.arp() {
            if arp.op == ArpOp::Request && arp.target_ip == cfg.capture_if.ip {
                let me = &cfg.capture_if;
                let reply = ArpMessage::response(me.mac, me.ip, arp.sender_mac, arp.sender_ip);
                let reply = Frame::new_arp(arp.sender_mac, me.mac, reply);
                self.send(RELAY, &me.name, reply, FrameTag::Arp, None);
            }
        }
        let out = self.relay.as_mut().expect("checked").handle(&frame);
        if let Some(out) = out {
            self.record(RELAY, &cfg.capture_if.name, Direction::Capture, &frame, tag, flow);
            self.send(RELAY, &cfg.emit_if.name, out, tag, flow);
        }
        Ok(())
    }

    // ---- end hosts ---------------------------------------------------------------

    fn host_arp(&mut self, is_client: bool, iface: &InterfaceIdentity, arp: &ArpMessage) {
        let node = if is_client { CLIENT } else { SERVER };
        if arp.target_ip != iface.ip {
            return;
        }
        let net = if is_client { &mut self.client } else { &mut self.server };
        net.tables.set_arp(arp.sender_ip, arp.sender_mac);
        match arp.op {
            ArpOp::Request => {
                let reply = ArpMessage::response(iface.mac, iface.ip, arp.sender_mac, arp.sender_ip);
                self.send(node, &iface.name, Frame::new_arp(arp.sender_mac, iface.mac, reply), FrameTag::Arp, None);
            }
            ArpOp::Response => self.host_flush(is_client, arp.sender_ip),
        }
    }

    fn host_flush(&mut self, is_client: bool, ip: Ipv4Addr) {
        let net = if is_client { &mut self.client } else { &mut self.server };
        net.asked.remove(&ip);
        let (ready, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut net.pending).into_iter().partition(|p| p.0 == ip);
        net.pending = rest;
        for (_, frame, tag, flow) in ready {
            if is_client {
                self.client_output(frame, tag, flow);
            } else {
                self.server_output(frame, tag, flow);
            }
        }
    }

    /// Next hop for `dst` from a host's routing table.
    fn next_hop(tables: &HostTables, dst: Ipv4Addr) -> Option<(String, Ipv4Addr)> {
        let r = tables.lookup(dst)?;
        let gw = if r.gateway.is_unspecified() { dst } else { r.gateway };
        Some((r.interface.clone(), gw))
    }

    fn server_output(&mut self, mut frame: Frame, tag: FrameTag, flow: Option<u32>) {
        let Some(dst) = frame.dst_ip() else {
            return;
        };
        let Some((iface, gw)) = Self::next_hop(&self.server.tables, dst) else {
            return;
        };
        let me = self.server_if.clone();
        frame.src_mac = me.mac;
        match self.server.tables.arp_lookup(gw) {
            Some(mac) => {
                frame.dst_mac = mac;
                self.send(SERVER, &iface, frame, tag, flow);
            }
            None => {
                self.server.pending.push((gw, frame, tag, flow));
                if self.server.asked.insert(gw) {
                    let req = ArpMessage::request(me.mac, me.ip, gw);
                    self.send(SERVER, &iface, Frame::new_arp(MacAddr::BROADCAST, me.mac, req), FrameTag::Arp, None);
                }
            }
        }
    }

    fn server_receive(&mut self, frame: Frame, tag: FrameTag, flow: Option<u32>) -> Result<(), EngineError> {
        let me = self.server_if.clone();
        if let Some(arp) = frame.arp().copied() {
            self.host_arp(false, &me, &arp);
            return Ok(());
        }
        if !socket_match(&self.server.tables, &frame) {
            return Ok(());
        }
        let (Some(tcp), Some(src)) = (frame.tcp(), frame.src_ip()) else {
            return Ok(());
        };
        let Some(i) = self.flow_of_port(tcp.src_port) else {
            return Ok(());
        };
        let f = &self.flows[i];
        if tcp.dst_port != f.server_port {
            return Ok(());
        }
        let (client_port, server_port, isn_s) = (f.client_port, f.server_port, f.isn_s);
        if tcp.flags.contains(TcpFlags::SYN) {
            let reply = Frame::new_tcp(
                MacAddr::ZERO,
                me.mac,
                (me.ip, server_port),
                (src, client_port),
                TcpFlags::SYN | TcpFlags::ACK,
                isn_s,
                tcp.seq.wrapping_add(1),
                Vec::new(),
            );
            self.server_output(reply, FrameTag::SynAck, flow);
        } else if tag == FrameTag::Ack && self.flows[i].data_start_ns.is_none() {
            self.flows[i].data_start_ns = Some(self.now);
            let mss = self.topo.mtu.saturating_sub(FRAME_OVERHEAD);
            let data = Frame::new_tcp(
                MacAddr::ZERO,
                me.mac,
                (me.ip, server_port),
                (src, client_port),
                TcpFlags::PSH | TcpFlags::ACK,
                isn_s.wrapping_add(1),
                tcp.seq.wrapping_add(tcp.payload.len() as u32),
                vec![0; mss],
            );
            self.flows[i].sent_bits += 8.0 * mss as f64;
            self.server_output(data, FrameTag::Data, flow);
            self.start_data(i);
        }
        Ok(())
    }

    fn open_connection(&mut self, i: usize) -> Result<(), EngineError> {
        let server_ip = self.server_if.ip;
        let Some((iface, _)) = Self::next_hop(&self.client.tables, server_ip) else {
            return Err(EngineError::NoRoute(server_ip));
        };
        let local_ip = self
            .client_ifaces
            .iter()
            .find(|x| x.name == iface)
            .map(|x| x.ip)
            .ok_or_else(|| EngineError::Topology(format!("client route uses unknown interface {iface}")))?;
        let f = &mut self.flows[i];
        f.local = Some(SocketAddrV4::new(local_ip, f.client_port));
        let (port, sport, isn) = (f.client_port, f.server_port, f.isn_c);
        let id = f.spec.id;
        self.client.tables.listen(Listener { ip: local_ip, port, protocol: Transport::Tcp });
        let syn = Frame::new_tcp(
            MacAddr::ZERO,
            MacAddr::ZERO,
            (local_ip, port),
            (server_ip, sport),
            TcpFlags::SYN,
            isn,
            0,
            Vec::new(),
        );
        self.client_output(syn, FrameTag::Syn, Some(id));
        Ok(())
    }

    fn client_iface(&self, name: &str) -> InterfaceIdentity {
        self.client_ifaces.iter().find(|x| x.name == name).cloned().expect("client interface exists")
    }

    /// Sends an IP frame from the client stack. The route decides the
    /// interface; in hybrid mode that is the VLC NIC, where the spoof hook
    /// captures the frame and re-sends it over WiFi.
    fn client_output(&mut self, mut frame: Frame, tag: FrameTag, flow: Option<u32>) {
        let Some(dst) = frame.dst_ip() else {
            return;
        };
        let Some((iface, gw)) = Self::next_hop(&self.client.tables, dst) else {
            return;
        };
        let me = self.client_iface(&iface);
        frame.src_mac = me.mac;
        let Some(mac) = self.client.tables.arp_lookup(gw) else {
            self.client.pending.push((gw, frame, tag, flow));
            if self.client.asked.insert(gw) {
                let req = ArpMessage::request(me.mac, me.ip, gw);
                if let Some(b) = self.bond.as_mut() {
                    b.iface.record_arp_request(&req);
                    // the peer learns the logical MAC from the request itself
                    b.iface.note_mislearned(gw, 0.0);
                }
                self.client_emit(&iface, Frame::new_arp(MacAddr::BROADCAST, me.mac, req), FrameTag::Arp, None);
            }
            return;
        };
        frame.dst_mac = mac;
        if let Some(spoof) = self.topo.spoof.clone() {
            if iface == spoof.vlc_if.name {
                self.record(CLIENT, &iface, Direction::Capture, &frame, tag, flow);
                if let Some(out) = uplink_rewrite(&frame, &spoof) {
                    self.send(CLIENT, &spoof.wifi_if.name, out, tag, flow);
                }
                return;
            }
        }
        self.client_emit(&iface, frame, tag, flow);
    }

    /// Puts a finished frame on a client interface, picking a slave when the
    /// interface is the bond.
    fn client_emit(&mut self, iface: &str, mut frame: Frame, tag: FrameTag, flow: Option<u32>) {
        let Some(b) = self.bond.as_mut() else {
            self.send(CLIENT, iface, frame, tag, flow);
            return;
        };
        let own = frame.arp().and_then(|a| b.iface.slave_for_mac(a.sender_mac).filter(|&s| b.iface.slaves()[s].up));
        let slave = match own {
            Some(s) if frame.arp().is_some_and(|a| a.op == ArpOp::Response) => s,
            _ => match b.iface.select_tx_slave(&frame) {
                Ok(s) => s,
                Err(_) => return,
            },
        };
        let bits = frame.wire_len() as f64 * 8e-6;
        let _ = b.iface.record_tx(slave, bits);
        b.tx_frames[slave] += 1;
        if frame.ipv4().is_some() {
            frame.src_mac = b.iface.slaves()[slave].iface.mac;
        }
        let slave_name = b.iface.slaves()[slave].iface.name.clone();
        self.record(CLIENT, iface, Direction::Tx, &frame, tag, flow);
        self.send(CLIENT, &slave_name, frame, tag, flow);
    }

    fn send_bond_arp(&mut self, msgs: Vec<ArpMessage>) {
        for m in msgs {
            if let Some(b) = self.bond.as_mut() {
                b.counters.arp_updates_sent += 1;
            }
            let dst = if m.target_mac.is_zero() { MacAddr::BROADCAST } else { m.target_mac };
            self.client_emit("bond0", Frame::new_arp(dst, m.sender_mac, m), FrameTag::Arp, None);
        }
    }

    fn client_receive(&mut self, iface: &str, frame: Frame, _tag: FrameTag, flow: Option<u32>) -> Result<(), EngineError> {
        if let Some(arp) = frame.arp().copied() {
            return self.client_arp(iface, &arp);
        }
        if let Some(b) = self.bond.as_ref() {
            // slaves hand IP traffic up through the bond
            if iface != "bond0" && b.iface.slave_index(iface).is_some() {
                self.record(CLIENT, "bond0", Direction::Rx, &frame, _tag, flow);
            }
        }
        if !socket_match(&self.client.tables, &frame) {
            self.socket_mismatches += 1;
            return Ok(());
        }
        let Some(tcp) = frame.tcp() else {
            return Ok(());
        };
        let Some(i) = self.flow_of_port(tcp.dst_port) else {
            return Ok(());
        };
        let f = &mut self.flows[i];
        f.frames_accepted += 1;
        f.delivered_bits += 8.0 * tcp.payload.len() as f64;
        if tcp.flags.contains(TcpFlags::SYN | TcpFlags::ACK) && f.established_ns.is_none() {
            f.established_ns = Some(self.now);
            let local = f.local.expect("bound at connect");
            let payload = match f.spec.kind {
                FlowKind::PageLoad { .. } => REQUEST.to_vec(),
                FlowKind::Bulk { .. } => Vec::new(),
            };
            let ack = Frame::new_tcp(
                MacAddr::ZERO,
                MacAddr::ZERO,
                (*local.ip(), f.client_port),
                (self.server_if.ip, f.server_port),
                TcpFlags::ACK,
                f.isn_c.wrapping_add(1),
                tcp.seq.wrapping_add(1),
                payload,
            );
            let id = f.spec.id;
            self.client_output(ack, FrameTag::Ack, Some(id));
        }
        Ok(())
    }

    fn client_arp(&mut self, iface: &str, arp: &ArpMessage) -> Result<(), EngineError> {
        let Some(b) = self.bond.as_mut() else {
            let me = self.client_iface(iface);
            self.host_arp(true, &me, arp);
            return Ok(());
        };
        let (ip, mac) = (b.iface.logical_ip(), b.iface.logical_mac());
        if arp.target_ip != ip {
            return Ok(());
        }
        match arp.op {
            ArpOp::Request => {
                self.client.tables.set_arp(arp.sender_ip, arp.sender_mac);
                let reply = ArpMessage::response(mac, ip, arp.sender_mac, arp.sender_ip);
                let out = b.iface.intercept_arp_response(&reply, 0.0)?;
                b.counters.arp_intercepts += 1;
                self.client_emit("bond0", Frame::new_arp(arp.sender_mac, out.sender_mac, out), FrameTag::Arp, None);
            }
            ArpOp::Response => {
                self.client.tables.set_arp(arp.sender_ip, arp.sender_mac);
                let update = b.iface.on_peer_arp_reply(arp)?;
                if let Some(m) = update {
                    b.counters.arp_intercepts += 1;
                    self.send_bond_arp(vec![m]);
                }
                self.host_flush(true, arp.sender_ip);
            }
        }
        Ok(())
    }

    // ---- fluid transfers -----------------------------------------------------------

    fn one_way_ns(&self, kind: LinkKind) -> u64 {
        secs_to_ns(self.topo.link_latency_ms(kind) / 1e3)
    }

    fn eth_ns(&self) -> u64 {
        self.one_way_ns(LinkKind::Ethernet)
    }

    /// Server-to-client latency along `path`.
    fn down_ns(&self, path: Path) -> u64 {
        let access = self.one_way_ns(path_kind(path));
        match path {
            // WAN hop, then the router-to-relay Ethernet hop
            Path::HybridVlc => 2 * self.eth_ns() + access,
            _ => self.eth_ns() + access,
        }
    }

    /// Client-to-server latency of a request sent now.
    fn up_ns(&self) -> u64 {
        let access = match (&self.bond, self.topo.mode) {
            (Some(b), _) => match b.iface.select_tx_slave_for_bits(8e-6 * 100.0) {
                Ok(s) if s == b.vlc_slave => LinkKind::Vlc,
                _ => LinkKind::Wifi,
            },
            _ => LinkKind::Wifi,
        };
        self.eth_ns() + self.one_way_ns(access)
    }

    fn start_data(&mut self, i: usize) {
        match self.flows[i].spec.kind.clone() {
            FlowKind::Bulk { duration_s } => {
                let paths: &[Path] = match self.topo.mode {
                    Mode::WifiOnly => &[Path::ClientWifi],
                    Mode::Hybrid => &[Path::HybridVlc],
                    Mode::Aggregated => &[Path::BondVlc, Path::BondWifi],
                };
                for &path in paths {
                    self.transfers.push(Transfer { flow: i, path, remaining_bits: f64::INFINITY, rate_bps: 0.0 });
                }
                self.schedule(self.now + secs_to_ns(duration_s), Event::BulkEnd(i));
            }
            FlowKind::PageLoad { .. } => {
                if self.flows[i].rounds.is_empty() {
                    // nothing to fetch
                    let f = &mut self.flows[i];
                    f.done_ns = Some(self.now);
                    f.load_time_s = Some(0.0);
                } else {
                    self.start_round(i);
                }
            }
        }
    }

    fn default_path(&self) -> Path {
        match self.topo.mode {
            Mode::WifiOnly => Path::ClientWifi,
            Mode::Hybrid => Path::HybridVlc,
            Mode::Aggregated => Path::BondVlc,
        }
    }

    /// The server starts sending the objects of the flow's next round.
    fn start_round(&mut self, i: usize) {
        let r = self.flows[i].next_round;
        self.flows[i].next_round += 1;
        let objects = self.flows[i].rounds[r].clone();
        let mut per_path: BTreeMap<Path, f64> = BTreeMap::new();
        match &self.bond {
            None => {
                let total: f64 = objects.iter().sum();
                per_path.insert(self.default_path(), 8.0 * total);
            }
            Some(b) => {
                // objects go to slaves in proportion to estimated capacity
                let slaves = b.iface.slaves();
                let mut load = vec![0.0; slaves.len()];
                for size in objects {
                    let best = (0..slaves.len()).filter(|&s| slaves[s].up).min_by(|&x, &y| {
                        let ux = (load[x] + size) / slaves[x].capacity_estimate.max(1e-12);
                        let uy = (load[y] + size) / slaves[y].capacity_estimate.max(1e-12);
                        ux.total_cmp(&uy).then(x.cmp(&y))
                    });
                    let s = best.unwrap_or(b.wifi_slave);
                    load[s] += size;
                }
                for (s, bytes) in load.into_iter().enumerate() {
                    if bytes > 0.0 {
                        let path = if s == b.vlc_slave { Path::BondVlc } else { Path::BondWifi };
                        *per_path.entry(path).or_default() += 8.0 * bytes;
                    }
                }
            }
        }
        let f = &mut self.flows[i];
        f.round_paths.clear();
        for (path, bits) in per_path {
            f.round_paths.insert(path);
            self.transfers.push(Transfer { flow: i, path, remaining_bits: bits, rate_bps: 0.0 });
        }
        if self.flows[i].round_paths.is_empty() {
            self.round_finished(i);
        }
    }

    fn round_finished(&mut self, i: usize) {
        let down = self.flows[i].round_paths.iter().map(|&p| self.down_ns(p)).max().unwrap_or(0);
        if self.flows[i].next_round < self.flows[i].rounds.len() {
            let up = self.up_ns();
            self.schedule(self.now + down + up, Event::RoundStart(i));
        } else {
            self.schedule(self.now + down, Event::PageDone(i));
        }
    }

    fn path_backlogged(&self, path: Path) -> bool {
        self.transfers.iter().any(|t| t.path == path)
    }

    fn draw_wifi_share(&mut self) -> Result<f64, EngineError> {
        let stations = self.stations_besides_client + 1;
        if stations == 1 {
            return Ok(1.0);
        }
        let agg = self.topo.wifi.aggregate_throughput(stations)?;
        let frame_bits = 8.0 * self.topo.mtu as f64;
        let txops = ((agg * 1e6 * ns_to_secs(self.tick_ns) / frame_bits).round() as u64).max(1);
        let won = Binomial::new(txops, 1.0 / stations as f64).expect("valid binomial").sample(&mut self.rng);
        Ok(won as f64 / txops as f64)
    }

    fn path_rate_bps(&mut self, path: Path) -> Result<f64, EngineError> {
        Ok(match path {
            Path::ClientWifi | Path::BondWifi => {
                let stations = self.stations_besides_client + 1;
                let agg = self.topo.wifi.aggregate_throughput(stations)?;
                let share = match self.wifi_share {
                    Some(s) => s,
                    None => {
                        let s = self.draw_wifi_share()?;
                        self.wifi_share = Some(s);
                        s
                    }
                };
                agg * share * 1e6
            }
            Path::HybridVlc if !self.vlc_blocked => self.vlc_link_mbps * self.topo.relay_efficiency * 1e6,
            Path::BondVlc if !self.vlc_blocked => self.vlc_link_mbps * 1e6,
            _ => 0.0,
        })
    }

    fn reschedule_fluid(&mut self) -> Result<(), EngineError> {
        let wifi_busy = self.path_backlogged(Path::ClientWifi) || self.path_backlogged(Path::BondWifi);
        if !wifi_busy {
            self.wifi_share = None;
        }
        let mut counts: BTreeMap<Path, usize> = BTreeMap::new();
        for t in &self.transfers {
            *counts.entry(t.path).or_default() += 1;
        }
        let mut rates = BTreeMap::new();
        for (&p, &n) in &counts {
            rates.insert(p, self.path_rate_bps(p)? / n as f64);
        }
        let mut earliest: Option<u64> = None;
        for t in &mut self.transfers {
            t.rate_bps = rates[&t.path];
            if t.remaining_bits.is_finite() && t.rate_bps > 0.0 {
                let dt = (t.remaining_bits / t.rate_bps * 1e9).ceil() as u64;
                let at = self.now + dt.max(1);
                earliest = Some(earliest.map_or(at, |e| e.min(at)));
            }
        }
        self.fluid_gen += 1;
        if let Some(at) = earliest {
            let g = self.fluid_gen;
            self.schedule(at, Event::FluidCheck(g));
        }
        Ok(())
    }

    fn advance(&mut self, to: u64) {
        if to <= self.last_advance {
            return;
        }
        let dt_ns = to - self.last_advance;
        let dt = dt_ns as f64 / 1e9;
        self.last_advance = to;
        let mut busy = BTreeSet::new();
        for t in &mut self.transfers {
            let mut bits = t.rate_bps * dt;
            if t.remaining_bits.is_finite() {
                bits = bits.min(t.remaining_bits);
                t.remaining_bits -= bits;
            }
            let f = &mut self.flows[t.flow];
            f.sent_bits += bits;
            f.delivered_bits += bits;
            f.fluid_bits += bits;
            if let Some(b) = self.bond.as_mut() {
                let slave = match t.path {
                    Path::BondVlc => b.vlc_slave,
                    Path::BondWifi => b.wifi_slave,
                    _ => continue,
                };
                b.bits[slave] += bits;
                busy.insert(slave);
            }
        }
        if let Some(b) = self.bond.as_mut() {
            for s in busy {
                b.busy_ns[s] += dt_ns;
            }
        }
    }

    /// Retires finished transfers and moves page flows on.
    fn settle(&mut self) {
        let before: BTreeSet<usize> = self.transfers.iter().map(|t| t.flow).collect();
        self.transfers.retain(|t| !(t.remaining_bits.is_finite() && t.remaining_bits <= DONE_EPS_BITS));
        let after: BTreeSet<usize> = self.transfers.iter().map(|t| t.flow).collect();
        for i in before.difference(&after).copied().collect::<Vec<_>>() {
            if matches!(self.flows[i].spec.kind, FlowKind::PageLoad { .. }) {
                self.round_finished(i);
            }
        }
    }

    // ---- periodic work -----------------------------------------------------------

    fn on_tick(&mut self) -> Result<(), EngineError> {
        self.wifi_share = None;
        if let Some(b) = self.bond.as_mut() {
            let tick_s = ns_to_secs(self.tick_ns);
            let mut total = 0.0;
            for s in 0..b.bits.len() {
                total += b.bits[s];
                if b.busy_ns[s] > 0 && b.iface.slaves()[s].up {
                    let observed = b.bits[s] / ns_to_secs(b.busy_ns[s]) / 1e6;
                    b.iface.observe_slave_capacity(s, observed)?;
                }
                b.bits[s] = 0.0;
                b.busy_ns[s] = 0;
            }
            let router_ip = self.topo.router.lan.ip;
            b.iface.observe_peer_load(router_ip, total / tick_s / 1e6);
            b.iface.decay_tx(0.5);
            if b.iface.any_exhausted_beyond_capacity() {
                let msgs = b.iface.rebalance();
                if !msgs.is_empty() {
                    b.counters.rebalances += 1;
                    self.send_bond_arp(msgs);
                }
            }
        }
        if self.in_flight == 0 && self.timers == 0 && self.next_edge_s.is_none() {
            let moving = self.transfers.iter().any(|t| t.rate_bps > 0.0);
            if !moving {
                return Err(self.deadlock());
            }
        }
        if !self.all_done() {
            self.schedule(self.now + self.tick_ns, Event::Tick);
        }
        Ok(())
    }

    fn on_block_edge(&mut self) -> Result<(), EngineError> {
        let Some(edge) = self.next_edge_s else {
            return Ok(());
        };
        self.vlc_blocked = !self.vlc_blocked;
        self.next_edge_s = self.topo.blocking.next_edge(edge);
        if let Some(b) = self.bond.as_mut() {
            let vlc = b.vlc_slave;
            let msgs = b.iface.set_slave_up(vlc, !self.vlc_blocked)?;
            b.counters.slave_state_changes += 1;
            if self.vlc_blocked {
                // finite work queued on the VLC slave fails over to WiFi
                let mut moved: BTreeMap<usize, f64> = BTreeMap::new();
                for t in &mut self.transfers {
                    if t.path == Path::BondVlc && t.remaining_bits.is_finite() {
                        *moved.entry(t.flow).or_default() += t.remaining_bits;
                        t.remaining_bits = 0.0;
                    }
                }
                self.transfers.retain(|t| !(t.path == Path::BondVlc && t.remaining_bits == 0.0));
                for (flow, bits) in moved {
                    match self.transfers.iter_mut().find(|t| t.flow == flow && t.path == Path::BondWifi) {
                        Some(t) => t.remaining_bits += bits,
                        None => self.transfers.push(Transfer {
                            flow,
                            path: Path::BondWifi,
                            remaining_bits: bits,
                            rate_bps: 0.0,
                        }),
                    }
                    self.flows[flow].round_paths.insert(Path::BondWifi);
                }
            }
            self.send_bond_arp(msgs);
        }
        if let Some(e) = self.next_edge_s {
            if !self.all_done() {
                self.schedule(secs_to_ns(e).max(self.now + 1), Event::BlockEdge);
            }
        }
        Ok(())
    }

    fn finish(self, seed: u64) -> ScenarioResult {
        let flows = self
            .flows
            .iter()
            .map(|f| FlowResult {
                id: f.spec.id,
                kind: match f.spec.kind {
                    FlowKind::Bulk { .. } => "bulk".into(),
                    FlowKind::PageLoad { .. } => "page_load".into(),
                },
                local: f.local,
                remote: SocketAddrV4::new(self.server_if.ip, f.server_port),
                established_s: f.established_ns.map(ns_to_secs),
                completed_s: f.done_ns.map(ns_to_secs),
                throughput_mbps: f.throughput_mbps,
                page_load_time_s: f.load_time_s,
                sent_bytes: f.sent_bits / 8.0,
                delivered_bytes: f.delivered_bits / 8.0,
                frames_accepted: f.frames_accepted,
            })
            .collect();
        let bond = self.bond.map(|b| {
            let mut c = b.counters;
            c.tx_frames = b
                .iface
                .slaves()
                .iter()
                .zip(&b.tx_frames)
                .map(|(s, &n)| (s.iface.name.clone(), n))
                .collect();
            c.capacity_estimates = b.iface.slaves().iter().map(|s| (s.iface.name.clone(), s.capacity_estimate)).collect();
            c
        });
        ScenarioResult {
            mode: self.topo.mode,
            seed,
            server: SERVER.into(),
            flows,
            trace: self.trace,
            relay_stats: self.relay.map(|r| r.stats()),
            bond,
            socket_mismatches: self.socket_mismatches,
            frames_stranded: self.stranded,
            end_s: ns_to_secs(self.now),
            events: self.events,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::BlockingSchedule;
    use crate::engine::{page_load_time, trace_handshake, PageSpec, ScenarioConfig};

    fn topo(mode: Mode, f: impl FnOnce(&mut ScenarioConfig)) -> Topology {
        let mut cfg = ScenarioConfig { mode, ..ScenarioConfig::default() };
        f(&mut cfg);
        Topology::from_config(&cfg).unwrap()
    }

    fn bulk(mode: Mode, f: impl FnOnce(&mut ScenarioConfig)) -> ScenarioResult {
        run_scenario(&topo(mode, f), &[Flow::bulk(1, 5.0)], 7).unwrap()
    }

    #[test]
    fn single_user_rates() {
        let w = bulk(Mode::WifiOnly, |_| {}).flows[0].throughput_mbps.unwrap();
        let h = bulk(Mode::Hybrid, |_| {}).flows[0].throughput_mbps.unwrap();
        let a = bulk(Mode::Aggregated, |_| {}).flows[0].throughput_mbps.unwrap();
        assert!((w - 30.0).abs() < 1e-6, "{w}");
        assert!((h - 70.0).abs() < 1e-6, "{h}");
        assert!((a - 104.0).abs() < 1e-6, "{a}");
    }

    #[test]
    fn hybrid_handshake_path() {
        let r = bulk(Mode::Hybrid, |_| {});
        let rep = trace_handshake(&r, 1).unwrap();
        assert_eq!(rep.uplink.first().map(String::as_str), Some("B-2"));
        assert!(rep.uplink.iter().any(|x| x == "B-1"));
        assert!(rep.downlink.iter().any(|x| x == "A-1"));
        assert!(rep.downlink.iter().any(|x| x == "A-2"));
        assert_eq!(rep.downlink.last().map(String::as_str), Some("B-2"));
        let local = r.flows[0].local.unwrap();
        assert_eq!(*local.ip(), ScenarioConfig::default().addressing.client_vlc.ip);
        assert_eq!(r.socket_mismatches, 0);
        let stats = r.relay_stats.unwrap();
        assert!(stats.forwarded >= 2);
        assert_eq!(stats.oversize_dropped, 0);
    }

    #[test]
    fn hybrid_page_matches_closed_form() {
        let page = PageSpec { object_count: 12, total_bytes: 900_000, sequential_rounds: 4 };
        let t = topo(Mode::Hybrid, |_| {});
        let r = run_scenario(&t, &[Flow::page_load(3, page, 0.5)], 1).unwrap();
        let got = r.flows[0].page_load_time_s.unwrap();
        let rtt = 2.0 + 0.1 + 0.1 + 0.1 + 10.0;
        let want = page_load_time(&page, 70.0, rtt).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn empty_page_loads_instantly() {
        let page = PageSpec { object_count: 0, total_bytes: 0, sequential_rounds: 0 };
        let r = run_scenario(&topo(Mode::WifiOnly, |_| {}), &[Flow::page_load(1, page, 0.0)], 1).unwrap();
        assert_eq!(r.flows[0].page_load_time_s, Some(0.0));
    }

    #[test]
    fn same_seed_same_trace() {
        let t = topo(Mode::Aggregated, |c| c.contenders = 3);
        let flows = [Flow::bulk(1, 2.0), Flow::page_load(2, PageSpec::default(), 0.3)];
        let a = run_scenario(&t, &flows, 42).unwrap();
        let b = run_scenario(&t, &flows, 42).unwrap();
        assert_eq!(a, b);
        let c = run_scenario(&t, &flows, 43).unwrap();
        assert_ne!(a.flows, c.flows);
    }

    #[test]
    fn fully_blocked_vlc_deadlocks_hybrid() {
        let t = topo(Mode::Hybrid, |c| c.blocking = BlockingSchedule::contiguous(60.0));
        let err = run_scenario(&t, &[Flow::bulk(1, 5.0)], 1).unwrap_err();
        assert!(matches!(err, EngineError::Deadlock { pending: 1, .. }), "{err}");
    }

    #[test]
    fn aggregated_survives_full_blocking() {
        let r = bulk(Mode::Aggregated, |c| c.blocking = BlockingSchedule::contiguous(60.0));
        let a = r.flows[0].throughput_mbps.unwrap();
        assert!((a - 30.0).abs() < 1e-6, "{a}");
    }

    #[test]
    fn half_blocked_hybrid_averages_out() {
        let t = topo(Mode::Hybrid, |c| c.blocking = BlockingSchedule::contiguous(30.0));
        let r = run_scenario(&t, &[Flow::bulk(1, 60.0)], 1).unwrap();
        let h = r.flows[0].throughput_mbps.unwrap();
        assert!((h - 35.0).abs() < 1e-6, "{h}");
    }

    #[test]
    fn conservation() {
        for mode in Mode::ALL {
            let t = topo(mode, |c| c.contenders = 5);
            let r = run_scenario(&t, &[Flow::bulk(1, 1.0), Flow::page_load(2, PageSpec::default(), 0.0)], 9).unwrap();
            for f in &r.flows {
                assert!(f.delivered_bytes <= f.sent_bytes + 1e-6, "{mode:?} {f:?}");
                assert!(f.completed_s.is_some());
            }
        }
    }

    #[test]
    fn horizon_is_enforced() {
        let t = topo(Mode::WifiOnly, |c| c.horizon_s = 1.0);
        let err = run_scenario(&t, &[Flow::bulk(1, 5.0)], 1).unwrap_err();
        assert!(matches!(err, EngineError::Horizon(_)));
    }
}
