use vlcwifi::channel::BlockingSchedule;
use vlcwifi::engine::{run_scenario, Direction, EngineError, Flow, FrameTag, Mode, PageSpec, ScenarioConfig, Topology};

fn topo(cfg: ScenarioConfig) -> Topology {
    Topology::from_config(&cfg).unwrap()
}

#[test]
fn each_mode_binds_the_expected_address() {
    let a = ScenarioConfig::default().addressing;
    for (mode, ip) in [(Mode::WifiOnly, a.client_wifi.ip), (Mode::Hybrid, a.client_vlc.ip), (Mode::Aggregated, a.bond_ip)] {
        let r = run_scenario(&topo(ScenarioConfig { mode, ..ScenarioConfig::default() }), &[Flow::bulk(1, 0.2)], 3).unwrap();
        assert_eq!(r.flows[0].local.map(|s| *s.ip()), Some(ip), "{mode:?}");
        assert_eq!(r.socket_mismatches, 0);
        assert!(r.flows[0].frames_accepted >= 2, "SYN-ACK and first data segment");
    }
}

#[test]
fn hybrid_relay_sees_only_downlink() {
    let r = run_scenario(&topo(ScenarioConfig::default()), &[Flow::bulk(1, 0.2), Flow::bulk(2, 0.2)], 1).unwrap();
    let s = r.relay_stats.unwrap();
    // SYN-ACK and one data segment per flow
    assert_eq!(s.forwarded, 4);
    assert!(s.is_consistent());
    // nothing the client sends is ever captured by the relay
    assert!(!r.trace.iter().any(|e| e.node == "relay" && matches!(e.tag, FrameTag::Syn | FrameTag::Ack)));
}

#[test]
fn aggregated_bond_answers_the_router_through_a_slave() {
    let r = run_scenario(
        &topo(ScenarioConfig { mode: Mode::Aggregated, ..ScenarioConfig::default() }),
        &[Flow::bulk(1, 1.0)],
        5,
    )
    .unwrap();
    let b = r.bond.unwrap();
    assert!(b.arp_intercepts >= 1);
    assert_eq!(b.tx_frames.len(), 2);
    // frames leave through slaves only; the bond itself is a trace label
    assert!(r.trace.iter().filter(|e| e.node == "client" && e.dir == Direction::Tx).all(|e| ["bond0", "C-1", "C-2"].contains(&e.iface.as_str())));
    assert!(r.flows[0].throughput_mbps.unwrap() > 100.0);
}

#[test]
fn aggregated_page_fails_over_when_vlc_blocks_midway() {
    let page = PageSpec { object_count: 40, total_bytes: 2_000_000, sequential_rounds: 4 };
    let mut cfg = ScenarioConfig { mode: Mode::Aggregated, contenders: 2, ..ScenarioConfig::default() };
    cfg.blocking = BlockingSchedule { blocked_seconds_per_minute: 50.0, offset_s: 0.25, ..BlockingSchedule::default() };
    let r = run_scenario(&topo(cfg), &[Flow::page_load(1, page, 0.0)], 2).unwrap();
    let f = &r.flows[0];
    assert!(f.page_load_time_s.unwrap() > 0.0);
    assert!((f.delivered_bytes - page.total_bytes as f64).abs() < page.total_bytes as f64 * 0.01 + 2000.0);
    assert!(r.bond.unwrap().slave_state_changes >= 1);
}

#[test]
fn hybrid_waits_out_a_block_during_the_handshake() {
    let cfg = ScenarioConfig {
        blocking: BlockingSchedule { blocked_seconds_per_minute: 10.0, offset_s: 0.0, ..BlockingSchedule::default() },
        ..ScenarioConfig::default()
    };
    let r = run_scenario(&topo(cfg), &[Flow::bulk(1, 1.0)], 1).unwrap();
    // the SYN-ACK is held on the dark VLC link until t = 10 s
    assert!(r.flows[0].established_s.unwrap() >= 10.0);
    assert!((r.flows[0].throughput_mbps.unwrap() - 70.0).abs() < 1e-6);
}

#[test]
fn bad_flows_are_rejected() {
    let t = topo(ScenarioConfig::default());
    let dup = run_scenario(&t, &[Flow::bulk(1, 1.0), Flow::bulk(1, 1.0)], 0).unwrap_err();
    assert!(matches!(dup, EngineError::Flow { id: 1, .. }));
    let mut f = Flow::bulk(2, 1.0);
    f.client = "nobody".into();
    assert!(run_scenario(&t, &[f], 0).is_err());
    assert!(run_scenario(&t, &[Flow::bulk(3, -1.0)], 0).is_err());
}

#[test]
fn no_flows_is_an_empty_result() {
    let r = run_scenario(&topo(ScenarioConfig::default()), &[], 0).unwrap();
    assert!(r.flows.is_empty() && r.trace.is_empty());
}

#[test]
fn contenders_slow_wifi_but_not_hybrid() {
    let run = |mode, contenders| {
        let r = run_scenario(&topo(ScenarioConfig { mode, contenders, ..ScenarioConfig::default() }), &[Flow::bulk(1, 5.0)], 11).unwrap();
        r.flows[0].throughput_mbps.unwrap()
    };
    assert!(run(Mode::WifiOnly, 5) < run(Mode::WifiOnly, 0) / 4.0);
    assert_eq!(run(Mode::Hybrid, 5), run(Mode::Hybrid, 0));
}
