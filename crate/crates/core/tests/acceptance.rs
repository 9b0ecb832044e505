//! Acceptance criteria 1-9. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured values, then asserts. Run with `--nocapture` to
//! see the lines.

mod common;

use std::time::{Duration, Instant};

use common::bond::{capacities, conservation, failover_empties, ops, totality, widest_first};
use common::{oracle_ip_checksum, oracle_transport_checksum, random_frame, relay_config, spoof_config};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use vlcwifi::channel::{vlc_throughput, VlcChannel};
use vlcwifi::engine::{run_scenario, trace_handshake, Flow, Mode, ScenarioConfig, Topology};
use vlcwifi::experiment::{emit_plotdata, run_experiment, ExperimentKind, ExperimentSpec, ExperimentTable, Sweep};
use vlcwifi::frame::Frame;
use vlcwifi::relay::relay_step;
use vlcwifi::spoof::uplink_rewrite;

const SEEDS: u32 = 10;

fn verdict(n: u32, ok: bool, elapsed: Duration, limit: Duration, detail: String) {
    let in_time = elapsed < limit;
    let status = if ok && in_time { "PASS" } else { "FAIL" };
    println!("criterion {n}: {status} ({detail}; {:.2} s, limit {} s)", elapsed.as_secs_f64(), limit.as_secs());
    assert!(ok, "criterion {n} failed: {detail}");
    assert!(in_time, "criterion {n} over its time budget");
}

fn experiment(kind: ExperimentKind, modes: &[Mode], sweep: Option<Sweep>) -> ExperimentTable {
    let mut spec = ExperimentSpec { seeds: SEEDS, modes: modes.to_vec(), ..ExperimentSpec::new(kind) };
    if let Some(s) = sweep {
        spec.sweep = s;
    }
    run_experiment(&spec).unwrap()
}

fn mean(t: &ExperimentTable, series: &str, x: f64) -> f64 {
    t.get(series, x).unwrap_or_else(|| panic!("no {series} row at {x}")).mean
}

fn vlc_at(d: f64) -> f64 {
    vlc_throughput(&VlcChannel { vertical_m: d, ..VlcChannel::default() })
}

#[test]
fn criterion_1_calibration_anchors() {
    let t0 = Instant::now();
    let t = experiment(ExperimentKind::Contenders, &[Mode::WifiOnly], Some(Sweep::new(1.0, 1.0, 1.0)));
    let wifi = mean(&t, "wifi_only", 1.0);
    let (v2, v5) = (vlc_at(2.0), vlc_at(5.0));
    let ok = (wifi - 30.0).abs() <= 0.05 * 30.0 && v2 == 74.0 && v5 == 25.0;
    verdict(
        1,
        ok,
        t0.elapsed(),
        Duration::from_secs(1),
        format!("wifi_only n=1 {wifi:.3} Mbps, vlc(2 m) {v2} Mbps, vlc(5 m) {v5} Mbps"),
    );
}

#[test]
fn criterion_2_throughput_vs_contenders() {
    let t0 = Instant::now();
    let t = experiment(ExperimentKind::Contenders, &Mode::ALL, Some(Sweep::new(1.0, 6.0, 1.0)));
    let elapsed = t0.elapsed();
    let mut ok = true;
    let mut worst_flat: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for n in 1..=6 {
        let x = f64::from(n);
        let (w, h, a) = (mean(&t, "wifi_only", x), mean(&t, "hybrid", x), mean(&t, "aggregated", x));
        let flat = (h - 70.0).abs() / 70.0;
        let sum = (a - (w + h)).abs() / (w + h);
        worst_flat = worst_flat.max(flat);
        worst_sum = worst_sum.max(sum);
        ok &= flat <= 0.05 && sum <= 0.10;
    }
    let ratio = mean(&t, "hybrid", 6.0) / mean(&t, "wifi_only", 6.0);
    ok &= ratio >= 4.5;
    verdict(
        2,
        ok,
        elapsed,
        Duration::from_secs(10),
        format!(
            "hybrid max deviation from 70 {:.2}%, hybrid/wifi_only at n=6 {ratio:.2}, aggregated max deviation from wifi+hybrid {:.2}%",
            100.0 * worst_flat,
            100.0 * worst_sum
        ),
    );
}

#[test]
fn criterion_3_distance_crossover() {
    let t0 = Instant::now();
    let t = experiment(ExperimentKind::Distance, &[Mode::WifiOnly, Mode::Hybrid], Some(Sweep::new(2.0, 5.0, 0.05)));
    let crossover = t
        .xs()
        .into_iter()
        .find(|&d| mean(&t, "wifi_only", d) >= mean(&t, "hybrid", d))
        .unwrap_or(f64::NAN);
    let ok = (3.8..=4.4).contains(&crossover);
    verdict(3, ok, t0.elapsed(), Duration::from_secs(10), format!("crossover at {crossover} m"));
}

#[test]
fn criterion_4_blocking() {
    let t0 = Instant::now();
    let t = experiment(ExperimentKind::Blocking, &Mode::ALL, Some(Sweep::new(0.0, 30.0, 5.0)));
    let baseline = experiment(ExperimentKind::Contenders, &[Mode::WifiOnly], Some(Sweep::new(1.0, 1.0, 1.0)));
    let wifi_single = mean(&baseline, "wifi_only", 1.0);
    let hybrid_30 = mean(&t, "hybrid", 30.0);
    let mut ok = hybrid_30 > wifi_single;
    let mut min_margin = f64::INFINITY;
    for x in t.xs() {
        let margin = mean(&t, "aggregated", x) - mean(&t, "wifi_only", x);
        min_margin = min_margin.min(margin);
        ok &= margin >= 0.0;
    }
    verdict(
        4,
        ok,
        t0.elapsed(),
        Duration::from_secs(10),
        format!("hybrid at 30 s/min {hybrid_30:.3} vs wifi_only single user {wifi_single:.3}; min aggregated - wifi_only {min_margin:.3} Mbps"),
    );
}

#[test]
fn criterion_5_page_load_ordering() {
    let t0 = Instant::now();
    let t = experiment(ExperimentKind::LoadTime, &Mode::ALL, None);
    let (w, h, a) = (mean(&t, "wifi_only", 10.0), mean(&t, "hybrid", 10.0), mean(&t, "aggregated", 10.0));
    // the band applies to every run, not just the mean
    let spec = ExperimentSpec::new(ExperimentKind::LoadTime);
    let mut band_ok = true;
    let mut worst: f64 = 0.0;
    for mode in [Mode::Hybrid, Mode::Aggregated] {
        let cfg = ScenarioConfig { mode, contenders: 9, ..ScenarioConfig::default() };
        let topo = Topology::from_config(&cfg).unwrap();
        for seed in 0..u64::from(SEEDS) {
            let r = run_scenario(&topo, &[Flow::page_load(1, spec.page, spec.page_start_s)], seed).unwrap();
            let lt = r.flows[0].page_load_time_s.unwrap();
            worst = worst.max(lt);
            band_ok &= (0.0..=5.0).contains(&lt);
        }
    }
    let page_mb = spec.page.total_bytes as f64 / 1e6;
    let ok = h <= a && a <= w && band_ok && (1.0..=2.0).contains(&page_mb);
    verdict(
        5,
        ok,
        t0.elapsed(),
        Duration::from_secs(10),
        format!("{page_mb} MB page, mean load hybrid {h:.3} s <= aggregated {a:.3} s <= wifi_only {w:.3} s; slowest hybrid/aggregated run {worst:.3} s"),
    );
}

#[test]
fn criterion_6_frame_oracle_equivalence() {
    let t0 = Instant::now();
    let (rcfg, scfg) = (relay_config(), spoof_config());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut checked, mut rewrites, mut bad) = (0, 0, Vec::new());
    for i in 0..10_000 {
        let mut f = random_frame(&mut rng);
        if let Some(p) = f.ipv4_mut() {
            match rng.random_range(0..3) {
                0 => p.dst = rcfg.client_wifi_ip,
                1 => p.src = scfg.vlc_if.ip,
                _ => {}
            }
        }
        let bytes = f.to_bytes();
        if Frame::parse(&bytes).as_ref() != Ok(&f) {
            bad.push(format!("frame {i}: parse(serialize) differs"));
        }
        if let Some(p) = f.ipv4() {
            checked += 1;
            if p.compute_header_checksum() != oracle_ip_checksum(p)
                || p.compute_transport_checksum() != oracle_transport_checksum(p)
            {
                bad.push(format!("frame {i}: checksum differs from oracle"));
            }
        }
        for out in [relay_step(&f, &rcfg), uplink_rewrite(&f, &scfg)].into_iter().flatten() {
            rewrites += 1;
            if !out.verify_checksums() {
                bad.push(format!("frame {i}: rewrite output fails verify_checksums"));
            }
        }
    }
    verdict(
        6,
        bad.is_empty(),
        t0.elapsed(),
        Duration::from_secs(5),
        format!(
            "10000 frames, {checked} IPv4 checksummed against oracle, {rewrites} relay/spoof rewrites verified, {} mismatches{}",
            bad.len(),
            bad.first().map(|b| format!(", first: {b}")).unwrap_or_default()
        ),
    );
}

#[test]
fn criterion_7_hybrid_handshake_tuple() {
    let t0 = Instant::now();
    let cfg = ScenarioConfig { mode: Mode::Hybrid, ..ScenarioConfig::default() };
    let topo = Topology::from_config(&cfg).unwrap();
    let r = run_scenario(&topo, &[Flow::bulk(1, 0.1)], 7).unwrap();
    let report = trace_handshake(&r, 1).unwrap();
    let f = &r.flows[0];
    let local = f.local.map(|a| *a.ip());
    let ok = local == Some(cfg.addressing.client_vlc.ip)
        && f.established_s.is_some()
        && report.uplink == ["B-2", "B-1", "LAN", "WAN"]
        && report.downlink == ["WAN", "LAN", "A-1", "A-2", "B-2"]
        && r.socket_mismatches == 0;
    verdict(
        7,
        ok,
        t0.elapsed(),
        Duration::from_secs(1),
        format!("socket bound to {local:?}, uplink {:?}, downlink {:?}", report.uplink, report.downlink),
    );
}

#[test]
fn criterion_8_bond_properties() {
    let t0 = Instant::now();
    let cfg = Config { cases: 1_000, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(cfg.clone(), TestRng::deterministic_rng(cfg.rng_algorithm));
    let mut failed = Vec::new();
    let mut check = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failed.push(format!("{name}: {e}"));
        }
    };
    check("totality", runner.run(&(capacities(), ops()), |(c, o)| totality(c, o)).map_err(|e| e.to_string()));
    check("conservation", runner.run(&(capacities(), ops()), |(c, o)| conservation(c, o)).map_err(|e| e.to_string()));
    check(
        "largest-capacity-first",
        runner
            .run(&(capacities(), 0.01f64..1.0, 0.01f64..100.0), |(c, f, s)| widest_first(c, f, s))
            .map_err(|e| e.to_string()),
    );
    check(
        "failover emptiness",
        runner
            .run(&(capacities(), ops(), 0usize..4), |(c, o, v)| failover_empties(c, o, v))
            .map_err(|e| e.to_string()),
    );
    verdict(
        8,
        failed.is_empty(),
        t0.elapsed(),
        Duration::from_secs(5),
        if failed.is_empty() {
            "4 properties x 1000 cases".to_string()
        } else {
            failed.join("; ")
        },
    );
}

#[test]
fn criterion_9_determinism() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for run in 0..2 {
        let t = experiment(ExperimentKind::Contenders, &Mode::ALL, Some(Sweep::new(1.0, 6.0, 1.0)));
        let path = dir.path().join(format!("run{run}/contenders.csv"));
        let (csv, dat) = emit_plotdata(&t, &path).unwrap();
        let mut h = Sha256::new();
        h.update(std::fs::read(csv).unwrap());
        h.update(std::fs::read(dat).unwrap());
        h.update(t.to_csv());
        digests.push(hex::encode(h.finalize()));
    }
    verdict(
        9,
        digests[0] == digests[1],
        t0.elapsed(),
        Duration::from_secs(10),
        format!("sha256 {} vs {}", &digests[0][..16], &digests[1][..16]),
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Criterion 9 beyond the fixed seeds: any seed set reproduces itself.
    #[test]
    fn any_seed_reproduces(seed in any::<u64>(), contenders in 0u32..8) {
        let cfg = ScenarioConfig { mode: Mode::Aggregated, contenders, ..ScenarioConfig::default() };
        let topo = Topology::from_config(&cfg).unwrap();
        let flows = [Flow::bulk(1, 0.5)];
        prop_assert_eq!(run_scenario(&topo, &flows, seed).unwrap(), run_scenario(&topo, &flows, seed).unwrap());
    }
}
