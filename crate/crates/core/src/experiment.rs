//! Parameter sweeps over the three access systems, averaged over seeds.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{vlc_throughput, BlockingSchedule, MINUTE_S};
use crate::engine::{run_scenario, EngineError, Flow, Mode, PageSpec, ScenarioConfig, Topology};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("{mode} at {x} (seed {seed}): {source}")]
    Run {
        mode: &'static str,
        x: f64,
        seed: u64,
        #[source]
        source: EngineError,
    },
    #[error("empty table, nothing to write")]
    EmptyTable,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::Invalid { field, reason: reason.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Selected user's bulk throughput against the number of WiFi users.
    Contenders,
    /// Page load time with the other WiFi users saturating the channel.
    LoadTime,
    /// Bulk throughput against VLC transmitter distance.
    Distance,
    /// Bulk throughput against seconds of VLC blocking per minute.
    Blocking,
    /// The VLC link model on its own.
    VlcCurve,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Contenders,
        ExperimentKind::LoadTime,
        ExperimentKind::Distance,
        ExperimentKind::Blocking,
        ExperimentKind::VlcCurve,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Contenders => "contenders",
            ExperimentKind::LoadTime => "load_time",
            ExperimentKind::Distance => "distance",
            ExperimentKind::Blocking => "blocking",
            ExperimentKind::VlcCurve => "vlc_curve",
        }
    }

    /// Name of the swept column.
    pub fn x_name(self) -> &'static str {
        match self {
            ExperimentKind::Contenders => "n",
            ExperimentKind::LoadTime => "clients",
            ExperimentKind::Distance | ExperimentKind::VlcCurve => "distance_m",
            ExperimentKind::Blocking => "blocked_s_per_min",
        }
    }

    pub fn metric(self) -> &'static str {
        match self {
            ExperimentKind::LoadTime => "page_load_s",
            _ => "throughput_mbps",
        }
    }

    pub fn default_sweep(self) -> Sweep {
        match self {
            ExperimentKind::Contenders => Sweep::new(1.0, 6.0, 1.0),
            ExperimentKind::LoadTime => Sweep::new(10.0, 10.0, 1.0),
            ExperimentKind::Distance => Sweep::new(2.0, 5.0, 0.1),
            ExperimentKind::Blocking => Sweep::new(0.0, 30.0, 5.0),
            ExperimentKind::VlcCurve => Sweep::new(0.5, 6.0, 0.1),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ExperimentKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| invalid("experiment", format!("unknown experiment {s:?}")))
    }
}

/// Inclusive range `start:stop:step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    pub fn new(start: f64, stop: f64, step: f64) -> Self {
        Sweep { start, stop, step }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if ![self.start, self.stop, self.step].iter().all(|v| v.is_finite()) {
            return Err(invalid("sweep", "bounds must be finite"));
        }
        if self.step <= 0.0 {
            return Err(invalid("sweep", "step must be positive"));
        }
        if self.stop < self.start {
            return Err(invalid("sweep", "stop is below start"));
        }
        if (self.stop - self.start) / self.step > 100_000.0 {
            return Err(invalid("sweep", "too many points"));
        }
        Ok(())
    }

    /// Points computed as start + i*step, rounded to 9 decimals so that
    /// 0.1 steps print cleanly.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9).collect()
    }
}

impl FromStr for Sweep {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| invalid("sweep", format!("{p:?} is not a number")));
        let sweep = match parts.as_slice() {
            [a] => {
                let v = num(a)?;
                Sweep::new(v, v, 1.0)
            }
            [a, b] => Sweep::new(num(a)?, num(b)?, 1.0),
            [a, b, c] => Sweep::new(num(a)?, num(b)?, num(c)?),
            _ => return Err(invalid("sweep", "expected start:stop:step")),
        };
        sweep.validate()?;
        Ok(sweep)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    pub modes: Vec<Mode>,
    pub sweep: Sweep,
    pub seeds: u32,
    /// Channel, addressing and timing settings shared by every run. Its mode,
    /// contenders and flows are overridden per run.
    pub base: ScenarioConfig,
    pub bulk_s: f64,
    /// Length of the bulk window in the blocking experiment; one full
    /// blocking period by default so the duty cycle averages out.
    pub blocking_window_s: f64,
    pub page: PageSpec,
    pub page_start_s: f64,
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentSpec {
            experiment,
            modes: Mode::ALL.to_vec(),
            sweep: experiment.default_sweep(),
            seeds: 100,
            base: ScenarioConfig::default(),
            bulk_s: 5.0,
            blocking_window_s: MINUTE_S,
            page: PageSpec::default(),
            page_start_s: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.sweep.validate()?;
        if self.seeds == 0 {
            return Err(invalid("seeds", "need at least one seed"));
        }
        if self.modes.is_empty() && self.experiment != ExperimentKind::VlcCurve {
            return Err(invalid("modes", "no modes selected"));
        }
        let mut seen = Vec::new();
        for m in &self.modes {
            if seen.contains(m) {
                return Err(invalid("modes", format!("{} listed twice", m.label())));
            }
            seen.push(*m);
        }
        if !(self.bulk_s > 0.0) {
            return Err(invalid("bulk_s", "must be positive"));
        }
        if !(self.blocking_window_s > 0.0) {
            return Err(invalid("blocking_window_s", "must be positive"));
        }
        if !(self.page_start_s >= 0.0) {
            return Err(invalid("page_start_s", "must be non-negative"));
        }
        let pts = self.sweep.points();
        let (lo, hi) = (pts[0], *pts.last().expect("non-empty"));
        match self.experiment {
            ExperimentKind::Contenders | ExperimentKind::LoadTime => {
                if lo < 1.0 || pts.iter().any(|x| x.fract() != 0.0) {
                    return Err(invalid("sweep", "user counts must be whole numbers of at least 1"));
                }
            }
            ExperimentKind::Distance | ExperimentKind::VlcCurve => {
                if lo < 0.0 {
                    return Err(invalid("sweep", "distance cannot be negative"));
                }
            }
            ExperimentKind::Blocking => {
                if lo < 0.0 || hi > MINUTE_S {
                    return Err(invalid("sweep", "blocking must lie in 0..=60 s per minute"));
                }
            }
        }
        Topology::from_config(&self.base).map_err(|e| invalid("config", e.to_string()))?;
        Ok(())
    }

    fn series(&self) -> Vec<&'static str> {
        if self.experiment == ExperimentKind::VlcCurve {
            vec!["vlc"]
        } else {
            self.modes.iter().map(|m| m.label()).collect()
        }
    }

    /// Scenario and flows for one run.
    fn scenario(&self, mode: Mode, x: f64, seed: u64) -> (ScenarioConfig, Vec<Flow>) {
        let mut cfg = ScenarioConfig { mode, flows: Vec::new(), ..self.base.clone() };
        let flows = match self.experiment {
            ExperimentKind::Contenders => {
                cfg.contenders = x as u32 - 1;
                vec![Flow::bulk(1, self.bulk_s)]
            }
            ExperimentKind::LoadTime => {
                cfg.contenders = x as u32 - 1;
                vec![Flow::page_load(1, self.page, self.page_start_s)]
            }
            ExperimentKind::Distance => {
                cfg.vlc.vertical_m = x;
                vec![Flow::bulk(1, self.bulk_s)]
            }
            ExperimentKind::Blocking => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x626c_6f63_6b00);
                cfg.blocking = BlockingSchedule {
                    blocked_seconds_per_minute: x,
                    offset_s: rng.random_range(0.0..MINUTE_S),
                    ..self.base.blocking
                };
                vec![Flow::bulk(1, self.blocking_window_s)]
            }
            ExperimentKind::VlcCurve => unreachable!("no scenario behind the curve"),
        };
        (cfg, flows)
    }

    fn run_one(&self, mode: Mode, x: f64, seed: u64) -> Result<f64, ExperimentError> {
        let err = |source| ExperimentError::Run { mode: mode.label(), x, seed, source };
        let (cfg, flows) = self.scenario(mode, x, seed);
        let topo = Topology::from_config(&cfg).map_err(err)?;
        let res = run_scenario(&topo, &flows, seed).map_err(err)?;
        let f = &res.flows[0];
        let v = match self.experiment {
            ExperimentKind::LoadTime => f.page_load_time_s,
            _ => f.throughput_mbps,
        };
        v.ok_or_else(|| err(EngineError::FlowIncomplete(f.id)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub series: String,
    pub x: f64,
    pub mean: f64,
    pub std: f64,
    pub samples: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub experiment: ExperimentKind,
    pub series: Vec<String>,
    pub rows: Vec<Row>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (mode, point, seed) combination on the rayon pool. Seeds are
/// 0..spec.seeds and shared across modes and points.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable, ExperimentError> {
    spec.validate()?;
    let points = spec.sweep.points();
    let series = spec.series();
    let mut rows = Vec::new();
    if spec.experiment == ExperimentKind::VlcCurve {
        for &x in &points {
            let ch = crate::channel::VlcChannel { vertical_m: x, ..spec.base.vlc.clone() };
            let v = vlc_throughput(&ch);
            rows.push(Row { series: "vlc".into(), x, mean: v, std: 0.0, samples: 1 });
        }
    } else {
        let jobs: Vec<(Mode, f64)> =
            spec.modes.iter().flat_map(|&m| points.iter().map(move |&x| (m, x))).collect();
        let results: Vec<Result<Row, ExperimentError>> = jobs
            .par_iter()
            .map(|&(mode, x)| {
                let samples = (0..u64::from(spec.seeds))
                    .into_par_iter()
                    .map(|seed| spec.run_one(mode, x, seed))
                    .collect::<Result<Vec<f64>, _>>()?;
                let (mean, std) = mean_std(&samples);
                Ok(Row { series: mode.label().into(), x, mean, std, samples: spec.seeds })
            })
            .collect();
        for r in results {
            rows.push(r?);
        }
    }
    Ok(ExperimentTable {
        experiment: spec.experiment,
        series: series.into_iter().map(String::from).collect(),
        rows,
    })
}

impl ExperimentTable {
    pub fn get(&self, series: &str, x: f64) -> Option<&Row> {
        self.rows.iter().find(|r| r.series == series && (r.x - x).abs() < 1e-9)
    }

    pub fn xs(&self) -> Vec<f64> {
        let mut xs: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !xs.iter().any(|x| (x - r.x).abs() < 1e-9) {
                xs.push(r.x);
            }
        }
        xs
    }

    /// One row per (series, point).
    pub fn to_csv(&self) -> String {
        let mut out = format!("experiment,series,{},metric,mean,std,samples\n", self.experiment.x_name());
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{}",
                self.experiment,
                r.series,
                r.x,
                self.experiment.metric(),
                r.mean,
                r.std,
                r.samples
            );
        }
        out
    }

    /// One row per point, a mean and std column pair per series.
    pub fn to_wide_csv(&self) -> String {
        self.wide(",", "")
    }

    /// Same columns, whitespace separated with a commented header, for gnuplot.
    pub fn to_dat(&self) -> String {
        self.wide(" ", "# ")
    }

    fn wide(&self, sep: &str, comment: &str) -> String {
        let mut header = vec![self.experiment.x_name().to_string()];
        for s in &self.series {
            header.push(format!("{s}_mean"));
            header.push(format!("{s}_std"));
        }
        let mut out = format!("{comment}{}\n", header.join(sep));
        for x in self.xs() {
            let mut cols = vec![format!("{x}")];
            for s in &self.series {
                match self.get(s, x) {
                    Some(r) => {
                        cols.push(format!("{:.6}", r.mean));
                        cols.push(format!("{:.6}", r.std));
                    }
                    None => cols.extend(["nan".to_string(), "nan".to_string()]),
                }
            }
            out.push_str(&cols.join(sep));
            out.push('\n');
        }
        out
    }
}

/// Writes the wide CSV to `out_path` and the gnuplot columns next to it with
/// a `.dat` extension. Returns both paths.
pub fn emit_plotdata(table: &ExperimentTable, out_path: &Path) -> Result<(PathBuf, PathBuf), ExperimentError> {
    if table.rows.is_empty() {
        return Err(ExperimentError::EmptyTable);
    }
    let dat = out_path.with_extension("dat");
    for (path, body) in [(out_path.to_path_buf(), table.to_wide_csv()), (dat.clone(), table.to_dat())] {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.to_path_buf(), source })?;
        }
        fs::write(&path, body).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
    }
    Ok((out_path.to_path_buf(), dat))
}
