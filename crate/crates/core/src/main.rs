use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use vlcwifi::engine::{run_scenario, Mode, ScenarioConfig, Topology};
use vlcwifi::experiment::{emit_plotdata, run_experiment, ExperimentKind, ExperimentSpec, Sweep};

/// Sweep the WiFi-only, hybrid and aggregated access systems, or run a
/// single scenario file.
#[derive(Parser, Debug)]
#[command(name = "vlcwifi", version)]
struct Cli {
    /// contenders, load_time, distance, blocking or vlc_curve. Without it the
    /// flows in --config are run once.
    #[arg(long)]
    experiment: Option<ExperimentKind>,
    /// Comma-separated subset of wifi_only,hybrid,aggregated.
    #[arg(long, value_delimiter = ',', default_value = "wifi_only,hybrid,aggregated")]
    modes: Vec<Mode>,
    /// start:stop:step, inclusive. Defaults depend on the experiment.
    #[arg(long)]
    sweep: Option<Sweep>,
    #[arg(long, default_value_t = 100)]
    seeds: u32,
    /// JSON scenario file; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for a single scenario run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the frame trace of a single scenario run.
    #[arg(long)]
    trace: bool,
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, String> {
    let Some(path) = path else {
        return Ok(ScenarioConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, body: &str) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    fs::write(path, body).map_err(|e| format!("{}: {e}", path.display()))
}

fn experiment(cli: &Cli, kind: ExperimentKind, base: ScenarioConfig) -> Result<(), String> {
    let spec = ExperimentSpec {
        modes: cli.modes.clone(),
        sweep: cli.sweep.unwrap_or(kind.default_sweep()),
        seeds: cli.seeds,
        base,
        ..ExperimentSpec::new(kind)
    };
    let table = run_experiment(&spec).map_err(|e| e.to_string())?;
    let (csv, dat) = emit_plotdata(&table, &cli.out.join(format!("{kind}.csv"))).map_err(|e| e.to_string())?;
    let summary = cli.out.join(format!("{kind}_summary.csv"));
    write(&summary, &table.to_csv())?;
    print!("{}", table.to_wide_csv());
    eprintln!("wrote {}, {}, {}", csv.display(), dat.display(), summary.display());
    Ok(())
}

fn scenario(cli: &Cli, cfg: ScenarioConfig) -> Result<(), String> {
    if cfg.flows.is_empty() {
        return Err("no --experiment given and the scenario has no flows".into());
    }
    let topo = Topology::from_config(&cfg).map_err(|e| e.to_string())?;
    let res = run_scenario(&topo, &cfg.flows, cli.seed).map_err(|e| e.to_string())?;
    if cli.trace {
        print!("{}", res.trace_text());
    }
    println!("id,kind,local,remote,established_s,throughput_mbps,page_load_s,delivered_bytes");
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
    for f in &res.flows {
        println!(
            "{},{},{},{},{},{},{},{:.0}",
            f.id,
            f.kind,
            f.local.map_or_else(String::new, |a| a.to_string()),
            f.remote,
            opt(f.established_s),
            opt(f.throughput_mbps),
            opt(f.page_load_time_s),
            f.delivered_bytes
        );
    }
    if let Some(stats) = res.relay_stats {
        write(&cli.out.join("relay_stats.csv"), &stats.to_csv())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(cli.config.as_deref()).and_then(|cfg| match cli.experiment {
        Some(kind) => experiment(&cli, kind, cfg),
        None => scenario(&cli, cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
