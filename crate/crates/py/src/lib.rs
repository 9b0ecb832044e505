//! Python bindings: sweeps, channel models and frame helpers.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use vlcwifi::channel::{vlc_throughput, wifi_per_user_throughput, VlcChannel, WifiChannel};
use vlcwifi::engine::Mode;
use vlcwifi::experiment::{self, ExperimentKind, ExperimentSpec, Sweep};
use vlcwifi::frame::{self, Frame};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Runs a sweep and returns the long-format CSV table.
#[pyfunction]
#[pyo3(signature = (experiment, modes=None, sweep=None, seeds=100))]
fn run_experiment(
    py: Python<'_>,
    experiment: &str,
    modes: Option<Vec<String>>,
    sweep: Option<&str>,
    seeds: u32,
) -> PyResult<String> {
    let kind: ExperimentKind = experiment.parse().map_err(value_err)?;
    let mut spec = ExperimentSpec::new(kind);
    if let Some(modes) = modes {
        spec.modes = modes.iter().map(|m| m.parse::<Mode>()).collect::<Result<_, _>>().map_err(value_err)?;
    }
    if let Some(sweep) = sweep {
        spec.sweep = sweep.parse::<Sweep>().map_err(value_err)?;
    }
    spec.seeds = seeds;
    let table = py.allow_threads(|| experiment::run_experiment(&spec)).map_err(value_err)?;
    Ok(table.to_csv())
}

/// VLC link rate in Mbps at the given offsets from the transmitter.
#[pyfunction]
#[pyo3(signature = (vertical_m, horizontal_m=0.0))]
fn vlc_rate(vertical_m: f64, horizontal_m: f64) -> f64 {
    vlc_throughput(&VlcChannel { vertical_m, horizontal_m, ..VlcChannel::default() })
}

/// Per-station WiFi throughput in Mbps with `n` saturated stations.
#[pyfunction]
fn wifi_per_user(n: u32) -> PyResult<f64> {
    wifi_per_user_throughput(&WifiChannel::default(), n).map_err(value_err)
}

/// Internet checksum of an IPv4 header given with its checksum field zeroed.
#[pyfunction]
fn ipv4_checksum(header: &[u8]) -> PyResult<u16> {
    frame::ipv4_checksum(header).map_err(value_err)
}

/// One-line description of an Ethernet frame; raises on malformed bytes.
#[pyfunction]
fn frame_summary(bytes: &[u8]) -> PyResult<String> {
    Frame::parse(bytes).map(|f| f.summary()).map_err(value_err)
}

/// True when every checksum in the frame verifies.
#[pyfunction]
fn frame_checksums_ok(bytes: &[u8]) -> PyResult<bool> {
    Frame::parse(bytes).map(|f| f.verify_checksums()).map_err(value_err)
}

#[pymodule]
fn vlcwifi_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(vlc_rate, m)?)?;
    m.add_function(wrap_pyfunction!(wifi_per_user, m)?)?;
    m.add_function(wrap_pyfunction!(ipv4_checksum, m)?)?;
    m.add_function(wrap_pyfunction!(frame_summary, m)?)?;
    m.add_function(wrap_pyfunction!(frame_checksums_ok, m)?)?;
    Ok(())
}
