//! Deterministic discrete-event engine for the WiFi-only, hybrid and
//! aggregated topologies.
//!
//! Connection setup runs frame by frame through the real rewrites (spoof
//! capture, router forwarding, relay, bond ARP handling). Once a connection
//! is up, data moves as a fluid at the path's current rate; rates change
//! only at events (ticks, blocking edges, transfer completions).

mod page;
mod router;
mod sim;
mod topology;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bond::BondError;
use crate::channel::ChannelError;
use crate::relay::RelayError;
use crate::spoof::SpoofError;

pub use page::{page_load_time, PageSpec};
pub use router::{NextHop, Router, RouterPort, StaticRoute};
pub use sim::{run_scenario, BondCounters, FlowResult, ScenarioResult};
pub use topology::{Addressing, Endpoint, Host, HostRole, Link, LinkKind, ScenarioConfig, Topology};
pub use trace::{Direction, FrameTag, PathReport, TraceEntry};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no route to {0}")]
    NoRoute(std::net::Ipv4Addr),
    #[error("topology: {0}")]
    Topology(String),
    #[error("flow {id}: {reason}")]
    Flow { id: u32, reason: String },
    #[error("flow {0} not found")]
    FlowNotFound(u32),
    #[error("flow {0} did not complete its handshake")]
    FlowIncomplete(u32),
    #[error("deadlock at {time_s:.3} s: {pending} flow(s) pending and no event can fire")]
    Deadlock { time_s: f64, pending: usize },
    #[error("simulation passed the {0} s horizon")]
    Horizon(f64),
    #[error("destination unreachable: path capacity is zero")]
    Unreachable,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Bond(#[from] BondError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Spoof(#[from] SpoofError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    WifiOnly,
    Hybrid,
    Aggregated,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::WifiOnly, Mode::Hybrid, Mode::Aggregated];

    pub fn label(self) -> &'static str {
        match self {
            Mode::WifiOnly => "wifi_only",
            Mode::Hybrid => "hybrid",
            Mode::Aggregated => "aggregated",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wifi_only" | "wifi-only" | "wifi" => Ok(Mode::WifiOnly),
            "hybrid" => Ok(Mode::Hybrid),
            "aggregated" => Ok(Mode::Aggregated),
            _ => Err(format!("unknown mode {s:?} (expected wifi_only, hybrid or aggregated)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FlowKind {
    /// Saturating download measured over `duration_s`.
    Bulk { duration_s: f64 },
    PageLoad { page: PageSpec },
}

/// A download from `server` to `client`, opened at `start_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: u32,
    #[serde(default = "default_client")]
    pub client: String,
    #[serde(default = "default_server")]
    pub server: String,
    #[serde(default)]
    pub start_s: f64,
    #[serde(flatten)]
    pub kind: FlowKind,
}

fn default_client() -> String {
    "client".into()
}

fn default_server() -> String {
    "server".into()
}

impl Flow {
    pub fn bulk(id: u32, duration_s: f64) -> Self {
        Flow {
            id,
            client: default_client(),
            server: default_server(),
            start_s: 0.0,
            kind: FlowKind::Bulk { duration_s },
        }
    }

    pub fn page_load(id: u32, page: PageSpec, start_s: f64) -> Self {
        Flow {
            id,
            client: default_client(),
            server: default_server(),
            start_s,
            kind: FlowKind::PageLoad { page },
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |reason: &str| EngineError::Flow { id: self.id, reason: reason.into() };
        if !(self.start_s >= 0.0 && self.start_s.is_finite()) {
            return Err(bad("start_s must be a non-negative time"));
        }
        if let FlowKind::Bulk { duration_s } = self.kind {
            if !(duration_s > 0.0 && duration_s.is_finite()) {
                return Err(bad("duration_s must be positive"));
            }
        }
        Ok(())
    }
}

/// Handshake path report for `flow_id` in `result`.
pub fn trace_handshake(result: &ScenarioResult, flow_id: u32) -> Result<PathReport, EngineError> {
    trace::handshake_report(&result.trace, flow_id, &result.server)
}

pub(crate) const NS_PER_S: f64 = 1e9;

pub(crate) fn secs_to_ns(s: f64) -> u64 {
    (s * NS_PER_S).round().max(0.0) as u64
}

pub(crate) fn ns_to_secs(ns: u64) -> f64 {
    ns as f64 / NS_PER_S
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_parsing() {
        for m in Mode::ALL {
            assert_eq!(m.label().parse::<Mode>().unwrap(), m);
        }
        assert!("bonded".parse::<Mode>().is_err());
    }

    #[test]
    fn flow_json() {
        let f: Flow = serde_json::from_str(r#"{"id": 3, "kind": "bulk", "duration_s": 5.0}"#).unwrap();
        assert_eq!(f, Flow::bulk(3, 5.0));
        let p: Flow = serde_json::from_str(
            r#"{"id": 1, "start_s": 1.0, "kind": "page_load",
                "page": {"object_count": 3, "total_bytes": 10, "sequential_rounds": 1}}"#,
        )
        .unwrap();
        assert!(matches!(p.kind, FlowKind::PageLoad { .. }));
        assert!(Flow::bulk(1, 0.0).validate().is_err());
    }
}
