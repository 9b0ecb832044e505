//! Userspace relay on the intermediate host.
//!
//! Frames captured on the WiFi-facing interface whose destination IP is the
//! client's WiFi address are re-addressed to the client's VLC interface and
//! sent out of the VLC-facing interface. Kernel forwarding on this host is
//! off; this loop is the only path from the router to the VLC link.

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, FrameError, MacAddr};
use crate::iface::InterfaceIdentity;

pub const DEFAULT_MTU: usize = 1500;

fn default_mtu() -> usize {
    DEFAULT_MTU
}

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("malformed frame: {0}")]
    Malformed(#[from] FrameError),
    #[error("invalid relay config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayConfig {
    /// A-1, facing the router.
    pub capture_if: InterfaceIdentity,
    /// A-2, driving the VLC transmitter.
    pub emit_if: InterfaceIdentity,
    /// IP of B-1.
    pub client_wifi_ip: Ipv4Addr,
    /// MAC of B-2.
    pub client_vlc_mac: MacAddr,
    /// IP of B-2.
    pub client_vlc_ip: Ipv4Addr,
    #[serde(default = "default_mtu")]
    pub mtu: usize,
}

impl RelayConfig {
    pub fn validate(&self) -> Result<(), RelayError> {
        if self.mtu == 0 {
            return Err(RelayError::Config("mtu must be positive".into()));
        }
        if self.client_wifi_ip == self.client_vlc_ip {
            return Err(RelayError::Config(format!(
                "client WiFi and VLC addresses are both {}",
                self.client_wifi_ip
            )));
        }
        if self.capture_if.name == self.emit_if.name {
            return Err(RelayError::Config(format!(
                "capture and emit interface share the name {}",
                self.capture_if.name
            )));
        }
        Ok(())
    }
}

/// Counters kept by the relay loop.
///
/// `captured == oversize_dropped + non_matching_ignored + forwarded` always
/// holds; `malformed` is the subset of `non_matching_ignored` that failed to parse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayStats {
    pub captured: u64,
    pub oversize_dropped: u64,
    pub non_matching_ignored: u64,
    pub forwarded: u64,
    pub malformed: u64,
}

impl RelayStats {
    pub fn is_consistent(&self) -> bool {
        self.captured == self.oversize_dropped + self.non_matching_ignored + self.forwarded
            && self.malformed <= self.non_matching_ignored
    }

    pub const CSV_HEADER: &'static str = "captured,oversize_dropped,non_matching_ignored,forwarded,malformed";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.captured,
            self.oversize_dropped,
            self.non_matching_ignored,
            self.forwarded,
            self.malformed
        )
    }
}

/// What happened to one captured frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RelayOutcome {
    Forwarded(Frame),
    OversizeDropped,
    Ignored,
}

fn classify(frame: &Frame, config: &RelayConfig) -> RelayOutcome {
    if frame.wire_len() > config.mtu {
        return RelayOutcome::OversizeDropped;
    }
    match frame.dst_ip() {
        Some(dst) if dst == config.client_wifi_ip => {}
        // wrong destination, or not IPv4 at all (ARP seen on A-1 included)
        _ => return RelayOutcome::Ignored,
    }
    let mut out = frame.clone();
    out.dst_mac = config.client_vlc_mac;
    out.src_mac = config.emit_if.mac;
    if let Some(p) = out.ipv4_mut() {
        p.dst = config.client_vlc_ip;
    }
    out.recompute_checksums();
    RelayOutcome::Forwarded(out)
}

/// Relays one captured frame. `None` means dropped (oversize) or ignored.
pub fn relay_step(frame: &Frame, config: &RelayConfig) -> Option<Frame> {
    match classify(frame, config) {
        RelayOutcome::Forwarded(f) => Some(f),
        _ => None,
    }
}

/// Parses raw captured bytes first. The MTU check runs on the raw length,
/// before parsing, as the capture buffer is sized to the MTU.
pub fn relay_step_bytes(bytes: &[u8], config: &RelayConfig) -> Result<Option<Frame>, RelayError> {
    if bytes.len() > config.mtu {
        return Ok(None);
    }
    let frame = Frame::parse(bytes)?;
    Ok(relay_step(&frame, config))
}

/// Stateful relay instance: a config plus its counters.
#[derive(Clone, Debug)]
pub struct Relay {
    config: RelayConfig,
    stats: RelayStats,
}

impl Relay {
    pub fn new(config: RelayConfig) -> Result<Self, RelayError> {
        config.validate()?;
        Ok(Relay {
            config,
            stats: RelayStats::default(),
        })
    }

    pub fn config(&self) -> &RelayConfig {
        &self.config
    }

    pub fn stats(&self) -> RelayStats {
        self.stats
    }

    pub fn handle(&mut self, frame: &Frame) -> Option<Frame> {
        self.stats.captured += 1;
        match classify(frame, &self.config) {
            RelayOutcome::Forwarded(f) => {
                self.stats.forwarded += 1;
                Some(f)
            }
            RelayOutcome::OversizeDropped => {
                self.stats.oversize_dropped += 1;
                None
            }
            RelayOutcome::Ignored => {
                self.stats.non_matching_ignored += 1;
                None
            }
        }
    }

    pub fn handle_bytes(&mut self, bytes: &[u8]) -> Option<Frame> {
        if bytes.len() > self.config.mtu {
            self.stats.captured += 1;
            self.stats.oversize_dropped += 1;
            return None;
        }
        match Frame::parse(bytes) {
            Ok(f) => self.handle(&f),
            Err(_) => {
                self.stats.captured += 1;
                self.stats.non_matching_ignored += 1;
                self.stats.malformed += 1;
                None
            }
        }
    }
}

/// Runs the capture loop over a finite stream of raw frames, in order.
pub fn relay_loop<I, B>(inbound: I, config: &RelayConfig) -> Result<(Vec<Frame>, RelayStats), RelayError>
where
    I: IntoIterator<Item = B>,
    B: AsRef<[u8]>,
{
    let mut relay = Relay::new(config.clone())?;
    let out = inbound
        .into_iter()
        .filter_map(|b| relay.handle_bytes(b.as_ref()))
        .collect();
    Ok((out, relay.stats()))
}
