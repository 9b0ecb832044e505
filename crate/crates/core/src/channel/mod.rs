//! Capacity and latency models for the shared WiFi channel and the
//! line-of-sight VLC channel, plus VLC blocking schedules.

mod bianchi;
mod blocking;
mod vlc;
mod wifi;

pub use bianchi::{Bianchi, BianchiParams};
pub use blocking::{apply_blocking, BlockPattern, BlockingSchedule, MINUTE_S};
pub use vlc::{vlc_curve_csv, vlc_throughput, VlcChannel};
pub use wifi::{wifi_per_user_throughput, EfficiencyCurve, WifiChannel};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("contender count must be at least 1")]
    NoContenders,
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> ChannelError {
    ChannelError::Invalid { field, reason: reason.into() }
}

/// Piecewise-linear interpolation over points sorted by x. Held flat
/// outside the covered range.
pub(crate) fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    match points {
        [] => 0.0,
        [(_, y)] => *y,
        _ => {
            if x <= points[0].0 {
                return points[0].1;
            }
            for w in points.windows(2) {
                let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                if x <= x1 {
                    return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
                }
            }
            points[points.len() - 1].1
        }
    }
}
