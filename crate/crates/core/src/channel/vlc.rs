use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{interpolate, invalid, ChannelError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlcChannel {
    pub vertical_m: f64,
    pub horizontal_m: f64,
    /// (vertical distance m, Mbps) at zero horizontal offset.
    pub rate_anchors: Vec<(f64, f64)>,
    /// (vertical distance m, largest horizontal offset m still covered).
    pub coverage_limit: Vec<(f64, f64)>,
    /// ms
    pub one_way_latency: f64,
}

impl Default for VlcChannel {
    fn default() -> Self {
        VlcChannel {
            vertical_m: 2.0,
            horizontal_m: 0.0,
            rate_anchors: vec![(2.0, 74.0), (4.1, 30.0), (5.0, 25.0)],
            coverage_limit: vec![(2.0, 1.0)],
            one_way_latency: 10.0,
        }
    }
}

impl VlcChannel {
    pub fn at(&self, vertical_m: f64, horizontal_m: f64) -> VlcChannel {
        VlcChannel { vertical_m, horizontal_m, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.vertical_m >= 0.0 && self.vertical_m.is_finite()) {
            return Err(invalid("vlc.vertical_m", format!("{} is not a distance", self.vertical_m)));
        }
        if !self.horizontal_m.is_finite() {
            return Err(invalid("vlc.horizontal_m", "not finite"));
        }
        if self.rate_anchors.is_empty() {
            return Err(invalid("vlc.rate_anchors", "no anchors"));
        }
        if self.rate_anchors.iter().any(|&(d, r)| !(d >= 0.0 && r >= 0.0 && d.is_finite() && r.is_finite())) {
            return Err(invalid("vlc.rate_anchors", "distances and rates must be non-negative"));
        }
        for w in self.rate_anchors.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(invalid("vlc.rate_anchors", "distances must increase"));
            }
            if w[1].1 > w[0].1 {
                return Err(invalid("vlc.rate_anchors", format!("rate rises between {} m and {} m", w[0].0, w[1].0)));
            }
        }
        if self.coverage_limit.is_empty() {
            return Err(invalid("vlc.coverage_limit", "no anchors"));
        }
        for w in self.coverage_limit.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 > w[0].1 {
                return Err(invalid("vlc.coverage_limit", "distances must increase and limits must not"));
            }
        }
        if self.coverage_limit.iter().any(|&(_, h)| !(h > 0.0)) {
            return Err(invalid("vlc.coverage_limit", "limits must be positive"));
        }
        if !(self.one_way_latency >= 0.0 && self.one_way_latency.is_finite()) {
            return Err(invalid("vlc.one_way_latency", format!("{}", self.one_way_latency)));
        }
        Ok(())
    }

    /// Rate directly under the transmitter. Flat before the first anchor;
    /// the last segment's slope continues past the final anchor, floored at 0.
    pub fn on_axis_rate(&self, vertical_m: f64) -> f64 {
        let a = &self.rate_anchors;
        match a.len() {
            0 => 0.0,
            1 => a[0].1,
            len => {
                let (x0, y0) = a[len - 2];
                let (x1, y1) = a[len - 1];
                if vertical_m > x1 {
                    (y1 + (y1 - y0) / (x1 - x0) * (vertical_m - x1)).max(0.0)
                } else {
                    interpolate(a, vertical_m)
                }
            }
        }
    }

    pub fn coverage_at(&self, vertical_m: f64) -> f64 {
        interpolate(&self.coverage_limit, vertical_m)
    }

    /// Link rate in Mbps at the configured position.
    pub fn throughput(&self) -> f64 {
        let limit = self.coverage_at(self.vertical_m);
        let h = self.horizontal_m.abs();
        if h >= limit {
            return 0.0;
        }
        self.on_axis_rate(self.vertical_m) * (1.0 - h / limit)
    }
}

pub fn vlc_throughput(ch: &VlcChannel) -> f64 {
    ch.throughput()
}

/// Throughput against vertical distance as "distance_m,mbps" CSV.
pub fn vlc_curve_csv(ch: &VlcChannel, from_m: f64, to_m: f64, step_m: f64) -> Result<String, ChannelError> {
    if !(step_m > 0.0) || to_m < from_m {
        return Err(invalid("sweep", format!("{from_m}:{to_m}:{step_m} is not a valid range")));
    }
    let mut out = String::from("distance_m,mbps\n");
    let count = ((to_m - from_m) / step_m + 1e-9).floor() as usize;
    for i in 0..=count {
        let d = from_m + i as f64 * step_m;
        let _ = writeln!(out, "{:.3},{:.6}", d, ch.at(d, ch.horizontal_m).throughput());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_are_exact() {
        let ch = VlcChannel::default();
        assert_eq!(ch.at(2.0, 0.0).throughput(), 74.0);
        assert_eq!(ch.at(5.0, 0.0).throughput(), 25.0);
        assert_eq!(ch.at(4.1, 0.0).throughput(), 30.0);
    }

    #[test]
    fn two_anchor_calibration_midpoint() {
        let ch = VlcChannel {
            rate_anchors: vec![(2.0, 74.0), (5.0, 25.0)],
            ..VlcChannel::default()
        };
        assert!((ch.at(3.5, 0.0).throughput() - 49.5).abs() < 1e-12);
    }

    #[test]
    fn coverage_edge() {
        let ch = VlcChannel::default();
        assert_eq!(ch.at(2.0, 1.0).throughput(), 0.0);
        assert_eq!(ch.at(2.0, 3.0).throughput(), 0.0);
        assert!((ch.at(2.0, 0.5).throughput() - 37.0).abs() < 1e-12);
        assert_eq!(ch.at(2.0, -0.5).throughput(), ch.at(2.0, 0.5).throughput());
    }

    #[test]
    fn monotone_in_both_distances() {
        let ch = VlcChannel::default();
        for i in 0..200 {
            let v = i as f64 * 0.05;
            for j in 0..20 {
                let h = j as f64 * 0.06;
                let r = ch.at(v, h).throughput();
                assert!(r >= 0.0);
                assert!(ch.at(v + 0.05, h).throughput() <= r + 1e-12);
                assert!(ch.at(v, h + 0.06).throughput() <= r + 1e-12);
            }
        }
    }

    #[test]
    fn flat_before_and_extrapolated_after() {
        let ch = VlcChannel::default();
        assert_eq!(ch.at(0.5, 0.0).throughput(), 74.0);
        // last slope is -50/9 Mbps per m
        assert!((ch.at(5.9, 0.0).throughput() - 20.0).abs() < 1e-9);
        assert_eq!(ch.at(50.0, 0.0).throughput(), 0.0);
    }

    #[test]
    fn crossover_with_thirty_mbps_wifi() {
        let ch = VlcChannel::default();
        let d = (0..=300)
            .map(|i| 2.0 + i as f64 * 0.01)
            .find(|&d| 30.0 >= ch.at(d, 0.0).throughput())
            .unwrap();
        assert!((3.8..=4.4).contains(&d), "{d}");
    }

    #[test]
    fn validation() {
        assert!(VlcChannel::default().validate().is_ok());
        let bad = VlcChannel { rate_anchors: vec![(2.0, 10.0), (3.0, 20.0)], ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("vlc.rate_anchors"));
        let bad = VlcChannel { vertical_m: -1.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("vlc.vertical_m"));
    }

    #[test]
    fn curve_csv() {
        let csv = vlc_curve_csv(&VlcChannel::default(), 2.0, 5.0, 1.0).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "distance_m,mbps");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "2.000,74.000000");
        assert_eq!(lines[4], "5.000,25.000000");
        assert!(vlc_curve_csv(&VlcChannel::default(), 2.0, 5.0, 0.0).is_err());
    }
}
