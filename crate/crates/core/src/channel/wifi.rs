use serde::{Deserialize, Serialize};

use super::{interpolate, invalid, Bianchi, ChannelError};

/// Single-user TCP goodput the curve is normalized to, Mbps.
pub const SINGLE_USER_MBPS: f64 = 30.0;
pub const NOMINAL_MBPS: f64 = 54.0;

/// Station counts at which the default curve is sampled from the
/// saturation model. Between 2 and 5 stations the model's aggregate rises
/// slightly above the single-station value, so no anchors sit there.
const DEFAULT_ANCHOR_COUNTS: [u32; 5] = [1, 6, 10, 20, 50];

/// Aggregate MAC efficiency by number of saturated stations, linearly
/// interpolated between anchors and held flat past the last one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EfficiencyCurve {
    anchors: Vec<(u32, f64)>,
}

impl EfficiencyCurve {
    pub fn new(anchors: Vec<(u32, f64)>) -> Result<Self, ChannelError> {
        let curve = EfficiencyCurve { anchors };
        curve.validate()?;
        Ok(curve)
    }

    /// Samples a saturation model and scales it so one station gets
    /// `single_user / nominal`.
    pub fn from_bianchi(model: &Bianchi, nominal: f64, single_user: f64, counts: &[u32]) -> Result<Self, ChannelError> {
        let s1 = model.saturation_throughput(1);
        let anchors = counts
            .iter()
            .map(|&n| (n, single_user / nominal * model.saturation_throughput(n) / s1))
            .collect();
        EfficiencyCurve::new(anchors)
    }

    pub fn anchors(&self) -> &[(u32, f64)] {
        &self.anchors
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let field = "wifi.efficiency_curve";
        match self.anchors.first() {
            None => return Err(invalid(field, "no anchors")),
            Some((n, _)) if *n != 1 => return Err(invalid(field, "first anchor must be n = 1")),
            _ => {}
        }
        for &(n, e) in &self.anchors {
            if !(e > 0.0 && e <= 1.0) {
                return Err(invalid(field, format!("efficiency {e} at n = {n} outside (0, 1]")));
            }
        }
        for w in self.anchors.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(invalid(field, "anchor counts must increase"));
            }
            if w[1].1 > w[0].1 {
                return Err(invalid(field, format!("efficiency rises between n = {} and n = {}", w[0].0, w[1].0)));
            }
        }
        Ok(())
    }

    pub fn at(&self, n: u32) -> f64 {
        let pts: Vec<(f64, f64)> = self.anchors.iter().map(|&(n, e)| (n as f64, e)).collect();
        interpolate(&pts, n as f64)
    }
}

impl Default for EfficiencyCurve {
    fn default() -> Self {
        EfficiencyCurve::from_bianchi(&Bianchi::default(), NOMINAL_MBPS, SINGLE_USER_MBPS, &DEFAULT_ANCHOR_COUNTS)
            .expect("default saturation curve is valid")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WifiChannel {
    pub nominal_rate: f64,
    pub efficiency_curve: EfficiencyCurve,
    /// One-way, ms
    pub base_latency: f64,
}

impl Default for WifiChannel {
    fn default() -> Self {
        WifiChannel {
            nominal_rate: NOMINAL_MBPS,
            efficiency_curve: EfficiencyCurve::default(),
            base_latency: 2.0,
        }
    }
}

impl WifiChannel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.nominal_rate > 0.0 && self.nominal_rate.is_finite()) {
            return Err(invalid("wifi.nominal_rate", format!("{} is not a positive rate", self.nominal_rate)));
        }
        if !(self.base_latency >= 0.0 && self.base_latency.is_finite()) {
            return Err(invalid("wifi.base_latency", format!("{} is not a latency", self.base_latency)));
        }
        self.efficiency_curve.validate()
    }

    /// Aggregate goodput shared by `n` saturated stations, Mbps.
    pub fn aggregate_throughput(&self, n: u32) -> Result<f64, ChannelError> {
        if n == 0 {
            return Err(ChannelError::NoContenders);
        }
        Ok(self.nominal_rate * self.efficiency_curve.at(n))
    }

    pub fn per_user_throughput(&self, n: u32) -> Result<f64, ChannelError> {
        Ok(self.aggregate_throughput(n)? / n as f64)
    }
}

pub fn wifi_per_user_throughput(ch: &WifiChannel, n: u32) -> Result<f64, ChannelError> {
    ch.per_user_throughput(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_user_anchor() {
        let ch = WifiChannel::default();
        assert!((wifi_per_user_throughput(&ch, 1).unwrap() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn zero_contenders_is_an_error() {
        assert_eq!(wifi_per_user_throughput(&WifiChannel::default(), 0), Err(ChannelError::NoContenders));
    }

    #[test]
    fn per_user_strictly_decreasing_and_aggregate_non_increasing() {
        let ch = WifiChannel::default();
        let mut prev = f64::INFINITY;
        let mut prev_agg = f64::INFINITY;
        for n in 1..=80 {
            let v = wifi_per_user_throughput(&ch, n).unwrap();
            assert!(v > 0.0 && v < prev, "n={n}");
            let agg = v * n as f64;
            assert!(agg <= prev_agg + 1e-12, "n={n}");
            prev = v;
            prev_agg = agg;
        }
        let two = wifi_per_user_throughput(&ch, 2).unwrap();
        assert!(two > 0.0 && two < 30.0);
    }

    #[test]
    fn six_users_leave_room_for_five_fold_gain() {
        let v = wifi_per_user_throughput(&WifiChannel::default(), 6).unwrap();
        assert!(70.0 / v >= 4.5, "{v}");
    }

    #[test]
    fn explicit_curve() {
        let curve = EfficiencyCurve::new(vec![(1, 0.5), (3, 0.3)]).unwrap();
        assert!((curve.at(2) - 0.4).abs() < 1e-12);
        assert_eq!(curve.at(10), 0.3);
        assert!(EfficiencyCurve::new(vec![(1, 0.5), (3, 0.6)]).is_err());
        assert!(EfficiencyCurve::new(vec![(2, 0.5)]).is_err());
        assert!(EfficiencyCurve::new(vec![(1, 1.5)]).is_err());
        assert!(EfficiencyCurve::new(vec![]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let ch = WifiChannel::default();
        let s = serde_json::to_string(&ch).unwrap();
        let back: WifiChannel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ch);
        let partial: WifiChannel = serde_json::from_str(r#"{"base_latency": 3.0}"#).unwrap();
        assert_eq!(partial.nominal_rate, 54.0);
    }
}
