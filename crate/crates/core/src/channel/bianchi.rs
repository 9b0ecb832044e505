//! Saturation throughput of DCF basic access from the two-dimensional
//! Markov chain fixed point.

use serde::{Deserialize, Serialize};

/// 802.11g ERP-OFDM timing at 54 Mbps, ACK at 24 Mbps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BianchiParams {
    pub slot_us: f64,
    pub sifs_us: f64,
    pub difs_us: f64,
    pub cw_min: u32,
    /// Number of back-off doublings.
    pub max_stage: u32,
    pub payload_bytes: u32,
    pub mac_overhead_bytes: u32,
    pub data_rate_mbps: f64,
    pub ack_rate_mbps: f64,
    pub preamble_us: f64,
    pub symbol_us: f64,
}

impl Default for BianchiParams {
    fn default() -> Self {
        BianchiParams {
            slot_us: 9.0,
            sifs_us: 16.0,
            difs_us: 34.0,
            cw_min: 16,
            max_stage: 6,
            payload_bytes: 1500,
            mac_overhead_bytes: 28,
            data_rate_mbps: 54.0,
            ack_rate_mbps: 24.0,
            preamble_us: 20.0,
            symbol_us: 4.0,
        }
    }
}

impl BianchiParams {
    /// PPDU duration for a MAC frame of `bytes` at `rate_mbps`
    /// (16 service bits and 6 tail bits, whole symbols).
    fn ppdu_us(&self, bytes: u32, rate_mbps: f64) -> f64 {
        let bits_per_symbol = rate_mbps * self.symbol_us;
        let bits = 16.0 + 8.0 * bytes as f64 + 6.0;
        self.preamble_us + (bits / bits_per_symbol).ceil() * self.symbol_us
    }

    pub fn data_us(&self) -> f64 {
        self.ppdu_us(self.payload_bytes + self.mac_overhead_bytes, self.data_rate_mbps)
    }

    pub fn ack_us(&self) -> f64 {
        self.ppdu_us(14, self.ack_rate_mbps)
    }

    /// Busy time of a successful exchange.
    pub fn success_us(&self) -> f64 {
        self.difs_us + self.data_us() + self.sifs_us + self.ack_us()
    }

    /// Busy time of a collision, ending with the ACK timeout.
    pub fn collision_us(&self) -> f64 {
        self.success_us()
    }
}

#[derive(Clone, Debug)]
pub struct Bianchi {
    pub params: BianchiParams,
}

impl Bianchi {
    pub fn new(params: BianchiParams) -> Self {
        Bianchi { params }
    }

    /// Per-slot transmission probability given conditional collision
    /// probability `p`. Written without the (1 - 2p) factor so p = 1/2 is
    /// regular.
    pub fn tau(&self, p: f64) -> f64 {
        let w = self.params.cw_min as f64;
        let series: f64 = (0..self.params.max_stage).map(|i| (2.0 * p).powi(i as i32)).sum();
        2.0 / (1.0 + w + p * w * series)
    }

    /// Solves p = 1 - (1 - tau(p))^(n-1) by bisection. Returns (tau, p).
    pub fn fixed_point(&self, n: u32) -> (f64, f64) {
        if n <= 1 {
            return (self.tau(0.0), 0.0);
        }
        let f = |p: f64| p - (1.0 - (1.0 - self.tau(p)).powi(n as i32 - 1));
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let p = 0.5 * (lo + hi);
        (self.tau(p), p)
    }

    /// Aggregate saturation throughput in Mbps for `n` stations.
    pub fn saturation_throughput(&self, n: u32) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let (tau, _) = self.fixed_point(n);
        let idle = (1.0 - tau).powi(n as i32);
        let p_tr = 1.0 - idle;
        let p_s = n as f64 * tau * (1.0 - tau).powi(n as i32 - 1) / p_tr;
        let bits = 8.0 * self.params.payload_bytes as f64;
        let slot = idle * self.params.slot_us
            + p_tr * p_s * self.params.success_us()
            + p_tr * (1.0 - p_s) * self.params.collision_us();
        p_tr * p_s * bits / slot
    }
}

impl Default for Bianchi {
    fn default() -> Self {
        Bianchi::new(BianchiParams::default())
    }
}
