use serde::{Deserialize, Serialize};

use super::{invalid, ChannelError};

pub const MINUTE_S: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BlockPattern {
    /// One block at the start of each minute.
    Contiguous,
    /// The minute's blocked time split into equal bursts spread evenly.
    Periodic { bursts_per_minute: u32 },
}

/// Line-of-sight obstruction repeating every minute. `offset_s` shifts
/// the start of the first minute.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockingSchedule {
    pub blocked_seconds_per_minute: f64,
    pub pattern: BlockPattern,
    pub offset_s: f64,
}

impl Default for BlockingSchedule {
    fn default() -> Self {
        BlockingSchedule {
            blocked_seconds_per_minute: 0.0,
            pattern: BlockPattern::Contiguous,
            offset_s: 0.0,
        }
    }
}

impl BlockingSchedule {
    pub fn contiguous(blocked_seconds_per_minute: f64) -> Self {
        BlockingSchedule { blocked_seconds_per_minute, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let s = self.blocked_seconds_per_minute;
        if !(0.0..=MINUTE_S).contains(&s) {
            return Err(invalid("blocking.blocked_seconds_per_minute", format!("{s} not in [0, 60]")));
        }
        if let BlockPattern::Periodic { bursts_per_minute: 0 } = self.pattern {
            return Err(invalid("blocking.pattern", "bursts_per_minute must be at least 1"));
        }
        if !self.offset_s.is_finite() {
            return Err(invalid("blocking.offset_s", "not finite"));
        }
        Ok(())
    }

    fn period_and_block(&self) -> (f64, f64) {
        match self.pattern {
            BlockPattern::Contiguous => (MINUTE_S, self.blocked_seconds_per_minute),
            BlockPattern::Periodic { bursts_per_minute } => {
                let k = bursts_per_minute.max(1) as f64;
                (MINUTE_S / k, self.blocked_seconds_per_minute / k)
            }
        }
    }

    pub fn is_blocked(&self, t: f64) -> bool {
        let (period, block) = self.period_and_block();
        if block <= 0.0 {
            return false;
        }
        if block >= period {
            return true;
        }
        (t - self.offset_s).rem_euclid(period) < block
    }

    /// First time strictly after `t` at which the blocked state flips, or
    /// None if it never does.
    pub fn next_edge(&self, t: f64) -> Option<f64> {
        let (period, block) = self.period_and_block();
        if block <= 0.0 || block >= period {
            return None;
        }
        // edges sit at offset + m*period and offset + m*period + block;
        // pick from a window of candidates so rounding at t itself can't
        // return t again
        let m = ((t - self.offset_s) / period).floor();
        let eps = 1e-9 * period.max(1.0);
        (-1..=1)
            .flat_map(|k| {
                let base = self.offset_s + (m + k as f64) * period;
                [base, base + block]
            })
            .filter(|&e| e > t + eps)
            .min_by(f64::total_cmp)
    }

    /// Fraction of time the link is open.
    pub fn open_fraction(&self) -> f64 {
        1.0 - self.blocked_seconds_per_minute / MINUTE_S
    }
}

/// Minute-average rate of a link with base rate `base` under `sched`.
pub fn apply_blocking(base: f64, sched: &BlockingSchedule) -> f64 {
    base * sched.open_fraction()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minute_average() {
        assert_eq!(apply_blocking(70.0, &BlockingSchedule::contiguous(0.0)), 70.0);
        assert_eq!(apply_blocking(70.0, &BlockingSchedule::contiguous(60.0)), 0.0);
        assert_eq!(apply_blocking(70.0, &BlockingSchedule::contiguous(30.0)), 35.0);
        assert!(apply_blocking(70.0, &BlockingSchedule::contiguous(30.0)) > 30.0);
    }

    #[test]
    fn contiguous_state_and_edges() {
        let s = BlockingSchedule::contiguous(10.0);
        assert!(s.is_blocked(0.0));
        assert!(s.is_blocked(9.99));
        assert!(!s.is_blocked(10.0));
        assert!(s.is_blocked(60.5));
        assert_eq!(s.next_edge(0.0), Some(10.0));
        assert_eq!(s.next_edge(10.0), Some(60.0));
        assert_eq!(s.next_edge(30.0), Some(60.0));
        assert_eq!(BlockingSchedule::contiguous(0.0).next_edge(1.0), None);
        assert_eq!(BlockingSchedule::contiguous(60.0).next_edge(1.0), None);
        assert!(BlockingSchedule::contiguous(60.0).is_blocked(42.0));
    }

    #[test]
    fn offset_and_periodic() {
        let s = BlockingSchedule { offset_s: 5.0, ..BlockingSchedule::contiguous(10.0) };
        assert!(!s.is_blocked(4.0));
        assert!(s.is_blocked(5.0));
        assert_eq!(s.next_edge(4.0), Some(5.0));
        let p = BlockingSchedule {
            pattern: BlockPattern::Periodic { bursts_per_minute: 6 },
            ..BlockingSchedule::contiguous(30.0)
        };
        assert!(p.is_blocked(10.0) && !p.is_blocked(15.0) && p.is_blocked(20.0));
        assert_eq!(p.next_edge(15.0), Some(20.0));
    }

    #[test]
    fn measured_open_time_matches_duty_cycle() {
        for s in [0.0, 5.0, 17.5, 30.0, 60.0] {
            let sched = BlockingSchedule { offset_s: 3.3, ..BlockingSchedule::contiguous(s) };
            let steps = 60_000;
            let open = (0..steps).filter(|i| !sched.is_blocked(*i as f64 * 0.001 + 0.0005)).count();
            assert!((open as f64 / steps as f64 - sched.open_fraction()).abs() < 1e-3, "s={s}");
        }
    }

    #[test]
    fn validation() {
        assert!(BlockingSchedule::contiguous(61.0).validate().is_err());
        assert!(BlockingSchedule::contiguous(-1.0).validate().is_err());
        let p = BlockingSchedule { pattern: BlockPattern::Periodic { bursts_per_minute: 0 }, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
