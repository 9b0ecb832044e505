use serde::{Deserialize, Serialize};

use super::EngineError;

/// Synthetic web page: `object_count` equal objects fetched over
/// `sequential_rounds` dependent request rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSpec {
    pub object_count: u32,
    pub total_bytes: u64,
    pub sequential_rounds: u32,
}

impl Default for PageSpec {
    fn default() -> Self {
        PageSpec {
            object_count: 30,
            total_bytes: 1_500_000,
            sequential_rounds: 5,
        }
    }
}

impl PageSpec {
    pub fn is_empty(&self) -> bool {
        self.total_bytes == 0
    }

    /// Object sizes per round. Objects are dealt to rounds in turn; a page
    /// with bytes but no objects counts as one object, and a page with bytes
    /// always takes at least one round.
    pub fn rounds(&self) -> Vec<Vec<f64>> {
        if self.is_empty() {
            return Vec::new();
        }
        let objects = self.object_count.max(1) as usize;
        let rounds = (self.sequential_rounds.max(1) as usize).min(objects);
        let size = self.total_bytes as f64 / objects as f64;
        let mut out = vec![Vec::new(); rounds];
        for i in 0..objects {
            out[i % rounds].push(size);
        }
        out
    }
}

/// Closed-form load time in seconds for a path of constant capacity (Mbps)
/// and round-trip time (ms).
pub fn page_load_time(page: &PageSpec, capacity_mbps: f64, rtt_ms: f64) -> Result<f64, EngineError> {
    if !(capacity_mbps > 0.0) {
        return Err(EngineError::Unreachable);
    }
    Ok(page.sequential_rounds as f64 * rtt_ms / 1e3 + 8.0 * page.total_bytes as f64 / (capacity_mbps * 1e6))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_page_is_instant() {
        let page = PageSpec { object_count: 0, total_bytes: 0, sequential_rounds: 0 };
        assert_eq!(page_load_time(&page, 70.0, 20.0).unwrap(), 0.0);
        assert!(page.rounds().is_empty());
    }

    #[test]
    fn one_megabyte_page() {
        let page = PageSpec { object_count: 10, total_bytes: 1_000_000, sequential_rounds: 10 };
        let t = page_load_time(&page, 70.0, 20.0).unwrap();
        let oracle = 10.0 * 0.020 + 8.0e6 / 70.0e6;
        assert!((t - oracle).abs() < 1e-12);
        assert!((t - 0.314).abs() < 1e-3);
    }

    #[test]
    fn zero_capacity_is_unreachable() {
        assert!(matches!(page_load_time(&PageSpec::default(), 0.0, 5.0), Err(EngineError::Unreachable)));
    }

    #[test]
    fn round_split_conserves_bytes() {
        let page = PageSpec { object_count: 7, total_bytes: 700, sequential_rounds: 3 };
        let r = page.rounds();
        assert_eq!(r.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 2]);
        assert!((r.iter().flatten().sum::<f64>() - 700.0).abs() < 1e-9);
        let lumpy = PageSpec { object_count: 0, total_bytes: 10, sequential_rounds: 4 };
        assert_eq!(lumpy.rounds(), vec![vec![10.0]]);
    }
}
