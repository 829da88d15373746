//! Converts measured computing time into an estimated money cost.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Hourly rate applied to computing time, scaled linearly from the benchmark
/// panel size to a target deployment size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub rate_per_hour: f64,
    pub dataset_series: usize,
    pub target_series: f64,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_per_hour.is_finite() && self.rate_per_hour >= 0.0) {
            return Err(HarnessError::config(
                "cost.rate_per_hour",
                "must be a finite non-negative number",
            ));
        }
        if self.dataset_series == 0 {
            return Err(HarnessError::config("cost.dataset_series", "must be positive"));
        }
        if !(self.target_series.is_finite() && self.target_series > 0.0) {
            return Err(HarnessError::config("cost.target_series", "must be positive"));
        }
        Ok(())
    }

    pub fn estimate(&self, ct_seconds: f64) -> f64 {
        estimate_cost(ct_seconds, self.rate_per_hour, self.dataset_series, self.target_series)
    }
}

/// `ct / 3600 · rate · target / dataset`.
pub fn estimate_cost(ct_seconds: f64, rate_per_hour: f64, dataset_series: usize, target_series: f64) -> f64 {
    ct_seconds / 3600.0 * rate_per_hour * target_series / dataset_series as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed() {
        assert_eq!(estimate_cost(3600.0, 2.0, 10, 10.0), 2.0);
        assert_eq!(estimate_cost(1800.0, 4.0, 100, 1000.0), 20.0);
        assert_eq!(estimate_cost(0.0, 4.0, 100, 1000.0), 0.0);
    }

    #[test]
    fn validation() {
        let good = CostModel {
            rate_per_hour: 3.5,
            dataset_series: 10,
            target_series: 1e9,
        };
        assert!(good.validate().is_ok());
        assert!(CostModel {
            dataset_series: 0,
            ..good
        }
        .validate()
        .is_err());
        assert!(CostModel {
            rate_per_hour: -1.0,
            ..good
        }
        .validate()
        .is_err());
        assert!(CostModel {
            target_series: 0.0,
            ..good
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn linear_in_each_factor(ct in 0.0f64..1e6, rate in 0.0f64..10.0, n in 1usize..100_000, target in 1.0f64..1e10, k in 0.5f64..4.0) {
            let base = estimate_cost(ct, rate, n, target);
            let tol = 1e-9 * base.abs().max(1.0);
            prop_assert!((estimate_cost(ct * k, rate, n, target) - k * base).abs() < tol * k.max(1.0));
            prop_assert!((estimate_cost(ct, rate * k, n, target) - k * base).abs() < tol * k.max(1.0));
            prop_assert!((estimate_cost(ct, rate, n, target * k) - k * base).abs() < tol * k.max(1.0));
        }
    }
}
