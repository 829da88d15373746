//! Split-conformal quantiles around point forecasts.
//!
//! Nonconformity scores are absolute `h`-step residuals on a held-out tail
//! of the training window, pooled across series separately for each step.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::features::FeatureConfig;
use crate::models::{self, ModelSpec};
use crate::panel::PanelSlice;

const SYMMETRY_TOL: f64 = 1e-9;
const MIN_SCORES: usize = 30;

/// Strictly increasing probability levels, closed under `q -> 1 - q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileLevels(Vec<f64>);

impl QuantileLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(HarnessError::AsymmetricLevels("empty level set".into()));
        }
        if let Some(q) = levels.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return Err(HarnessError::AsymmetricLevels(format!("level {q} outside (0, 1)")));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::AsymmetricLevels("levels not strictly increasing".into()));
        }
        for q in &levels {
            if !levels.iter().any(|p| (p + q - 1.0).abs() < SYMMETRY_TOL) {
                return Err(HarnessError::AsymmetricLevels(format!(
                    "{q} has no partner {}",
                    1.0 - q
                )));
            }
        }
        Ok(QuantileLevels(levels))
    }

    /// The fourteen levels bounding the 50, 60, 70, 80, 90, 95 and 99% intervals.
    pub fn standard() -> Self {
        QuantileLevels(vec![
            0.005, 0.025, 0.05, 0.10, 0.15, 0.20, 0.25, 0.75, 0.80, 0.85, 0.90, 0.95, 0.975, 0.995,
        ])
    }

    pub fn levels(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Nominal coverages of the symmetric intervals, ascending.
    pub fn coverages(&self) -> Vec<f64> {
        let mut c: Vec<f64> = self.0.iter().filter(|q| **q < 0.5).map(|q| 1.0 - 2.0 * q).collect();
        c.sort_by(f64::total_cmp);
        c
    }

    /// Index of `level` in the set, within symmetry tolerance.
    pub fn position(&self, level: f64) -> Option<usize> {
        self.0.iter().position(|q| (q - level).abs() < SYMMETRY_TOL)
    }
}

impl TryFrom<Vec<f64>> for QuantileLevels {
    type Error = HarnessError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        QuantileLevels::new(v)
    }
}

impl From<QuantileLevels> for Vec<f64> {
    fn from(q: QuantileLevels) -> Self {
        q.0
    }
}

/// Sorted absolute residuals per horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalCalibration {
    scores: Vec<Vec<f64>>,
    calibration_len: usize,
    pub warnings: Vec<String>,
    /// Wall-clock seconds spent fitting and predicting on the calibration window.
    pub seconds: f64,
}

impl ConformalCalibration {
    /// Builds a calibration from raw residuals indexed `[step - 1][cell]`.
    pub fn from_residuals(residuals: Vec<Vec<f64>>, calibration_len: usize) -> Self {
        let mut warnings = Vec::new();
        let scores = residuals
            .into_iter()
            .enumerate()
            .map(|(s, mut r)| {
                r.iter_mut().for_each(|v| *v = v.abs());
                r.sort_by(f64::total_cmp);
                if r.len() < MIN_SCORES {
                    warnings.push(format!(
                        "step {}: only {} calibration scores (< {MIN_SCORES})",
                        s + 1,
                        r.len()
                    ));
                }
                r
            })
            .collect();
        ConformalCalibration {
            scores,
            calibration_len,
            warnings,
            seconds: 0.0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.scores.len()
    }

    pub fn calibration_len(&self) -> usize {
        self.calibration_len
    }

    pub fn scores(&self, step: usize) -> &[f64] {
        &self.scores[step - 1]
    }

    /// Conservative empirical quantile: the `⌈(m + 1)·coverage⌉`-th smallest
    /// score, clipped to `m`.
    pub fn score_quantile(&self, step: usize, coverage: f64) -> f64 {
        let s = &self.scores[step - 1];
        let m = s.len();
        if m == 0 {
            return 0.0;
        }
        let rank = (((m + 1) as f64 * coverage) - 1e-9).ceil().max(1.0) as usize;
        s[rank.min(m) - 1]
    }

    /// Quantile values for one point forecast at `step`, ordered as `levels`.
    pub fn quantiles_at(&self, point: f64, step: usize, levels: &QuantileLevels) -> Vec<f64> {
        levels
            .levels()
            .iter()
            .map(|&q| {
                if (q - 0.5).abs() < SYMMETRY_TOL {
                    point
                } else if q < 0.5 {
                    point - self.score_quantile(step, 1.0 - 2.0 * q)
                } else {
                    point + self.score_quantile(step, 2.0 * q - 1.0)
                }
            })
            .collect()
    }
}

/// Points plus quantiles indexed `[series][step - 1][level]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    pub levels: QuantileLevels,
    pub point: Vec<Vec<f64>>,
    pub quantiles: Vec<Vec<Vec<f64>>>,
}

/// Default calibration multiple: four horizons for daily data, two for weekly.
pub fn default_multiple(frequency: crate::panel::Frequency) -> usize {
    match frequency {
        crate::panel::Frequency::Daily => 4,
        crate::panel::Frequency::Weekly => 2,
    }
}

/// Fits `spec` on the training slice minus its last `multiple · h`
/// observations and scores rolling `h`-step forecasts over that tail.
pub fn calibrate(
    spec: &ModelSpec,
    features: &FeatureConfig,
    train: &PanelSlice<'_>,
    horizon: usize,
    multiple: usize,
) -> Result<ConformalCalibration> {
    if multiple < 2 {
        return Err(HarnessError::config(
            "conformal.multiple",
            "calibration window must span at least two horizons",
        ));
    }
    let clock = Instant::now();
    let window = multiple * horizon;
    let needed = features.warm_up() + window + horizon;
    for i in 0..train.series_count() {
        let have = train.range(i).len();
        if have < needed {
            return Err(HarnessError::InsufficientHistory {
                series: train.panel().series()[i].id.clone(),
                needed,
                have,
            });
        }
    }
    let model = models::fit(spec, &train.truncate_back(window)?, features)?;
    let origins = window - horizon + 1;
    let mut residuals = vec![Vec::with_capacity(origins * train.series_count()); horizon];
    for j in 0..origins {
        let hist = train.truncate_back(window - j)?;
        let fc = models::predict(&model, &hist, horizon)?;
        for (i, preds) in fc.values.iter().enumerate() {
            let values = &train.panel().series()[i].values;
            let end = hist.range(i).end;
            for (s, p) in preds.iter().enumerate() {
                residuals[s].push(values[end + s] - p);
            }
        }
    }
    let mut cal = ConformalCalibration::from_residuals(residuals, window);
    for w in &cal.warnings {
        log::warn!("{}: {w}", spec.name);
    }
    cal.seconds = clock.elapsed().as_secs_f64();
    Ok(cal)
}

/// Wraps point forecasts `[series][step - 1]` with symmetric conformal quantiles.
pub fn quantile_forecast(
    points: &[Vec<f64>],
    calibration: &ConformalCalibration,
    levels: &QuantileLevels,
) -> Result<QuantileForecast> {
    let quantiles = points
        .iter()
        .map(|steps| {
            if steps.len() > calibration.horizon() {
                return Err(HarnessError::config(
                    "horizon",
                    format!(
                        "forecast has {} steps, calibration covers {}",
                        steps.len(),
                        calibration.horizon()
                    ),
                ));
            }
            Ok(steps
                .iter()
                .enumerate()
                .map(|(s, &p)| calibration.quantiles_at(p, s + 1, levels))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantileForecast {
        levels: levels.clone(),
        point: points.to_vec(),
        quantiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn standard_levels_are_symmetric() {
        let q = QuantileLevels::standard();
        assert_eq!(q.len(), 14);
        assert!(QuantileLevels::new(q.levels().to_vec()).is_ok());
        let cov: Vec<f64> = q.coverages().iter().map(|c| (c * 1000.0).round() / 1000.0).collect();
        assert_eq!(cov, vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]);
    }

    #[test]
    fn literal_duplicate_level_list_is_rejected() {
        let as_printed = vec![
            0.005, 0.025, 0.050, 0.100, 0.150, 0.200, 0.025, 0.750, 0.800, 0.850, 0.900, 0.950, 0.975, 0.995,
        ];
        assert!(QuantileLevels::new(as_printed).is_err());
        assert!(QuantileLevels::new(vec![0.1, 0.5, 0.8]).is_err());
        assert!(QuantileLevels::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_scores_collapse_to_point() {
        let cal = ConformalCalibration::from_residuals(vec![vec![0.0; 40]; 2], 8);
        let fc = quantile_forecast(&[vec![3.0, 4.0]], &cal, &QuantileLevels::standard()).unwrap();
        assert!(fc.quantiles[0][0].iter().all(|v| *v == 3.0));
        assert!(fc.quantiles[0][1].iter().all(|v| *v == 4.0));
    }

    #[test]
    fn symmetric_rule_hand_case() {
        // 9 scores 0.25..2.25: rank ceil(10 * 0.8) = 8 -> 2.0
        let scores: Vec<f64> = (1..=9).map(|k| k as f64 * 0.25).collect();
        let cal = ConformalCalibration::from_residuals(vec![scores], 4);
        assert_eq!(cal.score_quantile(1, 0.8), 2.0);
        let levels = QuantileLevels::new(vec![0.1, 0.5, 0.9]).unwrap();
        let fc = quantile_forecast(&[vec![10.0]], &cal, &levels).unwrap();
        assert_eq!(fc.quantiles[0][0], vec![8.0, 10.0, 12.0]);
    }

    #[test]
    fn rank_is_clipped_to_sample_size() {
        let cal = ConformalCalibration::from_residuals(vec![vec![1.0, 2.0, 3.0]], 4);
        assert_eq!(cal.score_quantile(1, 0.99), 3.0);
        assert_eq!(cal.warnings.len(), 1);
    }

    #[test]
    fn calibration_window_sizes() {
        use crate::panel::Frequency;
        assert_eq!(default_multiple(Frequency::Daily) * 28, 112);
        assert_eq!(default_multiple(Frequency::Weekly) * 13, 26);
    }

    proptest! {
        #[test]
        fn widths_monotone_in_coverage(
            scores in prop::collection::vec(-50.0f64..50.0, 1..80),
            point in -100.0f64..100.0,
        ) {
            let cal = ConformalCalibration::from_residuals(vec![scores], 4);
            let levels = QuantileLevels::standard();
            let q = cal.quantiles_at(point, 1, &levels);
            prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
            let widths: Vec<f64> = levels
                .coverages()
                .iter()
                .map(|c| cal.score_quantile(1, *c))
                .collect();
            prop_assert!(widths.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn translation_equivariance(
            residuals in prop::collection::vec(-5.0f64..5.0, 5..40),
            point in -10.0f64..10.0,
            shift in -100.0f64..100.0,
        ) {
            // Shifting targets and forecasts alike leaves residuals unchanged.
            let cal = ConformalCalibration::from_residuals(vec![residuals], 4);
            let levels = QuantileLevels::standard();
            let base = cal.quantiles_at(point, 1, &levels);
            let moved = cal.quantiles_at(point + shift, 1, &levels);
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((a + shift - b).abs() < 1e-9);
            }
        }
    }
}
