//! Scaled accuracy metrics, aggregation and baseline normalization.
//!
//! RMSSE scales the squared forecast error by the in-sample squared error of
//! the seasonal naive benchmark; SQL scales the pinball loss by its in-sample
//! absolute error. A zero benchmark error excludes the cell instead of
//! clamping the denominator.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Rmsse,
    Smql,
    /// Computing time in seconds.
    Ct,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Rmsse => "rmsse",
            MetricKind::Smql => "smql",
            MetricKind::Ct => "ct",
        })
    }
}

fn check_lengths(actuals: &[f64], forecasts: &[f64], insample: &[f64], s: usize) -> Result<()> {
    if actuals.len() != forecasts.len() {
        return Err(HarnessError::Misaligned(format!(
            "{} actuals vs {} forecasts",
            actuals.len(),
            forecasts.len()
        )));
    }
    if insample.len() <= s {
        return Err(HarnessError::InsufficientHistory {
            series: "<insample>".into(),
            needed: s + 1,
            have: insample.len(),
        });
    }
    Ok(())
}

/// Mean squared seasonal difference `Σ_{t>s}(y_t − y_{t−s})² / (n − s)`.
pub fn seasonal_mse(insample: &[f64], s: usize) -> f64 {
    let n = insample.len();
    insample
        .iter()
        .skip(s)
        .zip(insample)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / (n - s) as f64
}

/// Mean absolute seasonal difference `Σ_{t>s}|y_t − y_{t−s}| / (n − s)`.
pub fn seasonal_mae(insample: &[f64], s: usize) -> f64 {
    let n = insample.len();
    insample
        .iter()
        .skip(s)
        .zip(insample)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / (n - s) as f64
}

pub fn pinball(actual: f64, forecast: f64, q: f64) -> f64 {
    if actual >= forecast {
        q * (actual - forecast)
    } else {
        (1.0 - q) * (forecast - actual)
    }
}

/// Root mean squared scaled error. `None` when the benchmark error is zero.
pub fn rmsse(actuals: &[f64], forecasts: &[f64], insample: &[f64], s: usize) -> Result<Option<f64>> {
    check_lengths(actuals, forecasts, insample, s)?;
    Ok(rmsse_scaled(actuals, forecasts, seasonal_mse(insample, s)))
}

pub(crate) fn rmsse_scaled(actuals: &[f64], forecasts: &[f64], scale: f64) -> Option<f64> {
    if scale <= 0.0 || actuals.is_empty() {
        return None;
    }
    let mse = actuals
        .iter()
        .zip(forecasts)
        .map(|(a, f)| (a - f) * (a - f))
        .sum::<f64>()
        / actuals.len() as f64;
    Some((mse / scale).sqrt())
}

/// Scaled quantile (pinball) loss at level `q`.
pub fn sql(actuals: &[f64], quantiles: &[f64], q: f64, insample: &[f64], s: usize) -> Result<Option<f64>> {
    check_lengths(actuals, quantiles, insample, s)?;
    Ok(sql_scaled(actuals, quantiles, q, seasonal_mae(insample, s)))
}

pub(crate) fn sql_scaled(actuals: &[f64], quantiles: &[f64], q: f64, scale: f64) -> Option<f64> {
    if scale <= 0.0 || actuals.is_empty() {
        return None;
    }
    let loss = actuals
        .iter()
        .zip(quantiles)
        .map(|(a, f)| pinball(*a, *f, q))
        .sum::<f64>()
        / actuals.len() as f64;
    Some(loss / scale)
}

/// Mean of SQL over a level set. `quantiles[l]` holds the `h` values at `levels[l]`.
pub fn smql(
    actuals: &[f64],
    quantiles: &[Vec<f64>],
    levels: &[f64],
    insample: &[f64],
    s: usize,
) -> Result<Option<f64>> {
    if quantiles.len() != levels.len() || levels.is_empty() {
        return Err(HarnessError::Misaligned(format!(
            "{} quantile rows for {} levels",
            quantiles.len(),
            levels.len()
        )));
    }
    let mut total = 0.0;
    for (values, q) in quantiles.iter().zip(levels) {
        match sql(actuals, values, *q, insample, s)? {
            Some(v) => total += v,
            None => return Ok(None),
        }
    }
    Ok(Some(total / levels.len() as f64))
}

/// Incremental benchmark scales for every prefix of one series.
///
/// `squared(n)` and `absolute(n)` equal `seasonal_mse(&values[..n], s)` and
/// `seasonal_mae(&values[..n], s)`.
#[derive(Debug, Clone)]
pub struct ScaleCache {
    s: usize,
    sq: Vec<f64>,
    abs: Vec<f64>,
}

impl ScaleCache {
    pub fn new(values: &[f64], s: usize) -> Self {
        let n = values.len();
        let mut sq = vec![0.0; n + 1];
        let mut abs = vec![0.0; n + 1];
        for t in 1..=n {
            let (dq, da) = if t > s {
                let d = values[t - 1] - values[t - 1 - s];
                (d * d, d.abs())
            } else {
                (0.0, 0.0)
            };
            sq[t] = sq[t - 1] + dq;
            abs[t] = abs[t - 1] + da;
        }
        ScaleCache { s, sq, abs }
    }

    pub fn squared(&self, n: usize) -> f64 {
        if n <= self.s {
            return 0.0;
        }
        self.sq[n] / (n - self.s) as f64
    }

    pub fn absolute(&self, n: usize) -> f64 {
        if n <= self.s {
            return 0.0;
        }
        self.abs[n] / (n - self.s) as f64
    }
}

/// Dataset-level mean over scored cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub count: usize,
    pub excluded: usize,
}

/// Unweighted mean of the non-excluded values.
pub fn aggregate(values: &[Option<f64>]) -> Result<Aggregate> {
    let (sum, count) = values.iter().flatten().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        return Err(HarnessError::AllExcluded);
    }
    let excluded = values.len() - count;
    if excluded > 0 {
        log::info!("{excluded} cells excluded (zero benchmark error)");
    }
    Ok(Aggregate {
        mean: sum / count as f64,
        count,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub retrain: usize,
    pub metric: MetricKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeRow {
    pub method: String,
    pub retrain: usize,
    pub metric: MetricKind,
    pub value: f64,
    pub relative: f64,
}

/// Divides each value by the same method's value at the baseline retrain window.
pub fn normalize_to_baseline(rows: &[MetricRow], baseline: usize) -> Result<Vec<RelativeRow>> {
    let mut base: BTreeMap<(&str, MetricKind), f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.retrain == baseline) {
        base.insert((r.method.as_str(), r.metric), r.value);
    }
    rows.iter()
        .map(|r| {
            let b = *base
                .get(&(r.method.as_str(), r.metric))
                .ok_or_else(|| HarnessError::MissingBaseline(format!("{} r={baseline} {}", r.method, r.metric)))?;
            if b == 0.0 {
                return Err(HarnessError::ZeroBaseline(format!("{} {}", r.method, r.metric)));
            }
            Ok(RelativeRow {
                method: r.method.clone(),
                retrain: r.retrain,
                metric: r.metric,
                value: r.value,
                relative: r.value / b,
            })
        })
        .collect()
}
