//! Friedman rank test with Nemenyi critical differences.
//!
//! Blocks are rows (series), treatments are columns (retrain scenarios);
//! within each block the smallest value gets rank 1 and ties share the
//! average rank.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{HarnessError, Result};

/// Nemenyi critical values `q_α` (studentized range over √2), k = 2..=20.
const Q_05: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.458,
    3.489, 3.517, 3.544,
];
const Q_10: [f64; 19] = [
    1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978, 3.030, 3.077, 3.120, 3.159, 3.196, 3.230,
    3.261, 3.291, 3.319,
];

#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    treatments: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl RankMatrix {
    pub fn new(treatments: Vec<String>, blocks: Vec<Vec<f64>>) -> Result<Self> {
        let k = treatments.len();
        if k < 2 {
            return Err(HarnessError::InvalidRankMatrix(format!(
                "{k} treatments, need at least 2"
            )));
        }
        if blocks.len() < 2 {
            return Err(HarnessError::InvalidRankMatrix(format!(
                "{} blocks, need at least 2",
                blocks.len()
            )));
        }
        if let Some(b) = blocks.iter().position(|r| r.len() != k) {
            return Err(HarnessError::InvalidRankMatrix(format!(
                "block {b} has {} cells for {k} treatments",
                blocks[b].len()
            )));
        }
        if let Some(b) = blocks.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(HarnessError::InvalidRankMatrix(format!("block {b} has a missing cell")));
        }
        Ok(RankMatrix {
            treatments,
            values: blocks,
        })
    }

    pub fn treatments(&self) -> &[String] {
        &self.treatments
    }

    pub fn blocks(&self) -> usize {
        self.values.len()
    }

    pub fn k(&self) -> usize {
        self.treatments.len()
    }

    /// Average ranks within each block; also returns Σ(t³ − t) over tie groups.
    pub fn ranks(&self) -> (Vec<Vec<f64>>, f64) {
        let mut tie_term = 0.0;
        let ranks = self
            .values
            .iter()
            .map(|row| {
                let mut order: Vec<usize> = (0..row.len()).collect();
                order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
                let mut r = vec![0.0; row.len()];
                let mut i = 0;
                while i < order.len() {
                    let mut j = i;
                    while j + 1 < order.len() && row[order[j + 1]] == row[order[i]] {
                        j += 1;
                    }
                    let avg = (i + j) as f64 / 2.0 + 1.0;
                    for &idx in &order[i..=j] {
                        r[idx] = avg;
                    }
                    let t = (j - i + 1) as f64;
                    tie_term += t * t * t - t;
                    i = j + 1;
                }
                r
            })
            .collect();
        (ranks, tie_term)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub treatments: Vec<String>,
    pub statistic: f64,
    pub p_value: f64,
    pub mean_ranks: Vec<f64>,
    pub blocks: usize,
}

/// Chi-square form of the Friedman statistic with tie correction.
pub fn friedman(matrix: &RankMatrix) -> FriedmanResult {
    let n = matrix.blocks() as f64;
    let k = matrix.k() as f64;
    let (ranks, ties) = matrix.ranks();
    let mean_ranks: Vec<f64> = (0..matrix.k())
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let spread = mean_ranks.iter().map(|r| r * r).sum::<f64>() - k * (k + 1.0) * (k + 1.0) / 4.0;
    let raw = 12.0 * n / (k * (k + 1.0)) * spread;
    let correction = 1.0 - ties / (n * k * (k * k - 1.0));
    let (statistic, p_value) = if correction <= 1e-12 {
        (0.0, 1.0)
    } else {
        let stat = (raw / correction).max(0.0);
        let chi = ChiSquared::new(k - 1.0).expect("k >= 2");
        (stat, (1.0 - chi.cdf(stat)).clamp(0.0, 1.0))
    };
    FriedmanResult {
        treatments: matrix.treatments.clone(),
        statistic,
        p_value,
        mean_ranks,
        blocks: matrix.blocks(),
    }
}

/// `q_{α,k} · sqrt(k(k+1) / (6N))`.
pub fn nemenyi_cd(k: usize, blocks: usize, alpha: f64) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(HarnessError::UnsupportedAlpha(alpha));
    };
    if !(2..=20).contains(&k) {
        return Err(HarnessError::InvalidRankMatrix(format!(
            "Nemenyi table covers 2..=20 treatments, got {k}"
        )));
    }
    if blocks < 2 {
        return Err(HarnessError::InvalidRankMatrix(format!(
            "{blocks} blocks, need at least 2"
        )));
    }
    let kf = k as f64;
    Ok(table[k - 2] * (kf * (kf + 1.0) / (6.0 * blocks as f64)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Better,
    Indistinguishable,
    Worse,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Better => "better",
            Verdict::Indistinguishable => "indistinguishable",
            Verdict::Worse => "worse",
        }
    }
}

/// Verdict of each treatment against the baseline; a mean-rank gap of at most
/// `cd` is indistinguishable, lower rank is better.
pub fn compare_to_baseline(result: &FriedmanResult, cd: f64, baseline: &str) -> Result<Vec<Verdict>> {
    let b = result
        .treatments
        .iter()
        .position(|t| t == baseline)
        .ok_or_else(|| HarnessError::MissingBaseline(baseline.to_string()))?;
    let base = result.mean_ranks[b];
    Ok(result
        .mean_ranks
        .iter()
        .map(|&r| {
            if (r - base).abs() <= cd {
                Verdict::Indistinguishable
            } else if r < base {
                Verdict::Better
            } else {
                Verdict::Worse
            }
        })
        .collect())
}
