//! Simple-mean forecast combination and member-pool selection.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conformal::QuantileForecast;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Smallest point-forecast RMSSE first.
    Accuracy,
    /// Smallest computing time first.
    Time,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Accuracy => "accuracy",
            Criterion::Time => "time",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub name: String,
    pub criterion: Criterion,
    /// Ordered by selection rank.
    pub members: Vec<String>,
}

impl EnsembleSpec {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub model: String,
    pub rmsse: f64,
    pub smql: f64,
    pub ct: f64,
}

/// Base-model metrics at the baseline retrain scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Leaderboard {
    pub rows: Vec<LeaderboardRow>,
}

impl Leaderboard {
    pub fn push(&mut self, model: impl Into<String>, rmsse: f64, smql: f64, ct: f64) {
        self.rows.push(LeaderboardRow {
            model: model.into(),
            rmsse,
            smql,
            ct,
        });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Picks the `k` best models by `criterion`; ties fall back to the other
/// metric, then to the model name.
pub fn select_pool(board: &Leaderboard, criterion: Criterion, k: usize) -> Result<EnsembleSpec> {
    if k < 2 {
        return Err(HarnessError::config(
            "ensembles.sizes",
            "ensembles need at least two members",
        ));
    }
    if board.len() < k {
        return Err(HarnessError::PoolTooSmall {
            needed: k,
            have: board.len(),
        });
    }
    let mut ranked: Vec<&LeaderboardRow> = board.rows.iter().collect();
    let key = |r: &LeaderboardRow| match criterion {
        Criterion::Accuracy => (r.rmsse, r.ct),
        Criterion::Time => (r.ct, r.rmsse),
    };
    ranked.sort_by(|a, b| {
        let (a1, a2) = key(a);
        let (b1, b2) = key(b);
        a1.total_cmp(&b1)
            .then(a2.total_cmp(&b2))
            .then_with(|| a.model.cmp(&b.model))
    });
    let tag = match criterion {
        Criterion::Accuracy => 'A',
        Criterion::Time => 'T',
    };
    Ok(EnsembleSpec {
        name: format!("Ens{k}{tag}"),
        criterion,
        members: ranked[..k].iter().map(|r| r.model.clone()).collect(),
    })
}

/// Element-wise arithmetic mean of equally long member vectors.
pub fn mean_of(members: &[&[f64]]) -> Result<Vec<f64>> {
    let first = members
        .first()
        .ok_or_else(|| HarnessError::Misaligned("no members".into()))?;
    if let Some((j, m)) = members.iter().enumerate().find(|(_, m)| m.len() != first.len()) {
        return Err(HarnessError::Misaligned(format!(
            "member {j} has {} cells, member 0 has {}",
            m.len(),
            first.len()
        )));
    }
    let j = members.len() as f64;
    Ok((0..first.len())
        .map(|c| members.iter().map(|m| m[c]).sum::<f64>() / j)
        .collect())
}

/// Cell-wise mean of aligned `[series][step]` point forecasts.
pub fn combine_points(members: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    let first = members
        .first()
        .ok_or_else(|| HarnessError::Misaligned("no members".into()))?;
    if let Some(j) = members.iter().position(|m| m.len() != first.len()) {
        return Err(HarnessError::Misaligned(format!(
            "member {j} has {} series, member 0 has {}",
            members[j].len(),
            first.len()
        )));
    }
    (0..first.len())
        .map(|i| {
            let rows: Vec<&[f64]> = members.iter().map(|m| m[i].as_slice()).collect();
            mean_of(&rows).map_err(|e| HarnessError::Misaligned(format!("series {i}: {e}")))
        })
        .collect()
}

/// Sorts a quantile vector in place; returns whether any crossing was repaired.
pub fn repair_crossings(values: &mut [f64]) -> bool {
    if values.windows(2).all(|w| w[0] <= w[1]) {
        return false;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    true
}

/// Level-wise mean of member quantile forecasts.
///
/// Returns the combination and the number of cells whose averaged quantiles
/// had to be re-sorted.
pub fn combine_quantiles(members: &[QuantileForecast]) -> Result<(QuantileForecast, usize)> {
    let first = members
        .first()
        .ok_or_else(|| HarnessError::Misaligned("no members".into()))?;
    if let Some(j) = members.iter().position(|m| m.levels != first.levels) {
        return Err(HarnessError::Misaligned(format!(
            "member {j} uses a different quantile level set"
        )));
    }
    let points: Vec<Vec<Vec<f64>>> = members.iter().map(|m| m.point.clone()).collect();
    let point = combine_points(&points)?;
    let mut repaired = 0;
    let mut quantiles = Vec::with_capacity(point.len());
    for (i, steps) in point.iter().enumerate() {
        let mut per_step = Vec::with_capacity(steps.len());
        for s in 0..steps.len() {
            let cells: Vec<&[f64]> = members.iter().map(|m| m.quantiles[i][s].as_slice()).collect();
            let mut mean = mean_of(&cells)?;
            repaired += usize::from(repair_crossings(&mut mean));
            per_step.push(mean);
        }
        quantiles.push(per_step);
    }
    Ok((
        QuantileForecast {
            levels: first.levels.clone(),
            point,
            quantiles,
        },
        repaired,
    ))
}

/// Computing time of a combination: the members' total; averaging is free.
pub fn combined_ct(member_cts: &[f64]) -> f64 {
    member_cts.iter().sum()
}
