use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::backtest::{score, ResultStore, ScenarioFailure, ScenarioScores};
use crate::cost::CostModel;
use crate::ensemble::{EnsembleSpec, Leaderboard};
use crate::error::{HarnessError, Result};
use crate::metrics::{normalize_to_baseline, MetricKind, MetricRow};
use crate::panel::SeriesPanel;
use crate::stats::{self, RankMatrix};

use super::config::Blocking;

/// Report options that do not affect forecasts.
#[derive(Debug, Clone)]
pub struct ReportSettings {
    pub retrain_set: Vec<usize>,
    pub baseline: usize,
    pub alpha: f64,
    pub blocking: Blocking,
    pub cost: Option<CostModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioRow {
    pub method: String,
    pub kind: &'static str,
    pub retrain: usize,
    pub rmsse: f64,
    pub smql: f64,
    pub ct_seconds: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub fit_count: usize,
    pub cells: usize,
    pub rmsse_excluded: usize,
    pub smql_excluded: usize,
    pub repaired_crossings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeTableRow {
    pub metric: MetricKind,
    pub method: String,
    pub retrain: usize,
    pub value: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub method: String,
    pub retrain: usize,
    pub ct_seconds: f64,
    pub fit_count: usize,
    pub cost: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanRow {
    pub method: String,
    pub metric: MetricKind,
    pub test: &'static str,
    pub blocking: &'static str,
    pub blocks: usize,
    pub treatments: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub critical_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub method: String,
    pub metric: MetricKind,
    pub retrain: usize,
    pub mean_rank: f64,
    pub critical_difference: f64,
    pub baseline: usize,
    pub verdict: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RosterRow {
    pub ensemble: String,
    pub criterion: String,
    pub size: usize,
    pub position: usize,
    pub member: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub method: String,
    pub retrain: usize,
    pub metric: MetricKind,
    pub value: f64,
    pub relative_value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub scenarios: Vec<ScenarioRow>,
    pub relative: Vec<RelativeTableRow>,
    pub costs: Vec<CostRow>,
    pub leaderboard: Leaderboard,
    pub ensembles: Vec<EnsembleSpec>,
    pub friedman: Vec<FriedmanRow>,
    pub ranks: Vec<RankRow>,
    pub failures: Vec<ScenarioFailure>,
    pub notes: Vec<String>,
}

/// Scores every stored scenario and derives all report tables.
pub fn build_report(
    store: &ResultStore,
    panel: &SeriesPanel,
    settings: &ReportSettings,
    leaderboard: Leaderboard,
    ensembles: Vec<EnsembleSpec>,
) -> Result<Report> {
    if store.is_empty() {
        return Err(HarnessError::EmptyStore);
    }
    let ensemble_names: Vec<&str> = ensembles.iter().map(|e| e.name.as_str()).collect();
    let mut report = Report {
        leaderboard,
        failures: store.failures.clone(),
        ..Report::default()
    };
    let mut scores: BTreeMap<(String, usize), ScenarioScores> = BTreeMap::new();
    let mut rows = Vec::new();
    for ((method, r), result) in &store.results {
        let s = score(result, panel)?;
        let (rmsse, smql) = match (s.rmsse_mean(), s.smql_mean()) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                report.notes.push(format!("{method} r={r}: {e}"));
                continue;
            }
        };
        let kind = if ensemble_names.contains(&method.as_str()) {
            "ensemble"
        } else {
            "base"
        };
        report.scenarios.push(ScenarioRow {
            method: method.clone(),
            kind,
            retrain: *r,
            rmsse: rmsse.mean,
            smql: smql.mean,
            ct_seconds: result.ct(),
            fit_seconds: result.ledger.fit_seconds,
            predict_seconds: result.ledger.predict_seconds,
            fit_count: result.ledger.fit_count,
            cells: s.rmsse.len(),
            rmsse_excluded: rmsse.excluded,
            smql_excluded: smql.excluded,
            repaired_crossings: result.repaired_crossings,
        });
        for (metric, value) in [
            (MetricKind::Rmsse, rmsse.mean),
            (MetricKind::Smql, smql.mean),
            (MetricKind::Ct, result.ct()),
        ] {
            rows.push(MetricRow {
                method: method.clone(),
                retrain: *r,
                metric,
                value,
            });
        }
        if let Some(cost) = &settings.cost {
            report.costs.push(CostRow {
                method: method.clone(),
                retrain: *r,
                ct_seconds: result.ct(),
                fit_count: result.ledger.fit_count,
                cost: format!("{:.2}", cost.estimate(result.ct())),
            });
        }
        scores.insert((method.clone(), *r), s);
    }
    if report.scenarios.is_empty() {
        return Err(HarnessError::AllExcluded);
    }
    report.ensembles = ensembles;

    let methods: Vec<String> = {
        let mut m: Vec<String> = rows.iter().map(|r| r.method.clone()).collect();
        m.dedup();
        m
    };
    for method in &methods {
        let own: Vec<MetricRow> = rows.iter().filter(|r| &r.method == method).cloned().collect();
        match normalize_to_baseline(&own, settings.baseline) {
            Ok(rel) => report.relative.extend(rel.into_iter().map(|r| RelativeTableRow {
                metric: r.metric,
                method: r.method,
                retrain: r.retrain,
                value: r.value,
                relative: r.relative,
            })),
            Err(e) => report.notes.push(format!("{method}: relative values skipped: {e}")),
        }
        for metric in [MetricKind::Rmsse, MetricKind::Smql] {
            if let Err(e) = rank_method(&mut report, &scores, settings, method, metric) {
                report.notes.push(format!("{method} {metric}: rank test skipped: {e}"));
            }
        }
    }
    report
        .relative
        .sort_by(|a, b| (a.metric, &a.method, a.retrain).cmp(&(b.metric, &b.method, b.retrain)));
    Ok(report)
}

fn rank_method(
    report: &mut Report,
    scores: &BTreeMap<(String, usize), ScenarioScores>,
    settings: &ReportSettings,
    method: &str,
    metric: MetricKind,
) -> Result<()> {
    let treatments: Vec<(usize, &ScenarioScores)> = settings
        .retrain_set
        .iter()
        .filter_map(|&r| scores.get(&(method.to_string(), r)).map(|s| (r, s)))
        .collect();
    let columns: Vec<Vec<Option<f64>>> = treatments
        .iter()
        .map(|(_, s)| {
            let cells = if metric == MetricKind::Rmsse { &s.rmsse } else { &s.smql };
            match settings.blocking {
                Blocking::Series => ScenarioScores::series_means(cells, s.origins),
                Blocking::Cell => cells.clone(),
            }
        })
        .collect();
    let n = columns.first().map_or(0, Vec::len);
    let blocks: Vec<Vec<f64>> = (0..n)
        .filter_map(|b| columns.iter().map(|c| c[b]).collect::<Option<Vec<f64>>>())
        .collect();
    if blocks.len() < n {
        report.notes.push(format!(
            "{method} {metric}: {} blocks dropped for excluded cells",
            n - blocks.len()
        ));
    }
    let labels: Vec<String> = treatments.iter().map(|(r, _)| format!("r{r}")).collect();
    let matrix = RankMatrix::new(labels, blocks)?;
    let result = stats::friedman(&matrix);
    let cd = stats::nemenyi_cd(matrix.k(), matrix.blocks(), settings.alpha)?;
    let verdicts = stats::compare_to_baseline(&result, cd, &format!("r{}", settings.baseline)).ok();
    report.friedman.push(FriedmanRow {
        method: method.to_string(),
        metric,
        test: "friedman-chi2",
        blocking: match settings.blocking {
            Blocking::Series => "series",
            Blocking::Cell => "cell",
        },
        blocks: matrix.blocks(),
        treatments: matrix.k(),
        statistic: result.statistic,
        p_value: result.p_value,
        alpha: settings.alpha,
        critical_difference: cd,
    });
    for (j, (r, _)) in treatments.iter().enumerate() {
        report.ranks.push(RankRow {
            method: method.to_string(),
            metric,
            retrain: *r,
            mean_rank: result.mean_ranks[j],
            critical_difference: cd,
            baseline: settings.baseline,
            verdict: verdicts.as_ref().map_or("no-baseline", |v| v[j].as_str()),
        });
    }
    Ok(())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl Report {
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        self.relative
            .iter()
            .map(|r| PlotRow {
                method: r.method.clone(),
                retrain: r.retrain,
                metric: r.metric,
                value: r.value,
                relative_value: r.relative,
            })
            .collect()
    }

    pub fn roster(&self) -> Vec<RosterRow> {
        self.ensembles
            .iter()
            .flat_map(|e| {
                e.members.iter().enumerate().map(move |(i, m)| RosterRow {
                    ensemble: e.name.clone(),
                    criterion: e.criterion.to_string(),
                    size: e.size(),
                    position: i + 1,
                    member: m.clone(),
                })
            })
            .collect()
    }

    /// Writes every table into `dir`. Headers are fixed even for empty tables.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let stats_dir = dir.join("stats");
        fs::create_dir_all(&stats_dir)?;
        write_rows(
            &dir.join("metrics.csv"),
            &self.scenarios,
            &[
                "method",
                "kind",
                "retrain",
                "rmsse",
                "smql",
                "ct_seconds",
                "fit_seconds",
                "predict_seconds",
                "fit_count",
                "cells",
                "rmsse_excluded",
                "smql_excluded",
                "repaired_crossings",
            ],
        )?;
        write_rows(
            &dir.join("relative_metrics.csv"),
            &self.relative,
            &["metric", "method", "retrain", "value", "relative"],
        )?;
        write_rows(
            &dir.join("costs.csv"),
            &self.costs,
            &["method", "retrain", "ct_seconds", "fit_count", "cost"],
        )?;
        write_rows(
            &dir.join("leaderboard.csv"),
            &self.leaderboard.rows,
            &["model", "rmsse", "smql", "ct"],
        )?;
        write_rows(
            &dir.join("ensembles.csv"),
            &self.roster(),
            &["ensemble", "criterion", "size", "position", "member"],
        )?;
        write_rows(
            &dir.join("plot_data.csv"),
            &self.plot_rows(),
            &["method", "retrain", "metric", "value", "relative_value"],
        )?;
        write_rows(
            &stats_dir.join("friedman.csv"),
            &self.friedman,
            &[
                "method",
                "metric",
                "test",
                "blocking",
                "blocks",
                "treatments",
                "statistic",
                "p_value",
                "alpha",
                "critical_difference",
            ],
        )?;
        write_rows(
            &stats_dir.join("cd_diagram.csv"),
            &self.ranks,
            &[
                "method",
                "metric",
                "retrain",
                "mean_rank",
                "critical_difference",
                "baseline",
                "verdict",
            ],
        )?;
        let failures = serde_json::json!({
            "failures": self.failures,
            "notes": self.notes,
        });
        fs::write(
            dir.join("failures.json"),
            serde_json::to_string_pretty(&failures)? + "\n",
        )?;
        Ok(())
    }
}
