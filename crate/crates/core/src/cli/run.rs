use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::backtest::{run_grid, ScenarioFailure};
use crate::cost::CostModel;
use crate::ensemble::{select_pool, EnsembleSpec, Leaderboard};
use crate::error::{HarnessError, Result};
use crate::panel::{filter_min_length, load_panel, SeriesPanel};
use crate::synthetic;

use super::config::RunConfig;
use super::report::{build_report, Report, ReportSettings};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub series: usize,
    pub dropped_min_obs: usize,
    pub dropped_short: usize,
    pub scenarios: usize,
    pub failed: usize,
    pub workers: usize,
}

/// Machine-readable failure description written on a nonzero exit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub status: &'static str,
    pub exit_code: i32,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ScenarioFailure>,
}

impl ErrorSummary {
    pub fn from_error(err: &HarnessError) -> Self {
        let (kind, field, exit_code) = match err {
            HarnessError::Config { field, .. } => ("config", Some(field.clone()), 2),
            HarnessError::UnsupportedAlpha(_) => ("config", Some("stats.alpha".into()), 2),
            HarnessError::AsymmetricLevels(_) => ("config", Some("quantile_levels".into()), 2),
            HarnessError::EmptyStore => ("all-scenarios-failed", None, 1),
            HarnessError::Io(_) | HarnessError::Csv(_) | HarnessError::Json(_) => ("io", None, 1),
            _ => ("pipeline", None, 1),
        };
        ErrorSummary {
            status: "error",
            exit_code,
            kind,
            field,
            message: err.to_string(),
            failures: Vec::new(),
        }
    }
}

/// Loads the configured panel and applies both length filters: the
/// configured minimum, then the history needed by the test span plus
/// warm-up and conformal calibration.
pub fn load_data(cfg: &RunConfig) -> Result<(SeriesPanel, usize, usize)> {
    let panel = match (&cfg.data.path, &cfg.data.synthetic) {
        (Some(path), _) => {
            let mut panel = load_panel(fs::File::open(path)?, &cfg.data.schema, cfg.frequency)?;
            if let Some(p) = &cfg.data.statics {
                panel.attach_statics(fs::File::open(p)?, &cfg.data.schema.id)?;
            }
            if let Some(p) = &cfg.data.exogenous {
                panel.attach_exogenous(fs::File::open(p)?, &cfg.data.schema)?;
            }
            panel
        }
        (None, Some(spec)) => synthetic::generate(spec)?,
        (None, None) => return Err(HarnessError::config("data", "set `path` or `synthetic`")),
    };
    let min_obs = cfg.filters.min_obs.unwrap_or(0);
    let (panel, dropped_min_obs) = filter_min_length(&panel, min_obs)?;
    let needed = cfg.test_len + cfg.features().warm_up() + (cfg.conformal_multiple() + 1) * cfg.horizon;
    let (panel, dropped_short) = filter_min_length(&panel, needed - 1)?;
    if dropped_short > 0 {
        log::warn!("{dropped_short} series shorter than {needed} observations dropped");
    }
    Ok((panel, dropped_min_obs, dropped_short))
}

/// Executes the full pipeline and writes every artifact under the output directory.
pub fn execute(cfg: &RunConfig) -> Result<(RunSummary, Report)> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("effective_config.toml"), cfg.to_toml()?)?;

    let (panel, dropped_min_obs, dropped_short) = load_data(cfg)?;
    log::info!("{} series after filtering", panel.len());
    let workers = cfg.worker_count();
    let setup = cfg.setup();
    let mut store = run_grid(&panel, &cfg.models, &cfg.retrain_set, &setup, workers)?;
    if store.is_empty() {
        let mut summary = ErrorSummary::from_error(&HarnessError::EmptyStore);
        summary.failures = store.failures.clone();
        fs::write(out.join("error.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        return Err(HarnessError::EmptyStore);
    }

    let baseline = cfg.baseline();
    let mut leaderboard = Leaderboard::default();
    for spec in &cfg.models {
        let Some(result) = store.get(&spec.name, baseline) else {
            continue;
        };
        let scores = crate::backtest::score(result, &panel)?;
        match (scores.rmsse_mean(), scores.smql_mean()) {
            (Ok(a), Ok(b)) if a.mean.is_finite() && b.mean.is_finite() => {
                leaderboard.push(spec.name.clone(), a.mean, b.mean, result.ct())
            }
            _ => log::warn!("{} has no finite baseline metrics; left off the leaderboard", spec.name),
        }
    }

    let mut ensembles: Vec<EnsembleSpec> = Vec::new();
    for &criterion in &cfg.ensembles.criteria {
        for &k in &cfg.ensembles.sizes {
            match select_pool(&leaderboard, criterion, k) {
                Ok(spec) => {
                    store.add_ensemble(&spec, &cfg.retrain_set);
                    ensembles.push(spec);
                }
                Err(e) => store.failures.push(ScenarioFailure {
                    method: format!(
                        "Ens{k}{}",
                        if criterion == crate::ensemble::Criterion::Accuracy {
                            'A'
                        } else {
                            'T'
                        }
                    ),
                    retrain: baseline,
                    error: e.to_string(),
                }),
            }
        }
    }

    store.persist(out)?;
    let settings = ReportSettings {
        retrain_set: cfg.retrain_set.clone(),
        baseline,
        alpha: cfg.stats.alpha,
        blocking: cfg.stats.blocking,
        cost: cfg.cost.as_ref().map(|c| CostModel {
            rate_per_hour: c.rate_per_hour,
            dataset_series: c.dataset_series.unwrap_or(panel.len()),
            target_series: c.target_series,
        }),
    };
    let report = build_report(&store, &panel, &settings, leaderboard, ensembles)?;
    report.write(out)?;

    let summary = RunSummary {
        output_dir: out.clone(),
        series: panel.len(),
        dropped_min_obs,
        dropped_short,
        scenarios: store.results.len(),
        failed: store.failures.len(),
        workers,
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok((summary, report))
}

/// Loads `config_path`, applies the output override and runs. Returns the
/// process exit code: 0 on success (possibly with recorded scenario
/// failures), 2 for invalid configuration, 1 for everything else.
pub fn run(config_path: &Path, out: Option<PathBuf>) -> (i32, std::result::Result<RunSummary, ErrorSummary>) {
    let cfg = RunConfig::load(config_path).map(|mut cfg| {
        if let Some(dir) = out {
            cfg.output_dir = dir;
        }
        cfg
    });
    let cfg = match cfg {
        Ok(cfg) => cfg,
        Err(e) => {
            let summary = ErrorSummary::from_error(&e);
            return (summary.exit_code, Err(summary));
        }
    };
    match execute(&cfg) {
        Ok((summary, _)) => (0, Ok(summary)),
        Err(e) => {
            let summary = ErrorSummary::from_error(&e);
            if !matches!(e, HarnessError::EmptyStore) && cfg.output_dir.is_dir() {
                if let Ok(text) = serde_json::to_string_pretty(&summary) {
                    let _ = fs::write(cfg.output_dir.join("error.json"), text + "\n");
                }
            }
            (summary.exit_code, Err(summary))
        }
    }
}

/// Relative value of each method's metric at the baseline window; exactly 1.0.
pub fn baseline_ratios(report: &Report, baseline: usize) -> Vec<f64> {
    report
        .relative
        .iter()
        .filter(|r| r.retrain == baseline)
        .map(|r| r.relative)
        .collect()
}
