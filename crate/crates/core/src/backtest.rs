//! Rolling-origin evaluation with a retraining schedule.
//!
//! The last `T` observations of every series form the test span. Origin `i`
//! (0-based) forecasts `h` steps from history ending `T - i` observations
//! before the series end, so every window lies inside the test span. Origins
//! with `i % r == 0` re-estimate parameters and conformal scores on the
//! expanding window; the others reuse the last fit with advanced features.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{self, ConformalCalibration, QuantileForecast, QuantileLevels};
use crate::ensemble::{self, EnsembleSpec};
use crate::error::{HarnessError, Result};
use crate::features::FeatureConfig;
use crate::metrics::{self, Aggregate, ScaleCache};
use crate::models::{self, FittedModel, ModelSpec};
use crate::panel::{Frequency, PanelSlice, SeriesPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub horizon: usize,
    pub step: usize,
    pub test_len: usize,
    pub retrain: usize,
    pub frequency: Frequency,
    pub s_point: usize,
    pub s_prob: usize,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("horizon", self.horizon),
            ("test_len", self.test_len),
            ("s_point", self.s_point),
            ("s_prob", self.s_prob),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(HarnessError::config(field, "must be positive"));
            }
        }
        if self.step != 1 {
            return Err(HarnessError::config("step", "only a step size of 1 is supported"));
        }
        if self.retrain == 0 || self.retrain > self.test_len {
            return Err(HarnessError::config(
                "retrain_set",
                format!("retrain window {} outside [1, {}]", self.retrain, self.test_len),
            ));
        }
        if self.horizon > self.test_len {
            return Err(HarnessError::config(
                "horizon",
                format!("horizon {} exceeds test length {}", self.horizon, self.test_len),
            ));
        }
        Ok(())
    }

    pub fn with_retrain(mut self, retrain: usize) -> Self {
        self.retrain = retrain;
        self
    }

    pub fn origin_count(&self) -> usize {
        self.test_len - self.horizon + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub index: usize,
    pub fit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrainSchedule {
    pub origins: Vec<Origin>,
}

impl RetrainSchedule {
    pub fn fit_count(&self) -> usize {
        self.origins.iter().filter(|o| o.fit).count()
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

pub fn make_schedule(config: &ScenarioConfig) -> Result<RetrainSchedule> {
    config.validate()?;
    let origins = (0..config.origin_count())
        .map(|index| Origin {
            index,
            fit: index % config.retrain == 0,
        })
        .collect();
    Ok(RetrainSchedule { origins })
}

/// Seconds charged to a scenario. Prediction is timed at every origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CtLedger {
    /// Feature building, training and conformal calibration.
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub fit_count: usize,
}

impl CtLedger {
    pub fn total(&self) -> f64 {
        self.fit_seconds + self.predict_seconds
    }

    fn absorb(&mut self, other: &CtLedger) {
        self.fit_seconds += other.fit_seconds;
        self.predict_seconds += other.predict_seconds;
        self.fit_count += other.fit_count;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OriginForecast {
    pub origin: Origin,
    pub forecast: QuantileForecast,
    /// `[series][step - 1]`.
    pub actuals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub method: String,
    pub config: ScenarioConfig,
    pub series_ids: Vec<String>,
    pub origins: Vec<OriginForecast>,
    pub ledger: CtLedger,
    /// Combined cells whose quantiles had to be re-sorted (ensembles only).
    pub repaired_crossings: usize,
}

impl ScenarioResult {
    pub fn retrain(&self) -> usize {
        self.config.retrain
    }

    pub fn ct(&self) -> f64 {
        self.ledger.total()
    }

    pub fn levels(&self) -> Option<&QuantileLevels> {
        self.origins.first().map(|o| &o.forecast.levels)
    }

    /// Forecast CSV: `series_id, origin, step, actual, point` then one column per level.
    pub fn write_forecasts<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header: Vec<String> = ["series_id", "origin", "step", "actual", "point"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        if let Some(levels) = self.levels() {
            header.extend(levels.levels().iter().map(|q| format!("q{q}")));
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for o in &self.origins {
            for (i, id) in self.series_ids.iter().enumerate() {
                for s in 0..self.config.horizon {
                    record.clear();
                    record.push(id.clone());
                    record.push(o.origin.index.to_string());
                    record.push((s + 1).to_string());
                    record.push(o.actuals[i][s].to_string());
                    record.push(o.forecast.point[i][s].to_string());
                    record.extend(o.forecast.quantiles[i][s].iter().map(f64::to_string));
                    w.write_record(&record)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything shared by all scenarios of one grid apart from the retrain window.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestSetup {
    pub config: ScenarioConfig,
    pub features: FeatureConfig,
    pub levels: QuantileLevels,
    pub conformal_multiple: usize,
}

fn check_panel(panel: &SeriesPanel, setup: &BacktestSetup) -> Result<()> {
    let cfg = &setup.config;
    let needed = cfg.test_len + setup.features.warm_up() + (setup.conformal_multiple + 1) * cfg.horizon;
    if let Some(s) = panel.series().iter().find(|s| s.len() < needed) {
        return Err(HarnessError::InsufficientHistory {
            series: s.id.clone(),
            needed,
            have: s.len(),
        });
    }
    setup.features.validate_for_length(panel.min_len() - cfg.test_len)
}

/// Runs one model under one retrain window.
pub fn run_scenario(panel: &SeriesPanel, spec: &ModelSpec, setup: &BacktestSetup) -> Result<ScenarioResult> {
    let cfg = setup.config;
    let schedule = make_schedule(&cfg)?;
    check_panel(panel, setup)?;
    spec.hyperparameters()?;
    let fail = |origin: usize, e: HarnessError| HarnessError::ScenarioFailed {
        method: spec.name.clone(),
        retrain: cfg.retrain,
        origin,
        source: Box::new(e),
    };

    let mut ledger = CtLedger::default();
    let mut current: Option<(FittedModel, ConformalCalibration)> = None;
    let mut origins = Vec::with_capacity(schedule.len());
    for origin in &schedule.origins {
        let history = PanelSlice::expanding(panel, cfg.test_len - origin.index).map_err(|e| fail(origin.index, e))?;
        if origin.fit {
            let mut model = models::fit(spec, &history, &setup.features).map_err(|e| fail(origin.index, e))?;
            model.fit_origin = origin.index;
            let cal = conformal::calibrate(spec, &setup.features, &history, cfg.horizon, setup.conformal_multiple)
                .map_err(|e| fail(origin.index, e))?;
            ledger.fit_seconds += model.fit_seconds + cal.seconds;
            ledger.fit_count += 1;
            current = Some((model, cal));
        }
        let (model, cal) = current.as_ref().expect("first origin always fits");
        let clock = Instant::now();
        let points = models::predict(model, &history, cfg.horizon).map_err(|e| fail(origin.index, e))?;
        let forecast =
            conformal::quantile_forecast(&points.values, cal, &setup.levels).map_err(|e| fail(origin.index, e))?;
        ledger.predict_seconds += clock.elapsed().as_secs_f64();

        let actuals = panel
            .series()
            .iter()
            .zip(history.ranges())
            .map(|(s, r)| s.values[r.end..r.end + cfg.horizon].to_vec())
            .collect();
        origins.push(OriginForecast {
            origin: *origin,
            forecast,
            actuals,
        });
    }
    Ok(ScenarioResult {
        method: spec.name.clone(),
        config: cfg,
        series_ids: panel.series().iter().map(|s| s.id.clone()).collect(),
        origins,
        ledger,
        repaired_crossings: 0,
    })
}

/// Combines cached member scenarios that share one retrain window.
/// The ensemble's ledger is the sum of its members' ledgers.
pub fn run_ensemble(spec: &EnsembleSpec, members: &[&ScenarioResult]) -> Result<ScenarioResult> {
    let first = members
        .first()
        .ok_or_else(|| HarnessError::Misaligned(format!("{} has no members", spec.name)))?;
    if let Some(m) = members.iter().find(|m| {
        m.config != first.config || m.series_ids != first.series_ids || m.origins.len() != first.origins.len()
    }) {
        return Err(HarnessError::Misaligned(format!(
            "{}: member {} does not match member {}",
            spec.name, m.method, first.method
        )));
    }
    let mut ledger = CtLedger::default();
    for m in members {
        ledger.absorb(&m.ledger);
    }
    let mut repaired = 0;
    let mut origins = Vec::with_capacity(first.origins.len());
    for (o, base) in first.origins.iter().enumerate() {
        let forecasts: Vec<QuantileForecast> = members.iter().map(|m| m.origins[o].forecast.clone()).collect();
        let (forecast, fixed) = ensemble::combine_quantiles(&forecasts)?;
        repaired += fixed;
        origins.push(OriginForecast {
            origin: base.origin,
            forecast,
            actuals: base.actuals.clone(),
        });
    }
    if repaired > 0 {
        log::warn!(
            "{} r={}: {repaired} quantile crossings repaired",
            spec.name,
            first.retrain()
        );
    }
    Ok(ScenarioResult {
        method: spec.name.clone(),
        config: first.config,
        series_ids: first.series_ids.clone(),
        origins,
        ledger,
        repaired_crossings: repaired,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFailure {
    pub method: String,
    pub retrain: usize,
    pub error: String,
}

/// Completed scenarios keyed by `(method, r)` plus recorded failures.
#[derive(Debug, Clone, Default)]
pub struct ResultStore {
    pub results: BTreeMap<(String, usize), ScenarioResult>,
    pub failures: Vec<ScenarioFailure>,
}

impl ResultStore {
    pub fn get(&self, method: &str, retrain: usize) -> Option<&ScenarioResult> {
        self.results.get(&(method.to_string(), retrain))
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn insert(&mut self, result: ScenarioResult) {
        self.results.insert((result.method.clone(), result.retrain()), result);
    }

    /// Builds the ensemble for every retrain window where all members succeeded.
    pub fn add_ensemble(&mut self, spec: &EnsembleSpec, retrain_set: &[usize]) {
        for &r in retrain_set {
            let members: Option<Vec<&ScenarioResult>> = spec.members.iter().map(|m| self.get(m, r)).collect();
            let outcome = match members {
                Some(members) => run_ensemble(spec, &members),
                None => Err(HarnessError::Misaligned(format!(
                    "a member of {} failed at r={r}",
                    spec.name
                ))),
            };
            match outcome {
                Ok(result) => self.insert(result),
                Err(e) => self.failures.push(ScenarioFailure {
                    method: spec.name.clone(),
                    retrain: r,
                    error: e.to_string(),
                }),
            }
        }
    }

    /// Writes `forecasts/<method>_r<r>.csv` and `ct/<method>_r<r>.json`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        let forecasts = dir.join("forecasts");
        let ct = dir.join("ct");
        fs::create_dir_all(&forecasts)?;
        fs::create_dir_all(&ct)?;
        for ((method, r), result) in &self.results {
            let stem = format!("{}_r{r}", file_stem(method));
            let file = fs::File::create(forecasts.join(format!("{stem}.csv")))?;
            result.write_forecasts(std::io::BufWriter::new(file))?;
            let json = serde_json::to_string_pretty(&result.ledger)?;
            fs::write(ct.join(format!("{stem}.json")), json + "\n")?;
        }
        Ok(())
    }
}

fn file_stem(method: &str) -> String {
    method
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// One scenario per `(model, r)`, run on a pool of `workers` threads.
/// Failed scenarios are recorded and the rest of the grid continues.
pub fn run_grid(
    panel: &SeriesPanel,
    specs: &[ModelSpec],
    retrain_set: &[usize],
    setup: &BacktestSetup,
    workers: usize,
) -> Result<ResultStore> {
    if retrain_set.is_empty() {
        return Err(HarnessError::config("retrain_set", "must not be empty"));
    }
    for &r in retrain_set {
        setup.config.with_retrain(r).validate()?;
    }
    let cells: Vec<(&ModelSpec, usize)> = specs
        .iter()
        .flat_map(|s| retrain_set.iter().map(move |&r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::config("workers", e.to_string()))?;
    let outcomes: Vec<Result<ScenarioResult>> = pool.install(|| {
        cells
            .par_iter()
            .map(|(spec, r)| {
                let local = BacktestSetup {
                    config: setup.config.with_retrain(*r),
                    ..setup.clone()
                };
                log::info!("running {} r={r}", spec.name);
                run_scenario(panel, spec, &local)
            })
            .collect()
    });
    let mut store = ResultStore::default();
    for ((spec, r), outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok(result) => store.insert(result),
            Err(e) => {
                log::error!("{e}");
                store.failures.push(ScenarioFailure {
                    method: spec.name.clone(),
                    retrain: *r,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(store)
}

/// Per-cell metric values, series-major: `cells[series * origins + origin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScores {
    pub method: String,
    pub retrain: usize,
    pub series: usize,
    pub origins: usize,
    pub rmsse: Vec<Option<f64>>,
    pub smql: Vec<Option<f64>>,
    pub ct: f64,
}

impl ScenarioScores {
    pub fn rmsse_mean(&self) -> Result<Aggregate> {
        metrics::aggregate(&self.rmsse)
    }

    pub fn smql_mean(&self) -> Result<Aggregate> {
        metrics::aggregate(&self.smql)
    }

    /// Mean over origins of each series' scored cells.
    pub fn series_means(cells: &[Option<f64>], origins: usize) -> Vec<Option<f64>> {
        cells
            .chunks(origins)
            .map(|c| metrics::aggregate(c).ok().map(|a| a.mean))
            .collect()
    }
}

/// Scores every `(series, origin)` cell against the history before its origin.
pub fn score(result: &ScenarioResult, panel: &SeriesPanel) -> Result<ScenarioScores> {
    let cfg = &result.config;
    if panel.len() != result.series_ids.len() {
        return Err(HarnessError::Misaligned(format!(
            "{} series in panel, {} in scenario",
            panel.len(),
            result.series_ids.len()
        )));
    }
    let levels = result.levels().map(|l| l.levels().to_vec()).unwrap_or_default();
    let m = result.origins.len();
    let mut rmsse = Vec::with_capacity(panel.len() * m);
    let mut smql = Vec::with_capacity(panel.len() * m);
    let mut by_level = vec![vec![0.0; cfg.horizon]; levels.len()];
    for (i, series) in panel.series().iter().enumerate() {
        let point_scale = ScaleCache::new(&series.values, cfg.s_point);
        let prob_scale = ScaleCache::new(&series.values, cfg.s_prob);
        for o in &result.origins {
            let end = series.len() - cfg.test_len + o.origin.index;
            let actuals = &o.actuals[i];
            rmsse.push(metrics::rmsse_scaled(
                actuals,
                &o.forecast.point[i],
                point_scale.squared(end),
            ));
            for (s, qs) in o.forecast.quantiles[i].iter().enumerate() {
                for (l, v) in qs.iter().enumerate() {
                    by_level[l][s] = *v;
                }
            }
            let scale = prob_scale.absolute(end);
            let mut total = 0.0;
            let mut cell = Some(());
            for (values, q) in by_level.iter().zip(&levels) {
                match metrics::sql_scaled(actuals, values, *q, scale) {
                    Some(v) => total += v,
                    None => cell = None,
                }
            }
            smql.push(cell.filter(|_| !levels.is_empty()).map(|_| total / levels.len() as f64));
        }
    }
    Ok(ScenarioScores {
        method: result.method.clone(),
        retrain: cfg.retrain,
        series: panel.len(),
        origins: m,
        rmsse,
        smql,
        ct: result.ct(),
    })
}
