//! Global learners behind one fit/predict interface.
//!
//! Every learner is trained once on rows pooled across all series of a
//! slice, and forecasts recursively: the prediction for step `s` feeds the
//! lag and window features of step `s + 1`.

mod linear;
mod mlp;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::features::{FeatureBuilder, FeatureConfig, FeatureMatrix};
use crate::panel::PanelSlice;

pub use linear::LinearModel;
pub use mlp::{Mlp, MlpParams};
pub use tree::{Forest, ForestParams, Gbt, GbtParams, RegressionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    SeasonalNaive,
    PooledLinear,
    PooledRidge,
    Mlp,
    Gbt,
    RandomForest,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::SeasonalNaive => "seasonal-naive",
            ModelKind::PooledLinear => "pooled-linear",
            ModelKind::PooledRidge => "pooled-ridge",
            ModelKind::Mlp => "mlp",
            ModelKind::Gbt => "gbt",
            ModelKind::RandomForest => "random-forest",
        };
        f.write_str(s)
    }
}

/// A named learner configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Falls back to the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, kind: ModelKind) -> Self {
        ModelSpec {
            name: name.into(),
            kind,
            params: BTreeMap::new(),
            seed: None,
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Parses and range-checks the kind-specific hyperparameters.
    pub fn hyperparameters(&self) -> Result<Hyperparameters> {
        let mut reader = ParamReader {
            spec: self,
            used: Vec::new(),
        };
        let hp = match self.kind {
            ModelKind::SeasonalNaive => Hyperparameters::SeasonalNaive {
                season: reader.opt_count("season", 1)?,
            },
            ModelKind::PooledLinear => Hyperparameters::Linear { penalty: 0.0 },
            ModelKind::PooledRidge => {
                let penalty = reader.real("penalty", 1.0)?;
                if penalty < 0.0 {
                    return Err(reader.invalid("penalty", "must be >= 0"));
                }
                Hyperparameters::Linear { penalty }
            }
            ModelKind::Mlp => {
                let lr = reader.real("learning_rate", 1e-2)?;
                if lr <= 0.0 {
                    return Err(reader.invalid("learning_rate", "must be > 0"));
                }
                Hyperparameters::Mlp(MlpParams {
                    hidden: reader.count("hidden", 32, 1)?,
                    layers: reader.count("layers", 1, 1)?,
                    epochs: reader.count("epochs", 30, 1)?,
                    batch_size: reader.count("batch_size", 64, 1)?,
                    learning_rate: lr,
                })
            }
            ModelKind::Gbt => {
                let lr = reader.real("learning_rate", 0.1)?;
                if lr <= 0.0 {
                    return Err(reader.invalid("learning_rate", "must be > 0"));
                }
                let subsample = reader.real("subsample", 1.0)?;
                if !(subsample > 0.0 && subsample <= 1.0) {
                    return Err(reader.invalid("subsample", "must be in (0, 1]"));
                }
                Hyperparameters::Gbt(GbtParams {
                    trees: reader.count("trees", 100, 1)?,
                    learning_rate: lr,
                    subsample,
                    tree: TreeParams {
                        max_depth: reader.count("depth", 3, 1)?,
                        min_leaf: reader.count("min_leaf", 1, 1)?,
                        feature_fraction: 1.0,
                    },
                })
            }
            ModelKind::RandomForest => {
                let frac = reader.real("feature_fraction", 1.0 / 3.0)?;
                if !(frac > 0.0 && frac <= 1.0) {
                    return Err(reader.invalid("feature_fraction", "must be in (0, 1]"));
                }
                Hyperparameters::Forest(ForestParams {
                    trees: reader.count("trees", 50, 1)?,
                    tree: TreeParams {
                        max_depth: reader.count("depth", 8, 1)?,
                        min_leaf: reader.count("min_leaf", 5, 1)?,
                        feature_fraction: frac,
                    },
                })
            }
        };
        reader.reject_unknown()?;
        Ok(hp)
    }
}

struct ParamReader<'a> {
    spec: &'a ModelSpec,
    used: Vec<&'static str>,
}

impl ParamReader<'_> {
    fn invalid(&self, key: &str, msg: &str) -> HarnessError {
        HarnessError::config(format!("models.{}.params.{key}", self.spec.name), msg)
    }

    fn real(&mut self, key: &'static str, default: f64) -> Result<f64> {
        self.used.push(key);
        match self.spec.params.get(key) {
            None => Ok(default),
            Some(v) if v.is_finite() => Ok(*v),
            Some(_) => Err(self.invalid(key, "must be finite")),
        }
    }

    fn count(&mut self, key: &'static str, default: usize, min: usize) -> Result<usize> {
        let v = self.real(key, default as f64)?;
        if v.fract() != 0.0 || v < min as f64 {
            return Err(self.invalid(key, &format!("must be an integer >= {min}")));
        }
        Ok(v as usize)
    }

    fn opt_count(&mut self, key: &'static str, min: usize) -> Result<Option<usize>> {
        if self.spec.params.contains_key(key) {
            self.count(key, min, min).map(Some)
        } else {
            self.used.push(key);
            Ok(None)
        }
    }

    fn reject_unknown(&self) -> Result<()> {
        match self.spec.params.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(self.invalid(k, &format!("unknown hyperparameter for {}", self.spec.kind))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Hyperparameters {
    SeasonalNaive { season: Option<usize> },
    Linear { penalty: f64 },
    Mlp(MlpParams),
    Gbt(GbtParams),
    Forest(ForestParams),
}

/// Learned parameters of one fitted learner.
#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    /// Stores only the seasonal period.
    SeasonalNaive {
        season: usize,
    },
    Linear(LinearModel),
    Mlp(Mlp),
    Gbt(Gbt),
    Forest(Forest),
}

impl Learner {
    /// Point prediction for a single feature row.
    ///
    /// # Panics
    /// On the seasonal-naive learner, which does not read feature rows.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Learner::SeasonalNaive { .. } => panic!("seasonal-naive predicts from history, not rows"),
            Learner::Linear(m) => m.predict(row),
            Learner::Mlp(m) => m.predict(row),
            Learner::Gbt(m) => m.predict(row),
            Learner::Forest(m) => m.predict(row),
        }
    }
}

/// Trains a learner on a pooled matrix. `season` backs the seasonal-naive kind.
pub fn fit_matrix(spec: &ModelSpec, matrix: &FeatureMatrix, season: usize) -> Result<Learner> {
    let hp = spec.hyperparameters()?;
    if let Hyperparameters::SeasonalNaive { season: s } = hp {
        return Ok(Learner::SeasonalNaive {
            season: s.unwrap_or(season),
        });
    }
    if matrix.is_empty() {
        return Err(HarnessError::config("features", "empty feature matrix"));
    }
    if let Some(pos) = matrix.data.iter().position(|v| !v.is_finite()) {
        return Err(HarnessError::config(
            "features",
            format!("non-finite value in column '{}'", matrix.columns[pos % matrix.n_cols()]),
        ));
    }
    let seed = spec.seed();
    Ok(match hp {
        Hyperparameters::SeasonalNaive { .. } => unreachable!(),
        Hyperparameters::Linear { penalty } => Learner::Linear(LinearModel::fit(matrix, penalty)?),
        Hyperparameters::Mlp(p) => Learner::Mlp(Mlp::fit(matrix, &p, seed)?),
        Hyperparameters::Gbt(p) => Learner::Gbt(Gbt::fit(matrix, &p, seed)),
        Hyperparameters::Forest(p) => Learner::Forest(Forest::fit(matrix, &p, seed)),
    })
}

/// A trained global model plus the feature layout it was trained with.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub name: String,
    pub kind: ModelKind,
    pub learner: Learner,
    pub features: FeatureConfig,
    pub fit_seconds: f64,
    /// Schedule origin at which the model was trained.
    pub fit_origin: usize,
}

/// Point forecasts indexed `[series][step - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub values: Vec<Vec<f64>>,
    pub predict_seconds: f64,
}

/// Builds pooled features over `slice` and trains one model on all series.
pub fn fit(spec: &ModelSpec, slice: &PanelSlice<'_>, features: &FeatureConfig) -> Result<FittedModel> {
    let clock = Instant::now();
    let season = slice.panel().frequency().season_length();
    let learner = if spec.kind == ModelKind::SeasonalNaive {
        fit_matrix(spec, &FeatureMatrix::from_rows(Vec::new(), &[], Vec::new()), season)?
    } else {
        let matrix = FeatureBuilder::new(slice.panel(), features)?.build(slice)?;
        fit_matrix(spec, &matrix, season)?
    };
    Ok(FittedModel {
        name: spec.name.clone(),
        kind: spec.kind,
        learner,
        features: features.clone(),
        fit_seconds: clock.elapsed().as_secs_f64(),
        fit_origin: 0,
    })
}

/// Recursive `h`-step forecasts from the end of every series in `slice`.
pub fn predict(model: &FittedModel, slice: &PanelSlice<'_>, horizon: usize) -> Result<Forecast> {
    let clock = Instant::now();
    let panel = slice.panel();
    let mut values = Vec::with_capacity(slice.series_count());
    match &model.learner {
        Learner::SeasonalNaive { season } => {
            for i in 0..slice.series_count() {
                let hist = slice.values(i);
                if horizon > 0 && hist.len() < *season {
                    return Err(HarnessError::InsufficientHistory {
                        series: panel.series()[i].id.clone(),
                        needed: *season,
                        have: hist.len(),
                    });
                }
                let last_cycle = &hist[hist.len().saturating_sub(*season)..];
                values.push((0..horizon).map(|s| last_cycle[s % season]).collect());
            }
        }
        learner => {
            let builder = FeatureBuilder::new(panel, &model.features)?;
            let mut row = Vec::with_capacity(builder.columns().len());
            for i in 0..slice.series_count() {
                let actuals = slice.values(i);
                let start = slice.range(i).start;
                let sum: f64 = actuals.iter().sum();
                let mut preds = Vec::with_capacity(horizon);
                for step in 1..=horizon {
                    row.clear();
                    builder.horizon_row_into(i, start, actuals, sum, step, &preds, &mut row)?;
                    preds.push(learner.predict_row(&row));
                }
                values.push(preds);
            }
        }
    }
    Ok(Forecast {
        values,
        predict_seconds: clock.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{Frequency, Series, SeriesPanel};
    use chrono::NaiveDate;

    fn panel(series: Vec<Vec<f64>>) -> SeriesPanel {
        let start = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        SeriesPanel::from_series(
            Frequency::Daily,
            series
                .into_iter()
                .enumerate()
                .map(|(i, values)| Series {
                    id: format!("s{i}"),
                    start,
                    values,
                    exogenous: BTreeMap::new(),
                    statics: BTreeMap::new(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn doubling(first: f64, n: usize) -> Vec<f64> {
        (0..n).map(|t| first * 2f64.powi(t as i32)).collect()
    }

    #[test]
    fn seasonal_naive_repeats_last_week() {
        let values: Vec<f64> = (0..21).map(f64::from).collect();
        let p = panel(vec![values]);
        let slice = PanelSlice::expanding(&p, 0).unwrap();
        let spec = ModelSpec::new("snaive", ModelKind::SeasonalNaive);
        let m = fit(&spec, &slice, &FeatureConfig::lags_only(&[1])).unwrap();
        assert_eq!(m.learner, Learner::SeasonalNaive { season: 7 });
        let fc = predict(&m, &slice, 28).unwrap();
        for (s, v) in fc.values[0].iter().enumerate() {
            assert_eq!(*v, 14.0 + (s % 7) as f64);
        }
    }

    #[test]
    fn pooled_linear_recursive_doubling() {
        let p = panel(vec![doubling(0.5, 6), doubling(0.25, 6), doubling(3.0 / 32.0, 6)]);
        let slice = PanelSlice::expanding(&p, 0).unwrap();
        let spec = ModelSpec::new("lr", ModelKind::PooledLinear);
        let m = fit(&spec, &slice, &FeatureConfig::lags_only(&[1])).unwrap();
        let Learner::Linear(lin) = &m.learner else { panic!() };
        assert!((lin.coefficients()[0] - 2.0).abs() < 1e-9);
        assert!(lin.intercept().abs() < 1e-9);

        // series 2 ends at 3/32 * 32 = 3
        let fc = predict(&m, &slice, 2).unwrap();
        assert!((fc.values[2][0] - 6.0).abs() < 1e-9);
        assert!((fc.values[2][1] - 12.0).abs() < 1e-9);
    }

    #[test]
    fn zero_horizon_is_empty() {
        let p = panel(vec![doubling(1.0, 8)]);
        let slice = PanelSlice::expanding(&p, 0).unwrap();
        for kind in [ModelKind::SeasonalNaive, ModelKind::PooledRidge] {
            let m = fit(&ModelSpec::new("m", kind), &slice, &FeatureConfig::lags_only(&[1])).unwrap();
            let fc = predict(&m, &slice, 0).unwrap();
            assert!(fc.values.iter().all(Vec::is_empty));
            assert!(fc.predict_seconds >= 0.0);
            assert!(m.fit_seconds >= 0.0);
        }
    }

    #[test]
    fn insufficient_history_names_series() {
        let p = panel(vec![vec![1.0, 2.0, 3.0]]);
        let slice = PanelSlice::expanding(&p, 0).unwrap();
        let m = fit(
            &ModelSpec::new("n", ModelKind::SeasonalNaive),
            &slice,
            &FeatureConfig::lags_only(&[1]),
        )
        .unwrap();
        assert!(matches!(
            predict(&m, &slice, 1),
            Err(HarnessError::InsufficientHistory { ref series, .. }) if series == "s0"
        ));
    }

    #[test]
    fn same_seed_same_predictions() {
        let values: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..60).map(|t| ((t * (i + 3)) % 11) as f64 + i as f64).collect())
            .collect();
        let p = panel(values);
        let slice = PanelSlice::expanding(&p, 0).unwrap();
        let cfg = FeatureConfig::default_for(Frequency::Daily);
        for kind in [ModelKind::Mlp, ModelKind::Gbt, ModelKind::RandomForest] {
            let spec = ModelSpec::new("m", kind).with_seed(7).with_param("trees", 5.0);
            let spec = if kind == ModelKind::Mlp {
                ModelSpec::new("m", kind).with_seed(7).with_param("epochs", 3.0)
            } else {
                spec
            };
            let a = predict(&fit(&spec, &slice, &cfg).unwrap(), &slice, 5).unwrap();
            let b = predict(&fit(&spec, &slice, &cfg).unwrap(), &slice, 5).unwrap();
            let bits = |f: &Forecast| -> Vec<u64> { f.values.iter().flatten().map(|v| v.to_bits()).collect() };
            assert_eq!(bits(&a), bits(&b), "{kind}");
        }
    }

    #[test]
    fn hyperparameter_validation() {
        let bad = ModelSpec::new("r", ModelKind::PooledRidge).with_param("penalty", -1.0);
        assert!(bad.hyperparameters().is_err());
        let bad = ModelSpec::new("g", ModelKind::Gbt).with_param("depth", 0.0);
        assert!(bad.hyperparameters().is_err());
        let bad = ModelSpec::new("m", ModelKind::Mlp).with_param("hidden", 0.0);
        assert!(bad.hyperparameters().is_err());
        let bad = ModelSpec::new("l", ModelKind::PooledLinear).with_param("penalty", 1.0);
        let err = bad.hyperparameters().unwrap_err().to_string();
        assert!(err.contains("models.l.params.penalty"), "{err}");
        let ok = ModelSpec::new("g", ModelKind::Gbt).with_param("depth", 2.0);
        match ok.hyperparameters().unwrap() {
            Hyperparameters::Gbt(p) => {
                assert_eq!(p.tree.max_depth, 2);
                assert_eq!(p.trees, 100);
                assert_eq!(p.learning_rate, 0.1);
            }
            other => panic!("{other:?}"),
        }
    }
}
