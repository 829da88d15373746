use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestSetup, ScenarioConfig};
use crate::conformal::{self, QuantileLevels};
use crate::ensemble::Criterion;
use crate::error::{HarnessError, Result};
use crate::features::FeatureConfig;
use crate::models::ModelSpec;
use crate::panel::{Frequency, Schema};
use crate::synthetic::SyntheticSpec;

pub const WORKERS_ENV: &str = "RETRAIN_WORKERS";

/// Panel source: a long-format CSV or the built-in synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statics: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exogenous: Option<PathBuf>,
    #[serde(default)]
    pub schema: Schema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Keep series with more than this many observations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_obs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "all_criteria")]
    pub criteria: Vec<Criterion>,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            criteria: all_criteria(),
            sizes: default_sizes(),
        }
    }
}

fn all_criteria() -> Vec<Criterion> {
    vec![Criterion::Accuracy, Criterion::Time]
}

/// Empty means every size from 2 up to `min(5, model count)`.
fn default_sizes() -> Vec<usize> {
    Vec::new()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub rate_per_hour: f64,
    pub target_series: f64,
    /// Defaults to the number of series that survive filtering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_series: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Blocking {
    /// One block per series: its metric averaged over origins.
    #[default]
    Series,
    /// One block per (series, origin) cell.
    Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub blocking: Blocking,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            alpha: default_alpha(),
            blocking: Blocking::Series,
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_step() -> usize {
    1
}

/// A complete run description. Every science choice lives here; after
/// [`RunConfig::resolve`] all optional fields are filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub frequency: Frequency,
    pub horizon: usize,
    pub test_len: usize,
    #[serde(default = "default_step")]
    pub step: usize,
    pub retrain_set: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_point: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_prob: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_levels: Option<QuantileLevels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conformal_multiple: Option<usize>,
    pub data: DataConfig,
    #[serde(default)]
    pub filters: FilterConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureConfig>,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub ensembles: EnsembleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostConfig>,
    #[serde(default)]
    pub stats: StatsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let message = e.message();
            // serde reports missing keys without a useful span
            let field = match message
                .strip_prefix("missing field `")
                .and_then(|m| m.split('`').next())
            {
                Some(name) => name.to_string(),
                None => match e.span() {
                    Some(s) if s.end > 0 => format!("line {}", text[..s.start].matches('\n').count() + 1),
                    _ => "config".to_string(),
                },
            };
            HarnessError::config(field, message.to_string())
        })
    }

    /// Reads, resolves and validates a config file. Relative paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase_paths(base);
        cfg.resolve()
    }

    fn rebase_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [&mut self.data.path, &mut self.data.statics, &mut self.data.exogenous]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Fills every default and validates the result.
    pub fn resolve(mut self) -> Result<Self> {
        let f = self.frequency;
        self.baseline.get_or_insert(match f {
            Frequency::Daily => 7,
            Frequency::Weekly => 1,
        });
        self.s_point.get_or_insert(1);
        self.s_prob.get_or_insert(match f {
            Frequency::Daily => 7,
            Frequency::Weekly => 1,
        });
        self.quantile_levels.get_or_insert_with(QuantileLevels::standard);
        self.conformal_multiple.get_or_insert(conformal::default_multiple(f));
        self.filters.min_obs.get_or_insert(f.default_min_obs());
        self.features.get_or_insert_with(|| FeatureConfig::default_for(f));
        if self.ensembles.sizes.is_empty() {
            self.ensembles.sizes = (2..=self.models.len().min(5)).collect();
        }
        for m in &mut self.models {
            m.seed.get_or_insert(self.seed);
        }
        if let Some(syn) = &mut self.data.synthetic {
            syn.frequency = f;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.retrain_set.is_empty() {
            return Err(HarnessError::config("retrain_set", "must not be empty"));
        }
        let mut seen = BTreeSet::new();
        for (i, &r) in self.retrain_set.iter().enumerate() {
            if r == 0 || r > self.test_len {
                return Err(HarnessError::config(
                    format!("retrain_set[{i}]"),
                    format!("retrain window {r} outside [1, test_len = {}]", self.test_len),
                ));
            }
            if !seen.insert(r) {
                return Err(HarnessError::config(
                    format!("retrain_set[{i}]"),
                    format!("duplicate value {r}"),
                ));
            }
        }
        let baseline = self.baseline();
        if !self.retrain_set.contains(&baseline) {
            return Err(HarnessError::config(
                "baseline",
                format!("baseline {baseline} is not in retrain_set"),
            ));
        }
        self.scenario().validate()?;
        if self.workers == Some(0) {
            return Err(HarnessError::config("workers", "must be positive"));
        }
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) => {
                return Err(HarnessError::config(
                    "data",
                    "set either `path` or `synthetic`, not both",
                ))
            }
            (None, None) => return Err(HarnessError::config("data", "set `path` or `synthetic`")),
            (None, Some(_)) if self.data.statics.is_some() || self.data.exogenous.is_some() => {
                return Err(HarnessError::config(
                    "data",
                    "statics and exogenous files need a `path` panel",
                ))
            }
            _ => {}
        }
        if self.conformal_multiple() < 2 {
            return Err(HarnessError::config("conformal_multiple", "must be at least 2"));
        }
        self.features().validate()?;

        if self.models.is_empty() {
            return Err(HarnessError::config("models", "at least one model is required"));
        }
        let mut names = BTreeSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if m.name.is_empty() {
                return Err(HarnessError::config(format!("models[{i}].name"), "must not be empty"));
            }
            if !names.insert(m.name.as_str()) {
                return Err(HarnessError::config(
                    format!("models[{i}].name"),
                    format!("duplicate name '{}'", m.name),
                ));
            }
            if m.name.starts_with("Ens") {
                return Err(HarnessError::config(
                    format!("models[{i}].name"),
                    "names starting with `Ens` are reserved for ensembles",
                ));
            }
            m.hyperparameters()?;
        }
        for (i, &k) in self.ensembles.sizes.iter().enumerate() {
            if !(2..=5).contains(&k) {
                return Err(HarnessError::config(
                    format!("ensembles.sizes[{i}]"),
                    "sizes must be in 2..=5",
                ));
            }
            if k > self.models.len() {
                return Err(HarnessError::config(
                    format!("ensembles.sizes[{i}]"),
                    format!("size {k} exceeds the {} configured models", self.models.len()),
                ));
            }
        }
        if let Some(c) = &self.cost {
            if !(c.rate_per_hour.is_finite() && c.rate_per_hour > 0.0) {
                return Err(HarnessError::config("cost.rate_per_hour", "must be positive"));
            }
            if !(c.target_series.is_finite() && c.target_series > 0.0) {
                return Err(HarnessError::config("cost.target_series", "must be positive"));
            }
            if c.dataset_series == Some(0) {
                return Err(HarnessError::config("cost.dataset_series", "must be positive"));
            }
        }
        if self.stats.alpha != 0.05 && self.stats.alpha != 0.10 {
            return Err(HarnessError::config(
                "stats.alpha",
                "supported values are 0.05 and 0.10",
            ));
        }
        Ok(())
    }

    pub fn baseline(&self) -> usize {
        self.baseline.unwrap_or(1)
    }

    pub fn conformal_multiple(&self) -> usize {
        self.conformal_multiple
            .unwrap_or_else(|| conformal::default_multiple(self.frequency))
    }

    pub fn features(&self) -> FeatureConfig {
        self.features
            .clone()
            .unwrap_or_else(|| FeatureConfig::default_for(self.frequency))
    }

    pub fn levels(&self) -> QuantileLevels {
        self.quantile_levels.clone().unwrap_or_else(QuantileLevels::standard)
    }

    /// Scenario settings with the baseline retrain window.
    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            horizon: self.horizon,
            step: self.step,
            test_len: self.test_len,
            retrain: self.baseline(),
            frequency: self.frequency,
            s_point: self.s_point.unwrap_or(1),
            s_prob: self.s_prob.unwrap_or(1),
        }
    }

    pub fn setup(&self) -> BacktestSetup {
        BacktestSetup {
            config: self.scenario(),
            features: self.features(),
            levels: self.levels(),
            conformal_multiple: self.conformal_multiple(),
        }
    }

    /// Config value, overridden by the environment, else the machine's parallelism.
    pub fn worker_count(&self) -> usize {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .or(self.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::config("effective_config", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output_dir = "out"
frequency = "daily"
horizon = 7
test_len = 28
retrain_set = [1, 7, 28]

[data.synthetic]
series = 4

[[models]]
name = "lr"
kind = "pooled-linear"
"#;

    #[test]
    fn defaults_resolve() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap().resolve().unwrap();
        assert_eq!(cfg.baseline, Some(7));
        assert_eq!(cfg.s_point, Some(1));
        assert_eq!(cfg.s_prob, Some(7));
        assert_eq!(cfg.conformal_multiple, Some(4));
        assert_eq!(cfg.filters.min_obs, Some(730));
        assert_eq!(cfg.quantile_levels.as_ref().unwrap().len(), 14);
        assert_eq!(cfg.models[0].seed, Some(0));
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap().resolve().unwrap();
        let text = cfg.to_toml().unwrap();
        let again = RunConfig::from_toml(&text).unwrap().resolve().unwrap();
        assert_eq!(cfg, again);
    }

    fn field_of(text: &str) -> String {
        match RunConfig::from_toml(text).and_then(RunConfig::resolve) {
            Err(HarnessError::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn validation_names_fields() {
        assert!(field_of(&MINIMAL.replace("[1, 7, 28]", "[0, 7]")).starts_with("retrain_set"));
        assert!(field_of(&MINIMAL.replace("[1, 7, 28]", "[1, 7, 29]")).starts_with("retrain_set"));
        assert_eq!(field_of(&MINIMAL.replace("[1, 7, 28]", "[1, 28]")), "baseline");
        assert_eq!(
            field_of(&format!("{MINIMAL}\n[ensembles]\nsizes = [2]\n")),
            "ensembles.sizes[0]"
        );
        assert_eq!(
            field_of(&MINIMAL.replace("kind = \"pooled-linear\"", "kind = \"mlp\"\nparams = { hiden = 3 }")),
            "models.lr.params.hiden"
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml(&format!("bogus = 1\n{MINIMAL}")).is_err());
    }

    #[test]
    fn parse_errors_name_key_or_line() {
        let without_horizon: String = MINIMAL
            .lines()
            .filter(|l| !l.starts_with("horizon"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(field_of(&without_horizon), "horizon");
        assert_eq!(
            field_of(&format!("{MINIMAL}\nseed = \"x\"\n")).split(' ').next(),
            Some("line")
        );
    }
}
