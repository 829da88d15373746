//! Supervised feature construction for pooled (global) learners.
//!
//! Every window ends at `t - 1`, so no feature of the row targeting `y_t`
//! reads `y_t` or anything after it.

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::panel::{Frequency, PanelSlice, SeriesPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalendarFeature {
    Year,
    Month,
    /// ISO week number.
    Week,
    /// Monday = 0 .. Sunday = 6.
    DayOfWeek,
}

impl CalendarFeature {
    fn name(self) -> &'static str {
        match self {
            CalendarFeature::Year => "year",
            CalendarFeature::Month => "month",
            CalendarFeature::Week => "week",
            CalendarFeature::DayOfWeek => "day_of_week",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StaticEncoding {
    #[default]
    Ordinal,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub lags: Vec<usize>,
    #[serde(default)]
    pub rolling_windows: Vec<usize>,
    #[serde(default)]
    pub expanding_mean: bool,
    #[serde(default)]
    pub calendar: Vec<CalendarFeature>,
    #[serde(default)]
    pub static_encoding: StaticEncoding,
    #[serde(default)]
    pub exogenous: Vec<String>,
}

impl FeatureConfig {
    /// Lags `{1, 2, f, 2f}`, one rolling mean over `f`, the expanding mean and
    /// frequency-appropriate calendar fields.
    pub fn default_for(frequency: Frequency) -> Self {
        let f = frequency.season_length();
        let calendar = match frequency {
            Frequency::Daily => vec![CalendarFeature::DayOfWeek, CalendarFeature::Month],
            Frequency::Weekly => vec![CalendarFeature::Week],
        };
        FeatureConfig {
            lags: vec![1, 2, f, 2 * f],
            rolling_windows: vec![f],
            expanding_mean: true,
            calendar,
            static_encoding: StaticEncoding::Ordinal,
            exogenous: Vec::new(),
        }
    }

    /// Only lags, nothing else.
    pub fn lags_only(lags: &[usize]) -> Self {
        FeatureConfig {
            lags: lags.to_vec(),
            rolling_windows: Vec::new(),
            expanding_mean: false,
            calendar: Vec::new(),
            static_encoding: StaticEncoding::Ordinal,
            exogenous: Vec::new(),
        }
    }

    pub fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }

    pub fn max_window(&self) -> usize {
        self.rolling_windows.iter().copied().max().unwrap_or(0)
    }

    /// Number of leading observations without a complete feature row.
    pub fn warm_up(&self) -> usize {
        self.max_lag()
            .max(self.max_window())
            .max(usize::from(self.expanding_mean))
    }

    pub fn validate(&self) -> Result<()> {
        if self.lags.contains(&0) {
            return Err(HarnessError::config("features.lags", "lags must be positive"));
        }
        if self.rolling_windows.contains(&0) {
            return Err(HarnessError::config(
                "features.rolling_windows",
                "windows must be positive",
            ));
        }
        if self.warm_up() == 0 && self.calendar.is_empty() && self.exogenous.is_empty() {
            return Err(HarnessError::config("features", "no features configured"));
        }
        Ok(())
    }

    /// Checks `max lag + max window < shortest training length`.
    pub fn validate_for_length(&self, shortest: usize) -> Result<()> {
        self.validate()?;
        if self.max_lag() + self.max_window() >= shortest {
            return Err(HarnessError::config(
                "features",
                format!(
                    "max lag {} + max window {} must be below the shortest training length {shortest}",
                    self.max_lag(),
                    self.max_window()
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RowKey {
    pub series: usize,
    /// Absolute index of the target within its series.
    pub index: usize,
}

/// Row-major design matrix with targets and row keys.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub data: Vec<f64>,
    pub targets: Vec<f64>,
    pub keys: Vec<RowKey>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Builds a matrix directly from rows; used by learners' tests and probes.
    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>], targets: Vec<f64>) -> Self {
        let data = rows.iter().flatten().copied().collect();
        let keys = (0..targets.len()).map(|i| RowKey { series: 0, index: i }).collect();
        FeatureMatrix {
            columns,
            data,
            targets,
            keys,
        }
    }
}

/// Resolved feature layout for one panel: column names plus per-series static blocks.
#[derive(Debug, Clone)]
pub struct FeatureBuilder<'a> {
    panel: &'a SeriesPanel,
    config: FeatureConfig,
    columns: Vec<String>,
    statics: Vec<Vec<f64>>,
}

impl<'a> FeatureBuilder<'a> {
    pub fn new(panel: &'a SeriesPanel, config: &FeatureConfig) -> Result<Self> {
        config.validate()?;
        for name in &config.exogenous {
            if !panel.exogenous_columns().contains(name) {
                return Err(HarnessError::config(
                    "features.exogenous",
                    format!("unknown exogenous column '{name}'"),
                ));
            }
        }
        let mut columns: Vec<String> = config.lags.iter().map(|k| format!("lag_{k}")).collect();
        columns.extend(config.rolling_windows.iter().map(|w| format!("rolling_mean_{w}")));
        if config.expanding_mean {
            columns.push("expanding_mean".into());
        }
        columns.extend(config.calendar.iter().map(|c| c.name().to_string()));

        let mut statics = vec![Vec::new(); panel.len()];
        for col in panel.static_columns() {
            let levels = panel.static_levels(col);
            match config.static_encoding {
                StaticEncoding::Ordinal => columns.push(format!("static_{col}")),
                StaticEncoding::OneHot => columns.extend(levels.iter().map(|l| format!("static_{col}={l}"))),
            }
            for (i, s) in panel.series().iter().enumerate() {
                let code = s.statics.get(col).and_then(|v| levels.binary_search(v).ok());
                match config.static_encoding {
                    StaticEncoding::Ordinal => statics[i].push(code.map_or(f64::NAN, |c| c as f64)),
                    StaticEncoding::OneHot => {
                        statics[i].extend((0..levels.len()).map(|l| f64::from(u8::from(Some(l) == code))))
                    }
                }
            }
        }
        columns.extend(config.exogenous.iter().map(|c| format!("exog_{c}")));
        Ok(FeatureBuilder {
            panel,
            config: config.clone(),
            columns,
            statics,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn panel(&self) -> &'a SeriesPanel {
        self.panel
    }

    /// Appends the row targeting absolute index `abs` of `series`.
    ///
    /// `value(j)` returns the j-th observation of the slice history (j counted
    /// from the slice start); `local` is the target's position in that history
    /// and `sum_before` the sum of `value(0..local)`.
    fn fill_row(
        &self,
        series: usize,
        abs: usize,
        local: usize,
        value: impl Fn(usize) -> f64,
        sum_before: f64,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let cfg = &self.config;
        for &k in &cfg.lags {
            out.push(value(local - k));
        }
        for &w in &cfg.rolling_windows {
            let s: f64 = (local - w..local).map(&value).sum();
            out.push(s / w as f64);
        }
        if cfg.expanding_mean {
            out.push(sum_before / local as f64);
        }
        if !cfg.calendar.is_empty() {
            let date = self.panel.timestamp(series, abs);
            for c in &cfg.calendar {
                out.push(match c {
                    CalendarFeature::Year => f64::from(date.year()),
                    CalendarFeature::Month => f64::from(date.month()),
                    CalendarFeature::Week => f64::from(date.iso_week().week()),
                    CalendarFeature::DayOfWeek => f64::from(date.weekday().num_days_from_monday()),
                });
            }
        }
        out.extend_from_slice(&self.statics[series]);
        let s = &self.panel.series()[series];
        for name in &cfg.exogenous {
            let col = &s.exogenous[name];
            let v = *col.get(abs).ok_or_else(|| HarnessError::OutOfRange {
                series: s.id.clone(),
                index: abs,
                len: col.len(),
            })?;
            out.push(v);
        }
        Ok(())
    }

    /// One row per (series, t) past the warm-up window of each slice.
    pub fn build(&self, slice: &PanelSlice<'_>) -> Result<FeatureMatrix> {
        let warm = self.config.warm_up();
        let mut data = Vec::new();
        let mut targets = Vec::new();
        let mut keys = Vec::new();
        for i in 0..slice.series_count() {
            let values = slice.values(i);
            let start = slice.range(i).start;
            if values.len() <= warm {
                return Err(HarnessError::InsufficientHistory {
                    series: self.panel.series()[i].id.clone(),
                    needed: warm + 1,
                    have: values.len(),
                });
            }
            let mut sum: f64 = values[..warm].iter().sum();
            for t in warm..values.len() {
                self.fill_row(i, start + t, t, |j| values[j], sum, &mut data)?;
                targets.push(values[t]);
                keys.push(RowKey {
                    series: i,
                    index: start + t,
                });
                sum += values[t];
            }
        }
        Ok(FeatureMatrix {
            columns: self.columns.clone(),
            data,
            targets,
            keys,
        })
    }

    /// Feature row for forecast step `step` (1-based) past the end of the slice.
    ///
    /// `prior` holds the predictions for steps `1..step`; any window reaching
    /// past the slice end reads from it.
    pub fn horizon_row(&self, slice: &PanelSlice<'_>, series: usize, step: usize, prior: &[f64]) -> Result<Vec<f64>> {
        let actuals = slice.values(series);
        let sum: f64 = actuals.iter().sum();
        let mut out = Vec::with_capacity(self.columns.len());
        self.horizon_row_into(series, slice.range(series).start, actuals, sum, step, prior, &mut out)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn horizon_row_into(
        &self,
        series: usize,
        start: usize,
        actuals: &[f64],
        actual_sum: f64,
        step: usize,
        prior: &[f64],
        out: &mut Vec<f64>,
    ) -> Result<()> {
        assert!(step >= 1, "forecast steps are 1-based");
        let n = actuals.len();
        let local = n + step - 1;
        let warm = self.config.warm_up();
        if n < warm.max(1) {
            return Err(HarnessError::InsufficientHistory {
                series: self.panel.series()[series].id.clone(),
                needed: warm.max(1),
                have: n,
            });
        }
        // Closest history position any window reads, as an offset back from the target.
        let nearest = if self.config.expanding_mean || !self.config.rolling_windows.is_empty() {
            1
        } else {
            self.config.lags.iter().copied().min().unwrap_or(usize::MAX)
        };
        if let Some(latest) = local.checked_sub(nearest) {
            if latest >= n && prior.len() < latest - n + 1 {
                return Err(HarnessError::MissingPrediction { step, lag: nearest });
            }
        }
        let pred_sum: f64 = if self.config.expanding_mean {
            prior[..step - 1].iter().sum()
        } else {
            0.0
        };
        let value = |j: usize| if j < n { actuals[j] } else { prior[j - n] };
        self.fill_row(series, start + local, local, value, actual_sum + pred_sum, out)
    }
}

/// Convenience wrapper building the layout and the matrix in one call.
pub fn build_features(slice: &PanelSlice<'_>, config: &FeatureConfig) -> Result<FeatureMatrix> {
    FeatureBuilder::new(slice.panel(), config)?.build(slice)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{slice, Series, SliceLength};
    use chrono::NaiveDate;
    use std::collections::BTreeMap;

    fn panel(values: &[f64], start: NaiveDate) -> SeriesPanel {
        SeriesPanel::from_series(
            Frequency::Daily,
            vec![Series {
                id: "a".into(),
                start,
                values: values.to_vec(),
                exogenous: BTreeMap::new(),
                statics: BTreeMap::new(),
            }],
        )
        .unwrap()
    }

    fn jan1() -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 1, 1).unwrap()
    }

    #[test]
    fn lag_one_rows() {
        let p = panel(&[1.0, 2.0, 3.0, 4.0], jan1());
        let s = PanelSlice::expanding(&p, 0).unwrap();
        let m = build_features(&s, &FeatureConfig::lags_only(&[1])).unwrap();
        assert_eq!(m.targets, vec![2.0, 3.0, 4.0]);
        assert_eq!(m.data, vec![1.0, 2.0, 3.0]);
        assert_eq!(m.keys[0], RowKey { series: 0, index: 1 });
    }

    #[test]
    fn rolling_mean_excludes_current_target() {
        let p = panel(&[2.0, 4.0, 6.0, 8.0], jan1());
        let s = PanelSlice::expanding(&p, 0).unwrap();
        let mut cfg = FeatureConfig::lags_only(&[]);
        cfg.rolling_windows = vec![2];
        cfg.expanding_mean = true;
        let m = build_features(&s, &cfg).unwrap();
        // rows target t = 3, 4 (1-based)
        assert_eq!(m.targets, vec![6.0, 8.0]);
        assert_eq!(m.row(1), &[5.0, 4.0]);
        assert_eq!(m.row(0), &[3.0, 3.0]);
    }

    #[test]
    fn monday_is_day_zero() {
        let monday = NaiveDate::from_ymd_opt(2016, 3, 7).unwrap();
        let p = panel(&[1.0, 1.0, 1.0], monday - chrono::Duration::days(1));
        let s = PanelSlice::expanding(&p, 0).unwrap();
        let mut cfg = FeatureConfig::lags_only(&[1]);
        cfg.calendar = vec![
            CalendarFeature::DayOfWeek,
            CalendarFeature::Month,
            CalendarFeature::Week,
            CalendarFeature::Year,
        ];
        let m = build_features(&s, &cfg).unwrap();
        assert_eq!(m.columns, ["lag_1", "day_of_week", "month", "week", "year"]);
        assert_eq!(m.row(0), &[1.0, 0.0, 3.0, 10.0, 2016.0]);
        assert_eq!(m.row(1)[1], 1.0);
    }

    #[test]
    fn too_short_slice_names_series() {
        let p = panel(&[1.0, 2.0], jan1());
        let s = PanelSlice::expanding(&p, 0).unwrap();
        let err = build_features(&s, &FeatureConfig::lags_only(&[2])).unwrap_err();
        assert!(matches!(err, HarnessError::InsufficientHistory { ref series, .. } if series == "a"));
    }

    #[test]
    fn step_one_row_matches_build_row() {
        let values: Vec<f64> = (0..30).map(|t| (t as f64 * 0.7).sin() + t as f64).collect();
        let p = panel(&values, jan1());
        let cfg = FeatureConfig::default_for(Frequency::Daily);
        let builder = FeatureBuilder::new(&p, &cfg).unwrap();
        let full = builder.build(&PanelSlice::expanding(&p, 0).unwrap()).unwrap();
        let train = PanelSlice::expanding(&p, 1).unwrap();
        let row = builder.horizon_row(&train, 0, 1, &[]).unwrap();
        assert_eq!(row.as_slice(), full.row(full.n_rows() - 1));
    }

    #[test]
    fn recursive_lag_uses_prior_prediction() {
        let p = panel(&[1.0, 2.0, 3.0], jan1());
        let builder = FeatureBuilder::new(&p, &FeatureConfig::lags_only(&[1])).unwrap();
        let s = PanelSlice::expanding(&p, 0).unwrap();
        assert_eq!(builder.horizon_row(&s, 0, 2, &[42.0]).unwrap(), vec![42.0]);
        assert!(matches!(
            builder.horizon_row(&s, 0, 2, &[]),
            Err(HarnessError::MissingPrediction { step: 2, lag: 1 })
        ));
    }

    #[test]
    fn seasonal_lag_needs_no_recursion_within_horizon() {
        let values: Vec<f64> = (0..20).map(f64::from).collect();
        let p = panel(&values, jan1());
        let builder = FeatureBuilder::new(&p, &FeatureConfig::lags_only(&[7])).unwrap();
        let s = PanelSlice::expanding(&p, 0).unwrap();
        for step in 1..=3 {
            // target index 19 + step reads index 12 + step, an actual
            let row = builder.horizon_row(&s, 0, step, &[]).unwrap();
            assert_eq!(row, vec![(12 + step) as f64]);
        }
    }

    #[test]
    fn statics_ordinal_and_one_hot() {
        let mk = |id: &str, store: &str| Series {
            id: id.into(),
            start: jan1(),
            values: vec![1.0, 2.0, 3.0],
            exogenous: BTreeMap::new(),
            statics: BTreeMap::from([("store".to_string(), store.to_string())]),
        };
        let p = SeriesPanel::from_series(Frequency::Daily, vec![mk("a", "TX"), mk("b", "CA")]).unwrap();
        let s = slice(&p, &[3, 3], SliceLength::AllHistory).unwrap();
        let m = build_features(&s, &FeatureConfig::lags_only(&[1])).unwrap();
        assert_eq!(m.columns, ["lag_1", "static_store"]);
        assert_eq!(m.row(0), &[1.0, 1.0]);
        assert_eq!(m.row(2), &[1.0, 0.0]);

        let mut cfg = FeatureConfig::lags_only(&[1]);
        cfg.static_encoding = StaticEncoding::OneHot;
        let m = build_features(&s, &cfg).unwrap();
        assert_eq!(m.columns, ["lag_1", "static_store=CA", "static_store=TX"]);
        assert_eq!(m.row(0), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn warm_up_invariant_checked() {
        let cfg = FeatureConfig::default_for(Frequency::Daily);
        assert_eq!(cfg.warm_up(), 14);
        assert!(cfg.validate_for_length(22).is_ok());
        assert!(cfg.validate_for_length(21).is_err());
        assert!(FeatureConfig::lags_only(&[0]).validate().is_err());
    }
}
