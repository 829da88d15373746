//! Long-format panel ingestion, validation, length filtering and slicing.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::ops::Range;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Sampling frequency of a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Weekly,
}

impl Frequency {
    /// Periods per seasonal cycle (`f`).
    pub fn season_length(self) -> usize {
        match self {
            Frequency::Daily => 7,
            Frequency::Weekly => 52,
        }
    }

    pub fn spacing(self) -> Duration {
        match self {
            Frequency::Daily => Duration::days(1),
            Frequency::Weekly => Duration::days(7),
        }
    }

    /// Default minimum-length filter threshold.
    pub fn default_min_obs(self) -> usize {
        match self {
            Frequency::Daily => 730,
            Frequency::Weekly => 157,
        }
    }
}

/// Column names of the long-format value table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub id: String,
    pub timestamp: String,
    pub value: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            id: "unique_id".into(),
            timestamp: "ds".into(),
            value: "y".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub id: String,
    pub start: NaiveDate,
    pub values: Vec<f64>,
    /// Exogenous columns aligned with `values`; categorical columns hold ordinal codes.
    pub exogenous: BTreeMap<String, Vec<f64>>,
    pub statics: BTreeMap<String, String>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// An immutable collection of regular-frequency univariate series, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    frequency: Frequency,
    series: Vec<Series>,
    exogenous_columns: Vec<String>,
    /// Levels of categorical exogenous columns, indexed by ordinal code.
    exogenous_levels: BTreeMap<String, Vec<String>>,
    static_columns: Vec<String>,
}

impl SeriesPanel {
    /// Builds a panel from in-memory series, validating id uniqueness.
    pub fn from_series(frequency: Frequency, mut series: Vec<Series>) -> Result<Self> {
        series.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in series.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(HarnessError::DuplicateKey {
                    series: pair[0].id.clone(),
                    timestamp: pair[0].start.to_string(),
                });
            }
        }
        let exogenous_columns = series
            .first()
            .map(|s| s.exogenous.keys().cloned().collect())
            .unwrap_or_default();
        let static_columns = series
            .first()
            .map(|s| s.statics.keys().cloned().collect())
            .unwrap_or_default();
        Ok(SeriesPanel {
            frequency,
            series,
            exogenous_columns,
            exogenous_levels: BTreeMap::new(),
            static_columns,
        })
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn series(&self) -> &[Series] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn exogenous_columns(&self) -> &[String] {
        &self.exogenous_columns
    }

    pub fn static_columns(&self) -> &[String] {
        &self.static_columns
    }

    pub fn min_len(&self) -> usize {
        self.series.iter().map(Series::len).min().unwrap_or(0)
    }

    pub fn timestamp(&self, series: usize, index: usize) -> NaiveDate {
        let s = &self.series[series];
        s.start + self.frequency.spacing() * index as i32
    }

    /// Sorted distinct levels of a static attribute across the panel.
    pub fn static_levels(&self, column: &str) -> Vec<String> {
        let set: BTreeSet<&String> = self.series.iter().filter_map(|s| s.statics.get(column)).collect();
        set.into_iter().cloned().collect()
    }

    /// Attaches per-series static attributes from a CSV keyed by the id column.
    pub fn attach_statics<R: Read>(&mut self, source: R, id_column: &str) -> Result<()> {
        let mut reader = csv::Reader::from_reader(source);
        let headers = reader.headers()?.clone();
        let id_idx = column_index(&headers, id_column)?;
        let columns: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != id_idx)
            .map(|(i, h)| (i, h.to_string()))
            .collect();
        let mut by_id: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for record in reader.records() {
            let record = record?;
            let attrs = columns
                .iter()
                .map(|(i, name)| (name.clone(), record[*i].to_string()))
                .collect();
            by_id.insert(record[id_idx].to_string(), attrs);
        }
        for s in &mut self.series {
            let attrs = by_id
                .remove(&s.id)
                .ok_or_else(|| HarnessError::config("statics", format!("no attributes for series '{}'", s.id)))?;
            s.statics = attrs;
        }
        self.static_columns = columns.into_iter().map(|(_, n)| n).collect();
        Ok(())
    }

    /// Attaches exogenous columns from a CSV keyed by (id, timestamp).
    ///
    /// Columns whose every value parses as a real are numeric; any other column
    /// is categorical and stored as ordinal codes over its sorted levels.
    pub fn attach_exogenous<R: Read>(&mut self, source: R, schema: &Schema) -> Result<()> {
        let mut reader = csv::Reader::from_reader(source);
        let headers = reader.headers()?.clone();
        let id_idx = column_index(&headers, &schema.id)?;
        let ts_idx = column_index(&headers, &schema.timestamp)?;
        let columns: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != id_idx && *i != ts_idx)
            .map(|(i, h)| (i, h.to_string()))
            .collect();

        let mut raw: BTreeMap<(String, NaiveDate), Vec<String>> = BTreeMap::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let date = parse_date(&record[ts_idx], row)?;
            let vals = columns.iter().map(|(i, _)| record[*i].to_string()).collect();
            raw.insert((record[id_idx].to_string(), date), vals);
        }

        let mut levels: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (c, (_, name)) in columns.iter().enumerate() {
            let numeric = raw.values().all(|v| v[c].trim().parse::<f64>().is_ok());
            if !numeric {
                let set: BTreeSet<&String> = raw.values().map(|v| &v[c]).collect();
                levels.insert(name.clone(), set.into_iter().cloned().collect());
            }
        }

        let spacing = self.frequency.spacing();
        for s in &mut self.series {
            let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (c, (_, name)) in columns.iter().enumerate() {
                let mut out = Vec::with_capacity(s.values.len());
                for t in 0..s.values.len() {
                    let date = s.start + spacing * t as i32;
                    let vals = raw.get(&(s.id.clone(), date)).ok_or_else(|| {
                        HarnessError::config(
                            format!("exogenous.{name}"),
                            format!("no value for series '{}' at {date}", s.id),
                        )
                    })?;
                    let v = match levels.get(name) {
                        Some(lv) => lv.binary_search(&vals[c]).unwrap_or(0) as f64,
                        None => vals[c].trim().parse::<f64>().unwrap_or(f64::NAN),
                    };
                    out.push(v);
                }
                cols.insert(name.clone(), out);
            }
            s.exogenous = cols;
        }
        self.exogenous_columns = columns.into_iter().map(|(_, n)| n).collect();
        self.exogenous_columns.sort();
        self.exogenous_levels = levels;
        Ok(())
    }

    /// Writes the value table in long format.
    pub fn write_csv<W: Write>(&self, sink: W, schema: &Schema) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([&schema.id, &schema.timestamp, &schema.value])?;
        for (i, s) in self.series.iter().enumerate() {
            for (t, v) in s.values.iter().enumerate() {
                w.write_record([s.id.clone(), self.timestamp(i, t).to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_exogenous_csv<W: Write>(&self, sink: W, schema: &Schema) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec![schema.id.clone(), schema.timestamp.clone()];
        header.extend(self.exogenous_columns.iter().cloned());
        w.write_record(&header)?;
        for (i, s) in self.series.iter().enumerate() {
            for t in 0..s.len() {
                let mut rec = vec![s.id.clone(), self.timestamp(i, t).to_string()];
                for c in &self.exogenous_columns {
                    let v = s.exogenous[c][t];
                    rec.push(match self.exogenous_levels.get(c) {
                        Some(lv) => lv[v as usize].clone(),
                        None => v.to_string(),
                    });
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_statics_csv<W: Write>(&self, sink: W, id_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec![id_column.to_string()];
        header.extend(self.static_columns.iter().cloned());
        w.write_record(&header)?;
        for s in &self.series {
            let mut rec = vec![s.id.clone()];
            rec.extend(self.static_columns.iter().map(|c| s.statics[c].clone()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| HarnessError::MissingColumn(name.to_string()))
}

fn parse_date(value: &str, row: usize) -> Result<NaiveDate> {
    let trimmed = value.trim();
    // Accept full ISO-8601 datetimes by keeping the date part.
    let date_part = trimmed.get(..10).unwrap_or(trimmed);
    NaiveDate::parse_from_str(date_part, "%Y-%m-%d").map_err(|_| HarnessError::Parse {
        row,
        what: "timestamp",
        value: value.to_string(),
    })
}

/// Reads a long-format `(id, timestamp, value)` table into a validated panel.
///
/// Rows may arrive in any order. Duplicated keys, gaps and non-finite values
/// are rejected; negative values are accepted with a warning.
pub fn load_panel<R: Read>(source: R, schema: &Schema, frequency: Frequency) -> Result<SeriesPanel> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers()?.clone();
    let id_idx = column_index(&headers, &schema.id)?;
    let ts_idx = column_index(&headers, &schema.timestamp)?;
    let val_idx = column_index(&headers, &schema.value)?;

    let mut grouped: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    let mut negatives = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let date = parse_date(&record[ts_idx], row)?;
        let raw = &record[val_idx];
        let value: f64 =
            raw.trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| HarnessError::Parse {
                    row,
                    what: "value",
                    value: raw.to_string(),
                })?;
        if value < 0.0 {
            negatives += 1;
        }
        grouped
            .entry(record[id_idx].to_string())
            .or_default()
            .push((date, value));
    }
    if negatives > 0 {
        log::warn!("{negatives} negative values in panel");
    }

    let spacing = frequency.spacing();
    let mut series = Vec::with_capacity(grouped.len());
    for (id, mut obs) in grouped {
        obs.sort_by_key(|(d, _)| *d);
        for pair in obs.windows(2) {
            let (prev, next) = (pair[0].0, pair[1].0);
            if prev == next {
                return Err(HarnessError::DuplicateKey {
                    series: id,
                    timestamp: prev.to_string(),
                });
            }
            if next - prev != spacing {
                return Err(HarnessError::IrregularSpacing {
                    series: id,
                    previous: prev.to_string(),
                    next: next.to_string(),
                });
            }
        }
        series.push(Series {
            start: obs[0].0,
            values: obs.into_iter().map(|(_, v)| v).collect(),
            id,
            exogenous: BTreeMap::new(),
            statics: BTreeMap::new(),
        });
    }
    SeriesPanel::from_series(frequency, series)
}

/// Keeps series with strictly more than `min_obs` observations.
///
/// Returns the filtered panel and the number of dropped series.
pub fn filter_min_length(panel: &SeriesPanel, min_obs: usize) -> Result<(SeriesPanel, usize)> {
    let kept: Vec<Series> = panel.series.iter().filter(|s| s.len() > min_obs).cloned().collect();
    if kept.is_empty() {
        return Err(HarnessError::EmptyPanel { min_obs });
    }
    let dropped = panel.series.len() - kept.len();
    if dropped > 0 {
        log::info!("length filter dropped {dropped} series (min_obs = {min_obs})");
    }
    Ok((
        SeriesPanel {
            series: kept,
            ..panel.clone_meta()
        },
        dropped,
    ))
}

impl SeriesPanel {
    fn clone_meta(&self) -> SeriesPanel {
        SeriesPanel {
            frequency: self.frequency,
            series: Vec::new(),
            exogenous_columns: self.exogenous_columns.clone(),
            exogenous_levels: self.exogenous_levels.clone(),
            static_columns: self.static_columns.clone(),
        }
    }
}

/// How much history a slice keeps before its end index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceLength {
    AllHistory,
    Last(usize),
}

/// A read-only view selecting one half-open index range per series.
#[derive(Debug, Clone)]
pub struct PanelSlice<'a> {
    panel: &'a SeriesPanel,
    ranges: Vec<Range<usize>>,
}

impl<'a> PanelSlice<'a> {
    pub fn panel(&self) -> &'a SeriesPanel {
        self.panel
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn range(&self, series: usize) -> Range<usize> {
        self.ranges[series].clone()
    }

    pub fn values(&self, series: usize) -> &'a [f64] {
        &self.panel.series[series].values[self.ranges[series].clone()]
    }

    pub fn series_count(&self) -> usize {
        self.ranges.len()
    }

    pub fn min_len(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).min().unwrap_or(0)
    }

    /// Expanding slice ending `holdout` observations before each series' end.
    pub fn expanding(panel: &'a SeriesPanel, holdout: usize) -> Result<Self> {
        let ends = panel
            .series
            .iter()
            .map(|s| {
                s.len().checked_sub(holdout).ok_or_else(|| HarnessError::OutOfRange {
                    series: s.id.clone(),
                    index: holdout,
                    len: s.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        slice(panel, &ends, SliceLength::AllHistory)
    }

    /// Same view with every end moved `back` observations earlier.
    pub fn truncate_back(&self, back: usize) -> Result<Self> {
        let ranges = self
            .ranges
            .iter()
            .zip(&self.panel.series)
            .map(|(r, s)| {
                if r.len() < back {
                    Err(HarnessError::InsufficientHistory {
                        series: s.id.clone(),
                        needed: back,
                        have: r.len(),
                    })
                } else {
                    Ok(r.start..r.end - back)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PanelSlice {
            panel: self.panel,
            ranges,
        })
    }
}

/// Slices every series so that it ends (exclusive) at the given index.
pub fn slice<'a>(panel: &'a SeriesPanel, ends: &[usize], length: SliceLength) -> Result<PanelSlice<'a>> {
    if ends.len() != panel.len() {
        return Err(HarnessError::config(
            "slice.ends",
            format!("{} end indices for {} series", ends.len(), panel.len()),
        ));
    }
    let ranges = panel
        .series
        .iter()
        .zip(ends)
        .map(|(s, &end)| {
            if end > s.len() {
                return Err(HarnessError::OutOfRange {
                    series: s.id.clone(),
                    index: end,
                    len: s.len(),
                });
            }
            let start = match length {
                SliceLength::AllHistory => 0,
                SliceLength::Last(n) => end.saturating_sub(n),
            };
            Ok(start..end)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PanelSlice { panel, ranges })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_rows(rows: &[(&str, &str, &str)]) -> String {
        let mut s = String::from("unique_id,ds,y\n");
        for (id, ds, y) in rows {
            s.push_str(&format!("{id},{ds},{y}\n"));
        }
        s
    }

    fn daily(id: &str, start: NaiveDate, n: usize) -> Vec<(String, String, String)> {
        (0..n)
            .map(|t| {
                (
                    id.to_string(),
                    (start + Duration::days(t as i64)).to_string(),
                    (t as f64).to_string(),
                )
            })
            .collect()
    }

    fn panel_with_lengths(lengths: &[usize]) -> SeriesPanel {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let series = lengths
            .iter()
            .enumerate()
            .map(|(i, &n)| Series {
                id: format!("s{i}"),
                start,
                values: vec![1.0; n],
                exogenous: BTreeMap::new(),
                statics: BTreeMap::new(),
            })
            .collect();
        SeriesPanel::from_series(Frequency::Daily, series).unwrap()
    }

    #[test]
    fn loads_three_regular_series() {
        let start = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        let mut rows = Vec::new();
        for id in ["c", "a", "b"] {
            rows.extend(daily(id, start, 10));
        }
        rows.reverse();
        let text = csv_rows(
            &rows
                .iter()
                .map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str()))
                .collect::<Vec<_>>(),
        );
        let panel = load_panel(text.as_bytes(), &Schema::default(), Frequency::Daily).unwrap();
        assert_eq!(panel.len(), 3);
        assert_eq!(panel.frequency().season_length(), 7);
        let ids: Vec<_> = panel.series().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(panel.series()[0].values[3], 3.0);
    }

    #[test]
    fn gap_names_series() {
        let text = csv_rows(&[
            ("a", "2016-01-01", "1"),
            ("a", "2016-01-02", "1"),
            ("b", "2016-01-01", "1"),
            ("b", "2016-01-03", "1"),
        ]);
        let err = load_panel(text.as_bytes(), &Schema::default(), Frequency::Daily).unwrap_err();
        match err {
            HarnessError::IrregularSpacing { series, .. } => assert_eq!(series, "b"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = csv_rows(&[("a", "2016-01-01", "1"), ("a", "2016-01-01", "2")]);
        let err = load_panel(text.as_bytes(), &Schema::default(), Frequency::Daily).unwrap_err();
        assert!(matches!(err, HarnessError::DuplicateKey { .. }));
    }

    #[test]
    fn unparseable_value_reports_row() {
        let text = csv_rows(&[("a", "2016-01-01", "1"), ("a", "2016-01-02", "abc")]);
        let err = load_panel(text.as_bytes(), &Schema::default(), Frequency::Daily).unwrap_err();
        assert!(matches!(
            err,
            HarnessError::Parse {
                row: 1,
                what: "value",
                ..
            }
        ));
        let text = csv_rows(&[("a", "2016-01-01", "NaN")]);
        assert!(load_panel(text.as_bytes(), &Schema::default(), Frequency::Daily).is_err());
    }

    #[test]
    fn custom_schema_and_weekly_spacing() {
        let text = "item,week,sales\nx,2020-01-06,1\nx,2020-01-13,2\nx,2020-01-20,-1\n";
        let schema = Schema {
            id: "item".into(),
            timestamp: "week".into(),
            value: "sales".into(),
        };
        let panel = load_panel(text.as_bytes(), &schema, Frequency::Weekly).unwrap();
        assert_eq!(panel.series()[0].values, vec![1.0, 2.0, -1.0]);
        assert!(load_panel(text.as_bytes(), &schema, Frequency::Daily).is_err());
    }

    #[test]
    fn event_exogenous_column_is_attached() {
        let text = csv_rows(&[
            ("a", "2016-02-06", "1"),
            ("a", "2016-02-07", "3"),
            ("a", "2016-02-08", "2"),
        ]);
        let mut panel = load_panel(text.as_bytes(), &Schema::default(), Frequency::Daily).unwrap();
        let exog = "unique_id,ds,event,snap\n\
                    a,2016-02-06,none,0\n\
                    a,2016-02-07,SuperBowl,1\n\
                    a,2016-02-08,none,0\n";
        panel.attach_exogenous(exog.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(panel.exogenous_columns(), ["event", "snap"]);
        let s = &panel.series()[0];
        // levels sorted: SuperBowl < none
        assert_eq!(s.exogenous["event"], vec![1.0, 0.0, 1.0]);
        assert_eq!(s.exogenous["snap"], vec![0.0, 1.0, 0.0]);

        let statics = "unique_id,store,dept\na,CA_1,FOODS\n";
        panel.attach_statics(statics.as_bytes(), "unique_id").unwrap();
        assert_eq!(panel.series()[0].statics["store"], "CA_1");
        assert_eq!(panel.static_levels("dept"), vec!["FOODS".to_string()]);
    }

    #[test]
    fn filter_keeps_strictly_longer_series() {
        let panel = panel_with_lengths(&[400, 731, 1941]);
        let (kept, dropped) = filter_min_length(&panel, 730).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(dropped, 1);

        let weekly = panel_with_lengths(&[200, 200]);
        assert_eq!(filter_min_length(&weekly, 157).unwrap().0.len(), 2);

        let (same, dropped) = filter_min_length(&panel, 0).unwrap();
        assert_eq!(same, panel);
        assert_eq!(dropped, 0);

        assert!(matches!(
            filter_min_length(&panel, 5000),
            Err(HarnessError::EmptyPanel { .. })
        ));
    }

    #[test]
    fn slice_arithmetic() {
        let panel = panel_with_lengths(&[10, 12]);
        let full = slice(&panel, &[10, 12], SliceLength::AllHistory).unwrap();
        assert_eq!(full.ranges(), &[0..10, 0..12]);

        let train = PanelSlice::expanding(&panel, 3).unwrap();
        assert_eq!(train.ranges(), &[0..7, 0..9]);

        let last = slice(&panel, &[10, 12], SliceLength::Last(4)).unwrap();
        assert_eq!(last.ranges(), &[6..10, 8..12]);

        assert!(matches!(
            slice(&panel, &[11, 12], SliceLength::AllHistory),
            Err(HarnessError::OutOfRange { .. })
        ));
    }

    #[test]
    fn consecutive_origins_append_one_observation() {
        let panel = panel_with_lengths(&[10]);
        let mut prev: Option<Range<usize>> = None;
        for end in 3..=10 {
            let r = slice(&panel, &[end], SliceLength::AllHistory).unwrap().range(0);
            assert_eq!(r.start, 0);
            if let Some(p) = prev {
                assert_eq!(r.len(), p.len() + 1);
                assert_eq!(r.end, p.end + 1);
            }
            prev = Some(r);
        }
    }
}
