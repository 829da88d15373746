//! Seeded synthetic panels: per-series level, weekly seasonality, optional
//! linear drift and i.i.d. Gaussian noise.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::panel::{Frequency, Series, SeriesPanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub series: usize,
    pub length: usize,
    pub frequency: Frequency,
    /// Seasonal amplitude as a fraction of the level.
    pub seasonal_amplitude: f64,
    pub noise_sd: f64,
    /// Per-step trend as a fraction of the level.
    pub drift: f64,
    pub start: NaiveDate,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            series: 20,
            length: 200,
            frequency: Frequency::Daily,
            seasonal_amplitude: 0.3,
            noise_sd: 1.0,
            drift: 0.0,
            start: NaiveDate::from_ymd_opt(2020, 1, 6).unwrap(),
            seed: 0,
        }
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SeriesPanel> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sd.max(0.0)).expect("finite noise sd");
    let f = spec.frequency.season_length();
    let width = spec.series.to_string().len();
    let series = (0..spec.series)
        .map(|i| {
            let level = rng.random_range(10.0..30.0);
            let phase = rng.random_range(0..f);
            let values = (0..spec.length)
                .map(|t| {
                    let angle = 2.0 * std::f64::consts::PI * ((t + phase) % f) as f64 / f as f64;
                    let season = spec.seasonal_amplitude * level * angle.sin();
                    let trend = spec.drift * level * t as f64;
                    level + season + trend + noise.sample(&mut rng)
                })
                .collect();
            Series {
                id: format!("series_{i:0width$}"),
                start: spec.start,
                values,
                exogenous: BTreeMap::new(),
                statics: BTreeMap::from([("group".to_string(), format!("g{}", i % 3))]),
            }
        })
        .collect();
    SeriesPanel::from_series(spec.frequency, series)
}
