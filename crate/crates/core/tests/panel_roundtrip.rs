use std::collections::BTreeMap;

use chrono::NaiveDate;
use proptest::prelude::*;
use retrain_core::panel::{
    filter_min_length, load_panel, slice, Frequency, PanelSlice, Schema, Series, SeriesPanel, SliceLength,
};
use retrain_core::synthetic::{generate, SyntheticSpec};

fn to_csv(panel: &SeriesPanel, schema: &Schema) -> String {
    let mut buf = Vec::new();
    panel.write_csv(&mut buf, schema).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn write_then_load_is_identity() {
    let panel = generate(&SyntheticSpec {
        series: 5,
        length: 40,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let schema = Schema::default();
    let text = to_csv(&panel, &schema);
    let mut again = load_panel(text.as_bytes(), &schema, Frequency::Daily).unwrap();

    let mut statics = Vec::new();
    panel.write_statics_csv(&mut statics, &schema.id).unwrap();
    again.attach_statics(statics.as_slice(), &schema.id).unwrap();
    assert_eq!(again, panel);
    assert_eq!(to_csv(&again, &schema), text);
}

#[test]
fn custom_schema_and_exogenous_round_trip() {
    let schema = Schema {
        id: "sku".into(),
        timestamp: "week".into(),
        value: "units".into(),
    };
    let start = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
    let series = (0..3)
        .map(|i| Series {
            id: format!("s{i}"),
            start,
            values: (0..10).map(|t| (t * (i + 1)) as f64).collect(),
            exogenous: BTreeMap::from([("promo".to_string(), (0..10).map(|t| f64::from(t % 2)).collect())]),
            statics: BTreeMap::new(),
        })
        .collect();
    let panel = SeriesPanel::from_series(Frequency::Weekly, series).unwrap();
    let text = to_csv(&panel, &schema);
    assert!(text.starts_with("sku,week,units\n"));
    let mut again = load_panel(text.as_bytes(), &schema, Frequency::Weekly).unwrap();
    let mut exog = Vec::new();
    panel.write_exogenous_csv(&mut exog, &schema).unwrap();
    again.attach_exogenous(exog.as_slice(), &schema).unwrap();
    assert_eq!(again, panel);
}

#[test]
fn expanding_origins_add_one_observation() {
    let panel = generate(&SyntheticSpec {
        series: 2,
        length: 10,
        ..SyntheticSpec::default()
    })
    .unwrap();
    for holdout in 1..10 {
        let a = PanelSlice::expanding(&panel, holdout).unwrap();
        let b = PanelSlice::expanding(&panel, holdout - 1).unwrap();
        for i in 0..2 {
            assert_eq!(b.range(i).len(), a.range(i).len() + 1);
            assert_eq!(&b.values(i)[..a.range(i).len()], a.values(i));
        }
    }
    let held = slice(&panel, &[7, 7], SliceLength::AllHistory).unwrap();
    assert_eq!(held.min_len(), 7);
}

proptest! {
    #[test]
    fn length_filter_is_idempotent(lengths in prop::collection::vec(1usize..60, 1..8), min_obs in 0usize..40) {
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
        let panel = SeriesPanel::from_series(Frequency::Daily, series).unwrap();
        match filter_min_length(&panel, min_obs) {
            Ok((once, dropped)) => {
                prop_assert_eq!(dropped, lengths.iter().filter(|&&n| n <= min_obs).count());
                let (twice, none) = filter_min_length(&once, min_obs).unwrap();
                prop_assert_eq!(none, 0);
                prop_assert_eq!(twice, once);
            }
            Err(_) => prop_assert!(lengths.iter().all(|&n| n <= min_obs)),
        }
    }
}
