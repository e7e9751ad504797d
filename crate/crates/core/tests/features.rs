use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use eapred::data::{
    generate_synthetic, split, EarningsEvent, FirmDataset, FirmId, FundamentalRecord, PriceBar, SplitFractions,
    SyntheticSpec,
};
use eapred::exec::Execution;
use eapred::features::{
    build_window, fit_impute, fit_scaler, forward_fill, mean_impute, prepare, read_windows, sma, write_windows,
    FeatureError, FeatureMask, ImputeStats, PrepareConfig, ScalerState, ABLATED_DIM, FEATURE_NAMES, FULL_DIM,
};
use eapred::numerics::{RngStream, Tensor};
use eapred::sentiment::{LexiconProvider, SentimentVector};
use proptest::prelude::*;

fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

#[test]
fn forward_fill_examples() {
    // Fri, Sat, Sun, Mon
    assert_eq!(forward_fill(&[Some(10.0), None, None, Some(11.0)]).unwrap(), vec![10.0, 10.0, 10.0, 11.0]);
    assert_eq!(forward_fill(&[Some(1.0), Some(2.0)]).unwrap(), vec![1.0, 2.0]);
    let mut gap = vec![Some(4.0)];
    gap.extend([None; 9]);
    gap.push(Some(5.0));
    let filled = forward_fill(&gap).unwrap();
    assert!(filled[1..10].iter().all(|&v| v == 4.0));
    assert!(matches!(forward_fill(&[None, Some(1.0)]), Err(FeatureError::LeadingGap { index: 0 })));
}

proptest! {
    #[test]
    fn forward_fill_matches_scan_and_is_idempotent(xs in prop::collection::vec(prop::option::of(-1e6f64..1e6), 1..60)) {
        let mut v = xs.clone();
        v[0] = Some(v[0].unwrap_or(0.5));
        let once = forward_fill(&v).unwrap();
        for i in 0..v.len() {
            // scan oracle: nearest observed value at or before i
            let expected = (0..=i).rev().find_map(|j| v[j]).unwrap();
            prop_assert_eq!(once[i], expected);
        }
        let twice = forward_fill(&once.iter().map(|x| Some(*x)).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn sma_matches_partial_window_oracle(xs in prop::collection::vec(1.0f64..500.0, 1..700), k in 1usize..10) {
        let got = sma(&xs, k);
        for t in 0..xs.len() {
            let lo = (t + 1).saturating_sub(k);
            let oracle = xs[lo..=t].iter().sum::<f64>() / (t + 1 - lo) as f64;
            prop_assert!((got[t] - oracle).abs() <= 1e-9 * oracle.abs());
        }
    }
}

#[test]
fn sma_examples() {
    assert_eq!(sma(&[5.0; 8], 6), vec![5.0; 8]);
    assert_eq!(sma(&[1.0, 2.0, 3.0], 3), vec![1.0, 1.5, 2.0]);
    assert_eq!(*sma(&[1.0, 2.0, 3.0, 4.0], 3).last().unwrap(), 3.0);
}

#[test]
fn mean_impute_examples() {
    let stats = ImputeStats { means: vec![2.0] };
    let col = vec![vec![Some(1.0)], vec![None], vec![Some(3.0)]];
    assert_eq!(mean_impute(&col, &stats).unwrap(), vec![vec![1.0], vec![2.0], vec![3.0]]);
    let full = vec![vec![Some(1.0)], vec![Some(5.0)]];
    assert_eq!(mean_impute(&full, &stats).unwrap(), vec![vec![1.0], vec![5.0]]);
}

#[test]
fn mean_impute_random_missingness_matches_oracle() {
    let mut rng = RngStream::new(4);
    let rows: Vec<Vec<Option<f64>>> = (0..400)
        .map(|_| (0..15).map(|_| (!rng.bernoulli(0.2)).then(|| rng.normal() * 3.0 + 1.0)).collect())
        .collect();
    let stats = fit_impute(rows.iter().map(|r| r.as_slice()), 15).unwrap();
    let dense = mean_impute(&rows, &stats).unwrap();
    for j in 0..15 {
        let obs: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
        let oracle = obs.iter().sum::<f64>() / obs.len() as f64;
        for (r, out) in rows.iter().zip(&dense) {
            match r[j] {
                Some(v) => assert_eq!(out[j], v),
                None => assert!((out[j] - oracle).abs() < 1e-12),
            }
        }
    }
}

#[test]
fn all_missing_metric_is_a_configuration_error() {
    let rows = [vec![Some(1.0), None, None], vec![Some(2.0), None, Some(1.0)]];
    match fit_impute(rows.iter().map(|r| r.as_slice()), 3) {
        Err(FeatureError::AllMissing { metrics }) => assert_eq!(metrics, vec!["roe".to_string()]),
        r => panic!("unexpected {r:?}"),
    }
}

fn col(values: &[f64]) -> Tensor {
    Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap()
}

#[test]
fn scaler_examples() {
    let (s, warnings) = fit_scaler([&col(&[2.0, 4.0])]).unwrap();
    assert!(warnings.is_empty());
    assert_eq!((s.mean[0], s.std[0]), (3.0, 1.0));
    assert_eq!(s.apply(&col(&[2.0, 4.0])).unwrap().data(), &[-1.0, 1.0]);

    let std_col = col(&[-1.0, 1.0, -1.0, 1.0]);
    let (s, _) = fit_scaler([&std_col]).unwrap();
    let out = s.apply(&std_col).unwrap();
    for (a, b) in out.data().iter().zip(std_col.data()) {
        assert!((a - b).abs() < 1e-9);
    }

    let (s, warnings) = fit_scaler([&col(&[7.0, 7.0, 7.0])]).unwrap();
    assert_eq!(s.std[0], 1e-8);
    assert_eq!(warnings.len(), 1);
    assert_eq!(s.apply(&col(&[7.0, 7.0])).unwrap().data(), &[0.0, 0.0]);

    assert!(matches!(fit_scaler([&col(&[1.0])]), Err(FeatureError::TooFewRows(1))));
}

proptest! {
    #[test]
    fn scaled_training_columns_are_standard(
        rows in 2usize..40,
        seed in any::<u64>(),
        scale in 1e-3f64..1e6,
        shift in -1e6f64..1e6,
    ) {
        let mut rng = RngStream::new(seed);
        let data: Vec<f64> = (0..rows * 3).map(|_| shift + scale * rng.normal()).collect();
        let m = Tensor::new(vec![rows, 3], data).unwrap();
        let (s, _) = fit_scaler([&m]).unwrap();
        let z = s.apply(&m).unwrap();
        for j in 0..3 {
            let c: Vec<f64> = z.data().chunks(3).map(|r| r[j]).collect();
            let mean = c.iter().sum::<f64>() / rows as f64;
            let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
            prop_assert!(mean.abs() < 1e-9, "mean {}", mean);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-6, "std {}", var.sqrt());
        }
    }
}

/// Weekday bars from 2023-01-02 with close = calendar-day offset, one
/// fundamentals record, no news.
fn fixture() -> (FirmDataset, EarningsEvent) {
    let start = d("2023-01-02");
    let mut firm = FirmDataset::new(FirmId::new("FIX"));
    for k in 0..60u64 {
        let date = start + Days::new(k);
        if !eapred::data::calendar::is_weekend(date) {
            firm.bars.push(PriceBar {
                date,
                adjusted_close: 100.0 + k as f64,
            });
        }
    }
    let mut rec = FundamentalRecord::empty(start);
    rec.values = std::array::from_fn(|j| (j != 3).then_some(j as f64));
    firm.fundamentals.push(rec);
    // Wednesday 2023-02-08, pre-close: 37 days after the first bar
    let event = EarningsEvent {
        announcement_date: d("2023-02-08"),
        after_market_close: false,
    };
    firm.events.push(event);
    (firm, event)
}

fn identity_scaler() -> ScalerState {
    ScalerState {
        mean: vec![0.0; FULL_DIM],
        std: vec![1.0; FULL_DIM],
    }
}

#[test]
fn window_rows_run_from_ea_minus_30_to_ea_minus_1() {
    let (firm, event) = fixture();
    let impute = ImputeStats { means: vec![-5.0; 15] };
    let w = build_window(&firm, &event, &BTreeMap::new(), &impute, &identity_scaler(), FeatureMask::WithSentiment, &PrepareConfig::default()).unwrap();
    assert_eq!(w.matrix.shape(), &[30, 21]);
    assert_eq!(w.ea_date, d("2023-02-08"));
    let close = |row: usize| w.matrix.get(row, 15);
    // EA-30 = 2023-01-09 (Monday, offset 7); EA-1 = 2023-02-07 (Tuesday, offset 36)
    assert_eq!(close(0), 107.0);
    assert_eq!(close(29), 136.0);
    // 2023-01-14 is a Saturday: carries Friday's close
    assert_eq!(close(5), 111.0);
    assert_eq!(close(6), 111.0);
    // missing metric takes the imputation mean; others come from the record
    assert_eq!(w.matrix.get(0, 3), -5.0);
    assert_eq!(w.matrix.get(12, 7), 7.0);
    // no news: every sentiment triplet is the fill vector
    for r in 0..30 {
        assert_eq!(&w.matrix.row(r)[18..], &[0.0, 0.0, 1.0]);
    }
    // sma_3 on the Monday 2023-01-09: trading-day closes 103, 104, 107
    assert!((w.matrix.get(0, 16) - (103.0 + 104.0 + 107.0) / 3.0).abs() < 1e-12);

    let ablated = build_window(&firm, &event, &BTreeMap::new(), &impute, &identity_scaler(), FeatureMask::WithoutSentiment, &PrepareConfig::default()).unwrap();
    assert_eq!(ablated.matrix.shape(), &[30, ABLATED_DIM]);
    assert_eq!(ablated.feature_names(), &FEATURE_NAMES[..18]);
    assert!(!ablated.feature_names().contains(&"p_positive"));
}

#[test]
fn window_without_enough_history_is_refused() {
    let (firm, _) = fixture();
    let early = EarningsEvent {
        announcement_date: d("2023-01-25"),
        after_market_close: false,
    };
    let impute = ImputeStats { means: vec![0.0; 15] };
    assert!(build_window(&firm, &early, &BTreeMap::new(), &impute, &identity_scaler(), FeatureMask::WithSentiment, &PrepareConfig::default()).is_err());
}

fn synthetic() -> eapred::data::Dataset {
    generate_synthetic(
        &SyntheticSpec {
            firms: 40,
            months: 10,
            seed: 13,
            ..SyntheticSpec::default()
        },
        Execution::Parallel,
    )
    .unwrap()
}

#[test]
fn prepared_splits_are_finite_and_standardized_on_train() {
    let ds = synthetic();
    let splits = split(&ds, &SplitFractions::default()).unwrap();
    let p = prepare(&ds, &splits, &LexiconProvider::default(), &PrepareConfig::default(), Execution::Parallel).unwrap();
    assert_eq!(p.report.built.iter().sum::<usize>() + p.report.skipped.len(), ds.event_count());
    assert!(p.report.skipped.iter().all(|s| s.reason == "insufficient_history"));
    for s in p.train.iter().chain(&p.val).chain(&p.test) {
        assert!(s.window.matrix.is_finite());
        assert_eq!(s.window.matrix.shape(), &[30, 21]);
    }
    let rows: Vec<&[f64]> = p.train.iter().flat_map(|s| s.window.matrix.data().chunks(FULL_DIM)).collect();
    let n = rows.len() as f64;
    for j in 0..FULL_DIM {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9, "{} mean {mean}", FEATURE_NAMES[j]);
        assert!((var.sqrt() - 1.0).abs() < 1e-6, "{} std {}", FEATURE_NAMES[j], var.sqrt());
    }
    // the held-out splits are not re-centred
    let val_close_mean = p.val.iter().flat_map(|s| s.window.matrix.data().chunks(FULL_DIM)).map(|r| r[15]).sum::<f64>();
    assert!(val_close_mean.abs() > 1e-6);
}

#[test]
fn fit_statistics_depend_only_on_training_events() {
    let ds = synthetic();
    let splits = split(&ds, &SplitFractions::default()).unwrap();
    let a = prepare(&ds, &splits, &LexiconProvider::default(), &PrepareConfig::default(), Execution::Parallel).unwrap();
    let mut fewer = splits.clone();
    fewer.val.truncate(1);
    fewer.test.reverse();
    fewer.test.truncate(2);
    let b = prepare(&ds, &fewer, &LexiconProvider::default(), &PrepareConfig::default(), Execution::Sequential).unwrap();
    assert_eq!(a.scaler, b.scaler);
    assert_eq!(a.impute, b.impute);
    assert_eq!(a.train, b.train);
}

#[test]
fn ablated_and_full_windows_share_eighteen_columns() {
    let ds = synthetic();
    let splits = split(&ds, &SplitFractions::default()).unwrap();
    let p = prepare(&ds, &splits, &LexiconProvider::default(), &PrepareConfig::default(), Execution::Parallel).unwrap();
    for s in p.test.iter() {
        let a = s.window.masked(FeatureMask::WithoutSentiment).unwrap();
        for r in 0..30 {
            assert_eq!(a.matrix.row(r), &s.window.matrix.row(r)[..18]);
        }
    }
}

#[test]
fn newsless_firm_gets_standardized_fill_vector() {
    let mut ds = synthetic();
    let quiet = ds.firms.keys().next().unwrap().clone();
    ds.firms.get_mut(&quiet).unwrap().articles.clear();
    let splits = split(&ds, &SplitFractions::default()).unwrap();
    let p = prepare(&ds, &splits, &LexiconProvider::default(), &PrepareConfig::default(), Execution::Parallel).unwrap();
    let fill = SentimentVector::NEUTRAL.to_array();
    let expected: Vec<f64> = (0..3).map(|k| (fill[k] - p.scaler.mean[18 + k]) / p.scaler.std[18 + k]).collect();
    let mut seen = 0;
    for s in p.train.iter().chain(&p.val).chain(&p.test).filter(|s| s.window.firm_id == quiet) {
        for r in 0..30 {
            assert_eq!(&s.window.matrix.row(r)[18..], expected.as_slice());
        }
        seen += 1;
    }
    assert!(seen > 0);
}

#[test]
fn window_store_round_trip() {
    let ds = synthetic();
    let splits = split(&ds, &SplitFractions::default()).unwrap();
    let p = prepare(&ds, &splits, &LexiconProvider::default(), &PrepareConfig::default(), Execution::Parallel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("test.bin");
    write_windows(&path, "test", &p.test, FeatureMask::WithSentiment, 30, 0.03, &p.impute, &p.scaler).unwrap();
    let (header, back) = read_windows(&path).unwrap();
    assert_eq!(back, p.test);
    assert_eq!(header.scaler, p.scaler);
    assert_eq!(header.split, "test");
    assert_eq!(header.feature_names.len(), 21);

    let ablated = dir.path().join("test_ablated.bin");
    write_windows(&ablated, "test", &p.test, FeatureMask::WithoutSentiment, 30, 0.03, &p.impute, &p.scaler).unwrap();
    let (header, narrow) = read_windows(&ablated).unwrap();
    assert_eq!(header.feature_names.len(), 18);
    assert_eq!(header.mask, FeatureMask::WithoutSentiment);
    for (n, full) in narrow.iter().zip(&p.test) {
        assert_eq!(n.window, full.window.masked(FeatureMask::WithoutSentiment).unwrap());
    }
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.pop();
    std::fs::write(&path, bytes).unwrap();
    assert!(read_windows(&path).is_err());
}
