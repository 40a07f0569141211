mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use swellcast_core::eval::{baseline_weather_window, block_folds, kfold_cv_tmax, metrics, BaselineConfig};
use swellcast_core::features::window_predictor_sq;
use swellcast_core::model::{Split, TrainConfig};

/// Neumaier-compensated sum.
fn ksum(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in v {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn pair(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-10.0f64..10.0, n..=n),
        prop::collection::vec(-10.0f64..10.0, n..=n),
    )
}

proptest! {
    #[test]
    fn rmse_splits_into_bias_and_variance((obs, pred) in (2usize..200).prop_flat_map(pair)) {
        let r = metrics(&obs, &pred).unwrap();
        let n = obs.len() as f64;
        let e: Vec<f64> = obs.iter().zip(&pred).map(|(o, p)| p - o).collect();
        let var = ksum(e.iter().map(|x| (x - r.bias).powi(2))) / n;
        let lhs = r.rmse * r.rmse;
        prop_assert!((lhs - (r.bias * r.bias + var)).abs() <= 1e-6 * lhs.max(1e-12));
        prop_assert!(r.rmse + 1e-12 >= r.bias.abs());
        prop_assert!((-1.0..=1.0).contains(&r.r));
    }

    #[test]
    fn correlation_ignores_positive_affine_maps(
        (obs, pred) in (3usize..100).prop_flat_map(pair),
        a in 0.01f64..100.0,
        b in -50.0f64..50.0,
    ) {
        let r1 = metrics(&obs, &pred).unwrap().r;
        let moved: Vec<f64> = pred.iter().map(|p| a * p + b).collect();
        let r2 = metrics(&obs, &moved).unwrap().r;
        prop_assert!((r1 - r2).abs() < 1e-9);
    }

    #[test]
    fn folds_partition_the_range(n in 2usize..5000, k in 2usize..12) {
        prop_assume!(n >= k);
        let folds = block_folds(n, k).unwrap();
        prop_assert_eq!(folds.len(), k);
        prop_assert_eq!(folds[0].start, 0);
        prop_assert_eq!(folds[k - 1].end, n);
        for w in folds.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        let (lo, hi) = (folds.iter().map(|f| f.len()).min().unwrap(), folds.iter().map(|f| f.len()).max().unwrap());
        prop_assert!(hi - lo <= 1);
    }
}

#[test]
fn metrics_match_compensated_formulas() {
    let mut rng = common::rng(21);
    for _ in 0..20 {
        let n = rng.random_range(2..3000);
        let obs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..8.0)).collect();
        let pred: Vec<f64> = obs.iter().map(|o| o + rng.random_range(-1.0..1.5)).collect();
        let r = metrics(&obs, &pred).unwrap();
        let nf = n as f64;
        let bias = ksum(obs.iter().zip(&pred).map(|(o, p)| p - o)) / nf;
        let rmse = (ksum(obs.iter().zip(&pred).map(|(o, p)| (p - o) * (p - o))) / nf).sqrt();
        let (mo, mp) = (ksum(obs.iter().copied()) / nf, ksum(pred.iter().copied()) / nf);
        let cov = ksum(obs.iter().zip(&pred).map(|(o, p)| (o - mo) * (p - mp)));
        let so = ksum(obs.iter().map(|o| (o - mo).powi(2)));
        let sp = ksum(pred.iter().map(|p| (p - mp).powi(2)));
        let corr = cov / (so * sp).sqrt();
        assert!((r.bias - bias).abs() < 1e-12);
        assert!((r.rmse - rmse).abs() < 1e-12 * rmse.max(1.0));
        assert!((r.r - corr).abs() < 1e-12);
        assert_eq!(r.n, n);
    }
}

#[test]
fn cv_with_two_folds_reports_two_values_per_candidate() {
    let (_, ds) = common::dataset(&common::small_synth(8, 240));
    let cfg = TrainConfig { epochs: 2, max_steps: 3, batch_size: 32, arch: common::small_arch(), ..TrainConfig::default() };
    let curve = kfold_cv_tmax(&ds, &[3, 1], 2, &cfg, 1).unwrap();
    assert_eq!(curve.k, 2);
    assert_eq!(curve.points.iter().map(|p| p.t_max).collect::<Vec<_>>(), vec![1, 3]);
    for p in &curve.points {
        assert_eq!(p.folds.len(), 2);
        assert!(p.min <= p.mean && p.mean <= p.max);
    }
    assert_eq!(curve, kfold_cv_tmax(&ds, &[1, 3], 2, &cfg, 2).unwrap());
    assert!(kfold_cv_tmax(&ds, &[200], 2, &cfg, 1).is_err());
}

#[test]
fn cv_on_constant_hs_is_flat_near_zero() {
    let (_, mut ds) = common::dataset(&common::small_synth(9, 240));
    ds.hs.iter_mut().for_each(|h| *h = 2.0);
    let cfg = TrainConfig { epochs: 40, lr: 3e-3, batch_size: 32, arch: common::small_arch(), ..TrainConfig::default() };
    let curve = kfold_cv_tmax(&ds, &[1, 2], 2, &cfg, 1).unwrap();
    for p in &curve.points {
        assert!(p.max < 0.05, "{p:?}");
    }
    assert!((curve.points[0].mean - curve.points[1].mean).abs() < 0.05);
}

#[test]
fn baseline_recovers_a_realisable_target() {
    let (_, mut ds) = common::dataset(&common::small_synth(10, 1200));
    let p = ds.features.n_points();
    let col: Vec<f64> = (0..ds.len()).map(|t| ds.features.global[t * p + 5] as f64).collect();
    let w = window_predictor_sq(&col, 3, 1);
    for t in 0..ds.len() {
        let k = t.saturating_sub(w.start).min(w.values.len() - 1);
        ds.hs[t] = (0.01 * w.values[k]) as f32;
    }
    let res = baseline_weather_window(&ds, &Split::holdout(ds.len(), 0.25), &BaselineConfig::default()).unwrap();
    assert!(res.report.r > 0.99, "{:?}", res.report);
    let sd = (col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64).sqrt() * 0.01;
    assert!(res.report.rmse < 0.05 * sd.max(1e-3), "{:?}", res.report);
    assert_eq!(res.params[5].map(|t| (t.lag, t.alpha)), Some((3, 1)));
}

#[test]
fn baseline_finds_nothing_in_noise() {
    let (_, mut ds) = common::dataset(&common::small_synth(11, 1500));
    let mut rng = common::rng(3);
    let normal = Normal::new(1.0, 0.3).unwrap();
    ds.hs.iter_mut().for_each(|h| *h = normal.sample(&mut rng) as f32);
    let res = baseline_weather_window(&ds, &Split::holdout(ds.len(), 0.3), &BaselineConfig::default()).unwrap();
    assert!(res.report.r.abs() < 0.15, "{:?}", res.report);
}
