//! Validation metrics, blocked k-fold cross-validation over `t_max`, and the
//! window-regression baseline.

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{estimate_travel_params, Dataset, Standardizer, TravelParams, LOCAL_WIDTH};
use crate::model::{
    predict_from_rows, predict_range, stage1_all_rows, stage2_samples, train_stage1, train_stage2, Split, Stage1Model,
    Stage2Model, TrainConfig,
};

/// Pearson correlation. Fails on mismatched lengths, fewer than two values
/// or a constant series.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DegenerateSeries(format!(
            "need two equal-length series of at least 2 values, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::DegenerateSeries("constant series".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub r: f64,
    pub rmse: f64,
    pub bias: f64,
    pub n: usize,
}

impl EvalReport {
    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    /// Variance of `pred − obs`, so that `rmse² = bias² + error_variance`.
    pub fn error_variance(&self) -> f64 {
        (self.rmse * self.rmse - self.bias * self.bias).max(0.0)
    }
}

/// r, RMSE and bias (mean of `pred − obs`).
pub fn metrics(obs: &[f64], pred: &[f64]) -> Result<EvalReport> {
    if obs.len() != pred.len() || obs.len() < 2 {
        return Err(Error::DegenerateSeries(format!(
            "{} observations for {} predictions",
            obs.len(),
            pred.len()
        )));
    }
    let n = obs.len() as f64;
    let r = pearson(obs, pred).or_else(|e| {
        // a constant prediction against varying observations carries no
        // linear signal
        let obs_const = obs.iter().all(|v| *v == obs[0]);
        if obs_const {
            Err(e)
        } else {
            Ok(0.0)
        }
    })?;
    let bias = obs.iter().zip(pred).map(|(o, p)| p - o).sum::<f64>() / n;
    let mse = obs.iter().zip(pred).map(|(o, p)| (p - o) * (p - o)).sum::<f64>() / n;
    Ok(EvalReport {
        label: String::new(),
        r,
        rmse: mse.sqrt(),
        bias,
        n: obs.len(),
    })
}

/// `k` contiguous blocks partitioning `0..n`; the first `n % k` blocks are
/// one longer.
pub fn block_folds(n: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k < 2 || n < k {
        return Err(Error::InsufficientData(format!("{n} samples into {k} folds")));
    }
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPoint {
    pub t_max: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Held-out RMSE per fold, in fold order.
    pub folds: Vec<f64>,
}

impl CvPoint {
    pub fn from_folds(t_max: usize, folds: Vec<f64>) -> Self {
        let mean = folds.iter().sum::<f64>() / folds.len() as f64;
        let min = folds.iter().copied().fold(f64::INFINITY, f64::min);
        let max = folds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            t_max,
            // guard the ordering against rounding in the mean
            mean: mean.clamp(min, max),
            min,
            max,
            folds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCurve {
    pub k: usize,
    pub points: Vec<CvPoint>,
}

impl CvCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tmax,mean_rmse,min_rmse,max_rmse")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{}", p.t_max, p.mean, p.min, p.max)?;
        }
        Ok(())
    }

    pub fn write_folds_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tmax,fold,rmse")?;
        for p in &self.points {
            for (i, r) in p.folds.iter().enumerate() {
                writeln!(w, "{},{},{}", p.t_max, i, r)?;
            }
        }
        Ok(())
    }

    pub fn point(&self, t_max: usize) -> Option<&CvPoint> {
        self.points.iter().find(|p| p.t_max == t_max)
    }
}

/// Two-stage predictions on the samples of `ranges` usable with `lookback`.
pub struct Predictions {
    pub idx: Vec<usize>,
    pub obs: Vec<f64>,
    pub pred: Vec<f64>,
}

/// Trains both stages on `split.train` and predicts every stage-2 sample
/// of `eval_ranges` whose history covers `lookback ≥ t_max` steps.
pub fn fit_and_predict(
    ds: &Dataset,
    split: &Split,
    eval_ranges: &[Range<usize>],
    lookback: usize,
    cfg: &TrainConfig,
) -> Result<Predictions> {
    let (s1, _, _) = train_stage1(ds, split, cfg)?;
    let (s2, _, _) = train_stage2(&s1, ds, split, cfg)?;
    let idx = stage2_samples(ds, eval_ranges, lookback.max(cfg.t_max));
    if idx.len() < 2 {
        return Err(Error::InsufficientData("fewer than two evaluation samples".into()));
    }
    let rows = stage1_all_rows(&s1, ds)?;
    let pred = predict_from_rows(&s2, ds, &rows, &idx)?;
    Ok(Predictions {
        obs: idx.iter().map(|&t| ds.hs[t] as f64).collect(),
        pred: pred.into_iter().map(f64::from).collect(),
        idx,
    })
}

/// Predictions of trained models on every stage-2 sample of `ranges`.
pub fn predict_samples(s1: &Stage1Model, s2: &Stage2Model, ds: &Dataset, ranges: &[Range<usize>]) -> Result<Predictions> {
    let idx = stage2_samples(ds, ranges, s2.t_max);
    if idx.len() < 2 {
        return Err(Error::InsufficientData("fewer than two evaluation samples".into()));
    }
    let pred = predict_range(s1, s2, ds, &idx)?;
    Ok(Predictions {
        obs: idx.iter().map(|&t| ds.hs[t] as f64).collect(),
        pred: pred.into_iter().map(f64::from).collect(),
        idx,
    })
}

fn rmse(obs: &[f64], pred: &[f64]) -> f64 {
    (obs.iter().zip(pred).map(|(o, p)| (p - o) * (p - o)).sum::<f64>() / obs.len() as f64).sqrt()
}

/// Blocked k-fold CV over `t_max` candidates. Both stages are retrained per
/// fold; every candidate is scored on the same held-out samples (those with
/// a full history of the largest candidate inside the fold). Jobs run on a
/// pool of `jobs` threads; results do not depend on `jobs`.
pub fn kfold_cv_tmax(ds: &Dataset, candidates: &[usize], k: usize, cfg: &TrainConfig, jobs: usize) -> Result<CvCurve> {
    if candidates.is_empty() {
        return Err(Error::config("tmax_candidates", "no candidates"));
    }
    let mut cands = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    let max_t = *cands.last().expect("non-empty");
    let folds = block_folds(ds.len(), k)?;
    if let Some(f) = folds.iter().find(|f| f.len() <= 2 * max_t) {
        return Err(Error::InsufficientData(format!(
            "fold of {} steps is too short for t_max {max_t}",
            f.len()
        )));
    }
    let jobs_list: Vec<(usize, usize)> = cands
        .iter()
        .flat_map(|&c| (0..k).map(move |f| (c, f)))
        .collect();
    let run = |&(c, f): &(usize, usize)| -> Result<f64> {
        let split = Split {
            train: folds
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != f)
                .map(|(_, r)| r.clone())
                .collect(),
            val: vec![folds[f].clone()],
        };
        let fold_cfg = TrainConfig { t_max: c, ..cfg.clone() };
        let p = fit_and_predict(ds, &split, &split.val, max_t, &fold_cfg)?;
        Ok(rmse(&p.obs, &p.pred))
    };
    let results: Vec<Result<f64>> = if jobs <= 1 {
        jobs_list.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::config("jobs", e.to_string()))?;
        pool.install(|| jobs_list.par_iter().map(run).collect())
    };
    let mut points = Vec::with_capacity(cands.len());
    let mut it = results.into_iter();
    for &c in &cands {
        let folds: Vec<f64> = (0..k).map(|_| it.next().expect("one result per job")).collect::<Result<_>>()?;
        points.push(CvPoint::from_folds(c, folds));
    }
    Ok(CvCurve { k, points })
}

/// Settings for the window-regression baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub max_lag: usize,
    pub max_alpha: usize,
    /// Ridge penalties tried, relative to the number of training rows.
    pub lambdas: Vec<f64>,
    /// Tail fraction of the training rows used to choose λ.
    pub inner_fraction: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            max_lag: 10,
            max_alpha: 3,
            lambdas: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
            inner_fraction: 0.2,
        }
    }
}

/// Ridge regression with an unpenalised intercept on row-major `x`
/// (`width` columns). Returns `(coefficients, intercept)`.
pub fn ridge_fit(x: &[f64], y: &[f64], width: usize, lambda: f64) -> Result<(Vec<f64>, f64)> {
    let n = y.len();
    if n == 0 || x.len() != n * width {
        return Err(Error::InsufficientData("empty regression".into()));
    }
    let mut xm = vec![0.0; width];
    for row in x.chunks(width) {
        for (m, v) in xm.iter_mut().zip(row) {
            *m += v;
        }
    }
    xm.iter_mut().for_each(|m| *m /= n as f64);
    let ym = y.iter().sum::<f64>() / n as f64;
    let mut xtx = DMatrix::<f64>::zeros(width, width);
    let mut xty = DVector::<f64>::zeros(width);
    let mut c = vec![0.0; width];
    for (row, yv) in x.chunks(width).zip(y) {
        for (ci, (v, m)) in c.iter_mut().zip(row.iter().zip(&xm)) {
            *ci = v - m;
        }
        let dy = yv - ym;
        for i in 0..width {
            xty[i] += c[i] * dy;
            for j in 0..=i {
                xtx[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..width {
        for j in 0..i {
            xtx[(j, i)] = xtx[(i, j)];
        }
        xtx[(i, i)] += lambda * n as f64 + 1e-12;
    }
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::DegenerateSeries("ridge system not positive definite".into()))?;
    let beta = chol.solve(&xty);
    let coef: Vec<f64> = beta.iter().copied().collect();
    let intercept = ym - coef.iter().zip(&xm).map(|(b, m)| b * m).sum::<f64>();
    Ok((coef, intercept))
}

fn ridge_predict(x: &[f64], width: usize, coef: &[f64], intercept: f64) -> Vec<f64> {
    x.chunks(width)
        .map(|row| intercept + row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Outcome of the baseline: report plus the per-sample predictions.
pub struct BaselineResult {
    pub report: EvalReport,
    pub params: Vec<Option<TravelParams>>,
    pub lambda: f64,
    pub idx: Vec<usize>,
    pub pred: Vec<f64>,
}

pub const BASELINE_LABEL: &str = "window-regression baseline";

/// Per-point windowed predictors with travel parameters estimated on the
/// training range, then ridge regression (windowed predictors plus local
/// predictor) evaluated on `split.val`. Points whose series is constant on
/// the training range are skipped.
pub fn baseline_weather_window(ds: &Dataset, split: &Split, cfg: &BaselineConfig) -> Result<BaselineResult> {
    let train_range = split
        .train
        .iter()
        .max_by_key(|r| r.len())
        .cloned()
        .ok_or_else(|| Error::InsufficientData("empty training split".into()))?;
    let fs = &ds.features;
    let p = fs.n_points();
    let hs_train: Vec<f64> = ds.hs[train_range.clone()].iter().map(|v| *v as f64).collect();
    if hs_train.iter().all(|v| *v == hs_train[0]) {
        return Err(Error::DegenerateSeries("constant Hs on the training range".into()));
    }
    let column = |j: usize| -> Vec<f64> { (0..ds.len()).map(|t| fs.global[t * p + j] as f64).collect() };
    let mut params = Vec::with_capacity(p);
    let mut cols = Vec::new();
    for j in 0..p {
        let w = column(j);
        match estimate_travel_params(&w[train_range.clone()], &hs_train, cfg.max_lag, cfg.max_alpha) {
            Ok(tp) => {
                params.push(Some(tp));
                cols.push((j, tp, w));
            }
            Err(Error::DegenerateSeries(_)) => params.push(None),
            Err(e) => return Err(e),
        }
    }
    let width = cols.len() + LOCAL_WIDTH;
    let usable = |ranges: &[Range<usize>]| -> Vec<usize> {
        let back = cfg.max_lag + cfg.max_alpha;
        (0..ds.len())
            .filter(|&t| {
                fs.local_valid[t]
                    && t >= back
                    && ranges.iter().any(|r| r.start + back <= t && t + cfg.max_alpha < r.end)
                    && ds.contiguous(t - back, t + cfg.max_alpha)
            })
            .collect()
    };
    let prefix: Vec<Vec<f64>> = cols
        .iter()
        .map(|(_, _, w)| {
            let mut s = vec![0.0; w.len() + 1];
            for (i, v) in w.iter().enumerate() {
                s[i + 1] = s[i] + v;
            }
            s
        })
        .collect();
    let row = |t: usize, out: &mut Vec<f64>| {
        for ((_, tp, _), s) in cols.iter().zip(&prefix) {
            let a = t - tp.lag - tp.alpha;
            let b = t - tp.lag + tp.alpha;
            out.push((s[b + 1] - s[a]) / (2 * tp.alpha + 1) as f64);
        }
        out.extend(fs.local_row(t).iter().map(|v| *v as f64));
    };
    let build = |idx: &[usize]| -> Vec<f64> {
        let mut x = Vec::with_capacity(idx.len() * width);
        for &t in idx {
            row(t, &mut x);
        }
        x
    };
    let train_idx = usable(&split.train);
    let val_idx = usable(&split.val);
    if train_idx.len() < 2 * width.min(50) || val_idx.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} training and {} validation rows for the baseline",
            train_idx.len(),
            val_idx.len()
        )));
    }
    let xtr = build(&train_idx);
    let f32s: Vec<f32> = xtr.iter().map(|v| *v as f32).collect();
    let scaler = Standardizer::fit(&f32s, width, 0..train_idx.len());
    let standardize = |x: &[f64]| -> Vec<f64> {
        x.chunks(width)
            .flat_map(|r| {
                r.iter()
                    .zip(&scaler.mean)
                    .zip(&scaler.std)
                    .map(|((v, m), s)| (v - *m as f64) / *s as f64)
            })
            .collect()
    };
    let xtr = standardize(&xtr);
    let ytr: Vec<f64> = train_idx.iter().map(|&t| ds.hs[t] as f64).collect();

    let n_inner = ((train_idx.len() as f64) * cfg.inner_fraction).round() as usize;
    let cut = train_idx.len() - n_inner.min(train_idx.len() - 1);
    let mut lambda = *cfg.lambdas.first().ok_or_else(|| Error::config("lambdas", "empty"))?;
    if n_inner > 0 {
        let mut best = f64::INFINITY;
        for &l in &cfg.lambdas {
            let (c, b) = ridge_fit(&xtr[..cut * width], &ytr[..cut], width, l)?;
            let e = rmse(&ytr[cut..], &ridge_predict(&xtr[cut * width..], width, &c, b));
            if e < best {
                best = e;
                lambda = l;
            }
        }
    }
    let (coef, intercept) = ridge_fit(&xtr, &ytr, width, lambda)?;
    let xv = standardize(&build(&val_idx));
    let pred = ridge_predict(&xv, width, &coef, intercept);
    let obs: Vec<f64> = val_idx.iter().map(|&t| ds.hs[t] as f64).collect();
    let report = metrics(&obs, &pred)?.with_label(BASELINE_LABEL);
    Ok(BaselineResult {
        report,
        params,
        lambda,
        idx: val_idx,
        pred,
    })
}
