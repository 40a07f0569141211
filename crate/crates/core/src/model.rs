//! Two-stage model: a convolutional stage 1 mapping the gridded global
//! predictor at one time to Hs contributions over `t_max + 1` horizons, and
//! an LSTM stage 2 reading the matrix of past stage-1 outputs together with
//! the local predictor.

use std::fmt;
use std::io::Write;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureSet, Standardizer, LOCAL_WIDTH};
use crate::geo::{GridSpec, SeaPointSet};
use crate::kv::KvMap;
use crate::nn::{mse_stage1, Adam, AdamConfig, Checkpoint, LayerSpec, Mode, Network, Tensor};

/// Layer widths. Every convolution block is conv3x3 + ReLU + maxpool2x2 +
/// batchnorm; pooling is skipped once a spatial side drops below 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub conv_channels: Vec<usize>,
    pub dense1: usize,
    pub dropout1: f64,
    pub lstm_units: usize,
    pub dense2: usize,
    pub dropout2: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            conv_channels: vec![16, 32],
            dense1: 128,
            dropout1: 0.2,
            lstm_units: 64,
            dense2: 64,
            dropout2: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub t_max: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub patience: usize,
    pub seed: u64,
    /// Fraction of the data held out (the most recent block).
    pub val_fraction: f64,
    /// Tail fraction of the training samples used for early stopping.
    pub monitor_fraction: f64,
    /// Hard cap on optimiser steps per stage; 0 means no cap.
    pub max_steps: usize,
    pub stage2_include_global: bool,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            t_max: 6,
            batch_size: 64,
            epochs: 100,
            lr: 1e-3,
            patience: 10,
            seed: 0,
            val_fraction: 0.2,
            monitor_fraction: 0.15,
            max_steps: 0,
            stage2_include_global: false,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "t_max",
        "batch_size",
        "epochs",
        "lr",
        "patience",
        "seed",
        "val_fraction",
        "monitor_fraction",
        "max_steps",
        "stage2_include_global",
        "conv_channels",
        "dense1",
        "dropout1",
        "lstm_units",
        "dense2",
        "dropout2",
    ];

    /// Reads the training keys from `kv`, leaving others untouched.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            t_max: kv.take_or("t_max", d.t_max)?,
            batch_size: kv.take_or("batch_size", d.batch_size)?,
            epochs: kv.take_or("epochs", d.epochs)?,
            lr: kv.take_or("lr", d.lr)?,
            patience: kv.take_or("patience", d.patience)?,
            seed: kv.take_or("seed", d.seed)?,
            val_fraction: kv.take_or("val_fraction", d.val_fraction)?,
            monitor_fraction: kv.take_or("monitor_fraction", d.monitor_fraction)?,
            max_steps: kv.take_or("max_steps", d.max_steps)?,
            stage2_include_global: kv.take_or("stage2_include_global", d.stage2_include_global)?,
            arch: ArchConfig {
                conv_channels: kv.take_list("conv_channels")?.unwrap_or(d.arch.conv_channels),
                dense1: kv.take_or("dense1", d.arch.dense1)?,
                dropout1: kv.take_or("dropout1", d.arch.dropout1)?,
                lstm_units: kv.take_or("lstm_units", d.arch.lstm_units)?,
                dense2: kv.take_or("dense2", d.arch.dense2)?,
                dropout2: kv.take_or("dropout2", d.arch.dropout2)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |key: &str, v: usize| {
            if v == 0 {
                Err(Error::config(key, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        pos("t_max", self.t_max)?;
        pos("batch_size", self.batch_size)?;
        pos("epochs", self.epochs)?;
        pos("dense1", self.arch.dense1)?;
        pos("lstm_units", self.arch.lstm_units)?;
        pos("dense2", self.arch.dense2)?;
        if self.arch.conv_channels.contains(&0) {
            return Err(Error::config("conv_channels", "channel counts must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        for (k, v) in [("dropout1", self.arch.dropout1), ("dropout2", self.arch.dropout2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(k, "must be in [0, 1)"));
            }
        }
        for (k, v) in [("val_fraction", self.val_fraction), ("monitor_fraction", self.monitor_fraction)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(k, "must be in [0, 1)"));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("t_max", self.t_max);
        kv.set("batch_size", self.batch_size);
        kv.set("epochs", self.epochs);
        kv.set("lr", self.lr);
        kv.set("patience", self.patience);
        kv.set("seed", self.seed);
        kv.set("val_fraction", self.val_fraction);
        kv.set("monitor_fraction", self.monitor_fraction);
        kv.set("max_steps", self.max_steps);
        kv.set("stage2_include_global", self.stage2_include_global);
        let ch: Vec<String> = self.arch.conv_channels.iter().map(|c| c.to_string()).collect();
        kv.set("conv_channels", ch.join(","));
        kv.set("dense1", self.arch.dense1);
        kv.set("dropout1", self.arch.dropout1);
        kv.set("lstm_units", self.arch.lstm_units);
        kv.set("dense2", self.arch.dense2);
        kv.set("dropout2", self.arch.dropout2);
        kv
    }

    pub fn horizons(&self) -> usize {
        self.t_max + 1
    }
}

/// Scatters per-sea-point values onto the grid as a `[1, nlat, nlon]`
/// image; cells without a sea point are zero.
pub fn reshape_global(x: &[f32], pts: &SeaPointSet, grid: &GridSpec) -> Result<Tensor<f32>> {
    if x.len() != pts.len() {
        return Err(Error::GridMismatch(format!(
            "{} values for {} sea points",
            x.len(),
            pts.len()
        )));
    }
    let mut img = vec![0f32; grid.len()];
    for (v, p) in x.iter().zip(&pts.points) {
        if p.index >= grid.len() {
            return Err(Error::GridMismatch(format!("cell {} outside grid", p.index)));
        }
        img[p.index] = *v;
    }
    Tensor::from_vec(vec![1, grid.nlat, grid.nlon], img)
}

/// Inverse of [`reshape_global`] on the sea points.
pub fn gather_global(img: &Tensor<f32>, pts: &SeaPointSet) -> Vec<f32> {
    pts.points.iter().map(|p| img.data()[p.index]).collect()
}

/// Stage-1 outputs for the window ending at `t`. Row `i` holds the
/// prediction made from the global predictor at `t − t_max + i`; column `k`
/// is horizon `k`. The anti-diagonal `i + k = t_max` targets time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub t_max: usize,
    pub values: Vec<f32>,
}

impl PredictionMatrix {
    pub fn size(&self) -> usize {
        self.t_max + 1
    }

    pub fn get(&self, i: usize, k: usize) -> f32 {
        self.values[i * self.size() + k]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let l = self.size();
        &self.values[i * l..(i + 1) * l]
    }

    /// Offset from `t` of the time entry `(i, k)` predicts.
    pub fn target_offset(&self, i: usize, k: usize) -> i64 {
        i as i64 + k as i64 - self.t_max as i64
    }

    /// Entries `(i, t_max − i)`, oldest source first.
    pub fn anti_diagonal(&self) -> Vec<f32> {
        (0..self.size()).map(|i| self.get(i, self.t_max - i)).collect()
    }
}

/// Index ranges of a dataset used for training and validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Range<usize>>,
    pub val: Vec<Range<usize>>,
}

impl Split {
    /// Most recent `val_fraction` of the indices held out.
    #[allow(clippy::single_range_in_vec_init)]
    pub fn holdout(n: usize, val_fraction: f64) -> Self {
        let n_val = ((n as f64) * val_fraction).round() as usize;
        let cut = n - n_val.min(n);
        Split {
            train: vec![0..cut],
            val: if cut < n { vec![cut..n] } else { Vec::new() },
        }
    }
}

fn in_ranges(ranges: &[Range<usize>], a: usize, b: usize) -> bool {
    ranges.iter().any(|r| r.start <= a && b < r.end)
}

/// Stage-1 samples `t` whose target window `[t, t + t_max]` lies in one
/// range and is gap-free.
pub fn stage1_samples(ds: &Dataset, ranges: &[Range<usize>], t_max: usize) -> Vec<usize> {
    (0..ds.len())
        .filter(|&t| in_ranges(ranges, t, t + t_max) && ds.contiguous(t, t + t_max))
        .collect()
}

/// Stage-2 samples `t` whose history window `[t − lookback, t]` lies in one
/// range and is gap-free, with a valid local predictor.
pub fn stage2_samples(ds: &Dataset, ranges: &[Range<usize>], lookback: usize) -> Vec<usize> {
    (lookback..ds.len())
        .filter(|&t| {
            in_ranges(ranges, t - lookback, t) && ds.contiguous(t - lookback, t) && ds.features.local_valid[t]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Per-epoch losses; `val_mse` is measured on the early-stopping split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub epochs: Vec<EpochLoss>,
    pub steps: usize,
    pub best_epoch: usize,
}

impl LossCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_mse,val_mse")?;
        for e in &self.epochs {
            writeln!(w, "{},{},{}", e.epoch, e.train_mse, e.val_mse)?;
        }
        Ok(())
    }

    pub fn best_val(&self) -> f64 {
        self.epochs.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min)
    }
}

fn mix(seed: u64, stream: u64, k: u64) -> u64 {
    // splitmix64 finaliser over the combined words
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED69));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_S1: u64 = 1;
const STREAM_S2: u64 = 2;

type Batch = (Tensor<f32>, Option<Tensor<f32>>, Tensor<f32>);

/// Splits sorted sample indices into a training part and an early-stopping
/// tail.
fn monitor_split(samples: &[usize], fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n_mon = ((samples.len() as f64) * fraction).round() as usize;
    if n_mon == 0 || n_mon >= samples.len() {
        return (samples.to_vec(), Vec::new());
    }
    let cut = samples.len() - n_mon;
    (samples[..cut].to_vec(), samples[cut..].to_vec())
}

fn eval_mse<F>(net: &Network<f32>, make: &F, idx: &[usize]) -> Result<f64>
where
    F: Fn(&[usize]) -> Result<Batch>,
{
    let (mut sse, mut count) = (0f64, 0usize);
    for chunk in idx.chunks(256) {
        let (x, aux, y) = make(chunk)?;
        let pred = net.infer(&x, aux.as_ref())?;
        for (p, t) in pred.data().iter().zip(y.data()) {
            let d = (*p - *t) as f64;
            sse += d * d;
        }
        count += y.len();
    }
    Ok(if count == 0 { f64::NAN } else { sse / count as f64 })
}

/// Mini-batch Adam with seeded shuffling and early stopping; the network
/// ends with the weights of the best monitored epoch.
fn fit<F>(
    net: &mut Network<f32>,
    make: F,
    train: &[usize],
    monitor: &[usize],
    cfg: &TrainConfig,
    stream: u64,
) -> Result<(LossCurve, Adam<f32>)>
where
    F: Fn(&[usize]) -> Result<Batch>,
{
    if train.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg, net);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, stream, 0));
    let mut order = train.to_vec();
    let mut curve = LossCurve::default();
    let mut best = (f64::INFINITY, net.clone(), adam.clone());
    let mut since_best = 0usize;
    let mut step = 0usize;
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut seen) = (0f64, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, aux, y) = make(chunk)?;
            let pred = net.forward(&x, aux.as_ref(), Mode::Train, mix(cfg.seed, stream, step as u64 + 1))?;
            let (loss, grad) = mse_stage1(&pred, &y)?;
            net.backward(&grad)?;
            adam.step(net);
            step += 1;
            sum += loss as f64 * chunk.len() as f64;
            seen += chunk.len();
            if cfg.max_steps > 0 && step >= cfg.max_steps {
                break;
            }
        }
        let train_mse = sum / seen as f64;
        let val_mse = if monitor.is_empty() {
            train_mse
        } else {
            eval_mse(net, &make, monitor)?
        };
        curve.epochs.push(EpochLoss { epoch, train_mse, val_mse });
        if val_mse < best.0 {
            best = (val_mse, net.clone(), adam.clone());
            curve.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if !val_mse.is_finite() || (cfg.patience > 0 && since_best >= cfg.patience) {
            break 'epochs;
        }
        if cfg.max_steps > 0 && step >= cfg.max_steps {
            break;
        }
    }
    curve.steps = step;
    if best.0.is_finite() {
        *net = best.1;
        adam = best.2;
    }
    Ok((curve, adam))
}

fn set_last_bias(net: &mut Network<f32>, value: f32) {
    if let Some(p) = net.params_mut().pop() {
        p.value.data_mut().fill(value);
    }
}

fn tensor1(v: &[f32]) -> Tensor<f32> {
    Tensor::from_vec(vec![v.len()], v.to_vec()).expect("1-d")
}

fn extra<'a>(ck: &'a Checkpoint, name: &str) -> Result<&'a Tensor<f32>> {
    ck.extra(name)
        .ok_or_else(|| Error::format("WCKP1", format!("missing extra tensor {name}")))
}

fn scaler_from(ck: &Checkpoint, prefix: &str) -> Result<Standardizer> {
    let mean = extra(ck, &format!("{prefix}.mean"))?.data().to_vec();
    let std = extra(ck, &format!("{prefix}.std"))?.data().to_vec();
    if mean.len() != std.len() {
        return Err(Error::format("WCKP1", format!("{prefix} scaler widths differ")));
    }
    Ok(Standardizer { mean, std })
}

fn put_scaler(ck: &mut Checkpoint, prefix: &str, s: &Standardizer) {
    ck.set_extra(&format!("{prefix}.mean"), tensor1(&s.mean));
    ck.set_extra(&format!("{prefix}.std"), tensor1(&s.std));
}

/// Stage-1 network specification for an `nlat × nlon` image.
pub fn stage1_specs(nlat: usize, nlon: usize, horizons: usize, arch: &ArchConfig) -> Vec<LayerSpec> {
    let (mut h, mut w) = (nlat, nlon);
    let mut specs = Vec::new();
    for &c in &arch.conv_channels {
        specs.push(LayerSpec::Conv3x3 { channels: c });
        specs.push(LayerSpec::Relu);
        if h >= 2 && w >= 2 {
            specs.push(LayerSpec::MaxPool2x2);
            h /= 2;
            w /= 2;
        }
        specs.push(LayerSpec::BatchNorm);
    }
    specs.extend([
        LayerSpec::Flatten,
        LayerSpec::Dense { units: arch.dense1 },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: arch.dropout1 },
        LayerSpec::Dense { units: horizons },
    ]);
    specs
}

pub fn stage2_specs(arch: &ArchConfig) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Lstm { units: arch.lstm_units },
        LayerSpec::Concat,
        LayerSpec::Dense { units: arch.dense2 },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: arch.dropout2 },
        LayerSpec::Dense { units: 1 },
    ]
}

/// Trained stage 1 plus the input standardisation and grid layout.
#[derive(Debug, Clone)]
pub struct Stage1Model {
    pub net: Network<f32>,
    pub t_max: usize,
    pub scaler: Standardizer,
    pub nlat: usize,
    pub nlon: usize,
    /// Grid cell of each sea point, in predictor column order.
    pub cells: Vec<usize>,
}

impl Stage1Model {
    fn image_into(&self, x: &[f32], out: &mut [f32], scratch: &mut [f32]) {
        self.scaler.apply(x, scratch);
        out.fill(0.0);
        for (v, &c) in scratch.iter().zip(&self.cells) {
            out[c] = *v;
        }
    }

    fn images(&self, rows: &[&[f32]]) -> Result<Tensor<f32>> {
        let hw = self.nlat * self.nlon;
        let mut data = vec![0f32; rows.len() * hw];
        let mut scratch = vec![0f32; self.cells.len()];
        for (b, x) in rows.iter().enumerate() {
            if x.len() != self.cells.len() {
                return Err(Error::ShapeMismatch {
                    layer: 0,
                    expected: vec![self.cells.len()],
                    got: vec![x.len()],
                });
            }
            self.image_into(x, &mut data[b * hw..(b + 1) * hw], &mut scratch);
        }
        Tensor::from_vec(vec![rows.len(), 1, self.nlat, self.nlon], data)
    }

    /// Eval-mode prediction of the `t_max + 1` horizons from one raw
    /// global-predictor row.
    pub fn predict(&self, x_g: &[f32]) -> Result<Vec<f32>> {
        Ok(self.net.infer(&self.images(&[x_g])?, None)?.into_data())
    }

    /// Outputs for dataset rows `idx`, flat `[idx.len() × (t_max + 1)]`.
    pub fn predict_rows(&self, fs: &FeatureSet, idx: &[usize]) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(idx.len() * (self.t_max + 1));
        for chunk in idx.chunks(256) {
            let rows: Vec<&[f32]> = chunk.iter().map(|&t| fs.global_row(t)).collect();
            out.extend(self.net.infer(&self.images(&rows)?, None)?.into_data());
        }
        Ok(out)
    }

    /// Prediction matrix from a window of `t_max + 1` raw rows, oldest first.
    pub fn assemble_matrix(&self, window: &[f32]) -> Result<PredictionMatrix> {
        let l = self.t_max + 1;
        let p = self.cells.len();
        if window.len() != l * p {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: vec![l, p],
                got: vec![window.len()],
            });
        }
        let rows: Vec<&[f32]> = window.chunks(p).collect();
        let values = self.net.infer(&self.images(&rows)?, None)?.into_data();
        Ok(PredictionMatrix { t_max: self.t_max, values })
    }

    pub fn to_checkpoint(&self, config: &str, seed: u64, adam: Option<Adam<f32>>) -> Checkpoint {
        let mut ck = Checkpoint::new(config.to_string(), self.net.clone(), seed);
        ck.adam = adam;
        put_scaler(&mut ck, "global", &self.scaler);
        let cells: Vec<f32> = self.cells.iter().map(|&c| c as f32).collect();
        ck.set_extra("sea.cells", tensor1(&cells));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let shape = ck.network.input_shape();
        let out = ck.network.output_shape();
        if shape.len() != 3 || shape[0] != 1 || out.len() != 1 || out[0] == 0 {
            return Err(Error::MissingStage1);
        }
        let scaler = scaler_from(ck, "global")?;
        let cells: Vec<usize> = extra(ck, "sea.cells")?.data().iter().map(|&c| c as usize).collect();
        if cells.len() != scaler.width() || cells.iter().any(|&c| c >= shape[1] * shape[2]) {
            return Err(Error::format("WCKP1", "sea-point layout does not fit the grid"));
        }
        Ok(Self {
            net: ck.network.clone(),
            t_max: out[0] - 1,
            scaler,
            nlat: shape[1],
            nlon: shape[2],
            cells,
        })
    }
}

/// Trains stage 1 on `split.train`. Targets for sample `t` are
/// `hs[t ..= t + t_max]`.
pub fn train_stage1(ds: &Dataset, split: &Split, cfg: &TrainConfig) -> Result<(Stage1Model, LossCurve, Adam<f32>)> {
    cfg.validate()?;
    let t_max = cfg.t_max;
    if ds.len() <= t_max + 1 {
        return Err(Error::InsufficientData(format!(
            "{} samples for t_max {t_max}",
            ds.len()
        )));
    }
    let samples = stage1_samples(ds, &split.train, t_max);
    let (train, monitor) = monitor_split(&samples, cfg.monitor_fraction);
    if train.is_empty() {
        return Err(Error::InsufficientData("no stage-1 training windows".into()));
    }
    let fs = &ds.features;
    let grid = fs.grid;
    let scaler = Standardizer::fit(&fs.global, fs.n_points(), train.iter().copied());
    let net = Network::build(
        &[1, grid.nlat, grid.nlon],
        0,
        &stage1_specs(grid.nlat, grid.nlon, t_max + 1, &cfg.arch),
        mix(cfg.seed, STREAM_S1, u64::MAX),
    )?;
    let mut model = Stage1Model {
        net,
        t_max,
        scaler,
        nlat: grid.nlat,
        nlon: grid.nlon,
        cells: fs.sea_points.points.iter().map(|p| p.index).collect(),
    };
    let mean_hs = train.iter().map(|&t| ds.hs[t] as f64).sum::<f64>() / train.len() as f64;
    set_last_bias(&mut model.net, mean_hs as f32);
    let l = t_max + 1;
    let make = |idx: &[usize]| -> Result<Batch> {
        let rows: Vec<&[f32]> = idx.iter().map(|&t| fs.global_row(t)).collect();
        let x = model.images(&rows)?;
        let mut y = Vec::with_capacity(idx.len() * l);
        for &t in idx {
            y.extend_from_slice(&ds.hs[t..t + l]);
        }
        Ok((x, None, Tensor::from_vec(vec![idx.len(), l], y)?))
    };
    let mut net = model.net.clone();
    let (curve, adam) = fit(&mut net, make, &train, &monitor, cfg, STREAM_S1)?;
    model.net = net;
    Ok((model, curve, adam))
}

/// Trained stage 2 with its input scalings.
#[derive(Debug, Clone)]
pub struct Stage2Model {
    pub net: Network<f32>,
    pub t_max: usize,
    pub local_scaler: Standardizer,
    pub global_scaler: Option<Standardizer>,
    /// Scalar mean and std applied to every matrix entry.
    pub matrix_scale: (f32, f32),
}

impl Stage2Model {
    fn aux_row(&self, fs: &FeatureSet, t: usize, out: &mut Vec<f32>) {
        let start = out.len();
        out.resize(start + LOCAL_WIDTH, 0.0);
        self.local_scaler.apply(fs.local_row(t), &mut out[start..]);
        if let Some(g) = &self.global_scaler {
            let s = out.len();
            out.resize(s + g.width(), 0.0);
            g.apply(fs.global_row(t), &mut out[s..]);
        }
    }

    fn aux_width(&self) -> usize {
        LOCAL_WIDTH + self.global_scaler.as_ref().map_or(0, Standardizer::width)
    }

    /// Batch inputs for samples `idx`; `rows[t]` is the stage-1 output for
    /// dataset row `t`.
    fn inputs(&self, fs: &FeatureSet, rows: &[f32], idx: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let l = self.t_max + 1;
        let (m, s) = self.matrix_scale;
        let mut x = Vec::with_capacity(idx.len() * l * l);
        let mut aux = Vec::with_capacity(idx.len() * self.aux_width());
        for &t in idx {
            let t0 = t - self.t_max;
            x.extend(rows[t0 * l..(t + 1) * l].iter().map(|v| (v - m) / s));
            self.aux_row(fs, t, &mut aux);
        }
        Ok((
            Tensor::from_vec(vec![idx.len(), l, l], x)?,
            Tensor::from_vec(vec![idx.len(), self.aux_width()], aux)?,
        ))
    }

    /// Prediction from an assembled matrix and raw feature rows at `t`.
    pub fn predict_matrix(&self, matrix: &PredictionMatrix, fs: &FeatureSet, t: usize) -> Result<f32> {
        if matrix.t_max != self.t_max {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: vec![self.t_max + 1],
                got: vec![matrix.size()],
            });
        }
        let l = self.t_max + 1;
        let (m, s) = self.matrix_scale;
        let x: Vec<f32> = matrix.values.iter().map(|v| (v - m) / s).collect();
        let mut aux = Vec::new();
        self.aux_row(fs, t, &mut aux);
        let x = Tensor::from_vec(vec![1, l, l], x)?;
        let aux = Tensor::from_vec(vec![1, aux.len()], aux)?;
        Ok(self.net.infer(&x, Some(&aux))?.data()[0])
    }

    pub fn to_checkpoint(&self, config: &str, seed: u64, adam: Option<Adam<f32>>) -> Checkpoint {
        let mut ck = Checkpoint::new(config.to_string(), self.net.clone(), seed);
        ck.adam = adam;
        put_scaler(&mut ck, "local", &self.local_scaler);
        if let Some(g) = &self.global_scaler {
            put_scaler(&mut ck, "global", g);
        }
        ck.set_extra("matrix.scale", tensor1(&[self.matrix_scale.0, self.matrix_scale.1]));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let shape = ck.network.input_shape();
        if shape.len() != 2 || shape[0] != shape[1] || shape[0] == 0 {
            return Err(Error::format("WCKP1", "not a stage-2 network"));
        }
        let local_scaler = scaler_from(ck, "local")?;
        let global_scaler = match ck.extra("global.mean") {
            Some(_) => Some(scaler_from(ck, "global")?),
            None => None,
        };
        let ms = extra(ck, "matrix.scale")?.data();
        if ms.len() != 2 {
            return Err(Error::format("WCKP1", "matrix.scale must hold two values"));
        }
        let model = Self {
            net: ck.network.clone(),
            t_max: shape[0] - 1,
            local_scaler,
            global_scaler,
            matrix_scale: (ms[0], ms[1]),
        };
        if model.aux_width() != ck.network.aux_width() {
            return Err(Error::format("WCKP1", "aux width does not match scalers"));
        }
        Ok(model)
    }
}

/// Trains stage 2 from precomputed stage-1 outputs `rows` (flat
/// `[ds.len() × (t_max + 1)]`). Any source of rows works, including an
/// oracle decomposition.
pub fn train_stage2_from_rows(
    ds: &Dataset,
    rows: &[f32],
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(Stage2Model, LossCurve, Adam<f32>)> {
    cfg.validate()?;
    let t_max = cfg.t_max;
    let l = t_max + 1;
    if rows.len() != ds.len() * l {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![ds.len(), l],
            got: vec![rows.len()],
        });
    }
    if ds.len() <= 2 * t_max {
        return Err(Error::InsufficientData(format!(
            "{} samples for t_max {t_max}",
            ds.len()
        )));
    }
    let samples = stage2_samples(ds, &split.train, t_max);
    let (train, monitor) = monitor_split(&samples, cfg.monitor_fraction);
    if train.is_empty() {
        return Err(Error::InsufficientData("no stage-2 training windows".into()));
    }
    let fs = &ds.features;
    let local_scaler = Standardizer::fit(&fs.local, LOCAL_WIDTH, train.iter().copied());
    let global_scaler = cfg
        .stage2_include_global
        .then(|| Standardizer::fit(&fs.global, fs.n_points(), train.iter().copied()));
    let mean_hs = train.iter().map(|&t| ds.hs[t] as f64).sum::<f64>() / train.len() as f64;
    let var_hs = train.iter().map(|&t| (ds.hs[t] as f64 - mean_hs).powi(2)).sum::<f64>() / train.len() as f64;
    let sd = if var_hs.sqrt() > 1e-6 { var_hs.sqrt() } else { 1.0 };
    let aux_width = LOCAL_WIDTH + global_scaler.as_ref().map_or(0, Standardizer::width);
    let net = Network::build(&[l, l], aux_width, &stage2_specs(&cfg.arch), mix(cfg.seed, STREAM_S2, u64::MAX))?;
    let mut model = Stage2Model {
        net,
        t_max,
        local_scaler,
        global_scaler,
        matrix_scale: (mean_hs as f32, sd as f32),
    };
    set_last_bias(&mut model.net, mean_hs as f32);
    let make = |idx: &[usize]| -> Result<Batch> {
        let (x, aux) = model.inputs(fs, rows, idx)?;
        let y: Vec<f32> = idx.iter().map(|&t| ds.hs[t]).collect();
        Ok((x, Some(aux), Tensor::from_vec(vec![idx.len(), 1], y)?))
    };
    let mut net = model.net.clone();
    let (curve, adam) = fit(&mut net, make, &train, &monitor, cfg, STREAM_S2)?;
    model.net = net;
    Ok((model, curve, adam))
}

/// Stage-1 outputs for every dataset row.
pub fn stage1_all_rows(s1: &Stage1Model, ds: &Dataset) -> Result<Vec<f32>> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    s1.predict_rows(&ds.features, &idx)
}

/// Trains stage 2 on top of a frozen stage 1.
pub fn train_stage2(
    s1: &Stage1Model,
    ds: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(Stage2Model, LossCurve, Adam<f32>)> {
    if s1.t_max != cfg.t_max {
        return Err(Error::config(
            "t_max",
            format!("stage 1 was trained with t_max {}", s1.t_max),
        ));
    }
    check_layout(s1, &ds.features)?;
    let rows = stage1_all_rows(s1, ds)?;
    train_stage2_from_rows(ds, &rows, split, cfg)
}

fn check_layout(s1: &Stage1Model, fs: &FeatureSet) -> Result<()> {
    let cells: Vec<usize> = fs.sea_points.points.iter().map(|p| p.index).collect();
    if cells != s1.cells || fs.grid.nlat != s1.nlat || fs.grid.nlon != s1.nlon {
        return Err(Error::GridMismatch("features and stage-1 sea points differ".into()));
    }
    Ok(())
}

/// Full-pipeline prediction at dataset row `t`.
pub fn predict_hs(s1: &Stage1Model, s2: &Stage2Model, ds: &Dataset, t: usize) -> Result<f32> {
    check_pair(s1, s2)?;
    let lo = s2.t_max as i64;
    let hi = ds.len() as i64 - 1;
    if (t as i64) < lo || (t as i64) > hi || !ds.contiguous(t - s2.t_max, t) {
        return Err(Error::WindowOutOfRange { t: t as i64, lo, hi });
    }
    if !ds.features.local_valid[t] {
        return Err(Error::InsufficientData(format!("local predictor invalid at {t}")));
    }
    let p = ds.features.n_points();
    let window = &ds.features.global[(t - s2.t_max) * p..(t + 1) * p];
    let m = s1.assemble_matrix(window)?;
    s2.predict_matrix(&m, &ds.features, t)
}

fn check_pair(s1: &Stage1Model, s2: &Stage2Model) -> Result<()> {
    if s1.t_max != s2.t_max {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![s2.t_max + 1],
            got: vec![s1.t_max + 1],
        });
    }
    Ok(())
}

/// Batched [`predict_hs`] for many rows; bit-equal to the pointwise loop.
pub fn predict_range(s1: &Stage1Model, s2: &Stage2Model, ds: &Dataset, idx: &[usize]) -> Result<Vec<f32>> {
    check_pair(s1, s2)?;
    check_layout(s1, &ds.features)?;
    for &t in idx {
        if t < s2.t_max || t >= ds.len() || !ds.contiguous(t - s2.t_max, t) {
            return Err(Error::WindowOutOfRange {
                t: t as i64,
                lo: s2.t_max as i64,
                hi: ds.len() as i64 - 1,
            });
        }
        if !ds.features.local_valid[t] {
            return Err(Error::InsufficientData(format!("local predictor invalid at {t}")));
        }
    }
    let rows = stage1_all_rows(s1, ds)?;
    predict_from_rows(s2, ds, &rows, idx)
}

/// Stage-2 predictions from precomputed stage-1 rows.
pub fn predict_from_rows(s2: &Stage2Model, ds: &Dataset, rows: &[f32], idx: &[usize]) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(256) {
        let (x, aux) = s2.inputs(&ds.features, rows, chunk)?;
        out.extend(s2.net.infer(&x, Some(&aux))?.into_data());
    }
    Ok(out)
}

impl fmt::Display for PredictionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.size() {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:.4}")).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}
