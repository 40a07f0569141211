use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gemm::{gemm, Mat};
use super::lstm::{LstmCache, LstmParams};
use super::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

/// Layer kind plus its hyperparameters; shapes are inferred when a network
/// is built.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// 3×3 convolution, stride 1, same padding.
    Conv3x3 { channels: usize },
    Relu,
    /// 2×2 max pooling, stride 2; odd trailing rows/columns are dropped.
    MaxPool2x2,
    BatchNorm,
    Flatten,
    Dense { units: usize },
    Dropout { rate: f64 },
    /// Consumes `[L × d]` rows and emits the final hidden state.
    Lstm { units: usize },
    /// Appends the auxiliary input.
    Concat,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Conv3x3 {
        in_ch: usize,
        out_ch: usize,
        /// `[out, in, 3, 3]`
        weight: Param<T>,
        bias: Param<T>,
    },
    Relu,
    MaxPool2x2,
    BatchNorm {
        width: usize,
        gamma: Param<T>,
        beta: Param<T>,
        running_mean: Vec<T>,
        running_var: Vec<T>,
        eps: f64,
        momentum: f64,
    },
    Flatten,
    Dense {
        input: usize,
        units: usize,
        /// `[units, input]`
        weight: Param<T>,
        bias: Param<T>,
    },
    Dropout {
        rate: f64,
    },
    Lstm(LstmParams<T>),
    Concat {
        width: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum LayerCache<T> {
    Input(Tensor<T>),
    Relu(Tensor<T>),
    MaxPool { in_shape: Vec<usize>, argmax: Vec<u32> },
    BatchNorm { xhat: Vec<T>, inv_std: Vec<T>, mean: Vec<T>, var: Vec<T>, batch_stats: bool },
    Flatten(Vec<usize>),
    Dropout(Vec<T>),
    Lstm(LstmCache<T>),
    Concat { main: usize },
}

fn uniform<T: Scalar, R: Rng>(n: usize, bound: f64, rng: &mut R) -> Vec<T> {
    (0..n).map(|_| T::c(rng.random_range(-bound..bound))).collect()
}

fn mismatch(layer: usize, expected: Vec<usize>, got: &[usize]) -> Error {
    Error::ShapeMismatch {
        layer,
        expected,
        got: got.to_vec(),
    }
}

impl<T: Scalar> Layer<T> {
    /// Builds a layer for per-sample input shape `in_shape`; returns it with
    /// its per-sample output shape.
    pub(crate) fn build<R: Rng>(
        spec: &LayerSpec,
        index: usize,
        in_shape: &[usize],
        aux_width: usize,
        rng: &mut R,
    ) -> Result<(Self, Vec<usize>)> {
        // `expected` in the error carries the required rank
        let need = |rank: usize| -> Result<()> {
            if in_shape.len() != rank || in_shape.contains(&0) {
                return Err(mismatch(index, vec![rank], in_shape));
            }
            Ok(())
        };
        match *spec {
            LayerSpec::Conv3x3 { channels } => {
                need(3)?;
                let in_ch = in_shape[0];
                let bound = 1.0 / ((in_ch * 9) as f64).sqrt();
                let weight = Tensor::from_vec(vec![channels, in_ch, 3, 3], uniform(channels * in_ch * 9, bound, rng))?;
                let bias = Tensor::zeros(vec![channels]);
                Ok((
                    Layer::Conv3x3 {
                        in_ch,
                        out_ch: channels,
                        weight: Param::new(weight),
                        bias: Param::new(bias),
                    },
                    vec![channels, in_shape[1], in_shape[2]],
                ))
            }
            LayerSpec::Relu => Ok((Layer::Relu, in_shape.to_vec())),
            LayerSpec::MaxPool2x2 => {
                need(3)?;
                if in_shape[1] < 2 || in_shape[2] < 2 {
                    return Err(mismatch(index, vec![in_shape[0], 2, 2], in_shape));
                }
                Ok((Layer::MaxPool2x2, vec![in_shape[0], in_shape[1] / 2, in_shape[2] / 2]))
            }
            LayerSpec::BatchNorm => {
                if !(in_shape.len() == 1 || in_shape.len() == 3) {
                    return Err(mismatch(index, vec![0], in_shape));
                }
                let width = in_shape[0];
                Ok((
                    Layer::BatchNorm {
                        width,
                        gamma: Param::new(Tensor::filled(vec![width], T::one())),
                        beta: Param::new(Tensor::zeros(vec![width])),
                        running_mean: vec![T::zero(); width],
                        running_var: vec![T::one(); width],
                        eps: BN_EPS,
                        momentum: BN_MOMENTUM,
                    },
                    in_shape.to_vec(),
                ))
            }
            LayerSpec::Flatten => Ok((Layer::Flatten, vec![in_shape.iter().product()])),
            LayerSpec::Dense { units } => {
                need(1)?;
                let input = in_shape[0];
                let bound = 1.0 / (input as f64).sqrt();
                let weight = Tensor::from_vec(vec![units, input], uniform(units * input, bound, rng))?;
                Ok((
                    Layer::Dense {
                        input,
                        units,
                        weight: Param::new(weight),
                        bias: Param::new(Tensor::zeros(vec![units])),
                    },
                    vec![units],
                ))
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::config("dropout", format!("rate {rate} outside [0, 1)")));
                }
                Ok((Layer::Dropout { rate }, in_shape.to_vec()))
            }
            LayerSpec::Lstm { units } => {
                need(2)?;
                Ok((Layer::Lstm(LstmParams::init(in_shape[1], units, rng)), vec![units]))
            }
            LayerSpec::Concat => {
                need(1)?;
                Ok((Layer::Concat { width: aux_width }, vec![in_shape[0] + aux_width]))
            }
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv3x3 { out_ch, .. } => LayerSpec::Conv3x3 { channels: *out_ch },
            Layer::Relu => LayerSpec::Relu,
            Layer::MaxPool2x2 => LayerSpec::MaxPool2x2,
            Layer::BatchNorm { .. } => LayerSpec::BatchNorm,
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Dense { units, .. } => LayerSpec::Dense { units: *units },
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
            Layer::Lstm(p) => LayerSpec::Lstm { units: p.hidden },
            Layer::Concat { .. } => LayerSpec::Concat,
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv3x3 { weight, bias, .. } | Layer::Dense { weight, bias, .. } => vec![weight, bias],
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            Layer::Lstm(p) => vec![&p.w_x, &p.w_h, &p.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv3x3 { weight, bias, .. } | Layer::Dense { weight, bias, .. } => vec![weight, bias],
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            Layer::Lstm(p) => vec![&mut p.w_x, &mut p.w_h, &mut p.bias],
            _ => Vec::new(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        let cv = |v: &Vec<T>| v.iter().map(|x| U::c(x.f64())).collect::<Vec<U>>();
        match self {
            Layer::Conv3x3 { in_ch, out_ch, weight, bias } => Layer::Conv3x3 {
                in_ch: *in_ch,
                out_ch: *out_ch,
                weight: weight.cast(),
                bias: bias.cast(),
            },
            Layer::Relu => Layer::Relu,
            Layer::MaxPool2x2 => Layer::MaxPool2x2,
            Layer::BatchNorm { width, gamma, beta, running_mean, running_var, eps, momentum } => Layer::BatchNorm {
                width: *width,
                gamma: gamma.cast(),
                beta: beta.cast(),
                running_mean: cv(running_mean),
                running_var: cv(running_var),
                eps: *eps,
                momentum: *momentum,
            },
            Layer::Flatten => Layer::Flatten,
            Layer::Dense { input, units, weight, bias } => Layer::Dense {
                input: *input,
                units: *units,
                weight: weight.cast(),
                bias: bias.cast(),
            },
            Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
            Layer::Lstm(p) => Layer::Lstm(p.cast()),
            Layer::Concat { width } => Layer::Concat { width: *width },
        }
    }

    /// Forward pass over a batch. `seed` drives dropout; `train` selects
    /// batch statistics and active dropout.
    pub(crate) fn forward(
        &self,
        x: &Tensor<T>,
        aux: Option<&Tensor<T>>,
        train: bool,
        seed: u64,
    ) -> Result<(Tensor<T>, LayerCache<T>)> {
        let n = x.batch();
        match self {
            Layer::Conv3x3 { in_ch, out_ch, weight, bias } => {
                let (h, w) = (x.shape()[2], x.shape()[3]);
                let out = conv3x3_forward(x.data(), n, *in_ch, *out_ch, h, w, weight.value.data(), bias.value.data());
                Ok((Tensor::from_vec(vec![n, *out_ch, h, w], out)?, LayerCache::Input(x.clone())))
            }
            Layer::Relu => {
                let y: Vec<T> = x.data().iter().map(|v| v.max(T::zero())).collect();
                let y = Tensor::from_vec(x.shape().to_vec(), y)?;
                Ok((y.clone(), LayerCache::Relu(y)))
            }
            Layer::MaxPool2x2 => {
                let (c, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3]);
                let (oh, ow) = (h / 2, w / 2);
                let mut out = Vec::with_capacity(n * c * oh * ow);
                let mut argmax = Vec::with_capacity(n * c * oh * ow);
                let d = x.data();
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for y in 0..oh {
                        for xx in 0..ow {
                            let mut best = base + 2 * y * w + 2 * xx;
                            for off in [1, w, w + 1] {
                                let i = base + 2 * y * w + 2 * xx + off;
                                if d[i] > d[best] {
                                    best = i;
                                }
                            }
                            out.push(d[best]);
                            argmax.push(best as u32);
                        }
                    }
                }
                Ok((
                    Tensor::from_vec(vec![n, c, oh, ow], out)?,
                    LayerCache::MaxPool { in_shape: x.shape().to_vec(), argmax },
                ))
            }
            Layer::BatchNorm { width, gamma, beta, running_mean, running_var, eps, .. } => {
                let c = *width;
                let s = x.sample_len() / c;
                let d = x.data();
                // Reductions run in f64: with small batches the centred sums
                // cancel badly in f32.
                let (mean, var): (Vec<f64>, Vec<f64>) = if train {
                    let m = (n * s) as f64;
                    let mut mean = vec![0.0; c];
                    let mut var = vec![0.0; c];
                    for b in 0..n {
                        for ch in 0..c {
                            mean[ch] += d[(b * c + ch) * s..(b * c + ch + 1) * s].iter().map(|v| v.f64()).sum::<f64>();
                        }
                    }
                    mean.iter_mut().for_each(|v| *v /= m);
                    for b in 0..n {
                        for ch in 0..c {
                            for v in &d[(b * c + ch) * s..(b * c + ch + 1) * s] {
                                let dv = v.f64() - mean[ch];
                                var[ch] += dv * dv;
                            }
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= m);
                    (mean, var)
                } else {
                    (running_mean.iter().map(|v| v.f64()).collect(), running_var.iter().map(|v| v.f64()).collect())
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                let (g, bt) = (gamma.value.data(), beta.value.data());
                let mut xhat = vec![T::zero(); d.len()];
                let mut out = vec![T::zero(); d.len()];
                for b in 0..n {
                    for ch in 0..c {
                        let r = (b * c + ch) * s..(b * c + ch + 1) * s;
                        for i in r {
                            let xh = (d[i].f64() - mean[ch]) * inv_std[ch];
                            xhat[i] = T::c(xh);
                            out[i] = T::c(g[ch].f64() * xh + bt[ch].f64());
                        }
                    }
                }
                let (inv_std, mean, var) = (cast(&inv_std), cast(&mean), cast(&var));
                Ok((
                    Tensor::from_vec(x.shape().to_vec(), out)?,
                    LayerCache::BatchNorm { xhat, inv_std, mean, var, batch_stats: train },
                ))
            }
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let flat = x.clone().reshaped(vec![n, x.sample_len()])?;
                Ok((flat, LayerCache::Flatten(shape)))
            }
            Layer::Dense { input, units, weight, bias } => {
                let (wd, bd) = (weight.value.data(), bias.value.data());
                let mut out = Vec::with_capacity(n * units);
                for _ in 0..n {
                    out.extend_from_slice(bd);
                }
                gemm(Mat::new(x.data(), n, *input), Mat::t(wd, *input, *units), T::one(), &mut out);
                Ok((Tensor::from_vec(vec![n, *units], out)?, LayerCache::Input(x.clone())))
            }
            Layer::Dropout { rate } => {
                if !train || *rate == 0.0 {
                    let ones = vec![T::one(); x.len()];
                    return Ok((x.clone(), LayerCache::Dropout(ones)));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let keep = T::c(1.0 / (1.0 - rate));
                let mask: Vec<T> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < *rate { T::zero() } else { keep })
                    .collect();
                let y: Vec<T> = x.data().iter().zip(&mask).map(|(a, m)| *a * *m).collect();
                Ok((Tensor::from_vec(x.shape().to_vec(), y)?, LayerCache::Dropout(mask)))
            }
            Layer::Lstm(p) => {
                let (y, cache) = p.forward_last(x);
                Ok((y, LayerCache::Lstm(cache)))
            }
            Layer::Concat { width } => {
                let aux = aux.ok_or(Error::ShapeMismatch {
                    layer: usize::MAX,
                    expected: vec![n, *width],
                    got: Vec::new(),
                })?;
                let f = x.sample_len();
                let mut out = Vec::with_capacity(n * (f + width));
                for b in 0..n {
                    out.extend_from_slice(x.sample(b));
                    out.extend_from_slice(aux.sample(b));
                }
                Ok((Tensor::from_vec(vec![n, f + width], out)?, LayerCache::Concat { main: f }))
            }
        }
    }

    /// Backward pass; writes parameter gradients and returns the gradient
    /// with respect to the layer input (and the auxiliary input for
    /// `Concat`).
    pub(crate) fn backward(
        &mut self,
        cache: &LayerCache<T>,
        grad: &Tensor<T>,
    ) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
        let n = grad.batch();
        match (self, cache) {
            (Layer::Conv3x3 { in_ch, out_ch, weight, bias }, LayerCache::Input(x)) => {
                let (h, w) = (x.shape()[2], x.shape()[3]);
                let (gx, gw, gb) =
                    conv3x3_backward(x.data(), grad.data(), n, *in_ch, *out_ch, h, w, weight.value.data());
                weight.grad = Tensor::from_vec(vec![*out_ch, *in_ch, 3, 3], gw)?;
                bias.grad = Tensor::from_vec(vec![*out_ch], gb)?;
                Ok((Tensor::from_vec(x.shape().to_vec(), gx)?, None))
            }
            (Layer::Relu, LayerCache::Relu(y)) => {
                let g: Vec<T> = grad
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(g, y)| if *y > T::zero() { *g } else { T::zero() })
                    .collect();
                Ok((Tensor::from_vec(y.shape().to_vec(), g)?, None))
            }
            (Layer::MaxPool2x2, LayerCache::MaxPool { in_shape, argmax }) => {
                let mut g = Tensor::zeros(in_shape.clone());
                let gd = g.data_mut();
                for (gv, &i) in grad.data().iter().zip(argmax) {
                    gd[i as usize] = gd[i as usize] + *gv;
                }
                Ok((g, None))
            }
            (Layer::BatchNorm { width, gamma, beta, .. }, LayerCache::BatchNorm { xhat, inv_std, batch_stats, .. }) => {
                let c = *width;
                let s = grad.sample_len() / c;
                let m = (n * s) as f64;
                let gd = grad.data();
                let gam = gamma.value.data();
                let mut sum_g = vec![0.0f64; c];
                let mut sum_gx = vec![0.0f64; c];
                for b in 0..n {
                    for ch in 0..c {
                        for i in (b * c + ch) * s..(b * c + ch + 1) * s {
                            sum_g[ch] += gd[i].f64();
                            sum_gx[ch] += gd[i].f64() * xhat[i].f64();
                        }
                    }
                }
                let mut gx = vec![T::zero(); gd.len()];
                for b in 0..n {
                    for ch in 0..c {
                        let r = (b * c + ch) * s..(b * c + ch + 1) * s;
                        if *batch_stats {
                            let k = gam[ch].f64() * inv_std[ch].f64() / m;
                            for i in r {
                                gx[i] = T::c(k * (m * gd[i].f64() - sum_g[ch] - xhat[i].f64() * sum_gx[ch]));
                            }
                        } else {
                            // running statistics are constants
                            let k = gam[ch] * inv_std[ch];
                            for i in r {
                                gx[i] = k * gd[i];
                            }
                        }
                    }
                }
                let (sum_g, sum_gx) = (cast::<T>(&sum_g), cast::<T>(&sum_gx));
                gamma.grad = Tensor::from_vec(vec![c], sum_gx)?;
                beta.grad = Tensor::from_vec(vec![c], sum_g)?;
                Ok((Tensor::from_vec(grad.shape().to_vec(), gx)?, None))
            }
            (Layer::Flatten, LayerCache::Flatten(shape)) => Ok((grad.clone().reshaped(shape.clone())?, None)),
            (Layer::Dense { input, units, weight, bias }, LayerCache::Input(x)) => {
                let (input, units) = (*input, *units);
                let wd = weight.value.data();
                let gd = grad.data();
                let mut gw = vec![T::zero(); units * input];
                let mut gb = vec![T::zero(); units];
                let mut gx = vec![T::zero(); n * input];
                for row in gd.chunks(units) {
                    for (s, g) in gb.iter_mut().zip(row) {
                        *s = *s + *g;
                    }
                }
                gemm(Mat::t(gd, units, n), Mat::new(x.data(), n, input), T::zero(), &mut gw);
                gemm(Mat::new(gd, n, units), Mat::new(wd, units, input), T::zero(), &mut gx);
                weight.grad = Tensor::from_vec(vec![units, input], gw)?;
                bias.grad = Tensor::from_vec(vec![units], gb)?;
                Ok((Tensor::from_vec(x.shape().to_vec(), gx)?, None))
            }
            (Layer::Dropout { .. }, LayerCache::Dropout(mask)) => {
                let g: Vec<T> = grad.data().iter().zip(mask).map(|(g, m)| *g * *m).collect();
                Ok((Tensor::from_vec(grad.shape().to_vec(), g)?, None))
            }
            (Layer::Lstm(p), LayerCache::Lstm(cache)) => Ok((p.backward_last(cache, grad), None)),
            (Layer::Concat { width }, LayerCache::Concat { main }) => {
                let (f, a) = (*main, *width);
                let mut gm = Vec::with_capacity(n * f);
                let mut ga = Vec::with_capacity(n * a);
                for b in 0..n {
                    let row = grad.sample(b);
                    gm.extend_from_slice(&row[..f]);
                    ga.extend_from_slice(&row[f..]);
                }
                Ok((Tensor::from_vec(vec![n, f], gm)?, Some(Tensor::from_vec(vec![n, a], ga)?)))
            }
            _ => Err(Error::NoCache),
        }
    }
}

/// Zero-padded 3×3 patches of one sample: row `ci·9 + ky·3 + kx`, column
/// `y·w + x`.
fn im2col<T: Scalar>(x: &[T], cin: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    cols.fill(T::zero());
    for ci in 0..cin {
        let ip = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            let (y0, y1) = (usize::from(ky == 0), if ky == 2 { h - 1 } else { h });
            for kx in 0..3 {
                let (x0, x1) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                if x1 <= x0 {
                    continue;
                }
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..(ci * 9 + ky * 3 + kx + 1) * hw];
                for y in y0..y1 {
                    let lo = (y + ky - 1) * w + x0 + kx - 1;
                    row[y * w + x0..y * w + x1].copy_from_slice(&ip[lo..lo + (x1 - x0)]);
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], cin: usize, h: usize, w: usize, gx: &mut [T]) {
    let hw = h * w;
    for ci in 0..cin {
        let gp = &mut gx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            let (y0, y1) = (usize::from(ky == 0), if ky == 2 { h - 1 } else { h });
            for kx in 0..3 {
                let (x0, x1) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                if x1 <= x0 {
                    continue;
                }
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..(ci * 9 + ky * 3 + kx + 1) * hw];
                for y in y0..y1 {
                    let lo = (y + ky - 1) * w + x0 + kx - 1;
                    for (g, c) in gp[lo..lo + (x1 - x0)].iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *g = *g + *c;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_forward<T: Scalar>(
    x: &[T],
    n: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::zero(); n * cout * hw];
    let mut cols = vec![T::zero(); cin * 9 * hw];
    for b in 0..n {
        im2col(&x[b * cin * hw..(b + 1) * cin * hw], cin, h, w, &mut cols);
        let ob = &mut out[b * cout * hw..(b + 1) * cout * hw];
        for (o, plane) in ob.chunks_mut(hw).enumerate() {
            plane.fill(bias[o]);
        }
        gemm(Mat::new(weight, cout, cin * 9), Mat::new(&cols, cin * 9, hw), T::one(), ob);
    }
    out
}

#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn conv3x3_backward<T: Scalar>(
    x: &[T],
    g: &[T],
    n: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    weight: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let hw = h * w;
    let k9 = cin * 9;
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); cout * k9];
    let mut gb = vec![T::zero(); cout];
    let mut cols = vec![T::zero(); k9 * hw];
    let mut gcols = vec![T::zero(); k9 * hw];
    for b in 0..n {
        let gp = &g[b * cout * hw..(b + 1) * cout * hw];
        for (o, plane) in gp.chunks(hw).enumerate() {
            gb[o] = gb[o] + plane.iter().copied().sum::<T>();
        }
        im2col(&x[b * cin * hw..(b + 1) * cin * hw], cin, h, w, &mut cols);
        gemm(Mat::new(gp, cout, hw), Mat::t(&cols, hw, k9), T::one(), &mut gw);
        gemm(Mat::t(weight, k9, cout), Mat::new(gp, cout, hw), T::zero(), &mut gcols);
        col2im(&gcols, cin, h, w, &mut gx[b * cin * hw..(b + 1) * cin * hw]);
    }
    (gx, gw, gb)
}

fn cast<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::c(*x)).collect()
}
