use rand::Rng;

use super::gemm::{gemm, gemm_into, Mat};
use super::{Param, Scalar, Tensor};

/// LSTM weights. Gate blocks are stacked `[input, forget, cell, output]`
/// along the first axis of `w_x` (`4h × d`), `w_h` (`4h × h`) and `bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T = f32> {
    pub input: usize,
    pub hidden: usize,
    pub w_x: Param<T>,
    pub w_h: Param<T>,
    pub bias: Param<T>,
}

/// Activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache<T> {
    input: Tensor<T>,
    /// `[N, L, 4h]` post-activation gates.
    gates: Vec<T>,
    /// `[N, L + 1, h]`, index 0 is the zero initial state.
    h: Vec<T>,
    c: Vec<T>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> LstmParams<T> {
    /// Weights uniform in ±1/√h, forget-gate bias 1.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut uni = |n: usize| -> Vec<T> { (0..n).map(|_| T::c(rng.random_range(-bound..bound))).collect() };
        let w_x = uni(4 * hidden * input);
        let w_h = uni(4 * hidden * hidden);
        let mut bias = vec![T::zero(); 4 * hidden];
        bias[hidden..2 * hidden].fill(T::one());
        Self {
            input,
            hidden,
            w_x: Param::new(Tensor::from_vec(vec![4 * hidden, input], w_x).unwrap()),
            w_h: Param::new(Tensor::from_vec(vec![4 * hidden, hidden], w_h).unwrap()),
            bias: Param::new(Tensor::from_vec(vec![4 * hidden], bias).unwrap()),
        }
    }

    /// Runs the recurrence over `[N, L, d]`; returns all hidden states
    /// `[N, L, h]` and the cache.
    pub(crate) fn run(&self, x: &Tensor<T>) -> (Vec<T>, LstmCache<T>) {
        let (n, l) = (x.shape()[0], x.shape()[1]);
        let (d, hd) = (self.input, self.hidden);
        let (wx, wh, bias) = (self.w_x.value.data(), self.w_h.value.data(), self.bias.value.data());
        let mut gates = vec![T::zero(); n * l * 4 * hd];
        let mut h = vec![T::zero(); n * (l + 1) * hd];
        let mut c = vec![T::zero(); n * (l + 1) * hd];
        for t in 0..l {
            for b in 0..n {
                gates[(b * l + t) * 4 * hd..(b * l + t + 1) * 4 * hd].copy_from_slice(bias);
            }
            let z = &mut gates[t * 4 * hd..];
            gemm_into(Mat::rows_at(&x.data()[t * d..], n, d, l * d), Mat::t(wx, d, 4 * hd), T::one(), z, l * 4 * hd);
            let hm = Mat::rows_at(&h[t * hd..], n, hd, (l + 1) * hd);
            gemm_into(hm, Mat::t(wh, hd, 4 * hd), T::one(), z, l * 4 * hd);
            for b in 0..n {
                let g = &mut gates[(b * l + t) * 4 * hd..(b * l + t + 1) * 4 * hd];
                for (k, v) in g.iter_mut().enumerate() {
                    *v = if k / hd == 2 { v.tanh() } else { sigmoid(*v) };
                }
                let hp = (b * (l + 1) + t) * hd;
                let hn = hp + hd;
                for k in 0..hd {
                    let (ig, fg, cg, og) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                    let cn = fg * c[hp + k] + ig * cg;
                    c[hn + k] = cn;
                    h[hn + k] = og * cn.tanh();
                }
            }
        }
        let mut hs = Vec::with_capacity(n * l * hd);
        for b in 0..n {
            hs.extend_from_slice(&h[(b * (l + 1) + 1) * hd..(b + 1) * (l + 1) * hd]);
        }
        (
            hs,
            LstmCache {
                input: x.clone(),
                gates,
                h,
                c,
            },
        )
    }

    /// Final hidden state `[N, h]`.
    pub(crate) fn forward_last(&self, x: &Tensor<T>) -> (Tensor<T>, LstmCache<T>) {
        let (n, l) = (x.shape()[0], x.shape()[1]);
        let hd = self.hidden;
        let (hs, cache) = self.run(x);
        let mut out = Vec::with_capacity(n * hd);
        for b in 0..n {
            out.extend_from_slice(&hs[(b * l + l - 1) * hd..(b * l + l) * hd]);
        }
        (Tensor::from_vec(vec![n, hd], out).unwrap(), cache)
    }

    /// BPTT from a gradient on the final hidden state. Writes parameter
    /// gradients and returns the input gradient.
    pub(crate) fn backward_last(&mut self, cache: &LstmCache<T>, grad: &Tensor<T>) -> Tensor<T> {
        let x = &cache.input;
        let (n, l) = (x.shape()[0], x.shape()[1]);
        let (d, hd) = (self.input, self.hidden);
        let g4 = 4 * hd;
        let mut gwx = vec![T::zero(); g4 * d];
        let mut gwh = vec![T::zero(); g4 * hd];
        let mut gb = vec![T::zero(); g4];
        let mut gx = vec![T::zero(); n * l * d];
        let (wx, wh) = (self.w_x.value.data(), self.w_h.value.data());
        let mut dz = vec![T::zero(); n * g4];
        let mut dh = grad.data().to_vec();
        let mut dc = vec![T::zero(); n * hd];
        for t in (0..l).rev() {
            for b in 0..n {
                let g = &cache.gates[(b * l + t) * g4..(b * l + t + 1) * g4];
                let hp = (b * (l + 1) + t) * hd;
                let hn = hp + hd;
                let dzb = &mut dz[b * g4..(b + 1) * g4];
                for k in 0..hd {
                    let (ig, fg, cg, og) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                    let (dhk, dck) = (dh[b * hd + k], dc[b * hd + k]);
                    let tc = cache.c[hn + k].tanh();
                    let d_o = dhk * tc;
                    let dct = dck + dhk * og * (T::one() - tc * tc);
                    let di = dct * cg;
                    let dg = dct * ig;
                    let df = dct * cache.c[hp + k];
                    dc[b * hd + k] = dct * fg;
                    dzb[k] = di * ig * (T::one() - ig);
                    dzb[hd + k] = df * fg * (T::one() - fg);
                    dzb[2 * hd + k] = dg * (T::one() - cg * cg);
                    dzb[3 * hd + k] = d_o * og * (T::one() - og);
                }
            }
            for row in dz.chunks(g4) {
                for (s, z) in gb.iter_mut().zip(row) {
                    *s = *s + *z;
                }
            }
            let xt = Mat::rows_at(&x.data()[t * d..], n, d, l * d);
            let ht = Mat::rows_at(&cache.h[t * hd..], n, hd, (l + 1) * hd);
            gemm(Mat::t(&dz, g4, n), xt, T::one(), &mut gwx);
            gemm(Mat::t(&dz, g4, n), ht, T::one(), &mut gwh);
            gemm_into(Mat::new(&dz, n, g4), Mat::new(wx, g4, d), T::zero(), &mut gx[t * d..], l * d);
            gemm(Mat::new(&dz, n, g4), Mat::new(wh, g4, hd), T::zero(), &mut dh);
        }
        self.w_x.grad = Tensor::from_vec(vec![g4, d], gwx).unwrap();
        self.w_h.grad = Tensor::from_vec(vec![g4, hd], gwh).unwrap();
        self.bias.grad = Tensor::from_vec(vec![g4], gb).unwrap();
        Tensor::from_vec(x.shape().to_vec(), gx).unwrap()
    }

    pub fn cast<U: Scalar>(&self) -> LstmParams<U> {
        LstmParams {
            input: self.input,
            hidden: self.hidden,
            w_x: self.w_x.cast(),
            w_h: self.w_h.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// Hidden states `[L × h]` for a single sequence `[L × d]`, starting from
/// `h0 = c0 = 0`.
pub fn lstm_sequence<T: Scalar>(params: &LstmParams<T>, inputs: &Tensor<T>) -> Tensor<T> {
    let l = inputs.shape()[0];
    let x = inputs.clone().reshaped(vec![1, l, params.input]).expect("[L × d] input");
    let (hs, _) = params.run(&x);
    Tensor::from_vec(vec![l, params.hidden], hs).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn zeroed(input: usize, hidden: usize) -> LstmParams<f64> {
        LstmParams {
            input,
            hidden,
            w_x: Param::new(Tensor::zeros(vec![4 * hidden, input])),
            w_h: Param::new(Tensor::zeros(vec![4 * hidden, hidden])),
            bias: Param::new(Tensor::zeros(vec![4 * hidden])),
        }
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let p = zeroed(3, 2);
        let x = Tensor::from_vec(vec![4, 3], (0..12).map(|i| i as f64).collect()).unwrap();
        let h = lstm_sequence(&p, &x);
        assert!(h.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_step_bias_only_closed_form() {
        let mut p = zeroed(2, 1);
        let (bi, bf, bg, bo) = (0.3, -0.7, 1.1, -0.4);
        p.bias.value = Tensor::from_vec(vec![4], vec![bi, bf, bg, bo]).unwrap();
        let h = lstm_sequence(&p, &Tensor::zeros(vec![1, 2]));
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let want = sig(bo) * (sig(bi) * bg.tanh()).tanh();
        assert_abs_diff_eq!(h.data()[0], want, epsilon = 1e-15);
    }

    #[test]
    fn saturated_forget_gate_accumulates() {
        // b_f = 10 keeps the cell; input gate and candidate driven by x
        let mut p = zeroed(1, 1);
        p.bias.value = Tensor::from_vec(vec![4], vec![0.0, 10.0, 0.0, 0.0]).unwrap();
        p.w_x.value = Tensor::from_vec(vec![4, 1], vec![0.0, 0.0, 0.5, 0.0]).unwrap();
        let l = 20;
        let h = lstm_sequence(&p, &Tensor::filled(vec![l, 1], 1.0));
        // reference recurrence, input gate 1/2, forget sigma(10), candidate tanh(0.5)
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let (mut c, f, inc) = (0.0f64, sig(10.0), 0.5 * 0.5f64.tanh());
        for t in 0..l {
            c = f * c + inc;
            assert_abs_diff_eq!(h.data()[t], 0.5 * c.tanh(), epsilon = 1e-14);
        }
        // nearly linear accumulation
        assert!((c - l as f64 * inc).abs() < 0.01 * l as f64 * inc);
    }
}
