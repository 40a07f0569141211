#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swellcast_core::nn::{LayerSpec, Mode, Network, Scalar, Tensor};

pub const FD_STEP: f64 = 1e-6;
/// Entries below this fraction of the largest gradient are compared in
/// absolute terms: exactly cancelling sums leave f32 rounding residue.
pub const FD_FLOOR: f64 = 1e-2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[derive(Debug, Default)]
pub struct GradReport {
    pub max_rel: f64,
    pub checked: usize,
    /// Coordinates where the two step sizes disagree, i.e. a ReLU kink or
    /// max-pool tie sits inside the stencil.
    pub nonsmooth: usize,
    /// Where the largest error occurred and the two values compared.
    pub worst: String,
}

#[derive(Default)]
struct Pairs(Vec<(&'static str, usize, f64, f64)>, usize);

impl Pairs {
    fn add(&mut self, what: &'static str, i: usize, analytic: f64, fd: Option<f64>) {
        match fd {
            Some(n) => self.0.push((what, i, analytic, n)),
            None => self.1 += 1,
        }
    }

    fn report(self) -> GradReport {
        let scale = self.0.iter().map(|p| p.3.abs()).fold(0.0, f64::max);
        let floor = (FD_FLOOR * scale).max(1e-6);
        let mut r = GradReport { nonsmooth: self.1, checked: self.0.len(), ..GradReport::default() };
        for (what, i, a, n) in self.0 {
            let e = rel_err(a, n, floor);
            if e > r.max_rel {
                r.max_rel = e;
                r.worst = format!("{what}[{i}]: analytic {a:e} vs fd {n:e}");
            }
        }
        r
    }
}

/// Central difference of `f` along one coordinate, or `None` when the
/// estimates at `h` and `2h` disagree.
fn central(mut f: impl FnMut(f64) -> f64) -> Option<f64> {
    let d1 = (f(FD_STEP) - f(-FD_STEP)) / (2.0 * FD_STEP);
    let d2 = (f(2.0 * FD_STEP) - f(-2.0 * FD_STEP)) / (4.0 * FD_STEP);
    (rel_err(d1, d2, 1e-3) < 1e-5).then_some(d1)
}

fn weighted_sum(y: &Tensor<f64>, r: &[f64]) -> f64 {
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Checks the backward pass of `net` against central differences of its
/// `f64` copy, for parameters and both inputs. The scalar objective is
/// `Σ r ⊙ y` for a random `r`.
pub fn check_network<T: Scalar>(
    net: &mut Network<T>,
    x: &Tensor<T>,
    aux: Option<&Tensor<T>>,
    mode: Mode,
    seed: u64,
) -> GradReport {
    let y = net.forward(x, aux, mode, 7).unwrap();
    let mut g = rng(seed ^ 0x5eed);
    let r64: Vec<f64> = (0..y.len()).map(|_| g.random_range(-1.0f32..1.0) as f64).collect();
    let r: Vec<T> = r64.iter().map(|v| T::c(*v)).collect();
    net.zero_grad();
    let grads = net.backward(&Tensor::from_vec(y.shape().to_vec(), r).unwrap()).unwrap();
    let analytic = net.flat_grads();

    let base: Network<f64> = net.cast();
    let x64: Tensor<f64> = x.cast();
    let aux64: Option<Tensor<f64>> = aux.map(|a| a.cast());
    let eval = |n: &mut Network<f64>, x: &Tensor<f64>, a: Option<&Tensor<f64>>| -> f64 {
        let y = n.forward(x, a, mode, 7).unwrap();
        weighted_sum(&y, &r64)
    };

    let mut report = Pairs::default();
    let params = base.flat_params();
    let mut work = base.clone();
    for i in 0..params.len() {
        let fd = central(|h| {
            let mut p = params.clone();
            p[i] += h;
            work.set_flat_params(&p).unwrap();
            eval(&mut work, &x64, aux64.as_ref())
        });
        report.add("param", i, analytic[i].f64(), fd);
    }
    work.set_flat_params(&params).unwrap();
    for i in 0..x.len() {
        let fd = central(|h| {
            let mut xp = x64.clone();
            xp.data_mut()[i] += h;
            eval(&mut work, &xp, aux64.as_ref())
        });
        report.add("input", i, grads.input.data()[i].f64(), fd);
    }
    if let (Some(a), Some(ga)) = (aux64.as_ref(), grads.aux.as_ref()) {
        for i in 0..a.len() {
            let fd = central(|h| {
                let mut ap = a.clone();
                ap.data_mut()[i] += h;
                eval(&mut work, &x64, Some(&ap))
            });
            report.add("aux", i, ga.data()[i].f64(), fd);
        }
    }
    report.report()
}

/// Builds a network and runs [`check_network`] on random inputs.
pub fn check_specs(input: &[usize], aux_width: usize, specs: &[LayerSpec], batch: usize, mode: Mode, seed: u64) -> GradReport {
    check_specs_as::<f32>(input, aux_width, specs, batch, mode, seed)
}

pub fn check_specs_as<T: Scalar>(
    input: &[usize],
    aux_width: usize,
    specs: &[LayerSpec],
    batch: usize,
    mode: Mode,
    seed: u64,
) -> GradReport {
    let mut net: Network<T> = Network::<f32>::build(input, aux_width, specs, seed).unwrap().cast();
    let mut g = rng(seed);
    let mut shape = vec![batch];
    shape.extend_from_slice(input);
    let x = random_tensor(&shape, &mut g).cast();
    let aux = (aux_width > 0).then(|| random_tensor(&[batch, aux_width], &mut g).cast());
    check_network(&mut net, &x, aux.as_ref(), mode, seed)
}

/// 8×8 synthetic world: land east of column 6, target at (4, 6), three
/// kernel terms up to lag 5.
pub fn small_synth(seed: u64, t_steps: usize) -> swellcast_core::synth::SynthConfig {
    use swellcast_core::synth::{KernelTerm, SynthConfig};
    use swellcast_core::{GridSpec, LatLon};
    let grid = GridSpec::new(40.0, -40.0, 1.0, 1.0, 8, 8).unwrap();
    let t = |ilat, ilon, lag, weight| KernelTerm { ilat, ilon, lag, weight };
    SynthConfig {
        grid,
        t_steps,
        storms: t_steps / 10,
        kernel: vec![t(4, 4, 1, 0.002), t(2, 2, 3, 0.002), t(6, 1, 5, 0.002)],
        seed,
        land_from_col: Some(7),
        target: LatLon::new(grid.lat(4), grid.lon(6)),
        ..SynthConfig::default()
    }
}

pub fn dataset(cfg: &swellcast_core::synth::SynthConfig) -> (swellcast_core::synth::SynthOutput, swellcast_core::Dataset) {
    use swellcast_core::features::FeatureOptions;
    let out = swellcast_core::synth::generate(cfg).unwrap();
    let fs = swellcast_core::FeatureSet::build(&out.wind, &out.mask, cfg.target, &FeatureOptions::default()).unwrap();
    let ds = swellcast_core::Dataset::join(&fs, &out.hs).unwrap();
    (out, ds)
}

pub fn small_arch() -> swellcast_core::model::ArchConfig {
    swellcast_core::model::ArchConfig {
        conv_channels: vec![4, 8],
        dense1: 16,
        dropout1: 0.0,
        lstm_units: 8,
        dense2: 8,
        dropout2: 0.0,
    }
}
