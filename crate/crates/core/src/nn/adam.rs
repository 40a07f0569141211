use super::{Network, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update; `step` is 1-based.
pub fn adam_update<T: Scalar>(values: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], step: u64, cfg: &AdamConfig) {
    let (b1, b2) = (T::c(cfg.beta1), T::c(cfg.beta2));
    let c1 = T::c(1.0 - cfg.beta1.powi(step as i32));
    let c2 = T::c(1.0 - cfg.beta2.powi(step as i32));
    let (lr, eps) = (T::c(cfg.lr), T::c(cfg.eps));
    for i in 0..values.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        values[i] = values[i] - lr * mh / (vh.sqrt() + eps);
    }
}

/// Adam state for every parameter of a network, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<U: Scalar>(config: AdamConfig, net: &Network<U>) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|p| p.value.len()).collect();
        Self {
            config,
            step: 0,
            m: sizes.iter().map(|n| vec![T::zero(); *n]).collect(),
            v: sizes.iter().map(|n| vec![T::zero(); *n]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut Network<T>) {
        self.step += 1;
        let (step, cfg) = (self.step, self.config);
        for ((p, m), v) in net.params_mut().into_iter().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.data().to_vec();
            adam_update(p.value.data_mut(), &grad, m, v, step, &cfg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let cfg = AdamConfig::default();
        let mut x = vec![1.0f64, -2.0, 0.5];
        let g = vec![3.0, -0.01, 0.0];
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        adam_update(&mut x, &g, &mut m, &mut v, 1, &cfg);
        assert!((x[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((x[1] - (-2.0 + 1e-3)).abs() < 1e-6);
        assert_eq!(x[2], 0.5);
    }

    #[test]
    fn two_steps_match_hand_computation() {
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut x = vec![0.0f64];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        adam_update(&mut x, &[1.0], &mut m, &mut v, 1, &cfg);
        adam_update(&mut x, &[2.0], &mut m, &mut v, 2, &cfg);
        let x1 = -0.1 * 1.0 / (1.0 + 1e-8);
        let m2: f64 = 0.9 * 0.1 + 0.1 * 2.0;
        let v2: f64 = 0.999 * 0.001 + 0.001 * 4.0;
        let mh = m2 / (1.0 - 0.81);
        let vh = v2 / (1.0 - 0.999f64.powi(2));
        let want = x1 - 0.1 * mh / (vh.sqrt() + 1e-8);
        assert!((x[0] - want).abs() < 1e-12);
    }
}
