use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, LayerCache, LayerSpec};
use super::{Mode, Param, Scalar, Tensor};
use crate::error::{Error, Result};

/// Sequential network with an optional auxiliary input joined at `Concat`.
#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    input_shape: Vec<usize>,
    aux_width: usize,
    layers: Vec<Layer<T>>,
    /// Per-sample output shape of every layer.
    shapes: Vec<Vec<usize>>,
    cache: Option<Vec<LayerCache<T>>>,
}

/// Gradients with respect to the network inputs.
#[derive(Debug, Clone)]
pub struct InputGrads<T = f32> {
    pub input: Tensor<T>,
    pub aux: Option<Tensor<T>>,
}

fn layer_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl<T: Scalar> Network<T> {
    /// Builds a network for per-sample input shape `input_shape`. Weights
    /// are drawn from a ChaCha stream seeded with `seed`.
    pub fn build(input_shape: &[usize], aux_width: usize, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = Vec::with_capacity(specs.len());
        let concats = specs.iter().filter(|s| **s == LayerSpec::Concat).count();
        if concats > 1 || (concats == 0 && aux_width > 0) {
            return Err(Error::config("layers", "aux input needs exactly one concat layer"));
        }
        for (i, spec) in specs.iter().enumerate() {
            let (layer, out) = Layer::build(spec, i, &shape, aux_width, &mut rng)?;
            layers.push(layer);
            shapes.push(out.clone());
            shape = out;
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            aux_width,
            layers,
            shapes,
            cache: None,
        })
    }

    /// Rebuilds from explicit layers; used when loading checkpoints.
    pub fn from_layers(input_shape: &[usize], aux_width: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        let mut net = Self::build(input_shape, aux_width, &specs, 0)?;
        for (i, (have, want)) in layers.iter().zip(&net.layers).enumerate() {
            let ok = have.params().len() == want.params().len()
                && have
                    .params()
                    .iter()
                    .zip(want.params())
                    .all(|(a, b)| a.value.shape() == b.value.shape());
            if !ok {
                let got = have.params().first().map(|p| p.value.shape().to_vec()).unwrap_or_default();
                let expected = want.params().first().map(|p| p.value.shape().to_vec()).unwrap_or_default();
                return Err(Error::ShapeMismatch { layer: i, expected, got });
            }
        }
        net.layers = layers;
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn aux_width(&self) -> usize {
        self.aux_width
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map(Vec::as_slice).unwrap_or(&self.input_shape)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            aux_width: self.aux_width,
            layers: self.layers.iter().map(Layer::cast).collect(),
            shapes: self.shapes.clone(),
            cache: None,
        }
    }

    fn check_inputs(&self, x: &Tensor<T>, aux: Option<&Tensor<T>>) -> Result<()> {
        if x.batch() == 0 {
            return Err(Error::EmptyBatch);
        }
        if &x.shape()[1..] != self.input_shape.as_slice() {
            let mut expected = vec![x.batch()];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected,
                got: x.shape().to_vec(),
            });
        }
        if self.aux_width > 0 {
            let expected = vec![x.batch(), self.aux_width];
            match aux {
                Some(a) if a.shape() == expected.as_slice() => {}
                other => {
                    return Err(Error::ShapeMismatch {
                        layer: self.concat_index().unwrap_or(0),
                        expected,
                        got: other.map(|a| a.shape().to_vec()).unwrap_or_default(),
                    })
                }
            }
        }
        Ok(())
    }

    fn concat_index(&self) -> Option<usize> {
        self.layers.iter().position(|l| matches!(l, Layer::Concat { .. }))
    }

    /// Batch forward pass, caching activations for [`Network::backward`].
    /// In `Train` mode batchnorm running statistics are updated; `seed`
    /// drives dropout masks.
    pub fn forward(&mut self, x: &Tensor<T>, aux: Option<&Tensor<T>>, mode: Mode, seed: u64) -> Result<Tensor<T>> {
        self.check_inputs(x, aux)?;
        let train = mode == Mode::Train;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let (out, cache) = layer.forward(&cur, aux, train, layer_seed(seed, i))?;
            if train {
                if let (
                    Layer::BatchNorm {
                        running_mean,
                        running_var,
                        momentum,
                        ..
                    },
                    LayerCache::BatchNorm { mean, var, .. },
                ) = (&mut *layer, &cache)
                {
                    let m = T::c(*momentum);
                    let k = T::one() - m;
                    for (r, b) in running_mean.iter_mut().zip(mean) {
                        *r = m * *r + k * *b;
                    }
                    for (r, b) in running_var.iter_mut().zip(var) {
                        *r = m * *r + k * *b;
                    }
                }
            }
            caches.push(cache);
            cur = out;
        }
        self.cache = Some(caches);
        Ok(cur)
    }

    /// Eval-mode forward that leaves the network untouched.
    pub fn infer(&self, x: &Tensor<T>, aux: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        self.check_inputs(x, aux)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur, aux, false, 0)?.0;
        }
        Ok(cur)
    }

    /// Backpropagates `grad_out` through the last forward pass.
    /// Parameter gradients are overwritten, not accumulated. The cache is
    /// consumed.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<InputGrads<T>> {
        let caches = self.cache.take().ok_or(Error::NoCache)?;
        let mut g = grad_out.clone();
        let mut aux_grad = None;
        for (layer, cache) in self.layers.iter_mut().zip(&caches).rev() {
            let (gi, ga) = layer.backward(cache, &g)?;
            if ga.is_some() {
                aux_grad = ga;
            }
            g = gi;
        }
        Ok(InputGrads { input: g, aux: aux_grad })
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.data_mut().fill(T::zero());
        }
    }

    /// Parameter values flattened in layer order.
    pub fn flat_params(&self) -> Vec<T> {
        self.params().iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<T> {
        self.params().iter().flat_map(|p| p.grad.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[T]) -> Result<()> {
        let n = self.n_params();
        if values.len() != n {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: vec![n],
                got: vec![values.len()],
            });
        }
        let mut off = 0;
        for p in self.params_mut() {
            let len = p.value.len();
            p.value.data_mut().copy_from_slice(&values[off..off + len]);
            off += len;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv3x3 { channels: 2 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::MaxPool2x2,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 5 },
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Concat,
            LayerSpec::Dense { units: 3 },
        ]
    }

    #[test]
    fn shapes_are_inferred() {
        let net = Network::<f32>::build(&[1, 5, 6], 2, &specs(), 1).unwrap();
        assert_eq!(net.output_shape(), &[3]);
        assert_eq!(net.shapes[3], vec![2, 2, 3]);
        assert_eq!(net.shapes[7], vec![7]);
    }

    #[test]
    fn backward_without_forward_is_no_cache() {
        let mut net = Network::<f32>::build(&[1, 4, 4], 2, &specs(), 1).unwrap();
        let g = Tensor::zeros(vec![1, 3]);
        assert!(matches!(net.backward(&g), Err(Error::NoCache)));
        let x = Tensor::zeros(vec![1, 1, 4, 4]);
        let a = Tensor::zeros(vec![1, 2]);
        net.forward(&x, Some(&a), Mode::Eval, 0).unwrap();
        assert!(net.backward(&g).is_ok());
        assert!(matches!(net.backward(&g), Err(Error::NoCache)));
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let mut net = Network::<f32>::build(&[1, 4, 4], 2, &specs(), 1).unwrap();
        let x = Tensor::zeros(vec![2, 1, 4, 5]);
        let a = Tensor::zeros(vec![2, 2]);
        assert!(matches!(
            net.forward(&x, Some(&a), Mode::Eval, 0),
            Err(Error::ShapeMismatch { .. })
        ));
        let x = Tensor::zeros(vec![2, 1, 4, 4]);
        assert!(matches!(net.infer(&x, None), Err(Error::ShapeMismatch { .. })));
        let x = Tensor::zeros(vec![0, 1, 4, 4]);
        assert!(matches!(net.infer(&x, Some(&a)), Err(Error::EmptyBatch)));
    }

    #[test]
    fn aux_requires_concat() {
        let s = vec![LayerSpec::Flatten, LayerSpec::Dense { units: 1 }];
        assert!(Network::<f32>::build(&[3], 2, &s, 0).is_err());
        assert!(Network::<f32>::build(&[3], 0, &s, 0).is_ok());
    }

    #[test]
    fn build_is_seeded() {
        let a = Network::<f32>::build(&[1, 4, 4], 2, &specs(), 7).unwrap();
        let b = Network::<f32>::build(&[1, 4, 4], 2, &specs(), 7).unwrap();
        let c = Network::<f32>::build(&[1, 4, 4], 2, &specs(), 8).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        assert_ne!(a.flat_params(), c.flat_params());
    }
}
