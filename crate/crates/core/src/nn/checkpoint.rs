use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layers::Layer;
use super::lstm::LstmParams;
use super::{Adam, AdamConfig, Network, Param, Tensor};
use crate::error::{Error, Result};
use crate::io::{LeReader, LeWriter};

pub const WCKP_MAGIC: &[u8; 4] = b"WCKP";
pub const WCKP_VERSION: u32 = 1;

const FMT: &str = "WCKP1";

const TAG_CONV: u8 = 0;
const TAG_RELU: u8 = 1;
const TAG_POOL: u8 = 2;
const TAG_BN: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_DENSE: u8 = 5;
const TAG_DROPOUT: u8 = 6;
const TAG_LSTM: u8 = 7;
const TAG_CONCAT: u8 = 8;

/// A trained network with everything needed to resume or reproduce it.
///
/// Layout (little-endian): `"WCKP"`, u32 version, u32-length config echo,
/// network input shape and aux width, u32 layer count, then per layer a u8
/// kind tag, its hyperparameters and parameter tensors (batchnorm running
/// statistics follow gamma and beta). After the layers: Adam state (u8
/// presence flag), the u64 seed and a list of named extra tensors.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Flat `key=value` text.
    pub config: String,
    pub network: Network<f32>,
    pub adam: Option<Adam<f32>>,
    pub seed: u64,
    /// Named side tensors such as standardisation statistics.
    pub extras: Vec<(String, Tensor<f32>)>,
}

fn write_tensor<W: Write>(w: &mut LeWriter<W>, t: &Tensor<f32>) -> Result<()> {
    w.usize32(t.shape().len(), FMT)?;
    for d in t.shape() {
        w.usize32(*d, FMT)?;
    }
    w.f32_slice(t.data())
}

fn read_tensor<R: Read>(r: &mut LeReader<R>) -> Result<Tensor<f32>> {
    let ndim = r.u32()? as usize;
    if ndim > 8 {
        return Err(r.fail(format!("tensor rank {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(r.u32()? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |a, d| a.checked_mul(*d))
        .filter(|n| *n <= 1 << 30)
        .ok_or_else(|| r.fail("tensor too large"))?;
    let data = r.f32_vec(n)?;
    Tensor::from_vec(shape, data)
}

fn read_param<R: Read>(r: &mut LeReader<R>) -> Result<Param<f32>> {
    Ok(Param::new(read_tensor(r)?))
}

fn write_str<W: Write>(w: &mut LeWriter<W>, s: &str) -> Result<()> {
    w.usize32(s.len(), FMT)?;
    w.bytes(s.as_bytes())
}

fn read_str<R: Read>(r: &mut LeReader<R>) -> Result<String> {
    let n = r.u32()? as usize;
    let b = r.bytes(n)?;
    String::from_utf8(b).map_err(|_| r.fail("string is not UTF-8"))
}

fn count<R: Read>(r: &mut LeReader<R>, max: usize, what: &str) -> Result<usize> {
    let n = r.u32()? as usize;
    if n > max {
        return Err(r.fail(format!("{what} count {n}")));
    }
    Ok(n)
}

impl Checkpoint {
    pub fn new(config: String, network: Network<f32>, seed: u64) -> Self {
        Self {
            config,
            network,
            adam: None,
            seed,
            extras: Vec::new(),
        }
    }

    pub fn extra(&self, name: &str) -> Option<&Tensor<f32>> {
        self.extras.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn set_extra(&mut self, name: &str, t: Tensor<f32>) {
        match self.extras.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = t,
            None => self.extras.push((name.to_string(), t)),
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = LeWriter::new(w);
        w.bytes(WCKP_MAGIC)?;
        w.u32(WCKP_VERSION)?;
        write_str(&mut w, &self.config)?;
        let net = &self.network;
        w.usize32(net.input_shape().len(), FMT)?;
        for d in net.input_shape() {
            w.usize32(*d, FMT)?;
        }
        w.usize32(net.aux_width(), FMT)?;
        w.usize32(net.layers().len(), FMT)?;
        for layer in net.layers() {
            match layer {
                Layer::Conv3x3 { in_ch, out_ch, weight, bias } => {
                    w.u8(TAG_CONV)?;
                    w.usize32(*in_ch, FMT)?;
                    w.usize32(*out_ch, FMT)?;
                    write_tensor(&mut w, &weight.value)?;
                    write_tensor(&mut w, &bias.value)?;
                }
                Layer::Relu => w.u8(TAG_RELU)?,
                Layer::MaxPool2x2 => w.u8(TAG_POOL)?,
                Layer::BatchNorm { width, gamma, beta, running_mean, running_var, eps, momentum } => {
                    w.u8(TAG_BN)?;
                    w.usize32(*width, FMT)?;
                    w.f64(*eps)?;
                    w.f64(*momentum)?;
                    write_tensor(&mut w, &gamma.value)?;
                    write_tensor(&mut w, &beta.value)?;
                    write_tensor(&mut w, &Tensor::from_vec(vec![*width], running_mean.clone())?)?;
                    write_tensor(&mut w, &Tensor::from_vec(vec![*width], running_var.clone())?)?;
                }
                Layer::Flatten => w.u8(TAG_FLATTEN)?,
                Layer::Dense { input, units, weight, bias } => {
                    w.u8(TAG_DENSE)?;
                    w.usize32(*input, FMT)?;
                    w.usize32(*units, FMT)?;
                    write_tensor(&mut w, &weight.value)?;
                    write_tensor(&mut w, &bias.value)?;
                }
                Layer::Dropout { rate } => {
                    w.u8(TAG_DROPOUT)?;
                    w.f64(*rate)?;
                }
                Layer::Lstm(p) => {
                    w.u8(TAG_LSTM)?;
                    w.usize32(p.input, FMT)?;
                    w.usize32(p.hidden, FMT)?;
                    write_tensor(&mut w, &p.w_x.value)?;
                    write_tensor(&mut w, &p.w_h.value)?;
                    write_tensor(&mut w, &p.bias.value)?;
                }
                Layer::Concat { width } => {
                    w.u8(TAG_CONCAT)?;
                    w.usize32(*width, FMT)?;
                }
            }
        }
        match &self.adam {
            None => w.u8(0)?,
            Some(a) => {
                w.u8(1)?;
                w.u64(a.step)?;
                w.f64(a.config.lr)?;
                w.f64(a.config.beta1)?;
                w.f64(a.config.beta2)?;
                w.f64(a.config.eps)?;
                w.usize32(a.m.len(), FMT)?;
                for (m, v) in a.m.iter().zip(&a.v) {
                    w.usize32(m.len(), FMT)?;
                    w.f32_slice(m)?;
                    w.f32_slice(v)?;
                }
            }
        }
        w.u64(self.seed)?;
        w.usize32(self.extras.len(), FMT)?;
        for (name, t) in &self.extras {
            write_str(&mut w, name)?;
            write_tensor(&mut w, t)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = LeReader::new(r, FMT);
        let magic: [u8; 4] = r.array()?;
        if &magic != WCKP_MAGIC {
            return Err(r.fail("bad magic"));
        }
        let version = r.u32()?;
        if version != WCKP_VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let config = read_str(&mut r)?;
        let ndim = count(&mut r, 8, "input rank")?;
        let mut input_shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            input_shape.push(r.u32()? as usize);
        }
        let aux_width = r.u32()? as usize;
        let n_layers = count(&mut r, 1024, "layer")?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let tag = r.u8()?;
            let layer = match tag {
                TAG_CONV => Layer::Conv3x3 {
                    in_ch: r.u32()? as usize,
                    out_ch: r.u32()? as usize,
                    weight: read_param(&mut r)?,
                    bias: read_param(&mut r)?,
                },
                TAG_RELU => Layer::Relu,
                TAG_POOL => Layer::MaxPool2x2,
                TAG_BN => {
                    let width = r.u32()? as usize;
                    let eps = r.f64()?;
                    let momentum = r.f64()?;
                    let gamma = read_param(&mut r)?;
                    let beta = read_param(&mut r)?;
                    let running_mean = read_tensor(&mut r)?.into_data();
                    let running_var = read_tensor(&mut r)?.into_data();
                    if running_mean.len() != width || running_var.len() != width {
                        return Err(r.fail("batchnorm running stats width"));
                    }
                    Layer::BatchNorm { width, gamma, beta, running_mean, running_var, eps, momentum }
                }
                TAG_FLATTEN => Layer::Flatten,
                TAG_DENSE => Layer::Dense {
                    input: r.u32()? as usize,
                    units: r.u32()? as usize,
                    weight: read_param(&mut r)?,
                    bias: read_param(&mut r)?,
                },
                TAG_DROPOUT => Layer::Dropout { rate: r.f64()? },
                TAG_LSTM => Layer::Lstm(LstmParams {
                    input: r.u32()? as usize,
                    hidden: r.u32()? as usize,
                    w_x: read_param(&mut r)?,
                    w_h: read_param(&mut r)?,
                    bias: read_param(&mut r)?,
                }),
                TAG_CONCAT => Layer::Concat { width: r.u32()? as usize },
                other => return Err(r.fail(format!("unknown layer tag {other}"))),
            };
            layers.push(layer);
        }
        let network = Network::from_layers(&input_shape, aux_width, layers).map_err(|e| match e {
            Error::ShapeMismatch { layer, .. } => Error::format(FMT, format!("layer {layer} does not fit the network")),
            other => other,
        })?;
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let config = AdamConfig {
                    lr: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    eps: r.f64()?,
                };
                let n = count(&mut r, 4096, "adam buffer")?;
                let sizes: Vec<usize> = network.params().iter().map(|p| p.value.len()).collect();
                if n != sizes.len() {
                    return Err(r.fail("adam buffers do not match parameters"));
                }
                let (mut m, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
                for size in sizes {
                    let len = r.u32()? as usize;
                    if len != size {
                        return Err(r.fail("adam buffer length"));
                    }
                    m.push(r.f32_vec(len)?);
                    v.push(r.f32_vec(len)?);
                }
                Some(Adam { config, step, m, v })
            }
            other => return Err(r.fail(format!("adam flag {other}"))),
        };
        let seed = r.u64()?;
        let n_extra = count(&mut r, 1024, "extra tensor")?;
        let mut extras = Vec::with_capacity(n_extra);
        for _ in 0..n_extra {
            let name = read_str(&mut r)?;
            extras.push((name, read_tensor(&mut r)?));
        }
        r.expect_eof()?;
        Ok(Self {
            config,
            network,
            adam,
            seed,
            extras,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Mode};

    fn net() -> Network<f32> {
        Network::build(
            &[1, 4, 4],
            3,
            &[
                LayerSpec::Conv3x3 { channels: 2 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2x2,
                LayerSpec::BatchNorm,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 4 },
                LayerSpec::Dropout { rate: 0.2 },
                LayerSpec::Concat,
                LayerSpec::Dense { units: 2 },
            ],
            11,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let mut n = net();
        let x = Tensor::from_vec(vec![2, 1, 4, 4], (0..32).map(|i| (i as f32).cos()).collect()).unwrap();
        let a = Tensor::from_vec(vec![2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let y = n.forward(&x, Some(&a), Mode::Train, 5).unwrap();
        n.backward(&Tensor::filled(y.shape().to_vec(), 1.0)).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &n);
        adam.step(&mut n);
        let mut ck = Checkpoint::new("a=1\nb=x\n".into(), n, 42);
        ck.adam = Some(adam);
        ck.set_extra("mean", Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.config, ck.config);
        assert_eq!(back.seed, 42);
        assert_eq!(back.adam, ck.adam);
        assert_eq!(back.network.layers(), ck.network.layers().iter().map(|l| {
            let mut l = l.clone();
            for p in l.params_mut() {
                p.grad.data_mut().fill(0.0);
            }
            l
        }).collect::<Vec<_>>().as_slice());
        assert_eq!(
            back.network.infer(&x, Some(&a)).unwrap(),
            ck.network.infer(&x, Some(&a)).unwrap()
        );
        assert_eq!(&bytes[..8], b"WCKP\x01\0\0\0");
    }

    #[test]
    fn truncation_and_bad_tag_rejected() {
        let bytes = Checkpoint::new(String::new(), net(), 0).to_bytes().unwrap();
        for cut in [3, 8, 20, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::read_from(&bytes[..cut]),
                Err(Error::Format { .. })
            ));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::read_from(extra.as_slice()).is_err());
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(Checkpoint::read_from(bad.as_slice()).is_err());
    }
}
