//! Minimal reverse-mode network core.
//!
//! Only the layer kinds the two-stage model needs are supported: 3×3 "same"
//! convolution, ReLU, 2×2 max pooling, batch normalisation, flatten, dense,
//! inverted dropout, a final-state LSTM and concatenation with an auxiliary
//! input. Networks are sequential; the auxiliary input enters at the
//! `Concat` layer.
//!
//! Everything is generic over [`Scalar`] so gradient checks can run in `f64`
//! against the same code path that trains in `f32`.

mod adam;
mod checkpoint;
mod gemm;
mod layers;
mod loss;
mod lstm;
mod network;
mod tensor;

pub use adam::{adam_update, Adam, AdamConfig};
pub use checkpoint::{Checkpoint, WCKP_MAGIC, WCKP_VERSION};
pub use layers::{Layer, LayerSpec};
pub use loss::{mse_stage1, mse_stage2};
pub use lstm::{lstm_sequence, LstmParams};
pub use network::{InputGrads, Network};
pub use tensor::{Param, Tensor};

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of tensors and parameters.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant")
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `c = a·b + beta·c` through the matching `matrixmultiply` kernel.
    ///
    /// # Safety
    /// Every strided index of `a` (`m × k`), `b` (`k × n`) and `c`
    /// (`m × n`, row stride `rsc`) must be in bounds.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
    );
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, 1);
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, 1);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batchnorm, active dropout, activations cached.
    Train,
    /// Running statistics, dropout is the identity.
    Eval,
}
