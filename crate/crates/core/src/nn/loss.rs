use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Mean squared error over every horizon and sample of `[N, H]`
/// predictions. Returns the loss and its gradient.
pub fn mse_stage1<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    mse(pred, target)
}

/// Mean squared error of `[N, 1]` scalar predictions.
pub fn mse_stage2<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape().len() != 2 || pred.shape()[1] != 1 {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![pred.batch(), 1],
            got: pred.shape().to_vec(),
        });
    }
    mse(pred, target)
}

fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.batch() == 0 || pred.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: pred.shape().to_vec(),
            got: target.shape().to_vec(),
        });
    }
    let n = T::c(pred.len() as f64);
    let two = T::c(2.0);
    // accumulate in f64 so f32 losses stay exact to rounding
    let mut loss = 0.0f64;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.data().iter().zip(target.data()) {
        let d = *p - *t;
        let d64 = p.f64() - t.f64();
        loss += d64 * d64;
        grad.push(two * d / n);
    }
    Ok((T::c(loss / pred.len() as f64), Tensor::from_vec(pred.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_offset_gives_square() {
        let t = Tensor::from_vec(vec![3, 4], (0..12).map(|i| i as f64 * 0.3).collect()).unwrap();
        let p = Tensor::from_vec(vec![3, 4], t.data().iter().map(|v| v + 0.7).collect()).unwrap();
        let (l, g) = mse_stage1(&p, &t).unwrap();
        assert!((l - 0.49).abs() < 1e-12);
        assert!(g.data().iter().all(|v| (v - 1.4 / 12.0).abs() < 1e-12));
    }

    #[test]
    fn empty_and_mismatch() {
        let e = Tensor::<f32>::zeros(vec![0, 3]);
        assert!(matches!(mse_stage1(&e, &e), Err(Error::EmptyBatch)));
        let a = Tensor::<f32>::zeros(vec![2, 3]);
        let b = Tensor::<f32>::zeros(vec![2, 2]);
        assert!(matches!(mse_stage1(&a, &b), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(mse_stage2(&a, &a), Err(Error::ShapeMismatch { .. })));
    }
}
