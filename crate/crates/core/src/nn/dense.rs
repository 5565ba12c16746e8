use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layer::{glorot_uniform, missing_cache, Ctx, Layer, Param};
use crate::nn::linalg::{add_column_sums, add_row_bias, gemm};
use crate::nn::Tensor;

/// `y = xW + b` over `[batch × in]` inputs.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (fan_in, fan_out) = match *w.shape() {
        [i, o] => (i, o),
        _ => return Err(Error::domain(format!("dense: weight shape {:?}", w.shape()))),
    };
    if b.shape() != [fan_out] {
        return Err(Error::domain(format!(
            "dense: bias shape {:?}, expected [{fan_out}]",
            b.shape()
        )));
    }
    x.expect_last_dim(fan_in, "dense")?;
    let rows = x.outer_len();
    let mut out = vec![0.0; rows * fan_out];
    gemm(rows, fan_in, fan_out, x.data(), false, w.data(), false, &mut out, false);
    add_row_bias(&mut out, b.data());
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = fan_out;
    Tensor::from_vec(&shape, out)
}

/// Affine layer over the last axis.
///
/// Applied to `[B, T, F]` inputs it is the time-distributed dense layer: one
/// shared map at every timestep.
pub struct Dense {
    pub w: Param,
    pub b: Param,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Param::new(glorot_uniform(fan_in, fan_out, rng)),
            b: Param::zeros(&[fan_out]),
            input: None,
        }
    }

    pub fn from_params(w: Tensor, b: Tensor) -> Self {
        Self {
            w: Param::new(w),
            b: Param::new(b),
            input: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn count(fan_in: usize, fan_out: usize) -> usize {
        fan_in * fan_out + fan_out
    }
}

impl Layer for Dense {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn forward(&mut self, x: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let y = dense_forward(x, &self.w.value, &self.b.value)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("dense"))?;
        let (fan_in, fan_out) = (self.fan_in(), self.fan_out());
        grad.expect_last_dim(fan_out, "dense backward")?;
        let rows = x.outer_len();
        gemm(fan_in, rows, fan_out, x.data(), true, grad.data(), false, self.w.grad.data_mut(), true);
        add_column_sums(grad.data(), fan_out, self.b.grad.data_mut());
        let mut dx = vec![0.0; rows * fan_in];
        gemm(rows, fan_out, fan_in, grad.data(), false, self.w.value.data(), true, &mut dx, false);
        Tensor::from_vec(x.shape(), dx)
    }

    fn params(&self) -> Vec<(String, &Param)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![("w".into(), &mut self.w), ("b".into(), &mut self.b)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_hand_example() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = dense_forward(&x, &eye, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
        let b = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(dense_forward(&x, &eye, &b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn shape_mismatch() {
        let x = Tensor::zeros(&[1, 3]);
        assert!(dense_forward(&x, &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2])).is_err());
        assert!(dense_forward(&Tensor::zeros(&[1, 2]), &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn time_distributed_equals_per_step_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut layer = Dense::new(5, 3, &mut rng);
        layer.b.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let x = Tensor::from_vec(&[2, 4, 5], (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut ctx = Ctx::new(crate::nn::Mode::Infer, &mut rng);
        let y = layer.forward(&x, &mut ctx).unwrap();
        assert_eq!(y.shape(), &[2, 4, 3]);
        for r in 0..8 {
            let step = Tensor::from_vec(&[1, 5], x.data()[r * 5..r * 5 + 5].to_vec()).unwrap();
            let ys = dense_forward(&step, &layer.w.value, &layer.b.value).unwrap();
            assert_eq!(&y.data()[r * 3..r * 3 + 3], ys.data());
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(Dense::count(192, 64), 12352);
        assert_eq!(Dense::count(64, 2), 130);
    }
}
