use crate::error::{Error, Result};
use crate::nn::layer::{missing_cache, Ctx, Layer, Mode, Param};
use crate::nn::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
}

/// Batch normalization over all leading axes (`batch·time` rows per feature).
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    cache: Option<BnCache>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::filled(&[features], 1.0)),
            beta: Param::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }
}

impl Layer for BatchNorm {
    fn kind(&self) -> &'static str {
        "batchnorm"
    }

    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let f = self.features();
        x.expect_last_dim(f, "batchnorm")?;
        let rows = x.outer_len();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut y = x.clone();

        match ctx.mode {
            Mode::Infer => {
                let mean = self.running_mean.data();
                let var = self.running_var.data();
                for row in y.data_mut().chunks_exact_mut(f) {
                    for j in 0..f {
                        row[j] = gamma[j] * (row[j] - mean[j]) / (var[j] + BN_EPS).sqrt() + beta[j];
                    }
                }
                self.cache = None;
            }
            Mode::Train => {
                if rows < 2 {
                    return Err(Error::domain(
                        "batchnorm: training mode needs at least 2 rows (batch·time)",
                    ));
                }
                let mut mean = vec![0.0; f];
                for row in x.data().chunks_exact(f) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; f];
                for row in x.data().chunks_exact(f) {
                    for j in 0..f {
                        let d = row[j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

                let mut xhat = vec![0.0; x.len()];
                for (yrow, (xrow, hrow)) in y
                    .data_mut()
                    .chunks_exact_mut(f)
                    .zip(x.data().chunks_exact(f).zip(xhat.chunks_exact_mut(f)))
                {
                    for j in 0..f {
                        hrow[j] = (xrow[j] - mean[j]) * inv_std[j];
                        yrow[j] = gamma[j] * hrow[j] + beta[j];
                    }
                }
                for j in 0..f {
                    let rm = &mut self.running_mean.data_mut()[j];
                    *rm = BN_MOMENTUM * *rm + (1.0 - BN_MOMENTUM) * mean[j];
                    let rv = &mut self.running_var.data_mut()[j];
                    *rv = BN_MOMENTUM * *rv + (1.0 - BN_MOMENTUM) * var[j];
                }
                self.cache = Some(BnCache {
                    xhat,
                    inv_std,
                    shape: x.shape().to_vec(),
                });
            }
        }
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let c = self.cache.as_ref().ok_or_else(|| missing_cache("batchnorm (train mode)"))?;
        if grad.shape() != c.shape.as_slice() {
            return Err(Error::domain("batchnorm backward: shape mismatch"));
        }
        let f = self.features();
        let rows = grad.outer_len() as f64;
        let gamma = self.gamma.value.data().to_vec();
        let mut sum_g = vec![0.0; f];
        let mut sum_gx = vec![0.0; f];
        for (g, h) in grad.data().chunks_exact(f).zip(c.xhat.chunks_exact(f)) {
            for j in 0..f {
                sum_g[j] += g[j];
                sum_gx[j] += g[j] * h[j];
            }
        }
        for j in 0..f {
            self.beta.grad.data_mut()[j] += sum_g[j];
            self.gamma.grad.data_mut()[j] += sum_gx[j];
        }
        let mut dx = vec![0.0; grad.len()];
        for ((d, g), h) in dx
            .chunks_exact_mut(f)
            .zip(grad.data().chunks_exact(f))
            .zip(c.xhat.chunks_exact(f))
        {
            for j in 0..f {
                d[j] = gamma[j] * c.inv_std[j] / rows * (rows * g[j] - sum_g[j] - h[j] * sum_gx[j]);
            }
        }
        Tensor::from_vec(&c.shape, dx)
    }

    fn params(&self) -> Vec<(String, &Param)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }

    fn buffers(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("running_mean".into(), &self.running_mean),
            ("running_var".into(), &self.running_var),
        ]
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("running_mean".into(), &mut self.running_mean),
            ("running_var".into(), &mut self.running_var),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-3.0..5.0)).collect()).unwrap()
    }

    fn column_moments(y: &Tensor) -> Vec<(f64, f64)> {
        let f = y.last_dim();
        let n = y.outer_len() as f64;
        (0..f)
            .map(|j| {
                let col: Vec<f64> = y.data().chunks_exact(f).map(|r| r[j]).collect();
                let m = col.iter().sum::<f64>() / n;
                let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
                (m, v)
            })
            .collect()
    }

    #[test]
    fn train_mode_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[4, 15, 6], &mut rng);
        let mut bn = BatchNorm::new(6);
        let mut ctx = Ctx::new(Mode::Train, &mut rng);
        let y = bn.forward(&x, &mut ctx).unwrap();
        for (m, v) in column_moments(&y) {
            assert!(m.abs() < 1e-6);
            // ε shrinks the variance slightly below 1.
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn beta_shifts_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[3, 5, 2], &mut rng);
        let mut bn = BatchNorm::new(2);
        bn.beta.value.fill(5.0);
        let mut ctx = Ctx::new(Mode::Train, &mut rng);
        let y = bn.forward(&x, &mut ctx).unwrap();
        for (m, _) in column_moments(&y) {
            assert!((m - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn singleton_batch_rejected_in_train_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut bn = BatchNorm::new(3);
        let x = Tensor::zeros(&[1, 3]);
        assert!(bn.forward(&x, &mut Ctx::new(Mode::Train, &mut rng)).is_err());
        assert!(bn.forward(&x, &mut Ctx::new(Mode::Infer, &mut rng)).is_ok());
    }

    #[test]
    fn running_stats_update_with_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut bn = BatchNorm::new(1);
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 3.0]).unwrap();
        bn.forward(&x, &mut Ctx::new(Mode::Train, &mut rng)).unwrap();
        assert!((bn.running_mean.data()[0] - 0.2).abs() < 1e-15);
        assert!((bn.running_var.data()[0] - (0.9 + 0.1 * 1.0)).abs() < 1e-15);
    }
}
