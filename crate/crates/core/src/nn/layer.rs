use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-call forward state: the mode and the RNG used by dropout.
pub struct Ctx<'a> {
    pub mode: Mode,
    pub rng: &'a mut ChaCha8Rng,
}

impl<'a> Ctx<'a> {
    pub fn new(mode: Mode, rng: &'a mut ChaCha8Rng) -> Self {
        Self { mode, rng }
    }

    pub fn reborrow(&mut self) -> Ctx<'_> {
        Ctx {
            mode: self.mode,
            rng: self.rng,
        }
    }
}

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// A differentiable layer with an explicit backward pass.
///
/// `forward` caches whatever `backward` needs; `backward` consumes the cache of
/// the most recent forward, accumulates parameter gradients and returns the
/// gradient with respect to the input.
pub trait Layer: Send + Sync {
    fn kind(&self) -> &'static str;

    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor>;

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor>;

    fn params(&self) -> Vec<(String, &Param)> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        Vec::new()
    }

    /// Non-trainable state persisted in checkpoints (e.g. running statistics).
    fn buffers(&self) -> Vec<(String, &Tensor)> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        Vec::new()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.fill(0.0);
        }
    }
}

pub(crate) fn missing_cache(kind: &str) -> Error {
    Error::domain(format!("{kind}: backward called without a preceding forward"))
}

/// Glorot/Xavier uniform `[fan_in × fan_out]`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::from_vec(&[fan_in, fan_out], data).expect("sized")
}

/// Random orthogonal `[n × n]` matrix (modified Gram-Schmidt on a Gaussian draw).
pub fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
            .collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = cols.split_at_mut(i);
                for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                    *a -= dot * b;
                }
            }
            let norm = cols[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-10 {
                ok = false;
                break;
            }
            cols[i].iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            let mut data = vec![0.0; n * n];
            for (j, col) in cols.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    data[i * n + j] = *v;
                }
            }
            return Tensor::from_vec(&[n, n], data).expect("sized");
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthogonal(16, &mut rng);
        let d = q.data();
        for i in 0..16 {
            for j in 0..16 {
                let dot: f64 = (0..16).map(|k| d[k * 16 + i] * d[k * 16 + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = glorot_uniform(168, 128, &mut rng);
        let limit = (6.0f64 / 296.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
    }
}
