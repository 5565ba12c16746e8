use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::layer::{missing_cache, Ctx, Layer, Mode};
use crate::nn::Tensor;

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time,
/// inference is the identity.
pub struct Dropout {
    rate: f64,
    /// Per-element scale of the last train-mode forward (0 or 1/(1-rate)).
    mask: Option<Vec<f64>>,
    identity: bool,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::domain(format!("dropout rate {rate} must satisfy 0 ≤ rate < 1")));
        }
        Ok(Self {
            rate,
            mask: None,
            identity: false,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Layer for Dropout {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        if ctx.mode == Mode::Infer || self.rate == 0.0 {
            self.identity = true;
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if ctx.rng.gen::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.identity = false;
        self.mask = Some(mask);
        Tensor::from_vec(x.shape(), data)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if self.identity {
            return Ok(grad.clone());
        }
        let mask = self.mask.as_ref().ok_or_else(|| missing_cache("dropout"))?;
        if mask.len() != grad.len() {
            return Err(Error::domain("dropout backward: shape mismatch"));
        }
        let data = grad.data().iter().zip(mask).map(|(g, m)| g * m).collect();
        Tensor::from_vec(grad.shape(), data)
    }
}
