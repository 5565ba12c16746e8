use crate::error::{Error, Result};
use crate::nn::layer::{missing_cache, Ctx, Layer, Param};
use crate::nn::Tensor;

pub const PRELU_INIT: f64 = 0.25;

/// `y = x` for `x > 0`, else `α·x`, with one learnable `α` per feature.
pub fn prelu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x
    }
}

pub struct PRelu {
    pub alpha: Param,
    input: Option<Tensor>,
}

impl PRelu {
    pub fn new(features: usize) -> Self {
        Self {
            alpha: Param::new(Tensor::filled(&[features], PRELU_INIT)),
            input: None,
        }
    }
}

impl Layer for PRelu {
    fn kind(&self) -> &'static str {
        "prelu"
    }

    fn forward(&mut self, x: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let f = self.alpha.len();
        x.expect_last_dim(f, "prelu")?;
        let alpha = self.alpha.value.data();
        let mut y = x.clone();
        for row in y.data_mut().chunks_exact_mut(f) {
            for (v, a) in row.iter_mut().zip(alpha) {
                *v = prelu(*v, *a);
            }
        }
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("prelu"))?;
        if grad.shape() != x.shape() {
            return Err(Error::domain("prelu backward: shape mismatch"));
        }
        let f = self.alpha.len();
        let mut dx = grad.clone();
        let alpha = self.alpha.value.data().to_vec();
        let dalpha = self.alpha.grad.data_mut();
        for (drow, xrow) in dx.data_mut().chunks_exact_mut(f).zip(x.data().chunks_exact(f)) {
            for j in 0..f {
                if xrow[j] <= 0.0 {
                    dalpha[j] += drow[j] * xrow[j];
                    drow[j] *= alpha[j];
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<(String, &Param)> {
        vec![("alpha".into(), &self.alpha)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![("alpha".into(), &mut self.alpha)]
    }
}

#[derive(Default)]
pub struct Tanh {
    output: Option<Tensor>,
}

impl Tanh {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Tanh {
    fn kind(&self) -> &'static str {
        "tanh"
    }

    fn forward(&mut self, x: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let y = x.map(f64::tanh);
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let y = self.output.as_ref().ok_or_else(|| missing_cache("tanh"))?;
        if grad.shape() != y.shape() {
            return Err(Error::domain("tanh backward: shape mismatch"));
        }
        let data = grad
            .data()
            .iter()
            .zip(y.data())
            .map(|(g, y)| g * (1.0 - y * y))
            .collect();
        Tensor::from_vec(y.shape(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prelu_definition() {
        assert_eq!(prelu(-2.0, 0.25), -0.5);
        assert_eq!(prelu(3.0, 0.25), 3.0);
        assert_eq!(prelu(3.0, 7.0), 3.0);
        assert_eq!(PRelu::new(64).param_count(), 64);
    }
}
