use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{Param, Tensor};

pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPS: f64 = 1e-7;

/// RMSprop without momentum or centering:
///
/// ```text
/// cache ← ρ·cache + (1 − ρ)·g²
/// w     ← w − lr·g / (√cache + ε)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    /// Accumulators keyed by parameter name.
    pub cache: BTreeMap<String, Tensor>,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self::new(DEFAULT_LR)
    }
}

impl RmsProp {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPS,
            cache: BTreeMap::new(),
        }
    }

    /// Applies one update to every named parameter using its `grad`.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = (String, &'a mut Param)>) -> Result<()> {
        let params: Vec<(String, &mut Param)> = params.into_iter().collect();
        for (name, p) in &params {
            if let Some(i) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(Error::NumericFault(format!(
                    "rmsprop: non-finite gradient in {name} at index {i}"
                )));
            }
        }
        for (name, p) in params {
            let cache = self
                .cache
                .entry(name)
                .or_insert_with(|| Tensor::zeros(p.value.shape()));
            for ((w, &g), c) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(cache.data_mut())
            {
                *c = self.rho * *c + (1.0 - self.rho) * g * g;
                *w -= self.lr * g / (c.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<'a>(params: impl IntoIterator<Item = &'a mut Param>, max_norm: f64) -> f64 {
    let mut params: Vec<&mut Param> = params.into_iter().collect();
    let norm = params.iter().map(|p| p.grad.sum_sq()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for p in params.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(w: f64, g: f64) -> Param {
        let mut p = Param::new(Tensor::filled(&[1], w));
        p.grad.fill(g);
        p
    }

    #[test]
    fn zero_gradient_leaves_weight_and_decays_cache() {
        let mut opt = RmsProp::default();
        let mut p = param(1.5, 0.0);
        opt.cache.insert("w".into(), Tensor::filled(&[1], 0.4));
        opt.step([("w".to_string(), &mut p)]).unwrap();
        assert_eq!(p.value.data()[0], 1.5);
        assert!((opt.cache["w"].data()[0] - 0.36).abs() < 1e-15);
    }

    #[test]
    fn first_step_closed_form() {
        let mut opt = RmsProp::new(1e-4);
        let mut p = param(0.0, 1.0);
        opt.step([("w".to_string(), &mut p)]).unwrap();
        assert!((opt.cache["w"].data()[0] - 0.1).abs() < 1e-16);
        let dw = -p.value.data()[0];
        assert!((dw - 1e-4 / (0.1f64.sqrt() + 1e-7)).abs() < 1e-18);
        assert!((dw - 3.16227e-4).abs() < 1e-9);
    }

    #[test]
    fn two_steps_match_unrolled_recurrence() {
        let mut opt = RmsProp::new(1e-4);
        let mut p = param(0.0, 1.0);
        opt.step([("w".to_string(), &mut p)]).unwrap();
        opt.step([("w".to_string(), &mut p)]).unwrap();
        let c1 = 0.1;
        let w1 = -1e-4 / (f64::sqrt(c1) + 1e-7);
        let c2 = 0.9 * c1 + 0.1;
        let w2 = w1 - 1e-4 / (f64::sqrt(c2) + 1e-7);
        assert!((p.value.data()[0] - w2).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_fault() {
        let mut opt = RmsProp::default();
        let mut p = param(0.0, f64::NAN);
        assert!(opt.step([("w".to_string(), &mut p)]).unwrap_err().is_numeric_fault());
        assert_eq!(p.value.data()[0], 0.0);
    }

    #[test]
    fn clipping() {
        let mut a = param(0.0, 3.0);
        let mut b = param(0.0, 4.0);
        let n = clip_global_norm([&mut a, &mut b], 1.0);
        assert_eq!(n, 5.0);
        assert!((a.grad.data()[0] - 0.6).abs() < 1e-15);
        assert!((b.grad.data()[0] - 0.8).abs() < 1e-15);
    }
}
