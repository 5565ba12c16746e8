//! Central finite-difference gradient checking.
//!
//! A [`GradTarget`] exposes a scalar loss, its analytic gradient, and a set of
//! named mutable value slots (inputs and parameters). [`check`] perturbs
//! entries of every slot by `±h` and compares the numeric slope with the
//! analytic one.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};

use crate::dataset::{Modality, PerModality};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::{masked_mse, Ctx, Layer, Mode, Rng as ModelRng, Tensor};

/// Norms below this are treated as zero when forming relative errors.
pub const NORM_FLOOR: f64 = 1e-8;

pub trait GradTarget {
    fn slot_names(&self) -> Vec<String>;

    fn slot_mut(&mut self, i: usize) -> &mut [f64];

    /// Deterministic loss at the current slot values.
    fn loss(&mut self) -> Result<f64>;

    /// Analytic gradient of the loss, one vector per slot.
    fn gradients(&mut self) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub step: f64,
    /// Entries sampled per slot; slots at or below this size are checked fully.
    pub max_per_slot: usize,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_per_slot: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SlotReport {
    pub name: String,
    pub rel_error: f64,
    pub checked: usize,
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or 0 when both norms are below [`NORM_FLOOR`].
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < NORM_FLOOR {
        0.0
    } else {
        diff / scale
    }
}

/// Central-difference slope of `f` at `x` along every coordinate.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn check(target: &mut dyn GradTarget, opts: CheckOptions) -> Result<Vec<SlotReport>> {
    let analytic = target.gradients()?;
    let names = target.slot_names();
    let mut rng = ModelRng::seed_from_u64(opts.seed);
    let mut reports = Vec::with_capacity(names.len());
    for (slot, name) in names.into_iter().enumerate() {
        let len = target.slot_mut(slot).len();
        let idx: Vec<usize> = if len <= opts.max_per_slot {
            (0..len).collect()
        } else {
            sample(&mut rng, len, opts.max_per_slot).into_vec()
        };
        let mut a = Vec::with_capacity(idx.len());
        let mut n = Vec::with_capacity(idx.len());
        for &i in &idx {
            let orig = target.slot_mut(slot)[i];
            target.slot_mut(slot)[i] = orig + opts.step;
            let up = target.loss()?;
            target.slot_mut(slot)[i] = orig - opts.step;
            let down = target.loss()?;
            target.slot_mut(slot)[i] = orig;
            n.push((up - down) / (2.0 * opts.step));
            a.push(analytic[slot][i]);
        }
        reports.push(SlotReport {
            name,
            rel_error: relative_error(&a, &n),
            checked: idx.len(),
        });
    }
    Ok(reports)
}

/// Checks one layer under the loss `Σ c ⊙ layer(x)` for a fixed random `c`.
///
/// The RNG is reseeded before every forward so dropout masks are identical
/// across perturbations.
pub struct LayerProbe<'a> {
    layer: &'a mut dyn Layer,
    input: Tensor,
    proj: Tensor,
    mode: Mode,
    seed: u64,
}

impl<'a> LayerProbe<'a> {
    pub fn new(layer: &'a mut dyn Layer, input: Tensor, mode: Mode, seed: u64) -> Result<Self> {
        let mut rng = ModelRng::seed_from_u64(seed);
        let y = layer.forward(&input, &mut Ctx::new(mode, &mut rng))?;
        let mut prng = ModelRng::seed_from_u64(seed ^ 0x9e37_79b9);
        let proj_data = (0..y.len()).map(|_| prng.gen_range(-1.0..1.0)).collect();
        let proj = Tensor::from_vec(y.shape(), proj_data)?;
        Ok(Self {
            layer,
            input,
            proj,
            mode,
            seed,
        })
    }

    fn run(&mut self) -> Result<Tensor> {
        let mut rng = ModelRng::seed_from_u64(self.seed);
        self.layer.forward(&self.input, &mut Ctx::new(self.mode, &mut rng))
    }
}

impl GradTarget for LayerProbe<'_> {
    fn slot_names(&self) -> Vec<String> {
        let mut names = vec!["input".to_string()];
        names.extend(self.layer.params().into_iter().map(|(n, _)| n));
        names
    }

    fn slot_mut(&mut self, i: usize) -> &mut [f64] {
        if i == 0 {
            self.input.data_mut()
        } else {
            self.layer
                .params_mut()
                .into_iter()
                .nth(i - 1)
                .expect("slot index")
                .1
                .value
                .data_mut()
        }
    }

    fn loss(&mut self) -> Result<f64> {
        let y = self.run()?;
        Ok(y.data().iter().zip(self.proj.data()).map(|(a, b)| a * b).sum())
    }

    fn gradients(&mut self) -> Result<Vec<Vec<f64>>> {
        self.layer.zero_grad();
        self.run()?;
        let dx = self.layer.backward(&self.proj)?;
        let mut out = vec![dx.into_data()];
        out.extend(
            self.layer
                .params()
                .into_iter()
                .map(|(_, p)| p.grad.data().to_vec()),
        );
        Ok(out)
    }
}

/// Checks a whole model under masked MSE against fixed targets.
///
/// Slots are the consumed input modalities followed by every parameter.
pub struct ModelProbe<'a> {
    model: &'a mut Model,
    inputs: PerModality<Tensor>,
    targets: Vec<f64>,
    mask: Vec<bool>,
    mode: Mode,
    seed: u64,
}

impl<'a> ModelProbe<'a> {
    pub fn new(
        model: &'a mut Model,
        inputs: PerModality<Tensor>,
        targets: Vec<f64>,
        mask: Vec<bool>,
        mode: Mode,
        seed: u64,
    ) -> Self {
        Self {
            model,
            inputs,
            targets,
            mask,
            mode,
            seed,
        }
    }

    fn modalities(&self) -> &'static [Modality] {
        self.model.modalities()
    }

    fn run(&mut self) -> Result<(f64, Tensor)> {
        let mut rng = ModelRng::seed_from_u64(self.seed);
        let y = self
            .model
            .forward(&self.inputs, &mut Ctx::new(self.mode, &mut rng))?;
        masked_mse(&y, &self.targets, &self.mask)
    }
}

impl GradTarget for ModelProbe<'_> {
    fn slot_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .modalities()
            .iter()
            .map(|m| format!("input.{m}"))
            .collect();
        names.extend(self.model.params().into_iter().map(|(n, _)| n));
        names
    }

    fn slot_mut(&mut self, i: usize) -> &mut [f64] {
        let mods = self.modalities();
        if i < mods.len() {
            self.inputs
                .get_mut(mods[i])
                .expect("input for every consumed modality")
                .data_mut()
        } else {
            self.model
                .params_mut()
                .into_iter()
                .nth(i - mods.len())
                .expect("slot index")
                .1
                .value
                .data_mut()
        }
    }

    fn loss(&mut self) -> Result<f64> {
        Ok(self.run()?.0)
    }

    fn gradients(&mut self) -> Result<Vec<Vec<f64>>> {
        self.model.zero_grad();
        let (_, grad) = self.run()?;
        let dx = self.model.backward(&grad)?;
        let mut out = Vec::new();
        for &m in self.modalities() {
            let g = dx
                .get(m)
                .ok_or_else(|| Error::Coverage(format!("no input gradient for {m}")))?;
            out.push(g.data().to_vec());
        }
        out.extend(
            self.model
                .params()
                .into_iter()
                .map(|(_, p)| p.grad.data().to_vec()),
        );
        Ok(out)
    }
}
