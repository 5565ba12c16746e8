//! LSTM and the bidirectional wrapper.
//!
//! Gate blocks are packed along the last axis in the order `i, f, g, o`:
//! `W` is `[in × 4h]`, `U` is `[h × 4h]`, `b` is `[4h]`.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layer::{glorot_uniform, missing_cache, orthogonal, sigmoid, Ctx, Layer, Param};
use crate::nn::linalg::{add_column_sums, gemm};
use crate::nn::tensor::{concat_features, reverse_time, split_features, swap_leading};
use crate::nn::Tensor;

pub const FORGET_BIAS: f64 = 1.0;

struct LstmCache {
    batch: usize,
    steps: usize,
    x: Vec<f64>,
    /// `h_0 .. h_T`
    h: Vec<f64>,
    /// `c_0 .. c_T`
    c: Vec<f64>,
    /// Activated gates per step `[B × 4h]`.
    gates: Vec<f64>,
}

pub struct Lstm {
    pub w: Param,
    pub u: Param,
    pub b: Param,
    input: usize,
    hidden: usize,
    cache: Option<LstmCache>,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut w = Vec::with_capacity(input * 4 * hidden);
        let blocks: Vec<Tensor> = (0..4).map(|_| glorot_uniform(input, hidden, rng)).collect();
        for i in 0..input {
            for blk in &blocks {
                w.extend_from_slice(&blk.data()[i * hidden..(i + 1) * hidden]);
            }
        }
        let mut u = Vec::with_capacity(hidden * 4 * hidden);
        let rblocks: Vec<Tensor> = (0..4).map(|_| orthogonal(hidden, rng)).collect();
        for i in 0..hidden {
            for blk in &rblocks {
                u.extend_from_slice(&blk.data()[i * hidden..(i + 1) * hidden]);
            }
        }
        let mut layer = Self::zeros(input, hidden, FORGET_BIAS);
        layer.w.value = Tensor::from_vec(&[input, 4 * hidden], w).expect("sized");
        layer.u.value = Tensor::from_vec(&[hidden, 4 * hidden], u).expect("sized");
        layer
    }

    /// All-zero kernels with the forget-gate bias set to `forget_bias`.
    pub fn zeros(input: usize, hidden: usize, forget_bias: f64) -> Self {
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].fill(forget_bias);
        Self {
            w: Param::zeros(&[input, 4 * hidden]),
            u: Param::zeros(&[hidden, 4 * hidden]),
            b: Param::new(b),
            input,
            hidden,
            cache: None,
        }
    }

    pub fn count(input: usize, hidden: usize) -> usize {
        4 * (input * hidden + hidden * hidden + hidden)
    }
}

impl Layer for Lstm {
    fn kind(&self) -> &'static str {
        "lstm"
    }

    fn forward(&mut self, x: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let (b, t, f) = x.dims3("lstm")?;
        if f != self.input {
            return Err(Error::domain(format!("lstm: input width {f}, layer expects {}", self.input)));
        }
        if t == 0 {
            return Err(Error::domain("lstm: sequence length must be ≥ 1"));
        }
        let (n, hd) = (b * t, self.hidden);
        let g4 = 4 * hd;
        let xt = swap_leading(x.data(), b, t, f);
        let mut xw = vec![0.0; n * g4];
        gemm(n, f, g4, &xt, false, self.w.value.data(), false, &mut xw, false);

        let step = b * hd;
        let mut h = vec![0.0; (t + 1) * step];
        let mut c = vec![0.0; (t + 1) * step];
        let mut gates = vec![0.0; n * g4];
        let bias = self.b.value.data();
        for s in 0..t {
            let gs = s * b * g4..(s + 1) * b * g4;
            let mut a = xw[gs.clone()].to_vec();
            gemm(b, hd, g4, &h[s * step..(s + 1) * step], false, self.u.value.data(), false, &mut a, true);
            let g = &mut gates[gs];
            for bi in 0..b {
                for j in 0..hd {
                    let row = bi * g4;
                    let ig = sigmoid(a[row + j] + bias[j]);
                    let fg = sigmoid(a[row + hd + j] + bias[hd + j]);
                    let gg = (a[row + 2 * hd + j] + bias[2 * hd + j]).tanh();
                    let og = sigmoid(a[row + 3 * hd + j] + bias[3 * hd + j]);
                    g[row + j] = ig;
                    g[row + hd + j] = fg;
                    g[row + 2 * hd + j] = gg;
                    g[row + 3 * hd + j] = og;
                    let k = bi * hd + j;
                    let c_new = fg * c[s * step + k] + ig * gg;
                    c[(s + 1) * step + k] = c_new;
                    h[(s + 1) * step + k] = og * c_new.tanh();
                }
            }
        }
        let out = Tensor::from_vec(&[b, t, hd], swap_leading(&h[step..], t, b, hd))?;
        self.cache = Some(LstmCache {
            batch: b,
            steps: t,
            x: xt,
            h,
            c,
            gates,
        });
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("lstm"))?;
        let (b, t, hd, f) = (cache.batch, cache.steps, self.hidden, self.input);
        if grad.shape() != [b, t, hd] {
            return Err(Error::domain(format!("lstm backward: grad shape {:?}", grad.shape())));
        }
        let (n, step, g4) = (b * t, b * hd, 4 * hd);
        let g_out = swap_leading(grad.data(), b, t, hd);
        let mut da = vec![0.0; n * g4];
        let mut dh_next = vec![0.0; step];
        let mut dc_next = vec![0.0; step];

        for s in (0..t).rev() {
            let gs = s * b * g4..(s + 1) * b * g4;
            let g = &cache.gates[gs.clone()];
            let d = &mut da[gs.clone()];
            for bi in 0..b {
                for j in 0..hd {
                    let k = bi * hd + j;
                    let row = bi * g4;
                    let (ig, fg, gg, og) = (g[row + j], g[row + hd + j], g[row + 2 * hd + j], g[row + 3 * hd + j]);
                    let c_t = cache.c[(s + 1) * step + k];
                    let c_prev = cache.c[s * step + k];
                    let tc = c_t.tanh();
                    let dh = g_out[s * step + k] + dh_next[k];
                    let dc = dh * og * (1.0 - tc * tc) + dc_next[k];
                    d[row + j] = dc * gg * ig * (1.0 - ig);
                    d[row + hd + j] = dc * c_prev * fg * (1.0 - fg);
                    d[row + 2 * hd + j] = dc * ig * (1.0 - gg * gg);
                    d[row + 3 * hd + j] = dh * tc * og * (1.0 - og);
                    dc_next[k] = dc * fg;
                }
            }
            let h_prev = &cache.h[s * step..(s + 1) * step];
            gemm(b, g4, hd, &da[gs.clone()], false, self.u.value.data(), true, &mut dh_next, false);
            gemm(hd, b, g4, h_prev, true, &da[gs], false, self.u.grad.data_mut(), true);
        }
        gemm(f, n, g4, &cache.x, true, &da, false, self.w.grad.data_mut(), true);
        add_column_sums(&da, g4, self.b.grad.data_mut());
        let mut dx = vec![0.0; n * f];
        gemm(n, g4, f, &da, false, self.w.value.data(), true, &mut dx, false);
        Tensor::from_vec(&[b, t, f], swap_leading(&dx, t, b, f))
    }

    fn params(&self) -> Vec<(String, &Param)> {
        vec![("w".into(), &self.w), ("u".into(), &self.u), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![("w".into(), &mut self.w), ("u".into(), &mut self.u), ("b".into(), &mut self.b)]
    }
}

/// Runs one copy forward in time and one on the reversed sequence, then
/// concatenates `[forward, backward]` features per step.
pub struct Bidirectional {
    pub forward: Box<dyn Layer>,
    pub backward: Box<dyn Layer>,
    widths: Option<(usize, usize)>,
}

impl Bidirectional {
    pub fn new(forward: Box<dyn Layer>, backward: Box<dyn Layer>) -> Self {
        Self {
            forward,
            backward,
            widths: None,
        }
    }
}

impl Layer for Bidirectional {
    fn kind(&self) -> &'static str {
        "bidirectional"
    }

    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let fwd = self.forward.forward(x, &mut ctx.reborrow())?;
        let bwd_rev = self.backward.forward(&reverse_time(x)?, &mut ctx.reborrow())?;
        let bwd = reverse_time(&bwd_rev)?;
        self.widths = Some((fwd.last_dim(), bwd.last_dim()));
        concat_features(&[&fwd, &bwd])
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (wf, wb) = self.widths.ok_or_else(|| missing_cache("bidirectional"))?;
        let parts = split_features(grad, &[wf, wb])?;
        let mut dx = self.forward.backward(&parts[0])?;
        let dx_b = reverse_time(&self.backward.backward(&reverse_time(&parts[1])?)?)?;
        dx.add_assign(&dx_b);
        Ok(dx)
    }

    fn params(&self) -> Vec<(String, &Param)> {
        let mut out: Vec<(String, &Param)> = self
            .forward
            .params()
            .into_iter()
            .map(|(n, p)| (format!("fwd.{n}"), p))
            .collect();
        out.extend(self.backward.params().into_iter().map(|(n, p)| (format!("bwd.{n}"), p)));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out: Vec<(String, &mut Param)> = self
            .forward
            .params_mut()
            .into_iter()
            .map(|(n, p)| (format!("fwd.{n}"), p))
            .collect();
        out.extend(self.backward.params_mut().into_iter().map(|(n, p)| (format!("bwd.{n}"), p)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_params_without_forget_bias_stay_zero() {
        let mut layer = Lstm::zeros(3, 4, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::from_vec(&[2, 6, 3], (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut ctx = Ctx::new(Mode::Infer, &mut rng);
        let y = layer.forward(&x, &mut ctx).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(layer.cache.as_ref().unwrap().c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Lstm::new(5, 3, &mut rng);
        assert_eq!(&layer.b.value.data()[3..6], &[1.0, 1.0, 1.0]);
        assert_eq!(layer.param_count(), Lstm::count(5, 3));
    }

    #[test]
    fn palindrome_symmetry_with_tied_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Lstm::new(3, 4, &mut ChaCha8Rng::seed_from_u64(50));
        let b = Lstm::new(3, 4, &mut ChaCha8Rng::seed_from_u64(50));
        let mut bi = Bidirectional::new(Box::new(a), Box::new(b));
        let t = 7;
        let mut x = vec![0.0; 2 * t * 3];
        for bb in 0..2 {
            for s in 0..=t / 2 {
                for f in 0..3 {
                    let v = rng.gen_range(-1.0..1.0);
                    x[(bb * t + s) * 3 + f] = v;
                    x[(bb * t + (t - 1 - s)) * 3 + f] = v;
                }
            }
        }
        let x = Tensor::from_vec(&[2, t, 3], x).unwrap();
        let mut ctx = Ctx::new(Mode::Infer, &mut rng);
        let y = bi.forward(&x, &mut ctx).unwrap();
        assert_eq!(y.shape(), &[2, t, 8]);
        let d = y.data();
        for bb in 0..2 {
            for s in 0..t {
                let here = &d[(bb * t + s) * 8..(bb * t + s + 1) * 8];
                let there = &d[(bb * t + t - 1 - s) * 8..(bb * t + t - s) * 8];
                assert_eq!(&here[..4], &there[4..]);
                assert_eq!(&here[4..], &there[..4]);
            }
        }
    }
}
