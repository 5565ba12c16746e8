//! Gated recurrent unit.
//!
//! ```text
//! z  = σ(x W_z + h_prev U_z + b_z)
//! r  = σ(x W_r + h_prev U_r + b_r)
//! h~ = tanh(x W_h + (r ⊙ h_prev) U_h + b_h)
//! h  = z ⊙ h_prev + (1 - z) ⊙ h~
//! ```
//!
//! The update gate carries the previous state; the reset gate is applied to
//! `h_prev` before the recurrent product. One bias per gate.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layer::{glorot_uniform, missing_cache, orthogonal, sigmoid, Ctx, Layer, Param};
use crate::nn::linalg::{add_column_sums, gemm};
use crate::nn::tensor::swap_leading;
use crate::nn::Tensor;

pub struct GruParams {
    pub w_z: Param,
    pub w_r: Param,
    pub w_h: Param,
    pub u_z: Param,
    pub u_r: Param,
    pub u_h: Param,
    pub b_z: Param,
    pub b_r: Param,
    pub b_h: Param,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_z: Param::zeros(&[input, hidden]),
            w_r: Param::zeros(&[input, hidden]),
            w_h: Param::zeros(&[input, hidden]),
            u_z: Param::zeros(&[hidden, hidden]),
            u_r: Param::zeros(&[hidden, hidden]),
            u_h: Param::zeros(&[hidden, hidden]),
            b_z: Param::zeros(&[hidden]),
            b_r: Param::zeros(&[hidden]),
            b_h: Param::zeros(&[hidden]),
        }
    }

    /// Glorot-uniform input kernels, orthogonal recurrent kernels, zero biases.
    pub fn init(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(input, hidden);
        p.w_z.value = glorot_uniform(input, hidden, rng);
        p.w_r.value = glorot_uniform(input, hidden, rng);
        p.w_h.value = glorot_uniform(input, hidden, rng);
        p.u_z.value = orthogonal(hidden, rng);
        p.u_r.value = orthogonal(hidden, rng);
        p.u_h.value = orthogonal(hidden, rng);
        p
    }

    fn named(&self) -> [(&'static str, &Param); 9] {
        [
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_h", &self.w_h),
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_h", &self.u_h),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_h", &self.b_h),
        ]
    }

    fn named_mut(&mut self) -> [(&'static str, &mut Param); 9] {
        [
            ("w_z", &mut self.w_z),
            ("w_r", &mut self.w_r),
            ("w_h", &mut self.w_h),
            ("u_z", &mut self.u_z),
            ("u_r", &mut self.u_r),
            ("u_h", &mut self.u_h),
            ("b_z", &mut self.b_z),
            ("b_r", &mut self.b_r),
            ("b_h", &mut self.b_h),
        ]
    }
}

/// One GRU step on a batch: `x_t` is `[B × in]`, `h_prev` is `[B × h]`.
pub fn gru_cell(x_t: &Tensor, h_prev: &Tensor, p: &GruParams) -> Result<Tensor> {
    let (input, hidden) = (p.w_z.value.shape()[0], p.w_z.value.shape()[1]);
    x_t.expect_last_dim(input, "gru_cell input")?;
    h_prev.expect_last_dim(hidden, "gru_cell state")?;
    let batch = x_t.outer_len();
    if h_prev.outer_len() != batch {
        return Err(Error::domain("gru_cell: batch sizes of input and state differ"));
    }
    let proj = |w: &Param, u: &Param, b: &Param, h: &[f64]| {
        let mut a = vec![0.0; batch * hidden];
        gemm(batch, input, hidden, x_t.data(), false, w.value.data(), false, &mut a, false);
        gemm(batch, hidden, hidden, h, false, u.value.data(), false, &mut a, true);
        for row in a.chunks_exact_mut(hidden) {
            for (v, bb) in row.iter_mut().zip(b.value.data()) {
                *v += bb;
            }
        }
        a
    };
    let hp = h_prev.data();
    let z: Vec<f64> = proj(&p.w_z, &p.u_z, &p.b_z, hp).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = proj(&p.w_r, &p.u_r, &p.b_r, hp).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(hp).map(|(r, h)| r * h).collect();
    let hh: Vec<f64> = proj(&p.w_h, &p.u_h, &p.b_h, &rh).into_iter().map(f64::tanh).collect();
    let h = (0..batch * hidden)
        .map(|i| z[i] * hp[i] + (1.0 - z[i]) * hh[i])
        .collect();
    Tensor::from_vec(&[batch, hidden], h)
}

struct GruCache {
    batch: usize,
    steps: usize,
    /// Time-major input `[T·B × in]`.
    x: Vec<f64>,
    /// States `h_0 .. h_T`, each `[B × h]`, time-major.
    h: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    hh: Vec<f64>,
    rh: Vec<f64>,
}

/// GRU over `[B, T, in]` sequences starting from a zero state.
pub struct Gru {
    pub p: GruParams,
    input: usize,
    hidden: usize,
    return_sequences: bool,
    cache: Option<GruCache>,
}

impl Gru {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::from_params(GruParams::init(input, hidden, rng))
    }

    pub fn from_params(p: GruParams) -> Self {
        let (input, hidden) = (p.w_z.value.shape()[0], p.w_z.value.shape()[1]);
        Self {
            p,
            input,
            hidden,
            return_sequences: true,
            cache: None,
        }
    }

    /// With `false` the layer emits only the final state, `[B, h]`.
    pub fn with_return_sequences(mut self, flag: bool) -> Self {
        self.return_sequences = flag;
        self
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// `3·(in·h + h·h + h)`.
    pub fn count(input: usize, hidden: usize) -> usize {
        3 * (input * hidden + hidden * hidden + hidden)
    }
}

impl Layer for Gru {
    fn kind(&self) -> &'static str {
        "gru"
    }

    fn forward(&mut self, x: &Tensor, _ctx: &mut Ctx<'_>) -> Result<Tensor> {
        let (b, t, f) = x.dims3("gru")?;
        if f != self.input {
            return Err(Error::domain(format!(
                "gru: input width {f}, layer expects {}",
                self.input
            )));
        }
        if t == 0 {
            return Err(Error::domain("gru: sequence length must be ≥ 1"));
        }
        let (n, hd) = (b * t, self.hidden);
        let xt = swap_leading(x.data(), b, t, f);

        let mut xz = vec![0.0; n * hd];
        let mut xr = vec![0.0; n * hd];
        let mut xh = vec![0.0; n * hd];
        gemm(n, f, hd, &xt, false, self.p.w_z.value.data(), false, &mut xz, false);
        gemm(n, f, hd, &xt, false, self.p.w_r.value.data(), false, &mut xr, false);
        gemm(n, f, hd, &xt, false, self.p.w_h.value.data(), false, &mut xh, false);

        let step = b * hd;
        let mut h = vec![0.0; (t + 1) * step];
        let mut z = vec![0.0; n * hd];
        let mut r = vec![0.0; n * hd];
        let mut hh = vec![0.0; n * hd];
        let mut rh = vec![0.0; n * hd];
        let (bz, br, bh) = (self.p.b_z.value.data(), self.p.b_r.value.data(), self.p.b_h.value.data());

        for s in 0..t {
            let cur = s * step..(s + 1) * step;
            let (h_hist, h_rest) = h.split_at_mut((s + 1) * step);
            let h_prev = &h_hist[s * step..];
            let h_next = &mut h_rest[..step];

            let mut az = xz[cur.clone()].to_vec();
            let mut ar = xr[cur.clone()].to_vec();
            gemm(b, hd, hd, h_prev, false, self.p.u_z.value.data(), false, &mut az, true);
            gemm(b, hd, hd, h_prev, false, self.p.u_r.value.data(), false, &mut ar, true);
            for i in 0..step {
                z[cur.start + i] = sigmoid(az[i] + bz[i % hd]);
                r[cur.start + i] = sigmoid(ar[i] + br[i % hd]);
                rh[cur.start + i] = r[cur.start + i] * h_prev[i];
            }
            let mut ah = xh[cur.clone()].to_vec();
            gemm(b, hd, hd, &rh[cur.clone()], false, self.p.u_h.value.data(), false, &mut ah, true);
            for i in 0..step {
                let c = cur.start + i;
                hh[c] = (ah[i] + bh[i % hd]).tanh();
                h_next[i] = z[c] * h_prev[i] + (1.0 - z[c]) * hh[c];
            }
        }

        let out = if self.return_sequences {
            Tensor::from_vec(&[b, t, hd], swap_leading(&h[step..], t, b, hd))?
        } else {
            Tensor::from_vec(&[b, hd], h[t * step..].to_vec())?
        };
        self.cache = Some(GruCache {
            batch: b,
            steps: t,
            x: xt,
            h,
            z,
            r,
            hh,
            rh,
        });
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let c = self.cache.as_ref().ok_or_else(|| missing_cache("gru"))?;
        let (b, t, hd, f) = (c.batch, c.steps, self.hidden, self.input);
        let (n, step) = (b * t, b * hd);

        // Time-major gradient w.r.t. each emitted state.
        let g_out: Vec<f64> = if self.return_sequences {
            if grad.shape() != [b, t, hd] {
                return Err(Error::domain(format!("gru backward: grad shape {:?}", grad.shape())));
            }
            swap_leading(grad.data(), b, t, hd)
        } else {
            if grad.shape() != [b, hd] {
                return Err(Error::domain(format!("gru backward: grad shape {:?}", grad.shape())));
            }
            let mut g = vec![0.0; n * hd];
            g[(t - 1) * step..].copy_from_slice(grad.data());
            g
        };

        let mut da_z = vec![0.0; n * hd];
        let mut da_r = vec![0.0; n * hd];
        let mut da_h = vec![0.0; n * hd];
        let mut dh_next = vec![0.0; step];
        let mut d_rh = vec![0.0; step];
        let mut dh_prev = vec![0.0; step];

        for s in (0..t).rev() {
            let cur = s * step..(s + 1) * step;
            let h_prev = &c.h[s * step..(s + 1) * step];
            let (z, r, hh) = (&c.z[cur.clone()], &c.r[cur.clone()], &c.hh[cur.clone()]);

            for i in 0..step {
                let dh = g_out[cur.start + i] + dh_next[i];
                let dz = dh * (h_prev[i] - hh[i]);
                let dhh = dh * (1.0 - z[i]);
                dh_prev[i] = dh * z[i];
                da_h[cur.start + i] = dhh * (1.0 - hh[i] * hh[i]);
                da_z[cur.start + i] = dz * z[i] * (1.0 - z[i]);
            }
            gemm(b, hd, hd, &da_h[cur.clone()], false, self.p.u_h.value.data(), true, &mut d_rh, false);
            for i in 0..step {
                let dr = d_rh[i] * h_prev[i];
                dh_prev[i] += d_rh[i] * r[i];
                da_r[cur.start + i] = dr * r[i] * (1.0 - r[i]);
            }
            gemm(b, hd, hd, &da_z[cur.clone()], false, self.p.u_z.value.data(), true, &mut dh_prev, true);
            gemm(b, hd, hd, &da_r[cur.clone()], false, self.p.u_r.value.data(), true, &mut dh_prev, true);

            gemm(hd, b, hd, h_prev, true, &da_z[cur.clone()], false, self.p.u_z.grad.data_mut(), true);
            gemm(hd, b, hd, h_prev, true, &da_r[cur.clone()], false, self.p.u_r.grad.data_mut(), true);
            gemm(hd, b, hd, &c.rh[cur.clone()], true, &da_h[cur.clone()], false, self.p.u_h.grad.data_mut(), true);

            std::mem::swap(&mut dh_next, &mut dh_prev);
        }

        gemm(f, n, hd, &c.x, true, &da_z, false, self.p.w_z.grad.data_mut(), true);
        gemm(f, n, hd, &c.x, true, &da_r, false, self.p.w_r.grad.data_mut(), true);
        gemm(f, n, hd, &c.x, true, &da_h, false, self.p.w_h.grad.data_mut(), true);
        add_column_sums(&da_z, hd, self.p.b_z.grad.data_mut());
        add_column_sums(&da_r, hd, self.p.b_r.grad.data_mut());
        add_column_sums(&da_h, hd, self.p.b_h.grad.data_mut());

        let mut dx = vec![0.0; n * f];
        gemm(n, hd, f, &da_z, false, self.p.w_z.value.data(), true, &mut dx, false);
        gemm(n, hd, f, &da_r, false, self.p.w_r.value.data(), true, &mut dx, true);
        gemm(n, hd, f, &da_h, false, self.p.w_h.value.data(), true, &mut dx, true);
        Tensor::from_vec(&[b, t, f], swap_leading(&dx, t, b, f))
    }

    fn params(&self) -> Vec<(String, &Param)> {
        self.p.named().into_iter().map(|(n, p)| (n.to_string(), p)).collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        self.p.named_mut().into_iter().map(|(n, p)| (n.to_string(), p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::zeros(3, 4);
        let x = Tensor::zeros(&[2, 3]);
        let h = Tensor::from_vec(&[2, 4], vec![1.0, -2.0, 0.5, 4.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = gru_cell(&x, &h, &p).unwrap();
        for (o, v) in out.data().iter().zip(h.data()) {
            assert_eq!(*o, 0.5 * v);
        }
        let zero = gru_cell(&x, &Tensor::zeros(&[2, 4]), &p).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_layer_matches_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut layer = Gru::new(5, 3, &mut rng);
        for (_, p) in layer.params_mut() {
            if p.value.shape().len() == 1 {
                p.value.data_mut().iter_mut().for_each(|v| *v = 0.3);
            }
        }
        let x = rand_tensor(&[2, 1, 5], &mut rng);
        let mut ctx = Ctx::new(Mode::Infer, &mut rng);
        let seq = layer.forward(&x, &mut ctx).unwrap();
        let step = x.clone().reshape(&[2, 5]).unwrap();
        let cell = gru_cell(&step, &Tensor::zeros(&[2, 3]), &layer.p).unwrap();
        for (a, b) in seq.data().iter().zip(cell.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_params_zero_output() {
        let mut layer = Gru::from_params(GruParams::zeros(4, 6));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = rand_tensor(&[3, 7, 4], &mut rng);
        let mut ctx = Ctx::new(Mode::Train, &mut rng);
        let y = layer.forward(&x, &mut ctx).unwrap();
        assert_eq!(y.shape(), &[3, 7, 6]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn return_last_state_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut full = Gru::new(3, 4, &mut rng);
        let mut last = Gru::from_params(GruParams::init(3, 4, &mut ChaCha8Rng::seed_from_u64(99)))
            .with_return_sequences(false);
        full.p = GruParams::init(3, 4, &mut ChaCha8Rng::seed_from_u64(99));
        let x = rand_tensor(&[2, 5, 3], &mut rng);
        let mut ctx = Ctx::new(Mode::Infer, &mut rng);
        let seq = full.forward(&x, &mut ctx).unwrap();
        let fin = last.forward(&x, &mut ctx).unwrap();
        assert_eq!(fin.shape(), &[2, 4]);
        for bi in 0..2 {
            assert_eq!(&fin.data()[bi * 4..bi * 4 + 4], &seq.data()[(bi * 5 + 4) * 4..(bi * 5 + 5) * 4]);
        }
    }

    #[test]
    fn parameter_count_formula() {
        assert_eq!(Gru::count(168, 128), 114048);
        assert_eq!(Gru::count(2048, 256), 1770240);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(Gru::new(168, 128, &mut rng).param_count(), 114048);
    }

    #[test]
    fn width_mismatch_is_domain_error() {
        let mut layer = Gru::from_params(GruParams::zeros(4, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = Ctx::new(Mode::Infer, &mut rng);
        assert!(layer.forward(&Tensor::zeros(&[1, 3, 5]), &mut ctx).is_err());
    }
}
