use std::f64::consts::PI;

/// Orthonormal DCT-II of a fixed length, evaluated with a precomputed basis.
#[derive(Debug, Clone)]
pub struct Dct2 {
    n: usize,
    /// `basis[k * n + j]` = scale_k · cos(π k (2j + 1) / 2n)
    basis: Vec<f64>,
}

impl Dct2 {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "DCT length must be positive");
        let mut basis = Vec::with_capacity(n * n);
        for k in 0..n {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for j in 0..n {
                basis.push(scale * (PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64).cos());
            }
        }
        Self { n, basis }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// First `n_coeffs` DCT-II coefficients of `x`.
    pub fn forward(&self, x: &[f64], n_coeffs: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        self.basis
            .chunks_exact(self.n)
            .take(n_coeffs)
            .map(|row| row.iter().zip(x).map(|(b, v)| b * v).sum())
            .collect()
    }

    /// Inverse (DCT-III) of a full coefficient vector.
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (row, &c) in self.basis.chunks_exact(self.n).zip(coeffs) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
        out
    }
}
