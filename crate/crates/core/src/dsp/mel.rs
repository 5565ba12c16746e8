//! Slaney-style mel filterbank.
//!
//! The mel scale is linear below 1 kHz and logarithmic above; filters are
//! triangles between consecutive mel points, area-normalized by
//! `2 / (f_upper - f_lower)`.

use crate::error::{Error, Result};

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    } else {
        F_SP * mel
    }
}

/// `n` frequencies equally spaced on the mel axis between `fmin` and `fmax`.
pub fn mel_frequencies(n: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    if n == 1 {
        return vec![mel_to_hz(lo)];
    }
    (0..n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Row-major `[n_mels × (n_fft/2 + 1)]`.
    weights: Vec<f64>,
    n_mels: usize,
    n_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Rows that received no FFT bin.
    pub empty_rows: Vec<usize>,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, n_fft: usize, n_mels: usize, fmin: f64, fmax: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_mels == 0 {
            return Err(Error::domain("n_mels must be ≥ 1"));
        }
        if n_fft < 2 {
            return Err(Error::domain("n_fft must be ≥ 2"));
        }
        if !(fmin >= 0.0 && fmin < fmax) {
            return Err(Error::domain(format!(
                "need 0 ≤ fmin < fmax, got fmin={fmin} fmax={fmax}"
            )));
        }
        if fmax > nyquist {
            return Err(Error::domain(format!(
                "fmax {fmax} Hz exceeds Nyquist {nyquist} Hz"
            )));
        }

        let n_bins = n_fft / 2 + 1;
        let bin_hz: Vec<f64> = (0..n_bins)
            .map(|k| k as f64 * sample_rate as f64 / n_fft as f64)
            .collect();
        let edges = mel_frequencies(n_mels + 2, fmin, fmax);

        let mut weights = vec![0.0; n_mels * n_bins];
        let mut empty_rows = Vec::new();
        for (m, row) in weights.chunks_exact_mut(n_bins).enumerate() {
            let (lower, center, upper) = (edges[m], edges[m + 1], edges[m + 2]);
            let rise = center - lower;
            let fall = upper - center;
            let norm = 2.0 / (upper - lower);
            for (w, &f) in row.iter_mut().zip(&bin_hz) {
                let up = (f - lower) / rise;
                let down = (upper - f) / fall;
                *w = up.min(down).max(0.0) * norm;
            }
            if row.iter().all(|&w| w == 0.0) {
                empty_rows.push(m);
            }
        }
        if !empty_rows.is_empty() {
            log::warn!(
                "mel filterbank: {} of {n_mels} filters are empty; n_mels may be too high for n_fft={n_fft}",
                empty_rows.len()
            );
        }
        Ok(Self {
            weights,
            n_mels,
            n_bins,
            fmin,
            fmax,
            empty_rows,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Center frequency of filter `m` in Hz.
    pub fn center_hz(&self, m: usize) -> f64 {
        mel_frequencies(self.n_mels + 2, self.fmin, self.fmax)[m + 1]
    }

    /// Projects a one-sided power spectrum onto the filters.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        debug_assert_eq!(power.len(), self.n_bins);
        self.weights
            .chunks_exact(self.n_bins)
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}
