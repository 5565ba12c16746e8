//! Iterative radix-2 Cooley-Tukey FFT.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// In-place transform of a power-of-two length buffer.
///
/// Forward: `X[k] = Σ x[n] e^{-2πi kn/N}`. The inverse applies the `1/N` scale.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::domain(format!(
            "FFT length {n} is not a power of two"
        )));
    }
    if n == 1 {
        return Ok(());
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // Twiddles from the angle directly rather than by repeated multiplication,
        // which keeps the error at O(eps log N).
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64))
            .collect();
        for chunk in buf.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let t = *b * w;
                *b = *a - t;
                *a += t;
            }
        }
        len <<= 1;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
    Ok(())
}

/// Out-of-place convenience wrapper around [`fft_in_place`].
pub fn fft(signal: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    let mut out = signal.to_vec();
    fft_in_place(&mut out, inverse)?;
    Ok(out)
}

/// One-sided power spectrum `|X[k]|²` for `k = 0..=N/2` of a real frame.
pub fn power_spectrum(frame: &[f64]) -> Result<Vec<f64>> {
    let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_in_place(&mut buf, false)?;
    Ok(buf[..frame.len() / 2 + 1].iter().map(|c| c.norm_sqr()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let ang = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                        v * Complex64::from_polar(1.0, ang)
                    })
                    .sum()
            })
            .collect()
    }

    fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn impulse_and_constant() {
        let out = fft(&[c(1.0), c(0.0), c(0.0), c(0.0)], false).unwrap();
        assert!(out.iter().all(|v| (*v - c(1.0)).norm() < 1e-15));
        let out = fft(&[c(1.0); 4], false).unwrap();
        assert!((out[0] - c(4.0)).norm() < 1e-15);
        assert!(out[1..].iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn matches_naive_dft_256() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_signal(&mut rng, 256);
        let fast = fft(&x, false).unwrap();
        let slow = naive_dft(&x);
        let err = fast
            .iter()
            .zip(&slow)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "max err {err}");
    }

    #[test]
    fn inverse_round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1usize, 2, 8, 64, 1024] {
            let x = random_signal(&mut rng, n);
            let spec = fft(&x, false).unwrap();
            let back = fft(&spec, true).unwrap();
            let norm: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).norm() <= 1e-9 * norm.sqrt().max(1.0));
            }
            let energy: f64 = spec.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
            assert!((energy - norm).abs() <= 1e-9 * norm);
        }
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [16usize, 512, 1024] {
            let x = random_signal(&mut rng, n);
            let y = random_signal(&mut rng, n);
            let (a, b) = (Complex64::new(0.7, -0.2), Complex64::new(-1.3, 0.4));
            let mix: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = fft(&mix, false).unwrap();
            let fx = fft(&x, false).unwrap();
            let fy = fft(&y, false).unwrap();
            for i in 0..n {
                assert!((lhs[i] - (a * fx[i] + b * fy[i])).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(fft(&[c(1.0); 6], false).is_err());
        assert!(fft(&[], false).is_err());
    }
}
