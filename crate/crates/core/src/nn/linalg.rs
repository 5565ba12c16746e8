//! GEMM on row-major slices.
//!
//! Large products are split into fixed 64-row blocks computed in parallel;
//! every output element is reduced in the same order regardless of how many
//! threads run, so results are bit-identical across thread counts.

use rayon::prelude::*;

const ROW_BLOCK: usize = 64;
const PAR_MIN_WORK: usize = 1 << 18;

/// `c (+)= op(a) · op(b)` with `op(a)`: `m×k`, `op(b)`: `k×n`, `c`: `m×n`.
///
/// `a_t` means `a` is stored `k×m`; `b_t` means `b` is stored `n×k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs size");
    assert_eq!(b.len(), k * n, "gemm: rhs size");
    assert_eq!(c.len(), m * n, "gemm: output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };

    let run = |row0: usize, c_block: &mut [f64]| {
        let rows = c_block.len() / n;
        let a_off = row0 as isize * rsa;
        // SAFETY: strides describe `a`, `b` and `c_block` exactly as sized above;
        // the block only addresses rows row0..row0+rows of op(a).
        unsafe {
            matrixmultiply::dgemm(
                rows,
                k,
                n,
                1.0,
                a.as_ptr().offset(a_off),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c_block.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    };

    if m > ROW_BLOCK && m * k * n >= PAR_MIN_WORK && rayon::current_num_threads() > 1 {
        c.par_chunks_mut(ROW_BLOCK * n)
            .enumerate()
            .for_each(|(i, blk)| run(i * ROW_BLOCK, blk));
    } else {
        for (i, blk) in c.chunks_mut(ROW_BLOCK * n).enumerate() {
            run(i * ROW_BLOCK, blk);
        }
    }
}

/// Adds the column sums of a `rows × cols` matrix into `out`.
pub fn add_column_sums(x: &[f64], cols: usize, out: &mut [f64]) {
    for row in x.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Adds `bias` to every row.
pub fn add_row_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool) -> Vec<f64> {
        let at = |i: usize, p: usize| if a_t { a[p * m + i] } else { a[i * k + p] };
        let bt = |p: usize, j: usize| if b_t { b[j * k + p] } else { b[p * n + j] };
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| at(i, p) * bt(p, j)).sum();
            }
        }
        c
    }

    #[test]
    fn all_transpose_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 2), (70, 9, 13), (130, 33, 7)] {
            let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for a_t in [false, true] {
                for b_t in [false, true] {
                    let want = naive(m, k, n, &a, a_t, &b, b_t);
                    let mut c = vec![1.0; m * n];
                    gemm(m, k, n, &a, a_t, &b, b_t, &mut c, false);
                    for (x, y) in c.iter().zip(&want) {
                        assert!((x - y).abs() < 1e-12);
                    }
                    let mut acc = vec![1.0; m * n];
                    gemm(m, k, n, &a, a_t, &b, b_t, &mut acc, true);
                    for (x, y) in acc.iter().zip(&want) {
                        assert!((x - 1.0 - y).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (m, k, n) = (300, 200, 90);
        let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, &a, true, &b, false, &mut c, false);
                c
            })
        };
        assert_eq!(run(1), run(4));
    }
}
