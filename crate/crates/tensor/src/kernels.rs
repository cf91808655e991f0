//! Matrix-multiply kernels behind the tensor ops.
//!
//! Every kernel comes in two flavours: the default entry point, which splits
//! the output rows across the rayon pool when the `parallel` feature is
//! enabled, and a `*_seq` variant that always runs on the calling thread.
//! Each output element is a single left-to-right dot product, so the parallel
//! and sequential paths produce bit-identical results regardless of thread
//! count; the `*_seq` variants exist as the fallback path and as the baseline
//! for the criterion benches.

/// Work sizes below this run sequentially even with `parallel` enabled;
/// forking the pool costs more than the multiply for tiny matrices.
const PAR_THRESHOLD: usize = 16_384;

#[cfg(feature = "parallel")]
fn row_parallel<F>(out: &mut [f64], width: usize, flops: usize, per_row: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    use rayon::prelude::*;
    if flops < PAR_THRESHOLD {
        for (i, row) in out.chunks_mut(width).enumerate() {
            per_row(i, row);
        }
    } else {
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| per_row(i, row));
    }
}

#[cfg(not(feature = "parallel"))]
fn row_parallel<F>(out: &mut [f64], width: usize, _flops: usize, per_row: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    for (i, row) in out.chunks_mut(width).enumerate() {
        per_row(i, row);
    }
}

/// C[m,n] = A[m,k] * B[k,n]
pub fn matmul_nn(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    row_parallel(c, n, m * k * n, |i, row| nn_row(row, a, b, i, k, n));
}

/// Sequential reference for [`matmul_nn`].
pub fn matmul_nn_seq(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    for (i, row) in c.chunks_mut(n).enumerate() {
        nn_row(row, a, b, i, k, n);
    }
}

fn nn_row(row: &mut [f64], a: &[f64], b: &[f64], i: usize, k: usize, n: usize) {
    row.fill(0.0);
    let a_row = &a[i * k..(i + 1) * k];
    for (p, &a_ip) in a_row.iter().enumerate() {
        let b_row = &b[p * n..(p + 1) * n];
        for (c_ij, &b_pj) in row.iter_mut().zip(b_row) {
            *c_ij += a_ip * b_pj;
        }
    }
}

/// C[m,n] = A[m,k] * B[n,k]^T
pub fn matmul_nt(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    row_parallel(c, n, m * k * n, |i, row| nt_row(row, a, b, i, k, n));
}

/// Sequential reference for [`matmul_nt`].
pub fn matmul_nt_seq(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    for (i, row) in c.chunks_mut(n).enumerate() {
        nt_row(row, a, b, i, k, n);
    }
}

fn nt_row(row: &mut [f64], a: &[f64], b: &[f64], i: usize, k: usize, n: usize) {
    let a_row = &a[i * k..(i + 1) * k];
    for (j, c_ij) in row.iter_mut().enumerate() {
        let b_row = &b[j * k..(j + 1) * k];
        let mut s = 0.0;
        for (&x, &y) in a_row.iter().zip(b_row) {
            s += x * y;
        }
        *c_ij = s;
    }
    let _ = n;
}

/// C[k,n] = A[m,k]^T * B[m,n]
pub fn matmul_tn(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), k * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    row_parallel(c, n, m * k * n, |r, row| tn_row(row, a, b, r, m, k, n));
}

/// Sequential reference for [`matmul_tn`].
pub fn matmul_tn_seq(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), k * n);
    for (r, row) in c.chunks_mut(n).enumerate() {
        tn_row(row, a, b, r, m, k, n);
    }
}

fn tn_row(row: &mut [f64], a: &[f64], b: &[f64], r: usize, m: usize, k: usize, n: usize) {
    row.fill(0.0);
    for i in 0..m {
        let a_ir = a[i * k + r];
        let b_row = &b[i * n..(i + 1) * n];
        for (c_rj, &b_ij) in row.iter_mut().zip(b_row) {
            *c_rj += a_ir * b_ij;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn nn_matches_identity() {
        let a = vec![1.0, 0.0, 0.0, 1.0];
        let b = vec![1.0, 2.0, 3.0, 4.0];
        let mut c = vec![0.0; 4];
        matmul_nn(&mut c, &a, &b, 2, 2, 2);
        assert_eq!(c, b);
    }

    #[test]
    fn parallel_and_sequential_paths_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Sizes straddle PAR_THRESHOLD so both dispatch branches are hit.
        for &(m, k, n) in &[(3, 4, 2), (40, 33, 27), (64, 64, 64)] {
            let a = random(m * k, &mut rng);
            let b = random(k * n, &mut rng);
            let mut c_par = vec![0.0; m * n];
            let mut c_seq = vec![0.0; m * n];
            matmul_nn(&mut c_par, &a, &b, m, k, n);
            matmul_nn_seq(&mut c_seq, &a, &b, m, k, n);
            assert_eq!(c_par, c_seq);

            let bt = random(n * k, &mut rng);
            let mut d_par = vec![0.0; m * n];
            let mut d_seq = vec![0.0; m * n];
            matmul_nt(&mut d_par, &a, &bt, m, k, n);
            matmul_nt_seq(&mut d_seq, &a, &bt, m, k, n);
            assert_eq!(d_par, d_seq);

            let b2 = random(m * n, &mut rng);
            let mut e_par = vec![0.0; k * n];
            let mut e_seq = vec![0.0; k * n];
            matmul_tn(&mut e_par, &a, &b2, m, k, n);
            matmul_tn_seq(&mut e_seq, &a, &b2, m, k, n);
            assert_eq!(e_par, e_seq);
        }
    }

    #[test]
    fn transposed_kernels_agree_with_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (m, k, n) = (5, 7, 3);
        let a = random(m * k, &mut rng);
        let b = random(k * n, &mut rng);

        // A * B via nt against B^T materialized.
        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c_nn = vec![0.0; m * n];
        let mut c_nt = vec![0.0; m * n];
        matmul_nn(&mut c_nn, &a, &b, m, k, n);
        matmul_nt(&mut c_nt, &a, &bt, m, k, n);
        for (x, y) in c_nn.iter().zip(&c_nt) {
            assert!((x - y).abs() < 1e-12);
        }

        // A^T * C via tn against A^T materialized.
        let c = random(m * n, &mut rng);
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for r in 0..k {
                at[r * m + i] = a[i * k + r];
            }
        }
        let mut d_tn = vec![0.0; k * n];
        let mut d_nn = vec![0.0; k * n];
        matmul_tn(&mut d_tn, &a, &c, m, k, n);
        matmul_nn(&mut d_nn, &at, &c, k, m, n);
        for (x, y) in d_tn.iter().zip(&d_nn) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
