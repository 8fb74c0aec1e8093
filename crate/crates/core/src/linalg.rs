// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra helpers.
//!
//! Everything here works on row-major `ndarray::Array2<Complex64>` (or raw
//! row-major slices in the hot kernels). Decompositions (Hermitian eigen,
//! SVD) are delegated to `nalgebra`; the multiply kernels are hand-rolled
//! because the simulation spends most of its time on small (n ≲ 32) matrix
//! products where a banded fast path beats a general GEMM.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{CqError, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Conjugate transpose.
pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// Max-entry deviation from Hermiticity, max_ij |a_ij - conj(a_ji)|.
pub fn asymmetry(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (a[[i, j]] - a[[j, i]].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// (A + A†)/2.
pub fn hermitize(a: &Array2<C64>) -> Array2<C64> {
    let ad = dagger(a);
    (a + &ad) * C64::new(0.5, 0.0)
}

pub fn frobenius(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().iter().sum()
}

/// Dense row-major product accumulate: out += alpha * a * b.
///
/// ikj loop order keeps the inner loop contiguous on both `b` and `out`.
pub(crate) fn mm_acc(alpha: C64, a: &[C64], b: &[C64], n: usize, out: &mut [C64]) {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * n);
    debug_assert_eq!(out.len(), n * n);
    for i in 0..n {
        let arow = &a[i * n..(i + 1) * n];
        let orow = &mut out[i * n..(i + 1) * n];
        for (k, &aik) in arow.iter().enumerate() {
            let c = alpha * aik;
            if c == ZERO {
                continue;
            }
            let brow = &b[k * n..(k + 1) * n];
            for (o, &bkj) in orow.iter_mut().zip(brow.iter()) {
                *o += c * bkj;
            }
        }
    }
}

/// A constant operator with its bandwidth noted once, so repeated products
/// against many density matrices can skip the zero bands. `bw = n - 1`
/// degenerates to a dense product.
#[derive(Debug, Clone)]
pub(crate) struct BandedOp {
    pub n: usize,
    pub bw: usize,
    pub data: Vec<C64>, // row-major dense storage
}

impl BandedOp {
    pub fn from_matrix(m: &Array2<C64>) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols());
        let mut bw = 0usize;
        for i in 0..n {
            for j in 0..n {
                if m[[i, j]] != ZERO {
                    bw = bw.max(i.abs_diff(j));
                }
            }
        }
        let data = m.iter().cloned().collect();
        BandedOp { n, bw, data }
    }

    /// out += alpha * self * x
    pub fn mul_left_acc(&self, alpha: C64, x: &[C64], out: &mut [C64]) {
        let n = self.n;
        for i in 0..n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw + 1).min(n);
            let orow = &mut out[i * n..(i + 1) * n];
            for k in lo..hi {
                let c = alpha * self.data[i * n + k];
                if c == ZERO {
                    continue;
                }
                let xrow = &x[k * n..(k + 1) * n];
                for (o, &v) in orow.iter_mut().zip(xrow.iter()) {
                    *o += c * v;
                }
            }
        }
    }

    /// out += alpha * x * self
    pub fn mul_right_acc(&self, alpha: C64, x: &[C64], out: &mut [C64]) {
        let n = self.n;
        for i in 0..n {
            let xrow = &x[i * n..(i + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (k, &xik) in xrow.iter().enumerate() {
                let c = alpha * xik;
                if c == ZERO {
                    continue;
                }
                let lo = k.saturating_sub(self.bw);
                let hi = (k + self.bw + 1).min(n);
                for j in lo..hi {
                    orow[j] += c * self.data[k * n + j];
                }
            }
        }
    }
}

fn to_nalgebra(a: &Array2<C64>) -> nalgebra::DMatrix<C64> {
    nalgebra::DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_nalgebra(m: &nalgebra::DMatrix<C64>) -> Array2<C64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// The input is symmetrized as (A + A†)/2 before solving; callers that need
/// to reject non-Hermitian input should check [`asymmetry`] first.
pub fn hermitian_eigen(a: &Array2<C64>) -> (Array1<f64>, Array2<C64>) {
    let h = hermitize(a);
    let eig = to_nalgebra(&h).symmetric_eigen();
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let vecs = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// Eigenvalues only, ascending.
pub fn hermitian_eigenvalues(a: &Array2<C64>) -> Array1<f64> {
    let h = hermitize(a);
    let mut vals: Vec<f64> = to_nalgebra(&h)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Array1::from_vec(vals)
}

/// Smallest eigenvalue of a Hermitian matrix; errors if the input deviates
/// from Hermiticity by more than `tol`.
pub fn min_eig_hermitian(a: &Array2<C64>, tol: f64) -> Result<f64> {
    let asym = asymmetry(a);
    if asym > tol {
        return Err(CqError::NotHermitian { asymmetry: asym, tol });
    }
    Ok(hermitian_eigenvalues(a)[0])
}

/// Gershgorin lower bound on the smallest eigenvalue of a Hermitian matrix.
/// Cheap (O(n^2)) screen used before committing to a full eigensolve.
pub fn gershgorin_lower_bound(a: &[C64], n: usize) -> f64 {
    let mut bound = f64::INFINITY;
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        let mut radius = 0.0;
        for (j, z) in row.iter().enumerate() {
            if j != i {
                radius += z.norm();
            }
        }
        let b = row[i].re - radius;
        if b < bound {
            bound = b;
        }
    }
    bound
}

/// Cholesky feasibility test: true iff the Hermitian matrix in `a`
/// (row-major) plus `shift` times the identity admits a Cholesky
/// factorization, i.e. its smallest eigenvalue is >= -shift (up to a tiny
/// pivot tolerance). O(n^3/3), allocation-free given scratch of n*n.
pub(crate) fn psd_with_shift(a: &[C64], n: usize, shift: f64, scratch: &mut [C64]) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert!(scratch.len() >= n * n);
    scratch[..n * n].copy_from_slice(a);
    let tol = 1e-14 * (1.0 + shift.abs());
    for k in 0..n {
        let mut pivot = scratch[k * n + k].re + shift;
        for j in 0..k {
            pivot -= scratch[k * n + j].norm_sqr();
        }
        if pivot < -tol {
            return false;
        }
        let pivot = pivot.max(0.0).sqrt();
        if pivot == 0.0 {
            // singular direction: remaining column must vanish too
            for i in k + 1..n {
                let mut v = scratch[i * n + k];
                for j in 0..k {
                    v -= scratch[i * n + j] * scratch[k * n + j].conj();
                }
                if v.norm() > 1e-10 {
                    return false;
                }
                scratch[i * n + k] = ZERO;
            }
            scratch[k * n + k] = ZERO;
            continue;
        }
        scratch[k * n + k] = C64::new(pivot, 0.0);
        for i in k + 1..n {
            let mut v = scratch[i * n + k];
            for j in 0..k {
                v -= scratch[i * n + j] * scratch[k * n + j].conj();
            }
            scratch[i * n + k] = v / pivot;
        }
    }
    true
}

/// Thin SVD: A = U diag(s) V†, singular values descending.
pub fn svd(a: &Array2<C64>) -> (Array2<C64>, Array1<f64>, Array2<C64>) {
    let svd = to_nalgebra(a).svd(true, true);
    let u = from_nalgebra(&svd.u.expect("svd requested u"));
    let vt = from_nalgebra(&svd.v_t.expect("svd requested v_t"));
    let s = Array1::from_iter(svd.singular_values.iter().cloned());
    (u, s, vt)
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
///
/// Singular values below `rel_cutoff * s_max` are treated as exactly zero.
/// Returns the pseudo-inverse, the numerical rank, and whether the cutoff
/// actually discarded a direction.
pub fn pseudo_inverse(a: &Array2<C64>, rel_cutoff: f64) -> (Array2<C64>, usize, bool) {
    let (u, s, vt) = svd(a);
    let smax = s.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_cutoff * smax;
    let mut rank = 0usize;
    let mut dropped = false;
    let k = s.len();
    let mut sinv = Array1::<f64>::zeros(k);
    for (i, &sv) in s.iter().enumerate() {
        if sv > cut && sv > 0.0 {
            sinv[i] = 1.0 / sv;
            rank += 1;
        } else if sv > 0.0 {
            dropped = true;
        }
    }
    // pinv = V diag(sinv) U†
    let (m, n) = (a.nrows(), a.ncols());
    let mut pinv = Array2::<C64>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut acc = ZERO;
            for l in 0..k {
                acc += vt[[l, i]].conj() * C64::new(sinv[l], 0.0) * u[[j, l]].conj();
            }
            pinv[[i, j]] = acc;
        }
    }
    (pinv, rank, dropped)
}

/// Least-squares solution of min ||A x - y||_2 via SVD with a relative
/// singular-value cutoff.
pub struct Lstsq {
    pub x: Array1<f64>,
    pub residual_norm: f64,
    /// Condition number over the kept directions.
    pub cond: f64,
    /// Directions discarded by the cutoff (structural or probe-deficient
    /// nulls; their parameters come back as the minimum-norm 0).
    pub dropped: usize,
    /// Per-parameter noise amplification: stderr_j = sigma * sensitivity_j
    /// for observation noise sigma.
    pub sensitivity: Array1<f64>,
}

pub fn lstsq(a: &Array2<f64>, y: &Array1<f64>, rel_cutoff: f64) -> Lstsq {
    let ac = a.mapv(|v| C64::new(v, 0.0));
    let (u, s, vt) = svd(&ac);
    let smax = s.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_cutoff * smax;
    let k = s.len();
    let n = a.ncols();
    let mut x = Array1::<f64>::zeros(n);
    let mut sens2 = Array1::<f64>::zeros(n);
    let mut smin_kept = f64::INFINITY;
    let mut dropped = 0usize;
    for l in 0..k {
        if s[l] > cut && s[l] > 0.0 {
            smin_kept = smin_kept.min(s[l]);
            // coefficient (u_l . y) / s_l
            let mut uy = ZERO;
            for j in 0..a.nrows() {
                uy += u[[j, l]].conj() * C64::new(y[j], 0.0);
            }
            let coef = uy / C64::new(s[l], 0.0);
            for i in 0..n {
                x[i] += (vt[[l, i]].conj() * coef).re;
                sens2[i] += vt[[l, i]].norm_sqr() / (s[l] * s[l]);
            }
        } else {
            dropped += 1;
        }
    }
    let mut res = 0.0;
    for j in 0..a.nrows() {
        let mut pred = 0.0;
        for i in 0..n {
            pred += a[[j, i]] * x[i];
        }
        res += (pred - y[j]).powi(2);
    }
    let cond = if smin_kept.is_finite() && smin_kept > 0.0 {
        smax / smin_kept
    } else {
        f64::INFINITY
    };
    Lstsq {
        x,
        residual_norm: res.sqrt(),
        cond,
        dropped,
        sensitivity: sens2.mapv(f64::sqrt),
    }
}

/// Matrix exponential by scaling-and-squaring with a degree-13 Padé
/// approximant (Higham 2005).
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    const THETA13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    // 1-norm (max column sum)
    let mut norm1 = 0.0f64;
    for j in 0..n {
        let col: f64 = (0..n).map(|i| a[[i, j]].norm()).sum();
        norm1 = norm1.max(col);
    }
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let scale = C64::new(1.0 / f64::powi(2.0, s as i32), 0.0);
    let asc = a * scale;

    let eye = Array2::<C64>::eye(n);
    let a2 = asc.dot(&asc);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let w1 = &a6 * C64::new(B[13], 0.0) + &a4 * C64::new(B[11], 0.0) + &a2 * C64::new(B[9], 0.0);
    let w2 = &a6 * C64::new(B[7], 0.0)
        + &a4 * C64::new(B[5], 0.0)
        + &a2 * C64::new(B[3], 0.0)
        + &eye * C64::new(B[1], 0.0);
    let u = asc.dot(&(a6.dot(&w1) + w2));

    let z1 = &a6 * C64::new(B[12], 0.0) + &a4 * C64::new(B[10], 0.0) + &a2 * C64::new(B[8], 0.0);
    let v = a6.dot(&z1)
        + &a6 * C64::new(B[6], 0.0)
        + &a4 * C64::new(B[4], 0.0)
        + &a2 * C64::new(B[2], 0.0)
        + &eye * C64::new(B[0], 0.0);

    // Solve (V - U) X = (V + U)
    let lhs = to_nalgebra(&(&v - &u));
    let rhs = to_nalgebra(&(&v + &u));
    let x = lhs
        .lu()
        .solve(&rhs)
        .expect("Pade denominator is singular; input may contain non-finite values");
    let mut r = from_nalgebra(&x);
    for _ in 0..s {
        r = r.dot(&r);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn hermitian_eigen_sorts_and_reconstructs() {
        let a = ndarray::array![
            [c(2.0, 0.0), c(0.0, 1.0), c(0.3, 0.0)],
            [c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 0.0)],
            [c(0.3, 0.0), c(0.0, 0.0), c(0.5, 0.0)]
        ];
        let (vals, vecs) = hermitian_eigen(&a);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let lam = Array2::from_diag(&vals.mapv(|v| c(v, 0.0)));
        let recon = vecs.dot(&lam).dot(&dagger(&vecs));
        assert!(frobenius(&(&recon - &a)) < 1e-12);
    }

    #[test]
    fn min_eig_rejects_non_hermitian() {
        let a = ndarray::array![[c(1.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        match min_eig_hermitian(&a, 1e-10) {
            Err(CqError::NotHermitian { asymmetry, .. }) => assert!(asymmetry > 0.9),
            other => panic!("expected NotHermitian, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn min_eig_diagonal() {
        let a = ndarray::array![[c(3.0, 0.0), ZERO], [ZERO, c(-2.0, 0.0)]];
        assert_relative_eq!(min_eig_hermitian(&a, 1e-10).unwrap(), -2.0, epsilon = 1e-12);
        let id = Array2::<C64>::eye(4);
        assert_relative_eq!(min_eig_hermitian(&id, 1e-10).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gram_matrices_are_psd() {
        // A†A is PSD by construction.
        let mut rng = 1234u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..20 {
            let a = Array2::from_shape_fn((5, 5), |_| c(next(), next()));
            let g = dagger(&a).dot(&a);
            assert!(min_eig_hermitian(&g, 1e-9).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn pseudo_inverse_of_rank_deficient() {
        // D = diag(2, 0): pinv = diag(0.5, 0), and the cutoff is reported.
        let d = ndarray::array![[c(2.0, 0.0), ZERO], [ZERO, c(1e-15, 0.0)]];
        let (p, rank, dropped) = pseudo_inverse(&d, 1e-12);
        assert_eq!(rank, 1);
        assert!(dropped);
        assert_relative_eq!(p[[0, 0]].re, 0.5, epsilon = 1e-14);
        assert_relative_eq!(p[[1, 1]].re, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn pseudo_inverse_zero_matrix() {
        let z = Array2::<C64>::zeros((3, 2));
        let (p, rank, _) = pseudo_inverse(&z, 1e-12);
        assert_eq!(rank, 0);
        assert_eq!(frobenius(&p), 0.0);
    }

    #[test]
    fn banded_matches_dense() {
        let n = 7;
        let mut m = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = c(i as f64, 0.1);
            if i + 1 < n {
                m[[i, i + 1]] = c(0.5, -0.2);
                m[[i + 1, i]] = c(0.5, 0.2);
            }
        }
        let op = BandedOp::from_matrix(&m);
        assert_eq!(op.bw, 1);
        let x = Array2::from_shape_fn((n, n), |(i, j)| c((i * j) as f64, (i + j) as f64));
        let xs: Vec<C64> = x.iter().cloned().collect();
        let alpha = c(1.3, -0.4);

        let mut out_l = vec![ZERO; n * n];
        op.mul_left_acc(alpha, &xs, &mut out_l);
        let want_l = m.dot(&x) * alpha;
        let mut out_r = vec![ZERO; n * n];
        op.mul_right_acc(alpha, &xs, &mut out_r);
        let want_r = x.dot(&m) * alpha;
        for i in 0..n {
            for j in 0..n {
                assert!((out_l[i * n + j] - want_l[[i, j]]).norm() < 1e-12);
                assert!((out_r[i * n + j] - want_r[[i, j]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn mm_acc_matches_ndarray_dot() {
        let n = 6;
        let a = Array2::from_shape_fn((n, n), |(i, j)| c(i as f64 - j as f64, 0.3 * j as f64));
        let b = Array2::from_shape_fn((n, n), |(i, j)| c(0.1 * (i + j) as f64, -(i as f64)));
        let av: Vec<C64> = a.iter().cloned().collect();
        let bv: Vec<C64> = b.iter().cloned().collect();
        let mut out = vec![ZERO; n * n];
        mm_acc(c(2.0, 1.0), &av, &bv, n, &mut out);
        let want = a.dot(&b) * c(2.0, 1.0);
        for i in 0..n {
            for j in 0..n {
                assert!((out[i * n + j] - want[[i, j]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn expm_nilpotent_and_diagonal() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]]
        let a = ndarray::array![[ZERO, ONE], [ZERO, ZERO]];
        let e = expm(&a);
        assert!(frobenius(&(&e - &ndarray::array![[ONE, ONE], [ZERO, ONE]])) < 1e-14);

        // exp(diag(i pi, -2)) = diag(-1, e^-2)
        let d = ndarray::array![
            [c(0.0, std::f64::consts::PI), ZERO],
            [ZERO, c(-2.0, 0.0)]
        ];
        let ed = expm(&d);
        assert!((ed[[0, 0]] - c(-1.0, 0.0)).norm() < 1e-13);
        assert!((ed[[1, 1]] - c((-2.0f64).exp(), 0.0)).norm() < 1e-13);
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        // exp(t K) for K = [[0, 1], [-1, 0]] is a rotation by t.
        let t = 37.3;
        let k = ndarray::array![[ZERO, c(t, 0.0)], [c(-t, 0.0), ZERO]];
        let e = expm(&k);
        assert_relative_eq!(e[[0, 0]].re, t.cos(), epsilon = 1e-11);
        assert_relative_eq!(e[[0, 1]].re, t.sin(), epsilon = 1e-11);
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let a = ndarray::array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let x_true = ndarray::array![0.7, -1.3];
        let y = a.dot(&x_true);
        let fit = lstsq(&a, &y, 1e-12);
        assert!(fit.residual_norm < 1e-12);
        assert_eq!(fit.dropped, 0);
        assert!(fit.cond < 10.0);
        assert_relative_eq!(fit.x[0], 0.7, epsilon = 1e-12);
        assert_relative_eq!(fit.x[1], -1.3, epsilon = 1e-12);
        assert!(fit.sensitivity.iter().all(|s| *s > 0.0));
    }
}
