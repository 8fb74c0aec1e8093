// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense operators on the quantum factor: Hermitian/PSD predicates,
//! commutators, Lindblad dissipators, vectorization, and the standard
//! constructions (Pauli matrices, truncated ladder operators, coherent
//! states).
//!
//! Oscillators are represented in a truncated number basis; position and
//! momentum use hbar = 1, Q = (a + a†)/sqrt(2), P = i(a† - a)/sqrt(2).
//! Truncation error is the caller's to monitor (see
//! `HybridState::truncation_tail`).
//!
//! Ref: Breuer & Petruccione, "The Theory of Open Quantum Systems" (2002).

use ndarray::{Array1, Array2};


use crate::error::{CqError, Result};
use crate::linalg::{self, C64, ONE, ZERO};

/// Tolerance below which an operator counts as traceless.
pub const TRACELESS_TOL: f64 = 1e-12;

/// Default Hermiticity tolerance used throughout.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// A dense operator on the quantum Hilbert space (always square).
#[derive(Debug, Clone, PartialEq)]
pub struct QOperator {
    mat: Array2<C64>,
}

impl QOperator {
    pub fn new(mat: Array2<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(CqError::DimensionMismatch {
                context: "QOperator must be square",
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        Ok(QOperator { mat })
    }

    pub fn zeros(dim: usize) -> Self {
        QOperator { mat: Array2::zeros((dim, dim)) }
    }

    pub fn identity(dim: usize) -> Self {
        QOperator { mat: Array2::eye(dim) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.mat
    }

    pub fn dagger(&self) -> QOperator {
        QOperator { mat: linalg::dagger(&self.mat) }
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.mat)
    }

    pub fn frobenius(&self) -> f64 {
        linalg::frobenius(&self.mat)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        linalg::asymmetry(&self.mat) <= tol
    }

    /// Smallest eigenvalue; the operator must be Hermitian within `tol`
    /// (it is symmetrized before the solve). PSD iff the result >= -tol.
    pub fn min_eigenvalue(&self, tol: f64) -> Result<f64> {
        linalg::min_eig_hermitian(&self.mat, tol)
    }

    /// Operator 2-norm (largest singular value).
    pub fn op_norm(&self) -> f64 {
        let g = linalg::dagger(&self.mat).dot(&self.mat);
        let vals = linalg::hermitian_eigenvalues(&g);
        vals[vals.len() - 1].max(0.0).sqrt()
    }

    // -- standard constructions ------------------------------------------

    pub fn sigma_x() -> Self {
        QOperator { mat: ndarray::array![[ZERO, ONE], [ONE, ZERO]] }
    }

    pub fn sigma_y() -> Self {
        QOperator {
            mat: ndarray::array![[ZERO, C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), ZERO]],
        }
    }

    pub fn sigma_z() -> Self {
        QOperator { mat: ndarray::array![[ONE, ZERO], [ZERO, -ONE]] }
    }

    pub fn sigma_minus() -> Self {
        QOperator { mat: ndarray::array![[ZERO, ONE], [ZERO, ZERO]] }
    }

    /// Truncated annihilation operator, a|n> = sqrt(n)|n-1>.
    pub fn annihilation(dim: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        for n in 1..dim {
            m[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
        }
        QOperator { mat: m }
    }

    pub fn creation(dim: usize) -> Self {
        Self::annihilation(dim).dagger()
    }

    pub fn number(dim: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        for n in 0..dim {
            m[[n, n]] = C64::new(n as f64, 0.0);
        }
        QOperator { mat: m }
    }

    /// Position quadrature Q = (a + a†)/sqrt(2).
    pub fn position(dim: usize) -> Self {
        let a = Self::annihilation(dim);
        let m = (&a.mat + &linalg::dagger(&a.mat)) * C64::new(1.0 / f64::sqrt(2.0), 0.0);
        QOperator { mat: m }
    }

    /// Momentum quadrature P = i(a† - a)/sqrt(2).
    pub fn momentum(dim: usize) -> Self {
        let a = Self::annihilation(dim);
        let m = (&linalg::dagger(&a.mat) - &a.mat) * C64::new(0.0, 1.0 / f64::sqrt(2.0));
        QOperator { mat: m }
    }

    /// Harmonic oscillator Hamiltonian (P^2 + omega^2 Q^2)/2 in the
    /// truncated number basis.
    pub fn oscillator_hamiltonian(dim: usize, omega: f64) -> Self {
        let q = Self::position(dim).mat;
        let p = Self::momentum(dim).mat;
        let m = (p.dot(&p) + q.dot(&q) * C64::new(omega * omega, 0.0)) * C64::new(0.5, 0.0);
        QOperator { mat: m }
    }

    /// Normalized coherent-state ket in the truncated number basis.
    pub fn coherent_ket(dim: usize, alpha: C64) -> Array1<C64> {
        let mut v = Array1::zeros(dim);
        let mut amp = ONE; // alpha^n / sqrt(n!)
        for n in 0..dim {
            if n > 0 {
                amp = amp * alpha / C64::new((n as f64).sqrt(), 0.0);
            }
            v[n] = amp;
        }
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v / C64::new(norm, 0.0)
    }

    /// Density matrix of a coherent state.
    pub fn coherent_state(dim: usize, alpha: C64) -> Self {
        Self::from_ket(&Self::coherent_ket(dim, alpha))
    }

    /// |k><k| in the computational/number basis.
    pub fn basis_state(dim: usize, k: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        m[[k, k]] = ONE;
        QOperator { mat: m }
    }

    /// |psi><psi| from a ket (not renormalized).
    pub fn from_ket(ket: &Array1<C64>) -> Self {
        let dim = ket.len();
        let mat = Array2::from_shape_fn((dim, dim), |(i, j)| ket[i] * ket[j].conj());
        QOperator { mat }
    }
}

impl From<Array2<C64>> for QOperator {
    fn from(mat: Array2<C64>) -> Self {
        QOperator::new(mat).expect("matrix must be square")
    }
}

/// An ordered set of Lindblad operators sharing one Hilbert dimension.
///
/// Basis convention: where an orthogonality normalization matters (e.g. the
/// Pauli basis) we take Tr(La† Lb) = delta_ab * dim; nothing in the generator
/// assumes orthogonality, it only assumes the set excludes the identity.
#[derive(Debug, Clone)]
pub struct LindbladSet {
    ops: Vec<QOperator>,
    dim: usize,
    traceless: bool,
}

impl LindbladSet {
    pub fn new(ops: Vec<QOperator>) -> Result<Self> {
        let dim = ops.first().map(|o| o.dim()).unwrap_or(0);
        for op in &ops {
            if op.dim() != dim {
                return Err(CqError::DimensionMismatch {
                    context: "Lindblad operators must share one dimension",
                    expected: dim,
                    got: op.dim(),
                });
            }
        }
        Ok(LindbladSet { ops, dim, traceless: false })
    }

    /// No dissipation channels on a dim-dimensional Hilbert space.
    pub fn empty(dim: usize) -> Self {
        LindbladSet { ops: Vec::new(), dim, traceless: true }
    }

    /// Like [`LindbladSet::new`] but additionally requires each operator to
    /// be traceless within [`TRACELESS_TOL`].
    pub fn new_traceless(ops: Vec<QOperator>) -> Result<Self> {
        let set = Self::new(ops)?;
        for op in &set.ops {
            let t = op.trace().norm();
            if t > TRACELESS_TOL {
                return Err(CqError::NotTraceless { trace: t });
            }
        }
        Ok(LindbladSet { traceless: true, ..set })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ops(&self) -> &[QOperator] {
        &self.ops
    }

    pub fn is_traceless(&self) -> bool {
        self.traceless
    }
}

/// Lindblad dissipator D[L](rho) = L rho L† - ½{L†L, rho}.
pub fn dissipator(l: &QOperator, rho: &QOperator) -> Result<QOperator> {
    if l.dim() != rho.dim() {
        return Err(CqError::DimensionMismatch {
            context: "dissipator operands",
            expected: l.dim(),
            got: rho.dim(),
        });
    }
    let ld = linalg::dagger(l.matrix());
    let ldl = ld.dot(l.matrix());
    let gain = l.matrix().dot(rho.matrix()).dot(&ld);
    let half = C64::new(0.5, 0.0);
    let loss = (ldl.dot(rho.matrix()) + rho.matrix().dot(&ldl)) * half;
    Ok(QOperator { mat: gain - loss })
}

/// -i[H, rho].
pub fn commutator_rhs(h: &QOperator, rho: &QOperator) -> Result<QOperator> {
    if h.dim() != rho.dim() {
        return Err(CqError::DimensionMismatch {
            context: "commutator operands",
            expected: h.dim(),
            got: rho.dim(),
        });
    }
    let hr = h.matrix().dot(rho.matrix());
    let rh = rho.matrix().dot(h.matrix());
    Ok(QOperator { mat: (hr - rh) * C64::new(0.0, -1.0) })
}

/// Column-stacking vectorization |i><j| -> |j> (x) |i>: vec(A)[j*n + i] = A[i, j].
pub fn vectorize(a: &QOperator) -> Array1<C64> {
    let n = a.dim();
    let mut v = Array1::zeros(n * n);
    for j in 0..n {
        for i in 0..n {
            v[j * n + i] = a.matrix()[[i, j]];
        }
    }
    v
}

/// Inverse of [`vectorize`]; errors unless the length is a perfect square.
pub fn devectorize(v: &Array1<C64>) -> Result<QOperator> {
    let len = v.len();
    let n = (len as f64).sqrt().round() as usize;
    if n * n != len {
        return Err(CqError::DimensionMismatch {
            context: "devectorize needs a perfect-square length",
            expected: n * n,
            got: len,
        });
    }
    let mat = Array2::from_shape_fn((n, n), |(i, j)| v[j * n + i]);
    Ok(QOperator { mat })
}

/// A superoperator as a matrix on the doubled (vectorized) space.
#[derive(Debug, Clone)]
pub struct VectorizedOp {
    dim: usize,
    mat: Array2<C64>,
}

impl VectorizedOp {
    pub fn new(dim: usize, mat: Array2<C64>) -> Result<Self> {
        if mat.nrows() != dim * dim || mat.ncols() != dim * dim {
            return Err(CqError::DimensionMismatch {
                context: "VectorizedOp must be dim^2 x dim^2",
                expected: dim * dim,
                got: mat.nrows(),
            });
        }
        Ok(VectorizedOp { dim, mat })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn apply_vec(&self, v: &Array1<C64>) -> Array1<C64> {
        self.mat.dot(v)
    }

    pub fn apply(&self, rho: &QOperator) -> Result<QOperator> {
        devectorize(&self.mat.dot(&vectorize(rho)))
    }
}

/// Kronecker product a (x) b.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Superoperator for rho -> L rho R†, i.e. conj(R) (x) L under column
/// stacking.
pub fn superop_from_pair(l: &QOperator, r: &QOperator) -> Result<VectorizedOp> {
    if l.dim() != r.dim() {
        return Err(CqError::DimensionMismatch {
            context: "superop_from_pair operands",
            expected: l.dim(),
            got: r.dim(),
        });
    }
    let rconj = r.matrix().mapv(|z| z.conj());
    VectorizedOp::new(l.dim(), kron(&rconj, l.matrix()))
}
