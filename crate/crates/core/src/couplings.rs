// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Coupling data for the continuous master equation.
//!
//! A [`CouplingSet`] holds, per grid point or as constants:
//!
//! * `d0` — the p x p Hermitian PSD Lindblad coupling matrix,
//! * `d1` — the d x p back-reaction matrix (rows = classical axes, columns =
//!   Lindblad operators); its conjugate partner block is derived, never
//!   stored,
//! * `drift` — the real classical drift vector (Poisson-bracket flow plus
//!   stochastic drift), entering the generator as -d/dz_i(drift_i rho),
//! * `d2` — the real symmetric PSD d x d diffusion matrix, entering as
//!   +d^2/dz_i dz_j (d2_ij rho),
//! * a Hamiltonian H(z), and an optional friction term
//!   gamma * d/dz_i (z_i rho) on designated momentum axes.
//!
//! Only first-derivative back-reaction and second-derivative diffusion are
//! representable here: truncating the classical-quantum expansion at any
//! higher order cannot be completely positive, so finite-jump dynamics live
//! in [`crate::jump`] instead.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{CqError, Result};
use crate::grid::{MatrixField, PhaseGrid, ScalarField};
use crate::linalg::{self, C64};
use crate::qop::{LindbladSet, QOperator, HERMITICITY_TOL};
use crate::validity::{MomentKey, MomentTable};

/// A quantity that is either one value for the whole grid or one value per
/// grid point.
#[derive(Debug, Clone)]
pub enum Coupling<T> {
    Constant(T),
    PerPoint(Vec<T>),
}

impl<T> Coupling<T> {
    pub fn at(&self, idx: usize) -> &T {
        match self {
            Coupling::Constant(v) => v,
            Coupling::PerPoint(vs) => &vs[idx],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coupling::Constant(_))
    }

    fn check_len(&self, npts: usize, context: &'static str) -> Result<()> {
        match self {
            Coupling::Constant(_) => Ok(()),
            Coupling::PerPoint(vs) if vs.len() == npts => Ok(()),
            Coupling::PerPoint(vs) => Err(CqError::DimensionMismatch {
                context,
                expected: npts,
                got: vs.len(),
            }),
        }
    }
}

/// H(z): constant, separable (base + sum of scalar-field times constant
/// operator, the form every bundled scenario uses), or fully general
/// per-point.
#[derive(Debug, Clone)]
pub enum HamiltonianSpec {
    Constant(QOperator),
    Separable { base: QOperator, terms: Vec<(ScalarField, QOperator)> },
    PerPoint(MatrixField),
}

impl HamiltonianSpec {
    pub fn dim(&self) -> usize {
        match self {
            HamiltonianSpec::Constant(h) => h.dim(),
            HamiltonianSpec::Separable { base, .. } => base.dim(),
            HamiltonianSpec::PerPoint(f) => f.nq(),
        }
    }

    /// Materialize H at one grid point.
    pub fn at(&self, idx: usize) -> Array2<C64> {
        match self {
            HamiltonianSpec::Constant(h) => h.matrix().clone(),
            HamiltonianSpec::Separable { base, terms } => {
                let mut m = base.matrix().clone();
                for (f, op) in terms {
                    let c = Complex64::new(f.values()[idx], 0.0);
                    m.zip_mut_with(op.matrix(), |a, b| *a += c * b);
                }
                m
            }
            HamiltonianSpec::PerPoint(f) => {
                let nq = f.nq();
                Array2::from_shape_fn((nq, nq), |(r, c)| f.block(idx)[r * nq + c])
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Friction {
    pub gamma: f64,
    pub axes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CouplingSet {
    pub lindblads: LindbladSet,
    pub hamiltonian: HamiltonianSpec,
    pub d0: Coupling<Array2<C64>>,
    pub d1: Coupling<Array2<C64>>,
    pub drift: Vec<Coupling<f64>>,
    pub d2: Coupling<Array2<f64>>,
    pub friction: Option<Friction>,
}

impl CouplingSet {
    pub fn num_lindblads(&self) -> usize {
        self.lindblads.len()
    }

    pub fn nq(&self) -> usize {
        self.hamiltonian.dim()
    }

    /// Check the structural and PSD invariants against a grid.
    pub fn validate(&self, grid: &Arc<PhaseGrid>) -> Result<()> {
        let d = grid.dims();
        let p = self.lindblads.len();
        let nq = self.nq();
        if !self.lindblads.is_empty() && self.lindblads.dim() != nq {
            return Err(CqError::DimensionMismatch {
                context: "Lindblad dimension must match Hamiltonian",
                expected: nq,
                got: self.lindblads.dim(),
            });
        }
        if self.drift.len() != d {
            return Err(CqError::DimensionMismatch {
                context: "drift must have one component per classical axis",
                expected: d,
                got: self.drift.len(),
            });
        }
        let npts = grid.len();
        self.d0.check_len(npts, "d0 field length")?;
        self.d1.check_len(npts, "d1 field length")?;
        self.d2.check_len(npts, "d2 field length")?;
        for dr in &self.drift {
            dr.check_len(npts, "drift field length")?;
        }
        if let Some(f) = &self.friction {
            if f.gamma < 0.0 {
                return Err(CqError::Invalid("friction gamma must be >= 0".into()));
            }
            for &ax in &f.axes {
                if ax >= d {
                    return Err(CqError::AxisOutOfRange { axis: ax, dims: d });
                }
            }
        }

        let check_d0 = |m: &Array2<C64>| -> Result<()> {
            if m.nrows() != p || m.ncols() != p {
                return Err(CqError::DimensionMismatch {
                    context: "d0 must be p x p",
                    expected: p,
                    got: m.nrows(),
                });
            }
            if p > 0 {
                let min = linalg::min_eig_hermitian(m, HERMITICITY_TOL)?;
                if min < -1e-10 {
                    return Err(CqError::NotPositive { min_eig: min });
                }
            }
            Ok(())
        };
        let check_d1 = |m: &Array2<C64>| -> Result<()> {
            if m.nrows() != d || m.ncols() != p {
                return Err(CqError::DimensionMismatch {
                    context: "d1 must be d x p",
                    expected: d * p,
                    got: m.nrows() * m.ncols(),
                });
            }
            Ok(())
        };
        let check_d2 = |m: &Array2<f64>| -> Result<()> {
            if m.nrows() != d || m.ncols() != d {
                return Err(CqError::DimensionMismatch {
                    context: "d2 must be d x d",
                    expected: d,
                    got: m.nrows(),
                });
            }
            let mc = m.mapv(|v| Complex64::new(v, 0.0));
            let min = linalg::min_eig_hermitian(&mc, HERMITICITY_TOL)?;
            if min < -1e-10 {
                return Err(CqError::NotPositive { min_eig: min });
            }
            Ok(())
        };
        match &self.d0 {
            Coupling::Constant(m) => check_d0(m)?,
            Coupling::PerPoint(ms) => ms.iter().try_for_each(check_d0)?,
        }
        match &self.d1 {
            Coupling::Constant(m) => check_d1(m)?,
            Coupling::PerPoint(ms) => ms.iter().try_for_each(check_d1)?,
        }
        match &self.d2 {
            Coupling::Constant(m) => check_d2(m)?,
            Coupling::PerPoint(ms) => ms.iter().try_for_each(check_d2)?,
        }
        if let HamiltonianSpec::PerPoint(f) = &self.hamiltonian {
            if f.grid().len() != npts {
                return Err(CqError::GridMismatch { context: "Hamiltonian field" });
            }
        }
        Ok(())
    }

    /// Effective drift on `axis` at grid point `idx`, with the friction term
    /// folded in (gamma d(z_i rho)/dz_i equals drift component -gamma z_i).
    pub fn effective_drift(&self, grid: &PhaseGrid, idx: usize, axis: usize) -> f64 {
        let mut v = *self.drift[axis].at(idx);
        if let Some(f) = &self.friction {
            if f.axes.contains(&axis) {
                v -= f.gamma * grid.coordinate(idx, axis);
            }
        }
        v
    }

    /// The short-time moment table this coupling set generates at the grid
    /// point nearest `zbar` (orders 0..=2). The n = 1 back-reaction entries
    /// pick up a sign relative to storage because the generator writes them
    /// inside +d/dz_i while the moment expansion uses (-1)^n d^n/dz^n.
    pub fn expected_moment_table(&self, grid: &Arc<PhaseGrid>, zbar: &[f64]) -> MomentTable {
        let idx = grid.nearest_index(zbar);
        let d = grid.dims();
        let p = self.lindblads.len();
        let mut t = MomentTable::new(zbar.to_vec(), 2, p, d);
        let d0 = self.d0.at(idx);
        for a in 0..p {
            for b in 0..p {
                t.set(MomentKey { n: 0, axes: vec![], mu: a + 1, nu: b + 1 }, d0[[a, b]]);
            }
        }
        let d1 = self.d1.at(idx);
        for i in 0..d {
            t.set(
                MomentKey { n: 1, axes: vec![i], mu: 0, nu: 0 },
                Complex64::new(self.effective_drift(grid, idx, i), 0.0),
            );
            for a in 0..p {
                t.set(MomentKey { n: 1, axes: vec![i], mu: 0, nu: a + 1 }, -d1[[i, a]]);
            }
        }
        let d2 = self.d2.at(idx);
        for i in 0..d {
            for j in i..d {
                t.set(
                    MomentKey { n: 2, axes: vec![i, j], mu: 0, nu: 0 },
                    Complex64::new(d2[[i, j]], 0.0),
                );
            }
        }
        t
    }
}

/// Symplectic drift of a classical Hamiltonian on pairwise (q_k, p_k) axes:
/// dq/dt = dH/dp, dp/dt = -dH/dq, evaluated by central differences (exact
/// for quadratic Hamiltonians).
pub fn symplectic_drift(
    grid: &Arc<PhaseGrid>,
    hamiltonian: impl Fn(&[f64]) -> f64,
) -> Result<Vec<Coupling<f64>>> {
    let d = grid.dims();
    if d % 2 != 0 {
        return Err(CqError::Invalid(
            "symplectic drift needs an even number of axes (q1, p1, q2, p2, ...)".into(),
        ));
    }
    let h = ScalarField::from_fn(grid.clone(), &hamiltonian);
    let mut drift: Vec<Coupling<f64>> = Vec::with_capacity(d);
    for k in 0..d / 2 {
        let (qa, pa) = (2 * k, 2 * k + 1);
        // One-sided at edges: the Hamiltonian is coefficient data, not a
        // periodic field, so it must not be differentiated across the wrap.
        let dq = h.partial_one_sided(pa)?; // dq/dt = +dH/dp
        let dp = h.partial_one_sided(qa)?; // dp/dt = -dH/dq
        drift.push(Coupling::PerPoint(dq.values().to_vec()));
        drift.push(Coupling::PerPoint(dp.values().iter().map(|v| -v).collect()));
    }
    Ok(drift)
}

/// Rewrite a coupling set over Lindblad operators with arbitrary trace into
/// an equivalent one over traceless operators.
///
/// With L_a = Lbar_a + b_a I, the identity components get absorbed into the
/// Hamiltonian and the classical drift:
///
///   H       += (i/2) sum_ab d0[a,b] (conj(b_b) Lbar_a - b_a Lbar_b†)
///   drift_i -= 2 Re( sum_a d1[i,a] conj(b_a) )
///
/// and d0, d2 stay untouched. The generator output is identical to the
/// original at every grid point.
pub fn canonicalize(grid: &Arc<PhaseGrid>, c: &CouplingSet) -> Result<CouplingSet> {
    let p = c.lindblads.len();
    let nq = c.nq();
    let b: Vec<C64> = c
        .lindblads
        .ops()
        .iter()
        .map(|l| l.trace() / Complex64::new(nq as f64, 0.0))
        .collect();
    let bare: Vec<QOperator> = c
        .lindblads
        .ops()
        .iter()
        .zip(&b)
        .map(|(l, &bi)| {
            let mut m = l.matrix().clone();
            for k in 0..nq {
                m[[k, k]] -= bi;
            }
            QOperator::new(m)
        })
        .collect::<Result<_>>()?;
    let lindblads = LindbladSet::new_traceless(bare)?;

    // Hamiltonian shift from the dissipator cross terms.
    let h_shift_at = |d0: &Array2<C64>| -> Array2<C64> {
        let mut x = Array2::<C64>::zeros((nq, nq));
        for a in 0..p {
            for bb in 0..p {
                let coef = d0[[a, bb]];
                if coef == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let la = lindblads.ops()[a].matrix();
                let lbd = linalg::dagger(lindblads.ops()[bb].matrix());
                x.zip_mut_with(la, |o, v| *o += coef * b[bb].conj() * v);
                x.zip_mut_with(&lbd, |o, v| *o -= coef * b[a] * v);
            }
        }
        x * Complex64::new(0.0, 0.5)
    };

    let hamiltonian = match &c.d0 {
        Coupling::Constant(d0) => {
            let shift = h_shift_at(d0);
            match &c.hamiltonian {
                HamiltonianSpec::Constant(h) => {
                    HamiltonianSpec::Constant(QOperator::new(h.matrix() + &shift)?)
                }
                HamiltonianSpec::Separable { base, terms } => HamiltonianSpec::Separable {
                    base: QOperator::new(base.matrix() + &shift)?,
                    terms: terms.clone(),
                },
                HamiltonianSpec::PerPoint(f) => {
                    let mut nf = f.clone();
                    for idx in 0..grid.len() {
                        let blk = nf.block_mut(idx);
                        for (o, v) in blk.iter_mut().zip(shift.iter()) {
                            *o += *v;
                        }
                    }
                    HamiltonianSpec::PerPoint(nf)
                }
            }
        }
        Coupling::PerPoint(d0s) => {
            let mut nf = MatrixField::zeros(grid.clone(), nq);
            for idx in 0..grid.len() {
                let mut h = c.hamiltonian.at(idx);
                h += &h_shift_at(&d0s[idx]);
                for (o, v) in nf.block_mut(idx).iter_mut().zip(h.iter()) {
                    *o = *v;
                }
            }
            HamiltonianSpec::PerPoint(nf)
        }
    };

    // Classical drift shift from the back-reaction identity components.
    let mut drift = c.drift.clone();
    for (i, dr) in drift.iter_mut().enumerate() {
        match &c.d1 {
            Coupling::Constant(d1) => {
                let mut shift = 0.0;
                for a in 0..p {
                    shift -= 2.0 * (d1[[i, a]] * b[a].conj()).re;
                }
                if shift != 0.0 {
                    *dr = match dr {
                        Coupling::Constant(v) => Coupling::Constant(*v + shift),
                        Coupling::PerPoint(vs) => {
                            Coupling::PerPoint(vs.iter().map(|v| v + shift).collect())
                        }
                    };
                }
            }
            Coupling::PerPoint(d1s) => {
                let mut vals: Vec<f64> = (0..grid.len()).map(|idx| *dr.at(idx)).collect();
                for (idx, v) in vals.iter_mut().enumerate() {
                    for a in 0..p {
                        *v -= 2.0 * (d1s[idx][[i, a]] * b[a].conj()).re;
                    }
                }
                *dr = Coupling::PerPoint(vals);
            }
        }
    }

    Ok(CouplingSet {
        lindblads,
        hamiltonian,
        d0: c.d0.clone(),
        d1: c.d1.clone(),
        drift,
        d2: c.d2.clone(),
        friction: c.friction.clone(),
    })
}
