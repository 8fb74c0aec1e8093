// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Right-hand side of the continuous classical-quantum master equation:
//!
//!   d rho(z)/dt = -d/dz_i (drift_i rho) + d^2/dz_i dz_j (d2_ij rho)
//!                 + d/dz_i ( d1[i,a] rho La†  +  conj(d1[i,a]) La rho )
//!                 - i [H(z), rho] + d0[a,b] ( La rho Lb† - ½{Lb† La, rho} )
//!                 + gamma d/dz_i (z_i rho)           (friction axes)
//!
//! The per-point (Hamiltonian + dissipator) part is evaluated through
//! K rho + rho K† + sum_k Mk rho Mk†, with K = -iH - ½ sum Mk†Mk and the Mk
//! obtained by diagonalizing d0. Constant operators carry their bandwidth so
//! products against grid blocks skip the zero bands — for the oscillator
//! scenarios (tridiagonal Q, pentadiagonal K) this is what keeps desk-scale
//! runs fast.

use std::sync::Arc;

use ndarray::Array2;

use rayon::prelude::*;

use crate::couplings::{Coupling, CouplingSet, HamiltonianSpec};
use crate::error::{CqError, Result};
use crate::grid::{MatrixField, PhaseGrid};
use crate::linalg::{self, BandedOp, C64, ZERO};
use crate::qop::HERMITICITY_TOL;
use crate::state::HybridState;

enum LocalStrategy {
    /// Constant d0 and constant/separable Hamiltonian.
    Uniform {
        k0: BandedOp,
        k0_dag: BandedOp,
        /// Hermitian operators entering as -i f(z) [Hj, rho].
        h_terms: Vec<(Vec<f64>, BandedOp)>,
        /// (M, M†) pairs from the d0 eigendecomposition.
        kraus: Vec<(BandedOp, BandedOp)>,
    },
    /// Per-point d0 or per-point Hamiltonian; correctness path.
    General {
        /// Lb† La products, indexed [b][a].
        ldl: Vec<Vec<Array2<C64>>>,
    },
}

pub struct ContinuousGenerator {
    grid: Arc<PhaseGrid>,
    couplings: CouplingSet,
    nq: usize,
    /// Effective drift (friction folded in) per axis; None if identically 0.
    drift_eff: Vec<Option<Vec<f64>>>,
    /// Constant-d1 nonzero back-reaction entries per axis: (alpha, coef).
    br_const: Option<Vec<Vec<(usize, C64)>>>,
    /// Constant-d2 nonzero entries (i <= j, coef).
    d2_const: Option<Vec<(usize, usize, f64)>>,
    /// (L, L†) banded pairs for the back-reaction fluxes.
    l_ops: Vec<(BandedOp, BandedOp)>,
    local: LocalStrategy,
    flux: MatrixField,
    tmp: MatrixField,
}

impl ContinuousGenerator {
    pub fn new(grid: Arc<PhaseGrid>, couplings: CouplingSet) -> Result<Self> {
        couplings.validate(&grid)?;
        let nq = couplings.nq();
        let d = grid.dims();
        let p = couplings.num_lindblads();

        // The Hamiltonian must be Hermitian for the RHS to preserve
        // Hermiticity; reject early rather than drift.
        match &couplings.hamiltonian {
            HamiltonianSpec::Constant(h) => {
                if !h.is_hermitian(HERMITICITY_TOL) {
                    return Err(CqError::NotHermitian {
                        asymmetry: linalg::asymmetry(h.matrix()),
                        tol: HERMITICITY_TOL,
                    });
                }
            }
            HamiltonianSpec::Separable { base, terms } => {
                if !base.is_hermitian(HERMITICITY_TOL) {
                    return Err(CqError::NotHermitian {
                        asymmetry: linalg::asymmetry(base.matrix()),
                        tol: HERMITICITY_TOL,
                    });
                }
                for (f, op) in terms {
                    if f.grid().len() != grid.len() {
                        return Err(CqError::GridMismatch { context: "separable H term" });
                    }
                    if !op.is_hermitian(HERMITICITY_TOL) {
                        return Err(CqError::NotHermitian {
                            asymmetry: linalg::asymmetry(op.matrix()),
                            tol: HERMITICITY_TOL,
                        });
                    }
                }
            }
            HamiltonianSpec::PerPoint(f) => {
                let mut worst = 0.0f64;
                for idx in 0..grid.len() {
                    let blk = f.block(idx);
                    for r in 0..nq {
                        for c in r..nq {
                            worst = worst.max((blk[r * nq + c] - blk[c * nq + r].conj()).norm());
                        }
                    }
                }
                if worst > HERMITICITY_TOL {
                    return Err(CqError::NotHermitian { asymmetry: worst, tol: HERMITICITY_TOL });
                }
            }
        }

        let drift_eff: Vec<Option<Vec<f64>>> = (0..d)
            .map(|axis| {
                let vals: Vec<f64> = (0..grid.len())
                    .map(|idx| couplings.effective_drift(&grid, idx, axis))
                    .collect();
                if vals.iter().all(|v| *v == 0.0) {
                    None
                } else {
                    Some(vals)
                }
            })
            .collect();

        let br_const = match &couplings.d1 {
            Coupling::Constant(d1) => Some(
                (0..d)
                    .map(|i| {
                        (0..p)
                            .filter(|&a| d1[[i, a]] != ZERO)
                            .map(|a| (a, d1[[i, a]]))
                            .collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>(),
            ),
            Coupling::PerPoint(_) => None,
        };

        let d2_const = match &couplings.d2 {
            Coupling::Constant(d2) => Some(
                (0..d)
                    .flat_map(|i| (i..d).map(move |j| (i, j)))
                    .filter(|&(i, j)| d2[[i, j]] != 0.0)
                    .map(|(i, j)| (i, j, d2[[i, j]]))
                    .collect::<Vec<_>>(),
            ),
            Coupling::PerPoint(_) => None,
        };

        let l_ops: Vec<(BandedOp, BandedOp)> = couplings
            .lindblads
            .ops()
            .iter()
            .map(|l| {
                (
                    BandedOp::from_matrix(l.matrix()),
                    BandedOp::from_matrix(&linalg::dagger(l.matrix())),
                )
            })
            .collect();

        let local = match (&couplings.d0, &couplings.hamiltonian) {
            (Coupling::Constant(d0), h) if !matches!(h, HamiltonianSpec::PerPoint(_)) => {
                let mut kraus = Vec::new();
                let mut n_op = Array2::<C64>::zeros((nq, nq));
                if p > 0 {
                    let (w, v) = linalg::hermitian_eigen(d0);
                    let wmax = w.iter().cloned().fold(0.0f64, f64::max);
                    for k in 0..p {
                        if w[k] <= 1e-14 * wmax.max(1e-300) {
                            continue;
                        }
                        let c = C64::new(w[k].sqrt(), 0.0);
                        let mut m = Array2::<C64>::zeros((nq, nq));
                        for a in 0..p {
                            let coef = c * v[[a, k]];
                            m.zip_mut_with(couplings.lindblads.ops()[a].matrix(), |o, x| {
                                *o += coef * x
                            });
                        }
                        let md = linalg::dagger(&m);
                        n_op = n_op + md.dot(&m) * C64::new(0.5, 0.0);
                        kraus.push((BandedOp::from_matrix(&m), BandedOp::from_matrix(&md)));
                    }
                }
                let h_base = match h {
                    HamiltonianSpec::Constant(hc) => hc.matrix().clone(),
                    HamiltonianSpec::Separable { base, .. } => base.matrix().clone(),
                    HamiltonianSpec::PerPoint(_) => unreachable!(),
                };
                let k0m = h_base * C64::new(0.0, -1.0) - n_op;
                let k0_dag = BandedOp::from_matrix(&linalg::dagger(&k0m));
                let k0 = BandedOp::from_matrix(&k0m);
                let h_terms = match h {
                    HamiltonianSpec::Separable { terms, .. } => terms
                        .iter()
                        .map(|(f, op)| (f.values().to_vec(), BandedOp::from_matrix(op.matrix())))
                        .collect(),
                    _ => Vec::new(),
                };
                LocalStrategy::Uniform { k0, k0_dag, h_terms, kraus }
            }
            _ => {
                let ops = couplings.lindblads.ops();
                let ldl = (0..p)
                    .map(|b| {
                        (0..p)
                            .map(|a| linalg::dagger(ops[b].matrix()).dot(ops[a].matrix()))
                            .collect()
                    })
                    .collect();
                LocalStrategy::General { ldl }
            }
        };

        Ok(ContinuousGenerator {
            flux: MatrixField::zeros(grid.clone(), nq),
            tmp: MatrixField::zeros(grid.clone(), nq),
            grid,
            couplings,
            nq,
            drift_eff,
            br_const,
            d2_const,
            l_ops,
            local,
        })
    }

    pub fn grid(&self) -> &Arc<PhaseGrid> {
        &self.grid
    }

    pub fn couplings(&self) -> &CouplingSet {
        &self.couplings
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    /// Full master-equation RHS for the given field; `out` is overwritten.
    pub fn apply_into(&mut self, field: &MatrixField, out: &mut MatrixField) -> Result<()> {
        if !Arc::ptr_eq(field.grid(), &self.grid) && **field.grid() != *self.grid {
            return Err(CqError::GridMismatch { context: "generator vs state" });
        }
        if field.nq() != self.nq {
            return Err(CqError::DimensionMismatch {
                context: "state quantum dimension",
                expected: self.nq,
                got: field.nq(),
            });
        }
        out.fill_zero();
        self.local_terms(field, out);
        self.first_order_terms(field, out)?;
        self.diffusion_terms(field, out)?;
        Ok(())
    }

    /// Convenience wrapper returning a fresh derivative field.
    pub fn apply(&mut self, state: &HybridState) -> Result<MatrixField> {
        let mut out = MatrixField::zeros(self.grid.clone(), self.nq);
        self.apply_into(&state.field, &mut out)?;
        Ok(out)
    }

    /// -i[H, rho] + dissipator, pointwise.
    fn local_terms(&self, field: &MatrixField, out: &mut MatrixField) {
        let nn = self.nq * self.nq;
        let src = field.data();
        match &self.local {
            LocalStrategy::Uniform { k0, k0_dag, h_terms, kraus } => {
                out.data_mut().par_chunks_mut(nn).enumerate().for_each_init(
                    || vec![ZERO; nn],
                    |tmp, (idx, o)| {
                        let rho = &src[idx * nn..(idx + 1) * nn];
                        k0.mul_left_acc(linalg::ONE, rho, o);
                        k0_dag.mul_right_acc(linalg::ONE, rho, o);
                        for (f, hj) in h_terms {
                            let c = f[idx];
                            if c != 0.0 {
                                hj.mul_left_acc(C64::new(0.0, -c), rho, o);
                                hj.mul_right_acc(C64::new(0.0, c), rho, o);
                            }
                        }
                        for (m, md) in kraus {
                            tmp.fill(ZERO);
                            m.mul_left_acc(linalg::ONE, rho, tmp);
                            md.mul_right_acc(linalg::ONE, tmp, o);
                        }
                    },
                );
            }
            LocalStrategy::General { ldl } => {
                let p = self.couplings.num_lindblads();
                let nq = self.nq;
                let couplings = &self.couplings;
                let l_ops = &self.l_ops;
                out.data_mut().par_chunks_mut(nn).enumerate().for_each_init(
                    || (vec![ZERO; nn], vec![ZERO; nn]),
                    |(tmp, ktmp), (idx, o)| {
                        let rho = &src[idx * nn..(idx + 1) * nn];
                        // K(z) = -iH(z) - ½ sum d0[a,b] Lb†La
                        let h = couplings.hamiltonian.at(idx);
                        let d0 = couplings.d0.at(idx);
                        for r in 0..nq {
                            for c in 0..nq {
                                ktmp[r * nq + c] = h[[r, c]] * C64::new(0.0, -1.0);
                            }
                        }
                        for b in 0..p {
                            for a in 0..p {
                                let coef = d0[[a, b]] * C64::new(-0.5, 0.0);
                                if coef != ZERO {
                                    for (kv, lv) in ktmp.iter_mut().zip(ldl[b][a].iter()) {
                                        *kv += coef * lv;
                                    }
                                }
                            }
                        }
                        // out += K rho + rho K†  (K†[k,j] = conj(K[j,k]))
                        linalg::mm_acc(linalg::ONE, ktmp, rho, nq, o);
                        for i in 0..nq {
                            for k in 0..nq {
                                let x = rho[i * nq + k];
                                if x == ZERO {
                                    continue;
                                }
                                for j in 0..nq {
                                    o[i * nq + j] += x * ktmp[j * nq + k].conj();
                                }
                            }
                        }
                        // gain: sum_ab d0[a,b] La rho Lb†
                        for a in 0..p {
                            tmp.fill(ZERO);
                            l_ops[a].0.mul_left_acc(linalg::ONE, rho, tmp);
                            for b in 0..p {
                                let coef = d0[[a, b]];
                                if coef != ZERO {
                                    l_ops[b].1.mul_right_acc(coef, tmp, o);
                                }
                            }
                        }
                    },
                );
            }
        }
    }

    /// Drift and back-reaction:
    /// out += d/dz_i ( -drift_i rho + d1[i,a] rho La† + conj(d1[i,a]) La rho ).
    fn first_order_terms(&mut self, field: &MatrixField, out: &mut MatrixField) -> Result<()> {
        let d = self.grid.dims();
        let nn = self.nq * self.nq;
        let src = field.data();
        for axis in 0..d {
            let drift = self.drift_eff[axis].as_deref();
            let br: Vec<(usize, Option<C64>)> = match (&self.br_const, &self.couplings.d1) {
                (Some(cols), _) => cols[axis].iter().map(|&(a, c)| (a, Some(c))).collect(),
                (None, Coupling::PerPoint(_)) => {
                    (0..self.couplings.num_lindblads()).map(|a| (a, None)).collect()
                }
                (None, Coupling::Constant(_)) => unreachable!(),
            };
            if drift.is_none() && br.is_empty() {
                continue;
            }
            let l_ops = &self.l_ops;
            let d1 = &self.couplings.d1;
            self.flux.data_mut().par_chunks_mut(nn).enumerate().for_each(|(idx, fx)| {
                fx.fill(ZERO);
                let rho = &src[idx * nn..(idx + 1) * nn];
                if let Some(dr) = drift {
                    let c = C64::new(-dr[idx], 0.0);
                    if c != ZERO {
                        for (f, r) in fx.iter_mut().zip(rho.iter()) {
                            *f += c * r;
                        }
                    }
                }
                for &(a, coef) in &br {
                    let c = coef.unwrap_or_else(|| d1.at(idx)[[axis, a]]);
                    if c == ZERO {
                        continue;
                    }
                    // c rho La† + conj(c) La rho
                    l_ops[a].1.mul_right_acc(c, rho, fx);
                    l_ops[a].0.mul_left_acc(c.conj(), rho, fx);
                }
            });
            self.flux.accumulate_partial(axis, 1.0, out)?;
        }
        Ok(())
    }

    /// Diffusion: out += d^2/dz_i dz_j (d2_ij rho), mixed terms composed.
    fn diffusion_terms(&mut self, field: &MatrixField, out: &mut MatrixField) -> Result<()> {
        let d = self.grid.dims();
        let nn = self.nq * self.nq;
        let src = field.data();
        let pairs: Vec<(usize, usize, Option<f64>)> = match &self.d2_const {
            Some(entries) => entries.iter().map(|&(i, j, c)| (i, j, Some(c))).collect(),
            None => (0..d).flat_map(|i| (i..d).map(move |j| (i, j, None))).collect(),
        };
        for (i, j, coef) in pairs {
            let d2 = &self.couplings.d2;
            self.flux.data_mut().par_chunks_mut(nn).enumerate().for_each(|(idx, fx)| {
                let c = C64::new(coef.unwrap_or_else(|| d2.at(idx)[[i, j]]), 0.0);
                let rho = &src[idx * nn..(idx + 1) * nn];
                for (f, r) in fx.iter_mut().zip(rho.iter()) {
                    *f = c * r;
                }
            });
            if i == j {
                self.flux.accumulate_second_partial(i, 1.0, out)?;
            } else {
                self.tmp.fill_zero();
                self.flux.accumulate_partial(i, 1.0, &mut self.tmp)?;
                self.tmp.accumulate_partial(j, 2.0, out)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::Friction;
    use crate::grid::{AxisSpec, Boundary, ScalarField};
    use crate::qop::{LindbladSet, QOperator};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    fn grid2(points: usize) -> Arc<PhaseGrid> {
        PhaseGrid::new(
            vec![
                AxisSpec { min: -8.0, max: 8.0, points },
                AxisSpec { min: -8.0, max: 8.0, points },
            ],
            Boundary::Periodic,
        )
        .unwrap()
    }

    /// Random Hermitian-per-point state field (not necessarily positive).
    fn random_state(grid: &Arc<PhaseGrid>, nq: usize, seed: &mut u64) -> HybridState {
        let mut s = HybridState::zeros(grid.clone(), nq);
        for idx in 0..grid.len() {
            let blk = s.field.block_mut(idx);
            for r in 0..nq {
                for cc in r..nq {
                    if r == cc {
                        blk[r * nq + r] = c(lcg(seed).abs(), 0.0);
                    } else {
                        let v = c(lcg(seed), lcg(seed)) * c(0.3, 0.0);
                        blk[r * nq + cc] = v;
                        blk[cc * nq + r] = v.conj();
                    }
                }
            }
        }
        s
    }

    fn pure_von_neumann(nq: usize) -> CouplingSet {
        CouplingSet {
            lindblads: LindbladSet::new(vec![]).unwrap(),
            hamiltonian: HamiltonianSpec::Constant(QOperator::oscillator_hamiltonian(nq, 1.0)),
            d0: Coupling::Constant(Array2::zeros((0, 0))),
            d1: Coupling::Constant(Array2::zeros((2, 0))),
            drift: vec![Coupling::Constant(0.0), Coupling::Constant(0.0)],
            d2: Coupling::Constant(Array2::zeros((2, 2))),
            friction: None,
        }
    }

    #[test]
    fn all_couplings_off_gives_von_neumann_term() {
        let g = grid2(12);
        let nq = 4;
        let mut gen = ContinuousGenerator::new(g.clone(), pure_von_neumann(nq)).unwrap();
        let mut seed = 5u64;
        let s = random_state(&g, nq, &mut seed);
        let rhs = gen.apply(&s).unwrap();
        let h = QOperator::oscillator_hamiltonian(nq, 1.0);
        for idx in [0usize, 7, 55, 133] {
            let rho = QOperator::new(crate::state::block_to_array(s.field.block(idx), nq)).unwrap();
            let want = crate::qop::commutator_rhs(&h, &rho).unwrap();
            let got = crate::state::block_to_array(rhs.block(idx), nq);
            assert!(linalg::frobenius(&(&got - want.matrix())) < 1e-12);
        }
    }

    #[test]
    fn trivial_quantum_factor_matches_hand_coded_fokker_planck() {
        // n_q = 1: the generator must reduce to the classical Kramers
        // operator. Compare against an independently coded stencil.
        let g = grid2(16);
        let omega_c2 = 1.21;
        let d2v = 0.35;
        let gamma = 0.4;
        let drift = crate::couplings::symplectic_drift(&g, |z| {
            0.5 * z[1] * z[1] + 0.5 * omega_c2 * z[0] * z[0]
        })
        .unwrap();
        let mut d2 = Array2::<f64>::zeros((2, 2));
        d2[[1, 1]] = d2v;
        let cs = CouplingSet {
            lindblads: LindbladSet::new(vec![]).unwrap(),
            hamiltonian: HamiltonianSpec::Constant(QOperator::zeros(1)),
            d0: Coupling::Constant(Array2::zeros((0, 0))),
            d1: Coupling::Constant(Array2::zeros((2, 0))),
            drift,
            d2: Coupling::Constant(d2),
            friction: Some(Friction { gamma, axes: vec![1] }),
        };
        let mut gen = ContinuousGenerator::new(g.clone(), cs).unwrap();
        let mut seed = 42u64;
        let s = random_state(&g, 1, &mut seed);
        let rhs = gen.apply(&s).unwrap();

        // Hand-coded: -d/dq(p f) - d/dp((-w^2 q - gamma p) f) + D2 d^2f/dp^2
        let n = 16usize;
        let h = g.spacing(0);
        let f = |iq: usize, ip: usize| s.field.block(iq * n + ip)[0].re;
        let q = |iq: usize| g.coordinate(iq * n, 0);
        let p = |ip: usize| g.coordinate(ip, 1);
        for iq in 0..n {
            for ip in 0..n {
                let qm = (iq + n - 1) % n;
                let qp = (iq + 1) % n;
                let pm = (ip + n - 1) % n;
                let pp = (ip + 1) % n;
                let dq_flux = (p(ip) * f(qp, ip) - p(ip) * f(qm, ip)) / (2.0 * h);
                let drift_p = |j: usize| -omega_c2 * q(iq) - gamma * p(j);
                let dp_flux = (drift_p(pp) * f(iq, pp) - drift_p(pm) * f(iq, pm)) / (2.0 * h);
                let diff = d2v * (f(iq, pp) - 2.0 * f(iq, ip) + f(iq, pm)) / (h * h);
                let want = -dq_flux - dp_flux + diff;
                let got = rhs.block(iq * n + ip)[0].re;
                assert!(
                    (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
                    "mismatch at ({iq},{ip}): got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn oscillator_back_reaction_reduces_to_anticommutator_form() {
        // With L = Q and d1 supported on the p axis, the two first-order
        // back-reaction terms must equal ½ D1 (Q drho/dp + drho/dp Q)
        // pointwise, where D1/2 is the stored coefficient.
        let g = grid2(16);
        let nq = 5;
        let d1_param = 0.8;
        let q_op = QOperator::position(nq);
        let mut d1 = Array2::<C64>::zeros((2, 1));
        d1[[1, 0]] = c(d1_param / 2.0, 0.0);
        let cs = CouplingSet {
            lindblads: LindbladSet::new_traceless(vec![q_op.clone()]).unwrap(),
            hamiltonian: HamiltonianSpec::Constant(QOperator::zeros(nq)),
            d0: Coupling::Constant(Array2::zeros((1, 1))),
            d1: Coupling::Constant(d1),
            drift: vec![Coupling::Constant(0.0), Coupling::Constant(0.0)],
            d2: Coupling::Constant(Array2::zeros((2, 2))),
            friction: None,
        };
        let mut gen = ContinuousGenerator::new(g.clone(), cs).unwrap();
        let mut seed = 17u64;
        let s = random_state(&g, nq, &mut seed);
        let rhs = gen.apply(&s).unwrap();

        // oracle: ½ D1 (Q drho/dp + drho/dp Q) with a central difference in p
        let mut drho_dp = MatrixField::zeros(g.clone(), nq);
        s.field.accumulate_partial(1, 1.0, &mut drho_dp).unwrap();
        for idx in [3usize, 40, 100, 200] {
            let dp = crate::state::block_to_array(drho_dp.block(idx), nq);
            let want =
                (q_op.matrix().dot(&dp) + dp.dot(q_op.matrix())) * c(0.5 * d1_param, 0.0);
            let got = crate::state::block_to_array(rhs.block(idx), nq);
            assert!(linalg::frobenius(&(&got - &want)) < 1e-11);
        }
    }

    #[test]
    fn trace_conservation_hermiticity_linearity() {
        let g = grid2(12);
        let nq = 3;
        // a coupling set with every term switched on
        let q_op = QOperator::position(nq);
        let mut d1 = Array2::<C64>::zeros((2, 1));
        d1[[1, 0]] = c(0.35, 0.1);
        let mut d2 = Array2::<f64>::zeros((2, 2));
        d2[[0, 0]] = 0.2;
        d2[[1, 1]] = 0.6;
        d2[[0, 1]] = 0.1;
        d2[[1, 0]] = 0.1;
        let qfield = ScalarField::from_fn(g.clone(), |z| z[0]);
        let cs = CouplingSet {
            lindblads: LindbladSet::new_traceless(vec![q_op.clone()]).unwrap(),
            hamiltonian: HamiltonianSpec::Separable {
                base: QOperator::oscillator_hamiltonian(nq, 1.0),
                terms: vec![(qfield, q_op)],
            },
            d0: Coupling::Constant(Array2::from_shape_fn((1, 1), |_| c(0.9, 0.0))),
            d1: Coupling::Constant(d1),
            drift: crate::couplings::symplectic_drift(&g, |z| {
                0.5 * z[1] * z[1] + 0.5 * z[0] * z[0]
            })
            .unwrap(),
            d2: Coupling::Constant(d2),
            friction: Some(Friction { gamma: 0.15, axes: vec![1] }),
        };
        let mut gen = ContinuousGenerator::new(g.clone(), cs).unwrap();
        let mut seed = 23u64;
        let s1 = random_state(&g, nq, &mut seed);
        let s2 = random_state(&g, nq, &mut seed);

        let r1 = gen.apply(&s1).unwrap();
        // trace conservation on the periodic grid
        assert!(r1.trace_field().integrate().abs() < 1e-9);
        // Hermiticity pointwise
        let rhs_state = HybridState { field: r1.clone(), time: 0.0 };
        assert!(rhs_state.hermiticity_defect() < 1e-12);
        // linearity on a combination
        let r2 = gen.apply(&s2).unwrap();
        let mut mix = HybridState::zeros(g.clone(), nq);
        mix.field.axpy(0.3, &s1.field);
        mix.field.axpy(0.7, &s2.field);
        let rm = gen.apply(&mix).unwrap();
        let mut want = MatrixField::zeros(g.clone(), nq);
        want.axpy(0.3, &r1);
        want.axpy(0.7, &r2);
        let diff: f64 = rm
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-10);
    }

    #[test]
    fn general_and_uniform_paths_agree() {
        // Same physics expressed with constant d0 (uniform path) and with a
        // per-point-constant d0 (general path) must produce identical RHS.
        let g = grid2(8);
        let nq = 3;
        let q_op = QOperator::position(nq);
        let d0 = Array2::from_shape_fn((1, 1), |_| c(0.7, 0.0));
        let mk = |d0c: Coupling<Array2<C64>>| CouplingSet {
            lindblads: LindbladSet::new_traceless(vec![q_op.clone()]).unwrap(),
            hamiltonian: HamiltonianSpec::Constant(QOperator::oscillator_hamiltonian(nq, 1.3)),
            d0: d0c,
            d1: Coupling::Constant(Array2::zeros((2, 1))),
            drift: vec![Coupling::Constant(0.0), Coupling::Constant(0.0)],
            d2: Coupling::Constant(Array2::zeros((2, 2))),
            friction: None,
        };
        let mut gen_u =
            ContinuousGenerator::new(g.clone(), mk(Coupling::Constant(d0.clone()))).unwrap();
        let mut gen_g =
            ContinuousGenerator::new(g.clone(), mk(Coupling::PerPoint(vec![d0.clone(); g.len()])))
                .unwrap();
        assert!(matches!(gen_u.local, LocalStrategy::Uniform { .. }));
        assert!(matches!(gen_g.local, LocalStrategy::General { .. }));
        let mut seed = 77u64;
        let s = random_state(&g, nq, &mut seed);
        let ru = gen_u.apply(&s).unwrap();
        let rg = gen_g.apply(&s).unwrap();
        let diff: f64 = ru
            .data()
            .iter()
            .zip(rg.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-11, "paths disagree by {diff}");
    }

    #[test]
    fn canonicalize_preserves_generator_output() {
        // L = Q + c I for complex c: the canonicalized couplings generate the
        // same dynamics.
        let g = grid2(8);
        let nq = 4;
        for shift in [c(0.5, 0.0), c(1.0, 1.0)] {
            let l = QOperator::new(
                QOperator::position(nq).matrix() + &(Array2::<C64>::eye(nq) * shift),
            )
            .unwrap();
            let mut d1 = Array2::<C64>::zeros((2, 1));
            d1[[1, 0]] = c(0.4, -0.2);
            let mut d2m = Array2::<f64>::zeros((2, 2));
            d2m[[1, 1]] = 0.8;
            let cs = CouplingSet {
                lindblads: LindbladSet::new(vec![l]).unwrap(),
                hamiltonian: HamiltonianSpec::Constant(QOperator::oscillator_hamiltonian(nq, 1.0)),
                d0: Coupling::Constant(Array2::from_shape_fn((1, 1), |_| c(1.1, 0.0))),
                d1: Coupling::Constant(d1),
                drift: crate::couplings::symplectic_drift(&g, |z| 0.5 * z[1] * z[1]).unwrap(),
                d2: Coupling::Constant(d2m),
                friction: None,
            };
            let canon = crate::couplings::canonicalize(&g, &cs).unwrap();
            assert!(canon.lindblads.is_traceless());
            // d0, d2 unchanged
            match (&cs.d0, &canon.d0) {
                (Coupling::Constant(a), Coupling::Constant(b)) => assert_eq!(a, b),
                _ => panic!("d0 variant changed"),
            }
            let mut gen_a = ContinuousGenerator::new(g.clone(), cs).unwrap();
            let mut gen_b = ContinuousGenerator::new(g.clone(), canon).unwrap();
            let mut seed = 3131u64;
            for _ in 0..3 {
                let s = random_state(&g, nq, &mut seed);
                let ra = gen_a.apply(&s).unwrap();
                let rb = gen_b.apply(&s).unwrap();
                let worst = ra
                    .data()
                    .iter()
                    .zip(rb.data())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0f64, f64::max);
                assert!(worst < 1e-10, "canonicalization changed the generator by {worst}");
            }
        }
    }

    #[test]
    fn canonicalize_of_traceless_input_is_identity() {
        let g = grid2(8);
        let nq = 3;
        let cs = CouplingSet {
            lindblads: LindbladSet::new_traceless(vec![QOperator::position(nq)]).unwrap(),
            hamiltonian: HamiltonianSpec::Constant(QOperator::zeros(nq)),
            d0: Coupling::Constant(Array2::from_shape_fn((1, 1), |_| c(1.0, 0.0))),
            d1: Coupling::Constant(Array2::zeros((2, 1))),
            drift: vec![Coupling::Constant(0.1), Coupling::Constant(0.0)],
            d2: Coupling::Constant(Array2::zeros((2, 2))),
            friction: None,
        };
        let canon = crate::couplings::canonicalize(&g, &cs).unwrap();
        match &canon.hamiltonian {
            HamiltonianSpec::Constant(h) => assert!(h.frobenius() < 1e-14),
            _ => panic!("variant changed"),
        }
        assert_relative_eq!(*canon.drift[0].at(0), 0.1);
    }

    #[test]
    fn ehrenfest_relations_for_back_reaction() {
        // d<p>/dt from the generator must include the -D1 <Q> force when the
        // stored coefficient is D1/2 (plus -w^2 <q> - gamma <p>).
        let g = grid2(32);
        let nq = 8;
        let d1_param = 0.9;
        let gamma = 0.25;
        let q_op = QOperator::position(nq);
        let mut d1 = Array2::<C64>::zeros((2, 1));
        d1[[1, 0]] = c(d1_param / 2.0, 0.0);
        let qfield = ScalarField::from_fn(g.clone(), |z| d1_param * z[0]);
        let cs = CouplingSet {
            lindblads: LindbladSet::new_traceless(vec![q_op.clone()]).unwrap(),
            hamiltonian: HamiltonianSpec::Separable {
                base: QOperator::oscillator_hamiltonian(nq, 1.0),
                terms: vec![(qfield, q_op.clone())],
            },
            d0: Coupling::Constant(Array2::from_shape_fn((1, 1), |_| c(1.0, 0.0))),
            d1: Coupling::Constant(d1),
            drift: crate::couplings::symplectic_drift(&g, |z| {
                0.5 * z[1] * z[1] + 0.5 * z[0] * z[0]
            })
            .unwrap(),
            d2: Coupling::Constant(Array2::from_shape_fn((2, 2), |(i, j)| {
                if i == 1 && j == 1 {
                    0.5
                } else {
                    0.0
                }
            })),
            friction: Some(Friction { gamma, axes: vec![1] }),
        };
        let mut gen = ContinuousGenerator::new(g.clone(), cs).unwrap();
        let sigma = QOperator::coherent_state(nq, c(1.0, 0.0));
        let s =
            HybridState::gaussian_product(g.clone(), &[0.8, -0.4], &[1.0, 1.0], &sigma).unwrap();
        let rhs = gen.apply(&s).unwrap();
        let rhs_state = HybridState { field: rhs, time: 0.0 };

        // d<q>/dt = <p>
        let dq_dt = rhs_state.classical_marginal().moment(0, 0.0, 1);
        let mean_p = s.classical_marginal().moment(1, 0.0, 1);
        assert_relative_eq!(dq_dt, mean_p, epsilon = 1e-7);

        // d<p>/dt = -w^2 <q> - D1 <Q> - gamma <p>
        let dp_dt = rhs_state.classical_marginal().moment(1, 0.0, 1);
        let mean_q = s.classical_marginal().moment(0, 0.0, 1);
        let qm = s.quantum_marginal();
        let mean_bigq = linalg::trace(&q_op.matrix().dot(qm.matrix())).re;
        assert_relative_eq!(
            dp_dt,
            -mean_q - d1_param * mean_bigq - gamma * mean_p,
            epsilon = 1e-7
        );
    }
}
