// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Jump-class dynamics over a finite set of classical sites.
//!
//! The kernel stores, for every ordered site pair (to, from), a
//! (p+1) x (p+1) rate block W^{mu nu}(to|from) over the operator basis
//! {I, L_1, ..., L_p}. The master equation is
//!
//!   d rho(z)/dt = sum_{z'} W^{mu nu}(z|z') B_mu rho(z') B_nu†
//!                 - ½ { C(z), rho(z) }_+,
//!   C(z') = sum_z W^{mu nu}(z|z') B_nu† B_mu,
//!
//! with the no-event compensator C computed from the kernel, so total
//! probability is conserved by construction. Complete positivity requires
//! every off-diagonal block to be PSD in (mu, nu) and the quantum sub-block
//! of the diagonal ones to be PSD (the diagonal identity component generates
//! Hamiltonian flow and is unconstrained).

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{CqError, Result};
use crate::linalg::{self, C64, ZERO};
use crate::qop::{kron, LindbladSet, QOperator};
use crate::validity::{PropagatorTable, Verdict};

/// A hybrid state over a finite classical site set: one sub-normalized
/// density matrix per site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteState {
    pub sites: Vec<Vec<f64>>,
    pub rho: Vec<Array2<C64>>,
    pub time: f64,
}

impl SiteState {
    pub fn new(sites: Vec<Vec<f64>>, rho: Vec<Array2<C64>>) -> Result<Self> {
        if sites.len() != rho.len() {
            return Err(CqError::SiteMismatch { context: "sites vs density matrices" });
        }
        if let Some(first) = rho.first() {
            let nq = first.nrows();
            for r in &rho {
                if r.nrows() != nq || r.ncols() != nq {
                    return Err(CqError::DimensionMismatch {
                        context: "site density matrices must share one dimension",
                        expected: nq,
                        got: r.nrows(),
                    });
                }
            }
        }
        Ok(SiteState { sites, rho, time: 0.0 })
    }

    pub fn num_sites(&self) -> usize {
        self.rho.len()
    }

    pub fn nq(&self) -> usize {
        self.rho.first().map(|r| r.nrows()).unwrap_or(0)
    }

    pub fn total_trace(&self) -> f64 {
        self.rho.iter().map(|r| linalg::trace(r).re).sum()
    }

    pub fn site_weights(&self) -> Vec<f64> {
        self.rho.iter().map(|r| linalg::trace(r).re).collect()
    }

    pub fn quantum_marginal(&self) -> QOperator {
        let nq = self.nq();
        let mut acc = Array2::<C64>::zeros((nq, nq));
        for r in &self.rho {
            acc += r;
        }
        QOperator::new(acc).expect("square")
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let min = self
            .rho
            .iter()
            .map(|r| linalg::hermitian_eigenvalues(r)[0])
            .fold(f64::INFINITY, f64::min);
        if min.is_finite() {
            min
        } else {
            0.0
        }
    }

    pub fn fill_zero(&mut self) {
        for r in &mut self.rho {
            r.fill(ZERO);
        }
    }

    /// Clip negative eigenvalues to zero per site (non-physical; see
    /// `HybridState::clip_negative`).
    pub fn clip_negative(&mut self) -> f64 {
        let mut removed = 0.0;
        for r in &mut self.rho {
            let (vals, vecs) = linalg::hermitian_eigen(r);
            if vals[0] >= 0.0 {
                continue;
            }
            let n = r.nrows();
            let mut rebuilt = Array2::<C64>::zeros((n, n));
            for k in 0..n {
                if vals[k] <= 0.0 {
                    removed += vals[k].min(0.0).abs();
                    continue;
                }
                for i in 0..n {
                    for j in 0..n {
                        rebuilt[[i, j]] += Complex64::new(vals[k], 0.0)
                            * vecs[[i, k]]
                            * vecs[[j, k]].conj();
                    }
                }
            }
            *r = rebuilt;
        }
        removed
    }

    pub fn axpy(&mut self, a: f64, other: &SiteState) {
        let ac = Complex64::new(a, 0.0);
        for (x, y) in self.rho.iter_mut().zip(other.rho.iter()) {
            x.zip_mut_with(y, |u, v| *u += ac * v);
        }
    }
}

#[derive(Debug, Clone)]
pub struct JumpKernel {
    lindblads: LindbladSet,
    sites: Vec<Vec<f64>>,
    /// blocks[to * m + from], each (p+1) x (p+1).
    blocks: Vec<Array2<C64>>,
    /// Per-source compensator C(from), nq x nq.
    compensator: Vec<Array2<C64>>,
    /// Operator basis {I, L_1, ..., L_p}.
    basis: Vec<Array2<C64>>,
}

impl JumpKernel {
    pub fn new(
        lindblads: LindbladSet,
        sites: Vec<Vec<f64>>,
        blocks: Vec<Array2<C64>>,
    ) -> Result<Self> {
        let m = sites.len();
        let p = lindblads.len();
        let nq = lindblads.dim();
        if blocks.len() != m * m {
            return Err(CqError::DimensionMismatch {
                context: "jump kernel needs num_sites^2 blocks",
                expected: m * m,
                got: blocks.len(),
            });
        }
        for b in &blocks {
            if b.nrows() != p + 1 || b.ncols() != p + 1 {
                return Err(CqError::DimensionMismatch {
                    context: "jump kernel blocks must be (p+1) x (p+1)",
                    expected: p + 1,
                    got: b.nrows(),
                });
            }
        }
        let mut basis = Vec::with_capacity(p + 1);
        basis.push(Array2::<C64>::eye(nq));
        for l in lindblads.ops() {
            basis.push(l.matrix().clone());
        }
        // C(from) = sum_to sum_{mu nu} W[to|from]^{mu nu} B_nu† B_mu
        let mut compensator = vec![Array2::<C64>::zeros((nq, nq)); m];
        for from in 0..m {
            for to in 0..m {
                let w = &blocks[to * m + from];
                for mu in 0..=p {
                    for nu in 0..=p {
                        let coef = w[[mu, nu]];
                        if coef == ZERO {
                            continue;
                        }
                        let term = linalg::dagger(&basis[nu]).dot(&basis[mu]);
                        compensator[from].zip_mut_with(&term, |o, v| *o += coef * v);
                    }
                }
            }
        }
        Ok(JumpKernel { lindblads, sites, blocks, compensator, basis })
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn nq(&self) -> usize {
        self.lindblads.dim()
    }

    pub fn num_lindblads(&self) -> usize {
        self.lindblads.len()
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }

    pub fn lindblads(&self) -> &LindbladSet {
        &self.lindblads
    }

    pub fn block(&self, to: usize, from: usize) -> &Array2<C64> {
        &self.blocks[to * self.num_sites() + from]
    }

    /// Master-equation RHS; `out` is overwritten (its time field is not
    /// meaningful).
    pub fn apply_into(&self, s: &SiteState, out: &mut SiteState) -> Result<()> {
        let m = self.num_sites();
        let p = self.num_lindblads();
        if s.num_sites() != m || s.sites != self.sites {
            return Err(CqError::SiteMismatch { context: "state sites vs kernel sites" });
        }
        if s.nq() != self.nq() {
            return Err(CqError::DimensionMismatch {
                context: "state quantum dimension vs kernel",
                expected: self.nq(),
                got: s.nq(),
            });
        }
        out.fill_zero();
        let half = Complex64::new(0.5, 0.0);
        for to in 0..m {
            // gain from every source
            for from in 0..m {
                let w = self.block(to, from);
                for mu in 0..=p {
                    for nu in 0..=p {
                        let coef = w[[mu, nu]];
                        if coef == ZERO {
                            continue;
                        }
                        let term = self.basis[mu]
                            .dot(&s.rho[from])
                            .dot(&linalg::dagger(&self.basis[nu]));
                        out.rho[to].zip_mut_with(&term, |o, v| *o += coef * v);
                    }
                }
            }
            // compensator loss at this site
            let c = &self.compensator[to];
            let loss = (c.dot(&s.rho[to]) + s.rho[to].dot(c)) * half;
            out.rho[to].zip_mut_with(&loss, |o, v| *o -= v);
        }
        Ok(())
    }

    pub fn apply(&self, s: &SiteState) -> Result<SiteState> {
        let mut out = s.clone();
        self.apply_into(s, &mut out)?;
        out.time = 0.0;
        Ok(out)
    }

    /// CP certificate: PSD margins of the off-diagonal blocks and of the
    /// quantum sub-blocks of the diagonal ones, plus the probability-
    /// conservation residual measured on a uniform maximally mixed probe.
    pub fn cp_check(&self, tol: f64) -> KernelCertificate {
        let m = self.num_sites();
        let p = self.num_lindblads();
        let mut min_eig = f64::INFINITY;
        let mut worst = (0, 0);
        for to in 0..m {
            for from in 0..m {
                let w = self.block(to, from);
                let eig = if to != from {
                    linalg::hermitian_eigenvalues(&linalg::hermitize(w))[0]
                } else if p > 0 {
                    // diagonal: only the Lindblad sub-block is constrained
                    let sub = Array2::from_shape_fn((p, p), |(a, b)| w[[a + 1, b + 1]]);
                    linalg::hermitian_eigenvalues(&linalg::hermitize(&sub))[0]
                } else {
                    continue;
                };
                if eig < min_eig {
                    min_eig = eig;
                    worst = (to, from);
                }
            }
        }
        if !min_eig.is_finite() {
            min_eig = 0.0;
        }

        // probability conservation on a deterministic probe
        let nq = self.nq();
        let probe = SiteState::new(
            self.sites.clone(),
            (0..m)
                .map(|k| {
                    Array2::from_diag(&Array1::from_elem(
                        nq,
                        Complex64::new((1.0 + k as f64) / (m as f64 * nq as f64), 0.0),
                    ))
                })
                .collect(),
        )
        .expect("probe construction");
        let rhs = self.apply(&probe).expect("probe application");
        let normalization_residual = rhs.total_trace().abs();

        let verdict = if min_eig >= -tol && normalization_residual <= tol {
            if min_eig.abs() <= 10.0 * tol {
                Verdict::Boundary
            } else {
                Verdict::Valid
            }
        } else {
            Verdict::Invalid
        };
        KernelCertificate { min_block_eigenvalue: min_eig, worst_pair: worst, normalization_residual, verdict, tol }
    }

    /// Full vectorized generator on the (num_sites * nq^2)-dimensional
    /// stacked state, ordered site-major.
    pub fn vectorized_generator(&self) -> Array2<C64> {
        let m = self.num_sites();
        let nq = self.nq();
        let p = self.num_lindblads();
        let n2 = nq * nq;
        let dim = m * n2;
        let mut g = Array2::<C64>::zeros((dim, dim));
        for to in 0..m {
            for from in 0..m {
                let w = self.block(to, from);
                let mut sup = Array2::<C64>::zeros((n2, n2));
                for mu in 0..=p {
                    for nu in 0..=p {
                        let coef = w[[mu, nu]];
                        if coef == ZERO {
                            continue;
                        }
                        let k = kron(&self.basis[nu].mapv(|z| z.conj()), &self.basis[mu]);
                        sup.zip_mut_with(&k, |o, v| *o += coef * v);
                    }
                }
                if to == from {
                    // -½ (I (x) C + C^T (x) I)
                    let c = &self.compensator[from];
                    let left = kron(&Array2::<C64>::eye(nq), c);
                    let right = kron(&c.t().to_owned(), &Array2::<C64>::eye(nq));
                    sup.zip_mut_with(&left, |o, v| *o -= Complex64::new(0.5, 0.0) * v);
                    sup.zip_mut_with(&right, |o, v| *o -= Complex64::new(0.5, 0.0) * v);
                }
                for r in 0..n2 {
                    for cidx in 0..n2 {
                        g[[to * n2 + r, from * n2 + cidx]] = sup[[r, cidx]];
                    }
                }
            }
        }
        g
    }

    /// Matrix-exponential propagator over time `dt`, sliced into per-pair
    /// superoperator blocks.
    pub fn propagator(&self, dt: f64) -> PropagatorTable {
        let m = self.num_sites();
        let nq = self.nq();
        let n2 = nq * nq;
        let g = self.vectorized_generator() * Complex64::new(dt, 0.0);
        let e = linalg::expm(&g);
        let mut blocks = Vec::with_capacity(m * m);
        for to in 0..m {
            for from in 0..m {
                blocks.push(Array2::from_shape_fn((n2, n2), |(r, c)| {
                    e[[to * n2 + r, from * n2 + c]]
                }));
            }
        }
        PropagatorTable { num_sites: m, nq, blocks }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct KernelCertificate {
    pub min_block_eigenvalue: f64,
    pub worst_pair: (usize, usize),
    pub normalization_residual: f64,
    pub verdict: Verdict,
    pub tol: f64,
}

impl KernelCertificate {
    pub fn accepts(&self) -> bool {
        self.verdict != Verdict::Invalid
    }
}
