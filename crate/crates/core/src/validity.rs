// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Complete-positivity certification.
//!
//! For the continuous class, CP holds iff the (d+p) x (d+p) block matrix
//! [[2 D2, D1], [D1†, D0]] is positive semi-definite, which is equivalent to
//! the decoherence-diffusion trade-off 2 D2 >= D1 D0+ D1† together with the
//! range condition (I - D0 D0+) D1† = 0, where D0+ is the Moore-Penrose
//! inverse. Both routes are implemented independently so they can certify
//! each other.
//!
//! For short-time moment tables the Kramers-Moyal inequalities
//!
//!   (2n)! (2n+2m)! D_2n[u,u] D_{2n+2m}[v,v] >= |(2n+m)! D_{2n+m}[u,v]|^2
//!
//! are scanned per axis (Pawula's theorem on the classical block, with the
//! strengthened n = 0 chain on the quantum block), and discrete propagators
//! are verified through their Choi matrices and Kraus factors.
//!
//! Ref: Risken, "The Fokker-Planck Equation" (1989), ch. 4; Pawula, Phys.
//! Rev. 162, 186 (1967); Nielsen & Chuang (2000), ch. 8 for Choi/Kraus.

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CqError, Result};
use crate::grid::PhaseGrid;
use crate::linalg::{self, C64, ZERO};

/// Default tolerance for all CP verdicts.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Relative singular-value cutoff for the generalized inverse.
pub const SV_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Valid,
    Invalid,
    Boundary,
}

/// One grid point's worth of coupling matrices, the object the CP conditions
/// actually constrain.
#[derive(Debug, Clone)]
pub struct CouplingMoments {
    /// p x p Hermitian PSD.
    pub d0: Array2<C64>,
    /// d x p back-reaction.
    pub d1: Array2<C64>,
    /// d x d real symmetric PSD (stored complex for uniform eigensolves).
    pub d2: Array2<C64>,
}

impl CouplingMoments {
    pub fn new_real_d2(d0: Array2<C64>, d1: Array2<C64>, d2: &Array2<f64>) -> Self {
        CouplingMoments { d0, d1, d2: d2.mapv(|v| Complex64::new(v, 0.0)) }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TradeoffMargins {
    /// min eig of 2 D2 - D1 D0+ D1†.
    pub schur_margin: f64,
    /// Frobenius norm of (I - D0 D0+) D1†.
    pub range_residual: f64,
    pub d0_margin: f64,
    pub d2_margin: f64,
    /// True when the generalized inverse actually discarded directions.
    pub cutoff_active: bool,
}

/// Schur-complement route: trade-off margin plus range-condition residual.
pub fn tradeoff_margins(m: &CouplingMoments) -> TradeoffMargins {
    let d = m.d2.nrows();
    let p = m.d0.nrows();
    let d0_margin =
        if p == 0 { 0.0 } else { linalg::hermitian_eigenvalues(&linalg::hermitize(&m.d0))[0] };
    let d2_margin =
        if d == 0 { 0.0 } else { linalg::hermitian_eigenvalues(&linalg::hermitize(&m.d2))[0] };
    if p == 0 {
        return TradeoffMargins {
            schur_margin: 2.0 * d2_margin,
            range_residual: 0.0,
            d0_margin,
            d2_margin,
            cutoff_active: false,
        };
    }
    let (d0_pinv, _rank, cutoff_active) = linalg::pseudo_inverse(&m.d0, SV_CUTOFF);
    let d1_dag = linalg::dagger(&m.d1);
    // schur = 2 D2 - D1 D0+ D1†
    let schur = &m.d2 * C64::new(2.0, 0.0) - m.d1.dot(&d0_pinv).dot(&d1_dag);
    let schur_margin = linalg::hermitian_eigenvalues(&linalg::hermitize(&schur))[0];
    // (I - D0 D0+) D1†
    let proj = Array2::<C64>::eye(p) - m.d0.dot(&d0_pinv);
    let range_residual = linalg::frobenius(&proj.dot(&d1_dag));
    TradeoffMargins { schur_margin, range_residual, d0_margin, d2_margin, cutoff_active }
}

/// Block-matrix route: min eigenvalue of [[2 D2, D1], [D1†, D0]].
pub fn block_margin(m: &CouplingMoments) -> f64 {
    let d = m.d2.nrows();
    let p = m.d0.nrows();
    let n = d + p;
    if n == 0 {
        return 0.0;
    }
    let mut b = Array2::<C64>::zeros((n, n));
    for i in 0..d {
        for j in 0..d {
            b[[i, j]] = m.d2[[i, j]] * 2.0;
        }
    }
    for i in 0..d {
        for a in 0..p {
            b[[i, d + a]] = m.d1[[i, a]];
            b[[d + a, i]] = m.d1[[i, a]].conj();
        }
    }
    for a in 0..p {
        for bb in 0..p {
            b[[d + a, d + bb]] = m.d0[[a, bb]];
        }
    }
    linalg::hermitian_eigenvalues(&linalg::hermitize(&b))[0]
}

fn verdict_from(margins: &TradeoffMargins, tol: f64) -> Verdict {
    let valid = margins.schur_margin >= -tol
        && margins.range_residual <= tol
        && margins.d0_margin >= -tol
        && margins.d2_margin >= -tol;
    if !valid {
        Verdict::Invalid
    } else if margins.schur_margin.is_finite() && margins.schur_margin.abs() <= 10.0 * tol {
        Verdict::Boundary
    } else {
        Verdict::Valid
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstPoint {
    pub index: usize,
    pub coordinates: Vec<f64>,
    pub schur_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidityCertificate {
    pub schur_margin: f64,
    pub range_residual: f64,
    pub block_margin: f64,
    pub d0_margin: f64,
    pub d2_margin: f64,
    pub verdict: Verdict,
    pub tol: f64,
    pub pseudo_inverse_cutoff_active: bool,
    pub worst_point: Option<WorstPoint>,
}

impl ValidityCertificate {
    pub fn accepts(&self) -> bool {
        self.verdict != Verdict::Invalid
    }

    /// Single-point certificate from raw coupling matrices.
    pub fn from_point(m: &CouplingMoments, tol: f64) -> Self {
        let t = tradeoff_margins(m);
        ValidityCertificate {
            schur_margin: t.schur_margin,
            range_residual: t.range_residual,
            block_margin: block_margin(m),
            d0_margin: t.d0_margin,
            d2_margin: t.d2_margin,
            verdict: verdict_from(&t, tol),
            tol,
            pseudo_inverse_cutoff_active: t.cutoff_active,
            worst_point: None,
        }
    }

    /// key=value lines, one per scalar field.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("schur_margin={:e}\n", self.schur_margin));
        s.push_str(&format!("range_residual={:e}\n", self.range_residual));
        s.push_str(&format!("block_margin={:e}\n", self.block_margin));
        s.push_str(&format!("d0_margin={:e}\n", self.d0_margin));
        s.push_str(&format!("d2_margin={:e}\n", self.d2_margin));
        s.push_str(&format!(
            "verdict={}\n",
            match self.verdict {
                Verdict::Valid => "valid",
                Verdict::Invalid => "invalid",
                Verdict::Boundary => "boundary",
            }
        ));
        s.push_str(&format!("tol={:e}\n", self.tol));
        s.push_str(&format!(
            "pseudo_inverse_cutoff_active={}\n",
            self.pseudo_inverse_cutoff_active
        ));
        if let Some(w) = &self.worst_point {
            s.push_str(&format!("worst_point_index={}\n", w.index));
            let coords: Vec<String> = w.coordinates.iter().map(|c| format!("{:e}", c)).collect();
            s.push_str(&format!("worst_point_coordinates={}\n", coords.join(";")));
        }
        s
    }
}

/// Classical axes on which the CP conditions are active: any d2 support or
/// any d1 back-reaction. Drift-only axes are deterministic and contribute a
/// vacuous zero eigenvalue that would mask the real margin.
pub fn active_axes(grid: &PhaseGrid, c: &crate::couplings::CouplingSet) -> Vec<usize> {
    use crate::couplings::Coupling;
    let d = grid.dims();
    let p = c.num_lindblads();
    let mut active = vec![false; d];
    let mut mark_d2 = |m: &ndarray::Array2<f64>| {
        for i in 0..d {
            for j in 0..d {
                if m[[i, j]] != 0.0 {
                    active[i] = true;
                    active[j] = true;
                }
            }
        }
    };
    match &c.d2 {
        Coupling::Constant(m) => mark_d2(m),
        Coupling::PerPoint(ms) => ms.iter().for_each(|m| mark_d2(m)),
    }
    let mut mark_d1 = |m: &Array2<C64>| {
        for i in 0..d {
            for a in 0..p {
                if m[[i, a]] != ZERO {
                    active[i] = true;
                }
            }
        }
    };
    match &c.d1 {
        Coupling::Constant(m) => mark_d1(m),
        Coupling::PerPoint(ms) => ms.iter().for_each(|m| mark_d1(m)),
    }
    (0..d).filter(|&i| active[i]).collect()
}

fn reduced_moments(
    c: &crate::couplings::CouplingSet,
    idx: usize,
    axes: &[usize],
    p: usize,
) -> CouplingMoments {
    let d1_full = c.d1.at(idx);
    let d2_full = c.d2.at(idx);
    let dr = axes.len();
    let d1 = Array2::from_shape_fn((dr, p), |(i, a)| d1_full[[axes[i], a]]);
    let d2 = Array2::from_shape_fn((dr, dr), |(i, j)| {
        Complex64::new(d2_full[[axes[i], axes[j]]], 0.0)
    });
    CouplingMoments { d0: c.d0.at(idx).clone(), d1, d2 }
}

/// Certify a coupling set over a whole grid (margins are grid minima, the
/// residual a grid maximum). The trade-off is evaluated on the CP-active
/// axes; a set with no stochastic axes at all reports an infinite Schur
/// margin (nothing to trade off) and is judged on the remaining margins.
pub fn check_tradeoff(
    grid: &PhaseGrid,
    c: &crate::couplings::CouplingSet,
    tol: f64,
) -> ValidityCertificate {
    let constant =
        c.d0.is_constant() && c.d1.is_constant() && matches!(c.d2, crate::couplings::Coupling::Constant(_));
    let npts = if constant { 1 } else { grid.len() };
    let axes = active_axes(grid, c);
    let p = c.num_lindblads();
    let mut agg: Option<ValidityCertificate> = None;
    for idx in 0..npts {
        let m = reduced_moments(c, idx, &axes, p);
        let mut t = tradeoff_margins(&m);
        // report the d2 PSD margin of the full matrix, not the reduction
        let full_d2 = c.d2.at(idx).mapv(|v| Complex64::new(v, 0.0));
        t.d2_margin = if full_d2.nrows() == 0 {
            0.0
        } else {
            linalg::hermitian_eigenvalues(&linalg::hermitize(&full_d2))[0]
        };
        if axes.is_empty() {
            t.schur_margin = f64::INFINITY;
        }
        let b = if axes.is_empty() && p == 0 { 0.0 } else { block_margin(&m) };
        let worse = match &agg {
            None => true,
            Some(prev) => t.schur_margin < prev.schur_margin,
        };
        let agg = agg.get_or_insert_with(|| ValidityCertificate {
            schur_margin: f64::INFINITY,
            range_residual: 0.0,
            block_margin: f64::INFINITY,
            d0_margin: f64::INFINITY,
            d2_margin: f64::INFINITY,
            verdict: Verdict::Valid,
            tol,
            pseudo_inverse_cutoff_active: false,
            worst_point: None,
        });
        agg.schur_margin = agg.schur_margin.min(t.schur_margin);
        agg.range_residual = agg.range_residual.max(t.range_residual);
        agg.block_margin = agg.block_margin.min(b);
        agg.d0_margin = agg.d0_margin.min(t.d0_margin);
        agg.d2_margin = agg.d2_margin.min(t.d2_margin);
        agg.pseudo_inverse_cutoff_active |= t.cutoff_active;
        if worse {
            agg.worst_point = Some(WorstPoint {
                index: idx,
                coordinates: grid.point(idx),
                schur_margin: t.schur_margin,
            });
        }
    }
    let mut cert = agg.expect("at least one point");
    let m = TradeoffMargins {
        schur_margin: cert.schur_margin,
        range_residual: cert.range_residual,
        d0_margin: cert.d0_margin,
        d2_margin: cert.d2_margin,
        cutoff_active: cert.pseudo_inverse_cutoff_active,
    };
    cert.verdict = verdict_from(&m, tol);
    cert
}


/// Block-route margin over a grid (min eigenvalue over points, CP-active
/// axes only).
pub fn check_block(grid: &PhaseGrid, c: &crate::couplings::CouplingSet) -> f64 {
    let constant =
        c.d0.is_constant() && c.d1.is_constant() && matches!(c.d2, crate::couplings::Coupling::Constant(_));
    let npts = if constant { 1 } else { grid.len() };
    let axes = active_axes(grid, c);
    let p = c.num_lindblads();
    if axes.is_empty() && p == 0 {
        return 0.0;
    }
    (0..npts)
        .map(|idx| block_margin(&reduced_moments(c, idx, &axes, p)))
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// Moment tables and the Kramers-Moyal inequality scan
// ---------------------------------------------------------------------------

/// Key for one moment entry: order n, the (sorted) classical multi-index,
/// and the operator-basis labels mu, nu (0 = identity, 1..=p = Lindblads).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MomentKey {
    pub n: usize,
    pub axes: Vec<usize>,
    pub mu: usize,
    pub nu: usize,
}

impl MomentKey {
    /// Order-n moment along a single axis.
    pub fn single_axis(n: usize, axis: usize, mu: usize, nu: usize) -> Self {
        MomentKey { n, axes: vec![axis; n], mu, nu }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MomentEntry {
    pub value: C64,
    pub stderr: f64,
}

/// Short-time Kramers-Moyal coefficients D_n^{mu nu} around one base point.
///
/// Entries obey the Hermiticity pairing D^{mu nu} = conj(D^{nu mu}); `set`
/// maintains the partner automatically.
#[derive(Debug, Clone)]
pub struct MomentTable {
    pub base_point: Vec<f64>,
    pub max_order: usize,
    pub num_lindblads: usize,
    pub num_axes: usize,
    entries: BTreeMap<MomentKey, MomentEntry>,
}

impl MomentTable {
    pub fn new(base_point: Vec<f64>, max_order: usize, num_lindblads: usize, num_axes: usize) -> Self {
        MomentTable { base_point, max_order, num_lindblads, num_axes, entries: BTreeMap::new() }
    }

    pub fn set(&mut self, key: MomentKey, value: C64) {
        self.set_with_stderr(key, value, 0.0);
    }

    pub fn set_with_stderr(&mut self, key: MomentKey, value: C64, stderr: f64) {
        let mut axes = key.axes.clone();
        axes.sort_unstable();
        let partner = MomentKey { n: key.n, axes: axes.clone(), mu: key.nu, nu: key.mu };
        let key = MomentKey { axes, ..key };
        self.max_order = self.max_order.max(key.n);
        if partner != key {
            self.entries.insert(partner, MomentEntry { value: value.conj(), stderr });
        }
        self.entries.insert(key, MomentEntry { value, stderr });
    }

    pub fn get(&self, key: &MomentKey) -> C64 {
        self.entries.get(key).map(|e| e.value).unwrap_or(ZERO)
    }

    pub fn entry(&self, key: &MomentKey) -> Option<&MomentEntry> {
        self.entries.get(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&MomentKey, &MomentEntry)> {
        self.entries.iter()
    }

    /// CSV export: n, indices (dash-joined), mu, nu, re, im, stderr.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"n,indices,mu,nu,re,im,stderr\n")?;
        for (k, e) in &self.entries {
            let idx: Vec<String> = k.axes.iter().map(|a| a.to_string()).collect();
            w.write_all(
                format!(
                    "{},{},{},{},{:e},{:e},{:e}\n",
                    k.n,
                    idx.join("-"),
                    k.mu,
                    k.nu,
                    e.value.re,
                    e.value.im,
                    e.stderr
                )
                .as_bytes(),
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentClass {
    ConsistentWithContinuous,
    ConsistentWithJump,
    ViolatesCp,
}

#[derive(Debug, Clone, Serialize)]
pub struct PawulaViolation {
    pub axis: usize,
    /// (n, m) of the inequality, or None for the block-positivity check.
    pub orders: Option<(usize, usize)>,
    pub mu: usize,
    pub nu: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PawulaReport {
    pub violations: Vec<PawulaViolation>,
    pub classification: MomentClass,
    pub tol: f64,
}

/// Scan a moment table against the Kramers-Moyal positivity inequalities.
///
/// Checked per axis (diagonal multi-indices):
/// * classical chain (mu = nu = 0, n >= 1):
///   (2n)!(2n+2m)! D00_2n D00_{2n+2m} >= [(2n+m)! D00_{2n+m}]^2;
/// * quantum-block chain (mu, nu >= 1) including n = 0, which is what forces
///   either infinitely many moments or truncation at the displayed orders;
/// * per-axis block positivity [[2 D2, D1row],[D1row†, D0]] >= 0, which ties
///   the first-order back-reaction to the zeroth-order decoherence.
pub fn pawula_scan(t: &MomentTable, tol: f64) -> PawulaReport {
    let mut violations = Vec::new();
    let p = t.num_lindblads;
    let nmax = t.max_order;

    let fact = |k: usize| -> f64 { (1..=k).map(|x| x as f64).product::<f64>().max(1.0) };
    // Entries below the value-resolution tolerance count as exactly zero,
    // so estimator bias cannot fabricate violations between vanishing
    // moments.
    let val = |n: usize, axis: usize, mu: usize, nu: usize| -> (f64, C64) {
        let k = MomentKey::single_axis(n, axis, mu, nu);
        let e = t.entry(&k);
        let err = e.map(|e| e.stderr).unwrap_or(0.0);
        let mut v = e.map(|e| e.value).unwrap_or(ZERO);
        if v.norm() <= tol.max(3.0 * err) {
            v = ZERO;
        }
        (err, v)
    };

    for axis in 0..t.num_axes {
        // classical + quantum-block Cauchy-Schwarz chains
        for mu in 0..=p {
            for nu in 0..=p {
                let classical = mu == 0 && nu == 0;
                if !classical && (mu == 0 || nu == 0) {
                    continue; // mixed labels are handled by the block check
                }
                let n_lo = if classical { 1 } else { 0 };
                for n in n_lo..=nmax / 2 {
                    for m in 0..=(nmax.saturating_sub(2 * n)) / 2 {
                        if n == 0 && m == 0 {
                            continue;
                        }
                        let (e_lo, d_lo) = val(2 * n, axis, mu, mu);
                        let (e_hi, d_hi) = val(2 * n + 2 * m, axis, nu, nu);
                        let (e_x, d_x) = val(2 * n + m, axis, mu, nu);
                        let lhs = fact(2 * n) * fact(2 * n + 2 * m) * d_lo.re * d_hi.re;
                        let rhs = (fact(2 * n + m) * d_x.norm()).powi(2);
                        let noise = 3.0
                            * (fact(2 * n) * fact(2 * n + 2 * m) * (e_lo * d_hi.norm() + e_hi * d_lo.norm())
                                + 2.0 * fact(2 * n + m).powi(2) * e_x * d_x.norm());
                        let scale = 1.0 + lhs.abs().max(rhs.abs());
                        if rhs > lhs + tol * scale + noise {
                            violations.push(PawulaViolation {
                                axis,
                                orders: Some((n, m)),
                                mu,
                                nu,
                                lhs,
                                rhs,
                            });
                        }
                    }
                }
            }
        }

        // per-axis block positivity: [[2 D2_aa, D1_a],[D1_a†, D0]], with a
        // 3-sigma eigenvalue allowance propagated from the entry errors
        // (|delta lambda| <= ||delta B||_F); estimated tables of dynamics
        // sitting exactly on the boundary must not be flagged by noise.
        if p > 0 {
            let mut b = Array2::<C64>::zeros((1 + p, 1 + p));
            let mut noise2 = 0.0f64;
            let (e2, d2v) = val(2, axis, 0, 0);
            b[[0, 0]] = d2v * 2.0;
            noise2 += (3.0 * 2.0 * e2).powi(2);
            for a in 0..p {
                let (e1, d1a) = val(1, axis, 0, a + 1);
                b[[0, 1 + a]] = d1a;
                b[[1 + a, 0]] = d1a.conj();
                noise2 += 2.0 * (3.0 * e1).powi(2);
                for bb in 0..p {
                    let (e0, d0v) = val(0, axis, a + 1, bb + 1);
                    b[[1 + a, 1 + bb]] = d0v;
                    noise2 += (3.0 * e0).powi(2);
                }
            }
            let min = linalg::hermitian_eigenvalues(&linalg::hermitize(&b))[0];
            let scale = 1.0 + linalg::frobenius(&b);
            if min < -(tol * scale + noise2.sqrt()) {
                violations.push(PawulaViolation {
                    axis,
                    orders: None,
                    mu: 0,
                    nu: 0,
                    lhs: min,
                    rhs: 0.0,
                });
            }
        }
    }

    // classification against the continuous truncation pattern
    let mut continuous = true;
    for (k, e) in t.entries() {
        let quantum = k.mu != 0 || k.nu != 0;
        let effectively_zero = e.value.norm() <= tol.max(3.0 * e.stderr);
        if quantum && k.n >= 2 && !effectively_zero {
            continuous = false;
        }
        if !quantum && k.n >= 3 && !effectively_zero {
            continuous = false;
        }
    }
    let classification = if !violations.is_empty() {
        MomentClass::ViolatesCp
    } else if continuous {
        MomentClass::ConsistentWithContinuous
    } else {
        MomentClass::ConsistentWithJump
    };
    PawulaReport { violations, classification, tol }
}

// ---------------------------------------------------------------------------
// CQ Cauchy-Schwarz sweep
// ---------------------------------------------------------------------------

/// <f, g> = sum_k Tr(f_k† g_k T_k); the inequality under test is
/// <f,f><g,g> >= <f,g><g,f>, which holds whenever every T_k is PSD.
fn cs_inner(t: &[Array2<C64>], f: &[Array2<C64>], g: &[Array2<C64>]) -> C64 {
    let mut acc = ZERO;
    for k in 0..t.len() {
        let fg = linalg::dagger(&f[k]).dot(&g[k]);
        acc += linalg::trace(&fg.dot(&t[k]));
    }
    acc
}

/// Slack LHS - RHS of the CQ Cauchy-Schwarz inequality for given test
/// operators.
pub fn cauchy_schwarz_slack(t: &[Array2<C64>], f: &[Array2<C64>], g: &[Array2<C64>]) -> f64 {
    let ff = cs_inner(t, f, f).re;
    let gg = cs_inner(t, g, g).re;
    let fg = cs_inner(t, f, g);
    let gf = cs_inner(t, g, f);
    ff * gg - (fg * gf).re
}

#[derive(Debug, Clone, Serialize)]
pub struct CsReport {
    pub min_slack: f64,
    pub trials: usize,
    /// Smallest eigenvalue over the operator table.
    pub table_margin: f64,
}

/// Sweep over test-operator pairs: directed candidates aligned with any
/// negative eigendirections of the table first, then random Gaussian
/// draws. Does not gate on positivity, so it doubles as a counterexample
/// search.
pub fn cauchy_schwarz_sweep(t: &[Array2<C64>], trials: usize, seed: u64) -> CsReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = t.first().map(|b| b.nrows()).unwrap_or(0);
    let mut table_margin = f64::INFINITY;
    let mut min_slack = f64::INFINITY;
    let gauss = move |rng: &mut ChaCha8Rng| {
        // Box-Muller
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (-2.0 * u1.ln()).sqrt() * u2.cos()
    };
    let draw = |rng: &mut ChaCha8Rng| -> Vec<Array2<C64>> {
        (0..t.len())
            .map(|_| Array2::from_shape_fn((dim, dim), |_| C64::new(gauss(rng), gauss(rng))))
            .collect()
    };
    let mut used = 0usize;
    for (k, block) in t.iter().enumerate() {
        let (vals, vecs) = linalg::hermitian_eigen(&linalg::hermitize(block));
        table_margin = table_margin.min(vals[0]);
        if vals[0] < 0.0 && used < trials {
            // f supported at this Delta along the negative direction makes
            // <f, f> negative; any generic g then exposes the violation.
            let mut f = vec![Array2::<C64>::zeros((dim, dim)); t.len()];
            for r in 0..dim {
                for cc in 0..dim {
                    f[k][[r, cc]] = vecs[[r, 0]] * vecs[[cc, 0]].conj();
                }
            }
            let g = draw(&mut rng);
            min_slack = min_slack.min(cauchy_schwarz_slack(t, &f, &g));
            used += 1;
        }
    }
    for _ in used..trials {
        let f = draw(&mut rng);
        let g = draw(&mut rng);
        let s = cauchy_schwarz_slack(t, &f, &g);
        if s < min_slack {
            min_slack = s;
        }
    }
    if !table_margin.is_finite() {
        table_margin = 0.0;
    }
    CsReport { min_slack, trials, table_margin }
}

/// Spec'd entry point: rejects tables that are not PSD, then sweeps.
pub fn cauchy_schwarz_test(t: &[Array2<C64>], trials: usize, seed: u64) -> Result<CsReport> {
    for b in t {
        let min = linalg::min_eig_hermitian(b, 1e-8)?;
        if min < -1e-10 {
            return Err(CqError::NotPositive { min_eig: min });
        }
    }
    Ok(cauchy_schwarz_sweep(t, trials, seed))
}

// ---------------------------------------------------------------------------
// Choi-matrix CP verification of discrete propagators
// ---------------------------------------------------------------------------

/// Superoperator table of a short-time propagator over a finite site set:
/// blocks[to * num_sites + from] maps vec(rho(from)) contributions into
/// site `to`.
#[derive(Debug, Clone)]
pub struct PropagatorTable {
    pub num_sites: usize,
    pub nq: usize,
    pub blocks: Vec<Array2<C64>>,
}

impl PropagatorTable {
    pub fn block(&self, to: usize, from: usize) -> &Array2<C64> {
        &self.blocks[to * self.num_sites + from]
    }
}

/// Choi matrix of a superoperator (column-stacking convention):
/// C[(a n + r), (b n + s)] = Lambda(E_ab)[r, s].
pub fn choi_matrix(superop: &Array2<C64>, nq: usize) -> Array2<C64> {
    let n2 = nq * nq;
    assert_eq!(superop.nrows(), n2);
    let mut c = Array2::<C64>::zeros((n2, n2));
    for a in 0..nq {
        for b in 0..nq {
            // vec(E_ab) has a single 1 at index b*nq + a
            let col = b * nq + a;
            for r in 0..nq {
                for s in 0..nq {
                    c[[a * nq + r, b * nq + s]] = superop[[s * nq + r, col]];
                }
            }
        }
    }
    c
}

/// Signed Kraus decomposition from a Choi matrix: pairs (weight, V) with
/// Lambda(X) = sum weight * V X V†. Weights are the Choi eigenvalues
/// (negative ones signal a non-CP map but are kept so normalization sums
/// stay exact).
pub fn kraus_from_choi(choi: &Array2<C64>, nq: usize, cutoff: f64) -> Vec<(f64, Array2<C64>)> {
    let (vals, vecs) = linalg::hermitian_eigen(choi);
    let wmax = vals.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let mut out = Vec::new();
    for (k, &w) in vals.iter().enumerate() {
        if w.abs() <= cutoff * wmax.max(1e-300) {
            continue;
        }
        let v = Array2::from_shape_fn((nq, nq), |(r, a)| vecs[[a * nq + r, k]]);
        out.push((w, v));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ChoiCertificate {
    pub min_choi_eigenvalue: f64,
    /// (to, from) pair attaining the minimum.
    pub worst_pair: (usize, usize),
    /// max over sources of ||sum_to sum_k w V†V - I||_F (probability
    /// conservation of the propagator).
    pub normalization_residual: f64,
    pub tol: f64,
}

impl ChoiCertificate {
    pub fn is_cp(&self) -> bool {
        self.min_choi_eigenvalue >= -self.tol
    }
}

/// CP-verify a propagator snapshot: every (to, from) Choi block must be PSD
/// and the Kraus factors must resolve the identity when summed over
/// destinations.
pub fn choi_cp_check(table: &PropagatorTable, tol: f64) -> Result<ChoiCertificate> {
    let m = table.num_sites;
    let nq = table.nq;
    if table.blocks.len() != m * m {
        return Err(CqError::DimensionMismatch {
            context: "propagator table must hold num_sites^2 blocks",
            expected: m * m,
            got: table.blocks.len(),
        });
    }
    let mut min_eig = f64::INFINITY;
    let mut worst = (0, 0);
    let mut norm_residual = 0.0f64;
    for from in 0..m {
        let mut resolve = Array2::<C64>::zeros((nq, nq));
        for to in 0..m {
            let choi = choi_matrix(table.block(to, from), nq);
            let asym = linalg::asymmetry(&choi);
            if asym > 1e-8 {
                return Err(CqError::NotHermitian { asymmetry: asym, tol: 1e-8 });
            }
            let kraus = kraus_from_choi(&choi, nq, 1e-14);
            for (w, v) in &kraus {
                let vdv = linalg::dagger(v).dot(v);
                resolve.zip_mut_with(&vdv, |o, x| *o += C64::new(*w, 0.0) * x);
            }
            let min = linalg::hermitian_eigenvalues(&choi)[0];
            if min < min_eig {
                min_eig = min;
                worst = (to, from);
            }
        }
        let defect = &resolve - &Array2::<C64>::eye(nq);
        norm_residual = norm_residual.max(linalg::frobenius(&defect));
    }
    Ok(ChoiCertificate {
        min_choi_eigenvalue: min_eig,
        worst_pair: worst,
        normalization_residual: norm_residual,
        tol,
    })
}
