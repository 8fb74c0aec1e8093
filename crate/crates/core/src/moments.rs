// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Kramers-Moyal coefficient estimation from short-time evolution.
//!
//! A narrow Gaussian stands in for the delta-peaked initial condition. The
//! estimators work with per-axis cumulant differences rather than raw
//! moments: cumulants of the initial width separate additively from those
//! of the transition kernel (exactly so for locally linear dynamics), which
//! removes the width contamination that raw fourth moments would carry.
//! Two Richardson extrapolations clean up the leading systematics: one in
//! dt (short-time curvature) and one in the squared initial width (the
//! width-times-drift-gradient coupling that survives the cumulant
//! construction when coefficients vary over the blob). Classical observables (z - zbar)^n
//! identify the n >= 1 coefficients through a least-squares inversion over
//! probe states; the n = 0 quantum block (decoherence matrix and
//! Hamiltonian) is fit from the short-time change of the quantum marginal,
//! since the n = 0 classical observable is the conserved total trace.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::couplings::CouplingSet;
use crate::error::{CqError, Result};
use crate::generator::ContinuousGenerator;
use crate::grid::PhaseGrid;
use crate::integrator::{evolve, stability_bound, EvolveOptions};
use crate::linalg::{self, C64};
use crate::qop::QOperator;
use crate::state::HybridState;
use crate::validity::{MomentKey, MomentTable};

#[derive(Debug, Clone)]
pub struct MomentEstimatorConfig {
    /// Base evolution span; the Richardson pair is (dt, dt/2).
    pub dt: f64,
    /// Highest classical moment order to estimate.
    pub max_order: usize,
    /// Two-point Richardson extrapolation in dt (recommended).
    pub richardson: bool,
    /// Fraction of the stability bound used for internal RK4 substeps.
    pub substep_safety: f64,
    /// Condition-number limit for the probe inversion.
    pub cond_limit: f64,
    /// Initial Gaussian widths per axis; None picks 4 grid spacings.
    pub widths: Option<Vec<f64>>,
    /// Extrapolate over squared width (runs at w and w/sqrt(2)); skipped
    /// automatically when the narrower run would be under-resolved.
    pub width_extrapolation: bool,
}

impl MomentEstimatorConfig {
    pub fn new(dt: f64, max_order: usize) -> Self {
        MomentEstimatorConfig {
            dt,
            max_order,
            richardson: true,
            substep_safety: 0.9,
            cond_limit: 1e6,
            widths: None,
            width_extrapolation: true,
        }
    }
}

/// Per-axis classical cumulants about zbar at three times along one
/// trajectory, plus the quantum marginals.
struct ProbeRun {
    /// cumulants[(order-1) * d + axis] at t = 0, dt/2, dt.
    init: Vec<f64>,
    half: Vec<f64>,
    full: Vec<f64>,
    qm0: Array2<C64>,
    qm_half: Array2<C64>,
    qm_full: Array2<C64>,
}

/// Cumulants kappa_1..kappa_n from raw moments m_1..m_n about the same
/// point (supported through fourth order).
fn cumulants_from_moments(m: &[f64]) -> Vec<f64> {
    let mut k = Vec::with_capacity(m.len());
    if !m.is_empty() {
        k.push(m[0]);
    }
    if m.len() >= 2 {
        k.push(m[1] - m[0] * m[0]);
    }
    if m.len() >= 3 {
        k.push(m[2] - 3.0 * m[1] * m[0] + 2.0 * m[0].powi(3));
    }
    if m.len() >= 4 {
        k.push(
            m[3] - 3.0 * m[1] * m[1] - 4.0 * m[2] * m[0] + 12.0 * m[1] * m[0] * m[0]
                - 6.0 * m[0].powi(4),
        );
    }
    k
}

fn run_probe(
    grid: &Arc<PhaseGrid>,
    couplings: &CouplingSet,
    zbar: &[f64],
    widths: &[f64],
    sigma: &QOperator,
    cfg: &MomentEstimatorConfig,
) -> Result<ProbeRun> {
    if cfg.max_order > 4 {
        return Err(CqError::Invalid(
            "moment estimation supports orders up to 4 (cumulant conversion)".into(),
        ));
    }
    let state0 = HybridState::gaussian_product(grid.clone(), zbar, widths, sigma)?;
    let d = grid.dims();
    let msr = |s: &HybridState| -> Vec<f64> {
        let p = s.classical_marginal();
        let w = p.integrate();
        let mut out = vec![0.0; cfg.max_order * d];
        for axis in 0..d {
            let raw: Vec<f64> = (1..=cfg.max_order)
                .map(|n| p.moment(axis, zbar[axis], n as u32) / w)
                .collect();
            for (n, kappa) in cumulants_from_moments(&raw).into_iter().enumerate() {
                out[n * d + axis] = kappa;
            }
        }
        out
    };
    let init = msr(&state0);
    let qm0 = state0.quantum_marginal().matrix().clone();

    let bound = stability_bound(grid, couplings);
    let mut gen = ContinuousGenerator::new(grid.clone(), couplings.clone())?;
    let half_span = cfg.dt / 2.0;
    let nsub = if bound.is_finite() {
        (half_span / (cfg.substep_safety * bound)).ceil().max(1.0) as usize
    } else {
        1
    };
    let sub_dt = half_span / nsub as f64;

    let opts = EvolveOptions {
        snapshot_stride: usize::MAX,
        ..EvolveOptions::new(sub_dt, half_span)
    };
    let mid = evolve(&mut gen, &state0, &opts, |_| {})?;
    if mid.aborted_at.is_some() {
        return Err(CqError::NonFinite { time: mid.aborted_at.unwrap() });
    }
    let half = msr(&mid.state);
    let qm_half = mid.state.quantum_marginal().matrix().clone();

    let opts = EvolveOptions {
        snapshot_stride: usize::MAX,
        ..EvolveOptions::new(sub_dt, cfg.dt)
    };
    let fin = evolve(&mut gen, &mid.state, &opts, |_| {})?;
    if fin.aborted_at.is_some() {
        return Err(CqError::NonFinite { time: fin.aborted_at.unwrap() });
    }
    let full = msr(&fin.state);
    let qm_full = fin.state.quantum_marginal().matrix().clone();

    Ok(ProbeRun { half, full, init, qm0, qm_half, qm_full })
}

/// Raw and extrapolated rate for one observable: returns (value, bias),
/// where bias is the magnitude of the Richardson correction that was
/// removed (an error scale for what remains).
fn extrapolate(m0: f64, m_half: f64, m_full: f64, dt: f64, nfact: f64, richardson: bool) -> (f64, f64) {
    let d_full = (m_full - m0) / (dt * nfact);
    let d_half = (m_half - m0) / ((dt / 2.0) * nfact);
    if richardson {
        (2.0 * d_half - d_full, (d_half - d_full).abs())
    } else {
        (d_full, (d_half - d_full).abs())
    }
}

/// A probe trajectory at the nominal width plus, when resolvable, one at
/// w/sqrt(2) for the squared-width extrapolation.
struct ProbePair {
    wide: ProbeRun,
    narrow: Option<ProbeRun>,
}

fn run_probe_pair(
    grid: &Arc<PhaseGrid>,
    couplings: &CouplingSet,
    zbar: &[f64],
    widths: &[f64],
    sigma: &QOperator,
    cfg: &MomentEstimatorConfig,
) -> Result<ProbePair> {
    let wide = run_probe(grid, couplings, zbar, widths, sigma, cfg)?;
    let narrow_widths: Vec<f64> =
        widths.iter().map(|w| w * std::f64::consts::FRAC_1_SQRT_2).collect();
    let resolvable = narrow_widths
        .iter()
        .enumerate()
        .all(|(a, w)| *w >= 2.0 * grid.spacing(a));
    let narrow = if cfg.width_extrapolation && resolvable {
        Some(run_probe(grid, couplings, zbar, &narrow_widths, sigma, cfg)?)
    } else {
        None
    };
    Ok(ProbePair { wide, narrow })
}

/// One extrapolated observable: value plus the two removed-correction
/// scales (what remains is higher order in each).
struct Rate {
    value: f64,
    dt_bias: f64,
    width_bias: f64,
}

impl Rate {
    fn stderr_scale(&self) -> f64 {
        self.dt_bias.hypot(self.width_bias)
    }
}

impl ProbePair {
    /// dt-Richardson within each width, then extrapolate the squared width
    /// to zero.
    fn classical_rate(&self, k: usize, dt: f64, nfact: f64, richardson: bool) -> Rate {
        let (va, ba) =
            extrapolate(self.wide.init[k], self.wide.half[k], self.wide.full[k], dt, nfact, richardson);
        match &self.narrow {
            None => Rate { value: va, dt_bias: ba, width_bias: 0.0 },
            Some(nr) => {
                let (vb, bb) = extrapolate(nr.init[k], nr.half[k], nr.full[k], dt, nfact, richardson);
                // bias ~ c sigma^2: the narrow run carries half of it
                Rate {
                    value: 2.0 * vb - va,
                    dt_bias: ba.max(bb),
                    width_bias: 0.5 * (va - vb).abs(),
                }
            }
        }
    }

    /// Same two-level extrapolation for the quantum-marginal rate.
    fn quantum_rate(&self, dt: f64, richardson: bool) -> Array2<C64> {
        let rate_of = |run: &ProbeRun| -> Array2<C64> {
            let r_full = (&run.qm_full - &run.qm0) / Complex64::new(dt, 0.0);
            let r_half = (&run.qm_half - &run.qm0) / Complex64::new(dt / 2.0, 0.0);
            if richardson {
                &r_half * Complex64::new(2.0, 0.0) - &r_full
            } else {
                r_full
            }
        };
        let ra = rate_of(&self.wide);
        match &self.narrow {
            None => ra,
            Some(nr) => {
                let rb = rate_of(nr);
                &rb * Complex64::new(2.0, 0.0) - &ra
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product::<f64>().max(1.0)
}

/// Verify the short-time expansion is resolved: the first-order Richardson
/// correction must stay below 10% on every significant observation
/// (significant = above 0.1% of the largest observation in the group).
fn check_bias(values: &[(f64, f64)], context: &'static str) -> Result<()> {
    let scale = values.iter().map(|(v, _)| v.abs()).fold(0.0f64, f64::max);
    let significant = 1e-3 * scale + 1e-9;
    for (v, bias) in values {
        if v.abs() > significant && *bias > 0.1 * v.abs() + 1e-4 * scale + 1e-12 {
            return Err(CqError::Invalid(format!(
                "dt too large for {context}: Richardson correction {bias:.3e} exceeds 10% of {v:.3e}"
            )));
        }
    }
    Ok(())
}

/// Classical (identity-block) Kramers-Moyal coefficients up to
/// `cfg.max_order`, estimated with a maximally mixed quantum probe.
pub fn estimate_classical_moments(
    grid: &Arc<PhaseGrid>,
    couplings: &CouplingSet,
    zbar: &[f64],
    cfg: &MomentEstimatorConfig,
) -> Result<MomentTable> {
    let d = grid.dims();
    let nq = couplings.nq();
    let widths = cfg
        .widths
        .clone()
        .unwrap_or_else(|| (0..d).map(|a| 4.0 * grid.spacing(a)).collect());
    let mixed = QOperator::new(Array2::eye(nq) * Complex64::new(1.0 / nq as f64, 0.0))?;
    let pair = run_probe_pair(grid, couplings, zbar, &widths, &mixed, cfg)?;

    let mut table = MomentTable::new(zbar.to_vec(), cfg.max_order, couplings.num_lindblads(), d);
    let mut checks = Vec::new();
    let mut values = vec![vec![(0.0f64, 0.0f64); d]; cfg.max_order];
    for n in 1..=cfg.max_order {
        for axis in 0..d {
            let k = (n - 1) * d + axis;
            let r = pair.classical_rate(k, cfg.dt, factorial(n), cfg.richardson);
            checks.push((r.value, r.dt_bias));
            values[n - 1][axis] = (r.value, r.stderr_scale());
        }
    }
    check_bias(&checks, "classical moment estimation")?;
    for axis in 0..d {
        // second-order stencils leak an O(h^2/12) fraction of the dominant
        // coefficient into the other orders; report it as a noise floor.
        let scale = (0..cfg.max_order).map(|n| values[n][axis].0.abs()).fold(0.0, f64::max);
        let floor = grid.spacing(axis).powi(2) / 12.0 * scale;
        for n in 1..=cfg.max_order {
            let (v, bias) = values[n - 1][axis];
            table.set_with_stderr(
                MomentKey::single_axis(n, axis, 0, 0),
                Complex64::new(v, 0.0),
                bias.hypot(floor),
            );
        }
    }
    Ok(table)
}

/// Hermitian-parametrized unknowns for a (p+1) x (p+1) moment matrix:
/// diagonal entries, then (Re, Im) for each mu < nu pair.
fn hermitian_param_count(dim: usize) -> usize {
    dim + dim * (dim - 1)
}

fn hermitian_from_params(dim: usize, xs: &[f64]) -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((dim, dim));
    for mu in 0..dim {
        m[[mu, mu]] = Complex64::new(xs[mu], 0.0);
    }
    let mut k = dim;
    for mu in 0..dim {
        for nu in mu + 1..dim {
            let v = Complex64::new(xs[k], xs[k + 1]);
            m[[mu, nu]] = v;
            m[[nu, mu]] = v.conj();
            k += 2;
        }
    }
    m
}

/// Classical-quantum moment table: n >= 1 blocks from classical observables
/// over a probe family, n = 0 quantum block (decoherence matrix) from the
/// quantum marginal change. Probes must span enough of operator space; the
/// inversion is rejected above `cfg.cond_limit`.
pub fn estimate_cq_moments(
    grid: &Arc<PhaseGrid>,
    couplings: &CouplingSet,
    zbar: &[f64],
    probes: &[QOperator],
    cfg: &MomentEstimatorConfig,
) -> Result<MomentTable> {
    let d = grid.dims();
    let p = couplings.num_lindblads();
    let nq = couplings.nq();
    if probes.is_empty() {
        return Err(CqError::Invalid("need at least one probe state".into()));
    }
    let widths = cfg
        .widths
        .clone()
        .unwrap_or_else(|| (0..d).map(|a| 4.0 * grid.spacing(a)).collect());

    let runs: Vec<ProbePair> = probes
        .iter()
        .map(|sigma| run_probe_pair(grid, couplings, zbar, &widths, sigma, cfg))
        .collect::<Result<_>>()?;

    // design matrix over the Hermitian parametrization of D^{mu nu}
    let basis: Vec<&QOperator> = couplings.lindblads.ops().iter().collect();
    let g_of = |sigma: &QOperator, mu: usize, nu: usize| -> C64 {
        // G[mu, nu] = Tr(L_nu† L_mu sigma), with L_0 = I
        let lmu = if mu == 0 {
            sigma.matrix().clone()
        } else {
            basis[mu - 1].matrix().dot(sigma.matrix())
        };
        if nu == 0 {
            linalg::trace(&lmu)
        } else {
            linalg::trace(&linalg::dagger(basis[nu - 1].matrix()).dot(&lmu))
        }
    };
    let npar = hermitian_param_count(p + 1);
    let mut design = Array2::<f64>::zeros((probes.len(), npar));
    for (row, sigma) in probes.iter().enumerate() {
        for mu in 0..=p {
            design[[row, mu]] = g_of(sigma, mu, mu).re;
        }
        let mut k = p + 1;
        for mu in 0..=p {
            for nu in mu + 1..=p {
                let g = g_of(sigma, mu, nu);
                design[[row, k]] = 2.0 * g.re;
                design[[row, k + 1]] = -2.0 * g.im;
                k += 2;
            }
        }
    }

    let mut table = MomentTable::new(zbar.to_vec(), cfg.max_order, p, d);
    let mut checks = Vec::new();
    let mut fitted: Vec<Vec<(Array2<C64>, Array2<f64>)>> =
        vec![Vec::with_capacity(d); cfg.max_order];
    let mut obs_scale = vec![0.0f64; d];
    for n in 1..=cfg.max_order {
        for axis in 0..d {
            let k = (n - 1) * d + axis;
            let mut y = Array1::<f64>::zeros(probes.len());
            let mut bias_scale = 0.0f64;
            for (row, pair) in runs.iter().enumerate() {
                let r = pair.classical_rate(k, cfg.dt, factorial(n), cfg.richardson);
                y[row] = r.value;
                bias_scale = bias_scale.max(r.stderr_scale());
                checks.push((r.value, r.dt_bias));
            }
            let fit = linalg::lstsq(&design, &y, 1e-10);
            if fit.cond > cfg.cond_limit {
                return Err(CqError::IllConditionedProbes {
                    cond: fit.cond,
                    limit: cfg.cond_limit,
                });
            }
            let dof = (probes.len() as f64 - (npar - fit.dropped) as f64).max(1.0);
            let sigma_eff = (fit.residual_norm / dof.sqrt()).hypot(bias_scale);
            obs_scale[axis] = obs_scale[axis].max(y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            let dmat = hermitian_from_params(p + 1, fit.x.as_slice().unwrap());
            let mut errs = Array2::<f64>::zeros((p + 1, p + 1));
            for mu in 0..=p {
                for nu in mu..=p {
                    let param_sens = if mu == nu {
                        fit.sensitivity[mu]
                    } else {
                        // locate the (Re, Im) pair for this mu < nu
                        let mut kk = p + 1;
                        let mut sens = 0.0;
                        for m2 in 0..=p {
                            for n2 in m2 + 1..=p {
                                if m2 == mu && n2 == nu {
                                    sens = fit.sensitivity[kk].hypot(fit.sensitivity[kk + 1]);
                                }
                                kk += 2;
                            }
                        }
                        sens
                    };
                    errs[[mu, nu]] = sigma_eff * param_sens.max(1.0);
                }
            }
            fitted[n - 1].push((dmat, errs));
        }
    }
    check_bias(&checks, "classical-quantum moment estimation")?;
    for n in 1..=cfg.max_order {
        for axis in 0..d {
            let (dmat, errs) = &fitted[n - 1][axis];
            let floor = grid.spacing(axis).powi(2) / 12.0 * obs_scale[axis];
            for mu in 0..=p {
                for nu in mu..=p {
                    table.set_with_stderr(
                        MomentKey::single_axis(n, axis, mu, nu),
                        dmat[[mu, nu]],
                        errs[[mu, nu]].hypot(floor),
                    );
                }
            }
        }
    }

    // n = 0 quantum block: fit (H, D0) jointly against the marginal change.
    if p > 0 {
        let (d0, d0_err) = fit_zeroth_block(&runs, &basis, nq, p, cfg)?;
        for a in 0..p {
            for b in a..p {
                table.set_with_stderr(
                    MomentKey { n: 0, axes: vec![], mu: a + 1, nu: b + 1 },
                    d0[[a, b]],
                    d0_err,
                );
            }
        }
    }
    Ok(table)
}

/// Least-squares fit of the zeroth-order quantum block: the short-time
/// change of the quantum marginal is -i[H, sigma] + dissipator(D0), linear
/// in (H, D0) jointly.
fn fit_zeroth_block(
    runs: &[ProbePair],
    lindblads: &[&QOperator],
    nq: usize,
    p: usize,
    cfg: &MomentEstimatorConfig,
) -> Result<(Array2<C64>, f64)> {
    // Hermitian basis for H (nq^2 params) and for D0 (p^2 params).
    let h_params = nq * nq;
    let d0_params = p * p;
    let npar = h_params + d0_params;
    let rows_per_probe = 2 * nq * nq;
    let mut design = Array2::<f64>::zeros((rows_per_probe * runs.len(), npar));
    let mut y = Array1::<f64>::zeros(rows_per_probe * runs.len());

    let h_basis_mat = |j: usize| -> Array2<C64> {
        hermitian_basis_element(nq, j)
    };
    let d0_basis_mat = |j: usize| -> Array2<C64> { hermitian_basis_element(p, j) };

    for (pr, pair) in runs.iter().enumerate() {
        // observation: Richardson rate of the quantum marginal
        let rate = pair.quantum_rate(cfg.dt, cfg.richardson);
        for r in 0..nq {
            for c in 0..nq {
                let k = pr * rows_per_probe + 2 * (r * nq + c);
                y[k] = rate[[r, c]].re;
                y[k + 1] = rate[[r, c]].im;
            }
        }
        let sigma = &pair.wide.qm0;
        for j in 0..h_params {
            let b = h_basis_mat(j);
            let pred = (b.dot(sigma) - sigma.dot(&b)) * Complex64::new(0.0, -1.0);
            for r in 0..nq {
                for c in 0..nq {
                    let k = pr * rows_per_probe + 2 * (r * nq + c);
                    design[[k, j]] = pred[[r, c]].re;
                    design[[k + 1, j]] = pred[[r, c]].im;
                }
            }
        }
        for j in 0..d0_params {
            let coefs = d0_basis_mat(j);
            let mut pred = Array2::<C64>::zeros((nq, nq));
            for a in 0..p {
                for b in 0..p {
                    let w = coefs[[a, b]];
                    if w == linalg::ZERO {
                        continue;
                    }
                    let la = lindblads[a].matrix();
                    let lbd = linalg::dagger(lindblads[b].matrix());
                    let gain = la.dot(sigma).dot(&lbd);
                    let ldl = lbd.dot(la);
                    let loss = (ldl.dot(sigma) + sigma.dot(&ldl)) * Complex64::new(0.5, 0.0);
                    pred.zip_mut_with(&(gain - loss), |o, v| *o += w * v);
                }
            }
            for r in 0..nq {
                for c in 0..nq {
                    let k = pr * rows_per_probe + 2 * (r * nq + c);
                    design[[k, h_params + j]] = pred[[r, c]].re;
                    design[[k + 1, h_params + j]] = pred[[r, c]].im;
                }
            }
        }
    }
    let fit = linalg::lstsq(&design, &y, 1e-10);
    if fit.cond > cfg.cond_limit {
        return Err(CqError::IllConditionedProbes { cond: fit.cond, limit: cfg.cond_limit });
    }
    let d0 = hermitian_from_params(p, &fit.x.as_slice().unwrap()[h_params..]);
    let dof = (y.len() as f64 - (npar - fit.dropped) as f64).max(1.0);
    let err = fit.residual_norm / dof.sqrt();
    Ok((d0, err))
}

/// j-th element of a real basis for Hermitian dim x dim matrices: first the
/// diagonal projectors, then (E_kl + E_lk)/sqrt(2) and i(E_kl - E_lk)/sqrt(2)
/// pairs.
fn hermitian_basis_element(dim: usize, j: usize) -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((dim, dim));
    if j < dim {
        m[[j, j]] = linalg::ONE;
        return m;
    }
    let mut k = dim;
    let s = 1.0 / f64::sqrt(2.0);
    for r in 0..dim {
        for c in r + 1..dim {
            if j == k {
                m[[r, c]] = Complex64::new(s, 0.0);
                m[[c, r]] = Complex64::new(s, 0.0);
                return m;
            }
            if j == k + 1 {
                m[[r, c]] = Complex64::new(0.0, s);
                m[[c, r]] = Complex64::new(0.0, -s);
                return m;
            }
            k += 2;
        }
    }
    unreachable!("basis index out of range")
}

/// Informationally complete pure-probe family: |a>, (|a>+|b>)/sqrt2,
/// (|a>+i|b>)/sqrt2 over all pairs — 4 nq^2 functionals' worth for full
/// tomography. Affordable only for small nq.
pub fn ic_probes(nq: usize) -> Vec<QOperator> {
    let mut probes = Vec::new();
    for a in 0..nq {
        probes.push(QOperator::basis_state(nq, a));
    }
    for a in 0..nq {
        for b in a + 1..nq {
            let mut ket = Array1::<C64>::zeros(nq);
            ket[a] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            ket[b] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            probes.push(QOperator::from_ket(&ket));
            let mut ket = Array1::<C64>::zeros(nq);
            ket[a] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            ket[b] = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
            probes.push(QOperator::from_ket(&ket));
        }
    }
    probes
}

/// Compact probe family for oscillator-type problems: lowest two number
/// states, their real and imaginary superpositions, and two coherent
/// states. Spans the functionals {1, <Q>, <Q^2>} comfortably.
pub fn oscillator_probes(nq: usize) -> Vec<QOperator> {
    let mut ket01 = Array1::<C64>::zeros(nq);
    ket01[0] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    ket01[1] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut ket01i = Array1::<C64>::zeros(nq);
    ket01i[0] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    ket01i[1] = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
    vec![
        QOperator::basis_state(nq, 0),
        QOperator::basis_state(nq, 1),
        QOperator::from_ket(&ket01),
        QOperator::from_ket(&ket01i),
        QOperator::coherent_state(nq, Complex64::new(1.0, 0.0)),
        QOperator::coherent_state(nq, Complex64::new(-0.6, 0.4)),
    ]
}
