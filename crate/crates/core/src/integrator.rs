// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Classic fourth-order Runge-Kutta time stepping with per-step diagnostics.
//!
//! The integrator never renormalizes and never projects onto positive
//! states: a drifting trace is a bug signal, a negative eigenvalue is the
//! physics. Non-finite values abort the run and hand back the last good
//! state.

use serde::Serialize;

use crate::couplings::Coupling;
use crate::error::{CqError, Result};
use crate::generator::ContinuousGenerator;
use crate::grid::PhaseGrid;
use crate::jump::{JumpKernel, SiteState};
use crate::linalg;
use crate::state::HybridState;

/// State-space interface the RK4 loop needs: linear combinations plus the
/// diagnostics every run logs.
pub trait CqState: Clone {
    fn time(&self) -> f64;
    fn set_time(&mut self, t: f64);
    fn fill_zero(&mut self);
    fn axpy(&mut self, a: f64, other: &Self);
    fn total_trace(&self) -> f64;
    fn min_eigenvalue(&self) -> f64;
    fn classical_mean_var(&self) -> Vec<(f64, f64)>;
    fn quantum_purity(&self) -> f64;
    fn data_finite(&self) -> bool;
    /// Project out negative eigenvalues (non-physical; exploratory only).
    fn clip_negative(&mut self) -> f64;
}

impl CqState for HybridState {
    fn time(&self) -> f64 {
        self.time
    }
    fn set_time(&mut self, t: f64) {
        self.time = t;
    }
    fn fill_zero(&mut self) {
        self.field.fill_zero();
    }
    fn axpy(&mut self, a: f64, other: &Self) {
        self.field.axpy(a, &other.field);
    }
    fn total_trace(&self) -> f64 {
        HybridState::total_trace(self)
    }
    fn min_eigenvalue(&self) -> f64 {
        HybridState::min_eigenvalue(self)
    }
    fn classical_mean_var(&self) -> Vec<(f64, f64)> {
        (0..self.grid().dims()).map(|a| self.marginal_mean_var(a)).collect()
    }
    fn quantum_purity(&self) -> f64 {
        let qm = self.quantum_marginal();
        linalg::trace(&qm.matrix().dot(qm.matrix())).re
    }
    fn data_finite(&self) -> bool {
        self.field.data().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
    fn clip_negative(&mut self) -> f64 {
        HybridState::clip_negative(self)
    }
}

impl CqState for SiteState {
    fn time(&self) -> f64 {
        self.time
    }
    fn set_time(&mut self, t: f64) {
        self.time = t;
    }
    fn fill_zero(&mut self) {
        SiteState::fill_zero(self);
    }
    fn axpy(&mut self, a: f64, other: &Self) {
        SiteState::axpy(self, a, other);
    }
    fn total_trace(&self) -> f64 {
        SiteState::total_trace(self)
    }
    fn min_eigenvalue(&self) -> f64 {
        SiteState::min_eigenvalue(self)
    }
    fn classical_mean_var(&self) -> Vec<(f64, f64)> {
        let d = self.sites.first().map(|s| s.len()).unwrap_or(0);
        let w: Vec<f64> = self.site_weights();
        let total: f64 = w.iter().sum();
        (0..d)
            .map(|a| {
                if total.abs() < 1e-300 {
                    return (0.0, 0.0);
                }
                let mean =
                    self.sites.iter().zip(&w).map(|(z, wk)| z[a] * wk).sum::<f64>() / total;
                let var = self
                    .sites
                    .iter()
                    .zip(&w)
                    .map(|(z, wk)| (z[a] - mean).powi(2) * wk)
                    .sum::<f64>()
                    / total;
                (mean, var)
            })
            .collect()
    }
    fn quantum_purity(&self) -> f64 {
        let qm = self.quantum_marginal();
        linalg::trace(&qm.matrix().dot(qm.matrix())).re
    }
    fn data_finite(&self) -> bool {
        self.rho
            .iter()
            .all(|r| r.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
    fn clip_negative(&mut self) -> f64 {
        SiteState::clip_negative(self)
    }
}

/// A time-independent master-equation right-hand side.
pub trait Rhs<S: CqState> {
    fn rhs_into(&mut self, s: &S, out: &mut S) -> Result<()>;
}

impl Rhs<HybridState> for ContinuousGenerator {
    fn rhs_into(&mut self, s: &HybridState, out: &mut HybridState) -> Result<()> {
        self.apply_into(&s.field, &mut out.field)
    }
}

impl Rhs<SiteState> for JumpKernel {
    fn rhs_into(&mut self, s: &SiteState, out: &mut SiteState) -> Result<()> {
        self.apply_into(s, out)
    }
}

/// The zero generator (useful as a control).
pub struct ZeroRhs;

impl<S: CqState> Rhs<S> for ZeroRhs {
    fn rhs_into(&mut self, _s: &S, out: &mut S) -> Result<()> {
        out.fill_zero();
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub time: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub purity: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DiagnosticsLog {
    pub records: Vec<StepRecord>,
    pub initial_trace: f64,
}

impl DiagnosticsLog {
    /// Most negative eigenvalue seen over the whole run.
    pub fn min_eigenvalue(&self) -> f64 {
        self.records.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    /// First time the grid minimum eigenvalue dropped below `threshold`.
    pub fn time_to_negativity(&self, threshold: f64) -> Option<f64> {
        self.records.iter().find(|r| r.min_eigenvalue < threshold).map(|r| r.time)
    }

    pub fn final_trace_error(&self) -> f64 {
        self.records.last().map(|r| r.trace_error).unwrap_or(0.0)
    }

    /// CSV: t, trace_err, min_eig, mean_i..., var_i..., purity.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let d = self.records.first().map(|r| r.means.len()).unwrap_or(0);
        let mut header = String::from("t,trace_err,min_eig");
        for a in 0..d {
            header.push_str(&format!(",mean_{a}"));
        }
        for a in 0..d {
            header.push_str(&format!(",var_{a}"));
        }
        header.push_str(",purity\n");
        w.write_all(header.as_bytes())?;
        for r in &self.records {
            let mut line = format!("{:e},{:e},{:e}", r.time, r.trace_error, r.min_eigenvalue);
            for m in &r.means {
                line.push_str(&format!(",{:e}", m));
            }
            for v in &r.variances {
                line.push_str(&format!(",{:e}", v));
            }
            line.push_str(&format!(",{:e}\n", r.purity));
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    pub max_steps: Option<usize>,
    /// Steps between snapshot-sink calls (the initial and final states are
    /// always delivered).
    pub snapshot_stride: usize,
    /// When set, reject dt above this bound before stepping.
    pub stability_bound: Option<f64>,
    /// Clip negative eigenvalues after every step. Non-physical — it
    /// destroys the negativity signal — so off by default and meant for
    /// exploratory runs only.
    pub clip_negative: bool,
}

impl EvolveOptions {
    pub fn new(dt: f64, t_final: f64) -> Self {
        EvolveOptions {
            dt,
            t_final,
            max_steps: None,
            snapshot_stride: 100,
            stability_bound: None,
            clip_negative: false,
        }
    }
}

#[derive(Debug)]
pub struct EvolveOutcome<S> {
    pub state: S,
    pub log: DiagnosticsLog,
    pub steps: usize,
    /// Time at which non-finite values appeared, if the run aborted.
    pub aborted_at: Option<f64>,
}

fn record<S: CqState>(s: &S, initial_trace: f64) -> StepRecord {
    let mv = s.classical_mean_var();
    StepRecord {
        time: s.time(),
        trace_error: (s.total_trace() - initial_trace).abs(),
        min_eigenvalue: s.min_eigenvalue(),
        means: mv.iter().map(|x| x.0).collect(),
        variances: mv.iter().map(|x| x.1).collect(),
        purity: s.quantum_purity(),
    }
}

/// RK4 evolution of `s0` under `gen` to `opts.t_final`, logging diagnostics
/// each step and handing snapshots to `sink` every `snapshot_stride` steps.
pub fn evolve<S: CqState, G: Rhs<S>>(
    gen: &mut G,
    s0: &S,
    opts: &EvolveOptions,
    mut sink: impl FnMut(&S),
) -> Result<EvolveOutcome<S>> {
    if !(opts.dt > 0.0) {
        return Err(CqError::Invalid(format!("time step must be positive, got {}", opts.dt)));
    }
    if let Some(bound) = opts.stability_bound {
        if opts.dt > bound * (1.0 + 1e-9) {
            return Err(CqError::UnstableStep { dt: opts.dt, bound });
        }
    }
    let t0 = s0.time();
    let duration = opts.t_final - t0;
    if duration < 0.0 {
        return Err(CqError::Invalid("t_final precedes the state's time".into()));
    }
    let mut n_full = (duration / opts.dt + 1e-12).floor() as usize;
    let mut last_dt = duration - n_full as f64 * opts.dt;
    if last_dt <= 1e-12 * opts.dt.max(duration) {
        last_dt = 0.0;
    }
    let mut total_steps = n_full + usize::from(last_dt > 0.0);
    if let Some(cap) = opts.max_steps {
        if total_steps > cap {
            total_steps = cap;
            n_full = cap.min(n_full);
            if total_steps == n_full {
                last_dt = 0.0;
            }
        }
    }

    let mut y = s0.clone();
    let mut backup = s0.clone();
    let mut k = s0.clone();
    let mut acc = s0.clone();
    let mut ytmp = s0.clone();

    let initial_trace = y.total_trace();
    let mut log = DiagnosticsLog { records: vec![record(&y, initial_trace)], initial_trace };
    sink(&y);

    for step in 0..total_steps {
        let dt = if step < n_full { opts.dt } else { last_dt };
        backup.clone_from(&y);

        // k1
        gen.rhs_into(&y, &mut k)?;
        acc.clone_from(&k);
        // k2
        ytmp.clone_from(&y);
        ytmp.axpy(dt / 2.0, &k);
        gen.rhs_into(&ytmp, &mut k)?;
        acc.axpy(2.0, &k);
        // k3
        ytmp.clone_from(&y);
        ytmp.axpy(dt / 2.0, &k);
        gen.rhs_into(&ytmp, &mut k)?;
        acc.axpy(2.0, &k);
        // k4
        ytmp.clone_from(&y);
        ytmp.axpy(dt, &k);
        gen.rhs_into(&ytmp, &mut k)?;
        acc.axpy(1.0, &k);

        y.axpy(dt / 6.0, &acc);
        let t = if step + 1 == total_steps && last_dt > 0.0 {
            opts.t_final
        } else {
            t0 + (step + 1) as f64 * opts.dt
        };
        y.set_time(t);

        if !y.data_finite() {
            return Ok(EvolveOutcome {
                state: backup,
                log,
                steps: step,
                aborted_at: Some(t),
            });
        }
        if opts.clip_negative {
            y.clip_negative();
        }
        log.records.push(record(&y, initial_trace));
        if (step + 1) % opts.snapshot_stride == 0 && step + 1 != total_steps {
            sink(&y);
        }
    }
    if total_steps > 0 {
        sink(&y);
    }
    Ok(EvolveOutcome { state: y, log, steps: total_steps, aborted_at: None })
}

/// Explicit-step stability bound for the continuous generator:
///
///   dt_max = safety * min( min_i h_i^2 / (2 d |D2|),
///                          min_i h_i / max|drift_i|,
///                          1 / (|D0| max_a |L_a|^2) )
///
/// with safety = 0.5 and spectral norms maximized over the grid. Terms with
/// a vanishing denominator do not constrain the step; a fully unconstrained
/// generator yields +infinity.
pub fn stability_bound(grid: &PhaseGrid, c: &crate::couplings::CouplingSet) -> f64 {
    const SAFETY: f64 = 0.5;
    let d = grid.dims();

    let spectral_max = |coupling: &Coupling<ndarray::Array2<linalg::C64>>, n: usize| -> f64 {
        if n == 0 {
            return 0.0;
        }
        let norm_of = |m: &ndarray::Array2<linalg::C64>| -> f64 {
            let h = linalg::hermitize(m);
            let vals = linalg::hermitian_eigenvalues(&h);
            vals[vals.len() - 1].abs().max(vals[0].abs())
        };
        match coupling {
            Coupling::Constant(m) => norm_of(m),
            Coupling::PerPoint(ms) => ms.iter().map(norm_of).fold(0.0, f64::max),
        }
    };

    let p = c.num_lindblads();
    let d2_norm = match &c.d2 {
        Coupling::Constant(m) => {
            let mc = m.mapv(|v| linalg::C64::new(v, 0.0));
            spectral_max(&Coupling::Constant(mc), d)
        }
        Coupling::PerPoint(ms) => ms
            .iter()
            .map(|m| {
                let mc = m.mapv(|v| linalg::C64::new(v, 0.0));
                spectral_max(&Coupling::Constant(mc), d)
            })
            .fold(0.0, f64::max),
    };
    let d0_norm = spectral_max(&c.d0, p);
    let lmax = c.lindblads.ops().iter().map(|l| l.op_norm()).fold(0.0, f64::max);

    let mut bound = f64::INFINITY;
    for axis in 0..d {
        let h = grid.spacing(axis);
        if d2_norm > 0.0 {
            bound = bound.min(h * h / (2.0 * d as f64 * d2_norm));
        }
        let drift_max = (0..grid.len())
            .map(|idx| c.effective_drift(grid, idx, axis).abs())
            .fold(0.0, f64::max);
        if drift_max > 0.0 {
            bound = bound.min(h / drift_max);
        }
    }
    if d0_norm > 0.0 && lmax > 0.0 {
        bound = bound.min(1.0 / (d0_norm * lmax * lmax));
    }
    SAFETY * bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::{CouplingSet, HamiltonianSpec};
    use crate::grid::{AxisSpec, Boundary};
    use crate::linalg::C64;
    use crate::qop::{LindbladSet, QOperator};
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn zero_generator_is_exact_identity() {
        let g = PhaseGrid::new(
            vec![AxisSpec { min: -4.0, max: 4.0, points: 16 }],
            Boundary::Periodic,
        )
        .unwrap();
        let s0 = HybridState::gaussian_product(g, &[0.0], &[1.5], &QOperator::basis_state(2, 0))
            .unwrap();
        let out = evolve(&mut ZeroRhs, &s0, &EvolveOptions::new(0.1, 2.0), |_| {}).unwrap();
        assert_eq!(out.state.field.data(), s0.field.data());
        assert_eq!(out.steps, 20);
        assert!(out.aborted_at.is_none());
        assert!(out.log.final_trace_error() == 0.0);
    }

    #[test]
    fn zero_duration_yields_initial_snapshot_only() {
        let g = PhaseGrid::new(
            vec![AxisSpec { min: -4.0, max: 4.0, points: 8 }],
            Boundary::Periodic,
        )
        .unwrap();
        let s0 = HybridState::gaussian_product(g, &[0.0], &[2.2], &QOperator::basis_state(2, 0))
            .unwrap();
        let mut snaps = 0usize;
        let out = evolve(&mut ZeroRhs, &s0, &EvolveOptions::new(0.1, 0.0), |_| snaps += 1).unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(snaps, 1);
        assert_eq!(out.log.records.len(), 1);
    }

    #[test]
    fn qubit_dephasing_matches_analytic_decay() {
        // single-site jump kernel, L = sigma_z, coherence decays e^{-lambda t}
        let lambda = 1.25;
        let lind = LindbladSet::new_traceless(vec![QOperator::sigma_z()]).unwrap();
        let mut w = Array2::<C64>::zeros((2, 2));
        w[[1, 1]] = c(lambda / 2.0, 0.0);
        let mut kernel = JumpKernel::new(lind, vec![vec![0.0]], vec![w]).unwrap();
        let plus = QOperator::new(ndarray::array![
            [c(0.5, 0.0), c(0.5, 0.0)],
            [c(0.5, 0.0), c(0.5, 0.0)]
        ])
        .unwrap();
        let s0 = SiteState::new(vec![vec![0.0]], vec![plus.matrix().clone()]).unwrap();
        let t_final = 3.0 / lambda;
        let opts = EvolveOptions { dt: 1e-3, ..EvolveOptions::new(1e-3, t_final) };
        let out = evolve(&mut kernel, &s0, &opts, |_| {}).unwrap();
        let want = 0.5 * (-lambda * t_final).exp();
        let got = out.state.rho[0][[0, 1]].norm();
        assert!(
            (got - want).abs() / want < 1e-3,
            "coherence {got} vs analytic {want}"
        );
        assert!(out.log.final_trace_error() < 1e-12);
    }

    fn ou_couplings(grid: &Arc<PhaseGrid>, gamma: f64, diff: f64) -> CouplingSet {
        let drift = crate::couplings::Coupling::PerPoint(
            (0..grid.len()).map(|i| -gamma * grid.coordinate(i, 0)).collect(),
        );
        CouplingSet {
            lindblads: LindbladSet::empty(1),
            hamiltonian: HamiltonianSpec::Constant(QOperator::zeros(1)),
            d0: crate::couplings::Coupling::Constant(Array2::zeros((0, 0))),
            d1: crate::couplings::Coupling::Constant(Array2::zeros((1, 0))),
            drift: vec![drift],
            d2: crate::couplings::Coupling::Constant(Array2::from_shape_fn((1, 1), |_| diff)),
            friction: None,
        }
    }

    #[test]
    fn ornstein_uhlenbeck_variance_curve() {
        let gamma = 1.0;
        let diff = 0.5;
        let g = PhaseGrid::new(
            vec![AxisSpec { min: -7.0, max: 7.0, points: 224 }],
            Boundary::Periodic,
        )
        .unwrap();
        let sigma0 = 0.4;
        let s0 = HybridState::gaussian_product(g.clone(), &[0.0], &[sigma0], &QOperator::identity(1))
            .unwrap();
        let cs = ou_couplings(&g, gamma, diff);
        let bound = stability_bound(&g, &cs);
        let mut gen = ContinuousGenerator::new(g.clone(), cs).unwrap();
        let t_final = 3.0 / gamma;
        let opts = EvolveOptions {
            stability_bound: Some(bound),
            ..EvolveOptions::new(0.9 * bound, t_final)
        };
        let out = evolve(&mut gen, &s0, &opts, |_| {}).unwrap();
        assert!(out.aborted_at.is_none());
        // discrete initial variance, relaxing toward diff/gamma
        let var0 = out.log.records[0].variances[0];
        let want = diff / gamma * (1.0 - (-2.0 * gamma * t_final).exp())
            + var0 * (-2.0 * gamma * t_final).exp();
        let got = out.state.marginal_mean_var(0).1;
        assert!(
            (got - want).abs() / want < 0.01,
            "variance {got} vs analytic {want}"
        );
        assert!(out.log.final_trace_error() < 1e-10);
    }

    #[test]
    fn stability_bound_terms() {
        let g = PhaseGrid::new(
            vec![AxisSpec { min: -4.0, max: 4.0, points: 32 }],
            Boundary::Periodic,
        )
        .unwrap();
        // Lindblad-only: bound set by the dissipation rate
        let lam = 2.0;
        let cs = CouplingSet {
            lindblads: LindbladSet::new_traceless(vec![QOperator::sigma_z()]).unwrap(),
            hamiltonian: HamiltonianSpec::Constant(QOperator::zeros(2)),
            d0: crate::couplings::Coupling::Constant(Array2::from_shape_fn((1, 1), |_| c(lam, 0.0))),
            d1: crate::couplings::Coupling::Constant(Array2::zeros((1, 1))),
            drift: vec![crate::couplings::Coupling::Constant(0.0)],
            d2: crate::couplings::Coupling::Constant(Array2::zeros((1, 1))),
            friction: None,
        };
        // |sigma_z| = 1, so dt_max = 0.5 / lam
        assert_relative_eq!(stability_bound(&g, &cs), 0.5 / lam, epsilon = 1e-12);

        // diffusion-limited bound quarters when resolution doubles
        let mk = |points: usize| {
            let g = PhaseGrid::new(
                vec![AxisSpec { min: -4.0, max: 4.0, points }],
                Boundary::Periodic,
            )
            .unwrap();
            let cs = ou_couplings(&g, 0.0, 1.0);
            stability_bound(&g, &cs)
        };
        let b32 = mk(32);
        let b64 = mk(64);
        assert_relative_eq!(b32 / b64, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn unstable_step_rejected_upfront() {
        let g = PhaseGrid::new(
            vec![AxisSpec { min: -4.0, max: 4.0, points: 16 }],
            Boundary::Periodic,
        )
        .unwrap();
        let s0 = HybridState::gaussian_product(g, &[0.0], &[1.5], &QOperator::basis_state(2, 0))
            .unwrap();
        let opts = EvolveOptions {
            stability_bound: Some(0.05),
            ..EvolveOptions::new(0.1, 1.0)
        };
        assert!(matches!(
            evolve(&mut ZeroRhs, &s0, &opts, |_| {}),
            Err(CqError::UnstableStep { .. })
        ));
    }

    #[test]
    fn rk4_is_fourth_order_on_the_ou_benchmark() {
        // fixed grid; reference at a tiny step isolates time-stepping error
        let gamma = 1.0;
        let diff = 0.5;
        let g = PhaseGrid::new(
            vec![AxisSpec { min: -7.0, max: 7.0, points: 64 }],
            Boundary::Periodic,
        )
        .unwrap();
        let s0 = HybridState::gaussian_product(g.clone(), &[0.5], &[0.8], &QOperator::identity(1))
            .unwrap();
        let run = |dt: f64| -> Vec<f64> {
            let mut gen = ContinuousGenerator::new(g.clone(), ou_couplings(&g, gamma, diff)).unwrap();
            let out = evolve(&mut gen, &s0, &EvolveOptions::new(dt, 1.0), |_| {}).unwrap();
            out.state.field.data().iter().map(|z| z.re).collect()
        };
        let reference = run(0.0005);
        let err = |dt: f64| -> f64 {
            run(dt)
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
        };
        let e1 = err(0.04);
        let e2 = err(0.02);
        let e3 = err(0.01);
        let r12 = e1 / e2;
        let r23 = e2 / e3;
        assert!(
            r12 > 12.0 && r23 > 12.0,
            "RK4 halving ratios should be near 16: {r12:.2}, {r23:.2}"
        );
    }

    #[test]
    fn nan_abort_returns_last_good_state() {
        // An unstable explicit step on a stiff problem blows up; the
        // integrator must stop and keep the pre-blowup state.
        let gamma = 1.0;
        let diff = 1.0;
        let g = PhaseGrid::new(
            vec![AxisSpec { min: -7.0, max: 7.0, points: 128 }],
            Boundary::Periodic,
        )
        .unwrap();
        let s0 = HybridState::gaussian_product(g.clone(), &[0.0], &[0.5], &QOperator::identity(1))
            .unwrap();
        let mut gen = ContinuousGenerator::new(g.clone(), ou_couplings(&g, gamma, diff)).unwrap();
        let bound = stability_bound(&g, &ou_couplings(&g, gamma, diff));
        let out = evolve(&mut gen, &s0, &EvolveOptions::new(40.0 * bound, 100.0), |_| {}).unwrap();
        assert!(out.aborted_at.is_some());
        assert!(out.state.data_finite());
    }
}
