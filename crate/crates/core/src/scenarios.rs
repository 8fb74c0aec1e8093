// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Pre-built configurations: the classical-quantum oscillator pair, plain
//! classical Fokker-Planck setups, and small jump kernels.
//!
//! The oscillator pair couples a classical oscillator H_c = p^2/2 + w_c^2
//! q^2/2 to a quantum one H_q = P^2/2 + w_q^2 Q^2/2 through H_int = D1 q Q,
//! with position decoherence of strength lambda, momentum diffusion, and
//! optional friction — the Diosi-type hybrid master equation (L. Diosi,
//! "Quantum dynamics with two Planck constants", 1995). Complete positivity
//! holds exactly when D2 >= D1^2 / lambda in the scenario's own parameters.
//!
//! The stored couplings are normalized so that the generic certificates
//! reproduce that boundary: the back-reaction matrix carries D1/2 (the two
//! Hermitian-conjugate first-order terms then sum to the physical
//! ½ D1 (Q d rho/dp + d rho/dp Q), giving the Ehrenfest force -D1 <Q>), and
//! the stored momentum diffusion is D2/8, which places the Schur margin zero
//! of [[2 D2_stored, D1_stored],[D1_stored, lambda]] exactly at
//! D2 = D1^2/lambda.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::couplings::{Coupling, CouplingSet, Friction, HamiltonianSpec};
use crate::error::{CqError, Result};
use crate::grid::{PhaseGrid, ScalarField};
use crate::jump::JumpKernel;
use crate::linalg::C64;
use crate::qop::{LindbladSet, QOperator};
use crate::state::HybridState;

/// Parameters of the oscillator-pair scenario. Defaults match the flagship
/// run: unit frequencies, unit couplings, gamma = 0.1, n_q = 20, and a
/// (Gaussian in z) x (coherent alpha = 1) initial state of width one.
#[derive(Debug, Clone)]
pub struct OscillatorPair {
    pub omega_c: f64,
    pub omega_q: f64,
    pub d1: f64,
    pub lambda: f64,
    pub d2: f64,
    pub gamma: f64,
    pub n_q: usize,
    pub center: [f64; 2],
    /// None: 4 grid spacings per axis.
    pub widths: Option<[f64; 2]>,
    pub alpha: C64,
}

impl Default for OscillatorPair {
    fn default() -> Self {
        OscillatorPair {
            omega_c: 1.0,
            omega_q: 1.0,
            d1: 1.0,
            lambda: 1.0,
            d2: 1.0,
            gamma: 0.1,
            n_q: 20,
            center: [0.0, 0.0],
            widths: None,
            alpha: Complex64::new(1.0, 0.0),
        }
    }
}

/// The flagship 64 x 64 grid over (q, p) in [-8, 8]^2.
pub fn flagship_grid() -> Result<Arc<PhaseGrid>> {
    PhaseGrid::new(
        vec![
            crate::grid::AxisSpec { min: -8.0, max: 8.0, points: 64 },
            crate::grid::AxisSpec { min: -8.0, max: 8.0, points: 64 },
        ],
        crate::grid::Boundary::Periodic,
    )
}

impl OscillatorPair {
    /// Build the coupling set and initial state on a 2-dimensional (q, p)
    /// grid.
    pub fn build(&self, grid: &Arc<PhaseGrid>) -> Result<(CouplingSet, HybridState)> {
        if grid.dims() != 2 {
            return Err(CqError::Invalid(format!(
                "oscillator pair needs a 2-dimensional (q, p) grid, got {} axes",
                grid.dims()
            )));
        }
        if self.n_q < 8 {
            return Err(CqError::Invalid(format!(
                "oscillator pair needs n_q >= 8, got {}",
                self.n_q
            )));
        }
        if self.lambda < 0.0 || self.d2 < 0.0 || self.gamma < 0.0 {
            return Err(CqError::Invalid(
                "lambda, d2 and gamma must be nonnegative".into(),
            ));
        }
        let n_q = self.n_q;
        let q_op = QOperator::position(n_q);

        let mut d1 = Array2::<C64>::zeros((2, 1));
        d1[[1, 0]] = Complex64::new(self.d1 / 2.0, 0.0);
        let mut d2 = Array2::<f64>::zeros((2, 2));
        d2[[1, 1]] = self.d2 / 8.0;

        let omega_c2 = self.omega_c * self.omega_c;
        let drift =
            crate::couplings::symplectic_drift(grid, |z| 0.5 * z[1] * z[1] + 0.5 * omega_c2 * z[0] * z[0])?;

        let d1_param = self.d1;
        let hamiltonian = HamiltonianSpec::Separable {
            base: QOperator::oscillator_hamiltonian(n_q, self.omega_q),
            terms: vec![(
                ScalarField::from_fn(grid.clone(), |z| d1_param * z[0]),
                q_op.clone(),
            )],
        };

        let couplings = CouplingSet {
            lindblads: LindbladSet::new_traceless(vec![q_op])?,
            hamiltonian,
            d0: Coupling::Constant(Array2::from_shape_fn((1, 1), |_| {
                Complex64::new(self.lambda, 0.0)
            })),
            d1: Coupling::Constant(d1),
            drift,
            d2: Coupling::Constant(d2),
            friction: if self.gamma > 0.0 {
                Some(Friction { gamma: self.gamma, axes: vec![1] })
            } else {
                None
            },
        };

        let sigma = QOperator::coherent_state(n_q, self.alpha);
        let widths = self
            .widths
            .unwrap_or([4.0 * grid.spacing(0), 4.0 * grid.spacing(1)]);
        let state = HybridState::gaussian_product(grid.clone(), &self.center, &widths, &sigma)?;
        Ok((couplings, state))
    }

    /// The scenario-parameter margin of its own trade-off, D2 - D1^2/lambda
    /// (positive: valid; zero: boundary).
    pub fn parameter_margin(&self) -> f64 {
        if self.d1 == 0.0 {
            return self.d2;
        }
        self.d2 - self.d1 * self.d1 / self.lambda
    }
}

/// Classical Fokker-Planck configuration (trivial quantum factor, n_q = 1):
/// drift vector field plus constant diffusion matrix.
pub fn classical_fokker_planck(
    grid: &Arc<PhaseGrid>,
    drift: impl Fn(&[f64]) -> Vec<f64>,
    d2: Array2<f64>,
) -> Result<CouplingSet> {
    let d = grid.dims();
    if d2.nrows() != d || d2.ncols() != d {
        return Err(CqError::DimensionMismatch {
            context: "diffusion matrix must be d x d",
            expected: d,
            got: d2.nrows(),
        });
    }
    let mut per_axis: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); d];
    for idx in 0..grid.len() {
        let v = drift(&grid.point(idx));
        if v.len() != d {
            return Err(CqError::DimensionMismatch {
                context: "drift closure must return one component per axis",
                expected: d,
                got: v.len(),
            });
        }
        for (a, val) in v.into_iter().enumerate() {
            per_axis[a].push(val);
        }
    }
    Ok(CouplingSet {
        lindblads: LindbladSet::empty(1),
        hamiltonian: HamiltonianSpec::Constant(QOperator::zeros(1)),
        d0: Coupling::Constant(Array2::zeros((0, 0))),
        d1: Coupling::Constant(Array2::zeros((d, 0))),
        drift: per_axis.into_iter().map(Coupling::PerPoint).collect(),
        d2: Coupling::Constant(d2),
        friction: None,
    })
}

/// Quantum side of a two-site jump: the 0 -> 1 transition applies the given
/// Lindblad operator at `flip_rate`, with an optional coherence between the
/// identity and Lindblad channels (`cross_coupling` = W^{0 alpha}).
#[derive(Debug, Clone)]
pub struct TwoSiteQuantum {
    pub lindblad: QOperator,
    pub flip_rate: f64,
    pub cross_coupling: C64,
}

/// Two classical sites with rates (rate_01: 0 -> 1, rate_10: 1 -> 0) and an
/// optional quantum channel on the 0 -> 1 transition.
pub fn two_site_jump(
    rate_01: f64,
    rate_10: f64,
    quantum: Option<TwoSiteQuantum>,
) -> Result<JumpKernel> {
    let (lind, nq) = match &quantum {
        Some(q) => (LindbladSet::new(vec![q.lindblad.clone()])?, q.lindblad.dim()),
        None => (LindbladSet::empty(1), 1),
    };
    let p = lind.len();
    let sites = vec![vec![0.0], vec![1.0]];
    let mut blocks = vec![Array2::<C64>::zeros((p + 1, p + 1)); 4];
    blocks[2][[0, 0]] = Complex64::new(rate_01, 0.0); // to=1, from=0
    blocks[1][[0, 0]] = Complex64::new(rate_10, 0.0); // to=0, from=1
    if let Some(q) = quantum {
        blocks[2][[1, 1]] = Complex64::new(q.flip_rate, 0.0);
        blocks[2][[0, 1]] = q.cross_coupling;
        blocks[2][[1, 0]] = q.cross_coupling.conj();
    }
    let _ = nq;
    JumpKernel::new(lind, sites, blocks)
}

/// Single-site pure dephasing: L = sigma_z at rate lambda/2, so the qubit
/// coherence decays as e^{-lambda t}.
pub fn dephasing_qubit(lambda: f64) -> Result<JumpKernel> {
    let lind = LindbladSet::new_traceless(vec![QOperator::sigma_z()])?;
    let mut w = Array2::<C64>::zeros((2, 2));
    w[[1, 1]] = Complex64::new(lambda / 2.0, 0.0);
    JumpKernel::new(lind, vec![vec![0.0]], vec![w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AxisSpec, Boundary};
    use crate::integrator::{evolve, stability_bound, CqState, EvolveOptions};
    use crate::validity::{check_tradeoff, Verdict, DEFAULT_TOL};
    use approx::assert_relative_eq;

    fn small_grid(points: usize) -> Arc<PhaseGrid> {
        PhaseGrid::new(
            vec![
                AxisSpec { min: -8.0, max: 8.0, points },
                AxisSpec { min: -8.0, max: 8.0, points },
            ],
            Boundary::Periodic,
        )
        .unwrap()
    }

    #[test]
    fn flagship_parameters_sit_exactly_on_the_boundary() {
        let params = OscillatorPair { n_q: 8, ..OscillatorPair::default() };
        let g = small_grid(32);
        let (cs, state) = params.build(&g).unwrap();
        assert_relative_eq!(state.total_trace(), 1.0, epsilon = 1e-8);
        let cert = check_tradeoff(&g, &cs, DEFAULT_TOL);
        assert!(
            cert.schur_margin.abs() <= 10.0 * DEFAULT_TOL,
            "boundary margin {:.3e}",
            cert.schur_margin
        );
        assert_eq!(cert.verdict, Verdict::Boundary);
        assert!(cert.block_margin.abs() <= 10.0 * DEFAULT_TOL);
    }

    #[test]
    fn verdicts_track_the_parameter_trade_off() {
        let g = small_grid(32);
        for (d2, want) in [
            (2.0, Verdict::Valid),
            (0.25, Verdict::Invalid),
            (1.0, Verdict::Boundary),
        ] {
            let params = OscillatorPair { d2, n_q: 8, ..OscillatorPair::default() };
            let (cs, _) = params.build(&g).unwrap();
            let cert = check_tradeoff(&g, &cs, DEFAULT_TOL);
            assert_eq!(cert.verdict, want, "d2 = {d2}");
            // the two certificate routes agree on acceptance
            assert_eq!(cert.block_margin >= -DEFAULT_TOL, cert.verdict != Verdict::Invalid);
        }
    }

    #[test]
    fn decoupled_pair_keeps_quantum_purity_constant() {
        // D1 = 0 and lambda = 0: no back-reaction, no decoherence.
        let g = small_grid(32);
        let params = OscillatorPair {
            d1: 0.0,
            lambda: 0.0,
            d2: 0.1,
            gamma: 0.0,
            n_q: 8,
            ..OscillatorPair::default()
        };
        let (cs, s0) = params.build(&g).unwrap();
        let bound = stability_bound(&g, &cs);
        let mut gen = crate::generator::ContinuousGenerator::new(g.clone(), cs).unwrap();
        let opts = EvolveOptions::new(0.9 * bound.min(0.01), 0.5);
        let out = evolve(&mut gen, &s0, &opts, |_| {}).unwrap();
        let p0 = CqState::quantum_purity(&s0);
        let p1 = CqState::quantum_purity(&out.state);
        assert!((p0 - p1).abs() < 1e-6, "purity drifted from {p0} to {p1}");
    }

    #[test]
    fn ehrenfest_relations_hold_in_time() {
        // finite-difference d<q>/dt and d<p>/dt across a short run
        let g = small_grid(32);
        let params = OscillatorPair {
            n_q: 10,
            d2: 1.0,
            center: [0.6, -0.3],
            widths: Some([1.2, 1.2]),
            ..OscillatorPair::default()
        };
        let (cs, s0) = params.build(&g).unwrap();
        let bound = stability_bound(&g, &cs);
        let q_op = QOperator::position(params.n_q);
        let mut gen = crate::generator::ContinuousGenerator::new(g.clone(), cs).unwrap();
        let dt = (0.9 * bound).min(2e-3);
        let opts = EvolveOptions::new(dt, 20.0 * dt);
        let out = evolve(&mut gen, &s0, &opts, |_| {}).unwrap();
        let recs = &out.log.records;
        // centered difference at record k
        let k = recs.len() / 2;
        let tstep = recs[k + 1].time - recs[k - 1].time;
        let dq_dt = (recs[k + 1].means[0] - recs[k - 1].means[0]) / tstep;
        let dp_dt = (recs[k + 1].means[1] - recs[k - 1].means[1]) / tstep;
        assert_relative_eq!(dq_dt, recs[k].means[1], epsilon = 1e-4);

        // <Q> at the middle record needs a rerun to that time
        let opts_half = EvolveOptions::new(dt, recs[k].time);
        let mut gen2 = {
            let (cs2, _) = params.build(&g).unwrap();
            crate::generator::ContinuousGenerator::new(g.clone(), cs2).unwrap()
        };
        let mid = evolve(&mut gen2, &s0, &opts_half, |_| {}).unwrap().state;
        let mean_bigq =
            crate::linalg::trace(&q_op.matrix().dot(mid.quantum_marginal().matrix())).re;
        let want = -params.omega_c * params.omega_c * recs[k].means[0]
            - params.d1 * mean_bigq
            - params.gamma * recs[k].means[1];
        assert_relative_eq!(dp_dt, want, epsilon = 1e-3);
    }

    #[test]
    fn fokker_planck_pure_drift_translates_rigidly() {
        let g = PhaseGrid::new(
            vec![AxisSpec { min: -8.0, max: 8.0, points: 128 }],
            Boundary::Periodic,
        )
        .unwrap();
        let v = 0.8;
        let cs = classical_fokker_planck(&g, |_| vec![v], Array2::zeros((1, 1))).unwrap();
        let s0 = HybridState::gaussian_product(g.clone(), &[-2.0], &[0.6], &QOperator::identity(1))
            .unwrap();
        let mut gen = crate::generator::ContinuousGenerator::new(g.clone(), cs).unwrap();
        let t = 2.5;
        let out = evolve(&mut gen, &s0, &EvolveOptions::new(5e-3, t), |_| {}).unwrap();
        let h = g.spacing(0);
        let (mean, var) = out.state.marginal_mean_var(0);
        assert!((mean - (-2.0 + v * t)).abs() < h * h, "mean {mean}");
        // rigid translation: variance preserved up to dispersion error
        assert!((var - 0.36).abs() < 5.0 * h * h, "var {var}");
    }

    #[test]
    fn fokker_planck_zero_couplings_is_stationary() {
        let g = PhaseGrid::new(
            vec![AxisSpec { min: -4.0, max: 4.0, points: 32 }],
            Boundary::Periodic,
        )
        .unwrap();
        let cs = classical_fokker_planck(&g, |_| vec![0.0], Array2::zeros((1, 1))).unwrap();
        let s0 = HybridState::gaussian_product(g.clone(), &[0.0], &[1.0], &QOperator::identity(1))
            .unwrap();
        let mut gen = crate::generator::ContinuousGenerator::new(g.clone(), cs).unwrap();
        let out = evolve(&mut gen, &s0, &EvolveOptions::new(0.01, 1.0), |_| {}).unwrap();
        let drift: f64 = out
            .state
            .field
            .data()
            .iter()
            .zip(s0.field.data())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(drift < 1e-14);
    }

    #[test]
    fn symmetric_two_site_chain_equilibrates_to_uniform() {
        let kernel = two_site_jump(0.7, 0.7, None).unwrap();
        let s0 = crate::jump::SiteState::new(
            kernel.sites().to_vec(),
            vec![
                Array2::from_shape_fn((1, 1), |_| Complex64::new(1.0, 0.0)),
                Array2::zeros((1, 1)),
            ],
        )
        .unwrap();
        let mut k = kernel;
        let out = evolve(&mut k, &s0, &EvolveOptions::new(0.01, 12.0), |_| {}).unwrap();
        let w = out.state.site_weights();
        assert_relative_eq!(w[0], 0.5, epsilon = 1e-6);
        assert_relative_eq!(w[1], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn cq_flip_kernel_cp_verdicts() {
        // CP-valid: rate_01 * flip_rate >= |cross|^2
        let valid = two_site_jump(
            1.0,
            0.3,
            Some(TwoSiteQuantum {
                lindblad: QOperator::sigma_minus(),
                flip_rate: 0.5,
                cross_coupling: Complex64::new(0.5, 0.0),
            }),
        )
        .unwrap();
        let cert = valid.cp_check(DEFAULT_TOL);
        assert!(cert.min_block_eigenvalue >= -DEFAULT_TOL, "{:?}", cert);
        assert!(cert.accepts());

        // detuned: cross coupling breaks the Schur condition
        let invalid = two_site_jump(
            0.1,
            0.3,
            Some(TwoSiteQuantum {
                lindblad: QOperator::sigma_minus(),
                flip_rate: 0.5,
                cross_coupling: Complex64::new(0.9, 0.0),
            }),
        )
        .unwrap();
        let cert = invalid.cp_check(DEFAULT_TOL);
        assert_eq!(cert.verdict, Verdict::Invalid);
        assert!(cert.min_block_eigenvalue < -0.1);
    }
}
