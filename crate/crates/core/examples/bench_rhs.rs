// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Rough timing of the flagship RHS evaluation and diagnostics.

use std::time::Instant;

use cqdyn::generator::ContinuousGenerator;
use cqdyn::grid::MatrixField;
use cqdyn::integrator::CqState;
use cqdyn::scenarios::{flagship_grid, OscillatorPair};

fn main() {
    let grid = flagship_grid().unwrap();
    let params = OscillatorPair::default();
    let (cs, state) = params.build(&grid).unwrap();
    let mut gen = ContinuousGenerator::new(grid.clone(), cs).unwrap();
    let mut out = MatrixField::zeros(grid.clone(), params.n_q);

    let reps = 20;
    let t0 = Instant::now();
    for _ in 0..reps {
        gen.apply_into(&state.field, &mut out).unwrap();
    }
    println!("rhs: {:.1} ms/eval", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = state.min_eigenvalue();
    }
    println!("min_eig: {:.1} ms/eval", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = state.total_trace();
        let _ = CqState::classical_mean_var(&state);
        let _ = CqState::quantum_purity(&state);
        let _ = state.data_finite();
    }
    println!("other diag: {:.1} ms/step", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);
}
