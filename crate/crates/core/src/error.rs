// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CqError {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not Hermitian within tolerance: asymmetry {asymmetry:.3e} > {tol:.3e}")]
    NotHermitian { asymmetry: f64, tol: f64 },

    #[error("matrix is not positive semi-definite: min eigenvalue {min_eig:.3e}")]
    NotPositive { min_eig: f64 },

    #[error("grid axis {axis} needs at least 3 points, got {points}")]
    GridTooCoarse { axis: usize, points: usize },

    #[error("grid axis {axis} is degenerate: max ({max}) must exceed min ({min})")]
    DegenerateAxis { axis: usize, min: f64, max: f64 },

    #[error("grid of {points} points exceeds the memory budget of {budget} points")]
    GridTooLarge { points: usize, budget: usize },

    #[error("axis index {axis} out of range for a {dims}-dimensional grid")]
    AxisOutOfRange { axis: usize, dims: usize },

    #[error("initial width {width:.3e} on axis {axis} is under-resolved (min {min:.3e})")]
    UnderResolvedWidth { axis: usize, width: f64, min: f64 },

    #[error("states or fields live on different grids: {context}")]
    GridMismatch { context: &'static str },

    #[error("jump kernel and state disagree on classical sites: {context}")]
    SiteMismatch { context: &'static str },

    #[error("operator declared traceless has |trace| = {trace:.3e}")]
    NotTraceless { trace: f64 },

    #[error("probe set is ill-conditioned: condition number {cond:.3e} exceeds {limit:.3e}")]
    IllConditionedProbes { cond: f64, limit: f64 },

    #[error("time step {dt:.3e} exceeds the stability bound {bound:.3e}")]
    UnstableStep { dt: f64, bound: f64 },

    #[error("non-finite values detected at t = {time:.6e}; aborting")]
    NonFinite { time: f64 },

    #[error("{0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CqError>;
