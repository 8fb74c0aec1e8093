// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Simulation and complete-positivity certification for hybrid
//! classical-quantum (CQ) Markovian dynamics.
//!
//! Two classes of dynamics are covered:
//!
//! * the continuous class — drift, diffusion, Lindblad dissipation and
//!   first-derivative back-reaction on a phase-space grid
//!   ([`generator::ContinuousGenerator`]), and
//! * the jump class — kernel-driven rate dynamics over a finite set of
//!   classical sites ([`jump::JumpKernel`]).
//!
//! The [`validity`] module certifies complete positivity: the
//! decoherence-diffusion trade-off and its block-matrix form, Kramers-Moyal
//! moment inequalities (the Pawula-type scans), a CQ Cauchy-Schwarz sweep,
//! and Choi-matrix verification of discrete propagators.

pub mod couplings;
pub mod error;
pub mod generator;
pub mod grid;
pub mod integrator;
pub mod jump;
pub mod linalg;
pub mod moments;
pub mod qop;
pub mod scenarios;
pub mod state;
pub mod validity;

pub use error::{CqError, Result};
