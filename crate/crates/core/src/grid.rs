// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Discretized classical configuration space: uniform box grids in R^d with
//! second-order finite-difference stencils and Riemann/trapezoid quadrature.
//!
//! The classical space is restricted to axis-aligned boxes; a periodic axis
//! excludes its right endpoint (it wraps), an absorbing axis includes both
//! endpoints. Central stencils are used everywhere in the interior so the
//! summation-by-parts identity holds exactly on periodic grids, which is what
//! makes the master-equation generators conserve the discrete trace.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CqError, Result};
use crate::linalg::C64;

/// Default cap on total grid points (construction fails above it).
pub const DEFAULT_POINT_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Absorbing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    axes: Vec<AxisSpec>,
    boundary: Boundary,
    #[serde(skip)]
    strides: Vec<usize>,
    #[serde(skip)]
    len: usize,
    #[serde(skip)]
    spacing: Vec<f64>,
}

impl PhaseGrid {
    pub fn new(axes: Vec<AxisSpec>, boundary: Boundary) -> Result<Arc<Self>> {
        Self::with_budget(axes, boundary, DEFAULT_POINT_BUDGET)
    }

    pub fn with_budget(axes: Vec<AxisSpec>, boundary: Boundary, budget: usize) -> Result<Arc<Self>> {
        if axes.is_empty() {
            return Err(CqError::Invalid("grid needs at least one axis".into()));
        }
        let mut len = 1usize;
        for (i, ax) in axes.iter().enumerate() {
            if ax.points < 3 {
                return Err(CqError::GridTooCoarse { axis: i, points: ax.points });
            }
            if !(ax.max > ax.min) {
                return Err(CqError::DegenerateAxis { axis: i, min: ax.min, max: ax.max });
            }
            len = len
                .checked_mul(ax.points)
                .ok_or(CqError::GridTooLarge { points: usize::MAX, budget })?;
        }
        if len > budget {
            return Err(CqError::GridTooLarge { points: len, budget });
        }
        let mut grid = PhaseGrid { axes, boundary, strides: Vec::new(), len, spacing: Vec::new() };
        grid.rebuild_cache();
        Ok(Arc::new(grid))
    }

    /// Recompute strides/spacings; needed after deserialization.
    pub fn rebuild_cache(&mut self) {
        let d = self.axes.len();
        self.spacing = self
            .axes
            .iter()
            .map(|ax| match self.boundary {
                Boundary::Periodic => (ax.max - ax.min) / ax.points as f64,
                Boundary::Absorbing => (ax.max - ax.min) / (ax.points - 1) as f64,
            })
            .collect();
        self.strides = vec![1; d];
        for i in (0..d.saturating_sub(1)).rev() {
            self.strides[i] = self.strides[i + 1] * self.axes[i + 1].points;
        }
        self.len = self.axes.iter().map(|a| a.points).product();
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Position of flat index `idx` along `axis`.
    pub fn axis_pos(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.axes[axis].points
    }

    pub fn coordinate(&self, idx: usize, axis: usize) -> f64 {
        self.axes[axis].min + self.axis_pos(idx, axis) as f64 * self.spacing[axis]
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        (0..self.dims()).map(|a| self.coordinate(idx, a)).collect()
    }

    /// Nearest flat index to a coordinate vector.
    pub fn nearest_index(&self, z: &[f64]) -> usize {
        let mut idx = 0;
        for (a, ax) in self.axes.iter().enumerate() {
            let mut pos = ((z[a] - ax.min) / self.spacing[a]).round() as isize;
            pos = pos.clamp(0, ax.points as isize - 1);
            idx += pos as usize * self.strides[a];
        }
        idx
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Quadrature weight (1 everywhere on periodic grids; trapezoid halving
    /// at absorbing edges).
    pub fn quad_weight(&self, idx: usize) -> f64 {
        match self.boundary {
            Boundary::Periodic => 1.0,
            Boundary::Absorbing => {
                let mut w = 1.0;
                for a in 0..self.dims() {
                    let pos = self.axis_pos(idx, a);
                    if pos == 0 || pos == self.axes[a].points - 1 {
                        w *= 0.5;
                    }
                }
                w
            }
        }
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dims() {
            return Err(CqError::AxisOutOfRange { axis, dims: self.dims() });
        }
        if self.axes[axis].points < 3 {
            return Err(CqError::GridTooCoarse { axis, points: self.axes[axis].points });
        }
        Ok(())
    }
}

/// Stencil row: contributions (offset in axis positions, coefficient) for one
/// output point of a first or second derivative along one axis.
fn first_derivative_taps(pos: usize, npts: usize, boundary: Boundary, h: f64) -> [(isize, f64); 3] {
    let inv2h = 1.0 / (2.0 * h);
    match boundary {
        Boundary::Periodic => [(1, inv2h), (-1, -inv2h), (0, 0.0)],
        Boundary::Absorbing => {
            if pos == 0 {
                // (-3 f0 + 4 f1 - f2) / 2h
                [(0, -3.0 * inv2h), (1, 4.0 * inv2h), (2, -inv2h)]
            } else if pos == npts - 1 {
                [(0, 3.0 * inv2h), (-1, -4.0 * inv2h), (-2, inv2h)]
            } else {
                [(1, inv2h), (-1, -inv2h), (0, 0.0)]
            }
        }
    }
}

fn second_derivative_taps(
    pos: usize,
    npts: usize,
    boundary: Boundary,
    h: f64,
) -> [(isize, f64); 4] {
    let invh2 = 1.0 / (h * h);
    match boundary {
        Boundary::Periodic => [(1, invh2), (0, -2.0 * invh2), (-1, invh2), (2, 0.0)],
        Boundary::Absorbing => {
            if pos == 0 && npts >= 4 {
                // second-order one-sided closure
                [(0, 2.0 * invh2), (1, -5.0 * invh2), (2, 4.0 * invh2), (3, -invh2)]
            } else if pos == npts - 1 && npts >= 4 {
                [(0, 2.0 * invh2), (-1, -5.0 * invh2), (-2, 4.0 * invh2), (-3, -invh2)]
            } else if pos == 0 {
                [(0, invh2), (1, -2.0 * invh2), (2, invh2), (0, 0.0)]
            } else if pos == npts - 1 {
                [(0, invh2), (-1, -2.0 * invh2), (-2, invh2), (0, 0.0)]
            } else {
                [(1, invh2), (0, -2.0 * invh2), (-1, invh2), (2, 0.0)]
            }
        }
    }
}

fn wrap(pos: usize, offset: isize, npts: usize) -> usize {
    let p = pos as isize + offset;
    p.rem_euclid(npts as isize) as usize
}

/// A real scalar field over a phase grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<PhaseGrid>,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<PhaseGrid>) -> Self {
        let n = grid.len();
        ScalarField { grid, data: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<PhaseGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..grid.len()).map(|idx| f(&grid.point(idx))).collect();
        ScalarField { grid, data }
    }

    pub fn from_values(grid: Arc<PhaseGrid>, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(CqError::DimensionMismatch {
                context: "field values must match grid point count",
                expected: grid.len(),
                got: data.len(),
            });
        }
        Ok(ScalarField { grid, data })
    }

    pub fn grid(&self) -> &Arc<PhaseGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Central-difference first derivative along `axis`.
    pub fn partial(&self, axis: usize) -> Result<ScalarField> {
        self.partial_with(axis, self.grid.boundary())
    }

    /// First derivative with one-sided second-order edge closures even on
    /// periodic grids. For differentiating coefficient data (potentials,
    /// drifts) that is not itself periodic.
    pub fn partial_one_sided(&self, axis: usize) -> Result<ScalarField> {
        self.partial_with(axis, Boundary::Absorbing)
    }

    fn partial_with(&self, axis: usize, boundary: Boundary) -> Result<ScalarField> {
        self.grid.check_axis(axis)?;
        let g = &self.grid;
        let npts = g.axes()[axis].points;
        let h = g.spacing(axis);
        let stride = g.stride(axis);
        let mut out = vec![0.0; self.data.len()];
        for idx in 0..self.data.len() {
            let pos = g.axis_pos(idx, axis);
            let base = idx - pos * stride;
            let mut acc = 0.0;
            for (off, coef) in first_derivative_taps(pos, npts, boundary, h) {
                if coef != 0.0 {
                    acc += coef * self.data[base + wrap(pos, off, npts) * stride];
                }
            }
            out[idx] = acc;
        }
        ScalarField::from_values(self.grid.clone(), out)
    }

    /// Second derivative along `i`, `j` (central; mixed derivatives are
    /// composed first derivatives).
    pub fn second_partial(&self, i: usize, j: usize) -> Result<ScalarField> {
        self.grid.check_axis(i)?;
        self.grid.check_axis(j)?;
        if i != j {
            return self.partial(i)?.partial(j);
        }
        let g = &self.grid;
        let npts = g.axes()[i].points;
        let h = g.spacing(i);
        let stride = g.stride(i);
        let mut out = vec![0.0; self.data.len()];
        for idx in 0..self.data.len() {
            let pos = g.axis_pos(idx, i);
            let base = idx - pos * stride;
            let mut acc = 0.0;
            for (off, coef) in second_derivative_taps(pos, npts, g.boundary(), h) {
                if coef != 0.0 {
                    acc += coef * self.data[base + wrap(pos, off, npts) * stride];
                }
            }
            out[idx] = acc;
        }
        ScalarField::from_values(self.grid.clone(), out)
    }

    /// Quadrature: sum of values times cell volume, with trapezoid weights on
    /// absorbing grids.
    pub fn integrate(&self) -> f64 {
        let vol = self.grid.cell_volume();
        match self.grid.boundary() {
            Boundary::Periodic => self.data.iter().sum::<f64>() * vol,
            Boundary::Absorbing => self
                .data
                .iter()
                .enumerate()
                .map(|(idx, v)| v * self.grid.quad_weight(idx))
                .sum::<f64>()
                * vol,
        }
    }

    /// Integral of (z_axis - center)^n against this field.
    pub fn moment(&self, axis: usize, center: f64, n: u32) -> f64 {
        let vol = self.grid.cell_volume();
        self.data
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                (self.grid.coordinate(idx, axis) - center).powi(n as i32)
                    * v
                    * self.grid.quad_weight(idx)
            })
            .sum::<f64>()
            * vol
    }
}

/// A field of complex nq x nq matrices over a phase grid, stored flat in
/// grid-major, row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    grid: Arc<PhaseGrid>,
    nq: usize,
    data: Vec<C64>,
}

impl MatrixField {
    pub fn zeros(grid: Arc<PhaseGrid>, nq: usize) -> Self {
        let n = grid.len() * nq * nq;
        MatrixField { grid, nq, data: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn grid(&self) -> &Arc<PhaseGrid> {
        &self.grid
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    pub fn block(&self, idx: usize) -> &[C64] {
        let nn = self.nq * self.nq;
        &self.data[idx * nn..(idx + 1) * nn]
    }

    pub fn block_mut(&mut self, idx: usize) -> &mut [C64] {
        let nn = self.nq * self.nq;
        &mut self.data[idx * nn..(idx + 1) * nn]
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(Complex64::new(0.0, 0.0));
    }

    /// self += a * other
    pub fn axpy(&mut self, a: f64, other: &MatrixField) {
        debug_assert_eq!(self.data.len(), other.data.len());
        let ac = Complex64::new(a, 0.0);
        for (x, y) in self.data.iter_mut().zip(other.data.iter()) {
            *x += ac * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        let ac = Complex64::new(a, 0.0);
        for x in self.data.iter_mut() {
            *x *= ac;
        }
    }

    /// out += scale * d/dz_axis (self), entrywise over the matrix entries.
    pub fn accumulate_partial(&self, axis: usize, scale: f64, out: &mut MatrixField) -> Result<()> {
        self.grid.check_axis(axis)?;
        let g = &self.grid;
        let npts = g.axes()[axis].points;
        let h = g.spacing(axis);
        let stride = g.stride(axis);
        let nn = self.nq * self.nq;
        for idx in 0..g.len() {
            let pos = g.axis_pos(idx, axis);
            let base = idx - pos * stride;
            let orow = &mut out.data[idx * nn..(idx + 1) * nn];
            for (off, coef) in first_derivative_taps(pos, npts, g.boundary(), h) {
                if coef == 0.0 {
                    continue;
                }
                let src = (base + wrap(pos, off, npts) * stride) * nn;
                let c = Complex64::new(scale * coef, 0.0);
                for (o, v) in orow.iter_mut().zip(self.data[src..src + nn].iter()) {
                    *o += c * v;
                }
            }
        }
        Ok(())
    }

    /// out += scale * d^2/dz_axis^2 (self).
    pub fn accumulate_second_partial(
        &self,
        axis: usize,
        scale: f64,
        out: &mut MatrixField,
    ) -> Result<()> {
        self.grid.check_axis(axis)?;
        let g = &self.grid;
        let npts = g.axes()[axis].points;
        let h = g.spacing(axis);
        let stride = g.stride(axis);
        let nn = self.nq * self.nq;
        for idx in 0..g.len() {
            let pos = g.axis_pos(idx, axis);
            let base = idx - pos * stride;
            let orow = &mut out.data[idx * nn..(idx + 1) * nn];
            for (off, coef) in second_derivative_taps(pos, npts, g.boundary(), h) {
                if coef == 0.0 {
                    continue;
                }
                let src = (base + wrap(pos, off, npts) * stride) * nn;
                let c = Complex64::new(scale * coef, 0.0);
                for (o, v) in orow.iter_mut().zip(self.data[src..src + nn].iter()) {
                    *o += c * v;
                }
            }
        }
        Ok(())
    }

    /// Pointwise trace as a scalar field.
    pub fn trace_field(&self) -> ScalarField {
        let nn = self.nq * self.nq;
        let data = (0..self.grid.len())
            .map(|idx| {
                let block = &self.data[idx * nn..(idx + 1) * nn];
                (0..self.nq).map(|k| block[k * self.nq + k].re).sum()
            })
            .collect();
        ScalarField { grid: self.grid.clone(), data }
    }
}
