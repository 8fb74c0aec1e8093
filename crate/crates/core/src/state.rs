// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! The hybrid state: one sub-normalized density matrix per grid point.
//!
//! Positivity of the per-point matrices is monitored, never enforced; a
//! negative excursion is the physically meaningful diagnostic for dynamics
//! outside the completely positive class. Delta-function initial conditions
//! are represented by narrow Gaussians, which is the only distributional
//! object a finite grid can hold.

use std::io::{Read, Write};
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CqError, Result};
use crate::grid::{MatrixField, PhaseGrid, ScalarField};
use crate::linalg::{self, C64};
use crate::qop::QOperator;

const SNAPSHOT_MAGIC: &[u8; 8] = b"CQSNAP01";

#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub field: MatrixField,
    pub time: f64,
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    grid: PhaseGrid,
    nq: usize,
    time: f64,
}

impl HybridState {
    pub fn zeros(grid: Arc<PhaseGrid>, nq: usize) -> Self {
        HybridState { field: MatrixField::zeros(grid, nq), time: 0.0 }
    }

    pub fn grid(&self) -> &Arc<PhaseGrid> {
        self.field.grid()
    }

    pub fn nq(&self) -> usize {
        self.field.nq()
    }

    /// p(z) = Tr rho(z).
    pub fn classical_marginal(&self) -> ScalarField {
        self.field.trace_field()
    }

    /// Quadrature-weighted integral of rho(z): a normalized density operator
    /// for a normalized state.
    pub fn quantum_marginal(&self) -> QOperator {
        let nq = self.nq();
        let grid = self.grid();
        let vol = grid.cell_volume();
        let mut acc = Array2::<C64>::zeros((nq, nq));
        for idx in 0..grid.len() {
            let w = grid.quad_weight(idx) * vol;
            let block = self.field.block(idx);
            for r in 0..nq {
                for c in 0..nq {
                    acc[[r, c]] += Complex64::new(w, 0.0) * block[r * nq + c];
                }
            }
        }
        QOperator::new(acc).expect("square by construction")
    }

    pub fn total_trace(&self) -> f64 {
        self.classical_marginal().integrate()
    }

    /// Product state (normalized Gaussian over the grid) x sigma.
    ///
    /// `widths` are per-axis standard deviations and must be resolved by at
    /// least two grid spacings. The Gaussian is normalized numerically so
    /// the discrete total trace is 1 to rounding.
    pub fn gaussian_product(
        grid: Arc<PhaseGrid>,
        center: &[f64],
        widths: &[f64],
        sigma: &QOperator,
    ) -> Result<HybridState> {
        if center.len() != grid.dims() || widths.len() != grid.dims() {
            return Err(CqError::DimensionMismatch {
                context: "center/widths must have one entry per axis",
                expected: grid.dims(),
                got: center.len().min(widths.len()),
            });
        }
        for (a, &w) in widths.iter().enumerate() {
            let min = 2.0 * grid.spacing(a);
            if w < min {
                return Err(CqError::UnderResolvedWidth { axis: a, width: w, min });
            }
        }
        if (sigma.trace().re - 1.0).abs() > 1e-8 || sigma.trace().im.abs() > 1e-12 {
            return Err(CqError::Invalid(format!(
                "sigma must have unit trace, got {}",
                sigma.trace()
            )));
        }
        if sigma.min_eigenvalue(1e-8)? < -1e-10 {
            return Err(CqError::NotPositive { min_eig: sigma.min_eigenvalue(1e-8)? });
        }

        let weight = ScalarField::from_fn(grid.clone(), |z| {
            let mut e = 0.0;
            for a in 0..z.len() {
                let d = (z[a] - center[a]) / widths[a];
                e += 0.5 * d * d;
            }
            (-e).exp()
        });
        let norm = weight.integrate();
        let nq = sigma.dim();
        let mut field = MatrixField::zeros(grid.clone(), nq);
        for idx in 0..grid.len() {
            let w = Complex64::new(weight.values()[idx] / norm, 0.0);
            let block = field.block_mut(idx);
            for r in 0..nq {
                for c in 0..nq {
                    block[r * nq + c] = w * sigma.matrix()[[r, c]];
                }
            }
        }
        Ok(HybridState { field, time: 0.0 })
    }

    /// Smallest eigenvalue of any rho(z) over the grid.
    ///
    /// Screened two ways before committing to an eigensolve: a Gershgorin
    /// lower bound orders the candidates, and a shifted Cholesky test
    /// certifies blocks that cannot undercut the current minimum.
    pub fn min_eigenvalue(&self) -> f64 {
        let nq = self.nq();
        let npts = self.grid().len();
        let mut bounds: Vec<(f64, usize)> = (0..npts)
            .map(|idx| (linalg::gershgorin_lower_bound(self.field.block(idx), nq), idx))
            .collect();
        bounds.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut scratch = vec![Complex64::new(0.0, 0.0); nq * nq];
        let mut best = f64::INFINITY;
        for &(bound, idx) in &bounds {
            if bound >= best {
                break;
            }
            let block = self.field.block(idx);
            if best.is_finite() && linalg::psd_with_shift(block, nq, -best, &mut scratch) {
                continue; // certified lambda_min >= best
            }
            let m = block_to_array(block, nq);
            let eig = linalg::hermitian_eigenvalues(&m);
            if eig[0] < best {
                best = eig[0];
            }
        }
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }

    /// Clip negative eigenvalues to zero pointwise, returning the total
    /// weight removed. Non-physical: negativity is the diagnostic for
    /// dynamics outside the CP class, so this exists only for exploratory
    /// runs that need a positive state downstream.
    pub fn clip_negative(&mut self) -> f64 {
        let nq = self.nq();
        let mut removed = 0.0;
        for idx in 0..self.grid().len() {
            let m = block_to_array(self.field.block(idx), nq);
            let (vals, vecs) = linalg::hermitian_eigen(&m);
            if vals[0] >= 0.0 {
                continue;
            }
            let mut rebuilt = Array2::<C64>::zeros((nq, nq));
            for k in 0..nq {
                if vals[k] <= 0.0 {
                    removed += vals[k].min(0.0).abs();
                    continue;
                }
                let col = vecs.column(k);
                for r in 0..nq {
                    for c in 0..nq {
                        rebuilt[[r, c]] +=
                            Complex64::new(vals[k], 0.0) * col[r] * col[c].conj();
                    }
                }
            }
            let block = self.field.block_mut(idx);
            for (b, v) in block.iter_mut().zip(rebuilt.iter()) {
                *b = *v;
            }
        }
        removed
    }

    /// Largest per-point deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let nq = self.nq();
        let mut worst = 0.0f64;
        for idx in 0..self.grid().len() {
            let block = self.field.block(idx);
            for r in 0..nq {
                for c in r..nq {
                    let d = (block[r * nq + c] - block[c * nq + r].conj()).norm();
                    if d > worst {
                        worst = d;
                    }
                }
            }
        }
        worst
    }

    /// Population of the top two truncated levels of the quantum marginal;
    /// above ~1e-6 the Fock truncation is suspect.
    pub fn truncation_tail(&self) -> f64 {
        let qm = self.quantum_marginal();
        let n = qm.dim();
        if n < 2 {
            return 0.0;
        }
        qm.matrix()[[n - 1, n - 1]].re + qm.matrix()[[n - 2, n - 2]].re
    }

    /// Mean and variance of the classical marginal along `axis`.
    pub fn marginal_mean_var(&self, axis: usize) -> (f64, f64) {
        let p = self.classical_marginal();
        let w = p.integrate();
        if w.abs() < 1e-300 {
            return (0.0, 0.0);
        }
        let mean = p.moment(axis, 0.0, 1) / w;
        let var = p.moment(axis, mean, 2) / w;
        (mean, var)
    }

    // -- persistence -------------------------------------------------------

    /// Binary snapshot: magic, little-endian u64 header length, JSON header
    /// (grid spec, nq, time), then float64 little-endian interleaved
    /// real/imag entries in grid-major, row-major order.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let header = SnapshotHeader {
            grid: (**self.grid()).clone(),
            nq: self.nq(),
            time: self.time,
        };
        let header_bytes = serde_json::to_vec(&header)?;
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        let mut buf = Vec::with_capacity(self.field.data().len() * 16);
        for z in self.field.data() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<HybridState> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(CqError::Invalid("not a snapshot file (bad magic)".into()));
        }
        let mut lenb = [0u8; 8];
        r.read_exact(&mut lenb)?;
        let hlen = u64::from_le_bytes(lenb) as usize;
        let mut hbuf = vec![0u8; hlen];
        r.read_exact(&mut hbuf)?;
        let mut header: SnapshotHeader = serde_json::from_slice(&hbuf)?;
        header.grid.rebuild_cache();
        let grid = Arc::new(header.grid);
        let mut field = MatrixField::zeros(grid.clone(), header.nq);
        let n = field.data().len();
        let mut buf = vec![0u8; n * 16];
        r.read_exact(&mut buf)?;
        for (k, z) in field.data_mut().iter_mut().enumerate() {
            let re = f64::from_le_bytes(buf[16 * k..16 * k + 8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[16 * k + 8..16 * k + 16].try_into().unwrap());
            *z = Complex64::new(re, im);
        }
        Ok(HybridState { field, time: header.time })
    }

    /// CSV of per-point marginal data: z1..zd, p, min_eig, purity (purity of
    /// the conditional state rho(z)/p(z); 0 where p(z) vanishes).
    pub fn write_marginal_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid().dims();
        let nq = self.nq();
        let mut header = String::new();
        for a in 0..d {
            header.push_str(&format!("z{},", a + 1));
        }
        header.push_str("p,min_eig,purity\n");
        w.write_all(header.as_bytes())?;
        for idx in 0..self.grid().len() {
            let block = self.field.block(idx);
            let m = block_to_array(block, nq);
            let p: f64 = (0..nq).map(|k| block[k * nq + k].re).sum();
            let min_eig = linalg::hermitian_eigenvalues(&m)[0];
            let purity = if p.abs() > 1e-300 {
                let rho2 = m.dot(&m);
                linalg::trace(&rho2).re / (p * p)
            } else {
                0.0
            };
            let mut line = String::new();
            for a in 0..d {
                line.push_str(&format!("{:e},", self.grid().coordinate(idx, a)));
            }
            line.push_str(&format!("{:e},{:e},{:e}\n", p, min_eig, purity));
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

pub(crate) fn block_to_array(block: &[C64], nq: usize) -> Array2<C64> {
    Array2::from_shape_fn((nq, nq), |(r, c)| block[r * nq + c])
}
