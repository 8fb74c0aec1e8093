// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! TOML run configuration: either raw coupling matrices (check-only), a
//! bundled scenario with grid/quantum sections, or a jump scenario.

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use cqdyn::couplings::CouplingSet;
use cqdyn::grid::{AxisSpec, Boundary, PhaseGrid};
use cqdyn::jump::{JumpKernel, SiteState};
use cqdyn::scenarios::{self, OscillatorPair, TwoSiteQuantum};
use cqdyn::state::HybridState;
use cqdyn::validity::CouplingMoments;

/// A real number or a [re, im] pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    pub fn to_c64(self) -> Complex64 {
        match self {
            Entry::Real(re) => Complex64::new(re, 0.0),
            Entry::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

fn matrix_from(rows: &[Vec<Entry>], context: &str) -> Result<Array2<Complex64>> {
    let nr = rows.len();
    let nc = rows.first().map(|r| r.len()).unwrap_or(0);
    for r in rows {
        if r.len() != nc {
            bail!("{context}: ragged matrix (row lengths differ)");
        }
    }
    Ok(Array2::from_shape_fn((nr, nc), |(i, j)| rows[i][j].to_c64()))
}

fn real_matrix_from(rows: &[Vec<f64>], context: &str) -> Result<Array2<f64>> {
    let nr = rows.len();
    let nc = rows.first().map(|r| r.len()).unwrap_or(0);
    for r in rows {
        if r.len() != nc {
            bail!("{context}: ragged matrix (row lengths differ)");
        }
    }
    Ok(Array2::from_shape_fn((nr, nc), |(i, j)| rows[i][j]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawCouplings {
    pub d0: Vec<Vec<Entry>>,
    pub d1: Vec<Vec<Entry>>,
    pub d2: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    // oscillator-pair
    #[serde(default = "one")]
    pub omega_c: f64,
    #[serde(default = "one")]
    pub omega_q: f64,
    #[serde(default = "one")]
    pub d1: f64,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub d2: f64,
    #[serde(default = "tenth")]
    pub gamma: f64,
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub widths: Option<[f64; 2]>,
    #[serde(default)]
    pub alpha: Option<Entry>,
    // classical-ou
    #[serde(default = "half")]
    pub diffusion: f64,
    // two-site-jump
    #[serde(default = "tenth")]
    pub rate_01: f64,
    #[serde(default = "tenth")]
    pub rate_10: f64,
    #[serde(default)]
    pub flip_rate: f64,
    #[serde(default)]
    pub cross_coupling: Option<Entry>,
}

fn one() -> f64 {
    1.0
}
fn tenth() -> f64 {
    0.1
}
fn half() -> f64 {
    0.5
}

/// Raw jump-kernel section: dense complex rate blocks per ordered site
/// pair (to-major: blocks[to * m + from]), each (p+1) x (p+1) over the
/// basis {I, L_1..L_p}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpConfig {
    pub sites: Vec<Vec<f64>>,
    /// Named operators: sigma_x | sigma_y | sigma_z | sigma_minus |
    /// position:N | annihilation:N | number:N.
    #[serde(default)]
    pub lindblads: Vec<String>,
    pub blocks: Vec<Vec<Vec<Entry>>>,
    #[serde(default)]
    pub initial_site: usize,
    /// Fock level of the initial pure state (default: highest).
    #[serde(default)]
    pub initial_level: Option<usize>,
}

pub fn named_operator(name: &str) -> Result<cqdyn::qop::QOperator> {
    use cqdyn::qop::QOperator;
    if let Some((kind, dim)) = name.split_once(':') {
        let dim: usize = dim.parse().with_context(|| format!("bad operator dimension in '{name}'"))?;
        return match kind {
            "position" => Ok(QOperator::position(dim)),
            "annihilation" => Ok(QOperator::annihilation(dim)),
            "number" => Ok(QOperator::number(dim)),
            other => bail!("unknown operator '{other}' (expected position/annihilation/number)"),
        };
    }
    match name {
        "sigma_x" => Ok(QOperator::sigma_x()),
        "sigma_y" => Ok(QOperator::sigma_y()),
        "sigma_z" => Ok(QOperator::sigma_z()),
        "sigma_minus" => Ok(QOperator::sigma_minus()),
        other => bail!("unknown operator '{other}'"),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub axes: Vec<AxisSpec>,
    #[serde(default = "periodic")]
    pub boundary: Boundary,
}

fn periodic() -> Boundary {
    Boundary::Periodic
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantumConfig {
    pub n_q: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "one")]
    pub t_final: f64,
    /// Absent or 0: 0.9 x stability bound.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_neg")]
    pub neg_threshold: f64,
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Clip negative eigenvalues each step (non-physical; exploratory).
    #[serde(default)]
    pub clip_negative: bool,
}

fn default_stride() -> usize {
    100
}
fn default_neg() -> f64 {
    1e-3
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            t_final: 1.0,
            dt: None,
            snapshot_stride: 100,
            neg_threshold: 1e-3,
            max_steps: None,
            clip_negative: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsConfig {
    #[serde(default = "default_mdt")]
    pub dt: f64,
    #[serde(default = "default_order")]
    pub max_order: usize,
    #[serde(default = "default_probes")]
    pub num_probes: usize,
}

fn default_mdt() -> f64 {
    0.01
}
fn default_order() -> usize {
    2
}
fn default_probes() -> usize {
    6
}

impl Default for MomentsConfig {
    fn default() -> Self {
        MomentsConfig { dt: 0.01, max_order: 2, num_probes: 6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Scenario field to sweep: d1, d2, lambda, gamma, omega_c, omega_q, or
    /// d2_ratio (= D2 / (D1^2/lambda)).
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Config {
    #[serde(default)]
    pub couplings: Option<RawCouplings>,
    #[serde(default)]
    pub jump: Option<JumpConfig>,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub quantum: Option<QuantumConfig>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub moments: MomentsConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Config {
    pub fn from_path(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: Config = toml::from_str(&text).context("config does not match the schema")?;
        if cfg.couplings.is_none() && cfg.scenario.is_none() && cfg.jump.is_none() {
            bail!("config needs a [couplings], [jump] or [scenario] section");
        }
        Ok(cfg)
    }

    pub fn resolved_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing resolved config")
    }
}

/// What a config builds into.
pub enum BuiltSystem {
    Raw {
        moments: CouplingMoments,
    },
    Continuous {
        grid: Arc<PhaseGrid>,
        couplings: CouplingSet,
        state: HybridState,
    },
    Jump {
        kernel: JumpKernel,
        state: SiteState,
    },
}

pub const SCENARIO_NAMES: &[(&str, &str)] = &[
    ("oscillator-pair", "classical oscillator coupled to a quantum one (position decoherence, momentum diffusion, friction)"),
    ("classical-ou", "classical Ornstein-Uhlenbeck process (trivial quantum factor)"),
    ("two-site-jump", "two classical sites with optional quantum flip channel"),
    ("dephasing-qubit", "single-site pure sigma_z dephasing"),
];

pub fn build(config: &Config) -> Result<BuiltSystem> {
    if let Some(raw) = &config.couplings {
        let d0 = matrix_from(&raw.d0, "couplings.d0")?;
        let d1 = matrix_from(&raw.d1, "couplings.d1")?;
        let d2 = real_matrix_from(&raw.d2, "couplings.d2")?;
        if d0.nrows() != d0.ncols() {
            bail!("couplings.d0 must be square (p x p)");
        }
        if d2.nrows() != d2.ncols() {
            bail!("couplings.d2 must be square (d x d)");
        }
        if d1.nrows() != d2.nrows() || d1.ncols() != d0.nrows() {
            bail!(
                "couplings.d1 must be d x p = {} x {}, got {} x {}",
                d2.nrows(),
                d0.nrows(),
                d1.nrows(),
                d1.ncols()
            );
        }
        return Ok(BuiltSystem::Raw { moments: CouplingMoments::new_real_d2(d0, d1, &d2) });
    }

    if let Some(jc) = &config.jump {
        let m = jc.sites.len();
        if jc.blocks.len() != m * m {
            bail!("jump.blocks must hold {} = m^2 blocks (to-major), got {}", m * m, jc.blocks.len());
        }
        let ops: Vec<cqdyn::qop::QOperator> =
            jc.lindblads.iter().map(|n| named_operator(n)).collect::<Result<_>>()?;
        let nq = ops.first().map(|o| o.dim()).unwrap_or(1);
        let lind = if ops.is_empty() {
            cqdyn::qop::LindbladSet::empty(1)
        } else {
            cqdyn::qop::LindbladSet::new(ops)?
        };
        let p = lind.len();
        let blocks: Vec<Array2<Complex64>> = jc
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let m = matrix_from(b, "jump.blocks")?;
                if m.nrows() != p + 1 || m.ncols() != p + 1 {
                    bail!(
                        "jump block {k} must be (p+1) x (p+1) = {} x {}, got {} x {}",
                        p + 1,
                        p + 1,
                        m.nrows(),
                        m.ncols()
                    );
                }
                Ok(m)
            })
            .collect::<Result<_>>()?;
        let kernel = JumpKernel::new(lind, jc.sites.clone(), blocks)?;
        let mut rho = vec![Array2::zeros((nq, nq)); m];
        if jc.initial_site >= m {
            bail!("jump.initial_site {} out of range for {} sites", jc.initial_site, m);
        }
        let level = jc.initial_level.unwrap_or(nq - 1).min(nq - 1);
        rho[jc.initial_site] = cqdyn::qop::QOperator::basis_state(nq, level).into_matrix();
        let state = SiteState::new(kernel.sites().to_vec(), rho)?;
        return Ok(BuiltSystem::Jump { kernel, state });
    }

    let sc = config.scenario.as_ref().expect("checked in from_path");
    match sc.name.as_str() {
        "oscillator-pair" => {
            let gc = config
                .grid
                .as_ref()
                .ok_or_else(|| anyhow!("scenario oscillator-pair needs a [grid] section"))?;
            let qc = config
                .quantum
                .as_ref()
                .ok_or_else(|| anyhow!("scenario oscillator-pair needs [quantum] n_q"))?;
            let grid = PhaseGrid::new(gc.axes.clone(), gc.boundary)?;
            let mut params = OscillatorPair {
                omega_c: sc.omega_c,
                omega_q: sc.omega_q,
                d1: sc.d1,
                lambda: sc.lambda,
                d2: sc.d2,
                gamma: sc.gamma,
                n_q: qc.n_q,
                ..OscillatorPair::default()
            };
            if let Some(c) = sc.center {
                params.center = c;
            }
            if let Some(w) = sc.widths {
                params.widths = Some(w);
            }
            if let Some(a) = sc.alpha {
                params.alpha = a.to_c64();
            }
            let (couplings, state) = params.build(&grid)?;
            Ok(BuiltSystem::Continuous { grid, couplings, state })
        }
        "classical-ou" => {
            let gc = config
                .grid
                .as_ref()
                .ok_or_else(|| anyhow!("scenario classical-ou needs a [grid] section"))?;
            if gc.axes.len() != 1 {
                bail!("scenario classical-ou needs a 1-dimensional grid");
            }
            let grid = PhaseGrid::new(gc.axes.clone(), gc.boundary)?;
            let gamma = sc.gamma;
            let diff = sc.diffusion;
            let couplings = scenarios::classical_fokker_planck(
                &grid,
                move |z| vec![-gamma * z[0]],
                Array2::from_shape_fn((1, 1), |_| diff),
            )?;
            let widths = sc.widths.map(|w| w[0]).unwrap_or(4.0 * grid.spacing(0));
            let center = sc.center.map(|c| c[0]).unwrap_or(0.0);
            let state = HybridState::gaussian_product(
                grid.clone(),
                &[center],
                &[widths],
                &cqdyn::qop::QOperator::identity(1),
            )?;
            Ok(BuiltSystem::Continuous { grid, couplings, state })
        }
        "two-site-jump" => {
            let quantum = if sc.flip_rate != 0.0 || sc.cross_coupling.is_some() {
                Some(TwoSiteQuantum {
                    lindblad: cqdyn::qop::QOperator::sigma_minus(),
                    flip_rate: sc.flip_rate,
                    cross_coupling: sc.cross_coupling.map(|e| e.to_c64()).unwrap_or_default(),
                })
            } else {
                None
            };
            let kernel = scenarios::two_site_jump(sc.rate_01, sc.rate_10, quantum)?;
            let nq = kernel.nq();
            let mut rho = vec![Array2::zeros((nq, nq)); 2];
            rho[0] = cqdyn::qop::QOperator::basis_state(nq, nq - 1).into_matrix();
            let state = SiteState::new(kernel.sites().to_vec(), rho)?;
            Ok(BuiltSystem::Jump { kernel, state })
        }
        "dephasing-qubit" => {
            let kernel = scenarios::dephasing_qubit(sc.lambda)?;
            let plus = ndarray::array![
                [Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0)],
                [Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0)]
            ];
            let state = SiteState::new(kernel.sites().to_vec(), vec![plus])?;
            Ok(BuiltSystem::Jump { kernel, state })
        }
        other => bail!(
            "unknown scenario '{other}'; available: {}",
            SCENARIO_NAMES.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        ),
    }
}
