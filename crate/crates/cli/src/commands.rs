// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! Subcommand implementations. Exit-code contract (stable):
//! 0 = valid/ok, 1 = config or schema error, 2 = invalid dynamics,
//! 3 = boundary verdict, 4 = aborted on non-finite values.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use cqdyn::integrator::{evolve, stability_bound, EvolveOptions};
use cqdyn::moments::{estimate_classical_moments, estimate_cq_moments, MomentEstimatorConfig};
use cqdyn::validity::{check_tradeoff, pawula_scan, ValidityCertificate, Verdict, DEFAULT_TOL};

use crate::config::{build, BuiltSystem, Config, SCENARIO_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_BOUNDARY: i32 = 3;
pub const EXIT_NAN: i32 = 4;

pub struct RunContext {
    pub config_path: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub allow_invalid: bool,
    pub snapshot_stride: Option<usize>,
    pub max_steps: Option<usize>,
}

impl RunContext {
    fn load(&self) -> Result<Config> {
        let mut cfg = Config::from_path(&self.config_path)?;
        if let Some(s) = self.snapshot_stride {
            cfg.run.snapshot_stride = s;
        }
        if let Some(m) = self.max_steps {
            cfg.run.max_steps = Some(m);
        }
        if cfg.seed.is_none() {
            cfg.seed = Some(self.seed);
        }
        Ok(cfg)
    }

    fn ensure_out_dir(&self, cfg: &Config) -> Result<Option<PathBuf>> {
        let Some(dir) = &self.out_dir else { return Ok(None) };
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        // reproducibility manifest: the resolved configuration
        fs::write(dir.join("config.resolved.toml"), cfg.resolved_toml()?)?;
        Ok(Some(dir.clone()))
    }
}

fn verdict_exit(v: Verdict) -> i32 {
    match v {
        Verdict::Valid => EXIT_OK,
        Verdict::Invalid => EXIT_INVALID,
        Verdict::Boundary => EXIT_BOUNDARY,
    }
}

fn write_certificate(dir: Option<&Path>, cert: &ValidityCertificate) -> Result<()> {
    if let Some(dir) = dir {
        fs::write(dir.join("certificate.txt"), cert.to_key_values())?;
        fs::write(dir.join("certificate.json"), serde_json::to_string_pretty(cert)?)?;
    }
    Ok(())
}

/// `check`: certify the configured dynamics, emit the certificate, exit by
/// verdict.
pub fn cmd_check(ctx: &RunContext) -> Result<i32> {
    let cfg = ctx.load()?;
    let dir = ctx.ensure_out_dir(&cfg)?;
    match build(&cfg)? {
        BuiltSystem::Raw { moments } => {
            let cert = ValidityCertificate::from_point(&moments, DEFAULT_TOL);
            print!("{}", cert.to_key_values());
            write_certificate(dir.as_deref(), &cert)?;
            Ok(verdict_exit(cert.verdict))
        }
        BuiltSystem::Continuous { grid, couplings, .. } => {
            let cert = check_tradeoff(&grid, &couplings, DEFAULT_TOL);
            print!("{}", cert.to_key_values());
            write_certificate(dir.as_deref(), &cert)?;
            Ok(verdict_exit(cert.verdict))
        }
        BuiltSystem::Jump { kernel, .. } => {
            let cert = kernel.cp_check(DEFAULT_TOL);
            println!("min_block_eigenvalue={:e}", cert.min_block_eigenvalue);
            println!("normalization_residual={:e}", cert.normalization_residual);
            println!(
                "verdict={}",
                match cert.verdict {
                    Verdict::Valid => "valid",
                    Verdict::Invalid => "invalid",
                    Verdict::Boundary => "boundary",
                }
            );
            if let Some(dir) = dir.as_deref() {
                fs::write(dir.join("certificate.json"), serde_json::to_string_pretty(&cert)?)?;
                fs::write(
                    dir.join("certificate.txt"),
                    format!(
                        "min_block_eigenvalue={:e}\nnormalization_residual={:e}\nverdict={:?}\n",
                        cert.min_block_eigenvalue, cert.normalization_residual, cert.verdict
                    ),
                )?;
            }
            Ok(verdict_exit(cert.verdict))
        }
    }
}

/// `evolve`: integrate the configured dynamics, writing diagnostics and
/// snapshots.
pub fn cmd_evolve(ctx: &RunContext) -> Result<i32> {
    let cfg = ctx.load()?;
    let dir = ctx.ensure_out_dir(&cfg)?;
    match build(&cfg)? {
        BuiltSystem::Raw { .. } => {
            bail!("a raw [couplings] config has no dynamics to evolve; use `check`")
        }
        BuiltSystem::Continuous { grid, couplings, state } => {
            let cert = check_tradeoff(&grid, &couplings, DEFAULT_TOL);
            if cert.verdict == Verdict::Invalid && !ctx.allow_invalid {
                eprintln!(
                    "refusing to evolve invalid dynamics (schur margin {:e}, range residual {:e}); pass --allow-invalid to override",
                    cert.schur_margin, cert.range_residual
                );
                write_certificate(dir.as_deref(), &cert)?;
                return Ok(EXIT_INVALID);
            }
            write_certificate(dir.as_deref(), &cert)?;
            let bound = stability_bound(&grid, &couplings);
            let dt = match cfg.run.dt {
                Some(v) if v > 0.0 => v,
                _ => {
                    if !bound.is_finite() {
                        bail!("stability bound is unbounded; set run.dt explicitly")
                    }
                    0.9 * bound
                }
            };
            let opts = EvolveOptions {
                dt,
                t_final: cfg.run.t_final,
                max_steps: cfg.run.max_steps,
                snapshot_stride: cfg.run.snapshot_stride,
                stability_bound: bound.is_finite().then_some(bound),
                clip_negative: cfg.run.clip_negative,
            };
            let mut gen = cqdyn::generator::ContinuousGenerator::new(grid.clone(), couplings)?;
            let mut snap_idx = 0usize;
            let outcome = evolve(&mut gen, &state, &opts, |s| {
                if let Some(dir) = dir.as_deref() {
                    let path = dir.join(format!("snapshot_{snap_idx:06}.bin"));
                    if let Ok(f) = fs::File::create(path) {
                        let _ = s.write_snapshot(std::io::BufWriter::new(f));
                    }
                    snap_idx += 1;
                }
            })?;
            if let Some(dir) = dir.as_deref() {
                let f = fs::File::create(dir.join("diagnostics.csv"))?;
                outcome.log.write_csv(std::io::BufWriter::new(f))?;
                let f = fs::File::create(dir.join("marginals_final.csv"))?;
                outcome.state.write_marginal_csv(std::io::BufWriter::new(f))?;
            }
            println!("steps={}", outcome.steps);
            println!("final_time={:e}", outcome.state.time);
            println!("final_trace_error={:e}", outcome.log.final_trace_error());
            println!("min_eigenvalue={:e}", outcome.log.min_eigenvalue());
            match outcome.log.time_to_negativity(-cfg.run.neg_threshold) {
                Some(t) => println!("time_to_negativity={:e}", t),
                None => println!("time_to_negativity=inf"),
            }
            if let Some(t) = outcome.aborted_at {
                eprintln!("aborted on non-finite values at t = {t:e}");
                return Ok(EXIT_NAN);
            }
            Ok(EXIT_OK)
        }
        BuiltSystem::Jump { kernel, state } => {
            let cert = kernel.cp_check(DEFAULT_TOL);
            if cert.verdict == Verdict::Invalid && !ctx.allow_invalid {
                eprintln!(
                    "refusing to evolve invalid jump kernel (min block eigenvalue {:e}); pass --allow-invalid to override",
                    cert.min_block_eigenvalue
                );
                return Ok(EXIT_INVALID);
            }
            let dt = cfg.run.dt.filter(|v| *v > 0.0).unwrap_or(1e-3);
            let opts = EvolveOptions {
                dt,
                t_final: cfg.run.t_final,
                max_steps: cfg.run.max_steps,
                snapshot_stride: cfg.run.snapshot_stride,
                stability_bound: None,
                clip_negative: cfg.run.clip_negative,
            };
            let mut k = kernel;
            let outcome = evolve(&mut k, &state, &opts, |_| {})?;
            if let Some(dir) = dir.as_deref() {
                let f = fs::File::create(dir.join("diagnostics.csv"))?;
                outcome.log.write_csv(std::io::BufWriter::new(f))?;
            }
            println!("steps={}", outcome.steps);
            println!("final_trace_error={:e}", outcome.log.final_trace_error());
            println!("min_eigenvalue={:e}", outcome.log.min_eigenvalue());
            if let Some(t) = outcome.aborted_at {
                eprintln!("aborted on non-finite values at t = {t:e}");
                return Ok(EXIT_NAN);
            }
            Ok(EXIT_OK)
        }
    }
}

/// `moments`: Kramers-Moyal estimation at the grid center, CSV table plus a
/// positivity scan report.
pub fn cmd_moments(ctx: &RunContext) -> Result<i32> {
    let cfg = ctx.load()?;
    let dir = ctx.ensure_out_dir(&cfg)?;
    let BuiltSystem::Continuous { grid, couplings, .. } = build(&cfg)? else {
        bail!("moment estimation needs a continuous scenario")
    };
    let zbar = vec![0.0; grid.dims()];
    let est = MomentEstimatorConfig::new(cfg.moments.dt, cfg.moments.max_order);
    let table = if couplings.num_lindblads() > 0 {
        let mut probes = cqdyn::moments::oscillator_probes(couplings.nq());
        probes.truncate(cfg.moments.num_probes.max(2));
        estimate_cq_moments(&grid, &couplings, &zbar, &probes, &est)?
    } else {
        estimate_classical_moments(&grid, &couplings, &zbar, &est)?
    };
    let report = pawula_scan(&table, 1e-6);
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    println!("classification={:?}", report.classification);
    println!("violations={}", report.violations.len());
    if let Some(dir) = dir.as_deref() {
        fs::write(dir.join("moments.csv"), &csv)?;
        fs::write(dir.join("pawula.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(EXIT_OK)
}

/// `sweep`: repeat check + evolve over a scenario parameter. Rows:
/// value, schur_margin, final min_eig, time-to-negativity.
pub fn cmd_sweep(ctx: &RunContext) -> Result<i32> {
    let cfg = ctx.load()?;
    let dir = ctx.ensure_out_dir(&cfg)?;
    let Some(sweep) = cfg.sweep.clone() else {
        bail!("sweep needs a [sweep] section with `parameter` and `values`")
    };
    let Some(base_scenario) = cfg.scenario.clone() else {
        bail!("sweep needs a [scenario] section")
    };
    let mut rows = Vec::new();
    for &value in &sweep.values {
        let mut point_cfg = cfg.clone();
        let sc = point_cfg.scenario.as_mut().unwrap();
        match sweep.parameter.as_str() {
            "d1" => sc.d1 = value,
            "d2" => sc.d2 = value,
            "lambda" => sc.lambda = value,
            "gamma" => sc.gamma = value,
            "omega_c" => sc.omega_c = value,
            "omega_q" => sc.omega_q = value,
            "diffusion" => sc.diffusion = value,
            // ratio D2 / (D1^2/lambda): 1.0 is the trade-off boundary
            "d2_ratio" => sc.d2 = value * base_scenario.d1 * base_scenario.d1 / base_scenario.lambda,
            other => bail!("unknown sweep parameter '{other}'"),
        }
        let BuiltSystem::Continuous { grid, couplings, state } = build(&point_cfg)? else {
            bail!("sweep needs a continuous scenario")
        };
        let cert = check_tradeoff(&grid, &couplings, DEFAULT_TOL);
        let bound = stability_bound(&grid, &couplings);
        let dt = point_cfg.run.dt.filter(|v| *v > 0.0).unwrap_or(0.9 * bound);
        let opts = EvolveOptions {
            dt,
            t_final: point_cfg.run.t_final,
            max_steps: point_cfg.run.max_steps,
            snapshot_stride: usize::MAX,
            stability_bound: bound.is_finite().then_some(bound),
            clip_negative: point_cfg.run.clip_negative,
        };
        let mut gen = cqdyn::generator::ContinuousGenerator::new(grid.clone(), couplings)?;
        let outcome = evolve(&mut gen, &state, &opts, |_| {})?;
        let final_min = outcome
            .log
            .records
            .last()
            .map(|r| r.min_eigenvalue)
            .unwrap_or(f64::NAN);
        let ttn = outcome.log.time_to_negativity(-point_cfg.run.neg_threshold);
        rows.push((value, cert.schur_margin, final_min, ttn));
    }
    let mut csv = String::from("value,schur_margin,final_min_eig,time_to_negativity\n");
    for (v, margin, fmin, ttn) in &rows {
        let ttn_s = match ttn {
            Some(t) => format!("{t:e}"),
            None => "inf".to_string(),
        };
        csv.push_str(&format!("{v:e},{margin:e},{fmin:e},{ttn_s}\n"));
    }
    print!("{csv}");
    if let Some(dir) = dir.as_deref() {
        fs::write(dir.join("sweep.csv"), &csv)?;
        // plotting stub: tidy CSV next to a short gnuplot script
        fs::write(
            dir.join("plot_sweep.gp"),
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'parameter'\n\
             plot 'sweep.csv' using 1:2 with linespoints title 'schur margin', \\\n     '' using 1:3 with linespoints title 'final min eig'\n",
        )?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_scenarios() -> Result<i32> {
    for (name, blurb) in SCENARIO_NAMES {
        println!("{name}: {blurb}");
    }
    Ok(EXIT_OK)
}
