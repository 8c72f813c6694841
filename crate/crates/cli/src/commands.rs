//! Subcommand drivers. Each builds a [`Setup`], writes its artifacts under
//! the output directory, and finishes with `manifest.json`.

use std::path::{Path, PathBuf};

use anyhow::Result;
use fracschro::inverse::{discrepancy_alpha, forward, identifiability, reconstruct, InverseProblem, ReconstructOptions, Termination};
use fracschro::s2s::{density_rank_test, difference_bounds, s2s_matrix, spectral_distance, stability_bound_check};
use fracschro::specdata::{compare, extract, random_regauge};
use fracschro::{Decomposition, Mat, Pot};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ConfigError, PotentialSpec, RunConfig, Setup};
use crate::io::{read_potential_csv, read_sigma_dir, sigma_file, write_json, write_matrix, write_nodal, write_table};
use crate::manifest::{timed, RunManifest};
use crate::verify::{self, Context, ALL_CHECKS, RESOLVENT_CHECKS};
use crate::{load_config, ChecksFailed, Cli, Command, SpecdataAction};

const DEFAULT_OUT: &str = "out";

pub fn dispatch(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::Verify { scope } => run_verify(cfg, scope.is_some()),
        Command::S2s { beta_grid, report } => {
            if let Some(b) = beta_grid {
                cfg.beta_grid = Some(b.clone());
            }
            run_s2s(cfg, report.clone())
        }
        Command::Specdata { action } => match action {
            SpecdataAction::Extract => run_extract(cfg),
            SpecdataAction::Compare { regauge } => run_compare(cfg, *regauge),
            SpecdataAction::Recover { time } => {
                if let Some(t0) = time.t0 {
                    cfg.time_grid.t0 = t0;
                }
                if let Some(dt) = time.dt {
                    cfg.time_grid.dt = dt;
                }
                if let Some(nt) = time.nt {
                    cfg.time_grid.nt = nt;
                }
                run_recover(cfg)
            }
        },
        Command::Invert { data, truth } => run_invert(cfg, data.as_deref(), truth.as_deref()),
        Command::Forward { truth } => run_forward(cfg, truth.as_deref()),
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Writes the manifest, prints one line per check, and turns failures into
/// [`ChecksFailed`].
fn finish(manifest: &RunManifest, out: &Path) -> Result<()> {
    for c in &manifest.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        match &c.error {
            Some(e) => eprintln!("{status} {} ({:.3} s): {e}", c.name, c.seconds),
            None => eprintln!("{status} {} ({:.3} s)", c.name, c.seconds),
        }
    }
    let path = out.join("manifest.json");
    write_json(&path, manifest)?;
    eprintln!("manifest: {}", path.display());
    if manifest.passed {
        Ok(())
    } else {
        Err(ChecksFailed(manifest.failing().iter().map(|s| s.to_string()).collect()).into())
    }
}

fn selected_checks(cfg: &RunConfig, resolvent_only: bool) -> Result<Vec<String>, ConfigError> {
    let pool: &[&str] = if resolvent_only { &RESOLVENT_CHECKS } else { &ALL_CHECKS };
    let Some(list) = &cfg.checks else {
        return Ok(pool.iter().map(|s| s.to_string()).collect());
    };
    let mut out = Vec::new();
    for name in list {
        if !ALL_CHECKS.contains(&name.as_str()) {
            return Err(ConfigError(format!("unknown check {name:?}; known checks: {}", ALL_CHECKS.join(", "))));
        }
        if out.contains(name) {
            return Err(ConfigError(format!("check {name:?} listed twice")));
        }
        if pool.contains(&name.as_str()) {
            out.push(name.clone());
        }
    }
    Ok(out)
}

pub fn run_verify(cfg: RunConfig, resolvent_only: bool) -> Result<()> {
    let names = selected_checks(&cfg, resolvent_only)?;
    let setup = Setup::build(cfg)?;
    let out = out_dir(&setup.cfg);
    let ctx = Context::new(&setup)?;
    let command = if resolvent_only { "verify resolvent" } else { "verify" };
    let mut manifest = RunManifest::new(command, &setup.cfg);
    for record in verify::run_checks(&ctx, &names) {
        manifest.push(record);
    }
    if resolvent_only {
        write_json(&out.join("resolvent_report.json"), &resolvent_report(&ctx)?)?;
    }
    finish(&manifest, &out)
}

/// Per spectral parameter: norm, bound, series error, and the Laplace
/// deviation where the parameter is a negative shift with a Laplace
/// representation.
fn resolvent_report(ctx: &Context) -> Result<Value> {
    let quad = verify::quadrature(ctx);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.setup.cfg.seed);
    let mut rows = Vec::new();
    for mu in ctx.spectral_parameters() {
        let r = fracschro::resolvent::ResolventOp::new(&ctx.f1, ctx.d1.clone(), mu)?;
        let norm = fracschro::resolvent::resolvent_norm_check(&r)?;
        let series = verify::series_error(ctx, mu, &mut rng)?;
        let laplace = if mu < 0.0 {
            Some(fracschro::resolvent::laplace_check(&ctx.f1, &ctx.d1, -mu, &quad)?.max_abs_deviation)
        } else {
            None
        };
        rows.push(json!({
            "mu": mu,
            "norm_computed": norm.norm_computed,
            "norm_bound": norm.norm_bound,
            "series_vs_solve_max_err": series,
            "laplace_max_err": laplace,
        }));
    }
    Ok(Value::Array(rows))
}

pub fn run_s2s(cfg: RunConfig, report: Option<PathBuf>) -> Result<()> {
    let setup = Setup::build(cfg)?;
    let out = out_dir(&setup.cfg);
    let ctx = Context::new(&setup)?;
    let r = &setup.regions;
    let mut manifest = RunManifest::new("s2s", &setup.cfg);
    let mut per_beta = Vec::new();
    manifest.push(timed("source_to_solution", || {
        for &beta in &setup.betas {
            let s1 = s2s_matrix(&ctx.f1, r, beta)?;
            let s2 = s2s_matrix(&ctx.f2, r, beta)?;
            write_matrix(&out.join(sigma_file(beta)), s1.matrix(), &r.omega1, &r.omega0)?;
            per_beta.push(json!({
                "beta": beta,
                "operator_norm": s1.operator_norm(),
                "alternate_operator_norm": s2.operator_norm(),
                "difference_norm": s1.difference_norm(&s2),
            }));
        }
        Ok((true, json!({"betas": setup.betas})))
    }));
    let mut bounds = Value::Null;
    manifest.push(timed("stability", || {
        let a = fracschro::s2s::DiagonalizedOperator { frac: ctx.f1.clone(), spectrum: ctx.d1.clone() };
        let b = fracschro::s2s::DiagonalizedOperator { frac: ctx.f2.clone(), spectrum: ctx.d2.clone() }
            .aligned_to(&a, setup.cfg.tolerances.cluster_tol)?;
        let c = difference_bounds(&a, &b, r)?;
        let d = spectral_distance(&a, &b, r)?;
        let st = stability_bound_check(&a, &b, r)?;
        bounds = json!({
            "distance": d.value,
            "c1": c.c1,
            "c2": c.c2,
            "eigenvalue_sum": c.eigenvalue_sum,
            "vector_sum_omega0": c.vector_sum_omega0,
            "vector_sum_omega1": c.vector_sum_omega1,
            "lhs": st.lhs,
            "constant": st.constant,
            "ratio": st.ratio,
        });
        Ok((st.passed, bounds.clone()))
    }));
    let mut rank = Value::Null;
    manifest.push(timed("density_rank", || {
        let (o0, o1) = verify::interleaved(r);
        let rep = density_rank_test(&ctx.f1, &o0, &o1)?;
        rank = json!({"omega0": o0, "omega1": o1, "rank": rep.rank, "rows": rep.rows, "cols": rep.cols, "singular_values": rep.singular_values});
        Ok((rep.full_rank, rank.clone()))
    }));
    let report_path = report.unwrap_or_else(|| out.join("s2s_report.json"));
    write_json(&report_path, &json!({"norms": per_beta, "bounds": bounds, "rank": rank}))?;
    finish(&manifest, &out)
}

/// `k, eigenvalue, vector entries` per mode.
fn write_spectrum(path: &Path, eigenvalues: &[f64], vectors: &Mat, nodes: &[usize]) -> Result<()> {
    let header: Vec<String> = ["k".to_string(), "eigenvalue".to_string()].into_iter().chain(nodes.iter().map(|i| i.to_string())).collect();
    let rows = (0..eigenvalues.len()).map(|k| {
        let values = std::iter::once(eigenvalues[k]).chain(nodes.iter().map(|&i| vectors[(i, k)])).collect();
        ((k + 1).to_string(), values)
    });
    write_table(path, &header, rows)
}

pub fn run_extract(cfg: RunConfig) -> Result<()> {
    let setup = Setup::build(cfg)?;
    let out = out_dir(&setup.cfg);
    let ctx = Context::new(&setup)?;
    let mut manifest = RunManifest::new("specdata extract", &setup.cfg);
    manifest.push(timed("extract", || {
        let omega = &setup.regions.omega;
        let data = extract(&ctx.d1, omega, setup.cfg.tolerances.cluster_tol)?;
        let nodes: Vec<usize> = (0..omega.len()).collect();
        write_spectrum(&out.join("specdata.csv"), data.eigenvalues(), &relabeled(data.restricted_vectors(), omega), omega)?;
        let all: Vec<usize> = (0..setup.mesh.len()).collect();
        let base = setup.base.base();
        let powered: Vec<f64> = base.eigenvalues().iter().map(|l| l.powf(setup.cfg.s)).collect();
        write_spectrum(&out.join("spectrum_base.csv"), &powered, base.vectors(), &all)?;
        write_spectrum(&out.join("spectrum_perturbed.csv"), ctx.d1.eigenvalues(), ctx.d1.vectors(), &all)?;
        let degenerate: Vec<Value> =
            data.clusters().iter().filter(|c| c.len() > 1).map(|c| json!({"start": c.start + 1, "size": c.len()})).collect();
        Ok((
            true,
            json!({"modes": data.len(), "omega": omega, "columns": nodes.len(), "degenerate_clusters": degenerate, "vanishing_modes": data.vanishing_modes()}),
        ))
    }));
    finish(&manifest, &out)
}

/// Expands a restricted `|Ω| × K` matrix so that row `omega[a]` holds row `a`.
fn relabeled(restricted: &Mat, omega: &[usize]) -> Mat {
    let n = omega.iter().max().map_or(0, |m| m + 1);
    let mut m = Mat::zeros(n, restricted.cols());
    for (a, &i) in omega.iter().enumerate() {
        m.row_mut(i).copy_from_slice(restricted.row(a));
    }
    m
}

pub fn run_compare(cfg: RunConfig, regauge: bool) -> Result<()> {
    let setup = Setup::build(cfg)?;
    let out = out_dir(&setup.cfg);
    let ctx = Context::new(&setup)?;
    let tol = setup.cfg.tolerances.cluster_tol;
    let omega = &setup.regions.omega;
    let mut manifest = RunManifest::new("specdata compare", &setup.cfg);
    manifest.push(timed("compare", || {
        let other: Decomposition = if regauge {
            random_regauge(&ctx.d1, tol, &mut ChaCha8Rng::seed_from_u64(setup.cfg.seed))
        } else {
            (*ctx.d2).clone()
        };
        let rep = compare(&extract(&ctx.d1, omega, tol)?, &extract(&other, omega, tol)?)?;
        let clusters: Vec<Value> = rep
            .clusters
            .iter()
            .map(|c| {
                json!({
                    "start": c.start + 1,
                    "size": c.size,
                    "eigenvalue_deviation": c.eigenvalue_deviation,
                    "projector_deviation": c.projector_deviation,
                    "projector_norm": c.projector_norm,
                    "alignment_residual": c.alignment_residual,
                })
            })
            .collect();
        let equal = rep.is_equal(1e-12);
        let report = json!({
            "against": if regauge { "regauged" } else { "alternate" },
            "equal": equal,
            "max_eigenvalue_deviation": rep.max_eigenvalue_deviation,
            "max_projector_deviation": rep.max_projector_deviation,
            "multiplicity_mismatches": rep.multiplicity_mismatches,
            "clusters": clusters,
        });
        write_json(&out.join("compare.json"), &report)?;
        let passed = !regauge || equal;
        Ok((passed, json!({"equal": equal, "max_eigenvalue_deviation": rep.max_eigenvalue_deviation, "max_projector_deviation": rep.max_projector_deviation})))
    }));
    finish(&manifest, &out)
}

pub fn run_recover(cfg: RunConfig) -> Result<()> {
    let setup = Setup::build(cfg)?;
    let out = out_dir(&setup.cfg);
    let ctx = Context::new(&setup)?;
    let mut manifest = RunManifest::new("specdata recover", &setup.cfg);
    let record = verify::run_check(&ctx, "rate_recovery");
    let mut report = Value::Object(record.values.clone());
    report["time_grid"] = json!({"t0": setup.grid.t0, "dt": setup.grid.dt, "nt": setup.grid.nt});
    write_json(&out.join("recover.json"), &report)?;
    manifest.push(record);
    finish(&manifest, &out)
}

fn truth_potential(setup: &Setup, truth_csv: Option<&Path>) -> Result<Option<Pot>> {
    if let Some(path) = truth_csv {
        let values = read_potential_csv(path, setup.mesh.len()).map_err(|e| ConfigError(format!("{e:#}")))?;
        return Ok(Some(setup.potential(&PotentialSpec::Values { values }, 0)?));
    }
    Ok(match &setup.cfg.inverse.truth {
        Some(spec) => Some(setup.potential(spec, 3)?),
        None => None,
    })
}

fn prior_potential(setup: &Setup) -> Result<Pot> {
    let spec = setup.cfg.inverse.prior.as_ref().ok_or_else(|| ConfigError("inverse.prior is required".into()))?;
    Ok(setup.potential(spec, 4)?)
}

pub fn run_forward(cfg: RunConfig, truth_csv: Option<&Path>) -> Result<()> {
    let setup = Setup::build(cfg)?;
    let out = out_dir(&setup.cfg);
    let q = truth_potential(&setup, truth_csv)?.unwrap_or_else(|| setup.q1.clone());
    let r = &setup.regions;
    let mut manifest = RunManifest::new("forward", &setup.cfg);
    manifest.push(timed("forward", || {
        let mut data = forward(&setup.frac(&q), r, &setup.betas)?;
        let noise = setup.cfg.inverse.noise;
        if noise > 0.0 {
            let prior = Pot::unchecked(q.values().to_vec(), setup.cfg.bound);
            let mut p = InverseProblem::new(setup.base.clone(), r.clone(), setup.betas.clone(), data, prior, 0.0)?;
            p.add_noise(noise, &mut ChaCha8Rng::seed_from_u64(setup.cfg.seed))?;
            data = p.data().to_vec();
        }
        for (&beta, d) in setup.betas.iter().zip(&data) {
            write_matrix(&out.join(sigma_file(beta)), d, &r.omega1, &r.omega0)?;
        }
        write_nodal(&out.join("truth.csv"), q.values())?;
        let norms: Vec<f64> = data.iter().map(|d| d.frobenius_norm()).collect();
        Ok((true, json!({"betas": setup.betas, "frobenius_norms": norms, "noise": noise})))
    }));
    finish(&manifest, &out)
}

/// Data read from `dir`, checked against the configured regions.
fn load_data(dir: &Path, setup: &Setup) -> Result<(Vec<f64>, Vec<Mat>)> {
    let files = read_sigma_dir(dir)?;
    if files.is_empty() {
        return Err(ConfigError(format!("no sigma_<beta>.csv files in {}", dir.display())).into());
    }
    let r = &setup.regions;
    let mut betas = Vec::new();
    let mut data = Vec::new();
    for (beta, m) in files {
        if m.rows != r.omega1 || m.cols != r.omega0 {
            return Err(ConfigError(format!("{}: node labels do not match omega1 × omega0", sigma_file(beta))).into());
        }
        betas.push(beta);
        data.push(m.matrix);
    }
    Ok((betas, data))
}

pub fn run_invert(cfg: RunConfig, data_dir: Option<&Path>, truth_csv: Option<&Path>) -> Result<()> {
    let setup = Setup::build(cfg)?;
    let out = out_dir(&setup.cfg);
    let inv = setup.cfg.inverse.clone();
    let truth = truth_potential(&setup, truth_csv)?;
    let prior = prior_potential(&setup)?;
    let r = setup.regions.clone();

    let mut noise_norm = None;
    let mut problem = match (data_dir, &truth) {
        (Some(dir), _) => {
            let (betas, data) = load_data(dir, &setup)?;
            InverseProblem::new(setup.base.clone(), r, betas, data, prior.clone(), inv.alpha)
                .map_err(|e| ConfigError(e.to_string()))?
        }
        (None, Some(t)) => {
            let mut p = InverseProblem::synthetic(setup.base.clone(), r, setup.betas.clone(), t.clone(), prior.clone(), inv.alpha)
                .map_err(|e| ConfigError(e.to_string()))?;
            if inv.noise > 0.0 {
                noise_norm = Some(p.add_noise(inv.noise, &mut ChaCha8Rng::seed_from_u64(setup.cfg.seed))?);
            }
            p
        }
        (None, None) => return Err(ConfigError("invert needs --data or a truth (--truth or inverse.truth)".into()).into()),
    };
    if let (Some(t), Some(_)) = (&truth, data_dir) {
        problem = problem.with_truth(t.clone()).map_err(|e| ConfigError(e.to_string()))?;
    }

    let opts = ReconstructOptions { max_iterations: inv.max_iterations, relative_tol: inv.relative_tol, ..ReconstructOptions::default() };
    let mut manifest = RunManifest::new("invert", &setup.cfg);
    let mut outcome = None;
    manifest.push(timed("reconstruction", || {
        let (alpha, result, trace) = match (noise_norm, &inv.alpha_grid) {
            (Some(delta), Some(grid)) => {
                let d = discrepancy_alpha(&problem, delta, grid, inv.discrepancy_tau, &prior, &opts)?;
                (d.alpha, d.result, Some(d.trace))
            }
            _ => (inv.alpha, reconstruct(&problem, &prior, &opts)?, None),
        };
        let fitted = problem.clone().with_alpha(alpha)?;
        let misfit = fitted.data_misfit(&result.q_hat)?;
        let ident = identifiability(&fitted, &result.q_hat)?;
        let values = json!({
            "alpha": alpha,
            "iterations": result.iterations,
            "termination": format!("{:?}", result.termination),
            "data_misfit": misfit,
            "final_objective": result.misfit_history.last(),
            "initial_objective": result.misfit_history.first(),
            "sigma_max": ident.sigma_max,
            "sigma_min": ident.sigma_min,
            "jacobian_rank": ident.rank,
            "unknowns": ident.unknowns,
            "noise_norm": noise_norm,
            "discrepancy_trace": trace,
            "relative_error": result.relative_error,
        });
        let ok = result.termination != Termination::LineSearchFailed;
        outcome = Some((result, values.clone()));
        Ok((ok, values))
    }));
    if let Some((result, report)) = outcome {
        write_nodal(&out.join("q_hat.csv"), result.q_hat.values())?;
        let rows = result
            .misfit_history
            .iter()
            .zip(&result.gradient_norm_history)
            .enumerate()
            .map(|(i, (&m, &g))| (i.to_string(), vec![m, g]));
        write_table(&out.join("history.csv"), &["iteration".into(), "misfit".into(), "gradient_norm".into()], rows)?;
        write_json(&out.join("report.json"), &report)?;
        if let Some(err) = result.relative_error {
            manifest.push(timed("relative_error", || {
                Ok((err <= inv.error_tolerance, json!({"relative_error": err, "tolerance": inv.error_tolerance})))
            }));
        }
    }
    finish(&manifest, &out)
}
