//! Acceptance suite A1–A11. Prints one line per criterion and exits with a
//! nonzero status if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use fracschro::domain::{build_interval, build_rect, validate_regions, GridFunction, RegionConfig};
use fracschro::inverse::{
    default_beta_grid, gradient_check, misfit, reconstruct, InverseProblem, ReconstructOptions,
};
use fracschro::resolvent::{laplace_check, resolvent_norm_check, QuadratureSpec, ResolventOp};
use fracschro::s2s::{data_difference, decomposition_check, density_rank_test, stability_bound_check, DiagonalizedOperator};
use fracschro::specdata::{
    compare, extract, find_clusters, random_regauge, recover_rates, semigroup_samples, PencilOptions, TimeGrid,
    DEFAULT_CLUSTER_TOL,
};
use fracschro::spectral::{eig_aq, sandwich_slack, EigOptions, FracOperator, Potential};
use fracschro::{Frac, Manifold};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXPONENTS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn frac_on(m: &Manifold, s: f64) -> Frac {
    FracOperator::from_manifold(m, s, Potential::zero(m.len()), &EigOptions::default()).unwrap()
}

fn uniform(n: usize, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..hi)).collect()
}

fn a1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let meshes = [build_interval(64, 1.0).unwrap(), build_rect(8, 8, 1.0, 1.0).unwrap()];
    let mut worst = f64::INFINITY;
    for mesh in &meshes {
        for &s in &EXPONENTS {
            let base = frac_on(mesh, s);
            for _ in 0..20 {
                let q = Potential::new(uniform(mesh.len(), 5.0, &mut rng), 5.0).unwrap();
                let f = base.with_potential(q).unwrap();
                let dec = eig_aq(&f, &EigOptions::default()).unwrap();
                worst = worst.min(sandwich_slack(&f, &dec));
            }
        }
    }
    outcome(worst >= -1e-9, format!("160 spectra, smallest slack {worst:.3e}"))
}

fn a2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mesh = build_interval(32, 1.0).unwrap();
    let bases: Vec<Frac> = EXPONENTS.iter().map(|&s| frac_on(&mesh, s)).collect();
    let (mut dev, mut gap, mut all_bounded) = (0.0f64, 0.0f64, true);
    for trial in 0..50 {
        let base = &bases[trial % 4];
        let f = base.with_potential(Potential::new(uniform(32, 5.0, &mut rng), 5.0).unwrap()).unwrap();
        let spec = std::sync::Arc::new(eig_aq(&f, &EigOptions::default()).unwrap());
        let ev = spec.eigenvalues();
        let mu = if trial % 2 == 0 {
            -rng.random_range(0.0..10.0)
        } else {
            let k = rng.random_range(0..8);
            ev[k] + rng.random_range(0.2..0.8) * (ev[k + 1] - ev[k])
        };
        let r = ResolventOp::new(&f, spec, mu).unwrap();
        let g: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct = r.resolve(&g).unwrap();
        let series = r.resolve_series(&g).unwrap();
        let num: f64 = direct.iter().zip(series.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = direct.iter().map(|a| a * a).sum::<f64>().sqrt();
        dev = dev.max(num / den);
        let rep = resolvent_norm_check(&r).unwrap();
        all_bounded &= rep.norm_computed <= rep.norm_bound + 1e-8;
        gap = gap.max(rep.equality_gap);
    }
    outcome(
        dev <= 1e-9 && all_bounded && gap <= 1e-8,
        format!("series deviation {dev:.2e}, norm bounded {all_bounded}, equality gap {gap:.2e}"),
    )
}

fn pair_regions() -> RegionConfig {
    RegionConfig::new((1..6).collect(), (22..27).collect(), (10..17).collect())
}

fn random_pair(base: &Frac, rng: &mut ChaCha8Rng, near: bool) -> (DiagonalizedOperator<f64>, DiagonalizedOperator<f64>) {
    let n = base.len();
    let q1 = uniform(n, 5.0, rng);
    let q2: Vec<f64> = if near {
        let mut q2 = q1.clone();
        let l = rng.random_range(0..n);
        q2[l] = if q2[l] + 1e-6 <= 5.0 { q2[l] + 1e-6 } else { q2[l] - 1e-6 };
        q2
    } else {
        uniform(n, 5.0, rng)
    };
    let opts = EigOptions::default();
    let a = DiagonalizedOperator::new(base.with_potential(Potential::new(q1, 5.0).unwrap()).unwrap(), &opts).unwrap();
    let b = DiagonalizedOperator::new(base.with_potential(Potential::new(q2, 5.0).unwrap()).unwrap(), &opts)
        .unwrap()
        .aligned_to(&a, DEFAULT_CLUSTER_TOL)
        .unwrap();
    (a, b)
}

fn a3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mesh = build_interval(30, 1.0).unwrap();
    let bases: Vec<Frac> = EXPONENTS.iter().map(|&s| frac_on(&mesh, s)).collect();
    let r = pair_regions();
    let (mut defect, mut bounds_ok) = (0.0f64, true);
    for trial in 0..50 {
        let (a, b) = random_pair(&bases[trial % 4], &mut rng, false);
        let vals: Vec<f64> = r.omega0.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = GridFunction::from_support(30, &r.omega0, &vals);
        let rep = decomposition_check(&a, &b, &r, &f).unwrap();
        defect = defect.max(rep.relative_defect);
        bounds_ok &= rep.passed;
    }
    outcome(defect <= 1e-9 && bounds_ok, format!("50 pairs, identity defect {defect:.2e}, term bounds hold {bounds_ok}"))
}

fn a4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mesh = build_interval(30, 1.0).unwrap();
    let bases: Vec<Frac> = EXPONENTS.iter().map(|&s| frac_on(&mesh, s)).collect();
    let r = pair_regions();
    let (mut violations, mut worst) = (0, 0.0f64);
    for trial in 0..50 {
        let (a, b) = random_pair(&bases[trial % 4], &mut rng, trial % 5 == 0);
        let rep = stability_bound_check(&a, &b, &r).unwrap();
        if !rep.passed {
            violations += 1;
        }
        worst = worst.max(rep.ratio);
    }
    outcome(violations == 0, format!("50 pairs (10 near-identical), {violations} violations, largest lhs/(C d) {worst:.3e}"))
}

fn a5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mesh = build_interval(40, 1.0).unwrap();
    let f = frac_on(&mesh, 0.5).with_potential(Potential::new(uniform(40, 5.0, &mut rng), 5.0).unwrap()).unwrap();
    let spec = eig_aq(&f, &EigOptions::default()).unwrap();
    let mut worst = 0.0f64;
    let mut ok = true;
    for mu in [0.5, 1.0, 4.0] {
        let rep = laplace_check(&f, &spec, mu, &QuadratureSpec::default()).unwrap();
        worst = worst.max(rep.max_abs_deviation);
        ok &= rep.passed;
    }
    outcome(ok && worst <= 1e-6, format!("mu in {{0.5, 1, 4}}, largest entrywise deviation {worst:.2e}"))
}

fn a6() -> Outcome {
    let mesh = build_interval(40, PI).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let f = frac_on(&mesh, 1.0).with_potential(Potential::new(uniform(40, 1.0, &mut rng), 1.0).unwrap()).unwrap();
    let dec = eig_aq(&f, &EigOptions::default()).unwrap();
    let ev = dec.eigenvalues();
    let min_gap = (0..5).map(|k| (ev[k + 1] - ev[k]) / ev[k + 1]).fold(f64::INFINITY, f64::min);
    let omega: Vec<usize> = (5..=15).collect();
    let grid = TimeGrid::new(0.2, 0.05, 41).unwrap();
    let samples = semigroup_samples(&dec, &omega, &omega, &grid).unwrap();
    let fit = match recover_rates(&samples, &grid, 5, &PencilOptions::default()) {
        Ok(fit) => fit,
        Err(e) => return outcome(false, format!("recovery failed: {e}")),
    };
    if fit.rates.len() < 5 {
        return outcome(false, format!("only {} rates recovered", fit.rates.len()));
    }
    let data = extract(&dec, &omega, DEFAULT_CLUSTER_TOL).unwrap();
    let w: Vec<f64> = omega.iter().map(|&i| f.mass()[i]).collect();
    let (mut rate_err, mut amp_err) = (0.0f64, 0.0f64);
    for k in 0..5 {
        rate_err = rate_err.max((fit.rates[k] - ev[k]).abs() / ev[k]);
        let p = data.projector_block(k..k + 1, &omega, &omega).unwrap().scale_cols(&w);
        amp_err = amp_err.max(fit.amplitudes[k].sub(&p).frobenius_norm() / p.frobenius_norm());
    }
    outcome(
        min_gap >= 0.05 && rate_err <= 1e-6 && amp_err <= 1e-5,
        format!("smallest relative gap {min_gap:.3}, rate error {rate_err:.2e}, amplitude error {amp_err:.2e}"),
    )
}

/// The recorded reconstruction configuration.
fn golden_problem() -> InverseProblem<f64> {
    let n = 64;
    let mesh = build_interval(n, 1.0).unwrap();
    let f = frac_on(&mesh, 0.5);
    let r = validate_regions(&mesh, &RegionConfig::new((20..32).collect(), (32..44).collect(), (26..38).collect())).unwrap();
    let x: Vec<f64> = (0..n).map(|i| (i + 1) as f64 / (n + 1) as f64).collect();
    let c = r.omega_prime.iter().map(|&i| x[i]).sum::<f64>() / r.omega_prime.len() as f64;
    let mut truth = vec![1.0; n];
    for &i in &r.omega_prime {
        truth[i] += 2.0 * (-((x[i] - c) / 0.06).powi(2)).exp();
    }
    let betas = default_beta_grid(&f);
    let prior = Potential::constant(n, 1.0, 5.0).unwrap();
    InverseProblem::synthetic(f, r, betas, Potential::new(truth, 5.0).unwrap(), prior, 0.0).unwrap()
}

fn a7() -> Outcome {
    let p = golden_problem();
    let j0 = misfit(&p, p.prior()).unwrap();
    let res = reconstruct(&p, p.prior(), &ReconstructOptions::default()).unwrap();
    let err = res.relative_error.unwrap();
    let j = *res.misfit_history.last().unwrap();
    let monotone = res.misfit_history.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        err <= 0.05 && res.iterations <= 500 && monotone,
        format!(
            "{} iterations, relative error {err:.2e}, J/J0 {:.2e}, monotone {monotone}, {:?}",
            res.iterations,
            j / j0,
            res.termination
        ),
    )
}

fn a8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let n = 24;
    let mesh = build_interval(n, 1.0).unwrap();
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let s = EXPONENTS[trial % 4];
        let f = frac_on(&mesh, s);
        let r = RegionConfig::new((1..5).collect(), (17..22).collect(), (8..14).collect());
        let prior = Potential::new(uniform(n, 2.0, &mut rng), 5.0).unwrap();
        let perturb = |rng: &mut ChaCha8Rng| {
            let mut v = prior.values().to_vec();
            for &l in &r.omega_prime {
                v[l] = rng.random_range(0.5..4.5);
            }
            Potential::new(v, 5.0).unwrap()
        };
        let truth = perturb(&mut rng);
        let q = perturb(&mut rng);
        let alpha = if trial % 2 == 0 { 0.0 } else { 0.05 };
        let betas = default_beta_grid(&f);
        let p = InverseProblem::synthetic(f, r.clone(), betas, truth, prior.clone(), alpha).unwrap();
        worst = worst.max(gradient_check(&p, &q, 1e-5).unwrap().max_relative_error);
    }
    outcome(worst <= 1e-5, format!("10 instances, largest componentwise relative error {worst:.2e}"))
}

fn a9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mesh = build_rect(6, 6, 1.0, 1.0).unwrap();
    let f = frac_on(&mesh, 0.5);
    let dec = eig_aq(&f, &EigOptions::default()).unwrap();
    let clusters = find_clusters(dec.eigenvalues(), DEFAULT_CLUSTER_TOL).iter().filter(|c| c.len() > 1).count();
    let omega: Vec<usize> = (0..36).filter(|i| i % 4 != 1).collect();
    let d1 = extract(&dec, &omega, DEFAULT_CLUSTER_TOL).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d2 = extract(&random_regauge(&dec, DEFAULT_CLUSTER_TOL, &mut rng), &omega, DEFAULT_CLUSTER_TOL).unwrap();
        let rep = compare(&d1, &d2).unwrap();
        worst = worst.max(rep.max_projector_deviation).max(rep.max_eigenvalue_deviation);
    }
    outcome(
        clusters > 0 && worst <= 1e-12,
        format!("{clusters} degenerate clusters, 100 trials, largest deviation {worst:.2e}"),
    )
}

fn a10() -> Outcome {
    let mesh = build_interval(60, 1.0).unwrap();
    let f = frac_on(&mesh, 0.5);
    let o0: Vec<usize> = (20..40).step_by(2).collect();
    let o1: Vec<usize> = (21..41).step_by(2).collect();
    let rep = density_rank_test(&f, &o0, &o1).unwrap();
    let blocked = density_rank_test(&f, &(10..20).collect::<Vec<_>>(), &(40..50).collect::<Vec<_>>()).unwrap();
    let sv = &rep.singular_values;
    outcome(
        rep.full_rank,
        format!(
            "interleaved 10x10 rank {} (sigma_min/sigma_max {:.2e}); separated blocks rank {} reported",
            rep.rank,
            sv[sv.len() - 1] / sv[0],
            blocked.rank
        ),
    )
}

fn a11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let n = 40;
    let mesh = build_interval(n, 1.0).unwrap();
    let base = frac_on(&mesh, 0.5);
    let r = RegionConfig::new((4..10).collect(), (28..34).collect(), (15..23).collect());
    let betas = default_beta_grid(&base);
    let mut smallest = f64::INFINITY;
    for _ in 0..20 {
        let q1 = uniform(n, 4.0, &mut rng);
        let mut delta: Vec<f64> = r.omega_prime.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let amp = 1e-3 * (1.0 + rng.random_range(0.0..9.0));
        let sup = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        delta.iter_mut().for_each(|d| *d *= amp / sup);
        let mut q2 = q1.clone();
        for (&l, d) in r.omega_prime.iter().zip(&delta) {
            q2[l] = (q2[l] + d).abs();
        }
        let f1 = base.with_potential(Potential::new(q1, 5.0).unwrap()).unwrap();
        let f2 = base.with_potential(Potential::new(q2, 5.0).unwrap()).unwrap();
        let diff = data_difference(&f1, &f2, &r, &betas).unwrap();
        smallest = smallest.min(diff.iter().copied().fold(0.0, f64::max));
    }
    outcome(smallest > 1e-12, format!("20 pairs, smallest max_beta ||dSigma||_F {smallest:.3e}"))
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let checks: [(&str, &str, Check, Option<f64>); 11] = [
        ("A1", "min-max sandwich", a1, Some(10.0)),
        ("A2", "resolvent series and norm estimate", a2, Some(10.0)),
        ("A3", "difference decomposition", a3, Some(30.0)),
        ("A4", "stability bound", a4, None),
        ("A5", "Laplace identity", a5, Some(20.0)),
        ("A6", "exponential-sum recovery", a6, None),
        ("A8", "gradient gate", a8, None),
        ("A7", "golden reconstruction", a7, Some(60.0)),
        ("A9", "gauge invariance", a9, None),
        ("A10", "density rank", a10, None),
        ("A11", "distinguishability", a11, None),
    ];
    let mut failures = Vec::new();
    let mut gate_open = true;
    for (id, name, check, limit) in checks {
        if id == "A7" && !gate_open {
            println!("{id:<4} FAIL  {name}: not attempted, gradient gate failed");
            failures.push(id);
            continue;
        }
        let start = Instant::now();
        let out = check();
        let secs = start.elapsed().as_secs_f64();
        let in_time = limit.is_none_or(|l| secs < l);
        let passed = out.passed && in_time;
        let budget = limit.map(|l| format!(", limit {l} s")).unwrap_or_default();
        println!("{id:<4} {}  {name}: {} [{secs:.2} s{budget}]", if passed { "PASS" } else { "FAIL" }, out.detail);
        if id == "A8" {
            gate_open = passed;
        }
        if !passed {
            failures.push(id);
        }
    }
    if failures.is_empty() {
        println!("acceptance: all 11 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing {}", failures.join(", "));
        ExitCode::FAILURE
    }
}
