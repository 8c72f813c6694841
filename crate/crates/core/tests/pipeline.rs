use std::f64::consts::PI;

use fracschro::domain::{build_interval, RegionConfig};
use fracschro::inverse::{default_beta_grid, reconstruct, InverseProblem, ReconstructOptions};
use fracschro::resolvent::{laplace_rule, QuadratureSpec, ResolventOp};
use fracschro::specdata::{extract, recover_rates, semigroup_samples, PencilOptions, TimeGrid, DEFAULT_CLUSTER_TOL};
use fracschro::spectral::{eig_aq, EigOptions, FracOperator, Potential};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frac(n: usize, length: f64, s: f64, seed: u64) -> FracOperator<f64> {
    let m = build_interval(n, length).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Potential::new((0..n).map(|_| rng.random_range(0.0..1.0)).collect(), 1.0).unwrap();
    FracOperator::from_manifold(&m, s, q, &EigOptions::default()).unwrap()
}

#[test]
fn rates_and_projectors_round_trip() {
    let f = random_frac(40, PI, 1.0, 6);
    let dec = eig_aq(&f, &EigOptions::default()).unwrap();
    let omega: Vec<usize> = (5..=15).collect();
    let grid = TimeGrid::new(0.2, 0.05, 41).unwrap();
    let samples = semigroup_samples(&dec, &omega, &omega, &grid).unwrap();
    let fit = recover_rates(&samples, &grid, 5, &PencilOptions::default()).unwrap();
    let data = extract(&dec, &omega, DEFAULT_CLUSTER_TOL).unwrap();
    let w: Vec<f64> = omega.iter().map(|&i| f.mass()[i]).collect();
    for k in 0..5 {
        let mu = dec.eigenvalues()[k];
        assert!((fit.rates[k] - mu).abs() <= 1e-6 * mu, "rate {k}: {} vs {mu}", fit.rates[k]);
        let p = data.projector_block(k..k + 1, &omega, &omega).unwrap().scale_cols(&w);
        let rel = fit.amplitudes[k].sub(&p).frobenius_norm() / p.frobenius_norm();
        assert!(rel <= 1e-5, "amplitude {k}: {rel}");
    }
}

#[test]
fn rates_recovered_for_half_power() {
    let f = random_frac(40, PI, 0.5, 7);
    let dec = eig_aq(&f, &EigOptions::default()).unwrap();
    let omega: Vec<usize> = (3..=30).collect();
    let grid = TimeGrid::new(0.2, 0.05, 41).unwrap();
    let samples = semigroup_samples(&dec, &omega, &omega, &grid).unwrap();
    let fit = recover_rates(&samples, &grid, 5, &PencilOptions::default()).unwrap();
    for k in 0..5 {
        let mu = dec.eigenvalues()[k];
        assert!((fit.rates[k] - mu).abs() <= 1e-6 * mu, "rate {k}: {} vs {mu}", fit.rates[k]);
    }
}

#[test]
fn laplace_of_samples_matches_source_to_solution() {
    let f = random_frac(40, 1.0, 0.5, 8);
    let dec = eig_aq(&f, &EigOptions::default()).unwrap();
    let (o0, o1) = (vec![3, 4, 5], vec![20, 21]);
    let mu = 1.0;
    let ev = dec.eigenvalues();
    let rule = laplace_rule(mu + ev[0], mu + ev[ev.len() - 1], &QuadratureSpec::default()).unwrap();
    let r = ResolventOp::negative_shift(&f, mu).unwrap().matrix();
    let mut acc = vec![vec![0.0; o0.len()]; o1.len()];
    for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
        let grid = TimeGrid::new(t, 1.0, 1).unwrap();
        let y = &semigroup_samples(&dec, &o0, &o1, &grid).unwrap()[0];
        for a in 0..o1.len() {
            for b in 0..o0.len() {
                acc[a][b] += wt * (-mu * t).exp() * y[(a, b)];
            }
        }
    }
    for (a, &i) in o1.iter().enumerate() {
        for (b, &j) in o0.iter().enumerate() {
            assert!((acc[a][b] - r[(i, j)]).abs() <= 1e-6);
        }
    }
}

#[test]
fn reconstruction_commutes_with_relabeling() {
    let n = 20;
    let m = build_interval(n, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let r = RegionConfig::new((2..6).collect(), (14..18).collect(), (8..12).collect());
    let prior = vec![1.0; n];
    let mut truth = prior.clone();
    for &l in &r.omega_prime {
        truth[l] = rng.random_range(0.5..2.5);
    }
    let solve = |m: &fracschro::Manifold, r: &RegionConfig, truth: Vec<f64>, prior: Vec<f64>, iters: usize| {
        let opts = ReconstructOptions { max_iterations: iters, ..Default::default() };
        let f = FracOperator::from_manifold(m, 0.5, Potential::zero(n), &EigOptions::default()).unwrap();
        let betas = default_beta_grid(&f);
        let prior = Potential::new(prior, 5.0).unwrap();
        let p = InverseProblem::synthetic(f, r.clone(), betas, Potential::new(truth, 5.0).unwrap(), prior.clone(), 0.0).unwrap();
        reconstruct(&p, &prior, &opts).unwrap()
    };
    let (mp, rp) = (m.relabel(&perm).unwrap(), r.relabel(&perm));
    let pt: Vec<f64> = perm.iter().map(|&p| truth[p]).collect();
    let pp: Vec<f64> = perm.iter().map(|&p| prior[p]).collect();
    // BB steps amplify roundoff, so agreement loosens with the iteration count.
    for (iters, tol) in [(5, 1e-9), (25, 1e-5)] {
        let direct = solve(&m, &r, truth.clone(), prior.clone(), iters);
        let permuted = solve(&mp, &rp, pt.clone(), pp.clone(), iters);
        for (new, &old) in perm.iter().enumerate() {
            let (a, b) = (direct.q_hat.values()[old], permuted.q_hat.values()[new]);
            assert!((a - b).abs() <= tol, "{iters} iterations, node {old}: {a} vs {b}");
        }
    }
}
