//! Output least-squares reconstruction of a potential supported in `Ω′`
//! from source-to-solution data at several shifts, with adjoint gradients,
//! a projected Barzilai–Borwein descent and a Jacobian-based local
//! identifiability report.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::domain::{GridFunction, RegionConfig};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, Matrix};
use crate::resolvent::ResolventOp;
use crate::s2s::s2s_matrix;
use crate::scalar::Real;
use crate::spectral::{FracOperator, Potential};

/// `{0, 0.5, 2, 8} · λ₁^s`.
pub fn default_beta_grid<T: Real>(frac: &FracOperator<T>) -> Vec<T> {
    let l1 = frac.powered_eigenvalues()[0];
    [0.0, 0.5, 2.0, 8.0].iter().map(|&c| T::lit(c) * l1).collect()
}

/// Data `D_i ≈ Σ_q(β_i)` and the admissible set for `q`.
///
/// Admissible potentials satisfy `0 ≤ q ≤ bound` and agree with `prior`
/// off `Ω′`.
#[derive(Clone, Debug)]
pub struct InverseProblem<T> {
    frac: FracOperator<T>,
    regions: RegionConfig,
    betas: Vec<T>,
    data: Vec<Matrix<T>>,
    prior: Potential<T>,
    alpha: T,
    truth: Option<Potential<T>>,
}

impl<T: Real> InverseProblem<T> {
    pub fn new(
        frac: FracOperator<T>,
        regions: RegionConfig,
        betas: Vec<T>,
        data: Vec<Matrix<T>>,
        prior: Potential<T>,
        alpha: T,
    ) -> Result<Self> {
        let n = frac.len();
        if prior.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: prior.len() });
        }
        if regions.omega0.is_empty() || regions.omega1.is_empty() || regions.omega_prime.is_empty() {
            return Err(Error::InvalidRegion("omega0, omega1 and omega_prime must be nonempty".into()));
        }
        if let Some(&i) = regions.omega0.iter().chain(&regions.omega1).chain(&regions.omega_prime).find(|&&i| i >= n) {
            return Err(Error::InvalidRegion(format!("node {i} out of range for {n} nodes")));
        }
        if betas.is_empty() {
            return Err(Error::InvalidArgument("beta grid is empty".into()));
        }
        if betas.iter().any(|&b| !(b >= T::zero()) || !b.is_finite()) {
            return Err(Error::InvalidArgument("shifts must be finite and nonnegative".into()));
        }
        for (i, a) in betas.iter().enumerate() {
            if betas[..i].contains(a) {
                return Err(Error::InvalidArgument(format!("repeated shift {a}")));
            }
        }
        if data.len() != betas.len() {
            return Err(Error::DimensionMismatch { expected: betas.len(), got: data.len() });
        }
        for d in &data {
            if d.rows() != regions.omega1.len() {
                return Err(Error::DimensionMismatch { expected: regions.omega1.len(), got: d.rows() });
            }
            if d.cols() != regions.omega0.len() {
                return Err(Error::DimensionMismatch { expected: regions.omega0.len(), got: d.cols() });
            }
        }
        if !(alpha >= T::zero()) {
            return Err(Error::InvalidArgument(format!("regularization weight must be nonnegative, got {alpha}")));
        }
        Ok(Self { frac, regions, betas, data, prior, alpha, truth: None })
    }

    /// Exact data generated from `truth`, which must itself be admissible.
    pub fn synthetic(
        frac: FracOperator<T>,
        regions: RegionConfig,
        betas: Vec<T>,
        truth: Potential<T>,
        prior: Potential<T>,
        alpha: T,
    ) -> Result<Self> {
        let data = forward(&frac.with_potential(truth.clone())?, &regions, &betas)?;
        let mut p = Self::new(frac, regions, betas, data, prior, alpha)?;
        p.check_admissible(&truth)?;
        p.truth = Some(truth);
        Ok(p)
    }

    pub fn with_truth(mut self, truth: Potential<T>) -> Result<Self> {
        self.check_admissible(&truth)?;
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: T) -> Result<Self> {
        if !(alpha >= T::zero()) {
            return Err(Error::InvalidArgument(format!("regularization weight must be nonnegative, got {alpha}")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Adds entrywise Gaussian noise scaled so that each `‖E_i‖_F` equals
    /// `level · ‖D_i‖_F`. Returns the mass-weighted norm of the total noise.
    pub fn add_noise<R: Rng + ?Sized>(&mut self, level: f64, rng: &mut R) -> Result<T> {
        if !(level >= 0.0) || !level.is_finite() {
            return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {level}")));
        }
        let w1 = self.mass1();
        let mut total = T::zero();
        for d in &mut self.data {
            let e = Matrix::from_fn(d.rows(), d.cols(), |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
            let en = e.frobenius_norm();
            if en == T::zero() {
                continue;
            }
            let e = e.scaled(T::lit(level) * d.frobenius_norm() / en);
            total += weighted_sq(&w1, &e);
            *d = d.add(&e);
        }
        Ok(total.sqrt())
    }

    pub fn frac(&self) -> &FracOperator<T> {
        &self.frac
    }

    pub fn regions(&self) -> &RegionConfig {
        &self.regions
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }

    pub fn data(&self) -> &[Matrix<T>] {
        &self.data
    }

    pub fn prior(&self) -> &Potential<T> {
        &self.prior
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn bound(&self) -> T {
        self.prior.bound()
    }

    pub fn truth(&self) -> Option<&Potential<T>> {
        self.truth.as_ref()
    }

    fn mass1(&self) -> Vec<T> {
        let w = self.frac.mass();
        self.regions.omega1.iter().map(|&i| w[i]).collect()
    }

    /// Errors unless `q` lies in `[0, bound]` and matches the prior off `Ω′`.
    pub fn check_admissible(&self, q: &Potential<T>) -> Result<()> {
        let n = self.frac.len();
        if q.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: q.len() });
        }
        let m = self.bound();
        if let Some(i) = q.values().iter().position(|&v| !(v >= T::zero() && v <= m)) {
            return Err(Error::InvalidPotential(format!("q[{i}] = {} outside [0, {m}]", q.values()[i])));
        }
        let mut inside = vec![false; n];
        for &i in &self.regions.omega_prime {
            inside[i] = true;
        }
        if let Some(i) = (0..n).find(|&i| !inside[i] && q.values()[i] != self.prior.values()[i]) {
            return Err(Error::InvalidPotential(format!("q differs from the prior at node {i} outside omega_prime")));
        }
        Ok(())
    }

    /// `Σ_q(β_i) − D_i` for every shift.
    pub fn residuals(&self, q: &Potential<T>) -> Result<Vec<Matrix<T>>> {
        self.check_admissible(q)?;
        let x = forward(&self.frac.with_potential(q.clone())?, &self.regions, &self.betas)?;
        Ok(x.iter().zip(&self.data).map(|(x, d)| x.sub(d)).collect())
    }

    /// `½ Σ_i Σ_{a,b} m_a (Σ_q(β_i) − D_i)²_{ab}` without the penalty.
    pub fn data_misfit(&self, q: &Potential<T>) -> Result<T> {
        let w1 = self.mass1();
        Ok(T::lit(0.5) * self.residuals(q)?.iter().map(|r| weighted_sq(&w1, r)).sum::<T>())
    }

    fn penalty(&self, q: &Potential<T>) -> T {
        let w = self.frac.mass();
        let (qv, q0) = (q.values(), self.prior.values());
        let sum: T = self.regions.omega_prime.iter().map(|&l| w[l] * (qv[l] - q0[l]).powi(2)).sum();
        T::lit(0.5) * self.alpha * sum
    }
}

fn weighted_sq<T: Real>(w1: &[T], r: &Matrix<T>) -> T {
    (0..r.rows()).map(|a| w1[a] * r.row(a).iter().map(|&x| x * x).sum::<T>()).sum()
}

/// `Σ_q(β)` for every shift, assembled in parallel.
pub fn forward<T: Real>(frac: &FracOperator<T>, regions: &RegionConfig, betas: &[T]) -> Result<Vec<Matrix<T>>> {
    betas
        .par_iter()
        .map(|&b| s2s_matrix(frac, regions, b).map(|op| op.matrix().clone()))
        .collect()
}

/// `J(q) = ½ Σ_i ‖Σ_q(β_i) − D_i‖²_W + (α/2)‖q − q₀‖²_{L²(Ω′)}`.
pub fn misfit<T: Real>(p: &InverseProblem<T>, q: &Potential<T>) -> Result<T> {
    Ok(p.data_misfit(q)? + p.penalty(q))
}

/// Misfit and gradient from one set of forward and adjoint solves.
///
/// The gradient is the Euclidean one with respect to the nodal values and
/// vanishes off `Ω′`.
pub fn misfit_and_gradient<T: Real>(p: &InverseProblem<T>, q: &Potential<T>) -> Result<(T, GridFunction<T>)> {
    p.check_admissible(q)?;
    let frac = p.frac.with_potential(q.clone())?;
    let n = frac.len();
    let w = frac.mass();
    let r = &p.regions;
    let w1 = p.mass1();
    let per_beta: Vec<(T, Vec<T>)> = p
        .betas
        .par_iter()
        .zip(&p.data)
        .map(|(&beta, d)| -> Result<(T, Vec<T>)> {
            let res = ResolventOp::negative_shift(&frac, beta)?;
            let cols: Vec<(T, Vec<T>)> = r
                .omega0
                .par_iter()
                .enumerate()
                .map(|(j, &src)| {
                    let u = res.resolve_unchecked(&GridFunction::<T>::indicator(n, src));
                    let resid: Vec<T> = r.omega1.iter().enumerate().map(|(a, &i)| u[i] - d[(a, j)]).collect();
                    let sq: T = resid.iter().zip(&w1).map(|(&x, &m)| m * x * x).sum();
                    let v = res.resolve_unchecked(&GridFunction::from_support(n, &r.omega1, &resid));
                    let g = r.omega_prime.iter().map(|&l| -w[l] * u[l] * v[l]).collect();
                    (sq, g)
                })
                .collect();
            let mut g = vec![T::zero(); r.omega_prime.len()];
            let mut sq = T::zero();
            for (s, c) in cols {
                sq += s;
                for (a, b) in g.iter_mut().zip(c) {
                    *a += b;
                }
            }
            Ok((sq, g))
        })
        .collect::<Result<_>>()?;
    let mut grad = GridFunction::zeros(n);
    let mut j = T::zero();
    for (sq, g) in per_beta {
        j += T::lit(0.5) * sq;
        for (&l, v) in r.omega_prime.iter().zip(g) {
            grad[l] += v;
        }
    }
    let q0 = p.prior.values();
    for &l in &r.omega_prime {
        grad[l] += p.alpha * w[l] * (q.values()[l] - q0[l]);
    }
    Ok((j + p.penalty(q), grad))
}

/// `∂J/∂q_l` on `Ω′`, zero elsewhere, by adjoint solves.
pub fn gradient<T: Real>(p: &InverseProblem<T>, q: &Potential<T>) -> Result<GridFunction<T>> {
    misfit_and_gradient(p, q).map(|(_, g)| g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheckReport {
    pub step: f64,
    pub adjoint: Vec<f64>,
    pub finite_difference: Vec<f64>,
    /// `|g_fd − g| / max(|g|, 1e-6 ‖g‖_∞)` per node of `Ω′`.
    pub relative_errors: Vec<f64>,
    pub max_relative_error: f64,
}

/// Compares the adjoint gradient with central differences of step `h`.
/// `q ± h` must stay within the bounds on `Ω′`.
pub fn gradient_check<T: Real>(p: &InverseProblem<T>, q: &Potential<T>, h: f64) -> Result<GradientCheckReport> {
    let g = gradient(p, q)?;
    let adjoint: Vec<f64> = p.regions.omega_prime.iter().map(|&l| g[l].as_f64()).collect();
    let finite_difference = p
        .regions
        .omega_prime
        .par_iter()
        .map(|&l| -> Result<f64> {
            let shifted = |sign: f64| {
                let mut v = q.values().to_vec();
                v[l] += T::lit(sign * h);
                Potential::new(v, p.bound())
            };
            let plus = misfit(p, &shifted(1.0)?)?;
            let minus = misfit(p, &shifted(-1.0)?)?;
            Ok((plus - minus).as_f64() / (2.0 * h))
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = adjoint.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let relative_errors: Vec<f64> = adjoint
        .iter()
        .zip(&finite_difference)
        .map(|(&a, &f)| {
            let denom = a.abs().max(1e-6 * scale);
            if denom == 0.0 { (f - a).abs() } else { (f - a).abs() / denom }
        })
        .collect();
    let max_relative_error = relative_errors.iter().copied().fold(0.0, f64::max);
    Ok(GradientCheckReport { step: h, adjoint, finite_difference, relative_errors, max_relative_error })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructOptions {
    pub max_iterations: usize,
    /// Stop when the projected gradient norm falls below this fraction of
    /// its initial value.
    pub relative_tol: f64,
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self { max_iterations: 2000, relative_tol: 1e-9, armijo: 1e-4, max_halvings: 50 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationCap,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult<T> {
    pub q_hat: Potential<T>,
    pub misfit_history: Vec<f64>,
    pub gradient_norm_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// `‖q̂ − q*‖_{L²(Ω′)} / ‖q*‖_{L²(Ω′)}` when the truth is known.
    pub relative_error: Option<f64>,
}

fn project<T: Real>(p: &InverseProblem<T>, q: &[T], dir: &[T], step: T) -> Vec<T> {
    let mut out = q.to_vec();
    for &l in &p.regions.omega_prime {
        out[l] = (q[l] - step * dir[l]).max(T::zero()).min(p.bound());
    }
    out
}

/// Relative `L²(Ω′)` error of `q` against `truth`.
pub fn relative_error<T: Real>(p: &InverseProblem<T>, q: &Potential<T>, truth: &Potential<T>) -> f64 {
    let w = p.frac.mass();
    let (num, den) = p.regions.omega_prime.iter().fold((0.0, 0.0), |(a, b), &l| {
        let t = truth.values()[l].as_f64();
        let d = q.values()[l].as_f64() - t;
        let m = w[l].as_f64();
        (a + m * d * d, b + m * t * t)
    });
    if den == 0.0 { num.sqrt() } else { (num / den).sqrt() }
}

/// Projected gradient descent on `Ω′` with Barzilai–Borwein trial steps and
/// Armijo backtracking. The misfit history is nonincreasing.
pub fn reconstruct<T: Real>(p: &InverseProblem<T>, q_init: &Potential<T>, opts: &ReconstructOptions) -> Result<ReconstructionResult<T>> {
    p.check_admissible(q_init)?;
    let nodes = &p.regions.omega_prime;
    let mut q = q_init.values().to_vec();
    let (mut j, mut g) = misfit_and_gradient(p, q_init)?;
    let pg_norm = |q: &[T], g: &[T]| -> T {
        let pr = project(p, q, g, T::one());
        nodes.iter().map(|&l| (q[l] - pr[l]).powi(2)).sum::<T>().sqrt()
    };
    let mut pg = pg_norm(&q, &g);
    let tol = T::lit(opts.relative_tol) * pg;
    let mut misfit_history = vec![j.as_f64()];
    let mut gradient_norm_history = vec![pg.as_f64()];
    let gmax = nodes.iter().fold(T::zero(), |m, &l| m.max(g[l].abs()));
    let mut step = if gmax > T::zero() { T::lit(0.1) * p.bound().max(T::one()) / gmax } else { T::one() };
    let mut termination = Termination::IterationCap;
    let mut iterations = 0;
    if j == T::zero() || pg == T::zero() {
        termination = Termination::Converged;
    } else {
        while iterations < opts.max_iterations {
            let mut accepted = None;
            let mut eta = step;
            for _ in 0..=opts.max_halvings {
                let trial = project(p, &q, &g, eta);
                let decrease: T = nodes.iter().map(|&l| g[l] * (trial[l] - q[l])).sum();
                let pot = Potential::unchecked(trial, p.bound());
                let (jt, gt) = misfit_and_gradient(p, &pot)?;
                if jt <= j + T::lit(opts.armijo) * decrease {
                    accepted = Some((pot, jt, gt));
                    break;
                }
                eta *= T::lit(0.5);
            }
            let Some((pot, jt, gt)) = accepted else {
                termination = Termination::LineSearchFailed;
                break;
            };
            let trial = pot.values().to_vec();
            let (mut ss, mut sy) = (T::zero(), T::zero());
            for &l in nodes {
                let s = trial[l] - q[l];
                ss += s * s;
                sy += s * (gt[l] - g[l]);
            }
            step = if sy > T::zero() { ss / sy } else { eta * T::lit(2.0) };
            q = trial;
            j = jt;
            g = gt;
            pg = pg_norm(&q, &g);
            iterations += 1;
            misfit_history.push(j.as_f64());
            gradient_norm_history.push(pg.as_f64());
            if pg <= tol || j == T::zero() {
                termination = Termination::Converged;
                break;
            }
        }
    }
    let q_hat = Potential::new(q, p.bound())?;
    let relative_error = p.truth.as_ref().map(|t| relative_error(p, &q_hat, t));
    Ok(ReconstructionResult {
        q_hat,
        misfit_history,
        gradient_norm_history,
        iterations,
        converged: termination == Termination::Converged,
        termination,
        relative_error,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiabilityReport {
    pub data_count: usize,
    pub unknowns: usize,
    /// Descending, padded with zeros up to `unknowns`.
    pub singular_values: Vec<f64>,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Count above `1e-10 σ_max`.
    pub rank: usize,
}

/// Mass-weighted Jacobian of every data entry with respect to `q|_{Ω′}`.
///
/// Row `(i, a, b)` holds `−√m_a [R(−β_i)δ_l]_{ω₁[a]} [R(−β_i)δ_{ω₀[b]}]_l`
/// in column `l`.
pub fn jacobian<T: Real>(p: &InverseProblem<T>, q: &Potential<T>) -> Result<Matrix<T>> {
    p.check_admissible(q)?;
    let frac = p.frac.with_potential(q.clone())?;
    let n = frac.len();
    let r = &p.regions;
    let sw1: Vec<T> = p.mass1().iter().map(|w| w.sqrt()).collect();
    let (n0, n1, np) = (r.omega0.len(), r.omega1.len(), r.omega_prime.len());
    let blocks: Vec<Matrix<T>> = p
        .betas
        .par_iter()
        .map(|&beta| -> Result<Matrix<T>> {
            let res = ResolventOp::negative_shift(&frac, beta)?;
            let u: Vec<Vec<T>> = r.omega0.iter().map(|&j| res.resolve_unchecked(&GridFunction::<T>::indicator(n, j))).collect();
            let g: Vec<Vec<T>> = r.omega_prime.iter().map(|&l| res.resolve_unchecked(&GridFunction::<T>::indicator(n, l))).collect();
            Ok(Matrix::from_fn(n1 * n0, np, |row, c| {
                let (a, b) = (row / n0, row % n0);
                let l = r.omega_prime[c];
                -sw1[a] * g[c][r.omega1[a]] * u[b][l]
            }))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(blocks.len() * n1 * n0);
    for b in &blocks {
        for i in 0..b.rows() {
            rows.push(b.row(i).to_vec());
        }
    }
    Matrix::from_rows(&rows)
}

/// Singular values of [`jacobian`]; a positive `σ_min` certifies local
/// injectivity of the data map at `q`.
pub fn identifiability<T: Real>(p: &InverseProblem<T>, q: &Potential<T>) -> Result<IdentifiabilityReport> {
    let jac = jacobian(p, q)?;
    let unknowns = jac.cols();
    let mut sv: Vec<f64> = singular_values(&jac).into_iter().map(Real::as_f64).collect();
    sv.resize(unknowns, 0.0);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let sigma_min = sv.last().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * sigma_max).count();
    Ok(IdentifiabilityReport { data_count: jac.rows(), unknowns, singular_values: sv, sigma_max, sigma_min, rank })
}

#[derive(Clone, Debug)]
pub struct DiscrepancyResult<T> {
    pub alpha: T,
    /// `√(2 J_data(q̂))` for the selected weight.
    pub residual_norm: f64,
    pub target: f64,
    pub result: ReconstructionResult<T>,
    /// `(α, residual)` for every weight tried.
    pub trace: Vec<(f64, f64)>,
}

/// Picks the largest `α` from `alphas` whose reconstruction has data
/// residual `≤ τ δ`, falling back to the smallest residual seen.
pub fn discrepancy_alpha<T: Real>(
    p: &InverseProblem<T>,
    noise_norm: T,
    alphas: &[T],
    tau: f64,
    q_init: &Potential<T>,
    opts: &ReconstructOptions,
) -> Result<DiscrepancyResult<T>> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("no regularization weights given".into()));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let target = tau * noise_norm.as_f64();
    let mut trace = Vec::new();
    let mut best: Option<DiscrepancyResult<T>> = None;
    for &alpha in &sorted {
        let pa = p.clone().with_alpha(alpha)?;
        let result = reconstruct(&pa, q_init, opts)?;
        let residual_norm = (2.0 * pa.data_misfit(&result.q_hat)?.as_f64()).sqrt();
        trace.push((alpha.as_f64(), residual_norm));
        let hit = residual_norm <= target;
        if hit || best.as_ref().is_none_or(|b| residual_norm < b.residual_norm) {
            best = Some(DiscrepancyResult { alpha, residual_norm, target, result, trace: Vec::new() });
        }
        if hit {
            break;
        }
    }
    let mut out = best.expect("at least one weight was tried");
    out.trace = trace;
    Ok(out)
}
