//! Eigendecompositions, spectral powers `A^s` and the perturbed operator
//! `A_q = A^s + q`.
//!
//! Operators are stored in two equivalent forms. The *operator form* acts on
//! nodal values and is self-adjoint for the mass inner product. The
//! *symmetric form* is its similarity transform `W^{1/2} · op · W^{-1/2}`,
//! which is an ordinary symmetric matrix and is what the eigensolver sees.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::{weighted_dot, DiscreteManifold, GridFunction};
use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigh, Matrix};
use crate::scalar::Real;

/// Relative tolerance for self-adjointness of an operator-form input.
pub const SELF_ADJOINT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigOptions {
    /// Eigen-residual tolerance relative to the spectral radius.
    pub tol_residual: f64,
    /// Tolerance on `max |ΨᵀWΨ − I|`.
    pub tol_orth: f64,
    pub max_sweeps: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { tol_residual: 1e-10, tol_orth: 1e-10, max_sweeps: 100 }
    }
}

/// Eigenpairs `(θ_k, ψ_k)` of a mass-self-adjoint operator, ascending, with
/// `ψ_k` orthonormal for the mass inner product.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition<T> {
    eigenvalues: Vec<T>,
    vectors: Matrix<T>,
    mass: Vec<T>,
    residual: T,
}

impl<T: Real> SpectralDecomposition<T> {
    /// Wraps precomputed eigenpairs without running any checks. `vectors`
    /// holds `ψ_k` in its columns.
    pub fn from_parts(eigenvalues: Vec<T>, vectors: Matrix<T>, mass: Vec<T>, residual: T) -> Self {
        Self { eigenvalues, vectors, mass, residual }
    }

    /// Same eigenvalues with a replacement eigenvector matrix.
    pub fn with_vectors(&self, vectors: Matrix<T>) -> Self {
        Self { vectors, ..self.clone() }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Eigenvectors in the columns.
    pub fn vectors(&self) -> &Matrix<T> {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> GridFunction<T> {
        GridFunction::new(self.vectors.column(k))
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    /// Largest mass-norm residual `‖op ψ_k − θ_k ψ_k‖`.
    pub fn residual(&self) -> T {
        self.residual
    }

    pub fn spectral_radius(&self) -> T {
        self.eigenvalues.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// `ΨᵀWΨ`.
    pub fn mass_gram(&self) -> Matrix<T> {
        self.vectors.transpose().matmul(&self.vectors.scale_rows(&self.mass))
    }

    /// `max |ΨᵀWΨ − I|`.
    pub fn orthonormality_defect(&self) -> T {
        self.mass_gram().sub(&Matrix::identity(self.len())).max_abs()
    }

    /// Euclidean-orthonormal vectors `W^{1/2}Ψ` of the symmetric form.
    pub fn symmetric_vectors(&self) -> Matrix<T> {
        let sw: Vec<T> = self.mass.iter().map(|w| w.sqrt()).collect();
        self.vectors.scale_rows(&sw)
    }

    /// `Σ f(θ_k) ψ_k ψ_kᵀ W` (operator form).
    pub fn apply_function(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let fv: Vec<T> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        self.vectors.scale_cols(&fv).matmul(&self.vectors.transpose()).scale_cols(&self.mass)
    }

    /// `Σ f(θ_k) v_k v_kᵀ` with `v_k = W^{1/2}ψ_k` (symmetric form).
    pub fn apply_function_symmetric(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let v = self.symmetric_vectors();
        let fv: Vec<T> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = v.scale_cols(&fv).matmul(&v.transpose());
        out.symmetrize();
        out
    }

    /// Coefficients `(f|ψ_k)` for all `k`.
    pub fn coefficients(&self, f: &[T]) -> Vec<T> {
        let wf: Vec<T> = f.iter().zip(&self.mass).map(|(&a, &w)| a * w).collect();
        self.vectors.tr_matvec(&wf)
    }
}

/// Decomposes a symmetric-form matrix; `mass` converts the vectors back to
/// the operator form.
pub fn eig_symmetric_form<T: Real>(mass: &[T], sym: &Matrix<T>, opts: &EigOptions) -> Result<SpectralDecomposition<T>> {
    let n = mass.len();
    if sym.rows() != n || sym.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: sym.rows() });
    }
    let defect = sym.symmetry_defect();
    if defect > T::lit(SELF_ADJOINT_TOL) {
        return Err(Error::NotSymmetric { defect: defect.as_f64() });
    }
    let e = jacobi_eigh(sym, opts.max_sweeps)?;
    let mut v = e.vectors;
    for k in 0..n {
        fix_sign(&mut v, k);
    }

    let mut residual = T::zero();
    for k in 0..n {
        let col = v.column(k);
        let av = sym.matvec(&col);
        let r: T = av.iter().zip(&col).map(|(&a, &x)| (a - e.values[k] * x).powi(2)).sum::<T>().sqrt();
        residual = residual.max(r);
    }
    let radius = e.values.iter().fold(T::zero(), |m, &l| m.max(l.abs()));
    let tol = T::lit(opts.tol_residual) * radius.max(T::min_positive_value());
    if residual > tol {
        return Err(Error::ResidualTooLarge { residual: residual.as_f64(), tol: tol.as_f64() });
    }
    let gram = v.transpose().matmul(&v);
    let orth = gram.sub(&Matrix::identity(n)).max_abs();
    if orth > T::lit(opts.tol_orth) {
        return Err(Error::NotOrthonormal { defect: orth.as_f64(), tol: opts.tol_orth });
    }

    let inv_sw: Vec<T> = mass.iter().map(|w| T::one() / w.sqrt()).collect();
    let vectors = v.scale_rows(&inv_sw);
    Ok(SpectralDecomposition { eigenvalues: e.values, vectors, mass: mass.to_vec(), residual })
}

/// Largest-magnitude entry of each column positive, first index on ties.
fn fix_sign<T: Real>(v: &mut Matrix<T>, k: usize) {
    let n = v.rows();
    let mut best = 0;
    let mut best_abs = T::zero();
    let tie = T::lit(1e-10);
    for i in 0..n {
        let a = v[(i, k)].abs();
        if a > best_abs * (T::one() + tie) {
            best = i;
            best_abs = a;
        }
    }
    if v[(best, k)] < T::zero() {
        for i in 0..n {
            v[(i, k)] = -v[(i, k)];
        }
    }
}

/// Full eigendecomposition of an operator-form matrix `op` that is
/// self-adjoint in the mass inner product of `m`.
pub fn eig_sym<T: Real>(m: &DiscreteManifold<T>, op: &Matrix<T>, opts: &EigOptions) -> Result<SpectralDecomposition<T>> {
    let n = m.len();
    if op.rows() != n || op.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: op.rows() });
    }
    let defect = op.scale_rows(m.mass()).symmetry_defect();
    if defect > T::lit(SELF_ADJOINT_TOL) {
        return Err(Error::NotSymmetric { defect: defect.as_f64() });
    }
    let sw: Vec<T> = m.mass().iter().map(|w| w.sqrt()).collect();
    let inv_sw: Vec<T> = sw.iter().map(|&w| T::one() / w).collect();
    let mut sym = op.scale_rows(&sw).scale_cols(&inv_sw);
    sym.symmetrize();
    eig_symmetric_form(m.mass(), &sym, opts)
}

/// Eigendecomposition of the Laplacian `W⁻¹K` of a manifold.
pub fn eig_base<T: Real>(m: &DiscreteManifold<T>, opts: &EigOptions) -> Result<SpectralDecomposition<T>> {
    eig_symmetric_form(m.mass(), &m.symmetrized(), opts)
}

fn check_exponent<T: Real>(s: T) -> Result<()> {
    if s > T::zero() && s <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(s.as_f64()))
    }
}

/// `A^s = Σ λ_k^s ψ_k ψ_kᵀ W` for `0 < s ≤ 1`.
pub fn frac_power<T: Real>(base: &SpectralDecomposition<T>, s: T) -> Result<Matrix<T>> {
    check_exponent(s)?;
    Ok(base.apply_function(|l| l.powf(s)))
}

/// Nonnegative potential bounded by `bound`.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential<T> {
    values: GridFunction<T>,
    bound: T,
    support: Option<Vec<usize>>,
}

impl<T: Real> Potential<T> {
    /// Checks `0 ≤ q_i ≤ bound` for every node.
    pub fn new(values: Vec<T>, bound: T) -> Result<Self> {
        if !(bound >= T::zero()) || !bound.is_finite() {
            return Err(Error::InvalidPotential(format!("bound {bound} must be finite and nonnegative")));
        }
        if let Some((i, q)) = values.iter().enumerate().find(|(_, &q)| !(q >= T::zero() && q <= bound)) {
            return Err(Error::InvalidPotential(format!("q[{i}] = {q} outside [0, {bound}]")));
        }
        Ok(Self { values: GridFunction::new(values), bound, support: None })
    }

    /// Skips the range check. Only meant for exercising failure paths.
    pub fn unchecked(values: Vec<T>, bound: T) -> Self {
        Self { values: GridFunction::new(values), bound, support: None }
    }

    pub fn zero(n: usize) -> Self {
        Self { values: GridFunction::zeros(n), bound: T::zero(), support: None }
    }

    pub fn constant(n: usize, c: T, bound: T) -> Result<Self> {
        Self::new(vec![c; n], bound)
    }

    /// Records the node set that differences to a reference potential are
    /// confined to.
    pub fn with_support(mut self, support: Vec<usize>) -> Self {
        self.support = Some(support);
        self
    }

    pub fn values(&self) -> &GridFunction<T> {
        &self.values
    }

    pub fn bound(&self) -> T {
        self.bound
    }

    pub fn support(&self) -> Option<&[usize]> {
        self.support.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&q| q >= T::zero())
    }
}

/// The fractional Schrödinger operator `A^s + q` built over a base
/// decomposition.
///
/// The spectral powers are shared through `Arc`, so swapping the potential
/// with [`FracOperator::with_potential`] costs nothing.
#[derive(Clone, Debug)]
pub struct FracOperator<T> {
    s: T,
    base: Arc<SpectralDecomposition<T>>,
    potential: Potential<T>,
    power: Arc<Matrix<T>>,
    half_power: Arc<Matrix<T>>,
    power_symmetric: Arc<Matrix<T>>,
    dimension: usize,
}

impl<T: Real> FracOperator<T> {
    /// Decomposes the Laplacian of `m` and builds `A^s + q` over it,
    /// inheriting the mesh dimension.
    pub fn from_manifold(m: &DiscreteManifold<T>, s: T, potential: Potential<T>, opts: &EigOptions) -> Result<Self> {
        let base = Arc::new(eig_base(m, opts)?);
        Ok(Self::new(base, s, potential)?.with_dimension(m.dimension()))
    }

    /// Dimension is 1 unless set with [`FracOperator::with_dimension`].
    pub fn new(base: Arc<SpectralDecomposition<T>>, s: T, potential: Potential<T>) -> Result<Self> {
        check_exponent(s)?;
        if base.eigenvalues().iter().any(|&l| !(l > T::zero())) {
            return Err(Error::InvalidArgument("base operator must be positive definite".into()));
        }
        if potential.len() != base.len() {
            return Err(Error::DimensionMismatch { expected: base.len(), got: potential.len() });
        }
        let half = s * T::lit(0.5);
        let power = Arc::new(base.apply_function(|l| l.powf(s)));
        let half_power = Arc::new(base.apply_function(|l| l.powf(half)));
        let power_symmetric = Arc::new(base.apply_function_symmetric(|l| l.powf(s)));
        Ok(Self { s, base, potential, power, half_power, power_symmetric, dimension: 1 })
    }

    /// Sets the dimension used in the spectral weights `k^{-2s/n}`.
    pub fn with_dimension(mut self, dimension: usize) -> Self {
        self.dimension = dimension.max(1);
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn with_potential(&self, potential: Potential<T>) -> Result<Self> {
        if potential.len() != self.base.len() {
            return Err(Error::DimensionMismatch { expected: self.base.len(), got: potential.len() });
        }
        Ok(Self { potential, ..self.clone() })
    }

    pub fn s(&self) -> T {
        self.s
    }

    pub fn base(&self) -> &SpectralDecomposition<T> {
        &self.base
    }

    pub fn base_arc(&self) -> &Arc<SpectralDecomposition<T>> {
        &self.base
    }

    pub fn potential(&self) -> &Potential<T> {
        &self.potential
    }

    pub fn mass(&self) -> &[T] {
        self.base.mass()
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// `A^s` in operator form.
    pub fn power(&self) -> &Matrix<T> {
        &self.power
    }

    /// `A^{s/2}` in operator form.
    pub fn half_power(&self) -> &Matrix<T> {
        &self.half_power
    }

    /// `λ_k^s` for every base eigenvalue.
    pub fn powered_eigenvalues(&self) -> Vec<T> {
        self.base.eigenvalues().iter().map(|&l| l.powf(self.s)).collect()
    }

    /// `W^{1/2}(A^s + q)W^{-1/2}`.
    pub fn aq_symmetric(&self) -> Matrix<T> {
        let mut m = (*self.power_symmetric).clone();
        m.add_diagonal(self.potential.values());
        m
    }

    /// `(A^{s/2}u | A^{s/2}v) + (qu | v)`.
    pub fn bilinear(&self, u: &[T], v: &[T]) -> T {
        let au = self.half_power.matvec(u);
        let av = self.half_power.matvec(v);
        let w = self.mass();
        weighted_dot(w, &au, &av) + weighted_dot(w, &self.potential.values().iter().zip(u).map(|(&q, &x)| q * x).collect::<Vec<_>>(), v)
    }
}

/// `A^s + diag(q)` in operator form.
pub fn assemble_aq<T: Real>(frac: &FracOperator<T>) -> Matrix<T> {
    let mut m = frac.power().clone();
    m.add_diagonal(frac.potential().values());
    m
}

/// Eigenpairs `(μ_k, φ_k)` of `A^s + q`.
pub fn eig_aq<T: Real>(frac: &FracOperator<T>, opts: &EigOptions) -> Result<SpectralDecomposition<T>> {
    eig_symmetric_form(frac.mass(), &frac.aq_symmetric(), opts)
}

/// Smallest slack of `λ_k^s ≤ μ_k ≤ λ_k^s + m` over all `k`; negative values
/// are violations.
pub fn sandwich_slack<T: Real>(frac: &FracOperator<T>, perturbed: &SpectralDecomposition<T>) -> T {
    let m = frac.potential().bound();
    frac.powered_eigenvalues()
        .iter()
        .zip(perturbed.eigenvalues())
        .fold(T::infinity(), |acc, (&l, &mu)| acc.min(mu - l).min(l + m - mu))
}

#[derive(Clone, Debug)]
pub struct CoercivityReport<T> {
    pub trials: usize,
    /// Smallest `b_q(u,u) − ‖A^{s/2}u‖²` relative to `b_q(u,u)`.
    pub min_slack: T,
    pub passed: bool,
    /// First vector violating the inequality.
    pub witness: Option<GridFunction<T>>,
}

/// Checks `b_q(u,u) ≥ ‖A^{s/2}u‖²` on `trials` Gaussian vectors and on every
/// node indicator.
pub fn coercivity_check<T: Real, R: Rng + ?Sized>(frac: &FracOperator<T>, trials: usize, rng: &mut R) -> Result<CoercivityReport<T>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("coercivity check needs at least one trial".into()));
    }
    let n = frac.len();
    let tol = T::lit(1e-12);
    let candidates = (0..trials)
        .map(|_| GridFunction::new((0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()))
        .collect::<Vec<_>>()
        .into_iter()
        .chain((0..n).map(|j| GridFunction::indicator(n, j)));

    let mut min_slack = T::infinity();
    let mut witness = None;
    for u in candidates {
        let b = frac.bilinear(&u, &u);
        let au = frac.half_power().matvec(&u);
        let energy = weighted_dot(frac.mass(), &au, &au);
        let scale = b.abs().max(energy);
        let slack = (b - energy) / scale;
        if slack < min_slack {
            min_slack = slack;
        }
        if b < energy - tol * scale && witness.is_none() {
            witness = Some(u);
        }
    }
    Ok(CoercivityReport { trials, min_slack, passed: witness.is_none(), witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_interval, build_rect};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_mass(k: Matrix<f64>) -> DiscreteManifold<f64> {
        let n = k.rows();
        DiscreteManifold::new(vec![1.0; n], k, 1).unwrap()
    }

    fn interval_frac(n: usize, s: f64) -> FracOperator<f64> {
        let m = build_interval(n, 1.0).unwrap();
        let base = Arc::new(eig_base(&m, &EigOptions::default()).unwrap());
        FracOperator::new(base, s, Potential::zero(n)).unwrap()
    }

    #[test]
    fn two_by_two() {
        let k = Matrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let m = unit_mass(k.clone());
        let d = eig_sym(&m, &k, &EigOptions::default()).unwrap();
        assert!((d.eigenvalues()[0] - 1.0).abs() < 1e-14);
        assert!((d.eigenvalues()[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn interval_matches_discrete_sine_formula() {
        let (n, len) = (50, 1.0);
        let m = build_interval(n, len).unwrap();
        let d = eig_sym(&m, &m.operator(), &EigOptions::default()).unwrap();
        let h = len / (n + 1) as f64;
        for (k, &l) in d.eigenvalues().iter().enumerate() {
            let x = ((k + 1) as f64 * std::f64::consts::PI * h / (2.0 * len)).sin();
            let exact = 4.0 / (h * h) * x * x;
            assert!((l - exact).abs() <= 1e-9 * exact, "k={k}: {l} vs {exact}");
        }
        assert!(d.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn identity_operator() {
        let m = DiscreteManifold::new(vec![0.5, 2.0, 1.0], Matrix::<f64>::identity(3), 1).unwrap();
        let d = eig_sym(&m, &Matrix::identity(3), &EigOptions::default()).unwrap();
        assert!(d.eigenvalues().iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert!(d.orthonormality_defect() < 1e-14);
    }

    #[test]
    fn rejects_non_self_adjoint() {
        let m = unit_mass(Matrix::identity(2));
        let op = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(eig_sym(&m, &op, &EigOptions::default()), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn cap_on_sweeps_reports_non_convergence() {
        let m = build_interval(20, 1.0).unwrap();
        let opts = EigOptions { max_sweeps: 1, ..EigOptions::default() };
        assert!(matches!(eig_base(&m, &opts), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn power_one_recovers_operator() {
        let m = build_interval(30, 2.0).unwrap();
        let base = eig_base(&m, &EigOptions::default()).unwrap();
        let a = frac_power(&base, 1.0).unwrap();
        let op = m.operator();
        assert!(a.sub(&op).max_abs() <= 1e-10 * op.max_abs());
        let half = frac_power(&base, 0.5).unwrap();
        assert!(half.matmul(&half).sub(&op).max_abs() <= 1e-9 * op.max_abs());
    }

    #[test]
    fn power_of_diagonal() {
        let m = unit_mass(Matrix::from_diagonal(&[4.0, 9.0]));
        let base = eig_base(&m, &EigOptions::default()).unwrap();
        let h = frac_power(&base, 0.5).unwrap();
        assert!(h.sub(&Matrix::from_diagonal(&[2.0, 3.0])).max_abs() < 1e-14);
        assert!(matches!(frac_power(&base, 1.5), Err(Error::InvalidExponent(_))));
        assert!(frac_power(&base, 0.0).is_err());
    }

    #[test]
    fn half_power_squares_to_power() {
        let f = interval_frac(25, 0.6);
        let sq = f.half_power().matmul(f.half_power());
        assert!(sq.sub(f.power()).max_abs() <= 1e-10 * f.power().max_abs());
        assert!(f.power().scale_rows(f.mass()).symmetry_defect() < 1e-12);
    }

    #[test]
    fn zero_potential_gives_powered_spectrum() {
        let f = interval_frac(20, 0.5);
        assert_eq!(assemble_aq(&f), *f.power());
        let d = eig_aq(&f, &EigOptions::default()).unwrap();
        for (mu, l) in d.eigenvalues().iter().zip(f.powered_eigenvalues()) {
            assert!((mu - l).abs() <= 1e-10 * l);
        }
        // Vectors agree with the base ones after the shared sign convention.
        let dot = d.mass_gram();
        assert!(dot.sub(&Matrix::identity(20)).max_abs() < 1e-10);
        for k in 0..20 {
            let a = d.vector(k);
            let b = f.base().vector(k);
            let c = weighted_dot(f.mass(), &a, &b).abs();
            assert!((c - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_shift() {
        let f = interval_frac(20, 0.75);
        let g = f.with_potential(Potential::constant(20, 0.7, 1.0).unwrap()).unwrap();
        let d = eig_aq(&g, &EigOptions::default()).unwrap();
        for (mu, l) in d.eigenvalues().iter().zip(f.powered_eigenvalues()) {
            assert!((mu - (l + 0.7)).abs() < 1e-9);
        }
    }

    #[test]
    fn random_potential_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = interval_frac(24, 0.5);
        let q: Vec<f64> = (0..24).map(|_| rng.random_range(0.0..5.0)).collect();
        let g = f.with_potential(Potential::new(q, 5.0).unwrap()).unwrap();
        assert!(assemble_aq(&g).scale_rows(g.mass()).symmetry_defect() < 1e-12);
        let d = eig_aq(&g, &EigOptions::default()).unwrap();
        assert!(sandwich_slack(&g, &d) >= -1e-9);
        assert!(d.eigenvalues()[0] >= f.powered_eigenvalues()[0] - 1e-9);
    }

    #[test]
    fn single_node_first_order_perturbation() {
        let n = 30;
        let f = interval_frac(n, 0.5);
        let j = 11;
        let eps = 1e-3;
        let mut q = vec![0.0; n];
        q[j] = eps;
        let g = f.with_potential(Potential::new(q, 1.0).unwrap()).unwrap();
        let d = eig_aq(&g, &EigOptions::default()).unwrap();
        let psi = f.base().vector(0);
        let predicted = eps * f.mass()[j] * psi[j] * psi[j];
        let actual = d.eigenvalues()[0] - f.powered_eigenvalues()[0];
        assert!((actual - predicted).abs() <= 0.1 * predicted, "{actual} vs {predicted}");
    }

    #[test]
    fn potential_validation() {
        assert!(Potential::new(vec![0.0, 2.0], 1.0).is_err());
        assert!(Potential::new(vec![-0.1, 0.5], 1.0).is_err());
        assert!(Potential::new(vec![f64::NAN], 1.0).is_err());
        let p = Potential::new(vec![0.0, 1.0], 1.0).unwrap().with_support(vec![1]);
        assert_eq!(p.support(), Some(&[1usize][..]));
    }

    #[test]
    fn coercivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = interval_frac(16, 0.5);
        let r = coercivity_check(&f, 20, &mut rng).unwrap();
        assert!(r.passed);
        assert!(r.min_slack.abs() < 1e-12);

        let q: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..3.0)).collect();
        let g = f.with_potential(Potential::new(q, 3.0).unwrap()).unwrap();
        let r = coercivity_check(&g, 100, &mut rng).unwrap();
        assert!(r.passed && r.min_slack >= 0.0);

        let mut q = vec![0.5; 16];
        q[7] = -0.5;
        let bad = f.with_potential(Potential::unchecked(q, 1.0)).unwrap();
        let r = coercivity_check(&bad, 5, &mut rng).unwrap();
        assert!(!r.passed);
        let w = r.witness.unwrap();
        assert!(w[7] != 0.0);
        assert!(coercivity_check(&f, 0, &mut rng).is_err());
    }

    #[test]
    fn weyl_growth_interval() {
        let (n, len) = (64, 1.0);
        let d = eig_base(&build_interval(n, len).unwrap(), &EigOptions::default()).unwrap();
        let c = (std::f64::consts::PI / len).powi(2);
        for k in 1..=n / 4 {
            let ratio = d.eigenvalues()[k - 1] / (k * k) as f64 / c;
            assert!((0.4..=1.1).contains(&ratio), "k={k} ratio={ratio}");
        }
    }

    #[test]
    fn weyl_growth_rect() {
        let d = eig_base(&build_rect(12, 12, 1.0, 1.0).unwrap(), &EigOptions::default()).unwrap();
        let ratios: Vec<f64> = (1..=36).map(|k| d.eigenvalues()[k - 1] / k as f64).collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(hi / lo < 4.0, "ratio spread {lo}..{hi}");
    }
}
