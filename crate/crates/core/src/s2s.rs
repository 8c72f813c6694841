//! Source-to-solution maps `f ↦ (A_q + β)⁻¹f|_{Ω₁}` for sources on `Ω₀`,
//! the three-term splitting of their difference for two potentials, the
//! spectral distance between two potentials and the bound it gives, plus a
//! rank test and an orthogonality identity for equal data.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::domain::{restricted_norm, GridFunction, RegionConfig};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, weighted_operator_norm, Matrix};
use crate::resolvent::ResolventOp;
use crate::scalar::Real;
use crate::spectral::{eig_aq, EigOptions, FracOperator, SpectralDecomposition};
use crate::specdata::{align_gauge, is_gauge_aligned, InternalSpectralData};

/// Relative singular-value cutoff of the density test.
pub const RANK_TOL: f64 = 1e-10;

/// `A^s + q` together with its eigenpairs.
#[derive(Clone, Debug)]
pub struct DiagonalizedOperator<T> {
    pub frac: FracOperator<T>,
    pub spectrum: Arc<SpectralDecomposition<T>>,
}

impl<T: Real> DiagonalizedOperator<T> {
    pub fn new(frac: FracOperator<T>, opts: &EigOptions) -> Result<Self> {
        let spectrum = Arc::new(eig_aq(&frac, opts)?);
        Ok(Self { frac, spectrum })
    }

    /// Copy of `self` whose eigenvectors are rotated to match `reference`.
    pub fn aligned_to(&self, reference: &Self, cluster_tol: f64) -> Result<Self> {
        let spectrum = Arc::new(align_gauge(&reference.spectrum, &self.spectrum, cluster_tol)?);
        Ok(Self { frac: self.frac.clone(), spectrum })
    }

    pub fn eigenvalues(&self) -> &[T] {
        self.spectrum.eigenvalues()
    }
}

/// Matrix of `f ↦ R_q(−β)f|_{Ω₁}` on the canonical sources of `Ω₀`.
///
/// Column `j` is the solution for the unit source at node `omega0[j]`, so
/// entry `(i, j)` equals `[(A_q + β)⁻¹]_{omega1[i], omega0[j]}`.
#[derive(Clone, Debug)]
pub struct SourceToSolutionOp<T> {
    matrix: Matrix<T>,
    beta: T,
    omega0: Vec<usize>,
    omega1: Vec<usize>,
    mass0: Vec<T>,
    mass1: Vec<T>,
}

impl<T: Real> SourceToSolutionOp<T> {
    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn omega0(&self) -> &[usize] {
        &self.omega0
    }

    pub fn omega1(&self) -> &[usize] {
        &self.omega1
    }

    /// Norm from `L²(Ω₀)` to `L²(Ω₁)` with mass weights.
    pub fn operator_norm(&self) -> T {
        weighted_operator_norm(&self.matrix, &self.mass1, &self.mass0)
    }

    /// Applies the map to source values given on `omega0`.
    pub fn apply(&self, f: &[T]) -> Result<Vec<T>> {
        if f.len() != self.omega0.len() {
            return Err(Error::DimensionMismatch { expected: self.omega0.len(), got: f.len() });
        }
        Ok(self.matrix.matvec(f))
    }

    /// Relative asymmetry of `M W₀⁻¹`, which vanishes when `Ω₀ = Ω₁`.
    pub fn reciprocity_defect(&self) -> Option<T> {
        if self.omega0 != self.omega1 {
            return None;
        }
        let inv: Vec<T> = self.mass0.iter().map(|&w| T::one() / w).collect();
        Some(self.matrix.scale_cols(&inv).symmetry_defect())
    }

    /// `(Σ₁ − Σ₂)` with norms in the same weighted spaces.
    pub fn difference_norm(&self, other: &Self) -> T {
        weighted_operator_norm(&self.matrix.sub(&other.matrix), &self.mass1, &self.mass0)
    }
}

/// Assembles the source-to-solution matrix at shift `β ≥ 0`, solving for the
/// source columns in parallel.
pub fn s2s_matrix<T: Real>(frac: &FracOperator<T>, r: &RegionConfig, beta: T) -> Result<SourceToSolutionOp<T>> {
    let n = frac.len();
    check_range(r, n)?;
    let res = ResolventOp::negative_shift(frac, beta)?;
    let cols: Vec<Vec<T>> = r
        .omega0
        .par_iter()
        .map(|&j| {
            let u = res.resolve_unchecked(&GridFunction::<T>::indicator(n, j));
            r.omega1.iter().map(|&i| u[i]).collect()
        })
        .collect();
    let mut matrix = Matrix::zeros(r.omega1.len(), r.omega0.len());
    for (j, c) in cols.iter().enumerate() {
        matrix.set_column(j, c);
    }
    let w = frac.mass();
    Ok(SourceToSolutionOp {
        matrix,
        beta,
        omega0: r.omega0.clone(),
        omega1: r.omega1.clone(),
        mass0: r.omega0.iter().map(|&i| w[i]).collect(),
        mass1: r.omega1.iter().map(|&i| w[i]).collect(),
    })
}

/// `Σ_k (μ_k + β)⁻¹ φ_k(i) φ_k(j) w_j` for `i ∈ omega1`, `j ∈ omega0`, using
/// only the internal data. Both sets must lie in the observation set.
pub fn s2s_from_spectral_data<T: Real>(d: &InternalSpectralData<T>, omega0: &[usize], omega1: &[usize], beta: T) -> Result<Matrix<T>> {
    let locate = |i: &usize| {
        d.omega()
            .binary_search(i)
            .map_err(|_| Error::InvalidRegion(format!("node {i} is outside the observation set")))
    };
    let p0 = omega0.iter().map(locate).collect::<Result<Vec<_>>>()?;
    let p1 = omega1.iter().map(locate).collect::<Result<Vec<_>>>()?;
    let v = d.restricted_vectors();
    let w = d.omega_mass();
    let inv: Vec<T> = d.eigenvalues().iter().map(|&mu| T::one() / (mu + beta)).collect();
    Ok(Matrix::from_fn(p1.len(), p0.len(), |a, b| {
        (0..inv.len()).map(|k| inv[k] * v[(p1[a], k)] * v[(p0[b], k)]).sum::<T>() * w[p0[b]]
    }))
}

fn check_range(r: &RegionConfig, n: usize) -> Result<()> {
    match r.omega0.iter().chain(&r.omega1).chain(&r.omega).find(|&&i| i >= n) {
        Some(&i) => Err(Error::InvalidRegion(format!("node {i} out of range for {n} nodes"))),
        None => Ok(()),
    }
}

fn require_aligned<T: Real>(a: &DiagonalizedOperator<T>, b: &DiagonalizedOperator<T>, r: &RegionConfig) -> Result<()> {
    if a.spectrum.len() != b.spectrum.len() {
        return Err(Error::DimensionMismatch { expected: a.spectrum.len(), got: b.spectrum.len() });
    }
    check_range(r, a.spectrum.len())?;
    if !is_gauge_aligned(&a.spectrum, &b.spectrum) {
        return Err(Error::UnalignedGauge("cross Gram matrix has negative diagonal entries".into()));
    }
    Ok(())
}

/// The three terms of `Σ₁f − Σ₂f` at `β = 0`, all restricted to `Ω₁`.
///
/// With `cⱼ = (f|φ_k^{(j)})`:
/// `I₁ = Σ (1/μ_k⁽¹⁾ − 1/μ_k⁽²⁾) c₁ φ_k⁽¹⁾`,
/// `I₂ = Σ (1/μ_k⁽²⁾)(c₁ − c₂) φ_k⁽¹⁾` and
/// `I₃ = Σ (1/μ_k⁽²⁾) c₂ (φ_k⁽¹⁾ − φ_k⁽²⁾)`.
#[derive(Clone, Debug)]
pub struct DifferenceTerms<T> {
    pub i1: Vec<T>,
    pub i2: Vec<T>,
    pub i3: Vec<T>,
    /// `Σ₁f − Σ₂f` by direct solves.
    pub direct: Vec<T>,
}

impl<T: Real> DifferenceTerms<T> {
    /// `‖direct − (I₁ + I₂ + I₃)‖` on `Ω₁`.
    pub fn identity_defect(&self, mass1: &[T]) -> T {
        let r: Vec<T> = (0..self.direct.len()).map(|i| self.direct[i] - self.i1[i] - self.i2[i] - self.i3[i]).collect();
        norm_on(mass1, &r)
    }
}

fn norm_on<T: Real>(w: &[T], v: &[T]) -> T {
    w.iter().zip(v).map(|(&w, &x)| w * x * x).sum::<T>().sqrt()
}

/// Splits `Σ₁f − Σ₂f` for a source `f` supported in `Ω₀`.
///
/// The eigenvectors of `b` must be aligned with those of `a`
/// ([`DiagonalizedOperator::aligned_to`]).
pub fn difference_decomposition<T: Real>(
    a: &DiagonalizedOperator<T>,
    b: &DiagonalizedOperator<T>,
    r: &RegionConfig,
    f: &GridFunction<T>,
) -> Result<DifferenceTerms<T>> {
    require_aligned(a, b, r)?;
    let n = a.frac.len();
    if f.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.len() });
    }
    if !f.is_supported_in(&r.omega0) {
        return Err(Error::InvalidArgument("source must vanish outside omega0".into()));
    }
    let (s1, s2) = (&a.spectrum, &b.spectrum);
    let c1 = s1.coefficients(f);
    let c2 = s2.coefficients(f);
    let (v1, v2) = (s1.vectors(), s2.vectors());
    let mut i1 = vec![T::zero(); r.omega1.len()];
    let mut i2 = i1.clone();
    let mut i3 = i1.clone();
    for k in 0..n {
        let (m1, m2) = (s1.eigenvalues()[k], s2.eigenvalues()[k]);
        let w1 = (T::one() / m1 - T::one() / m2) * c1[k];
        let w2 = (c1[k] - c2[k]) / m2;
        let w3 = c2[k] / m2;
        for (row, &i) in r.omega1.iter().enumerate() {
            i1[row] += w1 * v1[(i, k)];
            i2[row] += w2 * v1[(i, k)];
            i3[row] += w3 * (v1[(i, k)] - v2[(i, k)]);
        }
    }
    let u1 = ResolventOp::negative_shift(&a.frac, T::zero())?.resolve_unchecked(f);
    let u2 = ResolventOp::negative_shift(&b.frac, T::zero())?.resolve_unchecked(f);
    let direct = r.omega1.iter().map(|&i| u1[i] - u2[i]).collect();
    Ok(DifferenceTerms { i1, i2, i3, direct })
}

/// Spectral constants and weighted sums controlling the three terms.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceBounds {
    /// `sup_k k^{4s/n} / (μ_k⁽¹⁾ μ_k⁽²⁾)`.
    pub c1: f64,
    /// `sup_k k^{2s/n} / μ_k⁽²⁾`.
    pub c2: f64,
    /// `Σ k^{-4s/n} |μ_k⁽¹⁾ − μ_k⁽²⁾|`.
    pub eigenvalue_sum: f64,
    /// `Σ k^{-2s/n} ‖φ_k⁽¹⁾ − φ_k⁽²⁾‖_{L²(Ω₀)}`.
    pub vector_sum_omega0: f64,
    /// Same over `Ω₁`.
    pub vector_sum_omega1: f64,
}

impl DifferenceBounds {
    /// Bounds on `‖I₁‖, ‖I₂‖, ‖I₃‖` for a source of norm `source_norm`.
    pub fn term_bounds(&self, source_norm: f64) -> [f64; 3] {
        [
            self.c1 * self.eigenvalue_sum * source_norm,
            self.c2 * self.vector_sum_omega0 * source_norm,
            self.c2 * self.vector_sum_omega1 * source_norm,
        ]
    }
}

fn weight_exponents<T: Real>(frac: &FracOperator<T>) -> (f64, f64) {
    let s = frac.s().as_f64();
    let n = frac.dimension() as f64;
    (4.0 * s / n, 2.0 * s / n)
}

pub fn difference_bounds<T: Real>(a: &DiagonalizedOperator<T>, b: &DiagonalizedOperator<T>, r: &RegionConfig) -> Result<DifferenceBounds> {
    require_aligned(a, b, r)?;
    let (e4, e2) = weight_exponents(&a.frac);
    let w = a.frac.mass();
    let (v1, v2) = (a.spectrum.vectors(), b.spectrum.vectors());
    let mut out = DifferenceBounds { c1: 0.0, c2: 0.0, eigenvalue_sum: 0.0, vector_sum_omega0: 0.0, vector_sum_omega1: 0.0 };
    for k in 0..a.spectrum.len() {
        let kk = (k + 1) as f64;
        let m1 = a.eigenvalues()[k].as_f64();
        let m2 = b.eigenvalues()[k].as_f64();
        out.c1 = out.c1.max(kk.powf(e4) / (m1 * m2));
        out.c2 = out.c2.max(kk.powf(e2) / m2);
        out.eigenvalue_sum += kk.powf(-e4) * (m1 - m2).abs();
        let diff: Vec<T> = (0..v1.rows()).map(|i| v1[(i, k)] - v2[(i, k)]).collect();
        out.vector_sum_omega0 += kk.powf(-e2) * restricted_norm(w, &diff, &r.omega0).as_f64();
        out.vector_sum_omega1 += kk.powf(-e2) * restricted_norm(w, &diff, &r.omega1).as_f64();
    }
    Ok(out)
}

/// Result of checking the splitting and its term bounds for one source.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionReport {
    pub source_norm: f64,
    /// `‖Σ₁f − Σ₂f − (I₁+I₂+I₃)‖ / ‖f‖`.
    pub relative_defect: f64,
    pub term_norms: [f64; 3],
    pub term_bounds: [f64; 3],
    pub passed: bool,
}

/// Checks the splitting identity to `1e-9 ‖f‖` and each term against its
/// bound.
pub fn decomposition_check<T: Real>(
    a: &DiagonalizedOperator<T>,
    b: &DiagonalizedOperator<T>,
    r: &RegionConfig,
    f: &GridFunction<T>,
) -> Result<DecompositionReport> {
    let terms = difference_decomposition(a, b, r, f)?;
    let bounds = difference_bounds(a, b, r)?;
    let w = a.frac.mass();
    let mass1: Vec<T> = r.omega1.iter().map(|&i| w[i]).collect();
    let source_norm = restricted_norm(w, f, &r.omega0).as_f64();
    let relative_defect = terms.identity_defect(&mass1).as_f64() / source_norm;
    let term_norms = [norm_on(&mass1, &terms.i1), norm_on(&mass1, &terms.i2), norm_on(&mass1, &terms.i3)].map(|x| x.as_f64());
    let term_bounds = bounds.term_bounds(source_norm);
    let slack = 1e-12 * source_norm;
    let bounded = term_norms.iter().zip(&term_bounds).all(|(&t, &bd)| t <= bd * (1.0 + 1e-9) + slack);
    Ok(DecompositionReport { source_norm, relative_defect, term_norms, term_bounds, passed: relative_defect <= 1e-9 && bounded })
}

/// One summand of the spectral distance.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceTerm {
    pub k: usize,
    /// `k^{-4s/n} |μ_k⁽¹⁾ − μ_k⁽²⁾|`.
    pub eigenvalue_term: f64,
    /// `k^{-2s/n} ‖φ_k⁽¹⁾ − φ_k⁽²⁾‖_{L²(Ω)}`.
    pub vector_term: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDistance {
    pub value: f64,
    pub terms: Vec<DistanceTerm>,
}

/// `Σ_k k^{-4s/n}|μ_k⁽¹⁾ − μ_k⁽²⁾| + k^{-2s/n}‖φ_k⁽¹⁾ − φ_k⁽²⁾‖_{L²(Ω)}`
/// over all discrete modes.
pub fn spectral_distance<T: Real>(a: &DiagonalizedOperator<T>, b: &DiagonalizedOperator<T>, r: &RegionConfig) -> Result<SpectralDistance> {
    require_aligned(a, b, r)?;
    let (e4, e2) = weight_exponents(&a.frac);
    let w = a.frac.mass();
    let (v1, v2) = (a.spectrum.vectors(), b.spectrum.vectors());
    let terms: Vec<DistanceTerm> = (0..a.spectrum.len())
        .map(|k| {
            let kk = (k + 1) as f64;
            let diff: Vec<T> = r.omega.iter().map(|&i| v1[(i, k)] - v2[(i, k)]).collect();
            let wo: Vec<T> = r.omega.iter().map(|&i| w[i]).collect();
            DistanceTerm {
                k: k + 1,
                eigenvalue_term: kk.powf(-e4) * (a.eigenvalues()[k] - b.eigenvalues()[k]).abs().as_f64(),
                vector_term: kk.powf(-e2) * norm_on(&wo, &diff).as_f64(),
            }
        })
        .collect();
    let value = terms.iter().map(|t| t.eigenvalue_term + t.vector_term).sum();
    Ok(SpectralDistance { value, terms })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    /// `‖Σ₁ − Σ₂‖` from `L²(Ω₀)` to `L²(Ω₁)`.
    pub lhs: f64,
    pub distance: f64,
    /// `max(C₁, C₂)` from the two spectra.
    pub constant: f64,
    /// `lhs / (constant · distance)`, zero when both vanish.
    pub ratio: f64,
    pub passed: bool,
}

/// Checks `‖Σ₁ − Σ₂‖ ≤ C d(q₁, q₂)` with the spectral constant
/// `C = sup_k max(k^{4s/n}/(μ_k⁽¹⁾μ_k⁽²⁾), k^{2s/n}/μ_k⁽²⁾)`.
pub fn stability_bound_check<T: Real>(a: &DiagonalizedOperator<T>, b: &DiagonalizedOperator<T>, r: &RegionConfig) -> Result<StabilityReport> {
    let d = spectral_distance(a, b, r)?;
    let bounds = difference_bounds(a, b, r)?;
    let s1 = s2s_matrix(&a.frac, r, T::zero())?;
    let s2 = s2s_matrix(&b.frac, r, T::zero())?;
    let lhs = s1.difference_norm(&s2).as_f64();
    let constant = bounds.c1.max(bounds.c2);
    let rhs = constant * d.value;
    let (ratio, passed) = if d.value == 0.0 {
        (0.0, lhs <= 1e-10)
    } else {
        (lhs / rhs, lhs <= rhs)
    };
    Ok(StabilityReport { lhs, distance: d.value, constant, ratio, passed })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityReport {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    /// Weighted singular values, descending.
    pub singular_values: Vec<f64>,
    /// `rank == |ω₁|`.
    pub full_rank: bool,
}

/// Numerical rank of the restricted resolvent `ω₀ → ω₁` with cutoff
/// `1e-10 σ_max`.
pub fn density_rank_test<T: Real>(frac: &FracOperator<T>, omega0: &[usize], omega1: &[usize]) -> Result<DensityReport> {
    let r = RegionConfig::new(omega0.to_vec(), omega1.to_vec(), Vec::new());
    if r.omega0.is_empty() || r.omega1.is_empty() {
        return Err(Error::InvalidRegion("source and observation sets must be nonempty".into()));
    }
    if r.omega0.iter().all(|i| r.omega1.binary_search(i).is_ok()) {
        return Err(Error::InvalidRegion("omega0 \\ omega1 is empty".into()));
    }
    let op = s2s_matrix(frac, &r, T::zero())?;
    let sw1: Vec<T> = op.mass1.iter().map(|w| w.sqrt()).collect();
    let isw0: Vec<T> = op.mass0.iter().map(|w| T::one() / w.sqrt()).collect();
    let sv: Vec<f64> = singular_values(&op.matrix.scale_rows(&sw1).scale_cols(&isw0)).into_iter().map(Real::as_f64).collect();
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * smax).count();
    Ok(DensityReport { rows: r.omega1.len(), cols: r.omega0.len(), rank, singular_values: sv, full_rank: rank == r.omega1.len() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalityReport {
    /// `max |Σ₁ − Σ₂| / max |Σ₁|` over `β = 0`.
    pub data_gap: f64,
    /// Whether the data agree to `1e-9`, the premise of the identity.
    pub applicable: bool,
    pub trials: usize,
    /// Largest `|((q₂−q₁)R₂f | R₁g)|` relative to its natural scale.
    pub max_pairing: f64,
    pub mean_pairing: f64,
    /// `Some(max_pairing ≤ 1e-8)` when applicable.
    pub holds: Option<bool>,
}

/// Evaluates `((q₂ − q₁) R_{q₂}f | R_{q₁}g)` for random `f` on `Ω₀` and `g`
/// on `Ω₁`. The pairing must vanish when the two source-to-solution maps
/// agree; otherwise its magnitude is reported as a diagnostic.
pub fn orthogonality_identity_check<T: Real, R: Rng + ?Sized>(
    f1: &FracOperator<T>,
    f2: &FracOperator<T>,
    r: &RegionConfig,
    trials: usize,
    rng: &mut R,
) -> Result<OrthogonalityReport> {
    let s1 = s2s_matrix(f1, r, T::zero())?;
    let s2 = s2s_matrix(f2, r, T::zero())?;
    let scale = s1.matrix.max_abs().as_f64();
    let data_gap = if scale > 0.0 { s1.matrix.sub(&s2.matrix).max_abs().as_f64() / scale } else { 0.0 };
    let applicable = data_gap <= 1e-9;

    let n = f1.len();
    let r1 = ResolventOp::negative_shift(f1, T::zero())?;
    let r2 = ResolventOp::negative_shift(f2, T::zero())?;
    let w = f1.mass();
    let dq: Vec<T> = f2.potential().values().iter().zip(f1.potential().values().iter()).map(|(&a, &b)| a - b).collect();
    let dq_max = dq.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut max_pairing = 0.0f64;
    let mut sum = 0.0f64;
    for _ in 0..trials {
        let fv: Vec<T> = r.omega0.iter().map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        let gv: Vec<T> = r.omega1.iter().map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        let u = r2.resolve_unchecked(&GridFunction::from_support(n, &r.omega0, &fv));
        let v = r1.resolve_unchecked(&GridFunction::from_support(n, &r.omega1, &gv));
        let pairing = (0..n).fold(T::zero(), |acc, i| acc + w[i] * dq[i] * u[i] * v[i]).abs();
        let nu = (0..n).map(|i| w[i] * u[i] * u[i]).sum::<T>().sqrt();
        let nv = (0..n).map(|i| w[i] * v[i] * v[i]).sum::<T>().sqrt();
        let denom = (dq_max.max(T::one()) * nu * nv).as_f64();
        let rel = if denom > 0.0 { pairing.as_f64() / denom } else { 0.0 };
        max_pairing = max_pairing.max(rel);
        sum += rel;
    }
    let mean_pairing = if trials > 0 { sum / trials as f64 } else { 0.0 };
    Ok(OrthogonalityReport {
        data_gap,
        applicable,
        trials,
        max_pairing,
        mean_pairing,
        holds: applicable.then_some(max_pairing <= 1e-8),
    })
}

/// `‖Σ₁(β) − Σ₂(β)‖_F` for each shift in `betas`.
pub fn data_difference<T: Real>(f1: &FracOperator<T>, f2: &FracOperator<T>, r: &RegionConfig, betas: &[T]) -> Result<Vec<f64>> {
    betas
        .iter()
        .map(|&b| {
            let a = s2s_matrix(f1, r, b)?;
            let c = s2s_matrix(f2, r, b)?;
            Ok(a.matrix.sub(&c.matrix).frobenius_norm().as_f64())
        })
        .collect()
}
