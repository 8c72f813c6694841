//! Internal spectral data: eigenvalues with eigenvectors restricted to an
//! observation set, a deterministic gauge, gauge-free comparison through
//! restricted spectral projectors, and recovery of eigenvalues from
//! semigroup samples by a block-Hankel matrix pencil.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues_general, svd, Matrix};
use crate::scalar::Real;
use crate::spectral::SpectralDecomposition;

/// Default relative gap below which neighbouring eigenvalues are grouped.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;

/// Entries below this fraction of a vector's maximum count as zero.
const VANISHING_TOL: f64 = 1e-12;

/// Relative tolerance for choosing among near-equal pivot entries.
const PIVOT_TIE_TOL: f64 = 1e-10;

/// Maximal runs of eigenvalues whose consecutive relative gaps are below
/// `cluster_tol`.
pub fn find_clusters<T: Real>(eigenvalues: &[T], cluster_tol: f64) -> Vec<Range<usize>> {
    let tol = T::lit(cluster_tol);
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=eigenvalues.len() {
        let split = k == eigenvalues.len() || {
            let (a, b) = (eigenvalues[k - 1], eigenvalues[k]);
            (b - a).abs() >= tol * a.abs().max(b.abs())
        };
        if split {
            out.push(start..k);
            start = k;
        }
    }
    out
}

/// Index of the largest-magnitude entry, earliest index among near ties.
fn pivot<T: Real>(values: impl IntoIterator<Item = T>) -> (usize, T) {
    let tie = T::one() + T::lit(PIVOT_TIE_TOL);
    let mut best = (0, T::zero());
    for (i, v) in values.into_iter().enumerate() {
        if v.abs() > best.1.abs() * tie {
            best = (i, v);
        }
    }
    best
}

/// How the representative of a mode was chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Gauge {
    /// Sign fixed by the entry at position `pivot` of the observation set.
    Sign { pivot: usize, flipped: bool },
    /// The mode vanishes on the observation set; sign fixed by the first
    /// nonzero entry over the whole mesh (node `node`).
    Vanishing { node: usize, flipped: bool },
    /// Member of a degenerate cluster, stored as computed.
    Cluster { start: usize, size: usize },
}

/// Eigenvalues and eigenvectors restricted to the observation set `omega`.
#[derive(Clone, Debug)]
pub struct InternalSpectralData<T> {
    eigenvalues: Vec<T>,
    omega: Vec<usize>,
    omega_mass: Vec<T>,
    /// `|omega| × K`, one column per mode.
    restricted: Matrix<T>,
    clusters: Vec<Range<usize>>,
    /// Full-space mass Gram of each cluster's vectors.
    cluster_grams: Vec<Matrix<T>>,
    gauge: Vec<Gauge>,
    cluster_tol: f64,
}

impl<T: Real> InternalSpectralData<T> {
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn omega_mass(&self) -> &[T] {
        &self.omega_mass
    }

    pub fn restricted_vectors(&self) -> &Matrix<T> {
        &self.restricted
    }

    pub fn clusters(&self) -> &[Range<usize>] {
        &self.clusters
    }

    pub fn cluster_grams(&self) -> &[Matrix<T>] {
        &self.cluster_grams
    }

    pub fn gauge(&self) -> &[Gauge] {
        &self.gauge
    }

    pub fn cluster_tol(&self) -> f64 {
        self.cluster_tol
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Modes that vanish identically on the observation set.
    pub fn vanishing_modes(&self) -> Vec<usize> {
        self.gauge
            .iter()
            .enumerate()
            .filter(|(_, g)| matches!(g, Gauge::Vanishing { .. }))
            .map(|(k, _)| k)
            .collect()
    }

    /// Positions in `omega` of the given mesh nodes.
    fn positions(&self, nodes: &[usize]) -> Result<Vec<usize>> {
        nodes
            .iter()
            .map(|n| {
                self.omega
                    .binary_search(n)
                    .map_err(|_| Error::InvalidRegion(format!("node {n} is not in the observation set")))
            })
            .collect()
    }

    /// `Σ_ℓ φ_ℓ|rows ⊗ φ_ℓ|cols` over the modes in `range`.
    pub fn projector_block(&self, range: Range<usize>, rows: &[usize], cols: &[usize]) -> Result<Matrix<T>> {
        let ri = self.positions(rows)?;
        let ci = self.positions(cols)?;
        Ok(self.projector_at(range, &ri, &ci))
    }

    fn projector_at(&self, range: Range<usize>, ri: &[usize], ci: &[usize]) -> Matrix<T> {
        Matrix::from_fn(ri.len(), ci.len(), |a, b| {
            range.clone().fold(T::zero(), |acc, k| acc + self.restricted[(ri[a], k)] * self.restricted[(ci[b], k)])
        })
    }
}

fn check_subset(omega: &[usize], n: usize) -> Result<Vec<usize>> {
    if omega.is_empty() {
        return Err(Error::InvalidRegion("observation set is empty".into()));
    }
    let mut o = omega.to_vec();
    o.sort_unstable();
    o.dedup();
    if let Some(&i) = o.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidRegion(format!("node {i} out of range for {n} nodes")));
    }
    Ok(o)
}

/// Restricts eigenpairs to `omega` and fixes the gauge.
///
/// A nondegenerate mode is negated if needed so that its largest-magnitude
/// entry on `omega` is positive (earliest node on ties). Modes vanishing on
/// `omega` take the sign of their first nonzero entry on the whole mesh.
/// Members of degenerate clusters are left as computed.
pub fn extract<T: Real>(dec: &SpectralDecomposition<T>, omega: &[usize], cluster_tol: f64) -> Result<InternalSpectralData<T>> {
    let n = dec.vectors().rows();
    let omega = check_subset(omega, n)?;
    let k_total = dec.len();
    let clusters = find_clusters(dec.eigenvalues(), cluster_tol);
    let v = dec.vectors();
    let mut restricted = Matrix::from_fn(omega.len(), k_total, |i, k| v[(omega[i], k)]);
    let mut gauge = Vec::with_capacity(k_total);
    let mut cluster_grams = Vec::with_capacity(clusters.len());
    let w = dec.mass();

    for c in &clusters {
        let gram = Matrix::from_fn(c.len(), c.len(), |a, b| {
            (0..n).fold(T::zero(), |acc, i| acc + w[i] * v[(i, c.start + a)] * v[(i, c.start + b)])
        });
        cluster_grams.push(gram);
        if c.len() > 1 {
            gauge.extend(c.clone().map(|_| Gauge::Cluster { start: c.start, size: c.len() }));
            continue;
        }
        let k = c.start;
        let global_max = (0..n).fold(T::zero(), |m, i| m.max(v[(i, k)].abs()));
        let (p, val) = pivot((0..omega.len()).map(|i| restricted[(i, k)]));
        if val.abs() <= T::lit(VANISHING_TOL) * global_max {
            let cutoff = T::lit(VANISHING_TOL) * global_max;
            let node = (0..n).find(|&i| v[(i, k)].abs() > cutoff).unwrap_or(0);
            let flipped = v[(node, k)] < T::zero();
            if flipped {
                negate_column(&mut restricted, k);
            }
            gauge.push(Gauge::Vanishing { node, flipped });
        } else {
            let flipped = val < T::zero();
            if flipped {
                negate_column(&mut restricted, k);
            }
            gauge.push(Gauge::Sign { pivot: p, flipped });
        }
    }
    let omega_mass = omega.iter().map(|&i| w[i]).collect();
    Ok(InternalSpectralData {
        eigenvalues: dec.eigenvalues().to_vec(),
        omega,
        omega_mass,
        restricted,
        clusters,
        cluster_grams,
        gauge,
        cluster_tol,
    })
}

fn negate_column<T: Real>(m: &mut Matrix<T>, k: usize) {
    for i in 0..m.rows() {
        m[(i, k)] = -m[(i, k)];
    }
}

/// Orthogonal `Q` minimizing `‖B Q − A‖_F` (both with the same columns).
fn procrustes<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let m = b.transpose().matmul(a);
    let d = svd(&m);
    d.u.matmul(&d.v.transpose())
}

/// Rotates the eigenvectors of `other` within each of its clusters so that
/// they match `reference` as closely as possible in the mass norm. Isolated
/// modes reduce to a sign choice.
pub fn align_gauge<T: Real>(
    reference: &SpectralDecomposition<T>,
    other: &SpectralDecomposition<T>,
    cluster_tol: f64,
) -> Result<SpectralDecomposition<T>> {
    if reference.len() != other.len() || reference.vectors().rows() != other.vectors().rows() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: other.len() });
    }
    let sw: Vec<T> = other.mass().iter().map(|w| w.sqrt()).collect();
    let a_full = reference.vectors().scale_rows(&sw);
    let b_full = other.vectors().scale_rows(&sw);
    let n = other.vectors().rows();
    let mut out = other.vectors().clone();
    for c in find_clusters(other.eigenvalues(), cluster_tol) {
        let cols: Vec<usize> = c.clone().collect();
        let all: Vec<usize> = (0..n).collect();
        let a = a_full.select(&all, &cols);
        let b = b_full.select(&all, &cols);
        let q = procrustes(&a, &b);
        let rotated = other.vectors().select(&all, &cols).matmul(&q);
        for (j, &k) in cols.iter().enumerate() {
            out.set_column(k, &rotated.column(j));
        }
    }
    Ok(other.with_vectors(out))
}

/// True when every diagonal entry of the cross Gram `Φ₁ᵀWΦ₂` is
/// nonnegative, which holds after [`align_gauge`].
pub fn is_gauge_aligned<T: Real>(a: &SpectralDecomposition<T>, b: &SpectralDecomposition<T>) -> bool {
    let w = a.mass();
    let (va, vb) = (a.vectors(), b.vectors());
    (0..a.len().min(b.len())).all(|k| {
        (0..va.rows()).fold(T::zero(), |acc, i| acc + w[i] * va[(i, k)] * vb[(i, k)]) >= T::zero()
    })
}

/// Applies a random orthogonal matrix inside every cluster and random sign
/// flips to every mode.
pub fn random_regauge<T: Real, R: Rng + ?Sized>(dec: &SpectralDecomposition<T>, cluster_tol: f64, rng: &mut R) -> SpectralDecomposition<T> {
    let n = dec.vectors().rows();
    let all: Vec<usize> = (0..n).collect();
    let mut out = dec.vectors().clone();
    for c in find_clusters(dec.eigenvalues(), cluster_tol) {
        let cols: Vec<usize> = c.clone().collect();
        let mut q: Matrix<T> = random_orthogonal(cols.len(), rng);
        for j in 0..cols.len() {
            if rng.random::<bool>() {
                for i in 0..cols.len() {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        let rotated = dec.vectors().select(&all, &cols).matmul(&q);
        for (j, &k) in cols.iter().enumerate() {
            out.set_column(k, &rotated.column(j));
        }
    }
    dec.with_vectors(out)
}

/// Haar-ish random orthogonal matrix from Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix<T> {
    loop {
        let mut cols: Vec<Vec<T>> = Vec::with_capacity(n);
        let mut ok = true;
        for _ in 0..n {
            let mut v: Vec<T> = (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
            for _ in 0..2 {
                for c in &cols {
                    let d = crate::linalg::dot(c, &v);
                    v.iter_mut().zip(c).for_each(|(x, &y)| *x -= d * y);
                }
            }
            let nrm = crate::linalg::norm2(&v);
            if !(nrm > T::lit(1e-8)) {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|x| *x /= nrm);
            cols.push(v);
        }
        if ok {
            return Matrix::from_columns(&cols).expect("square");
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterComparison {
    pub start: usize,
    pub size: usize,
    pub eigenvalue_deviation: f64,
    /// `‖P⁽¹⁾ − P⁽²⁾‖_F` of the restricted projector blocks.
    pub projector_deviation: f64,
    pub projector_norm: f64,
    /// `‖Φ⁽²⁾Q − Φ⁽¹⁾‖_F` on the observation set after the best orthogonal `Q`.
    pub alignment_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub max_eigenvalue_deviation: f64,
    pub max_projector_deviation: f64,
    pub clusters: Vec<ClusterComparison>,
    /// Starting indices where the cluster structures differ.
    pub multiplicity_mismatches: Vec<usize>,
}

impl CompareReport {
    /// Data agree to `tol` and cluster multiplicities match.
    pub fn is_equal(&self, tol: f64) -> bool {
        self.multiplicity_mismatches.is_empty() && self.max_eigenvalue_deviation <= tol && self.max_projector_deviation <= tol
    }
}

/// Compares two data sets on the full observation set.
pub fn compare<T: Real>(d1: &InternalSpectralData<T>, d2: &InternalSpectralData<T>) -> Result<CompareReport> {
    let omega = d1.omega.clone();
    compare_blocks(d1, d2, &omega, &omega)
}

/// Compares two data sets through the projector blocks `rows × cols`, both
/// subsets of the shared observation set (for example the source and
/// observation regions).
pub fn compare_blocks<T: Real>(
    d1: &InternalSpectralData<T>,
    d2: &InternalSpectralData<T>,
    rows: &[usize],
    cols: &[usize],
) -> Result<CompareReport> {
    if d1.omega != d2.omega {
        return Err(Error::InvalidRegion("data sets use different observation sets".into()));
    }
    if d1.len() != d2.len() {
        return Err(Error::DimensionMismatch { expected: d1.len(), got: d2.len() });
    }
    let ri = d1.positions(rows)?;
    let ci = d1.positions(cols)?;
    let max_eig = d1
        .eigenvalues
        .iter()
        .zip(&d2.eigenvalues)
        .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs().as_f64()));

    let mut clusters = Vec::new();
    let mut mismatches = Vec::new();
    let all: Vec<usize> = (0..d1.omega.len()).collect();
    for c in &d1.clusters {
        if !d2.clusters.contains(c) {
            mismatches.push(c.start);
            continue;
        }
        let p1 = d1.projector_at(c.clone(), &ri, &ci);
        let p2 = d2.projector_at(c.clone(), &ri, &ci);
        let cols_k: Vec<usize> = c.clone().collect();
        let a = d1.restricted.select(&all, &cols_k);
        let b = d2.restricted.select(&all, &cols_k);
        let q = procrustes(&a, &b);
        let eig_dev = c.clone().fold(0.0f64, |m, k| m.max((d1.eigenvalues[k] - d2.eigenvalues[k]).abs().as_f64()));
        clusters.push(ClusterComparison {
            start: c.start,
            size: c.len(),
            eigenvalue_deviation: eig_dev,
            projector_deviation: p1.sub(&p2).frobenius_norm().as_f64(),
            projector_norm: p1.frobenius_norm().as_f64(),
            alignment_residual: b.matmul(&q).sub(&a).frobenius_norm().as_f64(),
        });
    }
    let max_proj = clusters.iter().fold(0.0f64, |m, c| m.max(c.projector_deviation));
    Ok(CompareReport { max_eigenvalue_deviation: max_eig, max_projector_deviation: max_proj, clusters, multiplicity_mismatches: mismatches })
}

/// Uniform sampling times `t0 + i·dt`, `i < nt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub nt: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, nt: usize) -> Result<Self> {
        if !(t0 >= 0.0) || !t0.is_finite() {
            return Err(Error::NegativeTime(t0));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if nt == 0 {
            return Err(Error::InvalidArgument("time grid is empty".into()));
        }
        Ok(Self { t0, dt, nt })
    }

    pub fn times<T: Real>(&self) -> Vec<T> {
        (0..self.nt).map(|i| T::lit(self.t0 + i as f64 * self.dt)).collect()
    }
}

/// Restricted semigroup kernels `[e^{−tA_q}]_{Ω₁×Ω₀}` at every grid time,
/// i.e. entry `(i, j)` is `Σ e^{−μ_k t} φ_k(i) φ_k(j) w_j`.
pub fn semigroup_samples<T: Real>(
    spectrum: &SpectralDecomposition<T>,
    omega0: &[usize],
    omega1: &[usize],
    grid: &TimeGrid,
) -> Result<Vec<Matrix<T>>> {
    if !(grid.t0 > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling times must be positive, got t0 = {}", grid.t0)));
    }
    let n = spectrum.vectors().rows();
    let o0 = check_subset(omega0, n)?;
    let o1 = check_subset(omega1, n)?;
    let v = spectrum.vectors();
    let w = spectrum.mass();
    let left = Matrix::from_fn(o1.len(), spectrum.len(), |i, k| v[(o1[i], k)]);
    let right = Matrix::from_fn(spectrum.len(), o0.len(), |k, j| v[(o0[j], k)] * w[o0[j]]);
    let times = grid.times::<T>();
    Ok(times
        .par_iter()
        .map(|&t| {
            let decay: Vec<T> = spectrum.eigenvalues().iter().map(|&mu| (-mu * t).exp()).collect();
            left.scale_cols(&decay).matmul(&right)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PencilOptions {
    /// Singular values of the Hankel matrix below `rank_tol · σ_max` are
    /// discarded.
    pub rank_tol: f64,
    /// Largest accepted relative least-squares residual.
    pub max_residual: f64,
    /// Block rows of the Hankel matrix; `None` uses `nt / 2`.
    pub block_rows: Option<usize>,
}

impl Default for PencilOptions {
    fn default() -> Self {
        Self { rank_tol: 1e-14, max_residual: 1e-6, block_rows: None }
    }
}

/// Exponential-sum fit `Y(t) ≈ Σ_k A_k e^{−r_k t}`.
#[derive(Clone, Debug)]
pub struct ExpFitResult<T> {
    /// Recovered rates, ascending.
    pub rates: Vec<T>,
    /// Coefficient matrix of each recovered rate.
    pub amplitudes: Vec<Matrix<T>>,
    /// `‖Y − fit‖_F / ‖Y‖_F` over all samples.
    pub residual: T,
    /// Numerical rank of the Hankel matrix.
    pub pencil_rank: usize,
    pub warnings: Vec<String>,
}

/// Recovers the `k_max` slowest exponential rates from uniformly sampled
/// matrices.
///
/// Samples are stacked into block-Hankel matrices `H₀ = [Y_{i+j}]` and
/// `H₁ = [Y_{i+j+1}]`. After truncating the SVD `H₀ ≈ U S Vᵀ` at
/// `rank_tol`, the eigenvalues `z` of `S^{-1/2} Uᵀ H₁ V S^{-1/2}` give the
/// rates `−ln z / dt`. Amplitudes come from a least-squares fit over all
/// retained modes.
pub fn recover_rates<T: Real>(
    samples: &[Matrix<T>],
    grid: &TimeGrid,
    k_max: usize,
    opts: &PencilOptions,
) -> Result<ExpFitResult<T>> {
    let nt = samples.len();
    if nt != grid.nt {
        return Err(Error::DimensionMismatch { expected: grid.nt, got: nt });
    }
    if k_max == 0 || 2 * k_max > nt.saturating_sub(1) {
        return Err(Error::InvalidArgument(format!("k_max = {k_max} needs at least {} samples, got {nt}", 2 * k_max + 1)));
    }
    let (p, q) = (samples[0].rows(), samples[0].cols());
    if samples.iter().any(|s| s.rows() != p || s.cols() != q) {
        return Err(Error::InvalidArgument("samples have inconsistent shapes".into()));
    }
    let b = opts.block_rows.unwrap_or(nt / 2).clamp(1, nt - 1);
    let c = nt - b;
    let hankel = |shift: usize| {
        Matrix::from_fn(b * p, c * q, |r, col| samples[r / p + col / q + shift][(r % p, col % q)])
    };
    let h0 = hankel(0);
    let h1 = hankel(1);
    let d = svd(&h0);
    let smax = d.sigma.first().copied().unwrap_or_else(T::zero);
    let mut warnings = Vec::new();
    if !(smax > T::zero()) {
        return Err(Error::InvalidArgument("samples are identically zero".into()));
    }
    let rank = d.sigma.iter().take_while(|&&s| s > T::lit(opts.rank_tol) * smax).count();
    if rank < k_max {
        warnings.push(format!("Hankel matrix has numerical rank {rank} < {k_max}; returning fewer rates"));
    }

    let keep: Vec<usize> = (0..rank).collect();
    let u_rows: Vec<usize> = (0..h0.rows()).collect();
    let v_rows: Vec<usize> = (0..h0.cols()).collect();
    let u = d.u.select(&u_rows, &keep);
    let v = d.v.select(&v_rows, &keep);
    let isq: Vec<T> = d.sigma[..rank].iter().map(|s| T::one() / s.sqrt()).collect();
    let reduced = u.transpose().matmul(&h1).matmul(&v).scale_rows(&isq).scale_cols(&isq);
    let z = eigenvalues_general(&reduced)?;

    let dt = T::lit(grid.dt);
    let mut rates: Vec<T> = Vec::new();
    let mut dropped = 0;
    for (re, im) in z {
        if im.abs() > T::lit(1e-8) * re.abs().max(T::min_positive_value()) || !(re > T::zero()) || re > T::one() + T::lit(1e-8) {
            dropped += 1;
            continue;
        }
        rates.push(-re.ln() / dt);
    }
    if dropped > 0 {
        warnings.push(format!("{dropped} pencil eigenvalues were not real decay factors and were dropped"));
    }
    rates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    // Least squares for all retained modes, then report the slowest k_max.
    let t0 = T::lit(grid.t0);
    let m = rates.len();
    let vander = Matrix::from_fn(nt, m, |i, k| (-rates[k] * dt * T::from_count(i)).exp());
    let data = Matrix::from_fn(nt, p * q, |i, e| samples[i][(e / q, e % q)]);
    let coef = lstsq(&vander, &data);
    let fit = vander.matmul(&coef);
    let residual = fit.sub(&data).frobenius_norm() / data.frobenius_norm();
    if residual > T::lit(opts.max_residual) {
        return Err(Error::FitRejected { residual: residual.as_f64(), threshold: opts.max_residual });
    }
    let take = k_max.min(m);
    if take < k_max && rank >= k_max {
        warnings.push(format!("only {take} admissible rates recovered"));
    }
    let amplitudes = (0..take)
        .map(|k| {
            let scale = (rates[k] * t0).exp();
            Matrix::from_fn(p, q, |i, j| coef[(k, i * q + j)] * scale)
        })
        .collect();
    rates.truncate(take);
    Ok(ExpFitResult { rates, amplitudes, residual, pencil_rank: rank, warnings })
}

/// Minimum-norm least-squares solution of `A X = B` via a truncated SVD.
fn lstsq<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let d = svd(a);
    let smax = d.sigma.first().copied().unwrap_or_else(T::zero);
    let cutoff = T::epsilon() * T::from_count(a.rows().max(a.cols())) * smax;
    let inv: Vec<T> = d.sigma.iter().map(|&s| if s > cutoff { T::one() / s } else { T::zero() }).collect();
    d.v.scale_cols(&inv).matmul(&d.u.transpose().matmul(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_interval, build_rect};
    use crate::spectral::{eig_aq, eig_base, EigOptions, FracOperator, Potential};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn base(n: usize) -> SpectralDecomposition<f64> {
        eig_base(&build_interval(n, 1.0).unwrap(), &EigOptions::default()).unwrap()
    }

    fn scalar_series(grid: &TimeGrid, terms: &[(f64, f64)]) -> Vec<Matrix<f64>> {
        grid.times::<f64>()
            .into_iter()
            .map(|t| Matrix::from_diagonal(&[terms.iter().map(|(a, r)| a * (-r * t).exp()).sum()]))
            .collect()
    }

    #[test]
    fn clusters_group_close_values() {
        let c = find_clusters(&[1.0, 2.0, 2.0 + 1e-12, 3.0, 3.0, 3.0, 5.0], 1e-8);
        assert_eq!(c, vec![0..1, 1..3, 3..6, 6..7]);
        assert!(find_clusters::<f64>(&[], 1e-8).is_empty());
    }

    #[test]
    fn single_node_signs_positive() {
        let b = base(9);
        let d = extract(&b, &[3], DEFAULT_CLUSTER_TOL).unwrap();
        for k in 0..9 {
            let v = d.restricted_vectors()[(0, k)];
            let raw = b.vectors()[(3, k)];
            assert_eq!(v.abs(), raw.abs());
            match &d.gauge()[k] {
                Gauge::Sign { .. } => assert!(v > 0.0),
                Gauge::Vanishing { .. } => assert!(v.abs() < 1e-12),
                Gauge::Cluster { .. } => panic!("interval spectrum is simple"),
            }
        }
    }

    #[test]
    fn vanishing_mode_is_flagged() {
        // Mode 2 of a 9-node interval vanishes at the midpoint.
        let b = base(9);
        let d = extract(&b, &[4], DEFAULT_CLUSTER_TOL).unwrap();
        assert!(d.vanishing_modes().contains(&1));
    }

    #[test]
    fn restriction_is_consistent() {
        let b = base(16);
        let big = extract(&b, &[2, 3, 4, 5, 6], DEFAULT_CLUSTER_TOL).unwrap();
        let small = extract(&b, &[3, 4], DEFAULT_CLUSTER_TOL).unwrap();
        for k in 0..16 {
            let r_big = [big.restricted_vectors()[(1, k)], big.restricted_vectors()[(2, k)]];
            let r_small = [small.restricted_vectors()[(0, k)], small.restricted_vectors()[(1, k)]];
            let same = r_big == r_small;
            let flipped = r_big[0] == -r_small[0] && r_big[1] == -r_small[1];
            assert!(same || flipped);
        }
    }

    #[test]
    fn extract_is_deterministic_and_validates() {
        let b = base(12);
        let a = extract(&b, &[1, 5, 7], 1e-8).unwrap();
        let c = extract(&b, &[7, 5, 1, 5], 1e-8).unwrap();
        assert_eq!(a.restricted_vectors(), c.restricted_vectors());
        assert!(extract(&b, &[], 1e-8).is_err());
        assert!(extract(&b, &[12], 1e-8).is_err());
    }

    #[test]
    fn square_has_double_eigenvalue() {
        let m = build_rect(6, 6, 1.0, 1.0).unwrap();
        let b = eig_base(&m, &EigOptions::default()).unwrap();
        let d = extract(&b, &[0, 7, 14], 1e-8).unwrap();
        assert_eq!(d.clusters()[1], 1..3);
        assert!(matches!(d.gauge()[1], Gauge::Cluster { start: 1, size: 2 }));
    }

    #[test]
    fn compare_identical_and_negated() {
        let b = base(14);
        let omega = [2, 3, 9, 10];
        let d1 = extract(&b, &omega, 1e-8).unwrap();
        let r = compare(&d1, &d1).unwrap();
        assert!(r.is_equal(0.0));
        let neg = b.with_vectors(b.vectors().scaled(-1.0));
        let d2 = extract(&neg, &omega, 1e-8).unwrap();
        let r = compare(&d1, &d2).unwrap();
        assert!(r.max_projector_deviation == 0.0);
        assert!(r.clusters.iter().all(|c| c.alignment_residual < 1e-14));
    }

    #[test]
    fn compare_detects_bump() {
        let n = 20;
        let m = build_interval(n, 1.0).unwrap();
        let b = Arc::new(eig_base(&m, &EigOptions::default()).unwrap());
        let f1 = FracOperator::new(b, 0.5, Potential::zero(n)).unwrap();
        let mut q = vec![0.0; n];
        q[10] = 0.5;
        q[11] = 0.5;
        let f2 = f1.with_potential(Potential::new(q, 1.0).unwrap()).unwrap();
        let e1 = eig_aq(&f1, &EigOptions::default()).unwrap();
        let e2 = eig_aq(&f2, &EigOptions::default()).unwrap();
        let omega = [2, 3, 4, 15, 16];
        let r = compare(&extract(&e1, &omega, 1e-8).unwrap(), &extract(&e2, &omega, 1e-8).unwrap()).unwrap();
        assert!(r.max_eigenvalue_deviation > 1e-4);
        assert!(r.max_projector_deviation > 1e-6);
        assert!(!r.is_equal(1e-9));
    }

    #[test]
    fn multiplicity_mismatch_reported() {
        let m = build_rect(5, 5, 1.0, 1.0).unwrap();
        let b = eig_base(&m, &EigOptions::default()).unwrap();
        let mut ev = b.eigenvalues().to_vec();
        ev[2] += 1e-3;
        let split = SpectralDecomposition::from_parts(ev, b.vectors().clone(), b.mass().to_vec(), 0.0);
        let omega = [0, 6, 12];
        let r = compare(&extract(&b, &omega, 1e-8).unwrap(), &extract(&split, &omega, 1e-8).unwrap()).unwrap();
        assert_eq!(r.multiplicity_mismatches, vec![1]);
        assert!(!r.is_equal(1.0));
    }

    #[test]
    fn projector_blocks_invariant_under_regauge() {
        let m = build_rect(6, 6, 1.0, 1.0).unwrap();
        let b = eig_base(&m, &EigOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let omega = [0, 1, 8, 13, 20, 27];
        let d1 = extract(&b, &omega, 1e-8).unwrap();
        let d2 = extract(&random_regauge(&b, 1e-8, &mut rng), &omega, 1e-8).unwrap();
        let r = compare_blocks(&d1, &d2, &[0, 1, 8], &[13, 20, 27]).unwrap();
        assert!(r.max_projector_deviation <= 1e-12, "{}", r.max_projector_deviation);
        assert!(compare_blocks(&d1, &d2, &[2], &[13]).is_err());
    }

    #[test]
    fn align_gauge_undoes_rotation() {
        let m = build_rect(5, 5, 1.0, 1.0).unwrap();
        let b = eig_base(&m, &EigOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mixed = random_regauge(&b, 1e-8, &mut rng);
        assert!(!is_gauge_aligned(&b, &mixed) || mixed.vectors().sub(b.vectors()).max_abs() > 1e-3);
        let fixed = align_gauge(&b, &mixed, 1e-8).unwrap();
        assert!(fixed.vectors().sub(b.vectors()).max_abs() < 1e-10);
        assert!(is_gauge_aligned(&b, &fixed));
    }

    #[test]
    fn single_exponential() {
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let samples = scalar_series(&grid, &[(1.0, 2.0)]);
        let r = recover_rates(&samples, &grid, 1, &PencilOptions::default()).unwrap();
        assert!((r.rates[0] - 2.0).abs() < 1e-10);
        assert!((r.amplitudes[0][(0, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_exponentials() {
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let samples = scalar_series(&grid, &[(3.0, 1.0), (0.5, 4.0)]);
        let r = recover_rates(&samples, &grid, 2, &PencilOptions::default()).unwrap();
        assert!((r.rates[0] - 1.0).abs() < 1e-8 && (r.rates[1] - 4.0).abs() < 1e-8, "{:?}", r.rates);
        assert!((r.amplitudes[0][(0, 0)] - 3.0).abs() < 1e-8);
        assert!((r.amplitudes[1][(0, 0)] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn rank_deficient_pencil_warns() {
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let samples = scalar_series(&grid, &[(1.0, 2.0)]);
        let r = recover_rates(&samples, &grid, 3, &PencilOptions::default()).unwrap();
        assert_eq!(r.rates.len(), 1);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn recovery_errors() {
        let grid = TimeGrid::new(0.0, 0.1, 6).unwrap();
        let samples = scalar_series(&grid, &[(1.0, 2.0)]);
        assert!(recover_rates(&samples, &grid, 3, &PencilOptions::default()).is_err());
        let short = TimeGrid::new(0.0, 0.1, 5).unwrap();
        assert!(recover_rates(&samples, &short, 1, &PencilOptions::default()).is_err());
        // Noise that no short exponential sum can explain.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noisy: Vec<Matrix<f64>> = (0..20).map(|_| Matrix::from_diagonal(&[rng.random_range(-1.0..1.0)])).collect();
        let g = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let opts = PencilOptions { rank_tol: 1e-1, ..PencilOptions::default() };
        assert!(matches!(recover_rates(&noisy, &g, 1, &opts), Err(Error::FitRejected { .. })));
        assert!(TimeGrid::new(-1.0, 0.1, 3).is_err());
        assert!(TimeGrid::new(0.0, 0.0, 3).is_err());
    }

    #[test]
    fn samples_match_spectral_formula() {
        let n = 12;
        let b = Arc::new(base(n));
        let f = FracOperator::new(b, 0.5, Potential::constant(n, 0.3, 1.0).unwrap()).unwrap();
        let e = eig_aq(&f, &EigOptions::default()).unwrap();
        let grid = TimeGrid::new(0.2, 0.1, 4).unwrap();
        let s = semigroup_samples(&e, &[1, 2], &[2, 8], &grid).unwrap();
        let (i, j, t) = (8, 2, 0.3);
        let expect: f64 = (0..n).map(|k| (-e.eigenvalues()[k] * t).exp() * e.vectors()[(i, k)] * e.vectors()[(j, k)] * e.mass()[j]).sum();
        assert!((s[1][(1, 1)] - expect).abs() < 1e-12);
        let zero = TimeGrid::new(0.0, 0.1, 4).unwrap();
        assert!(semigroup_samples(&e, &[1], &[2], &zero).is_err());
    }

    #[test]
    fn short_time_limit_is_identity_pattern() {
        let b = base(10);
        let grid = TimeGrid::new(1e-9, 1e-9, 1).unwrap();
        let s = semigroup_samples(&b, &[2, 3, 4], &[3, 4, 5], &grid).unwrap();
        let expect = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(s[0].sub(&expect).max_abs() < 1e-6);
    }
}
