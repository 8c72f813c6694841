//! Discrete manifolds and observation regions.
//!
//! A [`DiscreteManifold`] carries a lumped mass vector `w` and a symmetric
//! positive definite stiffness (form) matrix `K`. The Laplacian it models is
//! the operator `W⁻¹K`, which is self-adjoint for the inner product
//! `(u|v) = Σ wᵢ uᵢ vᵢ`. Dirichlet nodes are eliminated; their labels are kept
//! for reporting only.

use std::collections::VecDeque;
use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, Matrix};
use crate::scalar::Real;

/// Relative symmetry tolerance accepted for stiffness and weight matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Nodal values on the interior nodes of a manifold.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GridFunction<T>(Vec<T>);

impl<T: Real> GridFunction<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn constant(n: usize, c: T) -> Self {
        Self(vec![c; n])
    }

    /// Unit value at node `j`, zero elsewhere.
    pub fn indicator(n: usize, j: usize) -> Self {
        let mut v = vec![T::zero(); n];
        v[j] = T::one();
        Self(v)
    }

    /// Embeds `values` at positions `support`, zero elsewhere.
    pub fn from_support(n: usize, support: &[usize], values: &[T]) -> Self {
        debug_assert_eq!(support.len(), values.len());
        let mut v = vec![T::zero(); n];
        for (&i, &x) in support.iter().zip(values) {
            v[i] = x;
        }
        Self(v)
    }

    pub fn restrict(&self, support: &[usize]) -> Vec<T> {
        support.iter().map(|&i| self.0[i]).collect()
    }

    /// True when every entry outside `support` is exactly zero.
    pub fn is_supported_in(&self, support: &[usize]) -> bool {
        let mut inside = vec![false; self.0.len()];
        for &i in support {
            if i < inside.len() {
                inside[i] = true;
            }
        }
        self.0.iter().zip(&inside).all(|(&v, &ins)| ins || v == T::zero())
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for GridFunction<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for GridFunction<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for GridFunction<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

/// Interior nodes of a discretized manifold with Dirichlet elimination.
#[derive(Clone, Debug)]
pub struct DiscreteManifold<T> {
    mass: Vec<T>,
    stiffness: Matrix<T>,
    coords: Option<Matrix<T>>,
    boundary_nodes: Vec<usize>,
    dimension: usize,
}

impl<T: Real> DiscreteManifold<T> {
    /// Validates and wraps a mass vector and stiffness matrix.
    ///
    /// `dimension` is the geometric dimension used by the spectral weights
    /// `k^{-2s/n}` downstream.
    pub fn new(mass: Vec<T>, stiffness: Matrix<T>, dimension: usize) -> Result<Self> {
        let n = mass.len();
        if n == 0 {
            return Err(Error::InvalidMesh("no interior nodes".into()));
        }
        if stiffness.rows() != n || stiffness.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: stiffness.rows() });
        }
        if let Some(i) = mass.iter().position(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidMesh(format!("mass weight at node {i} is not strictly positive")));
        }
        if dimension == 0 {
            return Err(Error::InvalidMesh("dimension must be at least 1".into()));
        }
        let defect = stiffness.symmetry_defect();
        if defect > T::lit(SYMMETRY_TOL) {
            return Err(Error::NotSymmetric { defect: defect.as_f64() });
        }
        if !is_positive_definite(&stiffness) {
            return Err(Error::InvalidMesh("stiffness matrix is not positive definite".into()));
        }
        Ok(Self { mass, stiffness, coords: None, boundary_nodes: Vec::new(), dimension })
    }

    /// Attaches node positions, one row per interior node.
    pub fn with_coords(mut self, coords: Matrix<T>) -> Result<Self> {
        if coords.rows() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: coords.rows() });
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn with_boundary_nodes(mut self, nodes: Vec<usize>) -> Self {
        self.boundary_nodes = nodes;
        self
    }

    pub fn with_dimension(mut self, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidMesh("dimension must be at least 1".into()));
        }
        self.dimension = dimension;
        Ok(self)
    }

    /// Number of interior nodes.
    #[inline]
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    #[inline]
    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    #[inline]
    pub fn stiffness(&self) -> &Matrix<T> {
        &self.stiffness
    }

    pub fn coords(&self) -> Option<&Matrix<T>> {
        self.coords.as_ref()
    }

    /// Labels of the eliminated Dirichlet nodes in the numbering of the full
    /// grid (or the original graph).
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// The Laplacian `W⁻¹K`.
    pub fn operator(&self) -> Matrix<T> {
        let inv: Vec<T> = self.mass.iter().map(|&w| T::one() / w).collect();
        self.stiffness.scale_rows(&inv)
    }

    /// The symmetric matrix `W^{-1/2} K W^{-1/2}`, similar to [`Self::operator`].
    pub fn symmetrized(&self) -> Matrix<T> {
        let s: Vec<T> = self.mass.iter().map(|&w| T::one() / w.sqrt()).collect();
        let mut k = self.stiffness.scale_rows(&s).scale_cols(&s);
        k.symmetrize();
        k
    }

    /// Relabels the interior nodes: new node `i` is old node `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.len())?;
        let mass = perm.iter().map(|&p| self.mass[p]).collect();
        let stiffness = self.stiffness.select(perm, perm);
        let coords = self
            .coords
            .as_ref()
            .map(|c| Matrix::from_fn(c.rows(), c.cols(), |i, j| c[(perm[i], j)]));
        Ok(Self { mass, stiffness, coords, boundary_nodes: self.boundary_nodes.clone(), dimension: self.dimension })
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: perm.len() });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument("relabeling is not a permutation".into()));
        }
    }
    Ok(())
}

/// Uniform grid of `n` interior nodes on `(0, length)` with Dirichlet ends.
///
/// With `h = length/(n+1)` the mass is `h` per node and the stiffness is the
/// form matrix `tridiag(−1, 2, −1)/h`, so the operator is the usual
/// second-difference quotient with eigenvalues `4/h² sin²(kπh/2L)`.
pub fn build_interval<T: Real>(n: usize, length: T) -> Result<DiscreteManifold<T>> {
    if n < 3 {
        return Err(Error::InvalidMesh(format!("interval needs at least 3 interior nodes, got {n}")));
    }
    if !(length > T::zero()) || !length.is_finite() {
        return Err(Error::InvalidMesh(format!("interval length must be positive, got {length}")));
    }
    let h = length / T::from_count(n + 1);
    let two = T::lit(2.0);
    let stiffness = Matrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => two / h,
        1 => -T::one() / h,
        _ => T::zero(),
    });
    let coords = Matrix::from_fn(n, 1, |i, _| h * T::from_count(i + 1));
    DiscreteManifold::new(vec![h; n], stiffness, 1)?
        .with_coords(coords)
        .map(|m| m.with_boundary_nodes(vec![0, n + 1]))
}

/// Tensor grid of `nx × ny` interior nodes on `(0,lx) × (0,ly)` with the
/// five-point Laplacian. Node `(i, j)` has index `i + nx·j`.
pub fn build_rect<T: Real>(nx: usize, ny: usize, lx: T, ly: T) -> Result<DiscreteManifold<T>> {
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidMesh(format!("rectangle needs at least 3x3 interior nodes, got {nx}x{ny}")));
    }
    if !(lx > T::zero()) || !(ly > T::zero()) || !lx.is_finite() || !ly.is_finite() {
        return Err(Error::InvalidMesh("rectangle side lengths must be positive".into()));
    }
    let hx = lx / T::from_count(nx + 1);
    let hy = ly / T::from_count(ny + 1);
    let cell = hx * hy;
    let cx = cell / (hx * hx);
    let cy = cell / (hy * hy);
    let two = T::lit(2.0);
    let n = nx * ny;
    let mut k = Matrix::zeros(n, n);
    for j in 0..ny {
        for i in 0..nx {
            let p = i + nx * j;
            k[(p, p)] = two * (cx + cy);
            if i > 0 {
                k[(p, p - 1)] = -cx;
            }
            if i + 1 < nx {
                k[(p, p + 1)] = -cx;
            }
            if j > 0 {
                k[(p, p - nx)] = -cy;
            }
            if j + 1 < ny {
                k[(p, p + nx)] = -cy;
            }
        }
    }
    let coords = Matrix::from_fn(n, 2, |p, c| {
        if c == 0 {
            hx * T::from_count(p % nx + 1)
        } else {
            hy * T::from_count(p / nx + 1)
        }
    });
    let full_x = nx + 2;
    let boundary = (0..(ny + 2))
        .flat_map(|j| (0..full_x).map(move |i| (i, j)))
        .filter(|&(i, j)| i == 0 || j == 0 || i == nx + 1 || j == ny + 1)
        .map(|(i, j)| i + full_x * j)
        .collect();
    DiscreteManifold::new(vec![cell; n], k, 2)?
        .with_coords(coords)
        .map(|m| m.with_boundary_nodes(boundary))
}

/// Weighted graph Laplacian with the nodes in `grounded` eliminated.
///
/// `weights` is a symmetric nonnegative adjacency matrix over all nodes (its
/// diagonal is ignored) and `mass` gives one positive weight per node. The
/// graph must be connected and `grounded` nonempty so that the restricted
/// Laplacian is positive definite. Interior nodes keep their original
/// relative order. The dimension defaults to 1; see
/// [`DiscreteManifold::with_dimension`].
pub fn build_graph<T: Real>(weights: &Matrix<T>, mass: &[T], grounded: &[usize]) -> Result<DiscreteManifold<T>> {
    let total = weights.rows();
    if !weights.is_square() {
        return Err(Error::DimensionMismatch { expected: total, got: weights.cols() });
    }
    if mass.len() != total {
        return Err(Error::DimensionMismatch { expected: total, got: mass.len() });
    }
    if grounded.is_empty() {
        return Err(Error::InvalidMesh("grounded node set is empty; the graph Laplacian would be singular".into()));
    }
    if let Some(&g) = grounded.iter().find(|&&g| g >= total) {
        return Err(Error::InvalidMesh(format!("grounded node {g} out of range for {total} nodes")));
    }
    let scale = weights.max_abs();
    for i in 0..total {
        for j in 0..total {
            let w = weights[(i, j)];
            if i != j && (w < T::zero() || !w.is_finite()) {
                return Err(Error::InvalidMesh(format!("edge weight ({i},{j}) = {w} is negative")));
            }
            if (w - weights[(j, i)]).abs() > T::lit(SYMMETRY_TOL) * scale {
                return Err(Error::NotSymmetric { defect: ((w - weights[(j, i)]).abs() / scale).as_f64() });
            }
        }
    }
    if !is_connected(weights) {
        return Err(Error::InvalidMesh("graph is not connected".into()));
    }
    let mut is_grounded = vec![false; total];
    for &g in grounded {
        is_grounded[g] = true;
    }
    let interior: Vec<usize> = (0..total).filter(|&i| !is_grounded[i]).collect();
    if interior.is_empty() {
        return Err(Error::InvalidMesh("every node is grounded".into()));
    }
    let degree: Vec<T> = (0..total)
        .map(|i| (0..total).filter(|&j| j != i).map(|j| weights[(i, j)]).sum())
        .collect();
    let k = Matrix::from_fn(interior.len(), interior.len(), |a, b| {
        let (i, j) = (interior[a], interior[b]);
        if i == j {
            degree[i]
        } else {
            -weights[(i, j)]
        }
    });
    let m = interior.iter().map(|&i| mass[i]).collect();
    let mut boundary = grounded.to_vec();
    boundary.sort_unstable();
    boundary.dedup();
    Ok(DiscreteManifold::new(m, k, 1)?.with_boundary_nodes(boundary))
}

fn is_connected<T: Real>(weights: &Matrix<T>) -> bool {
    let n = weights.rows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && weights[(i, j)] > T::zero() {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Mass-weighted inner product `Σ wᵢ uᵢ vᵢ`.
pub fn inner<T: Real>(m: &DiscreteManifold<T>, u: &[T], v: &[T]) -> Result<T> {
    let n = m.len();
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.len() });
    }
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    Ok(weighted_dot(m.mass(), u, v))
}

/// `Σ wᵢ uᵢ vᵢ` without shape checks.
#[inline]
pub fn weighted_dot<T: Real>(w: &[T], u: &[T], v: &[T]) -> T {
    w.iter().zip(u).zip(v).fold(T::zero(), |acc, ((&w, &a), &b)| acc + w * a * b)
}

/// Mass norm restricted to the nodes in `support`.
pub fn restricted_norm<T: Real>(w: &[T], u: &[T], support: &[usize]) -> T {
    support.iter().map(|&i| w[i] * u[i] * u[i]).sum::<T>().sqrt()
}

/// Source region `omega0`, observation region `omega1` and the region
/// `omega_prime` where potentials may differ. Index lists are sorted and
/// deduplicated; `omega` is the union of the first two.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionConfig {
    pub omega0: Vec<usize>,
    pub omega1: Vec<usize>,
    pub omega_prime: Vec<usize>,
    pub omega: Vec<usize>,
}

impl RegionConfig {
    pub fn new(omega0: Vec<usize>, omega1: Vec<usize>, omega_prime: Vec<usize>) -> Self {
        let omega0 = normalized(omega0);
        let omega1 = normalized(omega1);
        let omega_prime = normalized(omega_prime);
        let omega = normalized(omega0.iter().chain(&omega1).copied().collect());
        Self { omega0, omega1, omega_prime, omega }
    }

    /// Applies a node relabeling (new node `i` is old node `perm[i]`).
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let map = |v: &[usize]| v.iter().map(|&i| inv[i]).collect::<Vec<_>>();
        Self::new(map(&self.omega0), map(&self.omega1), map(&self.omega_prime))
    }
}

fn normalized(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Checks the regions against the mesh: all three sets nonempty and inside
/// the interior, and neither `omega0` nor `omega1` contained in `omega_prime`.
pub fn validate_regions<T: Real>(m: &DiscreteManifold<T>, r: &RegionConfig) -> Result<RegionConfig> {
    let r = RegionConfig::new(r.omega0.clone(), r.omega1.clone(), r.omega_prime.clone());
    let n = m.len();
    for (name, set) in [("omega0", &r.omega0), ("omega1", &r.omega1), ("omega_prime", &r.omega_prime)] {
        if set.is_empty() {
            return Err(Error::InvalidRegion(format!("{name} is empty")));
        }
        if let Some(&i) = set.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidRegion(format!("{name} contains node {i}, mesh has {n} interior nodes")));
        }
    }
    for (name, set) in [("omega0", &r.omega0), ("omega1", &r.omega1)] {
        if set.iter().all(|i| r.omega_prime.binary_search(i).is_ok()) {
            return Err(Error::InvalidRegion(format!("{name} \\ omega_prime is empty; {name} must reach outside omega_prime")));
        }
    }
    Ok(r)
}
