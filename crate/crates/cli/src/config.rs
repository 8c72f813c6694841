//! Run configuration: the JSON schema, its defaults, and validation into a
//! ready-to-use [`Setup`].

use std::fmt;
use std::path::{Path, PathBuf};

use fracschro::domain::{build_graph, build_interval, build_rect, validate_regions, RegionConfig};
use fracschro::inverse::default_beta_grid;
use fracschro::linalg::Matrix;
use fracschro::specdata::{PencilOptions, TimeGrid};
use fracschro::spectral::{EigOptions, FracOperator, Potential};
use fracschro::{Frac, Manifold, Pot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::read_numeric_csv;

/// Rejected configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    Interval { n: usize, length: f64 },
    Rect { nx: usize, ny: usize, lx: f64, ly: f64 },
    /// Dense adjacency matrix and optional per-node masses as CSV files.
    Graph { weights: PathBuf, mass: Option<PathBuf>, grounded: Vec<usize> },
}

impl Default for MeshSpec {
    fn default() -> Self {
        MeshSpec::Interval { n: 40, length: std::f64::consts::PI }
    }
}

/// Node list or half-open range.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum IndexSet {
    List(Vec<usize>),
    Range {
        start: usize,
        end: usize,
        #[serde(default = "one")]
        step: usize,
    },
}

fn one() -> usize {
    1
}

impl IndexSet {
    pub fn nodes(&self) -> Result<Vec<usize>, ConfigError> {
        match self {
            IndexSet::List(v) => Ok(v.clone()),
            IndexSet::Range { step: 0, .. } => bad("range step must be positive"),
            IndexSet::Range { start, end, step } => Ok((*start..*end).step_by(*step).collect()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub omega0: IndexSet,
    pub omega1: IndexSet,
    pub omega_prime: IndexSet,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Constant { value: f64 },
    /// Independent uniform values; outside `support` the value is `low`.
    Uniform {
        low: f64,
        high: f64,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        support: Option<IndexSet>,
    },
    /// `background + height·exp(−(r/width)²)` on `Ω′`, `background` elsewhere,
    /// with `r` the distance to `center` (the mean node coordinate over `Ω′`
    /// by default).
    Bump {
        background: f64,
        height: f64,
        width: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Values { values: Vec<f64> },
    /// `node,value` rows with a header line.
    Csv { path: PathBuf },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Uniform { low: 0.0, high: 1.0, seed: None, support: None }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeGridSpec {
    pub t0: f64,
    pub dt: f64,
    pub nt: usize,
}

impl Default for TimeGridSpec {
    fn default() -> Self {
        Self { t0: 0.2, dt: 0.05, nt: 41 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSpec {
    pub tol_residual: f64,
    pub tol_orth: f64,
    pub max_sweeps: usize,
}

impl Default for SpectralSpec {
    fn default() -> Self {
        let e = EigOptions::default();
        Self { tol_residual: e.tol_residual, tol_orth: e.tol_orth, max_sweeps: e.max_sweeps }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub cluster_tol: f64,
    pub pencil_rank_tol: f64,
    pub pencil_max_residual: f64,
    pub quadrature: f64,
    pub k_max: usize,
    pub recovery_rates: f64,
    pub recovery_amplitudes: f64,
    pub laplace_mus: Vec<f64>,
    pub coercivity_trials: usize,
    pub gauge_trials: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let pencil = PencilOptions::default();
        Self {
            cluster_tol: fracschro::specdata::DEFAULT_CLUSTER_TOL,
            pencil_rank_tol: pencil.rank_tol,
            pencil_max_residual: pencil.max_residual,
            quadrature: 1e-6,
            k_max: 5,
            recovery_rates: 1e-6,
            recovery_amplitudes: 1e-5,
            laplace_mus: vec![0.5, 1.0, 4.0],
            coercivity_trials: 20,
            gauge_trials: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct InverseSpec {
    pub alpha: f64,
    /// Candidate weights for the discrepancy principle when noise is added.
    pub alpha_grid: Option<Vec<f64>>,
    pub discrepancy_tau: f64,
    /// Relative Frobenius noise level added to synthetic data.
    pub noise: f64,
    pub max_iterations: usize,
    pub relative_tol: f64,
    /// Largest accepted relative reconstruction error when a truth is known.
    pub error_tolerance: f64,
    pub prior: Option<PotentialSpec>,
    pub truth: Option<PotentialSpec>,
}

impl Default for InverseSpec {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            alpha_grid: None,
            discrepancy_tau: 1.1,
            noise: 0.0,
            max_iterations: 2000,
            relative_tol: 1e-9,
            error_tolerance: 0.05,
            prior: None,
            truth: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mesh: MeshSpec,
    /// Overrides the mesh dimension used in the spectral weights.
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub regions: Option<RegionSpec>,
    #[serde(default = "default_s")]
    pub s: f64,
    /// Upper bound `m` of admissible potentials.
    #[serde(default = "default_bound")]
    pub bound: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
    /// Second potential for pairwise checks; defaults to `potential` plus a
    /// seeded perturbation on `Ω′`.
    #[serde(default)]
    pub alternate: Option<PotentialSpec>,
    /// Shifts `β ≥ 0`; defaults to `{0, 0.5, 2, 8}·λ₁^s`.
    #[serde(default)]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub time_grid: TimeGridSpec,
    #[serde(default)]
    pub spectral: SpectralSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub inverse: InverseSpec,
    /// Checks run by `verify`; all when absent.
    #[serde(default)]
    pub checks: Option<Vec<String>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_s() -> f64 {
    1.0
}

fn default_bound() -> f64 {
    5.0
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserializes")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// Relative paths inside the config resolve against `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let MeshSpec::Graph { weights, mass, .. } = &mut self.mesh {
            fix(weights);
            if let Some(m) = mass {
                fix(m);
            }
        }
        for spec in [Some(&mut self.potential), self.alternate.as_mut(), self.inverse.prior.as_mut(), self.inverse.truth.as_mut()]
            .into_iter()
            .flatten()
        {
            if let PotentialSpec::Csv { path } = spec {
                fix(path);
            }
        }
    }

    pub fn eig_options(&self) -> EigOptions {
        EigOptions { tol_residual: self.spectral.tol_residual, tol_orth: self.spectral.tol_orth, max_sweeps: self.spectral.max_sweeps }
    }

    pub fn pencil_options(&self) -> PencilOptions {
        PencilOptions {
            rank_tol: self.tolerances.pencil_rank_tol,
            max_residual: self.tolerances.pencil_max_residual,
            ..PencilOptions::default()
        }
    }
}

/// A validated configuration with the mesh, regions and operators built.
pub struct Setup {
    pub cfg: RunConfig,
    pub mesh: Manifold,
    pub regions: RegionConfig,
    pub base: Frac,
    pub q1: Pot,
    pub q2: Pot,
    pub betas: Vec<f64>,
    pub grid: TimeGrid,
}

impl Setup {
    pub fn build(cfg: RunConfig) -> Result<Self, ConfigError> {
        if !(cfg.s > 0.0 && cfg.s <= 1.0) {
            return bad(format!("s = {} outside (0, 1]", cfg.s));
        }
        if !(cfg.bound > 0.0) || !cfg.bound.is_finite() {
            return bad(format!("bound = {} must be positive and finite", cfg.bound));
        }
        let mut mesh = build_mesh(&cfg.mesh)?;
        if let Some(d) = cfg.dimension {
            mesh = mesh.with_dimension(d).map_err(|e| ConfigError(e.to_string()))?;
        }
        let spec = match &cfg.regions {
            Some(r) => RegionConfig::new(r.omega0.nodes()?, r.omega1.nodes()?, r.omega_prime.nodes()?),
            None => default_regions(&cfg.mesh, mesh.len())?,
        };
        let regions = validate_regions(&mesh, &spec).map_err(|e| ConfigError(e.to_string()))?;
        let grid = TimeGrid::new(cfg.time_grid.t0, cfg.time_grid.dt, cfg.time_grid.nt).map_err(|e| ConfigError(format!("time grid: {e}")))?;
        if !(grid.t0 > 0.0) {
            return bad("time grid: t0 must be positive");
        }
        let t = &cfg.tolerances;
        if t.k_max == 0 || 2 * t.k_max > grid.nt.saturating_sub(1) {
            return bad(format!("k_max = {} needs nt ≥ {}", t.k_max, 2 * t.k_max + 1));
        }
        if t.laplace_mus.iter().any(|&m| !(m > 0.0)) {
            return bad("Laplace parameters must be positive");
        }
        let q1 = build_potential(&cfg.potential, &mesh, &regions, cfg.bound, cfg.seed)?;
        let q2 = match &cfg.alternate {
            Some(spec) => build_potential(spec, &mesh, &regions, cfg.bound, cfg.seed.wrapping_add(1))?,
            None => perturbed(&q1, &regions, cfg.bound, cfg.seed.wrapping_add(1)),
        };
        let base = FracOperator::from_manifold(&mesh, cfg.s, Potential::zero(mesh.len()), &cfg.eig_options())
            .map_err(|e| ConfigError(format!("base operator: {e}")))?;
        let betas = match &cfg.beta_grid {
            Some(b) => {
                if b.is_empty() || b.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return bad("beta_grid must be a nonempty list of finite values ≥ 0");
                }
                b.clone()
            }
            None => default_beta_grid(&base),
        };
        Ok(Self { cfg, mesh, regions, base, q1, q2, betas, grid })
    }

    pub fn frac(&self, q: &Pot) -> Frac {
        self.base.with_potential(q.clone()).expect("potential length checked at build")
    }

    pub fn potential(&self, spec: &PotentialSpec, salt: u64) -> Result<Pot, ConfigError> {
        build_potential(spec, &self.mesh, &self.regions, self.cfg.bound, self.cfg.seed.wrapping_add(salt))
    }
}

fn build_mesh(spec: &MeshSpec) -> Result<Manifold, ConfigError> {
    let err = |e: fracschro::Error| ConfigError(format!("mesh: {e}"));
    match spec {
        MeshSpec::Interval { n, length } => build_interval(*n, *length).map_err(err),
        MeshSpec::Rect { nx, ny, lx, ly } => build_rect(*nx, *ny, *lx, *ly).map_err(err),
        MeshSpec::Graph { weights, mass, grounded } => {
            let rows = read_numeric_csv(weights).map_err(|e| ConfigError(format!("graph weights: {e:#}")))?;
            let w = Matrix::from_rows(&rows).map_err(err)?;
            let m = match mass {
                Some(p) => read_numeric_csv(p)
                    .map_err(|e| ConfigError(format!("graph mass: {e:#}")))?
                    .into_iter()
                    .flatten()
                    .collect(),
                None => vec![1.0; w.rows()],
            };
            build_graph(&w, &m, grounded).map_err(err)
        }
    }
}

fn default_regions(spec: &MeshSpec, n: usize) -> Result<RegionConfig, ConfigError> {
    if matches!(spec, MeshSpec::Graph { .. }) {
        return bad("regions are required for graph meshes");
    }
    if n < 10 {
        return bad("default regions need at least 10 nodes; give regions explicitly");
    }
    let at = |f: usize| f * n / 10;
    Ok(RegionConfig::new((at(1)..at(3)).collect(), (at(2)..at(4)).collect(), (at(5)..at(7)).collect()))
}

fn build_potential(spec: &PotentialSpec, mesh: &Manifold, r: &RegionConfig, bound: f64, seed: u64) -> Result<Pot, ConfigError> {
    let n = mesh.len();
    let values = match spec {
        PotentialSpec::Zero => vec![0.0; n],
        PotentialSpec::Constant { value } => vec![*value; n],
        PotentialSpec::Uniform { low, high, seed: own, support } => {
            if !(low <= high) {
                return bad(format!("uniform potential needs low ≤ high, got [{low}, {high}]"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(own.unwrap_or(seed));
            let mut v = vec![*low; n];
            let nodes = match support {
                Some(s) => s.nodes()?,
                None => (0..n).collect(),
            };
            for i in nodes {
                if i >= n {
                    return bad(format!("potential support node {i} out of range"));
                }
                v[i] = if low < high { rng.random_range(*low..*high) } else { *low };
            }
            v
        }
        PotentialSpec::Bump { background, height, width, center } => {
            if !(*width > 0.0) {
                return bad("bump width must be positive");
            }
            let coords = mesh.coords().ok_or_else(|| ConfigError("bump potential needs node coordinates".into()))?;
            let dim = coords.cols();
            let c: Vec<f64> = match center {
                Some(c) if c.len() == dim => c.clone(),
                Some(c) => return bad(format!("bump center has {} coordinates, mesh has {dim}", c.len())),
                None => (0..dim)
                    .map(|d| r.omega_prime.iter().map(|&i| coords[(i, d)]).sum::<f64>() / r.omega_prime.len() as f64)
                    .collect(),
            };
            let mut v = vec![*background; n];
            for &i in &r.omega_prime {
                let d2: f64 = (0..dim).map(|d| (coords[(i, d)] - c[d]).powi(2)).sum();
                v[i] += height * (-d2 / (width * width)).exp();
            }
            v
        }
        PotentialSpec::Values { values } => values.clone(),
        PotentialSpec::Csv { path } => crate::io::read_potential_csv(path, n).map_err(|e| ConfigError(format!("{e:#}")))?,
    };
    if values.len() != n {
        return bad(format!("potential has {} values for {n} nodes", values.len()));
    }
    Potential::new(values, bound).map_err(|e| ConfigError(format!("potential: {e}")))
}

fn perturbed(q: &Pot, r: &RegionConfig, bound: f64, seed: u64) -> Pot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = q.values().to_vec();
    for &i in &r.omega_prime {
        v[i] = (v[i] + rng.random_range(0.0..0.5)).min(bound);
    }
    Potential::new(v, bound).expect("clamped to bound")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_builds() {
        let s = Setup::build(RunConfig::default()).unwrap();
        assert_eq!(s.mesh.len(), 40);
        assert_eq!(s.regions.omega0, (4..12).collect::<Vec<_>>());
        assert_eq!(s.betas.len(), 4);
        assert_ne!(s.q1.values().to_vec(), s.q2.values().to_vec());
    }

    #[test]
    fn exponent_out_of_range() {
        let cfg: RunConfig = serde_json::from_str(r#"{"s": 1.5}"#).unwrap();
        let e = Setup::build(cfg).err().unwrap();
        assert!(e.0.contains("s = 1.5"), "{e}");
    }

    #[test]
    fn source_inside_omega_prime_rejected() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"regions": {"omega0": {"start": 20, "end": 24}, "omega1": [5, 6], "omega_prime": {"start": 18, "end": 28}}}"#,
        )
        .unwrap();
        let e = Setup::build(cfg).err().unwrap();
        assert!(e.0.contains("omega0 \\ omega_prime is empty"), "{e}");
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sigma": 1}"#).is_err());
    }

    #[test]
    fn bump_on_interval() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"mesh": {"kind": "interval", "params": {"n": 20, "length": 1.0}},
                "regions": {"omega0": [1, 2], "omega1": [17, 18], "omega_prime": {"start": 8, "end": 12}},
                "potential": {"family": "bump", "background": 1.0, "height": 2.0, "width": 0.1}}"#,
        )
        .unwrap();
        let s = Setup::build(cfg).unwrap();
        let v = s.q1.values();
        assert_eq!(v[0], 1.0);
        assert!(v[9] > 2.5 && v[10] > 2.5);
    }

    #[test]
    fn graph_mesh_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let n: usize = 8;
        let rows: Vec<String> = (0..n)
            .map(|i| (0..n).map(|j| if i.abs_diff(j) == 1 { "1" } else { "0" }).collect::<Vec<_>>().join(","))
            .collect();
        std::fs::write(dir.path().join("w.csv"), rows.join("\n")).unwrap();
        let text = r#"{"mesh": {"kind": "graph", "params": {"weights": "w.csv", "mass": null, "grounded": [0]}},
                       "regions": {"omega0": [1, 2], "omega1": [5, 6], "omega_prime": [3]}}"#;
        let mut cfg: RunConfig = serde_json::from_str(text).unwrap();
        cfg.resolve_paths(dir.path());
        let s = Setup::build(cfg.clone()).unwrap();
        assert_eq!(s.mesh.len(), n - 1);
        cfg.regions = None;
        assert!(Setup::build(cfg).err().unwrap().0.contains("regions are required"));
    }
}
