//! Batch scenarios: TOML configuration in, JSON report and CSV tables out.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{
    appendix_identities, c6_by_quadrature, c7_by_quadrature, coefficients, combination_identity,
    combination_prefactor, expansion_terms, i2_direct_quadrature, CoefficientOverrides, ExpansionQuery,
};
use crate::error::{Error, Result};
use crate::geometry::{
    torus_threshold, weighted_curvature, Affine, BoundaryChart, BoundaryPoint, Constant, Expression,
    ProductPower, Quadratic, WeightField,
};
use crate::reduction::{
    boundary_critical_search, error_scaling_fit, reduced_gradient_d, remainder_bound_check, solve_d0,
    stability_degree_test, EpsilonSign, ErrorTerm, ScalingOptions, SearchOptions, Stability,
};
use crate::surface::{project, BoundarySurface, Ellipsoid, Sphere};

/// Environment variable overriding `output.dir`.
pub const OUT_DIR_ENV: &str = "HICRIT_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Identities,
    CriticalSearch,
    ExpansionSweep,
    ScalingFits,
    TorusExample,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Identities,
        ScenarioKind::CriticalSearch,
        ScenarioKind::ExpansionSweep,
        ScenarioKind::ScalingFits,
        ScenarioKind::TorusExample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Identities => "identities",
            ScenarioKind::CriticalSearch => "critical_search",
            ScenarioKind::ExpansionSweep => "expansion_sweep",
            ScenarioKind::ScalingFits => "scaling_fits",
            ScenarioKind::TorusExample => "torus_example",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ScenarioKind::Identities => "integral identities and closed-form constants c6, c7",
            ScenarioKind::CriticalSearch => "constrained critical points of a weight on a level-set boundary",
            ScenarioKind::ExpansionSweep => "reduced-energy expansion over a (d, epsilon) grid",
            ScenarioKind::ScalingFits => "epsilon-scaling of the remainder terms I1, I2, I3",
            ScenarioKind::TorusExample => "hole-size threshold and sign table of the torus-like domain",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == name)
            .ok_or_else(|| Error::Config(format!("unknown scenario kind '{name}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub identity: f64,
    pub ratio: f64,
    pub combination: f64,
    pub i2: f64,
    pub exponent: f64,
    pub r_squared: f64,
    pub position: f64,
    pub gradient: f64,
    pub hessian_step: f64,
    pub eigen_threshold: f64,
    pub root: f64,
    pub threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-8,
            ratio: 1e-13,
            combination: 1e-12,
            i2: 1e-6,
            exponent: 0.1,
            r_squared: 0.99,
            position: 1e-8,
            gradient: 1e-10,
            hessian_step: 1e-4,
            eigen_threshold: 1e-8,
            root: 1e-14,
            threshold: 1e-12,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        let all = [
            ("identity", self.identity),
            ("ratio", self.ratio),
            ("combination", self.combination),
            ("i2", self.i2),
            ("exponent", self.exponent),
            ("r_squared", self.r_squared),
            ("position", self.position),
            ("gradient", self.gradient),
            ("hessian_step", self.hessian_step),
            ("eigen_threshold", self.eigen_threshold),
            ("root", self.root),
            ("threshold", self.threshold),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerance '{name}' must be positive, got {v}")));
            }
        }
        if self.r_squared > 1.0 {
            return Err(Error::Config("tolerance 'r_squared' must not exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    ProductPower { exponents: Vec<u32> },
    Affine { coefficients: Vec<f64>, offset: f64 },
    Constant { value: f64 },
    Quadratic { matrix: Vec<Vec<f64>>, linear: Vec<f64>, constant: f64 },
    Expression { source: String },
}

impl WeightSpec {
    pub fn build(&self, n: usize) -> Result<Box<dyn WeightField>> {
        let check = |len: usize| {
            if len != n {
                Err(Error::Config(format!("weight has {len} coordinates, expected {n}")))
            } else {
                Ok(())
            }
        };
        Ok(match self {
            WeightSpec::ProductPower { exponents } => Box::new(ProductPower::new(n, exponents.clone())?),
            WeightSpec::Affine { coefficients, offset } => {
                check(coefficients.len())?;
                Box::new(Affine { coefficients: coefficients.clone(), offset: *offset })
            }
            WeightSpec::Constant { value } => Box::new(Constant { n, value: *value }),
            WeightSpec::Quadratic { matrix, linear, constant } => {
                check(linear.len())?;
                Box::new(Quadratic::new(matrix.clone(), linear.clone(), *constant)?)
            }
            WeightSpec::Expression { source } => Box::new(Expression::parse(n, source)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Sphere { center: Vec<f64>, radius: f64 },
    Ellipsoid { center: Vec<f64>, semi_axes: Vec<f64> },
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<Box<dyn BoundarySurface>> {
        Ok(match self {
            SurfaceSpec::Sphere { center, radius } => Box::new(Sphere::new(center.clone(), *radius)?),
            SurfaceSpec::Ellipsoid { center, semi_axes } => {
                Box::new(Ellipsoid::new(center.clone(), semi_axes.clone())?)
            }
        })
    }

    fn center(&self) -> &[f64] {
        match self {
            SurfaceSpec::Sphere { center, .. } | SurfaceSpec::Ellipsoid { center, .. } => center,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedPoint {
    pub point: Vec<f64>,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitiesSection {
    pub dimensions: Vec<usize>,
    /// dimensions for the ratio and prefactor checks
    pub ratio_dimensions: Vec<usize>,
    pub combination_draws: usize,
    pub i2_dimensions: Vec<usize>,
    /// `(d, ε)` pairs for the direct I₂ quadrature
    pub i2_pairs: Vec<(f64, f64)>,
}

impl Default for IdentitiesSection {
    fn default() -> Self {
        Self {
            dimensions: vec![5, 6, 7, 9],
            ratio_dimensions: (5..=12).collect(),
            combination_draws: 1000,
            i2_dimensions: vec![5, 6, 7],
            i2_pairs: vec![(1.0, 0.01), (2.0, 0.005), (0.5, -0.02)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub surface: SurfaceSpec,
    pub weight: WeightSpec,
    pub seeds: Vec<Vec<f64>>,
    /// additional seeds drawn around the surface center
    pub random_seeds: usize,
    pub expected: Vec<ExpectedPoint>,
    pub box_radius: f64,
    pub degree_samples: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            surface: SurfaceSpec::Ellipsoid { center: vec![0.0, 0.0], semi_axes: vec![3.0, 2.0] },
            weight: WeightSpec::Affine { coefficients: vec![1.0, 0.0], offset: 4.0 },
            seeds: vec![vec![1.0, 1.0], vec![-1.0, 0.5]],
            random_seeds: 6,
            expected: vec![
                ExpectedPoint { point: vec![-3.0, 0.0], stability: Stability::Min },
                ExpectedPoint { point: vec![3.0, 0.0], stability: Stability::Max },
            ],
            box_radius: 0.05,
            degree_samples: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointData {
    pub a: f64,
    pub dnu_a: f64,
    pub mean_curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub point: PointData,
    pub coefficients: CoefficientOverrides,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            point: PointData { a: 1.0, dnu_a: 0.0, mean_curvature: 1.0 },
            coefficients: CoefficientOverrides {
                c1: Some(1.0),
                c2: Some(0.5),
                c3: Some(0.25),
                c4: None,
                c5: Some(100.0),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    pub d: f64,
    pub curvature: f64,
    pub resolution: u32,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self { d: 1.0, curvature: 1.0, resolution: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorusSection {
    /// mean curvatures of `∂Ω` at the point closest to the axis
    pub mean_curvatures: Vec<f64>,
    /// `a(ξ_𝔪)` as multiples of the threshold
    pub threshold_factors: Vec<f64>,
    /// `a(ξ_𝔐)` values probed at the far point
    pub far_weights: Vec<f64>,
    /// `(x₁, x₂)` cross-sections of the domain, searched with `a = x₁`
    pub cross_sections: Vec<SurfaceSpec>,
}

impl Default for TorusSection {
    fn default() -> Self {
        Self {
            mean_curvatures: vec![0.5, 1.0, 2.0],
            threshold_factors: vec![0.5, 0.9, 1.0, 1.1, 2.0],
            far_weights: vec![0.1, 1.0, 10.0],
            cross_sections: vec![
                SurfaceSpec::Sphere { center: vec![3.0, 0.0], radius: 1.0 },
                SurfaceSpec::Ellipsoid { center: vec![4.0, 0.0], semi_axes: vec![1.5, 0.75] },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// adds the wall time to the report, which then differs between runs
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub epsilon_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub d_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub identities: IdentitiesSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default)]
    pub torus: TorusSection,
}

fn default_n() -> usize {
    5
}

impl ScenarioConfig {
    pub fn defaults(kind: ScenarioKind) -> Self {
        let mut c = Self {
            kind,
            name: kind.as_str().to_string(),
            n: 5,
            seed: 1,
            record_timing: false,
            epsilon_grid: None,
            d_grid: None,
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
            identities: IdentitiesSection::default(),
            search: SearchSection::default(),
            sweep: SweepSection::default(),
            scaling: ScalingSection::default(),
            torus: TorusSection::default(),
        };
        c.epsilon_grid = Some(c.resolved_epsilon_grid());
        c.d_grid = Some(c.resolved_d_grid());
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if c.name.is_empty() {
            c.name = c.kind.as_str().to_string();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolved_epsilon_grid(&self) -> Vec<f64> {
        self.epsilon_grid.clone().unwrap_or_else(|| match self.kind {
            ScenarioKind::ScalingFits => (0..6).map(|k| 1e-3 * 0.1f64.powi(k)).collect(),
            _ => vec![-0.02, -0.01, 0.01, 0.02],
        })
    }

    fn resolved_d_grid(&self) -> Vec<f64> {
        self.d_grid
            .clone()
            .unwrap_or_else(|| (0..41).map(|k| 0.05 * 1.1f64.powi(k)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 5 {
            return bad(format!("n must be at least 5, got {}", self.n));
        }
        if self.name.is_empty()
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            return bad(format!("name '{}' must be nonempty and filename-safe", self.name));
        }
        self.tolerances.validate()?;
        let eps = self.resolved_epsilon_grid();
        let ds = self.resolved_d_grid();
        let uses_eps = matches!(self.kind, ScenarioKind::ExpansionSweep | ScenarioKind::ScalingFits);
        if uses_eps {
            if eps.is_empty() {
                return bad("epsilon_grid must not be empty".into());
            }
            if eps.iter().any(|e| *e == 0.0 || !e.is_finite()) {
                return bad("epsilon_grid entries must be finite and nonzero".into());
            }
        }
        if self.kind == ScenarioKind::ExpansionSweep {
            if ds.is_empty() {
                return bad("d_grid must not be empty".into());
            }
            if ds.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return bad("d_grid entries must be positive".into());
            }
            if !(self.sweep.point.a > 0.0) {
                return bad("sweep.point.a must be positive".into());
            }
        }
        match self.kind {
            ScenarioKind::Identities => {
                let id = &self.identities;
                if id.dimensions.iter().chain(&id.ratio_dimensions).chain(&id.i2_dimensions).any(|&n| n < 5) {
                    return bad("identity dimensions must be at least 5".into());
                }
                if id.i2_pairs.iter().any(|(d, e)| !(*d > 0.0) || *e == 0.0) {
                    return bad("i2_pairs need d > 0 and epsilon != 0".into());
                }
            }
            ScenarioKind::CriticalSearch => {
                let s = &self.search;
                let dim = s.surface.center().len();
                if s.seeds.is_empty() && s.random_seeds == 0 {
                    return bad("critical_search needs seeds".into());
                }
                if s.seeds.iter().chain(s.expected.iter().map(|e| &e.point)).any(|p| p.len() != dim) {
                    return bad(format!("seeds and expected points must have {dim} coordinates"));
                }
                if !(s.box_radius > 0.0) || s.degree_samples == 0 {
                    return bad("box_radius and degree_samples must be positive".into());
                }
            }
            ScenarioKind::ScalingFits => {
                if eps.len() < 6 {
                    return bad("scaling_fits needs at least 6 epsilon values".into());
                }
                if !(self.scaling.d > 0.0) || self.scaling.resolution == 0 {
                    return bad("scaling.d and scaling.resolution must be positive".into());
                }
            }
            ScenarioKind::TorusExample => {
                let t = &self.torus;
                if t.mean_curvatures.is_empty() || t.mean_curvatures.iter().any(|h| !(*h > 0.0)) {
                    return bad("torus.mean_curvatures must be nonempty and positive".into());
                }
                if t.threshold_factors.iter().chain(&t.far_weights).any(|f| !(*f > 0.0)) {
                    return bad("torus factors and weights must be positive".into());
                }
                if !(self.search.box_radius > 0.0) || self.search.degree_samples == 0 {
                    return bad("box_radius and degree_samples must be positive".into());
                }
                for s in &t.cross_sections {
                    let c = s.center();
                    if c.len() != 2 {
                        return bad("cross-sections are planar".into());
                    }
                }
            }
            ScenarioKind::ExpansionSweep => {}
        }
        Ok(())
    }

    /// Output directory, with the environment override applied.
    pub fn out_dir(&self) -> PathBuf {
        match std::env::var(OUT_DIR_ENV) {
            Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => PathBuf::from(&self.output.dir),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: Option<f64>,
    pub reference: Option<f64>,
    pub residual: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CheckRecord {
    fn compare(name: String, value: f64, reference: f64, residual: f64, tolerance: f64) -> Self {
        Self {
            name,
            value: Some(value),
            reference: Some(reference),
            residual: Some(residual),
            tolerance: Some(tolerance),
            pass: residual <= tolerance,
            error: None,
        }
    }

    fn flag(name: String, ok: bool) -> Self {
        Self { name, value: None, reference: None, residual: None, tolerance: None, pass: ok, error: None }
    }

    fn failed(name: String, e: &Error) -> Self {
        Self {
            name,
            value: None,
            reference: None,
            residual: None,
            tolerance: None,
            pass: false,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub hicrit: String,
    pub report_schema: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: ScenarioConfig,
    pub checks: Vec<CheckRecord>,
    pub pass: bool,
    pub tables: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub versions: Versions,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// A flat table for external plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        w.write_record(&self.header).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Default)]
struct Outcome {
    checks: Vec<CheckRecord>,
    tables: Vec<Table>,
}

impl Outcome {
    fn record(&mut self, name: String, r: Result<CheckRecord>) {
        self.checks.push(r.unwrap_or_else(|e| CheckRecord::failed(name, &e)));
    }
}

fn relative(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs()
}

fn run_identities(c: &ScenarioConfig, out: &mut Outcome) {
    let tol = &c.tolerances;
    let id = &c.identities;
    for &n in &id.dimensions {
        match appendix_identities(n, tol.identity) {
            Ok(records) => {
                for r in records {
                    out.checks.push(CheckRecord::compare(
                        format!("appendix.{}.n{n}", r.name),
                        r.lhs,
                        r.rhs,
                        relative(r.lhs, r.rhs),
                        tol.identity,
                    ));
                }
            }
            Err(e) => out.checks.push(CheckRecord::failed(format!("appendix.n{n}"), &e)),
        }
        let name = format!("c6_definition.n{n}");
        out.record(
            name.clone(),
            (|| {
                let k = coefficients(n)?;
                let q = c6_by_quadrature(n, 1e-3 * tol.identity)?;
                Ok(CheckRecord::compare(name, q, k.c6, relative(q, k.c6), tol.identity))
            })(),
        );
        let name = format!("c7_definition.n{n}");
        out.record(
            name.clone(),
            (|| {
                let k = coefficients(n)?;
                let q = c7_by_quadrature(n, (1e-3 * tol.identity).max(1e-12))?;
                Ok(CheckRecord::compare(name, q, k.c7, relative(q, k.c7), tol.identity))
            })(),
        );
    }
    for &n in &id.ratio_dimensions {
        let name = format!("c7_over_c6.n{n}");
        out.record(
            name.clone(),
            coefficients(n).map(|k| {
                let expected = 2.0 / (n as f64 - 1.0);
                let ratio = k.c7 / k.c6;
                CheckRecord::compare(name, ratio, expected, (ratio - expected).abs(), tol.ratio)
            }),
        );
        let name = format!("combination_prefactor.n{n}");
        out.record(
            name.clone(),
            (|| {
                let k = coefficients(n)?;
                let p = combination_prefactor(n)?;
                Ok(CheckRecord::compare(name, p, k.c6, relative(p, k.c6), tol.ratio))
            })(),
        );
    }
    if id.combination_draws > 0 {
        let name = format!("combination_identity.n{}", c.n);
        out.record(
            name.clone(),
            (|| {
                let k = coefficients(c.n)?;
                let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
                let mut worst: f64 = 0.0;
                for _ in 0..id.combination_draws {
                    let (l, r) = combination_identity(
                        &k,
                        rng.random_range(0.1..10.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(0.1..10.0),
                        rng.random_range(1e-4..0.1) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    )?;
                    worst = worst.max((l - r).abs() / l.abs());
                }
                Ok(CheckRecord::compare(name, worst, 0.0, worst, tol.combination))
            })(),
        );
    }
    let mut table = Table::new("i2", &["n", "d", "epsilon", "quadrature", "c7_d_eps", "relative"]);
    for &n in &id.i2_dimensions {
        for &(d, e) in &id.i2_pairs {
            let name = format!("i2_direct.n{n}.d{d}.eps{e}");
            out.record(
                name.clone(),
                (|| {
                    let k = coefficients(n)?;
                    let v = i2_direct_quadrature(n, d, e, 1.0, tol.i2)?;
                    let reference = k.c7 * d * e.abs();
                    let rel = relative(v, reference);
                    table.push([n.to_string(), num(d), num(e), num(v), num(reference), num(rel)]);
                    Ok(CheckRecord::compare(name, v, reference, rel, tol.i2))
                })(),
            );
        }
    }
    out.tables.push(table);
}

fn search_options(c: &ScenarioConfig) -> SearchOptions {
    SearchOptions {
        gradient_tol: c.tolerances.gradient,
        hessian_step: c.tolerances.hessian_step,
        eigen_threshold: c.tolerances.eigen_threshold,
        ..SearchOptions::default()
    }
}

fn candidate_table(name: &str) -> Table {
    Table::new(
        name,
        &["section", "x1", "x2", "stability", "weight", "h_a", "epsilon_side", "d0", "gradient_norm", "converged"],
    )
}

#[allow(clippy::too_many_arguments)]
fn run_search_on(
    label: &str,
    surface_spec: &SurfaceSpec,
    weight: &dyn WeightField,
    seeds: &[Vec<f64>],
    expected: &[ExpectedPoint],
    c: &ScenarioConfig,
    out: &mut Outcome,
    table: &mut Table,
) -> Result<()> {
    let surface = surface_spec.build()?;
    let mut opts = search_options(c);
    let k = coefficients(c.n)?;
    if let (Some(c4), Some(c5)) = (k.with_overrides(&c.sweep.coefficients)?.c4, c.sweep.coefficients.c5) {
        opts.rate_constants = Some((c4, c5));
    }
    let found = boundary_critical_search(weight, surface.as_ref(), seeds, &opts)?;
    let stalled = found.iter().filter(|f| !f.converged).count();
    out.checks.push(CheckRecord::compare(
        format!("{label}.converged"),
        stalled as f64,
        0.0,
        stalled as f64,
        0.5,
    ));
    for f in &found {
        let side = serde_json::to_value(f.epsilon_side).ok().and_then(|v| v.as_str().map(String::from));
        let stability = serde_json::to_value(f.stability).ok().and_then(|v| v.as_str().map(String::from));
        let mut row = vec![label.to_string()];
        row.extend(f.xi0.iter().take(2).map(|v| num(*v)));
        row.extend([
            stability.unwrap_or_default(),
            num(f.weight),
            opt(f.h_a),
            side.unwrap_or_default(),
            opt(f.d0),
            num(f.gradient_norm),
            f.converged.to_string(),
        ]);
        table.push(row);
    }
    for (i, e) in expected.iter().enumerate() {
        let name = format!("{label}.expected{i}");
        let nearest = found
            .iter()
            .map(|f| {
                let dist = f.xi0.iter().zip(&e.point).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                (dist, f)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match nearest {
            Some((dist, f)) => {
                let mut rec = CheckRecord::compare(name, dist, 0.0, dist, c.tolerances.position);
                rec.pass &= f.stability == e.stability;
                out.checks.push(rec);
            }
            None => out.checks.push(CheckRecord::flag(name, false)),
        }
    }
    for (i, f) in found.iter().enumerate() {
        if f.stability == Stability::Unstable {
            continue;
        }
        let name = format!("{label}.degree{i}");
        let verdict = stability_degree_test(weight, surface.as_ref(), f, c.search.box_radius, c.search.degree_samples, c.seed, &opts);
        out.record(name.clone(), verdict.map(|ok| CheckRecord::flag(name, ok)));
    }
    Ok(())
}

fn run_critical_search(c: &ScenarioConfig, out: &mut Outcome) {
    let s = &c.search;
    let mut table = candidate_table("candidates");
    let result = (|| -> Result<()> {
        let dim = s.surface.center().len();
        let weight = s.weight.build(dim)?;
        let mut seeds = s.seeds.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let surface = s.surface.build()?;
        for _ in 0..s.random_seeds {
            let v: Vec<f64> = s.surface.center().iter().map(|c| c + rng.random_range(-1.0..1.0)).collect();
            seeds.push(project(surface.as_ref(), &v).unwrap_or_else(|_| surface.anchor()));
        }
        run_search_on("search", &s.surface, weight.as_ref(), &seeds, &s.expected, c, out, &mut table)
    })();
    if let Err(e) = result {
        out.checks.push(CheckRecord::failed("search".into(), &e));
    }
    out.tables.push(table);
}

/// Rows `(d, ε, J̃, ∂_d J̃, curvature term, d₀ marker)` of the leading expansion.
pub fn emit_expansion_surface(c: &ScenarioConfig) -> Result<Table> {
    let k = coefficients(c.n)?.with_overrides(&c.sweep.coefficients)?;
    let p = c.sweep.point;
    let mut table = Table::new(
        "surface",
        &["d", "epsilon", "energy", "gradient_d", "curvature_term", "h_a", "d0", "bracket"],
    );
    let ds = c.resolved_d_grid();
    for &e in &c.resolved_epsilon_grid() {
        let sign = EpsilonSign::of(e).ok_or_else(|| Error::Config("epsilon must be nonzero".into()))?;
        let c4 = k.c4.ok_or(Error::SymbolicCoefficient("c4"))?;
        let c5 = k.c5.ok_or(Error::SymbolicCoefficient("c5"))?;
        for (i, &d) in ds.iter().enumerate() {
            let q = ExpansionQuery::new(d, p.a, p.dnu_a, p.mean_curvature, e)?;
            let terms = expansion_terms(&k, &q, &CoefficientOverrides::default())?;
            let h_a = 2.0 / (c.n as f64 - 1.0) * p.dnu_a / p.a - p.mean_curvature;
            let d0 = solve_d0(c4, c5, h_a, sign)?.d0;
            // the root lies in [d_i, d_{i+1})
            let bracket = match (d0, ds.get(i + 1)) {
                (Some(r), Some(&next)) => d <= r && r < next,
                _ => false,
            };
            table.push([
                num(d),
                num(e),
                num(terms.total()),
                num(p.a * reduced_gradient_d(c4, c5, h_a, d, e)),
                num(terms.curvature),
                num(h_a),
                opt(d0),
                (bracket as u8).to_string(),
            ]);
        }
    }
    Ok(table)
}

fn run_expansion_sweep(c: &ScenarioConfig, out: &mut Outcome) {
    let tol = &c.tolerances;
    let table = match emit_expansion_surface(c) {
        Ok(t) => t,
        Err(e) => {
            out.checks.push(CheckRecord::failed("surface".into(), &e));
            return;
        }
    };
    let ds = c.resolved_d_grid();
    let eps = c.resolved_epsilon_grid();
    let expected_rows = ds.len() * eps.len();
    out.checks.push(CheckRecord::compare(
        "surface.rows".into(),
        table.rows.len() as f64,
        expected_rows as f64,
        (table.rows.len() as f64 - expected_rows as f64).abs(),
        0.5,
    ));
    let p = c.sweep.point;
    let result = (|| -> Result<()> {
        let k = coefficients(c.n)?.with_overrides(&c.sweep.coefficients)?;
        let c4 = k.c4.ok_or(Error::SymbolicCoefficient("c4"))?;
        let c5 = k.c5.ok_or(Error::SymbolicCoefficient("c5"))?;
        let h_a = 2.0 / (c.n as f64 - 1.0) * p.dnu_a / p.a - p.mean_curvature;
        for &e in &eps {
            let sign = EpsilonSign::of(e).ok_or_else(|| Error::Config("epsilon must be nonzero".into()))?;
            let grads: Vec<f64> = ds.iter().map(|&d| reduced_gradient_d(c4, c5, h_a, d, e)).collect();
            let changes = grads.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
            match solve_d0(c4, c5, h_a, sign)?.d0 {
                Some(d0) => {
                    let g = reduced_gradient_d(c4, c5, h_a, d0, e);
                    out.checks.push(CheckRecord::compare(format!("d0_root.eps{e}"), g, 0.0, g.abs(), tol.root));
                    let lo = ds.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = ds.iter().cloned().fold(0.0, f64::max);
                    if d0 > lo && d0 < hi {
                        let inside = ds.windows(2).zip(grads.windows(2)).any(|(dw, gw)| {
                            dw[0].min(dw[1]) <= d0 && d0 <= dw[0].max(dw[1]) && gw[0] * gw[1] <= 0.0
                        });
                        out.checks.push(CheckRecord::flag(format!("d0_bracket.eps{e}"), inside && changes == 1));
                    }
                }
                None => out.checks.push(CheckRecord::flag(format!("no_root.eps{e}"), changes == 0)),
            }
        }
        let (l, r) = combination_identity(&coefficients(c.n)?, p.a, p.dnu_a, p.mean_curvature, 1.0, 1.0)?;
        let residual = if l == 0.0 { (l - r).abs() } else { (l - r).abs() / l.abs() };
        out.checks.push(CheckRecord::compare("combination_identity".into(), l, r, residual, tol.combination));
        Ok(())
    })();
    if let Err(e) = result {
        out.checks.push(CheckRecord::failed("sweep".into(), &e));
    }
    out.tables.push(table);
}

fn run_scaling_fits(c: &ScenarioConfig, out: &mut Outcome) {
    let tol = &c.tolerances;
    let grid = c.resolved_epsilon_grid();
    let opts = ScalingOptions {
        n: c.n,
        d: c.scaling.d,
        curvature: c.scaling.curvature,
        resolution: c.scaling.resolution,
        r_squared_threshold: tol.r_squared,
    };
    let mut table = Table::new("norms", &["term", "epsilon", "norm"]);
    for term in ErrorTerm::ALL {
        let label = format!("{term:?}");
        match error_scaling_fit(term, &grid, &opts) {
            Ok(fit) => {
                for (e, v) in fit.epsilons.iter().zip(&fit.norms) {
                    table.push([label.clone(), num(*e), num(*v)]);
                }
                out.checks.push(CheckRecord::compare(
                    format!("r_squared.{label}"),
                    fit.r_squared,
                    1.0,
                    1.0 - fit.r_squared,
                    1.0 - tol.r_squared,
                ));
                match term {
                    ErrorTerm::I1 => {
                        let mut rec = CheckRecord::flag("log_factor.I1".into(), fit.log_coefficient_flag);
                        rec.value = Some(fit.log_model_rss);
                        rec.reference = Some(fit.power_rss);
                        out.checks.push(rec);
                    }
                    _ => out.checks.push(CheckRecord::compare(
                        format!("exponent.{label}"),
                        fit.exponent,
                        1.0,
                        (fit.exponent - 1.0).abs(),
                        tol.exponent,
                    )),
                }
            }
            Err(e) => out.checks.push(CheckRecord::failed(format!("fit.{label}"), &e)),
        }
    }
    match remainder_bound_check(&grid, &opts) {
        Ok(r) => {
            for (e, t) in r.epsilons.iter().zip(&r.totals) {
                table.push(["total".into(), num(*e), num(*t)]);
            }
            out.checks.push(CheckRecord::compare(
                "remainder.r_squared".into(),
                r.r_squared,
                1.0,
                1.0 - r.r_squared,
                1.0 - tol.r_squared,
            ));
            let mut rec = CheckRecord::flag("remainder.constant".into(), r.constant.is_finite() && r.constant > 0.0);
            rec.value = Some(r.constant);
            out.checks.push(rec);
        }
        Err(e) => out.checks.push(CheckRecord::failed("remainder".into(), &e)),
    }
    out.tables.push(table);
}

fn search_cross_section(label: &str, s: &SurfaceSpec, c: &ScenarioConfig, out: &mut Outcome, table: &mut Table) -> Result<()> {
    let weight = Affine { coefficients: vec![1.0, 0.0], offset: 0.0 };
    let (center, half_width) = match s {
        SurfaceSpec::Sphere { center, radius } => (center.clone(), *radius),
        SurfaceSpec::Ellipsoid { center, semi_axes } => (center.clone(), semi_axes[0]),
    };
    let seeds: Vec<Vec<f64>> = (0..6)
        .map(|k| {
            let th = 0.4 + k as f64;
            vec![center[0] + th.cos(), center[1] + th.sin()]
        })
        .collect();
    let expected = vec![
        ExpectedPoint { point: vec![center[0] - half_width, center[1]], stability: Stability::Min },
        ExpectedPoint { point: vec![center[0] + half_width, center[1]], stability: Stability::Max },
    ];
    run_search_on(label, s, &weight, &seeds, &expected, c, out, table)
}

fn run_torus_example(c: &ScenarioConfig, out: &mut Outcome) {
    let tol = &c.tolerances;
    let t = &c.torus;
    let n = c.n;
    let mut signs = Table::new("signs", &["mean_curvature", "point", "a", "h_a"]);
    let result = (|| -> Result<()> {
        let weight = ProductPower::new(n, vec![2])?;
        let at = |a: f64, nu1: f64, h: f64| -> Result<f64> {
            let mut x = vec![0.0; n];
            x[0] = a;
            let mut nu = vec![0.0; n];
            nu[0] = nu1;
            let point = BoundaryPoint::new(x, nu, BoundaryChart::quadratic(vec![h; n - 1])?)?;
            weighted_curvature(&weight, &point)
        };
        for &h in &t.mean_curvatures {
            let a_star = torus_threshold(h, n)?;
            let expected = 2.0 / ((n as f64 - 1.0) * h);
            out.checks.push(CheckRecord::compare(
                format!("threshold.H{h}"),
                a_star,
                expected,
                relative(a_star, expected),
                tol.threshold,
            ));
            for &f in &t.threshold_factors {
                let v = at(f * a_star, 1.0, h)?;
                signs.push([num(h), "near".into(), num(f * a_star), num(v)]);
                let name = format!("near_sign.H{h}.factor{f}");
                let rec = if (f - 1.0).abs() <= f64::EPSILON {
                    CheckRecord::compare(name, v, 0.0, v.abs(), tol.threshold)
                } else {
                    let ok = if f < 1.0 { v > 0.0 } else { v < 0.0 };
                    let mut r = CheckRecord::flag(name, ok);
                    r.value = Some(v);
                    r
                };
                out.checks.push(rec);
            }
            for &a in &t.far_weights {
                let v = at(a, -1.0, h)?;
                signs.push([num(h), "far".into(), num(a), num(v)]);
                let mut r = CheckRecord::flag(format!("far_negative.H{h}.a{a}"), v < 0.0);
                r.value = Some(v);
                out.checks.push(r);
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        out.checks.push(CheckRecord::failed("torus.signs".into(), &e));
    }
    out.tables.push(signs);

    let mut table = candidate_table("cross_sections");
    for (i, s) in t.cross_sections.iter().enumerate() {
        let label = format!("section{i}");
        let result = search_cross_section(&label, s, c, out, &mut table);
        if let Err(e) = result {
            out.checks.push(CheckRecord::failed(label, &e));
        }
    }
    out.tables.push(table);
}

/// Runs every check of the scenario; failures are recorded, never propagated.
pub fn run_scenario(config: &ScenarioConfig) -> Result<(RunReport, Vec<Table>)> {
    config.validate()?;
    let start = Instant::now();
    let mut out = Outcome::default();
    match config.kind {
        ScenarioKind::Identities => run_identities(config, &mut out),
        ScenarioKind::CriticalSearch => run_critical_search(config, &mut out),
        ScenarioKind::ExpansionSweep => run_expansion_sweep(config, &mut out),
        ScenarioKind::ScalingFits => run_scaling_fits(config, &mut out),
        ScenarioKind::TorusExample => run_torus_example(config, &mut out),
    }
    let pass = !out.checks.is_empty() && out.checks.iter().all(|c| c.pass);
    let tables = out.tables.iter().map(|t| format!("{}.{}.csv", config.name, t.name)).collect();
    let mut scenario = config.clone();
    scenario.epsilon_grid = Some(config.resolved_epsilon_grid());
    scenario.d_grid = Some(config.resolved_d_grid());
    let report = RunReport {
        scenario,
        checks: out.checks,
        pass,
        tables,
        wall_time_s: config.record_timing.then(|| start.elapsed().as_secs_f64()),
        versions: Versions { hicrit: env!("CARGO_PKG_VERSION").to_string(), report_schema: 1 },
    };
    Ok((report, out.tables))
}

/// Runs the scenario and writes `<name>.report.json` plus one CSV per table
/// into `dir`; returns the report and the written paths.
pub fn execute(config: &ScenarioConfig, dir: &Path) -> Result<(RunReport, Vec<PathBuf>)> {
    let (report, tables) = run_scenario(config)?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let report_path = dir.join(format!("{}.report.json", config.name));
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&report_path, json + "\n")?;
    written.push(report_path);
    for t in &tables {
        let path = dir.join(format!("{}.{}.csv", config.name, t.name));
        t.write_csv(&path)?;
        written.push(path);
    }
    Ok((report, written))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for kind in ScenarioKind::ALL {
            let c = ScenarioConfig::defaults(kind);
            c.validate().unwrap();
            let text = c.to_toml().unwrap();
            assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), c, "{kind:?}");
        }
    }

    #[test]
    fn validation_errors() {
        let err = |text: &str| ScenarioConfig::from_toml(text).unwrap_err();
        assert!(matches!(err("kind = \"nope\""), Error::Config(_)));
        assert!(matches!(err("kind = \"expansion_sweep\"\nepsilon_grid = []"), Error::Config(_)));
        assert!(matches!(err("kind = \"identities\"\nn = 4"), Error::Config(_)));
        assert!(matches!(err("kind = \"identities\"\n[tolerances]\nidentity = 0.0"), Error::Config(_)));
        assert!(matches!(err("kind = \"scaling_fits\"\nepsilon_grid = [0.1, 0.05]"), Error::Config(_)));
        assert!(matches!(err("kind = \"identities\"\nbogus = 1"), Error::Config(_)));
        assert!(matches!(err("kind = \"identities\"\nname = \"../x\""), Error::Config(_)));
    }

    #[test]
    fn torus_scenario_passes() {
        let (report, tables) = run_scenario(&ScenarioConfig::defaults(ScenarioKind::TorusExample)).unwrap();
        let failures: Vec<_> = report.failures().collect();
        assert!(report.pass, "{failures:?}");
        assert!(report.checks.iter().any(|c| c.name == "threshold.H1" && c.value == Some(0.5)));
        assert_eq!(tables.len(), 2);
    }

    #[test]
    fn sweep_scenario_passes() {
        let c = ScenarioConfig::defaults(ScenarioKind::ExpansionSweep);
        let (report, tables) = run_scenario(&c).unwrap();
        let failures: Vec<_> = report.failures().collect();
        assert!(report.pass, "{failures:?}");
        let rows = tables[0].rows.len();
        assert_eq!(rows, c.resolved_d_grid().len() * c.resolved_epsilon_grid().len());
    }

    #[test]
    fn curvature_column_follows_sign() {
        let mut c = ScenarioConfig::defaults(ScenarioKind::ExpansionSweep);
        c.epsilon_grid = Some(vec![0.01]);
        c.d_grid = Some(vec![1.0]);
        let value = |c: &ScenarioConfig| -> f64 { emit_expansion_surface(c).unwrap().rows[0][4].parse().unwrap() };
        c.sweep.point = PointData { a: 1.0, dnu_a: 0.0, mean_curvature: 1.0 };
        let negative = value(&c);
        c.sweep.point = PointData { a: 1.0, dnu_a: 0.0, mean_curvature: -1.0 };
        let positive = value(&c);
        assert!(negative < 0.0 && positive > 0.0);
    }

    #[test]
    fn missing_coefficient_is_reported() {
        let mut c = ScenarioConfig::defaults(ScenarioKind::ExpansionSweep);
        c.sweep.coefficients.c5 = None;
        assert!(matches!(emit_expansion_surface(&c), Err(Error::SymbolicCoefficient("c5"))));
        let (report, _) = run_scenario(&c).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn search_scenario_passes() {
        let (report, _) = run_scenario(&ScenarioConfig::defaults(ScenarioKind::CriticalSearch)).unwrap();
        let failures: Vec<_> = report.failures().collect();
        assert!(report.pass, "{failures:?}");
    }
}
