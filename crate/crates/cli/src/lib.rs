//! Configuration-driven driver around `capillarity`: verification tables,
//! isovolumetric minimization, minimax search, sphere scans and exports.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use capillarity::analytic::{level_brackets, newtonian_potential, s_t, sphere_exact, sphere_map};
use capillarity::export::{csv_string, obj_string};
use capillarity::fields::{ball_integral, check_conditions, BallQuadrature, FieldSpec, SamplingPlan, ScalarField};
use capillarity::functionals::{barycenter, evaluate, retract_to_volume, SurfaceMap};
use capillarity::mesh::{build_icosphere, SphereMesh, MAX_LEVEL};
use capillarity::minimax::{barycenter_degree, build_ball_grid, deform_family, estimate_levels, homotopy_check, init_family};
use capillarity::optimize::{constrained_descent, DescentOptions, TrajectoryRow};
use capillarity::samples::perturb;
use capillarity::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: capillarity::Error,
    },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 validation, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical { .. } | CliError::Verification(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn numerical(context: &str) -> impl FnOnce(capillarity::Error) -> CliError + '_ {
    move |source| match source {
        capillarity::Error::Config(msg) => CliError::Validation(format!("{context}: {msg}")),
        source => CliError::Numerical { context: context.to_string(), source },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Verify,
    FieldCheck,
    Minimize,
    Minimax,
    SphereScan,
    Export,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Verify => "verify",
            Command::FieldCheck => "field-check",
            Command::Minimize => "minimize",
            Command::Minimax => "minimax",
            Command::SphereScan => "sphere-scan",
            Command::Export => "export",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative tolerance of the verification table; `None` picks it from the level.
    pub verify_rel: Option<f64>,
    pub residual_tol: f64,
    pub max_iters: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = DescentOptions::default();
        Self { verify_rel: None, residual_tol: d.residual_tol, max_iters: d.max_iters }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_field")]
    pub field: FieldSpec,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_level")]
    pub level: u32,
    /// Outer radius of the parameter ball, in units of `s_t`.
    #[serde(rename = "R", default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_ball_res")]
    pub ball_res: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Relative size of the initial perturbation for `minimize`.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Names of verification rows to run; `None` runs all of them.
    #[serde(default)]
    pub verify_select: Option<Vec<String>>,
    #[serde(default = "default_scan")]
    pub scan_radii: Vec<f64>,
    /// Sphere center for `export`, in units of `s_t`.
    #[serde(default)]
    pub center: [f64; 3],
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_field() -> FieldSpec {
    FieldSpec::Constant { k: 0.0 }
}
fn default_t() -> f64 {
    1.0
}
fn default_level() -> u32 {
    4
}
fn default_radius() -> f64 {
    20.0
}
fn default_ball_res() -> usize {
    3
}
fn default_sweeps() -> usize {
    50
}
fn default_noise() -> f64 {
    0.05
}
fn default_scan() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        serde_json::from_value(serde_json::json!({ "command": command })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Validation(msg));
        if !(self.t > 0.0 && self.t.is_finite()) {
            return bad(format!("`t` must be positive and finite, got {}", self.t));
        }
        if self.level > MAX_LEVEL {
            return bad(format!("`level` must be at most {MAX_LEVEL}, got {}", self.level));
        }
        if !(self.radius > 1.0 && self.radius.is_finite()) {
            return bad(format!("`R` must exceed 1, got {}", self.radius));
        }
        if self.ball_res < 2 {
            return bad(format!("`ball_res` must be at least 2, got {}", self.ball_res));
        }
        if self.sweeps == 0 {
            return bad("`sweeps` must be positive".into());
        }
        if !(self.noise >= 0.0 && self.noise < 1.0) {
            return bad(format!("`noise` must lie in [0, 1), got {}", self.noise));
        }
        if let Some(tol) = self.tolerances.verify_rel {
            if tol.is_nan() || tol <= 0.0 {
                return bad(format!("`tolerances.verify_rel` must be positive, got {tol}"));
            }
        }
        if self.scan_radii.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("`scan_radii` must be finite and non-negative".into());
        }
        if self.workers == Some(0) {
            return bad("`workers` must be positive".into());
        }
        self.descent()?;
        self.field.validate().map_err(|e| CliError::Validation(format!("`field`: {e}")))
    }

    fn descent(&self) -> CliResult<DescentOptions> {
        let opts = DescentOptions {
            residual_tol: self.tolerances.residual_tol,
            max_iters: self.tolerances.max_iters,
            ..DescentOptions::default()
        };
        opts.validate().map_err(|e| CliError::Validation(format!("`tolerances`: {e}")))?;
        Ok(opts)
    }

    /// Hash of everything that determines the numeric outputs.
    pub fn hash(&self) -> String {
        let mut key = self.clone();
        key.output_dir = PathBuf::new();
        key.workers = None;
        let digest = Sha256::digest(serde_json::to_vec(&key).expect("config serializes"));
        hex::encode(&digest[..6])
    }
}

/// Parses the short field syntax `constant:k`, `radial:a[:beta]`,
/// `bump:amplitude:radius[:cx:cy:cz]`, or a JSON field spec.
pub fn parse_field(text: &str) -> CliResult<FieldSpec> {
    let text = text.trim();
    if text.starts_with('{') {
        return serde_json::from_str(text).map_err(|e| CliError::Validation(format!("`field`: {e}")));
    }
    let mut parts = text.split(':');
    let kind = parts.next().unwrap_or_default();
    let nums: Vec<f64> = parts
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Validation(format!("`field`: bad number `{s}` in `{text}`"))))
        .collect::<CliResult<_>>()?;
    let spec = match (kind, nums.as_slice()) {
        ("constant", [k]) => FieldSpec::Constant { k: *k },
        ("radial", [a]) => FieldSpec::Radial { a: *a, beta: 1.0 },
        ("radial", [a, beta]) => FieldSpec::Radial { a: *a, beta: *beta },
        ("bump", [amplitude, radius]) => FieldSpec::Bump { amplitude: *amplitude, center: [0.0; 3], radius: *radius },
        ("bump", [amplitude, radius, x, y, z]) => {
            FieldSpec::Bump { amplitude: *amplitude, center: [*x, *y, *z], radius: *radius }
        }
        _ => return Err(CliError::Validation(format!("`field`: cannot parse `{text}`"))),
    };
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    /// Relative error, or relative violation for inequalities.
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub level: u32,
    pub tolerance: f64,
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect()
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<28} {:>16} {:>16} {:>10} {:>10}  result\n", "identity", "measured", "expected", "error", "tol");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<28} {:>16.9e} {:>16.9e} {:>10.2e} {:>10.2e}  {}\n",
                r.name,
                r.measured,
                r.expected,
                r.error,
                r.tolerance,
                if r.pass { "pass" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Relative tolerance of the sphere identities at a given mesh level.
pub fn verify_tolerance(level: u32) -> f64 {
    match level {
        0..=2 => 2e-2,
        3 => 1e-2,
        4 => 4e-3,
        _ => 1e-3,
    }
}

pub const VERIFY_ROWS: [&str; 13] = [
    "dirichlet_sphere",
    "area_sphere",
    "volume_sphere",
    "isoperimetric_lower",
    "area_below_dirichlet",
    "weighted_volume_constant",
    "weighted_volume_radial",
    "newtonian_0",
    "newtonian_0.5",
    "newtonian_1",
    "newtonian_2",
    "newtonian_5",
    "newtonian_peak",
];

/// Sphere identities, the isoperimetric chain and the Newtonian potential at
/// the given level. `select = Some(&[])` yields an empty table.
pub fn verify_suite(level: u32, select: Option<&[String]>, tolerance: Option<f64>) -> CliResult<VerifyReport> {
    let tol = tolerance.unwrap_or_else(|| verify_tolerance(level));
    let wanted = |name: &str| select.is_none_or(|s| s.iter().any(|x| x == name));
    if let Some(s) = select {
        if let Some(unknown) = s.iter().find(|x| !VERIFY_ROWS.contains(&x.as_str())) {
            return Err(CliError::Validation(format!("`verify_select`: unknown row `{unknown}`")));
        }
    }
    let mut rows = Vec::new();
    let mut push_eq = |name: &str, measured: f64, expected: f64| {
        let error = (measured - expected).abs() / expected.abs();
        rows.push(VerifyRow { name: name.into(), measured, expected, error, tolerance: tol, pass: error <= tol });
    };
    if !VERIFY_ROWS.iter().any(|n| wanted(n)) {
        return Ok(VerifyReport { level, tolerance: tol, rows: Vec::new() });
    }

    let mesh = Arc::new(build_icosphere(level).map_err(numerical("mesh"))?);
    let omega = SurfaceMap::identity(Arc::clone(&mesh));
    let zero = ScalarField::zero();
    let r = evaluate(&omega, &zero).map_err(numerical("sphere functionals"))?;
    let s = capillarity::analytic::isoperimetric_constant();
    if wanted("dirichlet_sphere") {
        push_eq("dirichlet_sphere", r.dirichlet, 4.0 * PI);
    }
    if wanted("area_sphere") {
        push_eq("area_sphere", r.area, 4.0 * PI);
    }
    if wanted("volume_sphere") {
        push_eq("volume_sphere", r.volume, -4.0 * PI / 3.0);
    }
    let mut ineq = |name: &str, lhs: f64, rhs: f64, slack: f64| {
        let error = ((lhs - rhs) / rhs.abs()).max(0.0);
        rows.push(VerifyRow { name: name.into(), measured: lhs, expected: rhs, error, tolerance: slack, pass: error <= slack });
    };
    if wanted("isoperimetric_lower") {
        ineq("isoperimetric_lower", s * r.volume.abs().powf(2.0 / 3.0), r.area, tol);
    }
    if wanted("area_below_dirichlet") {
        ineq("area_below_dirichlet", r.area, r.dirichlet, 0.0);
    }
    let mut push_eq = |name: &str, measured: f64, expected: f64| {
        let error = (measured - expected).abs() / expected.abs();
        rows.push(VerifyRow { name: name.into(), measured, expected, error, tolerance: tol, pass: error <= tol });
    };
    let quad = BallQuadrature::default();
    for (name, spec) in [
        ("weighted_volume_constant", FieldSpec::Constant { k: 0.3 }),
        ("weighted_volume_radial", FieldSpec::Radial { a: 0.4, beta: 1.0 }),
    ] {
        if wanted(name) {
            let field = spec.build().map_err(numerical(name))?;
            let q = evaluate(&omega, &field).map_err(numerical(name))?.weighted;
            let exact = sphere_exact(&field, &Point3::zeros(), 1.0, &quad).map_err(numerical(name))?.weighted;
            push_eq(name, q, exact);
        }
    }
    let inverse = ScalarField::new("inverse distance", |q: &Point3| 1.0 / q.norm());
    for (name, r) in [("newtonian_0", 0.0), ("newtonian_0.5", 0.5), ("newtonian_1", 1.0), ("newtonian_2", 2.0), ("newtonian_5", 5.0)] {
        if wanted(name) {
            let p = Point3::new(0.6 * r, -0.8 * r, 0.0);
            // the potential of the unit ball at p is the inverse-distance integral over B₁(−p)
            let quadrature = ball_integral(&inverse, &(-p), 1.0, &quad).map_err(numerical(name))?;
            push_eq(name, quadrature, newtonian_potential(&p).0);
        }
    }
    if wanted("newtonian_peak") {
        push_eq("newtonian_peak", newtonian_potential(&Point3::zeros()).0, 2.0 * PI);
    }
    Ok(VerifyReport { level, tolerance: tol, rows })
}

/// A named output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: String, text: String) -> Self {
        Self { name, bytes: text.into_bytes() }
    }

    fn json(name: String, value: &impl Serialize) -> Self {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        Self::text(name, text)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub command: Command,
    pub prefix: String,
    pub artifacts: Vec<Artifact>,
    /// Human-readable lines for stdout.
    pub summary: String,
    /// Set when the command ran but its checks failed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub config_hash: String,
    pub version: String,
    pub workers: usize,
    pub wall_time_s: f64,
    pub files: Vec<ManifestEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Writes every artifact into `dir` and returns the hashed listing.
pub fn export_artifacts(output: &RunOutput, dir: &Path) -> CliResult<Vec<ManifestEntry>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(output.artifacts.len());
    for a in &output.artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(io_err(&path))?;
        entries.push(ManifestEntry { file: a.name.clone(), sha256: hex::encode(Sha256::digest(&a.bytes)), bytes: a.bytes.len() });
    }
    Ok(entries)
}

fn mesh_for(cfg: &RunConfig) -> CliResult<Arc<SphereMesh>> {
    Ok(Arc::new(build_icosphere(cfg.level).map_err(numerical("mesh"))?))
}

fn field_for(cfg: &RunConfig) -> CliResult<ScalarField> {
    cfg.field.build().map_err(|e| CliError::Validation(format!("`field`: {e}")))
}

fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    csv_string(&TrajectoryRow::HEADER, rows.iter().map(|r| r.cells()))
}

/// Computes the outputs of `cfg` without touching the file system.
pub fn compute(cfg: &RunConfig) -> CliResult<RunOutput> {
    cfg.validate()?;
    let prefix = format!("{}-{}", cfg.command, cfg.hash());
    let name = |suffix: &str| format!("{prefix}-{suffix}");
    let mut artifacts = Vec::new();
    let mut failure = None;
    let summary;
    match cfg.command {
        Command::Verify => {
            let report = verify_suite(cfg.level, cfg.verify_select.as_deref(), cfg.tolerances.verify_rel)?;
            let rows = report.rows.iter().map(|r| vec![r.measured, r.expected, r.error, r.tolerance, f64::from(u8::from(r.pass))]);
            let mut csv = csv_string(&["measured", "expected", "error", "tolerance", "pass"], rows);
            csv = prepend_names(&csv, report.rows.iter().map(|r| r.name.as_str()));
            artifacts.push(Artifact::text(name("verify.csv"), csv));
            artifacts.push(Artifact::json(name("verify.json"), &report));
            if !report.passed() {
                failure = Some(format!("failing identities: {}", report.failures().join(", ")));
            }
            summary = report.table();
        }
        Command::FieldCheck => {
            let field = field_for(cfg)?;
            let conditions = check_conditions(&field, &SamplingPlan::default()).map_err(numerical("field check"))?;
            let brackets = level_brackets(&field, cfg.t).map_err(numerical("level brackets"))?;
            let value = serde_json::json!({ "conditions": conditions, "brackets": brackets });
            summary = serde_json::to_string_pretty(&value).expect("report serializes");
            artifacts.push(Artifact::json(name("conditions.json"), &value));
        }
        Command::Minimize => {
            let field = field_for(cfg)?;
            let mesh = mesh_for(cfg)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let u0 = perturb(&sphere_map(&mesh, &Point3::zeros(), cfg.t), &mut rng, cfg.noise);
            let res = constrained_descent(&u0, &field, cfg.t, &cfg.descent()?).map_err(numerical("minimize"))?;
            let c = &res.candidate;
            summary = format!(
                "status {:?} escape {:?} after {} iterations: E = {:.9}, residual = {:.3e}, lambda = {:.6}",
                c.status, c.escape, c.iterations, c.report.energy, c.residual, c.lambda
            );
            artifacts.push(Artifact::text(name("trajectory.csv"), trajectory_csv(&res.trajectory)));
            artifacts.push(Artifact::json(name("candidate.json"), c));
            artifacts.push(Artifact::text(name("candidate.obj"), obj_string(&c.u)));
        }
        Command::Minimax => {
            let field = field_for(cfg)?;
            let mesh = mesh_for(cfg)?;
            let grid = build_ball_grid(cfg.radius, cfg.ball_res).map_err(numerical("ball grid"))?;
            let mut family = init_family(grid, &mesh, cfg.t).map_err(numerical("family"))?;
            let initial = estimate_levels(&family, &field).map_err(numerical("levels"))?;
            let deform = deform_family(&mut family, &field, &cfg.descent()?, cfg.sweeps).map_err(numerical("deformation"))?;
            let levels = estimate_levels(&family, &field).map_err(numerical("levels"))?;
            let brackets = level_brackets(&field, cfg.t).map_err(numerical("level brackets"))?;
            let p0 = Point3::new(0.1, 0.0, 0.0);
            let degree = barycenter_degree(&family, &p0);
            let homotopy = homotopy_check(&family, &p0, 50).map_err(numerical("homotopy"))?;
            let energies = family.energies(&field).map_err(numerical("energies"))?;
            let top = (0..energies.len()).max_by(|&a, &b| energies[a].total_cmp(&energies[b])).expect("family is non-empty");
            let value = serde_json::json!({
                "members": family.members.len(),
                "flagged": family.flagged.iter().filter(|&&f| f).count(),
                "continuity_cap": family.continuity_cap,
                "max_volume_error": family.max_volume_error(),
                "c0_initial": initial.c0,
                "c_running_initial": initial.c_running,
                "c0": levels.c0,
                "c_running": levels.c_running,
                "rolled_back": deform.rolled_back,
                "continuity_corrections": deform.continuity_corrections,
                "brackets": brackets,
                "in_bracket": brackets.s0 < levels.c_running && levels.c_running < brackets.two_bubble,
                "degree": degree,
                "homotopy_admissible": homotopy,
                "top_member": top,
                "top_barycenter": barycenter(&family.members[top], cfg.t),
            });
            summary = format!(
                "c0 = {:.9}, c_running = {:.9} (initial {:.9}), bracket ({:.6}, {:.6}), degree {:?}",
                levels.c0, levels.c_running, initial.c_running, brackets.s0, brackets.two_bubble, degree.degree
            );
            let rows = deform.c_history.iter().enumerate().map(|(i, c)| vec![(i + 1) as f64, *c]);
            artifacts.push(Artifact::text(name("c_history.csv"), csv_string(&["sweep", "c_running"], rows)));
            artifacts.push(Artifact::json(name("family.json"), &value));
            artifacts.push(Artifact::text(name("candidate.obj"), obj_string(&family.members[top])));
        }
        Command::SphereScan => {
            let field = field_for(cfg)?;
            let mesh = mesh_for(cfg)?;
            let brackets = level_brackets(&field, cfg.t).map_err(numerical("level brackets"))?;
            let st = s_t(cfg.t);
            let mut rows = Vec::with_capacity(cfg.scan_radii.len());
            for &r in &cfg.scan_radii {
                let u = retract_to_volume(&sphere_map(&mesh, &Point3::new(r, 0.0, 0.0), cfg.t), cfg.t)
                    .map_err(numerical("sphere scan"))?;
                let e = evaluate(&u, &field).map_err(numerical("sphere scan"))?.energy;
                let b = barycenter(&u, cfg.t).norm();
                let bound = brackets.s0 + brackets.k0 * 4.0 * PI * st * st / (3.0 * r);
                rows.push(vec![r, e, b, bound]);
            }
            summary = format!("{} sphere energies at t = {}", rows.len(), cfg.t);
            artifacts.push(Artifact::text(name("sphere_scan.csv"), csv_string(&["p_norm", "E", "bary_norm", "bound"], rows)));
        }
        Command::Export => {
            let field = field_for(cfg)?;
            let mesh = mesh_for(cfg)?;
            let p = Point3::from(cfg.center);
            let u = sphere_map(&mesh, &p, cfg.t);
            let report = evaluate(&u, &field).map_err(numerical("export"))?;
            summary = format!("sphere with {} vertices, E = {:.9}", mesh.num_vertices(), report.energy);
            artifacts.push(Artifact::text(name("sphere.obj"), obj_string(&u)));
            artifacts.push(Artifact::json(name("report.json"), &report));
        }
    }
    Ok(RunOutput { command: cfg.command, prefix, artifacts, summary, failure })
}

fn prepend_names<'a>(csv: &str, names: impl Iterator<Item = &'a str>) -> String {
    let mut lines = csv.lines();
    let mut out = format!("name,{}\n", lines.next().unwrap_or_default());
    for (line, n) in lines.zip(names) {
        out.push_str(&format!("{n},{line}\n"));
    }
    out
}

/// Runs `cfg`, writes its artifacts and the manifest. Failed checks are
/// reported in [`RunOutput::failure`], not as an error.
pub fn run_config(cfg: &RunConfig) -> CliResult<(RunOutput, Manifest)> {
    cfg.validate()?;
    let start = Instant::now();
    let workers = cfg.workers.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Validation(format!("`workers`: {e}")))?;
    let output = pool.install(|| compute(cfg))?;
    let files = export_artifacts(&output, &cfg.output_dir)?;
    let manifest = Manifest {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        workers,
        wall_time_s: start.elapsed().as_secs_f64(),
        files,
    };
    let path = cfg.output_dir.join(format!("{}-manifest.json", output.prefix));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok((output, manifest))
}
