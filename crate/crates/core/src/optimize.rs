//! Descent on the volume constraint set `M_t = {V = t}`.
//!
//! Steps follow the `Ĥ¹` Riesz gradient projected onto the tangent space of
//! `M_t`, followed by the cubic-root volume retraction. The line search is
//! Armijo backtracking on the retracted objective, starting from twice the
//! previously accepted step.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analytic::s_t;
use crate::fields::ScalarField;
use crate::functionals::{
    barycenter, conformality_defect, energy, evaluate, gradient, hilbert_inner_values, retract_to_volume,
    Covector, FunctionalReport, RieszSolver, Stationarity, SurfaceMap, Which,
};
use crate::{Error, Point3, Result};

pub const MAX_SHRINKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescentOptions {
    pub max_iters: usize,
    pub step0: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub residual_tol: f64,
    pub stagnation_window: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { max_iters: 5000, step0: 0.1, armijo_c: 1e-4, shrink: 0.5, residual_tol: 1e-3, stagnation_window: 50 }
    }
}

impl DescentOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str| Err(Error::Config(format!("descent option `{name}` out of range")));
        if self.max_iters == 0 {
            return bad("max_iters");
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return bad("step0");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink");
        }
        if !(self.residual_tol > 0.0) {
            return bad("residual_tol");
        }
        if self.stagnation_window == 0 {
            return bad("stagnation_window");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    Escaped,
    Stagnated,
    IterLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeKind {
    Bounded,
    DriftToInfinity,
    ShrinkToPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub dirichlet: f64,
    pub area: f64,
    pub volume: f64,
    pub weighted: f64,
    pub energy: f64,
    pub residual: f64,
    pub lambda: f64,
    pub bary_norm: f64,
    pub mean_norm: f64,
}

impl TrajectoryRow {
    pub const HEADER: [&'static str; 10] =
        ["iter", "D", "A", "V", "Q", "E", "residual", "lambda", "bary_norm", "mean_norm"];

    pub fn new(iter: usize, report: &FunctionalReport, st: &Stationarity, bary: &Point3) -> Self {
        Self {
            iter,
            dirichlet: report.dirichlet,
            area: report.area,
            volume: report.volume,
            weighted: report.weighted,
            energy: report.energy,
            residual: st.residual,
            lambda: st.lambda,
            bary_norm: bary.norm(),
            mean_norm: report.mean.norm(),
        }
    }

    pub fn cells(&self) -> Vec<f64> {
        vec![
            self.iter as f64,
            self.dirichlet,
            self.area,
            self.volume,
            self.weighted,
            self.energy,
            self.residual,
            self.lambda,
            self.bary_norm,
            self.mean_norm,
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateReport {
    #[serde(skip)]
    pub u: SurfaceMap,
    pub t: f64,
    pub lambda: f64,
    pub residual: f64,
    pub report: FunctionalReport,
    pub conformality: f64,
    pub barycenter: Point3,
    pub status: Status,
    pub escape: Option<EscapeKind>,
    pub iterations: usize,
}

impl CandidateReport {
    fn build(u: SurfaceMap, field: &ScalarField, t: f64, st: &Stationarity, status: Status, iterations: usize) -> Result<Self> {
        Ok(Self {
            report: evaluate(&u, field)?,
            conformality: conformality_defect(&u),
            barycenter: barycenter(&u, t),
            lambda: st.lambda,
            residual: st.residual,
            status,
            escape: None,
            iterations,
            t,
            u,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub candidate: CandidateReport,
    pub trajectory: Vec<TrajectoryRow>,
}

/// `‖∇u‖₂ = √(2D)`.
fn grad_norm(report: &FunctionalReport) -> f64 {
    (2.0 * report.dirichlet).max(0.0).sqrt()
}

/// The part of `x` that is `Ĥ¹`-orthogonal to the constraint direction `v`,
/// i.e. with `V′(u)[x] = 0`.
pub fn tangential(x: &[Point3], st: &Stationarity) -> Vec<Point3> {
    let coef = st.volume_gradient.pair(x) / st.volume_gradient.pair(&st.v);
    x.iter().zip(&st.v).map(|(a, b)| a - b * coef).collect()
}

/// Outcome of one Armijo line search along `−dir`.
pub struct LineSearch {
    pub u: SurfaceMap,
    pub value: f64,
    pub step: f64,
}

/// Backtracking on `α ↦ objective(retract(u − α dir))` from `step`.
/// `slope` is the (negative) directional derivative at `α = 0`.
#[allow(clippy::too_many_arguments)]
pub fn armijo(
    u: &SurfaceMap,
    dir: &[Point3],
    t: f64,
    value: f64,
    slope: f64,
    step: f64,
    opts: &DescentOptions,
    mut objective: impl FnMut(&SurfaceMap) -> Result<f64>,
) -> Result<Option<LineSearch>> {
    let mut alpha = step;
    for _ in 0..=MAX_SHRINKS {
        if let Ok(trial) = retract_to_volume(&u.axpy(-alpha, dir), t) {
            match objective(&trial) {
                Ok(f) if f <= value + opts.armijo_c * alpha * slope => {
                    return Ok(Some(LineSearch { u: trial, value: f, step: alpha }));
                }
                Ok(_) | Err(Error::Solver { .. }) | Err(Error::DegenerateConstraint { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        alpha *= opts.shrink;
    }
    Ok(None)
}

/// One projected descent step on `E`. Returns `None` when the line search
/// fails.
pub fn projected_step(
    u: &SurfaceMap,
    field: &ScalarField,
    t: f64,
    st: &Stationarity,
    step: f64,
    opts: &DescentOptions,
) -> Result<Option<LineSearch>> {
    // w = g − λv is already the tangential projection of the Riesz gradient
    let dir = tangential(&st.w, st);
    let slope = -st.energy_gradient.pair(&dir);
    if !(slope < 0.0) {
        return Ok(None);
    }
    let e = energy(u, field)?;
    armijo(u, &dir, t, e, slope, step, opts, |trial| energy(trial, field))
}

fn converged(residual: f64, report: &FunctionalReport, opts: &DescentOptions) -> bool {
    residual <= opts.residual_tol * grad_norm(report).max(1.0)
}

/// Isovolumetric minimization of `E` from `u0`.
pub fn constrained_descent(
    u0: &SurfaceMap,
    field: &ScalarField,
    t: f64,
    opts: &DescentOptions,
) -> Result<DescentResult> {
    opts.validate()?;
    if !(t > 0.0) {
        return Err(Error::Config(format!("volume t = {t} must be positive")));
    }
    let mut u = retract_to_volume(u0, t)?;
    let solver = RieszSolver::new(Arc::clone(u.mesh()));
    let mut st = Stationarity::compute(&u, field, &solver, None)?;
    let mut trajectory = Vec::new();
    let mut step = opts.step0;
    let mut status = Status::IterLimit;
    let mut escape = None;
    let mut iters = 0;
    loop {
        let report = evaluate(&u, field)?;
        trajectory.push(TrajectoryRow::new(iters, &report, &st, &barycenter(&u, t)));
        let kind = if trajectory.len() >= opts.stagnation_window {
            diagnose_escape(&trajectory, t, opts.stagnation_window)?
        } else {
            EscapeKind::Bounded
        };
        if kind != EscapeKind::Bounded {
            status = Status::Escaped;
            escape = Some(kind);
            break;
        }
        // a sequence whose centre is still marching outwards is not a
        // critical point even if its residual is already small
        if converged(st.residual, &report, opts) && !drifting(&trajectory, t, opts.stagnation_window) {
            status = Status::Converged;
            break;
        }
        if iters >= opts.max_iters {
            break;
        }
        let Some(ls) = projected_step(&u, field, t, &st, 2.0 * step, opts)? else {
            status = Status::Stagnated;
            break;
        };
        step = ls.step;
        u = ls.u;
        iters += 1;
        st = match Stationarity::compute(&u, field, &solver, Some(&st)) {
            Ok(s) => s,
            Err(Error::DegenerateConstraint { .. }) => {
                status = Status::Escaped;
                escape = Some(EscapeKind::ShrinkToPoint);
                break;
            }
            Err(e) => return Err(e),
        };
    }
    if escape.is_none() && status != Status::Converged && trajectory.len() >= opts.stagnation_window {
        let kind = diagnose_escape(&trajectory, t, opts.stagnation_window)?;
        escape = Some(kind);
        if kind != EscapeKind::Bounded {
            status = Status::Escaped;
        }
    }
    let mut candidate = CandidateReport::build(u, field, t, &st, status, iters)?;
    candidate.escape = escape;
    Ok(DescentResult { candidate, trajectory })
}

const DRIFT_RADIUS: f64 = 10.0;
const PLATEAU_SLOPE: f64 = 1e-5;

fn drifting(rows: &[TrajectoryRow], t: f64, window: usize) -> bool {
    if rows.len() < window || window < 2 {
        return false;
    }
    let tail = &rows[rows.len() - window..];
    let monotone = tail.windows(2).all(|w| w[1].mean_norm >= w[0].mean_norm);
    monotone && tail[window - 1].mean_norm > DRIFT_RADIUS * s_t(t)
}

/// Classifies the tail of a trajectory.
///
/// * drift: `|mean|` non-decreasing over the window, beyond `10 s_t`, with the
///   energy slope below `1e-5` per iteration;
/// * shrink: `D` non-increasing over the window and at most 1% of its maximum.
pub fn diagnose_escape(rows: &[TrajectoryRow], t: f64, window: usize) -> Result<EscapeKind> {
    if window == 0 || rows.len() < window {
        return Err(Error::ShortTrajectory { len: rows.len(), needed: window.max(1) });
    }
    let tail = &rows[rows.len() - window..];
    let last = tail[window - 1];
    if window >= 2 {
        let slope = (tail[0].energy - last.energy).abs() / (window - 1) as f64;
        if drifting(rows, t, window) && slope < PLATEAU_SLOPE {
            return Ok(EscapeKind::DriftToInfinity);
        }
    }
    let d_max = rows.iter().map(|r| r.dirichlet).fold(0.0, f64::max);
    let shrinking = tail.windows(2).all(|w| w[1].dirichlet <= w[0].dirichlet);
    if shrinking && last.dirichlet <= 1e-2 * d_max {
        return Ok(EscapeKind::ShrinkToPoint);
    }
    Ok(EscapeKind::Bounded)
}

/// `(E″ − λV″)(u)[w]` as a covector; the `Q` part by central differences of
/// the exact `Q` gradient.
fn residual_hessian_action(u: &SurfaceMap, field: &ScalarField, st: &Stationarity) -> Result<Covector> {
    let w = &st.w;
    let mut h = gradient(&u.with_values(w.clone()), &ScalarField::zero(), Which::D)?;
    let mut hv = Covector::zeros(w.len());
    for &[a, b, c] in u.mesh().triangles() {
        let (ua, ub, uc) = (u.values()[a], u.values()[b], u.values()[c]);
        let (wa, wb, wc) = (w[a], w[b], w[c]);
        hv.0[a] -= (wb.cross(&uc) + ub.cross(&wc)) / 6.0;
        hv.0[b] -= (wc.cross(&ua) + uc.cross(&wa)) / 6.0;
        hv.0[c] -= (wa.cross(&ub) + ua.cross(&wb)) / 6.0;
    }
    h.add_scaled(-st.lambda, &hv);
    if !field.is_zero() {
        let rms = |x: &[Point3]| (x.iter().map(|v| v.norm_squared()).sum::<f64>() / x.len() as f64).sqrt();
        let (wn, un) = (rms(w), rms(u.values()).max(1.0));
        if wn > 0.0 {
            let eps = 1e-5 * un / wn;
            let gp = gradient(&u.axpy(eps, w), field, Which::Q)?;
            let gm = gradient(&u.axpy(-eps, w), field, Which::Q)?;
            for ((hi, p), m) in h.0.iter_mut().zip(&gp.0).zip(&gm.0) {
                *hi += (p - m) / (2.0 * eps);
            }
        }
    }
    Ok(h)
}

/// Minimizes `½‖E′(u) − λ(u)V′(u)‖²` over `M_t`, with `λ(u)` the optimal
/// multiplier. By optimality of `λ` its variation drops out of the gradient.
/// Returns the iterate with the smallest residual.
pub fn refine_critical(u: &SurfaceMap, field: &ScalarField, t: f64, opts: &DescentOptions) -> Result<CandidateReport> {
    Ok(refine_critical_traced(u, field, t, opts)?.0)
}

/// [`refine_critical`] plus the residual after every accepted step.
pub fn refine_critical_traced(
    u: &SurfaceMap,
    field: &ScalarField,
    t: f64,
    opts: &DescentOptions,
) -> Result<(CandidateReport, Vec<f64>)> {
    opts.validate()?;
    let mut u = retract_to_volume(u, t)?;
    let solver = RieszSolver::new(Arc::clone(u.mesh()));
    let mut st = Stationarity::compute(&u, field, &solver, None)?;
    let mut best = (u.clone(), st.clone());
    let mut history = vec![st.residual];
    let mut step = opts.step0;
    let mut status = Status::IterLimit;
    let mut iters = 0;
    while iters < opts.max_iters {
        let report = evaluate(&u, field)?;
        if converged(st.residual, &report, opts) {
            status = Status::Converged;
            break;
        }
        let h = residual_hessian_action(&u, field, &st)?;
        let riesz = solver.solve(&h, None)?;
        let dir = tangential(&riesz, &st);
        let slope = -h.pair(&dir);
        let phi = 0.5 * st.residual * st.residual;
        if !(slope < 0.0) {
            status = Status::Stagnated;
            break;
        }
        let mut last_st = None;
        let warm = st.clone();
        let ls = armijo(&u, &dir, t, phi, slope, 2.0 * step, opts, |trial| {
            let s = Stationarity::compute(trial, field, &solver, Some(&warm))?;
            let value = 0.5 * s.residual * s.residual;
            last_st = Some(s);
            Ok(value)
        })?;
        let Some(ls) = ls else {
            status = Status::Stagnated;
            break;
        };
        step = ls.step;
        u = ls.u;
        st = last_st.expect("accepted trial was evaluated");
        iters += 1;
        history.push(st.residual);
        if st.residual < best.1.residual {
            best = (u.clone(), st.clone());
        }
    }
    let (u, st) = best;
    let candidate = CandidateReport::build(u, field, t, &st, status, iters)?;
    Ok((candidate, history))
}

/// `√⟨x, x⟩` for per-vertex data on the mesh of `u`.
pub fn hilbert_norm(u: &SurfaceMap, x: &[Point3]) -> f64 {
    hilbert_inner_values(u.mesh(), x, x).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{isoperimetric_constant, sphere_map};
    use crate::mesh::build_icosphere;
    use crate::samples::perturb;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(i: usize, d: f64, e: f64, mean: f64) -> TrajectoryRow {
        TrajectoryRow {
            iter: i,
            dirichlet: d,
            area: d,
            volume: 1.0,
            weighted: 0.0,
            energy: e,
            residual: 0.0,
            lambda: 0.0,
            bary_norm: 0.0,
            mean_norm: mean,
        }
    }

    #[test]
    fn options_defaults_and_validation() {
        let o = DescentOptions::default();
        assert_eq!((o.max_iters, o.step0, o.armijo_c, o.shrink), (5000, 0.1, 1e-4, 0.5));
        assert_eq!((o.residual_tol, o.stagnation_window), (1e-3, 50));
        assert!(DescentOptions { shrink: 1.0, ..o }.validate().is_err());
    }

    #[test]
    fn synthetic_shrink_and_drift() {
        let shrink: Vec<_> = (0..600).map(|i| row(i, 4.8 * 0.99f64.powi(2 * i as i32), 4.8, 0.0)).collect();
        assert_eq!(diagnose_escape(&shrink, 1.0, 50).unwrap(), EscapeKind::ShrinkToPoint);
        let drift: Vec<_> = (0..100).map(|i| row(i, 4.84, 4.85, 7.0 + 0.01 * i as f64)).collect();
        assert_eq!(diagnose_escape(&drift, 1.0, 50).unwrap(), EscapeKind::DriftToInfinity);
        let flat: Vec<_> = (0..100).map(|i| row(i, 4.84, 4.84, 0.0)).collect();
        assert_eq!(diagnose_escape(&flat, 1.0, 50).unwrap(), EscapeKind::Bounded);
        assert!(matches!(diagnose_escape(&flat[..10], 1.0, 50), Err(Error::ShortTrajectory { .. })));
    }

    #[test]
    fn noisy_sphere_relaxes_to_round_sphere() {
        let mesh = Arc::new(build_icosphere(3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u0 = perturb(&sphere_map(&mesh, &Point3::zeros(), 1.0), &mut rng, 0.05);
        let opts = DescentOptions { max_iters: 400, ..Default::default() };
        let res = constrained_descent(&u0, &ScalarField::zero(), 1.0, &opts).unwrap();
        let c = &res.candidate;
        assert_eq!(c.status, Status::Converged, "{:?}", c.residual);
        assert!((c.report.energy - isoperimetric_constant()).abs() < 2e-2, "{}", c.report.energy);
        for w in res.trajectory.windows(2) {
            assert!(w[1].energy <= w[0].energy);
        }
        assert!(c.lambda * c.t > 0.0);
    }
}
