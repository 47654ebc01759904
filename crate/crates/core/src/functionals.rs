//! Discrete functionals `D, A, V, Q, E, F_K` on piecewise-linear maps, their
//! exact first variations, and the `Ĥ¹` machinery built on them.
//!
//! Per triangle `T = (a, b, c)` with outward winding the discrete data are
//!
//! * `D_T = ¼ Σ cot θ_k |Δu_k|²` (exact Dirichlet integral of the interpolant),
//! * `N_T = area·u_x∧u_y = −½ (u_b − u_a) × (u_c − u_a)`,
//! * `A_T = |N_T|`, `V_T = ⅓ ū·N_T = −⅙ u_a·(u_b × u_c)`,
//! * `Q_T = Q_K(ū)·N_T` with `ū` the vertex average.
//!
//! All gradients below differentiate exactly these formulas.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fields::{QkRule, ScalarField};
use crate::mesh::SphereMesh;
use crate::sparse::{pcg, CgOptions};
use crate::{Error, Point3, Result};

#[derive(Debug, Clone)]
pub struct SurfaceMap {
    mesh: Arc<SphereMesh>,
    values: Vec<Point3>,
}

impl SurfaceMap {
    pub fn new(mesh: Arc<SphereMesh>, values: Vec<Point3>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::Config(format!(
                "surface map has {} values for a mesh with {} vertices",
                values.len(),
                mesh.num_vertices()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Config(format!("non-finite surface map value {v:?}")));
        }
        Ok(Self { mesh, values })
    }

    /// The identity embedding, i.e. the discrete `ω`.
    pub fn identity(mesh: Arc<SphereMesh>) -> Self {
        let values = mesh.vertices().to_vec();
        Self { mesh, values }
    }

    pub fn constant(mesh: Arc<SphereMesh>, c: Point3) -> Self {
        let values = vec![c; mesh.num_vertices()];
        Self { mesh, values }
    }

    pub fn from_fn(mesh: Arc<SphereMesh>, f: impl Fn(&Point3) -> Point3) -> Self {
        let values = mesh.vertices().iter().map(f).collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<SphereMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[Point3] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Point3> {
        self.values
    }

    /// Same mesh, new values. The caller guarantees the length.
    pub fn with_values(&self, values: Vec<Point3>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self { mesh: Arc::clone(&self.mesh), values }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_values(self.values.iter().map(|v| v * s).collect())
    }

    pub fn translated(&self, c: &Point3) -> Self {
        self.with_values(self.values.iter().map(|v| v + c).collect())
    }

    /// `self + s·dir`.
    pub fn axpy(&self, s: f64, dir: &[Point3]) -> Self {
        self.with_values(self.values.iter().zip(dir).map(|(v, d)| v + d * s).collect())
    }

    pub fn same_mesh(&self, other: &SurfaceMap) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    /// Mass-weighted mean, the discrete `(1/4π)∫uμ²`.
    pub fn mean(&self) -> Point3 {
        mass_mean(&self.mesh, &self.values)
    }
}

fn mass_mean(mesh: &SphereMesh, values: &[Point3]) -> Point3 {
    let mut s = Point3::zeros();
    for (m, v) in mesh.vertex_masses().iter().zip(values) {
        s += v * *m;
    }
    s / mesh.total_mass()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub dirichlet: f64,
    pub area: f64,
    pub volume: f64,
    pub weighted: f64,
    pub energy: f64,
    pub capillarity: f64,
    pub mean: Point3,
}

/// Per-vertex dual coefficients; pairs with a direction by plain summation.
#[derive(Debug, Clone, PartialEq)]
pub struct Covector(pub Vec<Point3>);

impl Covector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Point3::zeros(); n])
    }

    pub fn pair(&self, dir: &[Point3]) -> f64 {
        self.0.iter().zip(dir).map(|(a, b)| a.dot(b)).sum()
    }

    /// `self += s·other`.
    pub fn add_scaled(&mut self, s: f64, other: &Covector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b * s;
        }
    }

    pub fn norm_l2(&self) -> f64 {
        self.0.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Which {
    D,
    V,
    Q,
    E,
}

struct Tri {
    ua: Point3,
    ub: Point3,
    uc: Point3,
}

impl Tri {
    fn of(u: &[Point3], t: [usize; 3]) -> Self {
        Self { ua: u[t[0]], ub: u[t[1]], uc: u[t[2]] }
    }

    fn normal(&self) -> Point3 {
        (self.ub - self.ua).cross(&(self.uc - self.ua)) * -0.5
    }

    fn centroid(&self) -> Point3 {
        (self.ua + self.ub + self.uc) / 3.0
    }

    fn dirichlet(&self, cot: &[f64; 3]) -> f64 {
        0.25 * (cot[0] * (self.uc - self.ub).norm_squared()
            + cot[1] * (self.ua - self.uc).norm_squared()
            + cot[2] * (self.ub - self.ua).norm_squared())
    }
}

/// Values of all discrete functionals.
pub fn evaluate(u: &SurfaceMap, field: &ScalarField) -> Result<FunctionalReport> {
    evaluate_with(u, field, &QkRule::default())
}

pub fn evaluate_with(u: &SurfaceMap, field: &ScalarField, rule: &QkRule) -> Result<FunctionalReport> {
    let mesh = &u.mesh;
    let (mut d, mut a, mut v, mut q) = (0.0, 0.0, 0.0, 0.0);
    for (t, cot) in mesh.triangles().iter().zip(mesh.tri_cot()) {
        let tri = Tri::of(&u.values, *t);
        let n = tri.normal();
        d += tri.dirichlet(cot);
        a += n.norm();
        v -= tri.ua.dot(&tri.ub.cross(&tri.uc)) / 6.0;
        if !field.is_zero() {
            q += rule.eval(field, &tri.centroid())?.dot(&n);
        }
    }
    Ok(FunctionalReport {
        dirichlet: d,
        area: a,
        volume: v,
        weighted: q,
        energy: d + q,
        capillarity: a + q,
        mean: u.mean(),
    })
}

/// Discrete volume alone.
pub fn volume(u: &SurfaceMap) -> f64 {
    u.mesh
        .triangles()
        .iter()
        .map(|t| {
            let tri = Tri::of(&u.values, *t);
            -tri.ua.dot(&tri.ub.cross(&tri.uc)) / 6.0
        })
        .sum()
}

/// Discrete Dirichlet integral alone.
pub fn dirichlet(u: &SurfaceMap) -> f64 {
    u.mesh
        .triangles()
        .iter()
        .zip(u.mesh.tri_cot())
        .map(|(t, cot)| Tri::of(&u.values, *t).dirichlet(cot))
        .sum()
}

/// `E = D + Q` alone, the quantity line searches need.
/// Sums in the same order as [`evaluate`], so both agree bitwise.
pub fn energy(u: &SurfaceMap, field: &ScalarField) -> Result<f64> {
    let d = dirichlet(u);
    let mut q = 0.0;
    if !field.is_zero() {
        let rule = QkRule::default();
        for t in u.mesh.triangles() {
            let tri = Tri::of(&u.values, *t);
            q += rule.eval(field, &tri.centroid())?.dot(&tri.normal());
        }
    }
    Ok(d + q)
}

/// Exact derivative of the chosen discrete functional.
pub fn gradient(u: &SurfaceMap, field: &ScalarField, which: Which) -> Result<Covector> {
    let n = u.values.len();
    match which {
        Which::D => Ok(dirichlet_gradient(u)),
        Which::V => Ok(volume_gradient(u)),
        Which::Q => {
            let mut g = Covector::zeros(n);
            add_weighted_gradient(u, field, &QkRule::default(), &mut g)?;
            Ok(g)
        }
        Which::E => {
            let mut g = dirichlet_gradient(u);
            add_weighted_gradient(u, field, &QkRule::default(), &mut g)?;
            Ok(g)
        }
    }
}

fn dirichlet_gradient(u: &SurfaceMap) -> Covector {
    let l = u.mesh.stiffness();
    let mut g = Covector::zeros(u.values.len());
    for (i, gi) in g.0.iter_mut().enumerate() {
        for (j, w) in l.row(i) {
            *gi += u.values[j] * w;
        }
    }
    g
}

fn volume_gradient(u: &SurfaceMap) -> Covector {
    let mut g = Covector::zeros(u.values.len());
    for &[a, b, c] in u.mesh.triangles() {
        let (ua, ub, uc) = (u.values[a], u.values[b], u.values[c]);
        g.0[a] -= ub.cross(&uc) / 6.0;
        g.0[b] -= uc.cross(&ua) / 6.0;
        g.0[c] -= ua.cross(&ub) / 6.0;
    }
    g
}

fn add_weighted_gradient(u: &SurfaceMap, field: &ScalarField, rule: &QkRule, g: &mut Covector) -> Result<()> {
    if field.is_zero() {
        return Ok(());
    }
    for &[a, b, c] in u.mesh.triangles() {
        let tri = Tri::of(&u.values, [a, b, c]);
        let p = tri.centroid();
        let n = tri.normal();
        let (m, dm) = rule.m_and_gradient(field, &p)?;
        let qk = p * m;
        // through the centroid: ∇_p (m(p) p·N) / 3
        let through_centroid = (n * m + dm * p.dot(&n)) / 3.0;
        g.0[a] += through_centroid + (tri.uc - tri.ub).cross(&qk) * 0.5;
        g.0[b] += through_centroid + (tri.ua - tri.uc).cross(&qk) * 0.5;
        g.0[c] += through_centroid + (tri.ub - tri.ua).cross(&qk) * 0.5;
    }
    Ok(())
}

/// `⟨a, b⟩ = aᵀLb + mean(a)·mean(b)`.
pub fn hilbert_inner(a: &SurfaceMap, b: &SurfaceMap) -> Result<f64> {
    if !a.same_mesh(b) {
        return Err(Error::MeshMismatch);
    }
    Ok(hilbert_inner_values(&a.mesh, &a.values, &b.values))
}

pub(crate) fn hilbert_inner_values(mesh: &SphereMesh, a: &[Point3], b: &[Point3]) -> f64 {
    let l = mesh.stiffness();
    let mut s = 0.0;
    for (i, ai) in a.iter().enumerate() {
        let mut lb = Point3::zeros();
        for (j, w) in l.row(i) {
            lb += b[j] * w;
        }
        s += ai.dot(&lb);
    }
    s + mass_mean(mesh, a).dot(&mass_mean(mesh, b))
}

/// Solves `⟨x, φ⟩ = f[φ]` for all `φ` with Jacobi-PCG on the operator
/// `L + m mᵀ/M²` applied to each coordinate.
#[derive(Debug, Clone)]
pub struct RieszSolver {
    mesh: Arc<SphereMesh>,
    inv_diag: Vec<f64>,
    opts: CgOptions,
}

impl RieszSolver {
    pub fn new(mesh: Arc<SphereMesh>) -> Self {
        let total = mesh.total_mass();
        let n = mesh.num_vertices();
        let diag = mesh.stiffness().diagonal();
        let mut inv_diag = vec![0.0; 3 * n];
        for i in 0..n {
            let m = mesh.vertex_masses()[i] / total;
            let inv = 1.0 / (diag[i] + m * m);
            for c in 0..3 {
                inv_diag[3 * i + c] = inv;
            }
        }
        Self { mesh, inv_diag, opts: CgOptions::default() }
    }

    pub fn with_options(mut self, opts: CgOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn mesh(&self) -> &Arc<SphereMesh> {
        &self.mesh
    }

    /// Riesz representative of `f`; `guess` warm-starts the iteration.
    pub fn solve(&self, f: &Covector, guess: Option<&[Point3]>) -> Result<Vec<Point3>> {
        let n = self.mesh.num_vertices();
        let b: Vec<f64> = f.0.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let mut x: Vec<f64> = match guess {
            Some(g) => g.iter().flat_map(|v| [v.x, v.y, v.z]).collect(),
            None => vec![0.0; 3 * n],
        };
        let l = self.mesh.stiffness();
        let masses = self.mesh.vertex_masses();
        let total = self.mesh.total_mass();
        let apply = |x: &[f64], y: &mut [f64]| {
            let mut mean = [0.0; 3];
            for i in 0..n {
                for c in 0..3 {
                    mean[c] += masses[i] * x[3 * i + c];
                }
            }
            for c in &mut mean {
                *c /= total * total;
            }
            for i in 0..n {
                let mut acc = [0.0; 3];
                for (j, w) in l.row(i) {
                    for c in 0..3 {
                        acc[c] += w * x[3 * j + c];
                    }
                }
                for c in 0..3 {
                    y[3 * i + c] = acc[c] + masses[i] * mean[c];
                }
            }
        };
        pcg(apply, &self.inv_diag, &b, &mut x, self.opts)?;
        Ok(x.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }
}

/// `(t/V(u))^{1/3} u`, which has volume `t` by cubic homogeneity.
pub fn retract_to_volume(u: &SurfaceMap, t: f64) -> Result<SurfaceMap> {
    let v = volume(u);
    if !v.is_finite() || v.abs() < 1e-10 * t.abs() || v.signum() != t.signum() || t == 0.0 {
        return Err(Error::Retraction { volume: v, target: t });
    }
    Ok(u.scaled((t / v).cbrt()))
}

/// Mean-zero solution of `−Δv = u_x∧u_y`: the Riesz representative of `V′(u)`.
pub fn wente_solve(u: &SurfaceMap) -> Result<SurfaceMap> {
    let solver = RieszSolver::new(Arc::clone(&u.mesh));
    let mut v = solver.solve(&volume_gradient(u), None)?;
    let mean = mass_mean(&u.mesh, &v);
    for x in &mut v {
        *x -= mean;
    }
    Ok(u.with_values(v))
}

/// `λ = E′(u)[v] / ‖v‖²` with `v` the Wente solution.
pub fn lagrange_lambda(u: &SurfaceMap, field: &ScalarField) -> Result<f64> {
    let v = wente_solve(u)?;
    let vv = hilbert_inner(&v, &v)?;
    if vv.sqrt() < 1e-12 {
        return Err(Error::DegenerateConstraint { norm: vv.sqrt() });
    }
    Ok(gradient(u, field, Which::E)?.pair(v.values()) / vv)
}

/// `‖E′(u) − λV′(u)‖` in the dual norm, via one Riesz solve.
pub fn ps_residual(u: &SurfaceMap, field: &ScalarField, lambda: f64) -> Result<f64> {
    let mut r = gradient(u, field, Which::E)?;
    r.add_scaled(-lambda, &volume_gradient(u));
    let w = RieszSolver::new(Arc::clone(&u.mesh)).solve(&r, None)?;
    Ok(hilbert_inner_values(&u.mesh, &w, &w).max(0.0).sqrt())
}

/// Everything a constrained step needs at one point, from two Riesz solves.
#[derive(Debug, Clone)]
pub struct Stationarity {
    pub energy_gradient: Covector,
    pub volume_gradient: Covector,
    /// Riesz representative of `E′`.
    pub g: Vec<Point3>,
    /// Riesz representative of `V′` (the Wente solution).
    pub v: Vec<Point3>,
    pub lambda: f64,
    /// `g − λv`, the Riesz representative of the PS covector.
    pub w: Vec<Point3>,
    pub residual: f64,
}

impl Stationarity {
    pub fn compute(
        u: &SurfaceMap,
        field: &ScalarField,
        solver: &RieszSolver,
        warm: Option<&Stationarity>,
    ) -> Result<Self> {
        let eg = gradient(u, field, Which::E)?;
        let vg = volume_gradient(u);
        let g = solver.solve(&eg, warm.map(|s| s.g.as_slice()))?;
        let v = solver.solve(&vg, warm.map(|s| s.v.as_slice()))?;
        let vv = vg.pair(&v);
        if !(vv.sqrt() >= 1e-12) {
            return Err(Error::DegenerateConstraint { norm: vv.max(0.0).sqrt() });
        }
        let lambda = eg.pair(&v) / vv;
        let w: Vec<Point3> = g.iter().zip(&v).map(|(a, b)| a - b * lambda).collect();
        let residual = hilbert_inner_values(&u.mesh, &w, &w).max(0.0).sqrt();
        Ok(Self { energy_gradient: eg, volume_gradient: vg, g, v, lambda, w, residual })
    }
}

/// Nearest-point projection onto the closed unit ball.
pub fn project_unit_ball(p: &Point3) -> Point3 {
    let r = p.norm();
    if r <= 1.0 {
        *p
    } else {
        p / r
    }
}

/// `B_t(u) = (1/8πs_t²) Σ_T Π(ū_T)·2D_T`.
pub fn barycenter(u: &SurfaceMap, t: f64) -> Point3 {
    let st = crate::analytic::s_t(t);
    let mut b = Point3::zeros();
    for (tri, cot) in u.mesh.triangles().iter().zip(u.mesh.tri_cot()) {
        let tri = Tri::of(&u.values, *tri);
        b += project_unit_ball(&tri.centroid()) * (2.0 * tri.dirichlet(cot));
    }
    b / (8.0 * std::f64::consts::PI * st * st)
}

/// Per-triangle partial derivatives `(u_x, u_y)` in the triangle's frame.
pub fn tangent_derivatives(u: &SurfaceMap, t: usize) -> (Point3, Point3) {
    let [a, b, c] = u.mesh.triangles()[t];
    let [l, cx, cy] = u.mesh.tri_local()[t];
    let ux = (u.values[b] - u.values[a]) / l;
    let uy = (u.values[c] - u.values[a] - ux * cx) / cy;
    (ux, uy)
}

/// Area-weighted `|u_x·u_y| + ||u_x|² − |u_y|²|` normalized by `2D(u)`.
pub fn conformality_defect(u: &SurfaceMap) -> f64 {
    let d = dirichlet(u);
    if d <= 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for (t, area) in u.mesh.tri_areas().iter().enumerate() {
        if *area < 1e-14 {
            continue;
        }
        let (ux, uy) = tangent_derivatives(u, t);
        s += area * (ux.dot(&uy).abs() + (ux.norm_squared() - uy.norm_squared()).abs());
    }
    s / (2.0 * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldSpec;
    use crate::mesh::build_icosphere;
    use std::f64::consts::PI;

    fn mesh(level: u32) -> Arc<SphereMesh> {
        Arc::new(build_icosphere(level).unwrap())
    }

    fn wobbly(m: &Arc<SphereMesh>) -> SurfaceMap {
        SurfaceMap::from_fn(Arc::clone(m), |x| {
            Point3::new(x.x * (1.0 + 0.2 * x.y), x.y + 0.1 * x.z * x.z, 0.7 * x.z + 0.1 * x.x)
        })
    }

    #[test]
    fn identity_embedding_values() {
        let m = mesh(4);
        let r = evaluate(&SurfaceMap::identity(m), &ScalarField::zero()).unwrap();
        assert!((r.dirichlet / (4.0 * PI) - 1.0).abs() < 5e-3);
        assert!((r.area / (4.0 * PI) - 1.0).abs() < 5e-3);
        assert!((r.volume / (-4.0 * PI / 3.0) - 1.0).abs() < 5e-3);
        assert!(r.area <= r.dirichlet);
    }

    #[test]
    fn stiffness_form_is_twice_dirichlet() {
        let m = mesh(2);
        let u = wobbly(&m);
        let d = dirichlet(&u);
        let g = gradient(&u, &ScalarField::zero(), Which::D).unwrap();
        assert!((g.pair(u.values()) / (2.0 * d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_map_is_degenerate() {
        let m = mesh(1);
        let u = SurfaceMap::constant(m, Point3::new(1.0, 2.0, 3.0));
        let field = FieldSpec::Constant { k: 0.3 }.build().unwrap();
        let r = evaluate(&u, &field).unwrap();
        assert_eq!((r.dirichlet, r.area, r.volume, r.weighted), (0.0, 0.0, 0.0, 0.0));
        assert!(matches!(retract_to_volume(&u, 1.0), Err(Error::Retraction { .. })));
        assert_eq!(conformality_defect(&u), 0.0);
        let v = wente_solve(&u).unwrap();
        assert!(v.values().iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        let m = mesh(1);
        let u = wobbly(&m);
        let field = FieldSpec::Radial { a: 0.4, beta: 1.0 }.build().unwrap();
        let dir: Vec<Point3> = (0..u.values().len())
            .map(|i| {
                let f = i as f64;
                Point3::new((f * 0.7).sin(), (f * 1.3).cos(), (f * 0.31).sin())
            })
            .collect();
        let h = 1e-5;
        let (up, um) = (u.axpy(h, &dir), u.axpy(-h, &dir));
        let rp = evaluate(&up, &field).unwrap();
        let rm = evaluate(&um, &field).unwrap();
        for (which, fd) in [
            (Which::D, (rp.dirichlet - rm.dirichlet) / (2.0 * h)),
            (Which::V, (rp.volume - rm.volume) / (2.0 * h)),
            (Which::Q, (rp.weighted - rm.weighted) / (2.0 * h)),
            (Which::E, (rp.energy - rm.energy) / (2.0 * h)),
        ] {
            let exact = gradient(&u, &field, which).unwrap().pair(&dir);
            assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1.0), "{which:?}: {exact} vs {fd}");
        }
    }

    #[test]
    fn hilbert_inner_of_constants_and_self() {
        let m = mesh(2);
        let c = SurfaceMap::constant(Arc::clone(&m), Point3::new(1.0, -2.0, 0.5));
        let d = SurfaceMap::constant(Arc::clone(&m), Point3::new(3.0, 1.0, 2.0));
        assert!((hilbert_inner(&c, &d).unwrap() - 2.0).abs() < 1e-12);
        let u = wobbly(&m);
        let lhs = hilbert_inner(&u, &u).unwrap();
        let rhs = 2.0 * dirichlet(&u) + u.mean().norm_squared();
        assert!((lhs / rhs - 1.0).abs() < 1e-12);
        let other = SurfaceMap::identity(mesh(2));
        assert!(matches!(hilbert_inner(&u, &other), Err(Error::MeshMismatch)));
    }

    #[test]
    fn riesz_solution_satisfies_the_weak_equation() {
        let m = mesh(2);
        let u = wobbly(&m);
        let f = gradient(&u, &ScalarField::zero(), Which::V).unwrap();
        let x = RieszSolver::new(Arc::clone(&m)).solve(&f, None).unwrap();
        let phi = SurfaceMap::from_fn(Arc::clone(&m), |p| Point3::new(p.y * p.z, 1.0, p.x));
        let lhs = hilbert_inner_values(&m, &x, phi.values());
        assert!((lhs - f.pair(phi.values())).abs() < 1e-8);
    }

    #[test]
    fn sphere_multiplier_and_residual() {
        let m = mesh(3);
        let u = SurfaceMap::identity(Arc::clone(&m));
        let lambda = lagrange_lambda(&u, &ScalarField::zero()).unwrap();
        assert!((lambda + 2.0).abs() < 2e-2, "{lambda}");
        let res = ps_residual(&u, &ScalarField::zero(), lambda).unwrap();
        let off = ps_residual(&u, &ScalarField::zero(), lambda + 0.3).unwrap();
        assert!(res < off);
        let s = Stationarity::compute(&u, &ScalarField::zero(), &RieszSolver::new(m), None).unwrap();
        assert!((s.lambda - lambda).abs() < 1e-9);
        assert!((s.residual - res).abs() < 1e-8);
    }

    #[test]
    fn retraction_scales_to_target() {
        let m = mesh(2);
        let u = SurfaceMap::identity(m).scaled(-1.0);
        let r = retract_to_volume(&u, 2.5).unwrap();
        assert!((volume(&r) / 2.5 - 1.0).abs() < 1e-12);
        assert!(retract_to_volume(&u, -1.0).is_err());
        let same = retract_to_volume(&r, volume(&r)).unwrap();
        assert_eq!(same.values(), r.values());
    }

    #[test]
    fn stretched_sphere_is_not_conformal() {
        let m = mesh(3);
        let id = SurfaceMap::identity(Arc::clone(&m));
        assert!(conformality_defect(&id) < 1e-10);
        let stretched = SurfaceMap::from_fn(m, |x| Point3::new(2.0 * x.x, x.y, x.z));
        assert!(conformality_defect(&stretched) > 0.05);
    }
}
