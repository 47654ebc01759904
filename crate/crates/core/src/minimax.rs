//! Families of surfaces parametrized by a ball `B_R ⊂ ℝ³`, the deformation
//! that lowers their maximal energy with the boundary held fixed, and the
//! degree of the barycenter map on `∂B_R`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::sphere_map;
use crate::fields::ScalarField;
use crate::functionals::{
    barycenter, energy, hilbert_inner_values, retract_to_volume, volume, RieszSolver, Stationarity, SurfaceMap,
};
use crate::mesh::{build_icosphere, SphereMesh};
use crate::optimize::{projected_step, DescentOptions};
use crate::{Error, Point3, Result};

pub const ADMISSIBILITY_TOL: f64 = 1e-6;
pub const ROUNDING_GAP: f64 = 0.2;

/// Center point plus `resolution` concentric shells; each shell carries the
/// vertex directions of one icosphere whose triangles also triangulate the
/// outermost shell `|p| = R`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallGrid {
    pub radius: f64,
    pub resolution: usize,
    pub samples: Vec<Point3>,
    pub boundary_flags: Vec<bool>,
    /// Outward-oriented triangles on `∂B_R`, indexing into `samples`.
    pub boundary_triangulation: Vec<[usize; 3]>,
    pub neighbors: Vec<Vec<usize>>,
}

impl BallGrid {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn boundary_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.boundary_flags[i])
    }

    pub fn interior_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| !self.boundary_flags[i])
    }
}

fn direction_level(resolution: usize) -> u32 {
    match resolution {
        0..=2 => 0,
        3..=5 => 1,
        _ => 2,
    }
}

pub fn build_ball_grid(radius: f64, resolution: usize) -> Result<BallGrid> {
    if resolution < 2 {
        return Err(Error::Config(format!("ball resolution {resolution} < 2")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("ball radius {radius} must be positive")));
    }
    let sphere = build_icosphere(direction_level(resolution))?;
    let dirs = sphere.vertices();
    let nd = dirs.len();
    let shell_start = |k: usize| 1 + (k - 1) * nd;

    let mut samples = vec![Point3::zeros()];
    let mut boundary_flags = vec![false];
    for k in 1..=resolution {
        let r = radius * k as f64 / resolution as f64;
        for d in dirs {
            // the outermost shell is exactly |p| = R
            samples.push(if k == resolution { d * radius } else { d * r });
            boundary_flags.push(k == resolution);
        }
    }
    let mut neighbors = vec![Vec::new(); samples.len()];
    let mut link = |a: usize, b: usize| {
        if !neighbors[a].contains(&b) {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
    };
    for i in 0..nd {
        link(0, shell_start(1) + i);
        for k in 1..resolution {
            link(shell_start(k) + i, shell_start(k + 1) + i);
        }
    }
    for k in 1..=resolution {
        for &[a, b, c] in sphere.triangles() {
            let s = shell_start(k);
            link(s + a, s + b);
            link(s + b, s + c);
            link(s + c, s + a);
        }
    }
    for n in &mut neighbors {
        n.sort_unstable();
    }
    let outer = shell_start(resolution);
    let boundary_triangulation =
        sphere.triangles().iter().map(|&[a, b, c]| [outer + a, outer + b, outer + c]).collect();
    Ok(BallGrid { radius, resolution, samples, boundary_flags, boundary_triangulation, neighbors })
}

/// Sampled map `B_R → M_t`.
#[derive(Debug, Clone)]
pub struct Family {
    pub grid: BallGrid,
    pub t: f64,
    pub members: Vec<SurfaceMap>,
    /// Members whose last update was rolled back.
    pub flagged: Vec<bool>,
    /// Maximal `Ĥ¹` distance allowed between neighbours.
    pub continuity_cap: f64,
    steps: Vec<f64>,
    solver: RieszSolver,
}

/// Every member is the retracted sphere `ω_{p,t}`; boundary members are never
/// touched afterwards.
pub fn init_family(grid: BallGrid, mesh: &Arc<SphereMesh>, t: f64) -> Result<Family> {
    if !(t > 0.0) {
        return Err(Error::Config(format!("volume t = {t} must be positive")));
    }
    let members = grid
        .samples
        .iter()
        .map(|p| retract_to_volume(&sphere_map(mesh, p, t), t))
        .collect::<Result<Vec<_>>>()?;
    let n = members.len();
    let mut family = Family {
        grid,
        t,
        members,
        flagged: vec![false; n],
        continuity_cap: 0.0,
        steps: vec![DescentOptions::default().step0; n],
        solver: RieszSolver::new(Arc::clone(mesh)),
    };
    family.continuity_cap = 2.0 * family.max_neighbor_distance();
    Ok(family)
}

impl Family {
    pub fn mesh(&self) -> &Arc<SphereMesh> {
        self.members[0].mesh()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let diff: Vec<Point3> =
            self.members[i].values().iter().zip(self.members[j].values()).map(|(a, b)| a - b).collect();
        hilbert_inner_values(self.mesh(), &diff, &diff).max(0.0).sqrt()
    }

    pub fn max_neighbor_distance(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, nb) in self.grid.neighbors.iter().enumerate() {
            for &j in nb.iter().filter(|&&j| j > i) {
                d = d.max(self.distance(i, j));
            }
        }
        d
    }

    pub fn energies(&self, field: &ScalarField) -> Result<Vec<f64>> {
        self.members.par_iter().map(|u| energy(u, field)).collect()
    }

    pub fn max_volume_error(&self) -> f64 {
        self.members.iter().map(|u| (volume(u) - self.t).abs() / self.t).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Levels {
    /// Maximal boundary energy.
    pub c0: f64,
    /// Maximal energy over the family.
    pub c_running: f64,
}

pub fn estimate_levels(family: &Family, field: &ScalarField) -> Result<Levels> {
    let e = family.energies(field)?;
    let c0 = family.grid.boundary_indices().map(|i| e[i]).fold(f64::NEG_INFINITY, f64::max);
    let c_running = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Levels { c0, c_running })
}

/// New map, energy and accepted step of one member.
type Moved = (SurfaceMap, f64, f64);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeformSummary {
    /// Maximal energy after each sweep.
    pub c_history: Vec<f64>,
    pub rolled_back: usize,
    pub continuity_corrections: usize,
}

/// `sweeps` rounds of: one projected descent step on the interior members in
/// the top energy decile, then capped averaging toward neighbours for any
/// member farther than the continuity cap from one of them.
pub fn deform_family(
    family: &mut Family,
    field: &ScalarField,
    opts: &DescentOptions,
    sweeps: usize,
) -> Result<DeformSummary> {
    opts.validate()?;
    let t = family.t;
    let mut energies = family.energies(field)?;
    let interior: Vec<usize> = family.grid.interior_indices().collect();
    let take = interior.len().div_ceil(10).max(1);
    let mut summary = DeformSummary { c_history: Vec::with_capacity(sweeps), rolled_back: 0, continuity_corrections: 0 };
    for _ in 0..sweeps {
        let mut order = interior.clone();
        order.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]).then(a.cmp(&b)));
        order.truncate(take);

        let solver = &family.solver;
        let updates: Vec<(usize, Result<Option<Moved>>)> = order
            .par_iter()
            .map(|&i| {
                let u = &family.members[i];
                let step = family.steps[i];
                let out = Stationarity::compute(u, field, solver, None).and_then(|st| {
                    Ok(projected_step(u, field, t, &st, 2.0 * step, opts)?.map(|ls| (ls.u, ls.value, ls.step)))
                });
                (i, out)
            })
            .collect();
        let mut moved = Vec::new();
        for (i, out) in updates {
            match out {
                Ok(Some((u, e, step))) => {
                    family.members[i] = u;
                    family.steps[i] = step;
                    family.flagged[i] = false;
                    energies[i] = e;
                    moved.push(i);
                }
                Ok(None) => family.steps[i] *= opts.shrink,
                Err(Error::Retraction { .. }) | Err(Error::DegenerateConstraint { .. }) | Err(Error::Solver { .. }) => {
                    family.flagged[i] = true;
                    summary.rolled_back += 1;
                }
                Err(e) => return Err(e),
            }
        }
        summary.continuity_corrections += enforce_continuity(family, field, &moved, &mut energies)?;
        summary.c_history.push(energies.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(summary)
}

fn enforce_continuity(family: &mut Family, field: &ScalarField, moved: &[usize], energies: &mut [f64]) -> Result<usize> {
    let cap = family.continuity_cap;
    let mut corrections = 0;
    for &i in moved {
        let worst = family.grid.neighbors[i]
            .iter()
            .map(|&j| (j, family.distance(i, j)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((_, dist)) = worst else { continue };
        if dist <= cap {
            continue;
        }
        let nb = &family.grid.neighbors[i];
        let n = family.members[i].values().len();
        let mut avg = vec![Point3::zeros(); n];
        for &j in nb {
            for (a, v) in avg.iter_mut().zip(family.members[j].values()) {
                *a += v / nb.len() as f64;
            }
        }
        let theta = (1.0 - cap / dist).clamp(0.0, 1.0);
        let u = &family.members[i];
        let blended = u.with_values(u.values().iter().zip(&avg).map(|(a, b)| a * (1.0 - theta) + b * theta).collect());
        match retract_to_volume(&blended, family.t) {
            Ok(r) => {
                energies[i] = energy(&r, field)?;
                family.members[i] = r;
                corrections += 1;
            }
            Err(_) => family.flagged[i] = true,
        }
    }
    Ok(corrections)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeResult {
    /// `None` when inadmissible.
    pub degree: Option<i64>,
    pub raw: f64,
    pub min_distance: f64,
    pub admissible: bool,
}

/// Signed solid angle of the spherical triangle spanned by `a, b, c` seen
/// from the origin.
pub fn solid_angle(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(c));
    let den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    2.0 * num.atan2(den)
}

/// Degree of `g` on the ball relative to `p0`, from the total solid angle its
/// boundary values subtend at `p0`. `values[i]` is `g` at boundary vertex `i`
/// of the oriented `triangles`.
pub fn degree(values: &[Point3], triangles: &[[usize; 3]], p0: &Point3) -> DegreeResult {
    let min_distance = values.iter().map(|g| (g - p0).norm()).fold(f64::INFINITY, f64::min);
    if !(min_distance > ADMISSIBILITY_TOL) {
        return DegreeResult { degree: None, raw: f64::NAN, min_distance, admissible: false };
    }
    let raw = triangles
        .iter()
        .map(|&[a, b, c]| solid_angle(&(values[a] - p0), &(values[b] - p0), &(values[c] - p0)))
        .sum::<f64>()
        / (4.0 * PI);
    let rounded = raw.round();
    let admissible = (raw - rounded).abs() <= ROUNDING_GAP;
    DegreeResult { degree: admissible.then_some(rounded as i64), raw, min_distance, admissible }
}

/// Values of `B_t ∘ φ` on the boundary triangulation, re-indexed from 0.
pub fn boundary_barycenters(family: &Family) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let idx: Vec<usize> = family.grid.boundary_indices().collect();
    let first = idx[0];
    let values = idx.iter().map(|&i| barycenter(&family.members[i], family.t)).collect();
    let tris = family.grid.boundary_triangulation.iter().map(|t| t.map(|i| i - first)).collect();
    (values, tris)
}

/// Degree of `p ↦ B_t(φ(p))` on `∂B_R` relative to `p0`.
pub fn barycenter_degree(family: &Family, p0: &Point3) -> DegreeResult {
    let (values, tris) = boundary_barycenters(family);
    degree(&values, &tris, p0)
}

/// Whether `h(s, p) = sp + (1 − s)B_t(φ(p))` avoids `p0` on `∂B_R` for `s` on
/// an `s_steps`-interval grid of `[0, 1]`.
pub fn homotopy_check(family: &Family, p0: &Point3, s_steps: usize) -> Result<bool> {
    if !(p0.norm() < 1.0) {
        return Err(Error::Config(format!("target point must lie in the unit ball, |p0| = {}", p0.norm())));
    }
    let steps = s_steps.max(1);
    let (values, _) = boundary_barycenters(family);
    let points: Vec<Point3> = family.grid.boundary_indices().map(|i| family.grid.samples[i]).collect();
    let mut min = f64::INFINITY;
    for (p, b) in points.iter().zip(&values) {
        for k in 0..=steps {
            let s = k as f64 / steps as f64;
            min = min.min((p * s + b * (1.0 - s) - p0).norm());
        }
    }
    Ok(min > ADMISSIBILITY_TOL)
}
