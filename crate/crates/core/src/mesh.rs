//! Geodesic icosphere discretization of the parameter domain `S²`.
//!
//! Triangles are wound counter-clockwise seen from outside. The parameter
//! orientation used by the functionals is the one of the inverse
//! stereographic projection from the North Pole, `ω(z) = (μx, μy, 1 − μ)`,
//! which is inward-facing: the per-triangle frame `(e₁, e₂)` satisfies
//! `e₁ × e₂ = −n_out`, so the identity embedding has `u_x ∧ u_y = −μ²u` and
//! volume `−4π/3` in the continuum.

use std::collections::HashMap;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::functionals::SurfaceMap;
use crate::sparse::CsrMatrix;
use crate::{Error, Point3, Result};

pub const MAX_LEVEL: u32 = 8;

#[derive(Debug, Clone)]
pub struct SphereMesh {
    level: u32,
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    stereo_coords: Vec<Option<[f64; 2]>>,
    mu: Vec<f64>,
    tri_frames: Vec<[Point3; 2]>,
    /// Local coordinates `(|b − a|, c_x, c_y)` of each triangle in its frame.
    tri_local: Vec<[f64; 3]>,
    tri_areas: Vec<f64>,
    /// Cotangent of the angle at each corner.
    tri_cot: Vec<[f64; 3]>,
    tri_neighbors: Vec<[usize; 3]>,
    vertex_masses: Vec<f64>,
    total_mass: f64,
    stiffness: CsrMatrix,
}

/// Builds the icosahedron subdivided `level` times with vertices pushed to the
/// unit sphere.
pub fn build_icosphere(level: u32) -> Result<SphereMesh> {
    if level > MAX_LEVEL {
        return Err(Error::Config(format!("icosphere level {level} exceeds the limit {MAX_LEVEL}")));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut vertices: Vec<Point3> = raw.iter().map(|v| Point3::from(*v).normalize()).collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    Ok(SphereMesh::from_parts(level, vertices, triangles))
}

impl SphereMesh {
    fn from_parts(level: u32, vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Self {
        let nv = vertices.len();
        let mut stereo_coords = Vec::with_capacity(nv);
        let mut mu = Vec::with_capacity(nv);
        for v in &vertices {
            let denom = 1.0 - v.z;
            if denom < 1e-12 {
                stereo_coords.push(None);
                mu.push(0.0);
            } else {
                let z = [v.x / denom, v.y / denom];
                let m = 2.0 / (1.0 + z[0] * z[0] + z[1] * z[1]);
                debug_assert!((m - denom).abs() < 1e-9);
                stereo_coords.push(Some(z));
                mu.push(m);
            }
        }

        let nt = triangles.len();
        let mut tri_frames = Vec::with_capacity(nt);
        let mut tri_local = Vec::with_capacity(nt);
        let mut tri_areas = Vec::with_capacity(nt);
        let mut tri_cot = Vec::with_capacity(nt);
        let mut masses = vec![0.0; nv];
        let mut triplets = Vec::with_capacity(nt * 9);
        for &[a, b, c] in &triangles {
            let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
            let cross = (pb - pa).cross(&(pc - pa));
            let area = 0.5 * cross.norm();
            let n_out = cross / cross.norm();
            let e1 = (pb - pa).normalize();
            let e2 = e1.cross(&n_out);
            tri_frames.push([e1, e2]);
            tri_local.push([(pb - pa).norm(), (pc - pa).dot(&e1), (pc - pa).dot(&e2)]);
            tri_areas.push(area);
            let cot = |o: Point3, p: Point3, q: Point3| {
                let (u, v) = (p - o, q - o);
                u.dot(&v) / u.cross(&v).norm()
            };
            let cots = [cot(pa, pb, pc), cot(pb, pc, pa), cot(pc, pa, pb)];
            tri_cot.push(cots);
            for (k, &v) in [a, b, c].iter().enumerate() {
                masses[v] += area / 3.0;
                // edge opposite corner k joins the other two corners
                let i = [a, b, c][(k + 1) % 3];
                let j = [a, b, c][(k + 2) % 3];
                let w = 0.5 * cots[k];
                triplets.push((i, i, w));
                triplets.push((j, j, w));
                triplets.push((i, j, -w));
                triplets.push((j, i, -w));
            }
        }
        let stiffness = CsrMatrix::from_triplets(nv, triplets);
        let total_mass = masses.iter().sum();

        let mut edge_owner: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(nt * 3);
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                edge_owner.insert((tri[k], tri[(k + 1) % 3]), (t, k));
            }
        }
        let tri_neighbors = triangles
            .iter()
            .map(|tri| {
                let mut nb = [usize::MAX; 3];
                for k in 0..3 {
                    if let Some(&(t, _)) = edge_owner.get(&(tri[(k + 1) % 3], tri[k])) {
                        nb[k] = t;
                    }
                }
                nb
            })
            .collect();

        Self {
            level,
            vertices,
            triangles,
            stereo_coords,
            mu,
            tri_frames,
            tri_local,
            tri_areas,
            tri_cot,
            tri_neighbors,
            vertex_masses: masses,
            total_mass,
            stiffness,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Stereographic chart coordinates; `None` marks the North Pole.
    pub fn stereo_coords(&self) -> &[Option<[f64; 2]>] {
        &self.stereo_coords
    }

    /// Conformal weight `μ = 2/(1 + |z|²)` per vertex.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn tri_frames(&self) -> &[[Point3; 2]] {
        &self.tri_frames
    }

    pub fn tri_areas(&self) -> &[f64] {
        &self.tri_areas
    }

    pub fn vertex_masses(&self) -> &[f64] {
        &self.vertex_masses
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Cotangent stiffness: `½ uᵀLu` is the Dirichlet integral of the
    /// piecewise-linear interpolant of `u`.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub(crate) fn tri_cot(&self) -> &[[f64; 3]] {
        &self.tri_cot
    }

    pub(crate) fn tri_local(&self) -> &[[f64; 3]] {
        &self.tri_local
    }

    pub fn num_edges(&self) -> usize {
        self.triangles.len() * 3 / 2
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    /// Triangle containing the direction `q` and barycentric weights of the
    /// radial projection of `q` onto it. `hint` seeds a walk across edges.
    pub fn locate(&self, q: &Point3, hint: usize) -> Result<(usize, [f64; 3])> {
        let signs = |t: usize| {
            let [a, b, c] = self.triangles[t];
            let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            [q.dot(&pb.cross(&pc)), q.dot(&pc.cross(&pa)), q.dot(&pa.cross(&pb))]
        };
        let eps = -1e-14;
        let mut t = hint.min(self.triangles.len() - 1);
        let max_steps = 8 * (self.triangles.len() as f64).sqrt() as usize + 64;
        for _ in 0..max_steps {
            let s = signs(t);
            // s[0] is opposite corner a, i.e. edge (b, c) = neighbor slot 1
            if s.iter().all(|&v| v >= eps) {
                return Ok((t, barycentric(s)));
            }
            let (k, _) = s
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.total_cmp(y.1))
                .unwrap();
            let slot = (k + 1) % 3;
            let next = self.tri_neighbors[t][slot];
            if next == usize::MAX {
                break;
            }
            t = next;
        }
        // walking can cycle on badly shaped meshes; fall back to a full scan
        let best = (0..self.triangles.len())
            .map(|t| (t, signs(t)))
            .max_by(|x, y| {
                let mx = x.1.iter().copied().fold(f64::INFINITY, f64::min);
                let my = y.1.iter().copied().fold(f64::INFINITY, f64::min);
                mx.total_cmp(&my)
            })
            .unwrap();
        if best.1.iter().all(|&v| v >= -1e-10) && best.1.iter().sum::<f64>() > 0.0 {
            Ok((best.0, barycentric(best.1)))
        } else {
            Err(Error::PointLocation(*q))
        }
    }
}

fn barycentric(s: [f64; 3]) -> [f64; 3] {
    let s = [s[0].max(0.0), s[1].max(0.0), s[2].max(0.0)];
    let total = s[0] + s[1] + s[2];
    [s[0] / total, s[1] / total, s[2] / total]
}

/// Conformal self-map of `S²`: a rotation followed by the chart dilation
/// `z ↦ dilation·z` in the stereographic chart from the North Pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusTransform {
    pub rotation: Matrix3<f64>,
    pub dilation: f64,
}

impl MobiusTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), dilation: 1.0 }
    }

    pub fn rotation(rotation: Matrix3<f64>) -> Self {
        Self { rotation, dilation: 1.0 }
    }

    pub fn dilation(dilation: f64) -> Self {
        Self { rotation: Matrix3::identity(), dilation }
    }

    pub fn is_identity(&self) -> bool {
        self.dilation == 1.0 && self.rotation == Matrix3::identity()
    }

    pub fn apply(&self, x: &Point3) -> Point3 {
        let y = self.rotation * x;
        if self.dilation == 1.0 {
            return y;
        }
        let denom = 1.0 - y.z;
        if denom < 1e-14 {
            return Point3::new(0.0, 0.0, 1.0);
        }
        let (zx, zy) = (self.dilation * y.x / denom, self.dilation * y.y / denom);
        let mu = 2.0 / (1.0 + zx * zx + zy * zy);
        Point3::new(mu * zx, mu * zy, 1.0 - mu)
    }
}

/// `u ∘ g` resampled at the mesh vertices by barycentric interpolation.
pub fn mobius_reparametrize(u: &SurfaceMap, g: &MobiusTransform) -> Result<SurfaceMap> {
    if g.is_identity() {
        return Ok(u.clone());
    }
    let mesh = u.mesh();
    let mut hint = 0;
    let mut values = Vec::with_capacity(mesh.num_vertices());
    for x in mesh.vertices() {
        let y = g.apply(x);
        let (t, w) = mesh.locate(&y, hint)?;
        hint = t;
        let [a, b, c] = mesh.triangles()[t];
        values.push(u.values()[a] * w[0] + u.values()[b] * w[1] + u.values()[c] * w[2]);
    }
    Ok(u.with_values(values))
}
