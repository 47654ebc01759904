//! Seeded random test surfaces: smooth perturbations of spheres built from
//! low-degree polynomials of the embedding coordinates.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::functionals::SurfaceMap;
use crate::mesh::SphereMesh;
use crate::Point3;

/// Random map `x ↦ c + Ax + Σ b_k (x_i x_j)` with a near-identity linear part.
pub fn random_smooth_map(mesh: &Arc<SphereMesh>, rng: &mut ChaCha8Rng, amplitude: f64) -> SurfaceMap {
    let mut a = nalgebra::Matrix3::<f64>::identity();
    for v in a.iter_mut() {
        *v += amplitude * rng.gen_range(-1.0..1.0);
    }
    let quad: Vec<Point3> = (0..6)
        .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amplitude)
        .collect();
    let shift = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let scale = rng.gen_range(0.5..2.0);
    SurfaceMap::from_fn(Arc::clone(mesh), |x| {
        let monomials = [x.x * x.x, x.y * x.y, x.z * x.z, x.x * x.y, x.y * x.z, x.z * x.x];
        let mut y = a * x;
        for (m, b) in monomials.iter().zip(&quad) {
            y += b * *m;
        }
        (y + shift) * scale
    })
}

/// Adds independent uniform noise of relative size `rel` times the map's
/// typical radius to every vertex value.
pub fn perturb(u: &SurfaceMap, rng: &mut ChaCha8Rng, rel: f64) -> SurfaceMap {
    let c = u.mean();
    let radius = u.values().iter().map(|v| (v - c).norm()).sum::<f64>() / u.values().len() as f64;
    let s = rel * radius;
    u.with_values(
        u.values()
            .iter()
            .map(|v| v + Point3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s)))
            .collect(),
    )
}

/// Random direction field with unit-size entries.
pub fn random_direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    (0..n)
        .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}
