//! Closed-form sphere data, the Newtonian potential of the unit ball and the
//! energy brackets for the minimax level.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fields::{ball_integral, condkzero_threshold, BallQuadrature, ScalarField};
use crate::functionals::{FunctionalReport, SurfaceMap};
use crate::mesh::SphereMesh;
use crate::{Point3, Result};

/// Sharp isoperimetric constant `(36π)^{1/3}`.
pub fn isoperimetric_constant() -> f64 {
    (36.0 * PI).cbrt()
}

/// Radius of the round sphere enclosing volume `t`.
pub fn s_t(t: f64) -> f64 {
    (3.0 * t / (4.0 * PI)).cbrt()
}

/// `ω_{p,t} = s_t(−ω + p)`: a positively oriented sphere of volume ≈ `t`
/// centred at `s_t p`.
pub fn sphere_map(mesh: &Arc<SphereMesh>, p: &Point3, t: f64) -> SurfaceMap {
    let s = s_t(t);
    SurfaceMap::from_fn(Arc::clone(mesh), |x| (p - x) * s)
}

/// Exact values for `center + r·ω`; `r < 0` reverses the orientation.
pub fn sphere_exact(field: &ScalarField, center: &Point3, r: f64, quad: &BallQuadrature) -> Result<FunctionalReport> {
    let d = 4.0 * PI * r * r;
    let v = -4.0 * PI * r * r * r / 3.0;
    let ball = if field.is_zero() { 0.0 } else { ball_integral(field, center, r.abs(), quad)? };
    let q = -r.signum() * ball;
    Ok(FunctionalReport {
        dirichlet: d,
        area: d,
        volume: v,
        weighted: q,
        energy: d + q,
        capillarity: d + q,
        mean: *center,
    })
}

/// Newtonian potential `I(p) = ∫_{B₁} |p − q|⁻¹ dq` and its field `−∇I`.
pub fn newtonian_potential(p: &Point3) -> (f64, Point3) {
    let r2 = p.norm_squared();
    if r2 <= 1.0 {
        (2.0 * PI / 3.0 * (3.0 - r2), p * (4.0 * PI / 3.0))
    } else {
        let r = r2.sqrt();
        (4.0 * PI / (3.0 * r), p * (4.0 * PI / (3.0 * r2 * r)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBrackets {
    pub t: f64,
    pub k0: f64,
    pub s_t: f64,
    /// `S t^{2/3}`, the isovolumetric level of the unweighted problem.
    pub s0: f64,
    pub lower: f64,
    pub sphere_upper: f64,
    pub two_bubble: f64,
    /// `sphere_upper < two_bubble`.
    pub separated: bool,
}

impl LevelBrackets {
    pub fn from_k0(k0: f64, t: f64) -> Self {
        let t23 = t.powf(2.0 / 3.0);
        let s0 = isoperimetric_constant() * t23;
        let sphere_upper = s0 + 2.0 * k0 * (9.0 * PI / 16.0).cbrt() * t23;
        let two_bubble = 2f64.cbrt() * s0;
        Self {
            t,
            k0,
            s_t: s_t(t),
            s0,
            lower: (1.0 - k0 / 2.0) * s0,
            sphere_upper,
            two_bubble,
            separated: sphere_upper < two_bubble,
        }
    }

    /// Whether `k0` is below the separation threshold `2(2^{1/3} − 1)`.
    pub fn k0_admissible(&self) -> bool {
        self.k0 < condkzero_threshold()
    }
}

/// Brackets using the declared `k0` of the field, or the sampled one when
/// nothing is declared.
pub fn level_brackets(field: &ScalarField, t: f64) -> Result<LevelBrackets> {
    let k0 = match field.k0_declared() {
        Some(k0) => k0,
        None => crate::fields::estimate_k0(field, &crate::fields::SamplingPlan::default())?.value(),
    };
    Ok(LevelBrackets::from_k0(k0, t))
}
