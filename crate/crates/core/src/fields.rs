//! Curvature weights `K: ℝ³ → ℝ`, the derived vector field `Q_K` with
//! `div Q_K = K`, and sampled checks of the structural assumptions on `K`.
//!
//! The assumptions in play are
//!
//! * (K₁) `k₀ := sup |K(p)p| < 2`,
//! * (K₂) `K(p)p → 0` as `|p| → ∞`,
//! * the smallness condition `k₀ < 2(2^{1/3} − 1)` that separates the
//!   one-sphere and two-sphere energy levels,
//! * the restriction `2^{2/3}(2 + k₀) < (2 − k₀)²` under which minimizers exist
//!   for sign-changing weights.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::quadrature::GaussRule;
use crate::{Error, Point3, Result};

/// Default Gauss–Legendre order for the radial integral `m_K`.
pub const QK_ORDER: usize = 32;

/// `2(2^{1/3} − 1)`, the upper bound on `k₀` for the minimax bracket.
pub fn condkzero_threshold() -> f64 {
    2.0 * (2f64.cbrt() - 1.0)
}

/// Whether `2^{2/3}(2 + k₀) < (2 − k₀)²`.
pub fn restriction_holds(k0: f64) -> bool {
    restriction_margin(k0) > 0.0
}

/// `(2 − k₀)² − 2^{2/3}(2 + k₀)`.
pub fn restriction_margin(k0: f64) -> f64 {
    let c = 2f64.powf(2.0 / 3.0);
    (2.0 - k0) * (2.0 - k0) - c * (2.0 + k0)
}

/// The root in `[0, 2)` of `(2 − k)² = 2^{2/3}(2 + k)`.
pub fn restriction_threshold() -> f64 {
    let c = 2f64.powf(2.0 / 3.0);
    // smaller root of k² − (4 + c)k + (4 − 2c) = 0, written to avoid cancellation
    let b = 4.0 + c;
    let disc = (c * c + 16.0 * c).sqrt();
    2.0 * (4.0 - 2.0 * c) / (b + disc)
}

pub type Evaluator = Arc<dyn Fn(&Point3) -> f64 + Send + Sync>;
pub type GradientEvaluator = Arc<dyn Fn(&Point3) -> Point3 + Send + Sync>;

/// A scalar curvature weight `K` with metadata about its claimed bounds.
#[derive(Clone)]
pub struct ScalarField {
    label: String,
    eval: Evaluator,
    grad: Option<GradientEvaluator>,
    k0_declared: Option<f64>,
    positive: bool,
    zero: bool,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("label", &self.label)
            .field("k0_declared", &self.k0_declared)
            .field("positive", &self.positive)
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl ScalarField {
    pub fn new(label: impl Into<String>, eval: impl Fn(&Point3) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(eval),
            grad: None,
            k0_declared: None,
            positive: false,
            zero: false,
        }
    }

    /// `K ≡ 0`.
    pub fn zero() -> Self {
        let mut f = Self::new("zero", |_| 0.0).with_gradient(|_| Point3::zeros()).with_k0(0.0);
        f.zero = true;
        f
    }

    pub fn with_gradient(mut self, grad: impl Fn(&Point3) -> Point3 + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_k0(mut self, k0: f64) -> Self {
        assert!(k0 >= 0.0, "k0 must be nonnegative");
        self.k0_declared = Some(k0);
        self
    }

    pub fn with_positive(mut self, positive: bool) -> Self {
        self.positive = positive;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn k0_declared(&self) -> Option<f64> {
        self.k0_declared
    }

    pub fn positive_claimed(&self) -> bool {
        self.positive
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn value(&self, p: &Point3) -> Result<f64> {
        let v = (self.eval)(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { label: self.label.clone(), point: *p, value: v })
        }
    }

    /// `∇K(p)`, analytic when available and by central differences otherwise.
    pub fn gradient(&self, p: &Point3) -> Result<Point3> {
        if let Some(g) = &self.grad {
            let v = g(p);
            if v.iter().all(|c| c.is_finite()) {
                return Ok(v);
            }
            return Err(Error::Evaluation { label: self.label.clone(), point: *p, value: f64::NAN });
        }
        let h = 1e-6 * (1.0 + p.norm());
        let mut out = Point3::zeros();
        for k in 0..3 {
            let mut e = Point3::zeros();
            e[k] = h;
            out[k] = (self.value(&(p + e))? - self.value(&(p - e))?) / (2.0 * h);
        }
        Ok(out)
    }

    /// Checks the positivity claim on every probe of `plan`.
    pub fn validate(&self, plan: &SamplingPlan) -> Result<()> {
        if !self.positive {
            return Ok(());
        }
        for p in plan.probes() {
            let v = self.value(&p)?;
            if v <= 0.0 {
                return Err(Error::PositivityViolated { label: self.label.clone(), point: p, value: v });
            }
        }
        Ok(())
    }
}

/// Serializable description of the built-in field library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSpec {
    /// `K ≡ k`.
    Constant { k: f64 },
    /// `K(p) = a / (1 + |p|)^β` with `β ≥ 1`.
    Radial {
        a: f64,
        #[serde(default = "one")]
        beta: f64,
    },
    /// `K(p) = amplitude · exp(1 − 1/(1 − s²))` for `s = |p − center|/radius < 1`,
    /// zero outside. The peak value is `amplitude`.
    Bump {
        amplitude: f64,
        #[serde(default)]
        center: [f64; 3],
        radius: f64,
    },
    Sum { terms: Vec<FieldSpec> },
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            FieldSpec::Constant { k } if !k.is_finite() => bad(format!("constant field: k = {k} is not finite")),
            FieldSpec::Radial { a, beta } => {
                if !a.is_finite() {
                    bad(format!("radial field: a = {a} is not finite"))
                } else if !(*beta >= 1.0) || !beta.is_finite() {
                    bad(format!("radial field: beta = {beta} must be ≥ 1"))
                } else {
                    Ok(())
                }
            }
            FieldSpec::Bump { amplitude, center, radius } => {
                if !amplitude.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    bad("bump field: non-finite parameter".into())
                } else if !(*radius > 0.0) || !radius.is_finite() {
                    bad(format!("bump field: radius = {radius} must be positive"))
                } else {
                    Ok(())
                }
            }
            FieldSpec::Sum { terms } => {
                if terms.is_empty() {
                    return bad("sum field: no terms".into());
                }
                terms.iter().try_for_each(FieldSpec::validate)
            }
            FieldSpec::Constant { .. } => Ok(()),
        }
    }

    fn nonnegative(&self) -> bool {
        match self {
            FieldSpec::Constant { k } => *k >= 0.0,
            FieldSpec::Radial { a, .. } => *a >= 0.0,
            FieldSpec::Bump { amplitude, .. } => *amplitude >= 0.0,
            FieldSpec::Sum { terms } => terms.iter().all(FieldSpec::nonnegative),
        }
    }

    fn positive(&self) -> bool {
        match self {
            FieldSpec::Constant { k } => *k > 0.0,
            FieldSpec::Radial { a, .. } => *a > 0.0,
            FieldSpec::Bump { .. } => false,
            FieldSpec::Sum { terms } => {
                terms.iter().all(FieldSpec::nonnegative) && terms.iter().any(FieldSpec::positive)
            }
        }
    }

    /// Closed-form `sup |K(p)p|` where one is available.
    fn k0(&self) -> Option<f64> {
        match self {
            FieldSpec::Constant { k } => (*k == 0.0).then_some(0.0),
            FieldSpec::Radial { a, beta } => {
                if *beta == 1.0 {
                    Some(a.abs())
                } else {
                    let r = 1.0 / (beta - 1.0);
                    Some(a.abs() * r / (1.0 + r).powf(*beta))
                }
            }
            FieldSpec::Bump { .. } => None,
            FieldSpec::Sum { terms } => terms.iter().map(FieldSpec::k0).sum(),
        }
    }

    fn label(&self) -> String {
        match self {
            FieldSpec::Constant { k } => format!("constant({k})"),
            FieldSpec::Radial { a, beta } => format!("radial({a},{beta})"),
            FieldSpec::Bump { amplitude, center, radius } => {
                format!("bump({amplitude},[{},{},{}],{radius})", center[0], center[1], center[2])
            }
            FieldSpec::Sum { terms } => {
                let parts: Vec<String> = terms.iter().map(FieldSpec::label).collect();
                format!("sum({})", parts.join("+"))
            }
        }
    }

    fn evaluator(&self) -> (Evaluator, GradientEvaluator) {
        match self.clone() {
            FieldSpec::Constant { k } => (Arc::new(move |_| k), Arc::new(|_| Point3::zeros())),
            FieldSpec::Radial { a, beta } => (
                Arc::new(move |p: &Point3| a / (1.0 + p.norm()).powf(beta)),
                Arc::new(move |p: &Point3| {
                    let r = p.norm();
                    if r == 0.0 {
                        Point3::zeros()
                    } else {
                        p * (-a * beta * (1.0 + r).powf(-beta - 1.0) / r)
                    }
                }),
            ),
            FieldSpec::Bump { amplitude, center, radius } => {
                let c = Point3::from(center);
                (
                    Arc::new(move |p: &Point3| {
                        let s2 = (p - c).norm_squared() / (radius * radius);
                        if s2 < 1.0 {
                            amplitude * (1.0 - 1.0 / (1.0 - s2)).exp()
                        } else {
                            0.0
                        }
                    }),
                    Arc::new(move |p: &Point3| {
                        let d = p - c;
                        let s2 = d.norm_squared() / (radius * radius);
                        if s2 < 1.0 {
                            let g = 1.0 - s2;
                            let e = (1.0 - 1.0 / g).exp();
                            d * (-2.0 * amplitude * e / (g * g * radius * radius))
                        } else {
                            Point3::zeros()
                        }
                    }),
                )
            }
            FieldSpec::Sum { terms } => {
                let parts: Vec<(Evaluator, GradientEvaluator)> = terms.iter().map(FieldSpec::evaluator).collect();
                let evals: Vec<Evaluator> = parts.iter().map(|(e, _)| e.clone()).collect();
                let grads: Vec<GradientEvaluator> = parts.into_iter().map(|(_, g)| g).collect();
                (
                    Arc::new(move |p: &Point3| evals.iter().map(|e| e(p)).sum()),
                    Arc::new(move |p: &Point3| grads.iter().fold(Point3::zeros(), |acc, g| acc + g(p))),
                )
            }
        }
    }

    pub fn build(&self) -> Result<ScalarField> {
        self.validate()?;
        let (eval, grad) = self.evaluator();
        Ok(ScalarField {
            label: self.label(),
            eval,
            grad: Some(grad),
            k0_declared: self.k0(),
            positive: self.positive(),
            zero: matches!(self, FieldSpec::Constant { k } if *k == 0.0),
        })
    }
}

/// Gauss–Legendre rule for `m_K(p) = ∫₀¹ K(sp) s² ds` and its gradient.
#[derive(Debug, Clone)]
pub struct QkRule {
    rule: GaussRule,
}

impl QkRule {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::Config(format!("Q_K quadrature order {order} < 2")));
        }
        Ok(Self { rule: GaussRule::new(order, 0.0, 1.0) })
    }

    pub fn m(&self, field: &ScalarField, p: &Point3) -> Result<f64> {
        let mut m = 0.0;
        for (&s, &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            m += w * s * s * field.value(&(p * s))?;
        }
        Ok(m)
    }

    pub fn eval(&self, field: &ScalarField, p: &Point3) -> Result<Point3> {
        Ok(p * self.m(field, p)?)
    }

    /// `m_K(p)` and `∇m_K(p) = ∫₀¹ ∇K(sp) s³ ds` under the same rule, so the
    /// pair is an exact derivative of the discrete `m_K` when `∇K` is exact.
    pub fn m_and_gradient(&self, field: &ScalarField, p: &Point3) -> Result<(f64, Point3)> {
        let mut m = 0.0;
        let mut dm = Point3::zeros();
        for (&s, &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let q = p * s;
            m += w * s * s * field.value(&q)?;
            dm += field.gradient(&q)? * (w * s * s * s);
        }
        Ok((m, dm))
    }
}

impl Default for QkRule {
    fn default() -> Self {
        Self { rule: GaussRule::new(QK_ORDER, 0.0, 1.0) }
    }
}

/// `Q_K(p) = m_K(p) p` with `m_K` by Gauss–Legendre quadrature of order `quad_order`.
pub fn qk_eval(field: &ScalarField, p: &Point3, quad_order: usize) -> Result<Point3> {
    QkRule::new(quad_order)?.eval(field, p)
}

/// Probe layout for sampled estimates of `sup |K(p)p|` and of the decay (K₂).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    pub r_min: f64,
    pub r_max: f64,
    pub radii_per_decade: usize,
    pub directions: usize,
    /// Threshold on `max |K(p)p|` at `r_max` for (K₂) to count as verified.
    pub k2_tol: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self { r_min: 1e-3, r_max: 1e3, radii_per_decade: 10, directions: 64, k2_tol: 1e-3 }
    }
}

impl SamplingPlan {
    pub fn radii(&self) -> Vec<f64> {
        let decades = (self.r_max / self.r_min).log10();
        let n = (decades * self.radii_per_decade as f64).round().max(1.0) as usize;
        (0..=n)
            .map(|i| {
                if i == n {
                    self.r_max
                } else {
                    self.r_min * 10f64.powf(decades * i as f64 / n as f64)
                }
            })
            .collect()
    }

    pub fn direction_set(&self) -> Vec<Point3> {
        fibonacci_directions(self.directions)
    }

    /// Every probe point: the origin plus `radii × directions`.
    pub fn probes(&self) -> Vec<Point3> {
        let dirs = self.direction_set();
        let mut out = vec![Point3::zeros()];
        for r in self.radii() {
            out.extend(dirs.iter().map(|d| d * r));
        }
        out
    }
}

/// Quasi-uniform unit vectors on a Fibonacci spiral.
pub fn fibonacci_directions(n: usize) -> Vec<Point3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Point3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum K0Estimate {
    Bounded { k0: f64 },
    /// The running maximum still grew by more than 1% over the last decade of radii.
    Unbounded { sampled_max: f64 },
}

impl K0Estimate {
    pub fn value(&self) -> f64 {
        match *self {
            K0Estimate::Bounded { k0 } => k0,
            K0Estimate::Unbounded { sampled_max } => sampled_max,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, K0Estimate::Bounded { .. })
    }
}

/// Sampled `sup |K(p)||p|`.
pub fn estimate_k0(field: &ScalarField, plan: &SamplingPlan) -> Result<K0Estimate> {
    let dirs = plan.direction_set();
    let cutoff = plan.r_max / 10.0 * (1.0 + 1e-9);
    let mut max_before = 0.0f64;
    let mut max_all = 0.0f64;
    for r in plan.radii() {
        let mut m = 0.0f64;
        for d in &dirs {
            m = m.max(field.value(&(d * r))?.abs() * r);
        }
        max_all = max_all.max(m);
        if r <= cutoff {
            max_before = max_before.max(m);
        }
    }
    let grows = if max_before > 0.0 {
        (max_all - max_before) / max_before > 0.01
    } else {
        max_all > 0.0
    };
    Ok(if grows {
        K0Estimate::Unbounded { sampled_max: max_all }
    } else {
        K0Estimate::Bounded { k0: max_all }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecayStatus {
    Pass,
    /// `max |K(p)p|` at `r_max` is still above the tolerance.
    Inconclusive { max_at_r_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMargins {
    /// `2 − k₀`
    pub k1: f64,
    /// `2(2^{1/3} − 1) − k₀`
    pub condkzero: f64,
    /// `(2 − k₀)² − 2^{2/3}(2 + k₀)`
    pub restriction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub label: String,
    pub k0_estimate: f64,
    pub k0_unbounded: bool,
    pub k1_pass: bool,
    pub k2_pass: bool,
    pub k2_status: DecayStatus,
    pub condkzero_pass: bool,
    pub restriction_pass: bool,
    /// Vacuously true when positivity is not claimed.
    pub positive_pass: bool,
    pub positive_observed: bool,
    pub margins: ConditionMargins,
}

impl ConditionReport {
    /// Threshold arithmetic for a given `k₀`; the sampled parts are passed in.
    pub fn from_k0(
        label: impl Into<String>,
        k0: K0Estimate,
        k2_status: DecayStatus,
        positive_claimed: bool,
        positive_observed: bool,
    ) -> Self {
        let k0v = k0.value();
        let bounded = k0.is_bounded();
        Self {
            label: label.into(),
            k0_estimate: k0v,
            k0_unbounded: !bounded,
            k1_pass: bounded && k0v < 2.0,
            k2_pass: k2_status == DecayStatus::Pass,
            k2_status,
            condkzero_pass: bounded && k0v < condkzero_threshold(),
            restriction_pass: bounded && k0v < 2.0 && restriction_holds(k0v),
            positive_pass: !positive_claimed || positive_observed,
            positive_observed,
            margins: ConditionMargins {
                k1: 2.0 - k0v,
                condkzero: condkzero_threshold() - k0v,
                restriction: restriction_margin(k0v),
            },
        }
    }
}

/// Sampled verification of (K₁), (K₂), the smallness conditions and positivity.
pub fn check_conditions(field: &ScalarField, plan: &SamplingPlan) -> Result<ConditionReport> {
    let k0 = estimate_k0(field, plan)?;
    let mut tail = 0.0f64;
    for d in plan.direction_set() {
        let p = d * plan.r_max;
        tail = tail.max(field.value(&p)?.abs() * plan.r_max);
    }
    let k2 = if tail <= plan.k2_tol {
        DecayStatus::Pass
    } else {
        DecayStatus::Inconclusive { max_at_r_max: tail }
    };
    let mut positive = true;
    for p in plan.probes() {
        if field.value(&p)? <= 0.0 {
            positive = false;
            break;
        }
    }
    Ok(ConditionReport::from_k0(field.label(), k0, k2, field.positive_claimed(), positive))
}

/// Tensorized spherical-shell quadrature: composite Gauss–Legendre in the
/// radius and in `cos θ`, trapezoid in the azimuth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallQuadrature {
    pub radial_panels: usize,
    pub radial_order: usize,
    pub polar_panels: usize,
    pub polar_order: usize,
    pub azimuth_nodes: usize,
}

impl Default for BallQuadrature {
    fn default() -> Self {
        Self { radial_panels: 16, radial_order: 8, polar_panels: 8, polar_order: 8, azimuth_nodes: 64 }
    }
}

impl BallQuadrature {
    /// Smaller plan for energy scans where `K` is smooth on the ball.
    pub fn coarse() -> Self {
        Self { radial_panels: 4, radial_order: 8, polar_panels: 2, polar_order: 8, azimuth_nodes: 32 }
    }
}

/// `∫_{B_radius(center)} K(q) dq`.
pub fn ball_integral(field: &ScalarField, center: &Point3, radius: f64, quad: &BallQuadrature) -> Result<f64> {
    shell_integral(field, center, 0.0, radius, quad)
}

/// `∫_{r_inner < |q − center| < r_outer} K(q) dq`.
pub fn shell_integral(
    field: &ScalarField,
    center: &Point3,
    r_inner: f64,
    r_outer: f64,
    quad: &BallQuadrature,
) -> Result<f64> {
    if !(r_outer > r_inner) || r_inner < 0.0 {
        return Err(Error::Config(format!("invalid shell radii [{r_inner}, {r_outer}]")));
    }
    let radial = GaussRule::composite(quad.radial_order, quad.radial_panels, r_inner, r_outer);
    let polar = GaussRule::composite(quad.polar_order, quad.polar_panels, -1.0, 1.0);
    let n_az = quad.azimuth_nodes.max(1);
    let d_az = 2.0 * PI / n_az as f64;
    let azimuth: Vec<(f64, f64)> = (0..n_az)
        .map(|k| {
            let phi = (k as f64 + 0.5) * d_az;
            (phi.cos(), phi.sin())
        })
        .collect();
    let mut total = 0.0;
    for (&rho, &wr) in radial.nodes.iter().zip(&radial.weights) {
        let mut shell = 0.0;
        for (&ct, &wt) in polar.nodes.iter().zip(&polar.weights) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let mut ring = 0.0;
            for &(c, s) in &azimuth {
                let q = center + Point3::new(st * c, st * s, ct) * rho;
                ring += field.value(&q)?;
            }
            shell += wt * ring * d_az;
        }
        total += wr * rho * rho * shell;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn radial(a: f64) -> ScalarField {
        FieldSpec::Radial { a, beta: 1.0 }.build().unwrap()
    }

    /// Smooth test field: a Gaussian plus a quadratic, with exact gradient.
    fn smooth_field(rng: &mut ChaCha8Rng) -> ScalarField {
        let c = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let amp: f64 = rng.gen_range(0.2..1.0);
        let b = Point3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        ScalarField::new("gauss", move |p: &Point3| amp * (-(p - c).norm_squared()).exp() + b.dot(p) * p.z)
    }

    #[test]
    fn qk_of_constant_field_is_a_third_of_p() {
        let f = FieldSpec::Constant { k: 0.7 }.build().unwrap();
        let p = Point3::new(1.0, -2.0, 0.5);
        let q = qk_eval(&f, &p, 8).unwrap();
        assert!((q - p * (0.7 / 3.0)).norm() < 1e-15);
        let z = qk_eval(&ScalarField::zero(), &p, 8).unwrap();
        assert_eq!(z, Point3::zeros());
    }

    #[test]
    fn qk_order_below_two_is_rejected() {
        assert!(matches!(qk_eval(&ScalarField::zero(), &Point3::x(), 1), Err(Error::Config(_))));
    }

    #[test]
    fn qk_reports_non_finite_samples() {
        let f = ScalarField::new("bad", |p: &Point3| if p.norm() > 0.5 { f64::NAN } else { 1.0 });
        let err = qk_eval(&f, &Point3::new(1.0, 0.0, 0.0), 8).unwrap_err();
        match err {
            Error::Evaluation { point, .. } => assert!(point.norm() > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn divergence_of_qk_recovers_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let f = smooth_field(&mut rng);
            let rule = QkRule::default();
            for _ in 0..10 {
                let p = Point3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                if p.norm() < 0.1 {
                    continue;
                }
                let h = 1e-4 * (1.0 + p.norm());
                let mut div = 0.0;
                for k in 0..3 {
                    let mut e = Point3::zeros();
                    e[k] = h;
                    div += (rule.eval(&f, &(p + e)).unwrap()[k] - rule.eval(&f, &(p - e)).unwrap()[k]) / (2.0 * h);
                }
                let k = f.value(&p).unwrap();
                assert!((div - k).abs() <= 1e-4 * k.abs().max(1e-2), "div {div} vs K {k}");
            }
        }
    }

    #[test]
    fn qk_is_bounded_by_half_k0() {
        for spec in [
            FieldSpec::Radial { a: 0.4, beta: 1.0 },
            FieldSpec::Radial { a: -1.2, beta: 2.0 },
            FieldSpec::Bump { amplitude: -0.8, center: [0.3, 0.0, 0.0], radius: 1.0 },
        ] {
            let f = spec.build().unwrap();
            let k0 = match f.k0_declared() {
                Some(k) => k,
                None => estimate_k0(&f, &SamplingPlan::default()).unwrap().value() * 1.01,
            };
            let rule = QkRule::default();
            for d in fibonacci_directions(100) {
                for r in [0.01, 0.3, 1.0, 3.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6] {
                    let q = rule.eval(&f, &(d * r)).unwrap();
                    assert!(q.norm() <= k0 / 2.0 + 1e-9, "{:?}: |Q| = {}", spec, q.norm());
                }
            }
        }
    }

    #[test]
    fn m_gradient_matches_finite_differences() {
        let f = FieldSpec::Sum {
            terms: vec![
                FieldSpec::Radial { a: 0.3, beta: 2.0 },
                FieldSpec::Bump { amplitude: -0.5, center: [0.2, 0.1, 0.0], radius: 1.5 },
            ],
        }
        .build()
        .unwrap();
        let rule = QkRule::default();
        let p = Point3::new(0.4, -0.3, 0.8);
        let (_, dm) = rule.m_and_gradient(&f, &p).unwrap();
        for k in 0..3 {
            let mut e = Point3::zeros();
            e[k] = 1e-6;
            let fd = (rule.m(&f, &(p + e)).unwrap() - rule.m(&f, &(p - e)).unwrap()) / 2e-6;
            assert!((fd - dm[k]).abs() < 1e-8, "component {k}: {fd} vs {}", dm[k]);
        }
    }

    #[test]
    fn k0_of_zero_field_is_zero() {
        let est = estimate_k0(&ScalarField::zero(), &SamplingPlan::default()).unwrap();
        assert_eq!(est, K0Estimate::Bounded { k0: 0.0 });
    }

    #[test]
    fn k0_of_rational_field_approaches_its_supremum() {
        let est = estimate_k0(&radial(0.4), &SamplingPlan::default()).unwrap();
        assert!(est.is_bounded());
        assert!((est.value() - 0.4).abs() < 1e-3, "{est:?}");
    }

    #[test]
    fn k0_of_constant_field_is_unbounded() {
        let f = FieldSpec::Constant { k: 1.0 }.build().unwrap();
        let est = estimate_k0(&f, &SamplingPlan::default()).unwrap();
        assert!(!est.is_bounded());
    }

    #[test]
    fn conditions_for_the_rational_field() {
        let rep = check_conditions(&radial(0.4), &SamplingPlan::default()).unwrap();
        assert!(rep.k1_pass);
        assert!(rep.condkzero_pass);
        assert!(rep.positive_pass && rep.positive_observed);
        // K(p)p → 0.4, so decay is not confirmed
        assert!(!rep.k2_pass);
        assert!(matches!(rep.k2_status, DecayStatus::Inconclusive { .. }));
        assert!(!rep.restriction_pass);
    }

    #[test]
    fn conditions_for_zero_field_all_pass() {
        let rep = check_conditions(&ScalarField::zero(), &SamplingPlan::default()).unwrap();
        assert_eq!(rep.k0_estimate, 0.0);
        assert!(rep.k1_pass && rep.k2_pass && rep.condkzero_pass && rep.restriction_pass && rep.positive_pass);
    }

    #[test]
    fn k0_of_one_fails_condkzero() {
        let rep = ConditionReport::from_k0("x", K0Estimate::Bounded { k0: 1.0 }, DecayStatus::Pass, false, false);
        assert!(rep.k1_pass);
        assert!(!rep.condkzero_pass);
        assert!((condkzero_threshold() - 0.5198).abs() < 1e-4);
    }

    #[test]
    fn positivity_violation_is_a_hard_error() {
        let f = ScalarField::new("liar", |p: &Point3| 1.0 - p.norm()).with_positive(true);
        assert!(matches!(f.validate(&SamplingPlan::default()), Err(Error::PositivityViolated { .. })));
        assert!(radial(0.4).validate(&SamplingPlan::default()).is_ok());
    }

    #[test]
    fn ball_integral_of_constant() {
        let f = FieldSpec::Constant { k: 2.5 }.build().unwrap();
        let r = 1.7;
        let got = ball_integral(&f, &Point3::new(1.0, 2.0, 3.0), r, &BallQuadrature::default()).unwrap();
        let want = 2.5 * 4.0 / 3.0 * PI * r.powi(3);
        assert!((got - want).abs() < 1e-10 * want);
    }

    #[test]
    fn ball_integral_of_inverse_distance_uses_mean_value() {
        let f = ScalarField::new("1/|q|", |q: &Point3| 1.0 / q.norm());
        let got = ball_integral(&f, &Point3::new(2.0, 0.0, 0.0), 1.0, &BallQuadrature::default()).unwrap();
        let want = 2.0 * PI / 3.0;
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn ball_integral_agrees_with_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coef: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c2 = coef.clone();
        let f = ScalarField::new("poly", move |q: &Point3| {
            c2[0] + c2[1] * q.x + c2[2] * q.y * q.z + c2[3] * q.x * q.x + c2[4] * q.z.powi(3) + c2[5] * q.x * q.y * q.z
        });
        let center = Point3::new(0.3, -0.2, 0.5);
        let radius = 1.3;
        let quad = ball_integral(&f, &center, radius, &BallQuadrature::default()).unwrap();
        // rejection sampling in the bounding cube
        let n = 1_000_000;
        let vol_cube = (2.0 * radius).powi(3);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let d = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * radius;
            let v = if d.norm() < radius { f.value(&(center + d)).unwrap() * vol_cube } else { 0.0 };
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((quad - mean).abs() <= 3.0 * se, "quadrature {quad}, MC {mean} ± {se}");
    }

    #[test]
    fn shells_add_up_to_the_ball() {
        let f = FieldSpec::Bump { amplitude: 1.0, center: [0.2, 0.0, -0.1], radius: 0.9 }.build().unwrap();
        let c = Point3::new(0.0, 0.1, 0.0);
        let q = BallQuadrature::default();
        let whole = ball_integral(&f, &c, 1.2, &q).unwrap();
        let parts = shell_integral(&f, &c, 0.0, 0.5, &q).unwrap()
            + shell_integral(&f, &c, 0.5, 0.8, &q).unwrap()
            + shell_integral(&f, &c, 0.8, 1.2, &q).unwrap();
        assert!((whole - parts).abs() < 1e-6 * whole.abs(), "{whole} vs {parts}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(FieldSpec::Radial { a: 0.4, beta: 0.5 }.build().is_err());
        assert!(FieldSpec::Bump { amplitude: 1.0, center: [0.0; 3], radius: 0.0 }.build().is_err());
        assert!(FieldSpec::Sum { terms: vec![] }.build().is_err());
    }
}
