use std::f64::consts::PI;
use std::sync::Arc;

use capillarity::analytic::{isoperimetric_constant, s_t, sphere_map};
use capillarity::fields::{FieldSpec, ScalarField};
use capillarity::functionals::{
    barycenter, conformality_defect, dirichlet, evaluate, gradient, hilbert_inner, lagrange_lambda, ps_residual,
    retract_to_volume, volume, wente_solve, SurfaceMap, Which,
};
use capillarity::mesh::{build_icosphere, mobius_reparametrize, MobiusTransform, SphereMesh};
use capillarity::samples::{perturb, random_direction, random_smooth_map};
use capillarity::Point3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mesh(level: u32) -> Arc<SphereMesh> {
    Arc::new(build_icosphere(level).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn scaled_translated_sphere() {
    let m = mesh(5);
    let c = Point3::new(1.0, -2.0, 0.5);
    let u = SurfaceMap::from_fn(m, |x| c + x * 2.0);
    let r = evaluate(&u, &ScalarField::zero()).unwrap();
    assert!(rel(r.dirichlet, 16.0 * PI) <= 1e-3);
    assert!(rel(r.area, 16.0 * PI) <= 1e-3);
    assert!(rel(r.volume, -32.0 * PI / 3.0) <= 1e-3);
    assert!((r.mean - c).norm() < 1e-12);
}

#[test]
fn constant_weight_on_sphere() {
    let m = mesh(5);
    let k = 0.35;
    let field = FieldSpec::Constant { k }.build().unwrap();
    let (c, r) = (Point3::new(0.2, 0.1, -0.4), 1.3);
    let q = evaluate(&SurfaceMap::from_fn(m, |x| c + x * r), &field).unwrap().weighted;
    assert!(rel(q, -k * 4.0 / 3.0 * PI * r * r * r) <= 1e-3);
}

#[test]
fn volume_gradient_annihilates_translations() {
    let m = mesh(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = random_smooth_map(&m, &mut rng, 0.3);
    let c = Point3::new(0.3, -1.1, 0.7);
    let g = gradient(&u, &ScalarField::zero(), Which::V).unwrap();
    let dir = vec![c; m.num_vertices()];
    let h = 1e-5;
    let fd = (volume(&u.axpy(h, &dir)) - volume(&u.axpy(-h, &dir))) / (2.0 * h);
    let scale: f64 = g.0.iter().map(|x| x.dot(&c).abs()).sum();
    assert!((g.pair(&dir) - fd).abs() <= 1e-6 * scale);
    assert!(g.pair(&dir).abs() <= 1e-12 * scale);
    assert!(rel(volume(&u.translated(&c)), volume(&u)) <= 1e-10);
}

#[test]
fn hilbert_inner_examples() {
    let m = mesh(3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = random_smooth_map(&m, &mut rng, 0.3);
    let centered = u.translated(&-u.mean());
    let c = SurfaceMap::constant(Arc::clone(&m), Point3::new(1.0, 2.0, 3.0));
    assert!(hilbert_inner(&centered, &c).unwrap().abs() < 1e-12);
    let lhs = hilbert_inner(&u, &u).unwrap();
    assert!(rel(lhs, 2.0 * dirichlet(&u) + u.mean().norm_squared()) <= 1e-12);
}

#[test]
fn retraction_examples() {
    let m = mesh(3);
    let t = 0.7;
    let u = retract_to_volume(&sphere_map(&m, &Point3::new(0.3, 0.0, 0.0), 1.0), t).unwrap();
    assert!(rel(volume(&u), t) <= 1e-12);
    let doubled = u.scaled(2.0);
    let back = retract_to_volume(&doubled, t).unwrap();
    for (a, b) in back.values().iter().zip(u.values()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn wente_solution_of_the_sphere() {
    let m = mesh(5);
    let w = SurfaceMap::identity(m);
    let v = wente_solve(&w).unwrap();
    let err = v.values().iter().zip(w.values()).map(|(a, b)| (a + b * 0.5).norm()).fold(0.0, f64::max);
    assert!(err / 0.5 <= 1e-3, "{err}");
    assert!(v.mean().norm() < 1e-12);
}

fn wente_ratio(u: &SurfaceMap) -> f64 {
    let v = wente_solve(u).unwrap();
    let grad_v = (2.0 * dirichlet(&v)).sqrt();
    let sup_v = v.values().iter().map(|x| x.norm()).fold(0.0, f64::max);
    (grad_v + sup_v) / (2.0 * dirichlet(u))
}

#[test]
fn empirical_wente_constant_is_stable_under_refinement() {
    let mut worst = [0.0f64; 2];
    for (slot, level) in [3, 4].into_iter().enumerate() {
        let m = mesh(level);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..50 {
            let u = random_smooth_map(&m, &mut rng, 0.4);
            worst[slot] = worst[slot].max(wente_ratio(&u));
        }
    }
    assert!(worst.iter().all(|w| w.is_finite() && *w > 0.0));
    assert!(rel(worst[1], worst[0]) < 0.1, "{worst:?}");
}

#[test]
fn multipliers_of_spheres() {
    let m = mesh(5);
    let zero = ScalarField::zero();
    let w = SurfaceMap::identity(Arc::clone(&m));
    assert!(rel(lagrange_lambda(&w, &zero).unwrap(), -2.0) <= 1e-3);
    let s = 1.7;
    let reflected = w.scaled(-s);
    let lambda = lagrange_lambda(&reflected, &zero).unwrap();
    assert!(rel(lambda, 2.0 / s) <= 1e-3);
    assert!(lambda * volume(&reflected) > 0.0);
}

#[test]
fn residual_of_the_sphere_and_its_minimum_in_lambda() {
    let m = mesh(5);
    let zero = ScalarField::zero();
    let w = SurfaceMap::identity(m);
    let lambda = lagrange_lambda(&w, &zero).unwrap();
    let r0 = ps_residual(&w, &zero, lambda).unwrap();
    assert!(r0 <= 1e-3 * (2.0 * dirichlet(&w)).sqrt());
    let scan: Vec<f64> = (-5..=5).map(|k| ps_residual(&w, &zero, lambda + 0.1 * k as f64).unwrap()).collect();
    let (imin, _) = scan.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    assert_eq!(imin, 5);
}

#[test]
fn residual_scales_with_noise_on_constant_maps() {
    let m = mesh(3);
    let zero = ScalarField::zero();
    let base = SurfaceMap::constant(Arc::clone(&m), Point3::new(1.0, 2.0, 3.0));
    let noise = random_direction(m.num_vertices(), &mut ChaCha8Rng::seed_from_u64(4));
    let r1 = ps_residual(&base.axpy(1e-6, &noise), &zero, 0.7).unwrap();
    let r2 = ps_residual(&base.axpy(1e-8, &noise), &zero, 0.7).unwrap();
    assert!(r1 > 0.0 && rel(r1 / r2, 100.0) < 1e-2);
    // at this size the residual is the Dirichlet gradient of the noise alone
    let g = (2.0 * dirichlet(&base.axpy(1e-6, &noise))).sqrt();
    assert!(rel(r1, g) < 1e-3);
}

#[test]
fn barycenter_examples() {
    let m = mesh(5);
    let t = 0.5;
    let st = s_t(t);
    assert!(st <= 1.0);
    let odd = SurfaceMap::identity(Arc::clone(&m)).scaled(-st);
    assert!(barycenter(&odd, t).norm() < 1e-10);
    let u = sphere_map(&m, &Point3::new(0.5, 0.2, -0.3), 1.0);
    let ug = mobius_reparametrize(&u, &MobiusTransform::dilation(1.5)).unwrap();
    assert!((barycenter(&ug, 1.0) - barycenter(&u, 1.0)).norm() <= 5e-3);
}

#[test]
fn conformality_examples() {
    let m = mesh(5);
    assert!(conformality_defect(&SurfaceMap::identity(Arc::clone(&m))) <= 1e-2);
    let stretched = SurfaceMap::from_fn(Arc::clone(&m), |x| Point3::new(2.0 * x.x, x.y, x.z));
    assert!(conformality_defect(&stretched) > 0.05);
    assert_eq!(conformality_defect(&SurfaceMap::constant(m, Point3::zeros())), 0.0);
}

#[test]
fn weighted_volume_is_bounded_by_dirichlet() {
    let m = mesh(3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for spec in [
        FieldSpec::Radial { a: 0.4, beta: 1.0 },
        FieldSpec::Radial { a: -1.2, beta: 1.0 },
        FieldSpec::Radial { a: 0.9, beta: 2.5 },
    ] {
        let field = spec.build().unwrap();
        let k0 = field.k0_declared().unwrap();
        for _ in 0..10 {
            let u = random_smooth_map(&m, &mut rng, 0.5);
            let r = evaluate(&u, &field).unwrap();
            assert!(r.weighted.abs() <= k0 / 2.0 * r.dirichlet + 1e-6);
        }
    }
}

#[test]
fn weighted_volume_radial_derivative() {
    // d/ds Q(su) = s² Σ_T K(s ū_T) ū_T · N_T(u)
    let m = mesh(3);
    let field = FieldSpec::Radial { a: 0.4, beta: 1.5 }.build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let u = random_smooth_map(&m, &mut rng, 0.3);
    let s = 1.3;
    let h = 1e-5;
    let q = |s: f64| evaluate(&u.scaled(s), &field).unwrap().weighted;
    let fd = (q(s + h) - q(s - h)) / (2.0 * h);
    let mut formula = 0.0;
    for &[a, b, c] in m.triangles() {
        let (ua, ub, uc) = (u.values()[a], u.values()[b], u.values()[c]);
        let centroid = (ua + ub + uc) / 3.0;
        let n = (ub - ua).cross(&(uc - ua)) * -0.5;
        formula += s * s * field.value(&(centroid * s)).unwrap() * centroid.dot(&n);
    }
    assert!(rel(fd, formula) <= 1e-5, "{fd} vs {formula}");
}

#[test]
fn isoperimetric_inequality_on_perturbed_spheres() {
    let m = mesh(4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = isoperimetric_constant();
    for _ in 0..10 {
        let u = perturb(&sphere_map(&m, &Point3::zeros(), 1.0), &mut rng, 0.05);
        let r = evaluate(&u, &ScalarField::zero()).unwrap();
        assert!(r.area <= r.dirichlet);
        assert!(s * r.volume.abs().powf(2.0 / 3.0) <= r.area * 1.005);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn homogeneity_and_translation_invariance(
        seed in any::<u64>(),
        s in 0.2..5.0f64,
        c in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64),
    ) {
        let m = mesh(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_smooth_map(&m, &mut rng, 0.4);
        let zero = ScalarField::zero();
        let r = evaluate(&u, &zero).unwrap();
        let rs = evaluate(&u.scaled(s), &zero).unwrap();
        prop_assert!(rel(rs.volume, s * s * s * r.volume) <= 1e-12);
        prop_assert!(rel(rs.dirichlet, s * s * r.dirichlet) <= 1e-12);
        let c = Point3::new(c.0, c.1, c.2);
        let rt = evaluate(&u.translated(&c), &zero).unwrap();
        prop_assert!(rel(rt.dirichlet, r.dirichlet) <= 1e-12);
        prop_assert!(rel(rt.area, r.area) <= 1e-10);
        prop_assert!(rel(rt.volume, r.volume) <= 1e-10);
    }

    #[test]
    fn area_never_exceeds_dirichlet(seed in any::<u64>(), amp in 0.0..2.0f64) {
        let m = mesh(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_smooth_map(&m, &mut rng, amp);
        let r = evaluate(&u, &ScalarField::zero()).unwrap();
        prop_assert!(r.area <= r.dirichlet + 1e-12 * (1.0 + r.dirichlet));
    }

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        let m = mesh(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_smooth_map(&m, &mut rng, 0.3);
        let field = FieldSpec::Sum {
            terms: vec![
                FieldSpec::Radial { a: -0.3, beta: 1.0 },
                FieldSpec::Bump { amplitude: 0.5, center: [0.1, 0.0, 0.2], radius: 2.0 },
            ],
        }
        .build()
        .unwrap();
        let dir = random_direction(m.num_vertices(), &mut rng);
        let h = 1e-5;
        let rp = evaluate(&u.axpy(h, &dir), &field).unwrap();
        let rm = evaluate(&u.axpy(-h, &dir), &field).unwrap();
        for (which, fd) in [
            (Which::D, (rp.dirichlet - rm.dirichlet) / (2.0 * h)),
            (Which::V, (rp.volume - rm.volume) / (2.0 * h)),
            (Which::Q, (rp.weighted - rm.weighted) / (2.0 * h)),
            (Which::E, (rp.energy - rm.energy) / (2.0 * h)),
        ] {
            let g = gradient(&u, &field, which).unwrap();
            let scale: f64 = g.0.iter().zip(&dir).map(|(a, b)| a.dot(b).abs()).sum();
            let exact = g.pair(&dir);
            prop_assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(scale), "{:?}: {} vs {}", which, exact, fd);
        }
    }
}
