mod common;

use nalgebra::{DVector, Matrix3, Vector3};
use proptest::prelude::*;
use rand::Rng;
use tidelock::body::map_blocks;
use tidelock::energetics::*;
use tidelock::{build_ellipsoid_body, DeformationState, ReferenceBody};

fn triaxial(degree: usize) -> ReferenceBody {
    build_ellipsoid_body([1.2, 1.0, 0.8], 1.0, degree, 5).unwrap()
}

fn with_self_gravity() -> MaterialParams {
    MaterialParams { self_gravity_k: 0.5, softening: 1e-2, ..MaterialParams::default() }
}

fn total_potential(body: &ReferenceBody, q: &DVector<f64>, p: &MaterialParams) -> f64 {
    potential_energy(body, q, p).unwrap()
}

#[test]
fn gradient_matches_central_differences_on_random_states() {
    let mut rng = common::rng(11);
    for (k, degree) in [1usize, 2].iter().cycle().take(24).enumerate() {
        let body = triaxial(*degree);
        let params = if k % 3 == 0 { with_self_gravity() } else { MaterialParams::default() };
        let r = rng.random_range(3.0..12.0);
        let state = common::state(&body, &mut rng, r);
        let grad = potential_gradient(&body, &state.q, &params).unwrap();
        let mut fd = DVector::zeros(body.dof());
        for j in 0..body.dof() {
            let h = 1e-5;
            let mut qp = state.q.clone();
            qp[j] += h;
            let mut qm = state.q.clone();
            qm[j] -= h;
            fd[j] = (total_potential(&body, &qp, &params) - total_potential(&body, &qm, &params)) / (2.0 * h);
        }
        let err = (&grad - &fd).amax() / grad.amax();
        assert!(err < 1e-6, "state {k}: relative gradient error {err:e}");
        let force = conservative_force(&body, &state.q, &params).unwrap();
        assert_eq!(force, -grad);
    }
}

#[test]
fn kirchhoff_stress_is_symmetric_and_piola_matches_differences() {
    let mut rng = common::rng(12);
    let params = MaterialParams { lambda: 0.7, mu: 1.3, epsilon: 0.5, ..MaterialParams::default() };
    for _ in 0..50 {
        let f = common::gradient(&mut rng, 0.3);
        assert!(f.determinant() > 0.0);
        let tau = kirchhoff_stress(&f, &params).unwrap();
        assert!((tau - tau.transpose()).norm() <= 1e-12 * tau.norm());

        let p = first_piola(&f, &params).unwrap();
        let mut fd = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let h = 1e-5;
                let mut fp = f;
                fp[(i, j)] += h;
                let mut fm = f;
                fm[(i, j)] -= h;
                fd[(i, j)] = (stored_energy_density(&fp, &params).unwrap() - stored_energy_density(&fm, &params).unwrap())
                    / (2.0 * h);
            }
        }
        assert!((p - fd).norm() < 1e-6 * p.norm().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn energies_are_frame_indifferent(seed in any::<u64>(), angle in 0.0..std::f64::consts::TAU) {
        let body = triaxial(2);
        let params = with_self_gravity();
        let mut rng = common::rng(seed);
        let state = common::state(&body, &mut rng, 6.0);
        let r = tidelock::body::axis_rotation(&common::unit_vector(&mut rng), angle);
        let rotated = state.rotated(&r);
        let pairs = [
            (elastic_energy(&body, &state.q, &params).unwrap(), elastic_energy(&body, &rotated.q, &params).unwrap()),
            (gravitational_energy(&body, &state.q, &params).unwrap(), gravitational_energy(&body, &rotated.q, &params).unwrap()),
            (self_gravity_energy(&body, &state.q, &params), self_gravity_energy(&body, &rotated.q, &params)),
            (kinetic_energy(&body, &state.qdot), kinetic_energy(&body, &rotated.qdot)),
        ];
        for (a, b) in pairs {
            prop_assert!(common::rel(b, a) < 1e-12, "{a} vs {b}");
        }
        let l = angular_momentum(&body, &state);
        prop_assert!((angular_momentum(&body, &rotated) - r * l).norm() < 1e-12 * l.norm());

        // gradient equivariance f(Rq) = R f(q)
        let f = conservative_force(&body, &state.q, &params).unwrap();
        let fr = conservative_force(&body, &rotated.q, &params).unwrap();
        prop_assert!((fr - map_blocks(&f, &r)).amax() < 1e-12 * f.amax());
    }

    #[test]
    fn stored_energy_is_rotation_blind(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let params = MaterialParams::default();
        let f = common::gradient(&mut rng, 0.2);
        let r = common::rotation(&mut rng);
        let w = stored_energy_density(&f, &params).unwrap();
        prop_assert!(common::rel(stored_energy_density(&(r * f), &params).unwrap(), w) < 1e-12);
    }
}

#[test]
fn self_gravity_matches_brute_force_pair_sum() {
    let body = build_ellipsoid_body([1.0, 0.9, 0.8], 1.3, 2, 4).unwrap();
    let params = MaterialParams { self_gravity_k: 0.8, softening: 0.05, ..MaterialParams::default() };
    let mut rng = common::rng(13);
    let state = common::state(&body, &mut rng, 4.0);
    let z = body.node_positions(&state.q);
    let rho = body.density();
    let mut oracle = 0.0;
    for (a, na) in body.nodes().iter().enumerate() {
        for (b, nb) in body.nodes().iter().enumerate() {
            if a != b {
                let d2 = (z[a] - z[b]).norm_squared() + params.softening.powi(2);
                oracle -= params.self_gravity_k * rho * na.weight * rho * nb.weight / d2.sqrt();
            }
        }
    }
    let u = self_gravity_energy(&body, &state.q, &params);
    assert!(common::rel(u, oracle) < 1e-10, "{u} vs {oracle}");

    // rigid motions leave it unchanged
    let moved = state.rotated(&common::rotation(&mut rng));
    let mut shifted = moved.q.clone();
    for k in 0..3 {
        shifted[k] += 3.0;
    }
    assert!(common::rel(self_gravity_energy(&body, &shifted, &params), u) < 1e-12);
}

#[test]
fn quadrature_refinement_barely_moves_planet_energy() {
    let params = MaterialParams::default();
    for r in [5.0, 8.0, 15.0] {
        let coarse = build_ellipsoid_body([1.2, 1.0, 0.8], 1.0, 1, 6).unwrap();
        let fine = build_ellipsoid_body([1.2, 1.0, 0.8], 1.0, 1, 12).unwrap();
        let a = Matrix3::new(1.05, 0.02, 0.0, -0.01, 0.97, 0.03, 0.0, 0.01, 1.02);
        let c = Vector3::new(r * 0.6, r * 0.8, 0.0);
        let uc = gravitational_energy(&coarse, &coarse.affine_q(&c, &a), &params).unwrap();
        let uf = gravitational_energy(&fine, &fine.affine_q(&c, &a), &params).unwrap();
        assert!(common::rel(uc, uf) < 1e-8, "r = {r}: {uc} vs {uf}");
    }
}

#[test]
fn third_derivatives_match_finite_differences() {
    let mut rng = common::rng(14);
    let v = |p: &Vector3<f64>| -1.0 / p.norm();
    for _ in 0..10 {
        let y = common::unit_vector(&mut rng) * rng.random_range(0.5..5.0);
        let exact = gravity_third_derivative_tensor(&y, 1.0).unwrap();
        let named = gravity_third_derivatives(&y, 1.0).unwrap();
        let scale = 1.0 / y.norm().powi(4);
        // mixed third differences, Richardson-extrapolated
        let third = |i: usize, j: usize, k: usize, h: f64| {
            let e = |a: usize| Vector3::ith(a, h);
            let mut s = 0.0;
            for (si, sj, sk) in [(1.0, 1.0, 1.0), (1.0, 1.0, -1.0), (1.0, -1.0, 1.0), (1.0, -1.0, -1.0),
                                 (-1.0, 1.0, 1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0), (-1.0, -1.0, -1.0)] {
                s += si * sj * sk * v(&(y + e(i) * si + e(j) * sj + e(k) * sk));
            }
            s / (8.0 * h * h * h)
        };
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let h = 1e-2 * y.norm();
                    let fd = (4.0 * third(i, j, k, h / 2.0) - third(i, j, k, h)) / 3.0;
                    assert!((fd - exact[i][j][k]).abs() < 1e-5 * scale, "{i}{j}{k}: {fd} vs {}", exact[i][j][k]);
                }
            }
        }
        assert!((named.d111 - exact[0][0][0]).abs() < 1e-14 * scale);
        assert!((named.d112 - exact[0][0][1]).abs() < 1e-14 * scale);
        assert!((named.d113 - exact[0][0][2]).abs() < 1e-14 * scale);
    }
}

#[test]
fn point_mass_limits() {
    let s = 1e-3;
    let body = build_ellipsoid_body([1.2 * s, s, 0.8 * s], 1.0, 1, 5).unwrap();
    let params = MaterialParams { impact_radius: 1e-6, ..MaterialParams::default() };
    let c = Vector3::new(3.0, -4.0, 1.0);
    let r = c.norm();
    let u = gravitational_energy(&body, &body.affine_q(&c, &Matrix3::identity()), &params).unwrap();
    assert!(common::rel(u, -body.mass() / r) < 1e-4);

    // circular orbit: |L| = m r v
    let speed = (1.0 / r).sqrt();
    let tangent = c.cross(&Vector3::z()).normalize();
    let state = DeformationState::rigid(&body, &Matrix3::identity(), &c, &(tangent * speed), &Vector3::zeros());
    let l = angular_momentum(&body, &state);
    assert!(common::rel(l.norm(), body.mass() * r * speed) < 1e-4);
}

#[test]
fn homogeneous_stretch_energy_and_restoring_force() {
    let body = build_ellipsoid_body([1.2, 1.0, 0.8], 1.0, 1, 4).unwrap();
    let params = MaterialParams::default().without_gravity();
    let a = Matrix3::from_diagonal(&Vector3::new(1.1, 1.0, 1.0));
    let q = body.affine_q(&Vector3::zeros(), &a);
    let e = elastic_energy(&body, &q, &params).unwrap();
    assert!(common::rel(e, 0.0165375 * body.volume()) < 1e-12);

    for h in [1e-3, 1e-2, -1e-2] {
        let q = body.affine_q(&Vector3::zeros(), &Matrix3::from_diagonal(&Vector3::new(1.0 + h, 1.0 - 0.5 * h, 1.0)));
        let f = conservative_force(&body, &q, &params).unwrap();
        assert!(f.dot(&(&q - body.identity_q())) < 0.0);
    }
}

#[test]
fn kinetic_energy_equals_node_quadrature() {
    let mut rng = common::rng(15);
    for degree in [1, 2] {
        let body = triaxial(degree);
        for _ in 0..10 {
            let state = common::state(&body, &mut rng, 5.0);
            let v = body.node_positions(&state.qdot);
            let quad: f64 = v.iter().zip(body.nodes()).map(|(v, n)| 0.5 * body.density() * n.weight * v.norm_squared()).sum();
            assert!(common::rel(kinetic_energy(&body, &state.qdot), quad) < 1e-12);
        }
    }
}
