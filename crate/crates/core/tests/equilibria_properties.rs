mod common;

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::TAU;
use tidelock::body::{axis_rotation, map_blocks};
use tidelock::dynamics::{comoving_decomposition, integrate, orbital_rate_vector, spin_vector, IntegratorSettings};
use tidelock::equilibria::*;
use tidelock::{build_ellipsoid_body, Error, MaterialParams, ReferenceBody, ViscosityParams};

const AXES: [f64; 3] = [1.2, 1.0, 0.8];

fn stiff(epsilon: f64) -> MaterialParams {
    MaterialParams { epsilon, ..MaterialParams::default() }
}

fn solve_at(body: &ReferenceBody, material: &MaterialParams, r: f64, attitude: &Matrix3<f64>) -> RelativeEquilibrium {
    let guess = oriented_guess(body, material, r, attitude);
    let l0 = guess_momentum(body, &guess);
    solve_relative_equilibrium(body, material, &l0, &guess, &SolverOptions::default()).unwrap()
}

#[test]
fn stiff_triaxial_equilibrium() {
    let body = build_ellipsoid_body(AXES, 1.0, 1, 5).unwrap();
    let material = stiff(0.01);
    let r = 10.0;
    let eq = solve_at(&body, &material, r, &Matrix3::identity());
    assert!(eq.residual < 1e-10);
    assert!(eq.iterations < 50);
    assert!(eq.nondegenerate);
    assert!(eq.spectrum.group_tangent_curvature.abs() < 1e-8 * eq.spectrum.spectral_radius);

    // momenta and angular momentum
    assert_eq!(eq.qdot, rotation_velocity(&eq.q, &eq.omega));
    assert!((rotating_momentum(&body, &eq.q, &eq.omega) - eq.l0).norm() < 1e-10 * eq.l0.norm());

    // spin equals orbital rate; ω close to Kepler
    let state = eq.state();
    assert!((spin_vector(&body, &state) - eq.omega).norm() < 1e-12 * eq.omega.norm());
    assert!((orbital_rate_vector(&body, &state) - eq.omega).norm() < 1e-12 * eq.omega.norm());
    let kepler = (1.0 / body.barycenter(&eq.q).norm().powi(3)).sqrt();
    let size = body.mean_radius() / r;
    assert!((eq.omega.norm() / kepler - 1.0).abs() < size * size);

    assert!(rotation_consistency(&body, &eq, &material, &ViscosityParams::new(1.0).unwrap()).unwrap() < 1e-8);
}

#[test]
fn equilibrium_is_an_exact_dissipative_solution() {
    let body = build_ellipsoid_body(AXES, 1.0, 1, 5).unwrap();
    let material = stiff(1.0);
    let eq = solve_at(&body, &material, 10.0, &Matrix3::identity());
    let period = TAU / eq.omega.norm();
    let settings = IntegratorSettings::new(3.0 * period, period / 10.0, 5.0);
    let traj = integrate(&body, &eq.state(), &material, &ViscosityParams::new(0.5).unwrap(), &settings).unwrap();
    let worst = traj.states.iter().map(|s| group_orbit_distance(&body, s, &eq)).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn group_covariance_and_isolation() {
    let body = build_ellipsoid_body(AXES, 1.0, 1, 5).unwrap();
    let material = stiff(0.01);
    let eq = solve_at(&body, &material, 10.0, &Matrix3::identity());
    let opts = SolverOptions::default();

    // rotating about L0 gives another fixed point
    let rot = axis_rotation(&eq.axis(), 1.3);
    let guess = EquilibriumGuess { q: map_blocks(&eq.q, &rot), omega: rot * eq.omega };
    let turned = solve_relative_equilibrium(&body, &material, &eq.l0, &guess, &opts).unwrap();
    assert_eq!(turned.iterations, 0);
    assert!(group_orbit_distance(&body, &turned.state(), &eq) < 1e-12);
    for (a, b) in turned.spectrum.eigenvalues.iter().zip(&eq.spectrum.eigenvalues) {
        assert!((a - b).abs() < 1e-6 * eq.spectrum.spectral_radius, "{a} vs {b}");
    }

    // Newton from perturbed guesses returns to the same group orbit
    let mut rng = common::rng(41);
    for _ in 0..5 {
        let noise = common::state(&body, &mut rng, 0.0).q - body.identity_q();
        let guess = EquilibriumGuess { q: &eq.q + noise * 0.05, omega: eq.omega * 1.02 };
        let again = solve_relative_equilibrium(&body, &material, &eq.l0, &guess, &opts).unwrap();
        assert!(group_orbit_distance(&body, &again.state(), &eq) < 1e-8);
    }
}

#[test]
fn sphere_obeys_kepler_and_is_degenerate() {
    let body = build_ellipsoid_body([1.0, 1.0, 1.0], 1.0, 1, 5).unwrap();
    let material = stiff(0.01);
    let eq = solve_at(&body, &material, 10.0, &Matrix3::identity());
    let y = body.barycenter(&eq.q).norm();
    assert!(common::rel(eq.omega.norm_squared(), 1.0 / y.powi(3)) < 1e-6);
    assert!(!eq.nondegenerate);
    assert!(eq.spectrum.near_zero >= 3, "{:?}", eq.spectrum.eigenvalues);
}

#[test]
fn tidal_bulge_points_at_the_planet() {
    for axes in [[1.0, 1.0, 1.0], AXES] {
        let body = build_ellipsoid_body(axes, 1.0, 1, 5).unwrap();
        let eq = solve_at(&body, &stiff(1.0), 6.0, &Matrix3::identity());
        let (c, a) = body.affine_part(&eq.q);
        let semi = Matrix3::from_diagonal(&Vector3::from(axes));
        let shape = (a * semi) * (a * semi).transpose();
        let eig = shape.symmetric_eigen();
        let long = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
        assert!(long.dot(&c.normalize()).abs() > 1.0 - 1e-9, "{long}");
        // stretched along the radius, compared with the reference
        assert!(long.dot(&(a * semi * semi.try_inverse().unwrap() * Vector3::x())).abs() > 1.0);
    }
}

#[test]
fn stiff_limit_matches_rigid_catalog() {
    let body = build_ellipsoid_body(AXES, 1.0, 1, 5).unwrap();
    let r = 10.0;
    let model = RigidBodyModel::ellipsoid(AXES, 1.0, r, 1.0);
    let catalog = rigid_quadrupole_catalog(&model).unwrap();
    for family in [(0, 2), (1, 2), (2, 0)] {
        let entry = catalog
            .iter()
            .find(|e| (e.radial_axis, e.normal_axis) == family && e.radial_sign == 1 && e.normal_sign == 1)
            .unwrap();
        let mut misfits = Vec::new();
        for epsilon in [1.0, 1e-1, 1e-2] {
            let eq = solve_at(&body, &stiff(epsilon), r, &entry.attitude);
            assert!(eq.residual < 1e-10);
            assert_eq!(eq.nondegenerate, entry.nondegenerate, "family {family:?}, ε = {epsilon}");
            // same rate as the rigid model at the equilibrium radius
            let rigid = RigidBodyModel { radius: body.barycenter(&eq.q).norm(), ..model };
            let w = quadrupole_orbital_rate(&rigid, entry.radial_axis).unwrap();
            assert!(common::rel(eq.omega.norm(), w) < 20.0 * epsilon * 1e-3 + 1e-6, "{} vs {w}", eq.omega.norm());
            misfits.push(comoving_decomposition(&body, &eq.state()).residual);
        }
        assert!(misfits.windows(2).all(|w| w[1] < w[0]), "{misfits:?}");
    }
}

#[test]
fn catalog_of_triaxial_body() {
    let model = RigidBodyModel { inertia: [1.0, 1.2, 1.5], mass: 4.0, radius: 20.0, k_m: 1.0 };
    let catalog = rigid_quadrupole_catalog(&model).unwrap();
    assert_eq!(catalog.len(), 24);
    for (i, a) in catalog.iter().enumerate() {
        for b in &catalog[i + 1..] {
            assert!((a.attitude - b.attitude).norm() > 1.0);
        }
    }
    let kepler = (model.k_m / model.radius.powi(3)).sqrt();
    let scale = model.inertia.iter().sum::<f64>() / (model.mass * model.radius.powi(2));
    for e in &catalog {
        assert!(e.residual < 1e-10);
        assert!(rigid_residual_recheck(&model, e) < 1e-8);
        assert!(e.nondegenerate);
        assert!(e.kepler_deviation(&model) < 2.0 * scale);

        // brute force: bisect the radial derivative of the augmented potential in ω
        let radial = |w: f64| {
            let h = 1e-3;
            let om = Vector3::new(0.0, 0.0, w);
            let at = |k: f64| model.augmented_potential(&(e.position + Vector3::x() * (k * h)), &e.attitude, &om);
            (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h)
        };
        let (mut lo, mut hi) = (0.5 * kepler, 1.5 * kepler);
        assert!(radial(lo) > 0.0 && radial(hi) < 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if radial(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(common::rel(e.omega.norm(), 0.5 * (lo + hi)) < 1e-8);
    }
    assert!(matches!(
        rigid_quadrupole_catalog(&RigidBodyModel { inertia: [1.0, 1.2, 1.2], ..model }),
        Err(Error::DegenerateCatalog(_))
    ));
}

#[test]
fn guess_converges_quickly() {
    let body = build_ellipsoid_body([1.0, 1.0, 1.0], 1.0, 2, 5).unwrap();
    let material = MaterialParams::default();
    let guess = synchronous_guess(&body, &material, 8.0);
    assert_eq!(guess.omega, Vector3::new(0.0, 0.0, (1.0f64 / 512.0).sqrt()));
    let eq = solve_relative_equilibrium(&body, &material, &guess_momentum(&body, &guess), &guess, &SolverOptions::default()).unwrap();
    assert!(eq.iterations < 50 && eq.residual < 1e-10);
}

#[test]
fn hopeless_guess_reports_no_convergence() {
    let body = build_ellipsoid_body(AXES, 1.0, 1, 4).unwrap();
    let material = MaterialParams::default();
    let guess = synchronous_guess(&body, &material, 8.0);
    let wrong = Vector3::new(0.0, 0.0, 100.0);
    let opts = SolverOptions { max_iterations: 3, ..SolverOptions::default() };
    match solve_relative_equilibrium(&body, &material, &wrong, &guess, &opts) {
        Err(Error::NoConvergence { trace, .. }) => assert!(!trace.is_empty()),
        other => panic!("{other:?}"),
    }
}
