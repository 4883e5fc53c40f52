mod common;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use std::f64::consts::TAU;
use tidelock::body::axis_rotation;
use tidelock::dynamics::*;
use tidelock::{build_ellipsoid_body, DeformationState, MaterialParams, ReferenceBody, ViscosityParams};

fn circular(body: &ReferenceBody, r: f64, spin: f64) -> DeformationState {
    let v = (1.0 / r).sqrt();
    DeformationState::rigid(
        body,
        &Matrix3::identity(),
        &Vector3::new(r, 0.0, 0.0),
        &Vector3::new(0.0, v, 0.0),
        &Vector3::new(0.0, 0.0, spin),
    )
}

fn period(r: f64) -> f64 {
    TAU * r.powf(1.5)
}

#[test]
fn conservative_orbit_conserves_energy_and_momentum() {
    let body = build_ellipsoid_body([1.0, 1.0, 1.0], 1.0, 1, 4).unwrap();
    let r = 10.0;
    let state = circular(&body, r, 0.05);
    let t = 10.0 * period(r);
    let settings = IntegratorSettings::new(t, period(r) / 20.0, 5.0);
    let traj = integrate(&body, &state, &MaterialParams::default(), &ViscosityParams::default(), &settings).unwrap();
    assert_eq!(traj.termination, Termination::Completed);
    assert!((traj.final_time() - t).abs() < 1e-9 * t);
    assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    assert!(traj.max_energy_drift() < 1e-8, "{:e}", traj.max_energy_drift());
    assert!(traj.max_momentum_drift() < 1e-8, "{:e}", traj.max_momentum_drift());
}

#[test]
fn dissipative_run_is_monotone_and_balances_energy() {
    let body = build_ellipsoid_body([1.2, 1.0, 0.8], 1.0, 1, 4).unwrap();
    let material = MaterialParams { epsilon: 5.0, ..MaterialParams::default() };
    let viscosity = ViscosityParams::new(0.05).unwrap();
    let r = 5.0;
    let mut state = circular(&body, r, 0.3);
    state.qdot[4] += 0.05; // stretching mode
    let settings = IntegratorSettings::new(20.0, 1e-3, 1.0);
    let traj = integrate(&body, &state, &material, &viscosity, &settings).unwrap();
    assert_eq!(traj.termination, Termination::Completed);

    let h: Vec<f64> = traj.monitors.iter().map(|m| m.energy.total).collect();
    for w in h.windows(2) {
        assert!(w[1] <= w[0] + 10.0 * settings.abs_tol, "{} > {}", w[1], w[0]);
    }
    let dh = h.last().unwrap() - h[0];
    let dissipated = traj.monitors.last().unwrap().dissipated;
    assert!(dissipated > 0.0);
    assert!(common::rel(-dh, dissipated) < 1e-6, "{dh} vs {dissipated}");

    // trapezoid rule over the recorded dissipation rate
    let trap: f64 = traj
        .times
        .windows(2)
        .zip(traj.monitors.windows(2))
        .map(|(t, m)| 0.5 * (t[1] - t[0]) * (m[0].energy.dissipation_rate + m[1].energy.dissipation_rate))
        .sum();
    assert!(common::rel(trap, dh) < 1e-6, "{trap} vs {dh}");
    assert!(traj.max_momentum_drift() < 1e-8, "{:e}", traj.max_momentum_drift());
}

#[test]
fn conservative_flow_is_time_reversible() {
    let body = build_ellipsoid_body([1.2, 1.0, 0.8], 1.0, 1, 4).unwrap();
    let material = MaterialParams::default();
    let mut state = circular(&body, 6.0, 0.2);
    state.qdot[5] += 0.02;
    let mut settings = IntegratorSettings::new(50.0, 5.0, 1.0);
    settings.rel_tol = 1e-11;
    settings.abs_tol = 1e-13;
    let forward = integrate(&body, &state, &material, &ViscosityParams::default(), &settings).unwrap();
    let back = integrate(&body, &time_reversed(forward.final_state()), &material, &ViscosityParams::default(), &settings).unwrap();
    let end = time_reversed(back.final_state());
    let dq = (&end.q - &state.q).amax() / state.q.amax();
    let dv = (&end.qdot - &state.qdot).amax() / state.qdot.amax();
    assert!(dq < 1e-6 && dv < 1e-6, "{dq:e} {dv:e}");
}

#[test]
fn rotated_initial_data_give_rotated_trajectories() {
    let body = build_ellipsoid_body([1.2, 1.0, 0.8], 1.0, 2, 4).unwrap();
    let material = MaterialParams::default();
    let viscosity = ViscosityParams::new(0.3).unwrap();
    let mut rng = common::rng(31);
    let state = common::state(&body, &mut rng, 6.0);
    let rot = common::rotation(&mut rng);
    let mut settings = IntegratorSettings::new(10.0, 1.0, 0.01);
    settings.method = Method::FixedRk4;
    let a = integrate(&body, &state, &material, &viscosity, &settings).unwrap();
    let b = integrate(&body, &state.rotated(&rot), &material, &viscosity, &settings).unwrap();
    assert_eq!(a.times, b.times);
    for ((sa, sb), (ma, mb)) in a.states.iter().zip(&b.states).zip(a.monitors.iter().zip(&b.monitors)) {
        let expected = sa.rotated(&rot);
        assert!((&expected.q - &sb.q).amax() < 1e-10);
        assert!((&expected.qdot - &sb.qdot).amax() < 1e-10);
        assert!(common::rel(mb.energy.total, ma.energy.total) < 1e-12);
        assert!((mb.energy.angular_momentum - rot * ma.energy.angular_momentum).norm() < 1e-11);
    }
}

#[test]
fn barycenter_follows_kepler_acceleration() {
    let s = 1e-3;
    let body = build_ellipsoid_body([s, s, s], 1.0, 1, 5).unwrap();
    let material = MaterialParams { impact_radius: 1e-6, ..MaterialParams::default() };
    let state = circular(&body, 1.0, 0.0);
    let (_, qddot) = equations_of_motion(&body, &state, &material, &ViscosityParams::default()).unwrap();
    let acc = body.barycenter(&qddot);
    assert!((acc - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-6, "{acc}");
}

#[test]
fn radial_fall_impacts_and_fast_orbit_escapes() {
    let body = build_ellipsoid_body([1.0, 1.0, 1.0], 1.0, 1, 4).unwrap();
    let material = MaterialParams::default();
    let fall = DeformationState::at_rest(body.affine_q(&Vector3::new(5.0, 0.0, 0.0), &Matrix3::identity()));
    let settings = IntegratorSettings::new(100.0, 1.0, 0.5);
    let traj = integrate(&body, &fall, &material, &ViscosityParams::default(), &settings).unwrap();
    assert_eq!(traj.termination, Termination::ImpactDetected);
    // free-fall time from rest at r is (π/2)·sqrt(r³/2kM)
    let t_fall = std::f64::consts::FRAC_PI_2 * (125.0f64 / 2.0).sqrt();
    assert!(traj.final_time() < t_fall && traj.final_time() > 0.9 * t_fall, "{}", traj.final_time());

    let r = 10.0;
    let v = 1.5 * (1.0f64 / r).sqrt();
    let fast = DeformationState::rigid(&body, &Matrix3::identity(), &Vector3::new(r, 0.0, 0.0), &Vector3::new(0.0, v, 0.0), &Vector3::zeros());
    let mut settings = IntegratorSettings::new(5000.0, 10.0, 5.0);
    settings.escape_radius = 50.0;
    let traj = integrate(&body, &fast, &material, &ViscosityParams::default(), &settings).unwrap();
    assert_eq!(traj.termination, Termination::EscapeDetected);
    assert!(body.barycenter(&traj.final_state().q).norm() > 50.0);
}

/// Horn's quaternion solution of the weighted Procrustes problem.
fn quaternion_fit(body: &ReferenceBody, state: &DeformationState) -> (Matrix3<f64>, f64) {
    let z = body.node_positions(&state.q);
    let c = body.barycenter(&state.q);
    let mut s = Matrix3::zeros();
    for (zk, n) in z.iter().zip(body.nodes()) {
        s += n.point * (zk - c).transpose() * (body.density() * n.weight);
    }
    let n = Matrix4::new(
        s[(0, 0)] + s[(1, 1)] + s[(2, 2)], s[(1, 2)] - s[(2, 1)], s[(2, 0)] - s[(0, 2)], s[(0, 1)] - s[(1, 0)],
        s[(1, 2)] - s[(2, 1)], s[(0, 0)] - s[(1, 1)] - s[(2, 2)], s[(0, 1)] + s[(1, 0)], s[(2, 0)] + s[(0, 2)],
        s[(2, 0)] - s[(0, 2)], s[(0, 1)] + s[(1, 0)], -s[(0, 0)] + s[(1, 1)] - s[(2, 2)], s[(1, 2)] + s[(2, 1)],
        s[(0, 1)] - s[(1, 0)], s[(2, 0)] + s[(0, 2)], s[(1, 2)] + s[(2, 1)], -s[(0, 0)] - s[(1, 1)] + s[(2, 2)],
    );
    let eig = n.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k);
    let rot = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3])).to_rotation_matrix().into_inner();
    let misfit: f64 = z
        .iter()
        .zip(body.nodes())
        .map(|(zk, n)| body.density() * n.weight * (zk - c - rot * n.point).norm_squared())
        .sum();
    (rot, (misfit / body.mass()).sqrt())
}

#[test]
fn comoving_fit_agrees_with_quaternion_oracle() {
    let body = build_ellipsoid_body([1.2, 1.0, 0.8], 1.0, 2, 4).unwrap();
    let mut rng = common::rng(32);
    for _ in 0..10 {
        let state = common::state(&body, &mut rng, 7.0);
        let frame = comoving_decomposition(&body, &state);
        let (rot, residual) = quaternion_fit(&body, &state);
        assert!((frame.rotation - rot).norm() < 1e-8);
        assert!((frame.residual - residual).abs() < 1e-8, "{} vs {residual}", frame.residual);
        assert!((frame.rotation.transpose() * frame.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!((frame.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    let rot = axis_rotation(&Vector3::new(1.0, 2.0, 0.5), 0.9);
    let y0 = Vector3::new(4.0, -1.0, 2.0);
    let exact = DeformationState::at_rest(body.affine_q(&(rot * y0), &rot));
    let frame = comoving_decomposition(&body, &exact);
    assert!((frame.rotation - rot).norm() < 1e-10);
    assert!((frame.offset - y0).norm() < 1e-10);
    assert!(frame.residual < 1e-10);
}

#[test]
fn stretching_shows_in_rigidity_diagnostics() {
    let body = build_ellipsoid_body([1.2, 1.0, 0.8], 1.0, 1, 4).unwrap();
    let state = DeformationState::new(
        body.identity_q(),
        body.affine_q(&Vector3::zeros(), &Matrix3::from_diagonal(&Vector3::new(0.1, 0.0, 0.0))),
    );
    let (cdot, drift) = rigidity_diagnostic(&body, &state);
    assert!(cdot > 0.1 && drift > 0.01);
}
