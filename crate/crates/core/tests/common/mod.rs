#![allow(dead_code)]

use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tidelock::body::{axis_rotation, block, set_block};
use tidelock::{DeformationState, ReferenceBody};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = unit_vector(rng);
    axis_rotation(&axis, rng.random_range(0.0..std::f64::consts::PI))
}

/// Deformation gradient with positive determinant, close to a rotation.
pub fn gradient(rng: &mut ChaCha8Rng, strain: f64) -> Matrix3<f64> {
    let mut s = Matrix3::identity();
    for v in s.iter_mut() {
        *v += rng.random_range(-strain..strain);
    }
    rotation(rng) * s
}

/// A regular state with barycenter at distance `r` and moderate strain.
pub fn state(body: &ReferenceBody, rng: &mut ChaCha8Rng, r: f64) -> DeformationState {
    let c = unit_vector(rng) * r;
    let mut q = body.affine_q(&c, &gradient(rng, 0.1));
    for m in 4..body.basis().scalar_count() {
        let v = Vector3::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03));
        let shifted = block(&q, m) + v;
        set_block(&mut q, m, &shifted);
    }
    let qdot = DVector::from_fn(body.dof(), |_, _| rng.random_range(-0.1..0.1));
    DeformationState::new(q, qdot)
}

/// A rigidly moving state.
pub fn rigid_state(body: &ReferenceBody, rng: &mut ChaCha8Rng, r: f64) -> DeformationState {
    let rot = rotation(rng);
    let c = unit_vector(rng) * r;
    let v = unit_vector(rng) * rng.random_range(0.0..0.5);
    let w = unit_vector(rng) * rng.random_range(0.0..0.5);
    DeformationState::rigid(body, &rot, &c, &v, &w)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
