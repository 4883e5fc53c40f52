//! Kelvin–Voigt-type internal friction.
//!
//! The viscous first Piola–Kirchhoff stress is `P_v = η F Ċ`. Because
//! `F Ċ : Ḟ = ½‖Ċ‖²`, the power it absorbs is `(η/2)∫‖Ċ‖² ≥ 0`, which
//! vanishes exactly when the motion is instantaneously rigid. The stress is
//! rotation-equivariant, so it exerts no torque about the planet.

use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::body::{DeformationState, ReferenceBody};
use crate::error::{ensure_non_negative, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscosityParams {
    pub eta: f64,
}

impl ViscosityParams {
    pub fn new(eta: f64) -> Result<Self> {
        ensure_non_negative("eta", eta)?;
        Ok(Self { eta })
    }

    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("eta", self.eta)
    }
}

/// `Ċ = Ḟᵀ F + Fᵀ Ḟ`.
pub fn cauchy_green_rate(f: &Matrix3<f64>, fdot: &Matrix3<f64>) -> Matrix3<f64> {
    let a = fdot.transpose() * f;
    a + a.transpose()
}

/// `Ċ` at every quadrature node.
pub fn node_cauchy_green_rates(body: &ReferenceBody, state: &DeformationState) -> Vec<Matrix3<f64>> {
    let f = body.node_gradients(&state.q);
    let fdot = body.node_gradients(&state.qdot);
    f.iter().zip(&fdot).map(|(f, fd)| cauchy_green_rate(f, fd)).collect()
}

/// Generalized viscous force `g_k = ∫ η (F Ċ) : Dφ_k`. It enters the
/// equations of motion with a minus sign: `M q̈ = f − g`.
pub fn viscous_force(body: &ReferenceBody, state: &DeformationState, params: &ViscosityParams) -> DVector<f64> {
    if params.eta == 0.0 {
        return DVector::zeros(body.dof());
    }
    let f = body.node_gradients(&state.q);
    let fdot = body.node_gradients(&state.qdot);
    let stresses: Vec<Matrix3<f64>> = f
        .iter()
        .zip(&fdot)
        .zip(body.nodes())
        .map(|((f, fd), n)| f * cauchy_green_rate(f, fd) * (params.eta * n.weight))
        .collect();
    body.assemble(None, Some(&stresses))
}

/// `dH/dt = −(η/2)∫‖Ċ‖²`.
pub fn dissipation_rate(body: &ReferenceBody, state: &DeformationState, params: &ViscosityParams) -> f64 {
    if params.eta == 0.0 {
        return 0.0;
    }
    let integral: f64 = node_cauchy_green_rates(body, state)
        .iter()
        .zip(body.nodes())
        .map(|(c, n)| n.weight * c.norm_squared())
        .sum();
    -0.5 * params.eta * integral
}
