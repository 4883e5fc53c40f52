//! Conservative energies, their exact gradients in Galerkin coordinates,
//! stresses and angular momentum.

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::body::{DeformationState, ReferenceBody};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};

/// Elastic, gravitational and contact parameters.
///
/// The stored energy is `(1/ε)·W̃(C)` with `W̃` the Saint Venant–Kirchhoff
/// density, so decreasing `epsilon` stiffens the body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    pub lambda: f64,
    pub mu: f64,
    pub epsilon: f64,
    /// Gravitational parameter `kM` of the planet.
    #[serde(rename = "kM")]
    pub k_m: f64,
    #[serde(default)]
    pub self_gravity_k: f64,
    /// Softening length of the self-gravity kernel.
    #[serde(default = "default_softening")]
    pub softening: f64,
    /// Material points closer than this to the planet count as an impact.
    #[serde(default = "default_impact_radius")]
    pub impact_radius: f64,
}

fn default_softening() -> f64 {
    1e-3
}

fn default_impact_radius() -> f64 {
    1e-2
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mu: 1.0,
            epsilon: 1.0,
            k_m: 1.0,
            self_gravity_k: 0.0,
            softening: default_softening(),
            impact_radius: default_impact_radius(),
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("lambda", self.lambda)?;
        ensure_positive("mu", self.mu)?;
        ensure_positive("epsilon", self.epsilon)?;
        ensure_non_negative("kM", self.k_m)?;
        ensure_non_negative("self_gravity_k", self.self_gravity_k)?;
        ensure_non_negative("softening", self.softening)?;
        ensure_non_negative("impact_radius", self.impact_radius)?;
        Ok(())
    }

    /// Same material with gravity switched off entirely.
    pub fn without_gravity(mut self) -> Self {
        self.k_m = 0.0;
        self.self_gravity_k = 0.0;
        self
    }
}

/// All energy terms and the angular momentum at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub gravity: f64,
    pub self_gravity: f64,
    pub elastic: f64,
    pub total: f64,
    pub angular_momentum: Vector3<f64>,
    /// `dH/dt`; zero unless filled in by the dissipation model.
    pub dissipation_rate: f64,
}

impl EnergyBreakdown {
    pub fn potential(&self) -> f64 {
        self.gravity + self.self_gravity + self.elastic
    }
}

pub fn cauchy_green(f: &Matrix3<f64>) -> Matrix3<f64> {
    f.transpose() * f
}

pub fn green_strain(f: &Matrix3<f64>) -> Matrix3<f64> {
    (cauchy_green(f) - Matrix3::identity()) * 0.5
}

fn check_orientation(f: &Matrix3<f64>, node: usize) -> Result<()> {
    let det = f.determinant();
    if det > 0.0 && det.is_finite() {
        Ok(())
    } else {
        Err(Error::SingularConfiguration { node, det })
    }
}

/// Second Piola–Kirchhoff stress `S = ∂W/∂E`.
fn second_piola(e: &Matrix3<f64>, params: &MaterialParams) -> Matrix3<f64> {
    (Matrix3::identity() * (params.lambda * e.trace()) + e * (2.0 * params.mu)) / params.epsilon
}

/// Saint Venant–Kirchhoff stored energy per unit reference volume.
pub fn stored_energy_density(f: &Matrix3<f64>, params: &MaterialParams) -> Result<f64> {
    check_orientation(f, 0)?;
    Ok(svk_density(&green_strain(f), params))
}

fn svk_density(e: &Matrix3<f64>, params: &MaterialParams) -> f64 {
    let tr = e.trace();
    (0.5 * params.lambda * tr * tr + params.mu * (e * e).trace()) / params.epsilon
}

/// First Piola–Kirchhoff stress `P = ∂W/∂F = F S`.
pub fn first_piola(f: &Matrix3<f64>, params: &MaterialParams) -> Result<Matrix3<f64>> {
    check_orientation(f, 0)?;
    Ok(f * second_piola(&green_strain(f), params))
}

/// Kirchhoff stress `τ^i_j = F_ia ∂W/∂F_ja`, i.e. `τ = F Pᵀ = F S Fᵀ`.
pub fn kirchhoff_stress(f: &Matrix3<f64>, params: &MaterialParams) -> Result<Matrix3<f64>> {
    let p = first_piola(f, params)?;
    Ok(f * p.transpose())
}

/// Planet potential energy `U_g = −kM ∫ρ0/|ζ|`.
pub fn gravitational_energy(body: &ReferenceBody, q: &DVector<f64>, params: &MaterialParams) -> Result<f64> {
    let mut u = 0.0;
    for (node, (z, n)) in body.node_positions(q).iter().zip(body.nodes()).enumerate() {
        let r = check_distance(z, node, params)?;
        u -= params.k_m * body.density() * n.weight / r;
    }
    Ok(u)
}

fn check_distance(z: &Vector3<f64>, node: usize, params: &MaterialParams) -> Result<f64> {
    let distance = z.norm();
    if distance < params.impact_radius || distance == 0.0 || !distance.is_finite() {
        Err(Error::ImpactProximity { node, distance })
    } else {
        Ok(distance)
    }
}

/// Softened self-gravity energy.
///
/// Sums `−k ρ0² w_a w_b / sqrt(|ζ_a − ζ_b|² + δ²)` over ordered node pairs
/// `a ≠ b`, i.e. the double integral taken literally without a factor ½.
pub fn self_gravity_energy(body: &ReferenceBody, q: &DVector<f64>, params: &MaterialParams) -> f64 {
    if params.self_gravity_k == 0.0 {
        return 0.0;
    }
    let z = body.node_positions(q);
    let nodes = body.nodes();
    let coef = params.self_gravity_k * body.density() * body.density();
    let d2 = params.softening * params.softening;
    let mut u = 0.0;
    for a in 0..z.len() {
        for b in (a + 1)..z.len() {
            let s = ((z[a] - z[b]).norm_squared() + d2).sqrt();
            u -= 2.0 * coef * nodes[a].weight * nodes[b].weight / s;
        }
    }
    u
}

/// Elastic energy `U_e = ∫ W(Dζ)`.
pub fn elastic_energy(body: &ReferenceBody, q: &DVector<f64>, params: &MaterialParams) -> Result<f64> {
    let mut u = 0.0;
    for (node, (f, n)) in body.node_gradients(q).iter().zip(body.nodes()).enumerate() {
        check_orientation(f, node)?;
        u += n.weight * svk_density(&green_strain(f), params);
    }
    Ok(u)
}

/// `K = ½ qdotᵀ M qdot`.
pub fn kinetic_energy(body: &ReferenceBody, qdot: &DVector<f64>) -> f64 {
    0.5 * qdot.dot(&(body.mass_matrix() * qdot))
}

/// `L = ∫ ζ × ρ0 ζ̇` by quadrature.
pub fn angular_momentum(body: &ReferenceBody, state: &DeformationState) -> Vector3<f64> {
    let z = body.node_positions(&state.q);
    let v = body.node_positions(&state.qdot);
    body.nodes()
        .iter()
        .zip(z.iter().zip(&v))
        .fold(Vector3::zeros(), |acc, (n, (z, v))| acc + z.cross(v) * (body.density() * n.weight))
}

/// Total potential `U_g + U_sg + U_e`.
pub fn potential_energy(body: &ReferenceBody, q: &DVector<f64>, params: &MaterialParams) -> Result<f64> {
    Ok(gravitational_energy(body, q, params)? + self_gravity_energy(body, q, params) + elastic_energy(body, q, params)?)
}

/// Exact gradient `∇_q (U_g + U_sg + U_e)` of the discretized potential.
pub fn potential_gradient(body: &ReferenceBody, q: &DVector<f64>, params: &MaterialParams) -> Result<DVector<f64>> {
    let z = body.node_positions(q);
    let grads = body.node_gradients(q);
    let nodes = body.nodes();
    let rho = body.density();

    let mut forces = Vec::with_capacity(z.len());
    for (node, (zk, n)) in z.iter().zip(nodes).enumerate() {
        let r = check_distance(zk, node, params)?;
        forces.push(zk * (params.k_m * rho * n.weight / (r * r * r)));
    }
    if params.self_gravity_k != 0.0 {
        let coef = 2.0 * params.self_gravity_k * rho * rho;
        let d2 = params.softening * params.softening;
        for a in 0..z.len() {
            for b in (a + 1)..z.len() {
                let d = z[a] - z[b];
                let s2 = d.norm_squared() + d2;
                let g = d * (coef * nodes[a].weight * nodes[b].weight / (s2 * s2.sqrt()));
                forces[a] += g;
                forces[b] -= g;
            }
        }
    }

    let mut stresses = Vec::with_capacity(z.len());
    for (node, (f, n)) in grads.iter().zip(nodes).enumerate() {
        check_orientation(f, node)?;
        stresses.push(f * second_piola(&green_strain(f), params) * n.weight);
    }
    Ok(body.assemble(Some(&forces), Some(&stresses)))
}

/// Generalized conservative force `f = −∇_q (U_g + U_sg + U_e)`.
pub fn conservative_force(body: &ReferenceBody, q: &DVector<f64>, params: &MaterialParams) -> Result<DVector<f64>> {
    Ok(-potential_gradient(body, q, params)?)
}

/// Every conservative term at `state`; the dissipation rate is left at zero.
pub fn energy_breakdown(body: &ReferenceBody, state: &DeformationState, params: &MaterialParams) -> Result<EnergyBreakdown> {
    let kinetic = kinetic_energy(body, &state.qdot);
    let gravity = gravitational_energy(body, &state.q, params)?;
    let self_gravity = self_gravity_energy(body, &state.q, params);
    let elastic = elastic_energy(body, &state.q, params)?;
    Ok(EnergyBreakdown {
        kinetic,
        gravity,
        self_gravity,
        elastic,
        total: kinetic + gravity + self_gravity + elastic,
        angular_momentum: angular_momentum(body, state),
        dissipation_rate: 0.0,
    })
}

/// The three third derivatives of `V_g(χ) = −kM/|χ|` appearing in the
/// comoving-frame argument that the planet is fixed relative to the body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityThirdDerivatives {
    /// `∂³V/∂(χ¹)³`
    pub d111: f64,
    /// `∂³V/∂(χ¹)²∂χ²`
    pub d112: f64,
    /// `∂³V/∂(χ¹)²∂χ³`
    pub d113: f64,
}

pub fn gravity_third_derivatives(y: &Vector3<f64>, k_m: f64) -> Result<GravityThirdDerivatives> {
    let r2 = y.norm_squared();
    if r2 == 0.0 {
        return Err(Error::Singularity("third derivatives of the planet potential at the origin"));
    }
    let r7 = r2.powi(3) * r2.sqrt();
    let y1 = y.x * y.x;
    Ok(GravityThirdDerivatives {
        d111: 3.0 * k_m * y.x * (5.0 * y1 - 3.0 * r2) / r7,
        d112: 3.0 * k_m * y.y * (5.0 * y1 - r2) / r7,
        d113: 3.0 * k_m * y.z * (5.0 * y1 - r2) / r7,
    })
}

/// Full third-derivative tensor `∂³V_g/∂χ^i∂χ^j∂χ^k`.
pub fn gravity_third_derivative_tensor(y: &Vector3<f64>, k_m: f64) -> Result<[[[f64; 3]; 3]; 3]> {
    let r2 = y.norm_squared();
    if r2 == 0.0 {
        return Err(Error::Singularity("third derivatives of the planet potential at the origin"));
    }
    let r = r2.sqrt();
    let r5 = r2 * r2 * r;
    let r7 = r5 * r2;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut t = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                t[i][j][k] = k_m
                    * (15.0 * y[i] * y[j] * y[k] / r7
                        - 3.0 * (delta(i, j) * y[k] + delta(i, k) * y[j] + delta(j, k) * y[i]) / r5);
            }
        }
    }
    Ok(t)
}
