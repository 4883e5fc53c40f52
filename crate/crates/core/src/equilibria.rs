//! Relative equilibria: uniformly rotating rigid states of the reduced model.
//!
//! A relative equilibrium with angular momentum `L0` is a critical point of
//! the augmented Hamiltonian `H − ω·L` on `{L = L0}`, with `ω` the Lagrange
//! multiplier. Its velocity field is `ζ̇ = ω × ζ` and its shape solves
//!
//! ```text
//! ∇U(q) + M (ω̂² q) = 0,   L(q, ω × q) = L0,
//! ```
//!
//! where `ω̂² q` applies `v ↦ ω × (ω × v)` blockwise. Rotating a solution
//! about `L0` gives another one, so the solver pins the phase with a
//! bordering multiplier and a phase condition against the initial guess.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{block, map_blocks, DeformationState, ReferenceBody};
use crate::energetics::{
    angular_momentum, elastic_energy, gravitational_energy, potential_gradient, self_gravity_energy, MaterialParams,
};
use crate::error::{ensure_positive, Error, Result};

/// Starting point for the Newton solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumGuess {
    pub q: DVector<f64>,
    pub omega: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Convergence threshold on the scaled residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative step of the finite-difference Jacobian and Hessian.
    pub fd_step: f64,
    /// Eigenvalues below `spectral_floor · spectral radius` count as zero.
    pub spectral_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            fd_step: 1e-6,
            spectral_floor: 1e-8,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("tolerance", self.tolerance)?;
        ensure_positive("fd_step", self.fd_step)?;
        ensure_positive("spectral_floor", self.spectral_floor)?;
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter { name: "max_iterations", reason: "must be at least 1".into() });
        }
        Ok(())
    }
}

/// Eigenvalues of the constrained Hessian of `H − ω·L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Sorted by increasing magnitude.
    pub eigenvalues: Vec<f64>,
    pub spectral_radius: f64,
    /// Absolute threshold below which an eigenvalue counts as zero.
    pub floor: f64,
    /// Number of eigenvalues below the floor.
    pub near_zero: usize,
    /// Rayleigh quotient of the Hessian along the group-orbit tangent.
    pub group_tangent_curvature: f64,
    pub nondegenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEquilibrium {
    pub q: DVector<f64>,
    /// `ω × ζ` blockwise.
    pub qdot: DVector<f64>,
    pub omega: Vector3<f64>,
    pub l0: Vector3<f64>,
    /// Scaled residual of the critical-point equations.
    pub residual: f64,
    pub iterations: usize,
    pub spectrum: Spectrum,
    pub nondegenerate: bool,
}

impl RelativeEquilibrium {
    pub fn state(&self) -> DeformationState {
        DeformationState::new(self.q.clone(), self.qdot.clone())
    }

    /// Unit vector along the angular momentum.
    pub fn axis(&self) -> Vector3<f64> {
        self.l0.normalize()
    }
}

/// `H_{L0} = K_{L0} + U_{L0}` at fixed `ω`, by quadrature:
/// `K_{L0} = ½∫ρ0|ζ̇ − ω×ζ|²`, `U_{L0} = U − ½∫ρ0|ω×ζ|²`.
pub fn augmented_hamiltonian(
    body: &ReferenceBody,
    state: &DeformationState,
    omega: &Vector3<f64>,
    material: &MaterialParams,
) -> Result<f64> {
    let z = body.node_positions(&state.q);
    let v = body.node_positions(&state.qdot);
    let rho = body.density();
    let mut kinetic = 0.0;
    let mut centrifugal = 0.0;
    for ((zk, vk), n) in z.iter().zip(&v).zip(body.nodes()) {
        let w = omega.cross(zk);
        kinetic += 0.5 * rho * n.weight * (vk - w).norm_squared();
        centrifugal += 0.5 * rho * n.weight * w.norm_squared();
    }
    let u = gravitational_energy(body, &state.q, material)?
        + self_gravity_energy(body, &state.q, material)
        + elastic_energy(body, &state.q, material)?;
    Ok(kinetic + u - centrifugal)
}

/// Blockwise `ω × c_m`.
pub fn rotation_velocity(q: &DVector<f64>, omega: &Vector3<f64>) -> DVector<f64> {
    map_blocks(q, &omega.cross_matrix())
}

/// `∇U(q) + M (ω̂² q)`, the shape equation of a relative equilibrium.
pub fn shape_residual(
    body: &ReferenceBody,
    q: &DVector<f64>,
    omega: &Vector3<f64>,
    material: &MaterialParams,
) -> Result<DVector<f64>> {
    let w = omega.cross_matrix();
    Ok(potential_gradient(body, q, material)? + body.mass_matrix() * map_blocks(q, &(w * w)))
}

/// `L(q, ω × q)`.
pub fn rotating_momentum(body: &ReferenceBody, q: &DVector<f64>, omega: &Vector3<f64>) -> Vector3<f64> {
    angular_momentum(body, &DeformationState::new(q.clone(), rotation_velocity(q, omega)))
}

/// Initial guess for a synchronous state at orbital radius `r`: barycenter at
/// `(r, 0, 0)`, Keplerian `ω` along `z`, and a small radial stretch along `x`
/// estimated from the tidal stress.
pub fn synchronous_guess(body: &ReferenceBody, material: &MaterialParams, r: f64) -> EquilibriumGuess {
    oriented_guess(body, material, r, &Matrix3::identity())
}

/// As [`synchronous_guess`], with the reference body first rotated by
/// `attitude` (body-to-space), e.g. the attitude of a rigid catalog entry.
pub fn oriented_guess(
    body: &ReferenceBody,
    material: &MaterialParams,
    r: f64,
    attitude: &Matrix3<f64>,
) -> EquilibriumGuess {
    let omega = (material.k_m / r.powi(3)).sqrt();
    let radius = body.mean_radius();
    let stiffness = (material.lambda + 2.0 * material.mu) / material.epsilon;
    let stretch = 1.5 * material.k_m * body.density() * radius * radius / (r.powi(3) * stiffness);
    let a = Matrix3::from_diagonal(&Vector3::new(1.0 + stretch, 1.0, 1.0)) * attitude;
    EquilibriumGuess {
        q: body.affine_q(&Vector3::new(r, 0.0, 0.0), &a),
        omega: Vector3::new(0.0, 0.0, omega),
    }
}

/// Scaled mismatch between the acceleration the equations of motion give at
/// the equilibrium and the centripetal acceleration `ω × (ω × ζ)` of uniform
/// rotation.
pub fn rotation_consistency(
    body: &ReferenceBody,
    eq: &RelativeEquilibrium,
    material: &MaterialParams,
    viscosity: &crate::dissipation::ViscosityParams,
) -> Result<f64> {
    let (_, qddot) = crate::dynamics::equations_of_motion(body, &eq.state(), material, viscosity)?;
    let w = eq.omega.cross_matrix();
    let expected = map_blocks(&eq.q, &(w * w));
    Ok((qddot - &expected).amax() / expected.amax())
}

/// Angular momentum of the rigidly rotating guess.
pub fn guess_momentum(body: &ReferenceBody, guess: &EquilibriumGuess) -> Vector3<f64> {
    rotating_momentum(body, &guess.q, &guess.omega)
}

struct Problem<'a> {
    body: &'a ReferenceBody,
    material: &'a MaterialParams,
    l0: Vector3<f64>,
    q_ref: DVector<f64>,
    // M t, with t the group tangent at q_ref
    m_tangent: DVector<f64>,
    force_scale: f64,
    phase_scale: f64,
    omega_scale: f64,
    n: usize,
}

impl Problem<'_> {
    fn unpack<'v>(&self, x: &'v DVector<f64>) -> (DVector<f64>, Vector3<f64>, f64) {
        let n = self.n;
        (
            x.rows(0, n).into_owned(),
            Vector3::new(x[n], x[n + 1], x[n + 2]),
            x[n + 3],
        )
    }

    /// Scaled bordered residual.
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        let (q, omega, lambda) = self.unpack(x);
        let mut r = DVector::zeros(n + 4);
        let shape = shape_residual(self.body, &q, &omega, self.material)? + &self.m_tangent * lambda;
        r.rows_mut(0, n).copy_from(&(shape / self.force_scale));
        let dl = (rotating_momentum(self.body, &q, &omega) - self.l0) / self.l0.norm();
        r.rows_mut(n, 3).copy_from(&dl);
        r[n + 3] = self.m_tangent.dot(&(&q - &self.q_ref)) / self.phase_scale;
        Ok(r)
    }

    /// `x + α dx`, except that the best-fitting rotation about the barycenter
    /// contained in the shape part of `dx` is applied exactly. Linearized
    /// rotations would otherwise strain a stiff body at second order and
    /// stall the line search.
    fn retract(&self, x: &DVector<f64>, dx: &DVector<f64>, alpha: f64) -> DVector<f64> {
        let n = self.n;
        let q = x.rows(0, n).into_owned();
        let dq = dx.rows(0, n).into_owned();
        let s = self.body.scalar_gram();
        let ns = s.nrows();
        let b = self.body.barycenter(&q);
        let db = self.body.barycenter(&dq);
        let arm = |m: usize| if m == 0 { block(&q, 0) - b } else { block(&q, m) };
        let push = |m: usize| if m == 0 { block(&dq, 0) - db } else { block(&dq, m) };
        let mut k = Matrix3::zeros();
        let mut rhs = Vector3::zeros();
        for a in 0..ns {
            let ea = arm(a).cross_matrix();
            for c in 0..ns {
                k += ea.transpose() * arm(c).cross_matrix() * s[(a, c)];
                rhs += ea * push(c) * s[(a, c)];
            }
        }
        let w = k.try_inverse().map(|inv| inv * rhs).unwrap_or_else(Vector3::zeros);
        let rot = rotation_exp(&(w * alpha));
        let mut out = x + dx * alpha;
        for m in 0..ns {
            let rest = push(m) - w.cross(&arm(m));
            let moved = rot * (arm(m) + rest * alpha);
            let value = if m == 0 { b + db * alpha + moved } else { moved };
            out.rows_mut(3 * m, 3).copy_from(&value);
        }
        out
    }

    fn column_scales(&self) -> DVector<f64> {
        let n = self.n;
        let mut s = DVector::from_element(n + 4, self.body.mean_radius());
        for k in 0..3 {
            s[n + k] = self.omega_scale;
        }
        s[n + 3] = self.force_scale / self.m_tangent.norm();
        s
    }

    fn jacobian(&self, x: &DVector<f64>, fd_step: f64) -> Result<DMatrix<f64>> {
        let dim = x.len();
        let scales = self.column_scales();
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let h = fd_step * scales[j].max(x[j].abs());
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let col = (self.residual(&xp)? - self.residual(&xm)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }
}

/// Solves for the relative equilibrium with angular momentum `l0` nearest to
/// `guess`, then certifies it with [`nondegeneracy_spectrum`].
///
/// Newton steps use a finite-difference Jacobian, an SVD pseudo-inverse (so
/// degenerate families still converge to some member) and backtracking on
/// the squared scaled residual.
pub fn solve_relative_equilibrium(
    body: &ReferenceBody,
    material: &MaterialParams,
    l0: &Vector3<f64>,
    guess: &EquilibriumGuess,
    options: &SolverOptions,
) -> Result<RelativeEquilibrium> {
    material.validate()?;
    if l0.norm() == 0.0 {
        return Err(Error::InvalidParameter {
            name: "L0",
            reason: "relative equilibria are sought at non-zero angular momentum".into(),
        });
    }
    let n = body.dof();
    let axis = l0.normalize();
    let m_tangent = body.mass_matrix() * map_blocks(&guess.q, &axis.cross_matrix());
    let w = guess.omega.cross_matrix();
    let centrifugal = body.mass_matrix() * map_blocks(&guess.q, &(w * w));
    let force_scale = centrifugal.norm().max(material.k_m * body.mass() / body.barycenter(&guess.q).norm_squared());
    let problem = Problem {
        body,
        material,
        l0: *l0,
        q_ref: guess.q.clone(),
        phase_scale: m_tangent.norm() * body.mean_radius(),
        m_tangent,
        force_scale,
        omega_scale: guess.omega.norm().max(1e-12),
        n,
    };

    let mut x = DVector::zeros(n + 4);
    x.rows_mut(0, n).copy_from(&guess.q);
    x[n] = guess.omega.x;
    x[n + 1] = guess.omega.y;
    x[n + 2] = guess.omega.z;

    let mut r = problem.residual(&x)?;
    let mut trace = vec![r.amax()];
    let mut iterations = 0;
    while r.amax() >= options.tolerance {
        if iterations == options.max_iterations {
            return Err(Error::NoConvergence { iterations, trace });
        }
        iterations += 1;
        let jac = problem.jacobian(&x, options.fd_step)?;
        let scales = problem.column_scales();
        let scaled = &jac * DMatrix::from_diagonal(&scales);
        let svd = scaled.svd(true, true);
        let cutoff = 1e-13 * svd.singular_values.max();
        let z = svd.solve(&(-&r), cutoff).map_err(|_| Error::NoConvergence { iterations, trace: trace.clone() })?;
        let dx = z.component_mul(&scales);

        let merit = r.norm_squared();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = problem.retract(&x, &dx, alpha);
            if let Ok(rt) = problem.residual(&trial) {
                if rt.norm_squared() <= (1.0 - 1e-4 * alpha) * merit {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, rt)) => {
                x = trial;
                r = rt;
            }
            None => {
                // No descent along the Newton direction; the merit is already
                // at the floor set by the finite-difference Jacobian.
                trace.push(r.amax());
                return Err(Error::NoConvergence { iterations, trace });
            }
        }
        trace.push(r.amax());
        log::debug!("newton iteration {iterations}: residual {:e}", r.amax());
    }

    let (q, omega, _) = problem.unpack(&x);
    let qdot = rotation_velocity(&q, &omega);
    let shape = shape_residual(body, &q, &omega, material)?;
    let momentum = rotating_momentum(body, &q, &omega) - l0;
    let residual = (shape.amax() / force_scale).max(momentum.amax() / l0.norm());
    let mut eq = RelativeEquilibrium {
        q,
        qdot,
        omega,
        l0: *l0,
        residual,
        iterations,
        spectrum: Spectrum {
            eigenvalues: Vec::new(),
            spectral_radius: 0.0,
            floor: 0.0,
            near_zero: 0,
            group_tangent_curvature: 0.0,
            nondegenerate: false,
        },
        nondegenerate: false,
    };
    let spectrum = nondegeneracy_spectrum(body, &eq, material, options)?;
    eq.nondegenerate = spectrum.nondegenerate;
    eq.spectrum = spectrum;
    Ok(eq)
}

/// Hessian of `H − ω·L` in `(q, qdot)` coordinates at the equilibrium.
fn phase_space_hessian(
    body: &ReferenceBody,
    eq: &RelativeEquilibrium,
    material: &MaterialParams,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    let n = body.dof();
    let mut hess = DMatrix::zeros(2 * n, 2 * n);
    let scale = body.mean_radius();
    for j in 0..n {
        let h = fd_step * scale.max(eq.q[j].abs());
        let mut qp = eq.q.clone();
        qp[j] += h;
        let mut qm = eq.q.clone();
        qm[j] -= h;
        let col = (potential_gradient(body, &qp, material)? - potential_gradient(body, &qm, material)?) / (2.0 * h);
        hess.view_mut((0, j), (n, 1)).copy_from(&col);
    }
    // symmetrize the finite-difference block
    let qq = hess.view((0, 0), (n, n)).into_owned();
    hess.view_mut((0, 0), (n, n)).copy_from(&((&qq + qq.transpose()) * 0.5));

    let s = body.scalar_gram();
    let w = eq.omega.cross_matrix();
    let ns = s.nrows();
    for a in 0..ns {
        for b in 0..ns {
            let blk = w * s[(a, b)];
            hess.view_mut((3 * a, n + 3 * b), (3, 3)).copy_from(&blk);
            hess.view_mut((n + 3 * b, 3 * a), (3, 3)).copy_from(&blk.transpose());
        }
    }
    hess.view_mut((n, n), (n, n)).copy_from(body.mass_matrix());
    Ok(hess)
}

/// Jacobian of `L(q, qdot)` with respect to `(q, qdot)`.
fn momentum_jacobian(body: &ReferenceBody, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
    let n = body.dof();
    let s = body.scalar_gram();
    let ns = s.nrows();
    let mut jac = DMatrix::zeros(3, 2 * n);
    for a in 0..ns {
        for b in 0..ns {
            let c_a = block(q, a);
            let v_b = block(qdot, b);
            // ∂(c_a × v_b)/∂c_a = −v̂_b ; ∂(c_a × v_b)/∂v_b = ĉ_a
            let dq = -v_b.cross_matrix() * s[(a, b)];
            let dv = c_a.cross_matrix() * s[(a, b)];
            let mut left = jac.view_mut((0, 3 * a), (3, 3));
            left += dq;
            let mut right = jac.view_mut((0, n + 3 * b), (3, 3));
            right += dv;
        }
    }
    jac
}

/// Spectrum of the Hessian of `H − ω·L` restricted to the tangent space of
/// `{L = L0}` and to the mass-orthogonal complement of the group-orbit
/// tangent (rotations about `L0`). The equilibrium is nondegenerate when no
/// restricted eigenvalue falls below `spectral_floor · spectral radius`.
pub fn nondegeneracy_spectrum(
    body: &ReferenceBody,
    eq: &RelativeEquilibrium,
    material: &MaterialParams,
    options: &SolverOptions,
) -> Result<Spectrum> {
    let n = body.dof();
    let hess = phase_space_hessian(body, eq, material, options.fd_step)?;

    let mut metric = DMatrix::zeros(2 * n, 2 * n);
    metric.view_mut((0, 0), (n, n)).copy_from(body.mass_matrix());
    metric.view_mut((n, n), (n, n)).copy_from(body.mass_matrix());

    let e_hat = eq.axis().cross_matrix();
    let mut tangent = DVector::zeros(2 * n);
    tangent.rows_mut(0, n).copy_from(&map_blocks(&eq.q, &e_hat));
    tangent.rows_mut(n, n).copy_from(&map_blocks(&eq.qdot, &e_hat));
    let group_tangent_curvature = tangent.dot(&(&hess * &tangent)) / tangent.dot(&(&metric * &tangent));

    // constraints: dL · x = 0 and tᵀ W x = 0
    let mut cons = DMatrix::zeros(4, 2 * n);
    cons.view_mut((0, 0), (3, 2 * n)).copy_from(&momentum_jacobian(body, &eq.q, &eq.qdot));
    let wt = &metric * &tangent;
    cons.row_mut(3).copy_from(&wt.transpose());
    let basis = null_space(&cons);

    // W-orthonormalize the null-space basis: Z = N (Nᵀ W N)^{-1/2}
    let gram = basis.transpose() * &metric * &basis;
    let eig = gram.symmetric_eigen();
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let z = basis * inv_sqrt;
    let reduced = z.transpose() * &hess * &z;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = reduced.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    let spectral_radius = eigenvalues.last().map(|l| l.abs()).unwrap_or(0.0);
    let floor = options.spectral_floor * spectral_radius;
    let near_zero = eigenvalues.iter().filter(|l| l.abs() <= floor).count();
    Ok(Spectrum {
        eigenvalues,
        spectral_radius,
        floor,
        near_zero,
        group_tangent_curvature,
        nondegenerate: near_zero == 0,
    })
}

/// Orthonormal basis (columns) of the null space of a full-row-rank matrix.
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    let aat = a * a.transpose();
    let inv = aat.try_inverse().expect("constraints are independent");
    let proj = DMatrix::identity(cols, cols) - a.transpose() * inv * a;
    let eig = ((&proj + proj.transpose()) * 0.5).symmetric_eigen();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut basis = DMatrix::zeros(cols, cols - rows);
    for (k, &i) in order.iter().take(cols - rows).enumerate() {
        basis.set_column(k, &eig.eigenvectors.column(i));
    }
    basis
}

/// Distance from `state` to the group orbit of `eq` (rotations about `L0`),
/// relative to the size of the equilibrium. Velocities are divided by `|ω|`
/// so both halves of the phase-space vector carry length units.
pub fn group_orbit_distance(body: &ReferenceBody, state: &DeformationState, eq: &RelativeEquilibrium) -> f64 {
    let w = eq.omega.norm().max(f64::MIN_POSITIVE);
    let mm = body.mass_matrix();
    let e = eq.axis().cross_matrix();
    let inner = |a: (&DVector<f64>, &DVector<f64>), b: (&DVector<f64>, &DVector<f64>)| {
        a.0.dot(&(mm * b.0)) + a.1.dot(&(mm * b.1)) / (w * w)
    };
    let a = (&state.q, &state.qdot);
    let b = (&eq.q, &eq.qdot);
    let kb = (map_blocks(&eq.q, &e), map_blocks(&eq.qdot, &e));
    let kkb = (map_blocks(&eq.q, &(e * e)), map_blocks(&eq.qdot, &(e * e)));
    let bb = inner(b, b);
    let beta = inner(a, (&kb.0, &kb.1));
    let gamma = inner(a, (&kkb.0, &kkb.1));
    // ⟨a, R_θ b⟩ = ⟨a, b⟩ + β sin θ + γ (1 − cos θ) is largest at θ = atan2(β, −γ)
    let theta = beta.atan2(-gamma);
    let (s, c) = theta.sin_cos();
    let dq = a.0 - (b.0 + &kb.0 * s + &kkb.0 * (1.0 - c));
    let dv = a.1 - (b.1 + &kb.1 * s + &kkb.1 * (1.0 - c));
    inner((&dq, &dv), (&dq, &dv)).sqrt() / bb.sqrt()
}

/// A rigid triaxial body with mass `mass` and principal moments `inertia`
/// on a circular orbit of radius `radius`, in the quadrupole approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidBodyModel {
    pub inertia: [f64; 3],
    pub mass: f64,
    pub radius: f64,
    #[serde(rename = "kM")]
    pub k_m: f64,
}

impl RigidBodyModel {
    /// Principal moments of a uniform solid ellipsoid.
    pub fn ellipsoid(semi_axes: [f64; 3], density: f64, radius: f64, k_m: f64) -> Self {
        let [a, b, c] = semi_axes;
        let mass = density * 4.0 / 3.0 * std::f64::consts::PI * a * b * c;
        Self {
            inertia: [
                mass * (b * b + c * c) / 5.0,
                mass * (a * a + c * c) / 5.0,
                mass * (a * a + b * b) / 5.0,
            ],
            mass,
            radius,
            k_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::ensure_positive("mass", self.mass)?;
        crate::error::ensure_positive("radius", self.radius)?;
        crate::error::ensure_positive("kM", self.k_m)?;
        let [i1, i2, i3] = self.inertia;
        for &i in &self.inertia {
            crate::error::ensure_positive("inertia", i)?;
        }
        if i1 + i2 < i3 || i1 + i3 < i2 || i2 + i3 < i1 {
            return Err(Error::InvalidParameter {
                name: "inertia",
                reason: format!("{:?} violates the triangle inequalities", self.inertia),
            });
        }
        Ok(())
    }

    /// Inertia tensor of the body with the given attitude (body-to-space).
    pub fn inertia_tensor(&self, attitude: &Matrix3<f64>) -> Matrix3<f64> {
        attitude * Matrix3::from_diagonal(&Vector3::from(self.inertia)) * attitude.transpose()
    }

    /// Quadrupole (MacCullagh) potential `−kM m/r − kM (tr J − 3 ûᵀJû)/(2r³)`.
    pub fn potential(&self, position: &Vector3<f64>, attitude: &Matrix3<f64>) -> f64 {
        let j = self.inertia_tensor(attitude);
        let r = position.norm();
        let u = position / r;
        -self.k_m * self.mass / r - self.k_m * (j.trace() - 3.0 * u.dot(&(j * u))) / (2.0 * r.powi(3))
    }

    /// Potential minus `½ ωᵀ I_total ω`, with `I_total` the inertia about the planet.
    pub fn augmented_potential(&self, position: &Vector3<f64>, attitude: &Matrix3<f64>, omega: &Vector3<f64>) -> f64 {
        let total = self.inertia_tensor(attitude)
            + (Matrix3::identity() * position.norm_squared() - position * position.transpose()) * self.mass;
        self.potential(position, attitude) - 0.5 * omega.dot(&(total * omega))
    }

    /// Gradient of [`Self::augmented_potential`] with respect to the position
    /// and to a small rotation `s` applied as `attitude → exp(ŝ)·attitude`.
    pub fn augmented_gradient(
        &self,
        position: &Vector3<f64>,
        attitude: &Matrix3<f64>,
        omega: &Vector3<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let j = self.inertia_tensor(attitude);
        let km = self.k_m;
        let r2 = position.norm_squared();
        let r = r2.sqrt();
        let r3 = r2 * r;
        let r5 = r3 * r2;
        let r7 = r5 * r2;
        let jr = j * position;
        let grad_pos = position * (km * self.mass / r3)
            + position * (1.5 * km * j.trace() / r5)
            + (jr * (2.0 / r5) - position * (5.0 * position.dot(&jr) / r7)) * (1.5 * km)
            - (position * omega.norm_squared() - omega * position.dot(omega)) * self.mass;
        let u = position / r;
        let grad_rot = (j * u).cross(&u) * (3.0 * km / r3) + omega.cross(&(j * omega));
        (grad_pos, grad_rot)
    }

    /// Total inertia about the planet.
    pub fn total_inertia(&self, position: &Vector3<f64>, attitude: &Matrix3<f64>) -> Matrix3<f64> {
        self.inertia_tensor(attitude)
            + (Matrix3::identity() * position.norm_squared() - position * position.transpose()) * self.mass
    }
}

/// One member of the rigid quadrupole catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidRelativeEquilibrium {
    /// Body-to-space rotation; column `i` is principal axis `i`.
    pub attitude: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub l0: Vector3<f64>,
    /// Index of the principal axis along the planet direction.
    pub radial_axis: usize,
    pub radial_sign: i8,
    /// Index of the principal axis normal to the orbit plane.
    pub normal_axis: usize,
    pub normal_sign: i8,
    /// Gradient of the augmented potential scaled by `kM m / r²`.
    pub residual: f64,
    pub spectrum: Vec<f64>,
    pub nondegenerate: bool,
}

impl RigidRelativeEquilibrium {
    /// Relative deviation of `ω` from the Keplerian rate.
    pub fn kepler_deviation(&self, model: &RigidBodyModel) -> f64 {
        let kepler = (model.k_m / model.radius.powi(3)).sqrt();
        (self.omega.norm() - kepler).abs() / kepler
    }
}

/// Orbital rate of a rigid body on a circular orbit with principal axis
/// `radial_axis` pointing at the planet.
pub fn quadrupole_orbital_rate(model: &RigidBodyModel, radial_axis: usize) -> Result<f64> {
    let [i1, i2, i3] = model.inertia;
    let r = model.radius;
    let w2 = model.k_m / r.powi(3)
        + 1.5 * model.k_m * (i1 + i2 + i3 - 3.0 * model.inertia[radial_axis]) / (model.mass * r.powi(5));
    if w2 <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "radius",
            reason: "too close for a circular orbit in the quadrupole approximation".into(),
        });
    }
    Ok(w2.sqrt())
}

/// All 24 relative equilibria of a strictly triaxial rigid body: one
/// principal axis along the radius (3 axes × 2 signs), one of the remaining
/// two normal to the orbit plane (2 × 2 signs); the third axis follows from
/// orientation.
pub fn rigid_quadrupole_catalog(model: &RigidBodyModel) -> Result<Vec<RigidRelativeEquilibrium>> {
    model.validate()?;
    let [i1, i2, i3] = model.inertia;
    let tol = 1e-12 * (i1 + i2 + i3);
    if (i1 - i2).abs() <= tol || (i2 - i3).abs() <= tol || (i1 - i3).abs() <= tol {
        return Err(Error::DegenerateCatalog(model.inertia));
    }

    let mut families = Vec::with_capacity(24);
    for radial in 0..3 {
        for rs in [1i8, -1] {
            for normal in (0..3).filter(|&k| k != radial) {
                for ns in [1i8, -1] {
                    families.push((radial, rs, normal, ns));
                }
            }
        }
    }
    families
        .par_iter()
        .map(|&(radial, rs, normal, ns)| catalog_entry(model, radial, rs, normal, ns))
        .collect()
}

fn catalog_entry(
    model: &RigidBodyModel,
    radial: usize,
    rs: i8,
    normal: usize,
    ns: i8,
) -> Result<RigidRelativeEquilibrium> {
    let third = 3 - radial - normal;
    let x = Vector3::x() * rs as f64;
    let z = Vector3::z() * ns as f64;
    let mut attitude = Matrix3::zeros();
    attitude.set_column(radial, &x);
    attitude.set_column(normal, &z);
    // choose the third column so that det = +1
    attitude.set_column(third, &Vector3::y());
    if attitude.determinant() < 0.0 {
        attitude.set_column(third, &(-Vector3::y()));
    }

    let position = Vector3::new(model.radius, 0.0, 0.0);
    let omega = Vector3::new(0.0, 0.0, quadrupole_orbital_rate(model, radial)?);
    let (gp, gr) = model.augmented_gradient(&position, &attitude, &omega);
    let scale = model.k_m * model.mass / model.radius.powi(2);
    let residual = gp.norm().hypot(gr.norm() / model.radius) / scale;
    let l0 = model.total_inertia(&position, &attitude) * omega;
    let spectrum = rigid_spectrum(model, &position, &attitude, &l0);
    let radius = spectrum.last().map(|l| l.abs()).unwrap_or(0.0);
    let nondegenerate = spectrum.iter().all(|l| l.abs() > 1e-8 * radius);
    Ok(RigidRelativeEquilibrium {
        attitude,
        position,
        omega,
        l0,
        radial_axis: radial,
        radial_sign: rs,
        normal_axis: normal,
        normal_sign: ns,
        residual,
        spectrum,
        nondegenerate,
    })
}

/// Independent check of a catalog entry: five-point finite differences of
/// [`RigidBodyModel::augmented_potential`] in position and attitude, scaled
/// like [`RigidRelativeEquilibrium::residual`].
pub fn rigid_residual_recheck(model: &RigidBodyModel, entry: &RigidRelativeEquilibrium) -> f64 {
    let f = |x: &[f64; 6]| {
        let position = Vector3::new(x[0], x[1], x[2]);
        let attitude = rotation_exp(&Vector3::new(x[3], x[4], x[5])) * entry.attitude;
        model.augmented_potential(&position, &attitude, &entry.omega)
    };
    let x0 = [entry.position.x, entry.position.y, entry.position.z, 0.0, 0.0, 0.0];
    let mut grad = [0.0; 6];
    for (j, g) in grad.iter_mut().enumerate() {
        let h = if j < 3 { 1e-3 * model.radius } else { 1e-3 };
        let at = |k: f64| {
            let mut x = x0;
            x[j] += k * h;
            f(&x)
        };
        *g = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h);
    }
    let pos = Vector3::new(grad[0], grad[1], grad[2]);
    let rot = Vector3::new(grad[3], grad[4], grad[5]);
    pos.norm().hypot(rot.norm() / model.radius) / (model.k_m * model.mass / model.radius.powi(2))
}

fn rotation_exp(s: &Vector3<f64>) -> Matrix3<f64> {
    nalgebra::Rotation3::new(*s).into_inner()
}

/// Gradient of the amended potential `V + ½ L0ᵀ I_total⁻¹ L0` in the
/// coordinates `(position, attitude rotation)`.
fn amended_gradient(model: &RigidBodyModel, x: &[f64; 6], base: &Matrix3<f64>, l0: &Vector3<f64>) -> [f64; 6] {
    let position = Vector3::new(x[0], x[1], x[2]);
    let attitude = rotation_exp(&Vector3::new(x[3], x[4], x[5])) * base;
    let omega = model
        .total_inertia(&position, &attitude)
        .try_inverse()
        .expect("total inertia is positive definite")
        * l0;
    let (gp, gr) = model.augmented_gradient(&position, &attitude, &omega);
    [gp.x, gp.y, gp.z, gr.x, gr.y, gr.z]
}

/// Eigenvalues of the amended-potential Hessian transversal to the rotation
/// about the orbit normal, sorted by magnitude.
fn rigid_spectrum(model: &RigidBodyModel, position: &Vector3<f64>, attitude: &Matrix3<f64>, l0: &Vector3<f64>) -> Vec<f64> {
    let x0 = [position.x, position.y, position.z, 0.0, 0.0, 0.0];
    let mut hess = DMatrix::zeros(6, 6);
    for j in 0..6 {
        let h = if j < 3 { 1e-5 * model.radius } else { 1e-5 };
        let mut xp = x0;
        xp[j] += h;
        let mut xm = x0;
        xm[j] -= h;
        let gp = amended_gradient(model, &xp, attitude, l0);
        let gm = amended_gradient(model, &xm, attitude, l0);
        for i in 0..6 {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let axis = l0.normalize();
    let t = DVector::from_row_slice(&{
        let dp = axis.cross(position);
        [dp.x, dp.y, dp.z, axis.x, axis.y, axis.z]
    });
    let basis = null_space(&DMatrix::from_row_slice(1, 6, t.as_slice()));
    let reduced = basis.transpose() * hess * &basis;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let mut eig: Vec<f64> = reduced.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    eig
}
