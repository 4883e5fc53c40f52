//! Reference configuration, Galerkin deformation basis and reduced state.
//!
//! The body occupies a triaxial ellipsoid centred at its centroid. A
//! configuration is a vector polynomial map
//!
//! ```text
//! ζ(x) = Σ_m p_m(x) c_m,
//! ```
//!
//! where `p_m` runs over the scalar monomials of total degree at most
//! `basis_degree` and each coefficient `c_m` is a point of R³. The coefficient
//! vector `q` stores the `c_m` back to back, so block `m` occupies entries
//! `3m..3m+3`. Rotating the deformed body by `R` maps every block `c_m` to
//! `R c_m`, which is why all potentials are invariant under the block rotation
//! action on `q`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::quadrature::{ellipsoid_rule, QuadratureNode};

/// Exponents `(i, j, k)` of the monomial `x^i y^j z^k`.
pub type Monomial = [u8; 3];

/// Vector polynomial modes of total degree at most `degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationBasis {
    degree: usize,
    monomials: Vec<Monomial>,
}

impl DeformationBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::InvalidParameter {
                name: "basis_degree",
                reason: format!("must be 1 or 2, got {degree}"),
            });
        }
        let mut monomials = Vec::new();
        for total in 0..=degree as u8 {
            for i in (0..=total).rev() {
                for j in (0..=total - i).rev() {
                    monomials.push([i, j, total - i - j]);
                }
            }
        }
        Ok(Self { degree, monomials })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    /// Number of scalar monomials.
    pub fn scalar_count(&self) -> usize {
        self.monomials.len()
    }

    /// Number of vector modes, i.e. the length of `q`.
    pub fn count(&self) -> usize {
        3 * self.monomials.len()
    }

    /// Values and gradients of every scalar monomial at `x`.
    pub fn eval(&self, x: &Vector3<f64>) -> (Vec<f64>, Vec<Vector3<f64>>) {
        let mut values = Vec::with_capacity(self.monomials.len());
        let mut grads = Vec::with_capacity(self.monomials.len());
        for e in &self.monomials {
            values.push(pow(x.x, e[0]) * pow(x.y, e[1]) * pow(x.z, e[2]));
            grads.push(Vector3::new(
                dpow(x.x, e[0]) * pow(x.y, e[1]) * pow(x.z, e[2]),
                pow(x.x, e[0]) * dpow(x.y, e[1]) * pow(x.z, e[2]),
                pow(x.x, e[0]) * pow(x.y, e[1]) * dpow(x.z, e[2]),
            ));
        }
        (values, grads)
    }

    /// Index of the monomial with the given exponents.
    pub fn index_of(&self, exponents: Monomial) -> Option<usize> {
        self.monomials.iter().position(|e| *e == exponents)
    }
}

fn pow(x: f64, e: u8) -> f64 {
    x.powi(e as i32)
}

fn dpow(x: f64, e: u8) -> f64 {
    if e == 0 {
        0.0
    } else {
        e as f64 * x.powi(e as i32 - 1)
    }
}

/// Mass and the first two moments of the density over the reference body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mass: f64,
    pub first: Vector3<f64>,
    pub second: Matrix3<f64>,
}

/// The undeformed body: geometry, density, basis, quadrature and the
/// precomputed mass matrix. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ReferenceBody {
    semi_axes: Vector3<f64>,
    density: f64,
    quadrature_order: usize,
    basis: DeformationBasis,
    nodes: Vec<QuadratureNode>,
    // node-major tables: entry [node * n_scalar + m]
    phi: Vec<f64>,
    dphi: Vec<Vector3<f64>>,
    moments: Moments,
    scalar_gram: DMatrix<f64>,
    mass_matrix: DMatrix<f64>,
    mass_factor: Cholesky<f64, Dyn>,
}

impl ReferenceBody {
    pub fn semi_axes(&self) -> Vector3<f64> {
        self.semi_axes
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn basis(&self) -> &DeformationBasis {
        &self.basis
    }

    pub fn nodes(&self) -> &[QuadratureNode] {
        &self.nodes
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn mass(&self) -> f64 {
        self.moments.mass
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.semi_axes.product()
    }

    /// Geometric mean of the semi-axes.
    pub fn mean_radius(&self) -> f64 {
        self.semi_axes.product().cbrt()
    }

    /// Length of the coefficient vector `q`.
    pub fn dof(&self) -> usize {
        self.basis.count()
    }

    /// Scalar Gram matrix `S_mn = ∫ρ0 p_m p_n`.
    pub fn scalar_gram(&self) -> &DMatrix<f64> {
        &self.scalar_gram
    }

    /// `M = S ⊗ I₃` in the block layout of `q`.
    pub fn mass_matrix(&self) -> &DMatrix<f64> {
        &self.mass_matrix
    }

    /// Solves `M x = rhs` with the prefactored mass matrix.
    pub fn solve_mass(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.mass_factor.solve(rhs)
    }

    pub(crate) fn phi(&self, node: usize) -> &[f64] {
        let n = self.basis.scalar_count();
        &self.phi[node * n..(node + 1) * n]
    }

    pub(crate) fn dphi(&self, node: usize) -> &[Vector3<f64>] {
        let n = self.basis.scalar_count();
        &self.dphi[node * n..(node + 1) * n]
    }

    /// ζ(x) and Dζ(x) at an arbitrary reference point.
    pub fn evaluate_map(&self, q: &DVector<f64>, x: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let (values, grads) = self.basis.eval(x);
        combine(q, &values, &grads)
    }

    /// Reference point mapped onto `target`, by Newton iteration from the
    /// affine part of the map. `None` when the iteration breaks down.
    pub fn preimage(&self, q: &DVector<f64>, target: &Vector3<f64>) -> Option<Vector3<f64>> {
        let (c, a) = self.affine_part(q);
        let mut x = a.try_inverse()? * (target - c);
        for _ in 0..50 {
            let (z, f) = self.evaluate_map(q, &x);
            let dx = f.try_inverse()? * (target - z);
            x += dx;
            if !x.iter().all(|v| v.is_finite()) {
                return None;
            }
            if dx.norm() <= 1e-12 * (1.0 + x.norm()) {
                return Some(x);
            }
        }
        None
    }

    /// Whether the deformed body ζ(B) contains `point`.
    pub fn covers(&self, q: &DVector<f64>, point: &Vector3<f64>) -> bool {
        self.preimage(q, point)
            .is_some_and(|x| x.component_div(&self.semi_axes).norm_squared() <= 1.0)
    }

    /// Images ζ(x_q) of all quadrature nodes.
    pub fn node_positions(&self, q: &DVector<f64>) -> Vec<Vector3<f64>> {
        (0..self.nodes.len())
            .map(|k| {
                self.phi(k)
                    .iter()
                    .enumerate()
                    .fold(Vector3::zeros(), |acc, (m, &p)| acc + block(q, m) * p)
            })
            .collect()
    }

    /// Deformation gradients Dζ(x_q) at all quadrature nodes.
    pub fn node_gradients(&self, q: &DVector<f64>) -> Vec<Matrix3<f64>> {
        (0..self.nodes.len())
            .map(|k| {
                self.dphi(k)
                    .iter()
                    .enumerate()
                    .fold(Matrix3::zeros(), |acc, (m, g)| acc + block(q, m) * g.transpose())
            })
            .collect()
    }

    /// Assembles a generalized force from per-node contributions:
    /// `f_m = Σ_q (p_m(x_q) b_q + P_q ∇p_m(x_q))`.
    ///
    /// `body_forces` and `stresses` must already carry the quadrature weights.
    pub fn assemble(
        &self,
        body_forces: Option<&[Vector3<f64>]>,
        stresses: Option<&[Matrix3<f64>]>,
    ) -> DVector<f64> {
        let mut out = DVector::zeros(self.dof());
        for k in 0..self.nodes.len() {
            let phi = self.phi(k);
            let dphi = self.dphi(k);
            for m in 0..phi.len() {
                let mut v = Vector3::zeros();
                if let Some(b) = body_forces {
                    v += b[k] * phi[m];
                }
                if let Some(p) = stresses {
                    v += p[k] * dphi[m];
                }
                add_block(&mut out, m, &v);
            }
        }
        out
    }

    /// Coefficients of the identity map ζ(x) = x.
    pub fn identity_q(&self) -> DVector<f64> {
        self.affine_q(&Vector3::zeros(), &Matrix3::identity())
    }

    /// Coefficients of the affine map ζ(x) = c + A x.
    pub fn affine_q(&self, c: &Vector3<f64>, a: &Matrix3<f64>) -> DVector<f64> {
        let mut q = DVector::zeros(self.dof());
        set_block(&mut q, 0, c);
        for axis in 0..3 {
            let mut e = [0u8; 3];
            e[axis] = 1;
            let m = self.basis.index_of(e).expect("linear monomials are always present");
            set_block(&mut q, m, &a.column(axis).into_owned());
        }
        q
    }

    /// Affine part `(c, A)` of a configuration: the constant block and the
    /// coefficients of `x`, `y`, `z`.
    pub fn affine_part(&self, q: &DVector<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let mut a = Matrix3::zeros();
        for axis in 0..3 {
            let mut e = [0u8; 3];
            e[axis] = 1;
            let m = self.basis.index_of(e).expect("linear monomials are always present");
            a.set_column(axis, &block(q, m));
        }
        (block(q, 0), a)
    }

    /// Mass-weighted barycenter of the deformed body.
    pub fn barycenter(&self, q: &DVector<f64>) -> Vector3<f64> {
        let s0 = self.scalar_gram.row(0);
        let mut c = Vector3::zeros();
        for m in 0..self.basis.scalar_count() {
            c += block(q, m) * s0[m];
        }
        c / self.moments.mass
    }
}

fn combine(q: &DVector<f64>, values: &[f64], grads: &[Vector3<f64>]) -> (Vector3<f64>, Matrix3<f64>) {
    let mut z = Vector3::zeros();
    let mut f = Matrix3::zeros();
    for (m, (v, g)) in values.iter().zip(grads).enumerate() {
        let c = block(q, m);
        z += c * *v;
        f += c * g.transpose();
    }
    (z, f)
}

/// Block `m` of a coefficient vector.
pub fn block(q: &DVector<f64>, m: usize) -> Vector3<f64> {
    Vector3::new(q[3 * m], q[3 * m + 1], q[3 * m + 2])
}

pub fn set_block(q: &mut DVector<f64>, m: usize, v: &Vector3<f64>) {
    q[3 * m] = v.x;
    q[3 * m + 1] = v.y;
    q[3 * m + 2] = v.z;
}

fn add_block(q: &mut DVector<f64>, m: usize, v: &Vector3<f64>) {
    q[3 * m] += v.x;
    q[3 * m + 1] += v.y;
    q[3 * m + 2] += v.z;
}

/// Applies a linear map to every block of a coefficient vector.
pub fn map_blocks(q: &DVector<f64>, a: &Matrix3<f64>) -> DVector<f64> {
    let mut out = q.clone();
    for m in 0..q.len() / 3 {
        set_block(&mut out, m, &(a * block(q, m)));
    }
    out
}

/// Builds the ellipsoidal reference body with uniform density.
///
/// `quadrature_order` is the number of Gauss–Legendre points per direction
/// (the azimuth gets twice as many); the rule is exact for polynomial
/// integrands of total degree `2·quadrature_order − 3`.
pub fn build_ellipsoid_body(
    semi_axes: [f64; 3],
    density: f64,
    basis_degree: usize,
    quadrature_order: usize,
) -> Result<ReferenceBody> {
    for &a in &semi_axes {
        ensure_positive("semi_axes", a)?;
    }
    ensure_positive("density", density)?;
    if quadrature_order < 2 {
        return Err(Error::InvalidParameter {
            name: "quadrature_order",
            reason: format!("must be at least 2, got {quadrature_order}"),
        });
    }
    let semi_axes = Vector3::from(semi_axes);
    let basis = DeformationBasis::new(basis_degree)?;
    let nodes = ellipsoid_rule(&semi_axes, quadrature_order);

    let ns = basis.scalar_count();
    let mut phi = Vec::with_capacity(nodes.len() * ns);
    let mut dphi = Vec::with_capacity(nodes.len() * ns);
    let mut mass = 0.0;
    let mut first = Vector3::zeros();
    let mut second = Matrix3::zeros();
    let mut gram = DMatrix::zeros(ns, ns);
    for node in &nodes {
        let (v, g) = basis.eval(&node.point);
        let w = density * node.weight;
        mass += w;
        first += node.point * w;
        second += node.point * node.point.transpose() * w;
        for i in 0..ns {
            for j in 0..=i {
                gram[(i, j)] += w * v[i] * v[j];
            }
        }
        phi.extend(v);
        dphi.extend(g);
    }
    for i in 0..ns {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
    }

    let n = 3 * ns;
    let mut mass_matrix = DMatrix::zeros(n, n);
    for i in 0..ns {
        for j in 0..ns {
            for d in 0..3 {
                mass_matrix[(3 * i + d, 3 * j + d)] = gram[(i, j)];
            }
        }
    }
    let mass_factor = Cholesky::new(mass_matrix.clone()).ok_or(Error::DegenerateBasis)?;

    Ok(ReferenceBody {
        semi_axes,
        density,
        quadrature_order,
        basis,
        nodes,
        phi,
        dphi,
        moments: Moments { mass, first, second },
        scalar_gram: gram,
        mass_matrix,
        mass_factor,
    })
}

/// Galerkin coefficients `q` and their velocities `qdot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl DeformationState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Self {
        assert_eq!(q.len(), qdot.len(), "q and qdot must have equal length");
        Self { q, qdot }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, qdot: DVector::zeros(n) }
    }

    /// Rigid placement `ζ(x) = R x + c` moving with barycentric velocity `v`
    /// and spinning with angular velocity `spin` about the barycenter.
    pub fn rigid(
        body: &ReferenceBody,
        rotation: &Matrix3<f64>,
        center: &Vector3<f64>,
        velocity: &Vector3<f64>,
        spin: &Vector3<f64>,
    ) -> Self {
        let q = body.affine_q(center, rotation);
        let qdot = body.affine_q(velocity, &(spin.cross_matrix() * rotation));
        Self { q, qdot }
    }

    /// Momenta `p = M qdot`.
    pub fn momenta(&self, body: &ReferenceBody) -> DVector<f64> {
        body.mass_matrix() * &self.qdot
    }

    /// The state seen after rotating space by `rotation`.
    pub fn rotated(&self, rotation: &Matrix3<f64>) -> Self {
        Self {
            q: map_blocks(&self.q, rotation),
            qdot: map_blocks(&self.qdot, rotation),
        }
    }

    /// Checks `det Dζ > 0` at every node and that no node sits on the planet.
    pub fn check_regular(&self, body: &ReferenceBody) -> Result<()> {
        for (node, f) in body.node_gradients(&self.q).iter().enumerate() {
            let det = f.determinant();
            if det <= 0.0 || !det.is_finite() {
                return Err(Error::SingularConfiguration { node, det });
            }
        }
        for (node, z) in body.node_positions(&self.q).iter().enumerate() {
            let distance = z.norm();
            if distance <= 0.0 || !distance.is_finite() {
                return Err(Error::ImpactProximity { node, distance });
            }
        }
        Ok(())
    }
}

/// Rotation by `angle` about `axis`.
pub fn axis_rotation(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).into_inner()
}
