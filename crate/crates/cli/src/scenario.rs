//! Scenario files.
//!
//! One TOML document describes a run: the body, the material, the initial
//! state, the integrator and the classifier, plus the optional sections read
//! by the `equilibria`, `catalog` and `sweep` commands. Unknown keys are
//! rejected everywhere.

use std::path::Path;

use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tidelock::body::{block, set_block};
use tidelock::classifier::Thresholds;
use tidelock::energetics::angular_momentum;
use tidelock::equilibria::{
    guess_momentum, oriented_guess, solve_relative_equilibrium, RelativeEquilibrium, RigidBodyModel, SolverOptions,
};
use tidelock::{build_ellipsoid_body, DeformationState, IntegratorSettings, MaterialParams, ReferenceBody, ViscosityParams};

use crate::CliError;

/// The only schema version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest supported polynomial degree of the deformation basis.
pub const MAX_BASIS_DEGREE: usize = 3;
/// Largest supported Gauss order per quadrature direction.
pub const MAX_QUADRATURE_ORDER: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    /// Seed for every randomized perturbation.
    #[serde(default)]
    pub seed: u64,
    pub body: BodySpec,
    #[serde(default)]
    pub material: MaterialParams,
    #[serde(default)]
    pub viscosity: ViscosityParams,
    #[serde(default)]
    pub initial: Option<InitialConditions>,
    #[serde(default)]
    pub integrator: Option<IntegratorSettings>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub equilibrium: Option<EquilibriumSpec>,
    #[serde(default)]
    pub catalog: Option<CatalogSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    pub semi_axes: [f64; 3],
    #[serde(default = "one")]
    pub density: f64,
    #[serde(default = "one_usize")]
    pub basis_degree: usize,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_order() -> usize {
    6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialConditions {
    /// Raw generalized coordinates and velocities.
    Explicit(ExplicitState),
    /// Rigid placement on a planar orbit, optionally pre-strained.
    Orbital(OrbitalState),
    /// A solved relative equilibrium with a seeded velocity kick.
    Equilibrium(SeededState),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

/// The barycenter starts at `(radius, 0, 0)` moving along `+y` at
/// `speed_factor` times the circular speed `√(kM/r)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitalState {
    pub radius: f64,
    #[serde(default = "one")]
    pub speed_factor: f64,
    /// Spin about `+z` in units of the circular orbital rate `√(kM/r³)`.
    /// Ignored when `spin` is given.
    #[serde(default)]
    pub spin_factor: Option<f64>,
    /// Absolute spin vector.
    #[serde(default)]
    pub spin: Option<[f64; 3]>,
    /// Rows of the initial attitude; identity when absent.
    #[serde(default)]
    pub attitude: Option<[[f64; 3]; 3]>,
    /// Symmetric strain `E`, giving the gradient `attitude · (I + E)`.
    #[serde(default)]
    pub strain: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeededState {
    pub radius: f64,
    #[serde(default)]
    pub attitude: Option<[[f64; 3]; 3]>,
    /// Size of the random velocity kick relative to `|ω| · mean radius`.
    #[serde(default)]
    pub perturbation: f64,
}

/// Read by `equilibria`: one solve from the synchronous guess at `radius`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSpec {
    pub radius: f64,
    #[serde(default)]
    pub attitude: Option<[[f64; 3]; 3]>,
    /// Factor applied to the guessed rotation rate, for testing robustness.
    #[serde(default = "one")]
    pub omega_scale: f64,
}

/// Read by `catalog`. The rigid model comes from the body's ellipsoid unless
/// principal moments and mass are given.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSpec {
    pub radius: f64,
    #[serde(default)]
    pub inertia: Option<[f64; 3]>,
    #[serde(default)]
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    SpeedFactor,
    SpinFactor,
    Radius,
    Eta,
    Epsilon,
    Perturbation,
}

/// Either an explicit list of values or `count` evenly spaced points from
/// `start` to `stop` inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
}

impl SweepSpec {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        let points = match (&self.values, self.start, self.stop, self.count) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => match n {
                0 => Vec::new(),
                1 => vec![a],
                _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
            },
            _ => return Err(config("sweep needs either `values` or all of `start`, `stop`, `count`")),
        };
        if points.is_empty() {
            return Err(config("sweep range is empty"));
        }
        if let Some(bad) = points.iter().find(|v| !v.is_finite()) {
            return Err(config(format!("sweep value {bad} is not finite")));
        }
        Ok(points)
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config(format!("`{name}` must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(config(format!("`{name}` must be non-negative and finite, got {v}")))
    }
}

fn matrix(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

fn attitude(rows: &Option<[[f64; 3]; 3]>) -> Result<Matrix3<f64>, CliError> {
    let Some(rows) = rows else {
        return Ok(Matrix3::identity());
    };
    let a = matrix(rows);
    if (a.transpose() * a - Matrix3::identity()).amax() > 1e-9 || a.determinant() < 0.0 {
        return Err(config("`attitude` must be a proper rotation"));
    }
    Ok(a)
}

impl Scenario {
    /// Reads and validates a scenario file.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| config("scenario file is not UTF-8"))?;
        let scenario = Self::parse(text)?;
        Ok((scenario, bytes))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| config(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let b = &self.body;
        for a in b.semi_axes {
            positive("semi_axes", a)?;
        }
        positive("density", b.density)?;
        if !(1..=MAX_BASIS_DEGREE).contains(&b.basis_degree) {
            return Err(config(format!("`basis_degree` must lie in 1..={MAX_BASIS_DEGREE}")));
        }
        if !(2..=MAX_QUADRATURE_ORDER).contains(&b.quadrature_order) {
            return Err(config(format!("`quadrature_order` must lie in 2..={MAX_QUADRATURE_ORDER}")));
        }
        self.material.validate().map_err(|e| config(e.to_string()))?;
        self.viscosity.validate().map_err(|e| config(e.to_string()))?;
        self.thresholds.validate().map_err(|e| config(e.to_string()))?;
        self.solver.validate().map_err(|e| config(e.to_string()))?;
        if let Some(settings) = &self.integrator {
            settings.validate().map_err(|e| config(e.to_string()))?;
        }
        match &self.initial {
            Some(InitialConditions::Orbital(o)) => {
                positive("radius", o.radius)?;
                non_negative("speed_factor", o.speed_factor)?;
                if let Some(s) = o.spin_factor {
                    if !s.is_finite() {
                        return Err(config("`spin_factor` must be finite"));
                    }
                }
                if o.spin.is_some() && o.spin_factor.is_some() {
                    return Err(config("give either `spin` or `spin_factor`, not both"));
                }
                if o.spin.is_some_and(|s| s.iter().any(|v| !v.is_finite())) {
                    return Err(config("`spin` must be finite"));
                }
                attitude(&o.attitude)?;
                if let Some(e) = &o.strain {
                    let e = matrix(e);
                    if (e - e.transpose()).amax() > 0.0 || e.amax() >= 0.5 {
                        return Err(config("`strain` must be symmetric with entries below 0.5"));
                    }
                }
            }
            Some(InitialConditions::Equilibrium(s)) => {
                positive("radius", s.radius)?;
                non_negative("perturbation", s.perturbation)?;
                attitude(&s.attitude)?;
            }
            Some(InitialConditions::Explicit(_)) | None => {}
        }
        if let Some(e) = &self.equilibrium {
            positive("equilibrium.radius", e.radius)?;
            positive("omega_scale", e.omega_scale)?;
            attitude(&e.attitude)?;
        }
        if let Some(c) = &self.catalog {
            positive("catalog.radius", c.radius)?;
            if c.inertia.is_some() != c.mass.is_some() {
                return Err(config("catalog `inertia` and `mass` go together"));
            }
            if let Some(i) = c.inertia {
                for v in i {
                    positive("inertia", v)?;
                }
            }
            if let Some(m) = c.mass {
                positive("mass", m)?;
            }
        }
        if let Some(s) = &self.sweep {
            s.points()?;
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "scenario".into())
    }

    pub fn build_body(&self) -> Result<ReferenceBody, CliError> {
        let b = &self.body;
        build_ellipsoid_body(b.semi_axes, b.density, b.basis_degree, b.quadrature_order).map_err(|e| config(e.to_string()))
    }

    pub fn integrator(&self) -> Result<&IntegratorSettings, CliError> {
        self.integrator.as_ref().ok_or_else(|| config("missing [integrator] section"))
    }

    /// The initial state, solving for the equilibrium first when seeded.
    pub fn initial_state(&self, body: &ReferenceBody) -> Result<DeformationState, CliError> {
        let initial = self.initial.as_ref().ok_or_else(|| config("missing [initial] section"))?;
        let state = match initial {
            InitialConditions::Explicit(e) => {
                if e.q.len() != body.dof() || e.qdot.len() != body.dof() {
                    return Err(config(format!("explicit state needs {} entries in `q` and `qdot`", body.dof())));
                }
                DeformationState::new(DVector::from_vec(e.q.clone()), DVector::from_vec(e.qdot.clone()))
            }
            InitialConditions::Orbital(o) => orbital_state(body, &self.material, o)?,
            InitialConditions::Equilibrium(s) => {
                let eq = self.solve_equilibrium(body, s.radius, &attitude(&s.attitude)?, 1.0)?;
                perturbed_equilibrium(body, &eq, s.perturbation, self.seed)
            }
        };
        state.check_regular(body).map_err(|e| config(format!("initial state: {e}")))?;
        Ok(state)
    }

    /// Newton solve from the synchronous guess at `radius`.
    pub fn solve_equilibrium(
        &self,
        body: &ReferenceBody,
        radius: f64,
        attitude: &Matrix3<f64>,
        omega_scale: f64,
    ) -> Result<RelativeEquilibrium, CliError> {
        let mut guess = oriented_guess(body, &self.material, radius, attitude);
        let l0 = guess_momentum(body, &guess);
        guess.omega *= omega_scale;
        Ok(solve_relative_equilibrium(body, &self.material, &l0, &guess, &self.solver)?)
    }

    pub fn equilibrium_attitude(&self) -> Result<Matrix3<f64>, CliError> {
        match &self.equilibrium {
            Some(e) => attitude(&e.attitude),
            None => Err(config("missing [equilibrium] section")),
        }
    }

    pub fn rigid_model(&self) -> Result<RigidBodyModel, CliError> {
        let c = self.catalog.as_ref().ok_or_else(|| config("missing [catalog] section"))?;
        let mut model = RigidBodyModel::ellipsoid(self.body.semi_axes, self.body.density, c.radius, self.material.k_m);
        if let (Some(inertia), Some(mass)) = (c.inertia, c.mass) {
            model.inertia = inertia;
            model.mass = mass;
        }
        Ok(model)
    }

    /// A copy with one swept parameter replaced.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Scenario, CliError> {
        let mut s = self.clone();
        let wrong = |what: &str| config(format!("sweeping `{what}` needs a different [initial] kind"));
        match (parameter, s.initial.as_mut()) {
            (SweepParameter::SpeedFactor, Some(InitialConditions::Orbital(o))) => o.speed_factor = value,
            (SweepParameter::SpinFactor, Some(InitialConditions::Orbital(o))) => {
                o.spin = None;
                o.spin_factor = Some(value);
            }
            (SweepParameter::Radius, Some(InitialConditions::Orbital(o))) => o.radius = value,
            (SweepParameter::Radius, Some(InitialConditions::Equilibrium(e))) => e.radius = value,
            (SweepParameter::Perturbation, Some(InitialConditions::Equilibrium(e))) => e.perturbation = value,
            (SweepParameter::Eta, _) => s.viscosity.eta = value,
            (SweepParameter::Epsilon, _) => s.material.epsilon = value,
            (SweepParameter::SpeedFactor, _) => return Err(wrong("speed_factor")),
            (SweepParameter::SpinFactor, _) => return Err(wrong("spin_factor")),
            (SweepParameter::Radius, _) => return Err(wrong("radius")),
            (SweepParameter::Perturbation, _) => return Err(wrong("perturbation")),
        }
        s.sweep = None;
        s.validate()?;
        Ok(s)
    }
}

fn orbital_state(body: &ReferenceBody, material: &MaterialParams, o: &OrbitalState) -> Result<DeformationState, CliError> {
    let r = o.radius;
    let n = (material.k_m / (r * r * r)).sqrt();
    let center = Vector3::new(r, 0.0, 0.0);
    let velocity = Vector3::new(0.0, o.speed_factor * (material.k_m / r).sqrt(), 0.0);
    let spin = match (o.spin, o.spin_factor) {
        (Some(s), _) => Vector3::from(s),
        (None, f) => Vector3::z() * (f.unwrap_or(1.0) * n),
    };
    let strain = o.strain.as_ref().map(matrix).unwrap_or_else(Matrix3::zeros);
    let gradient = attitude(&o.attitude)? * (Matrix3::identity() + strain);
    let q = body.affine_q(&center, &gradient);
    let qdot = body.affine_q(&velocity, &(spin.cross_matrix() * gradient));
    Ok(DeformationState::new(q, qdot))
}

/// The equilibrium state plus a random velocity kick of relative size
/// `magnitude`, followed by a rigid rotation velocity that restores the
/// equilibrium's angular momentum exactly. The kick is reproducible from
/// `seed`.
pub fn perturbed_equilibrium(body: &ReferenceBody, eq: &RelativeEquilibrium, magnitude: f64, seed: u64) -> DeformationState {
    let mut state = eq.state();
    if magnitude == 0.0 {
        return state;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = DVector::from_fn(body.dof(), |_, _| rng.random_range(-1.0..1.0));
    state.qdot += dir.normalize() * (magnitude * eq.omega.norm() * body.mean_radius());

    // ΔL = J δω for the added velocity δω × ζ, with J the inertia about the planet
    let s = body.scalar_gram();
    let ns = s.nrows();
    let mut second = Matrix3::zeros();
    for a in 0..ns {
        for b in 0..ns {
            second += block(&state.q, a) * block(&state.q, b).transpose() * s[(a, b)];
        }
    }
    let inertia = Matrix3::identity() * second.trace() - second;
    let gap = eq.l0 - angular_momentum(body, &state);
    if let Some(inv) = inertia.try_inverse() {
        let dw = inv * gap;
        for m in 0..ns {
            let v = block(&state.qdot, m) + dw.cross(&block(&state.q, m));
            set_block(&mut state.qdot, m, &v);
        }
    }
    state
}
