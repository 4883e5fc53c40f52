//! Equations of motion, time integration and trajectory diagnostics.

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::body::{DeformationState, ReferenceBody};
use crate::dissipation::{dissipation_rate, node_cauchy_green_rates, viscous_force, ViscosityParams};
use crate::energetics::{conservative_force, energy_breakdown, EnergyBreakdown, MaterialParams};
use crate::error::{ensure_positive, Error, Result};

/// `(qdot, qddot)` with `M q̈ = −∇U − g_viscous`.
pub fn equations_of_motion(
    body: &ReferenceBody,
    state: &DeformationState,
    material: &MaterialParams,
    viscosity: &ViscosityParams,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let rhs = generalized_force(body, state, material, viscosity)?;
    Ok((state.qdot.clone(), body.solve_mass(&rhs)))
}

/// Right-hand side `f − g` of the reduced equations.
pub fn generalized_force(
    body: &ReferenceBody,
    state: &DeformationState,
    material: &MaterialParams,
    viscosity: &ViscosityParams,
) -> Result<DVector<f64>> {
    let mut rhs = conservative_force(body, &state.q, material)?;
    if viscosity.eta != 0.0 {
        rhs -= viscous_force(body, state, viscosity);
    }
    Ok(rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Dormand–Prince 5(4) with local error control.
    AdaptiveRk45,
    /// Classical fourth-order Runge–Kutta with step `max_step`.
    FixedRk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_end: f64,
    /// Monitors and states are recorded at multiples of this interval.
    pub record_every: f64,
    /// Integration stops once the barycenter is farther than this.
    #[serde(default = "default_escape_radius")]
    pub escape_radius: f64,
}

fn default_method() -> Method {
    Method::AdaptiveRk45
}
fn default_rel_tol() -> f64 {
    1e-9
}
fn default_abs_tol() -> f64 {
    1e-11
}
fn default_escape_radius() -> f64 {
    1e3
}

impl IntegratorSettings {
    pub fn new(t_end: f64, record_every: f64, max_step: f64) -> Self {
        Self {
            method: default_method(),
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_step,
            t_end,
            record_every,
            escape_radius: default_escape_radius(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("rel_tol", self.rel_tol)?;
        ensure_positive("abs_tol", self.abs_tol)?;
        ensure_positive("max_step", self.max_step)?;
        ensure_positive("t_end", self.t_end)?;
        ensure_positive("record_every", self.record_every)?;
        ensure_positive("escape_radius", self.escape_radius)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    ImpactDetected,
    EscapeDetected,
    StepFailure,
}

/// Quantities recorded alongside each stored state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monitor {
    pub energy: EnergyBreakdown,
    /// Largest `‖Ċ‖` over the quadrature nodes.
    pub cdot_max: f64,
    /// Distance of the barycenter from the planet, `|Y|`.
    pub distance: f64,
    /// Magnitude of the body's spin angular velocity.
    pub spin_rate: f64,
    /// Energy dissipated since `t = 0`.
    pub dissipated: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DeformationState>,
    pub monitors: Vec<Monitor>,
    pub termination: Termination,
    /// Human-readable cause when the run did not complete.
    pub detail: Option<String>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn final_state(&self) -> &DeformationState {
        self.states.last().expect("a trajectory always holds its initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("a trajectory always holds its initial time")
    }

    /// Largest relative energy change `|H(t) − H(0)| / |H(0)|`.
    pub fn max_energy_drift(&self) -> f64 {
        let h0 = self.monitors[0].energy.total;
        self.monitors
            .iter()
            .map(|m| (m.energy.total - h0).abs())
            .fold(0.0, f64::max)
            / h0.abs().max(f64::MIN_POSITIVE)
    }

    /// Largest relative angular-momentum change `‖L(t) − L(0)‖ / ‖L(0)‖`.
    pub fn max_momentum_drift(&self) -> f64 {
        let l0 = self.monitors[0].energy.angular_momentum;
        self.monitors
            .iter()
            .map(|m| (m.energy.angular_momentum - l0).norm())
            .fold(0.0, f64::max)
            / l0.norm().max(f64::MIN_POSITIVE)
    }
}

pub fn monitor(
    body: &ReferenceBody,
    state: &DeformationState,
    material: &MaterialParams,
    viscosity: &ViscosityParams,
    dissipated: f64,
) -> Result<Monitor> {
    let mut energy = energy_breakdown(body, state, material)?;
    energy.dissipation_rate = dissipation_rate(body, state, viscosity);
    let cdot_max = node_cauchy_green_rates(body, state)
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    Ok(Monitor {
        energy,
        cdot_max,
        distance: body.barycenter(&state.q).norm(),
        spin_rate: spin_vector(body, state).norm(),
        dissipated,
    })
}

// Flattened ODE state: [q, qdot, dissipated energy].
struct System<'a> {
    body: &'a ReferenceBody,
    material: &'a MaterialParams,
    viscosity: &'a ViscosityParams,
    n: usize,
}

impl System<'_> {
    fn split(&self, y: &DVector<f64>) -> DeformationState {
        DeformationState {
            q: y.rows(0, self.n).into_owned(),
            qdot: y.rows(self.n, self.n).into_owned(),
        }
    }

    fn join(&self, state: &DeformationState, dissipated: f64) -> DVector<f64> {
        let mut y = DVector::zeros(2 * self.n + 1);
        y.rows_mut(0, self.n).copy_from(&state.q);
        y.rows_mut(self.n, self.n).copy_from(&state.qdot);
        y[2 * self.n] = dissipated;
        y
    }

    fn rhs(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let state = self.split(y);
        let (qdot, qddot) = equations_of_motion(self.body, &state, self.material, self.viscosity)?;
        let mut dy = DVector::zeros(y.len());
        dy.rows_mut(0, self.n).copy_from(&qdot);
        dy.rows_mut(self.n, self.n).copy_from(&qddot);
        dy[2 * self.n] = -dissipation_rate(self.body, &state, self.viscosity);
        Ok(dy)
    }
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the nodes are
// not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

enum StepError {
    Impact(String),
    Rejected(String),
}

fn classify(err: Error) -> StepError {
    match err {
        Error::ImpactProximity { .. } => StepError::Impact(err.to_string()),
        other => StepError::Rejected(other.to_string()),
    }
}

/// One Dormand–Prince step; returns the fifth-order solution, the error
/// estimate and the derivative at the new point.
fn dopri_step(
    sys: &System,
    y: &DVector<f64>,
    k1: &DVector<f64>,
    h: f64,
    stats: &mut StepStats,
) -> std::result::Result<(DVector<f64>, DVector<f64>, DVector<f64>), StepError> {
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    k.push(k1.clone());
    for s in 1..7 {
        let mut ys = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if A[s][j] != 0.0 {
                ys.axpy(h * A[s][j], kj, 1.0);
            }
        }
        stats.rhs_evals += 1;
        k.push(sys.rhs(&ys).map_err(classify)?);
    }
    let mut y5 = y.clone();
    let mut err = DVector::zeros(y.len());
    for s in 0..7 {
        if B5[s] != 0.0 {
            y5.axpy(h * B5[s], &k[s], 1.0);
        }
        err.axpy(h * (B5[s] - B4[s]), &k[s], 1.0);
    }
    let k7 = k.pop().expect("seven stages");
    Ok((y5, err, k7))
}

fn rk4_step(
    sys: &System,
    y: &DVector<f64>,
    h: f64,
    stats: &mut StepStats,
) -> std::result::Result<DVector<f64>, StepError> {
    let k1 = sys.rhs(y).map_err(classify)?;
    let k2 = sys.rhs(&(y + &k1 * (0.5 * h))).map_err(classify)?;
    let k3 = sys.rhs(&(y + &k2 * (0.5 * h))).map_err(classify)?;
    let k4 = sys.rhs(&(y + &k3 * h)).map_err(classify)?;
    stats.rhs_evals += 4;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

fn error_norm(err: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, settings: &IntegratorSettings) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let sc = settings.abs_tol + settings.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Integrates the reduced equations from `state0` up to `settings.t_end`.
///
/// States are recorded at every multiple of `record_every` (the step is
/// shortened to land on them) and at termination. Integration stops early on
/// impact (a node within `impact_radius` of the planet, or the planet inside
/// the deformed body), on escape beyond `escape_radius`, or when the adaptive
/// step falls below `1e-12·t_end`.
pub fn integrate(
    body: &ReferenceBody,
    state0: &DeformationState,
    material: &MaterialParams,
    viscosity: &ViscosityParams,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    material.validate()?;
    viscosity.validate()?;
    state0.check_regular(body)?;

    let sys = System { body, material, viscosity, n: body.dof() };
    let mut y = sys.join(state0, 0.0);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![state0.clone()],
        monitors: vec![monitor(body, state0, material, viscosity, 0.0)?],
        termination: Termination::Completed,
        detail: None,
        stats: StepStats::default(),
    };

    let min_step = 1e-12 * settings.t_end;
    let n_records = (settings.t_end / settings.record_every).ceil() as usize;
    let record_time = |i: usize| (i as f64 * settings.record_every).min(settings.t_end);
    let mut next = 1usize;
    let mut t = 0.0;
    let mut h = match settings.method {
        Method::AdaptiveRk45 => (1e-3 * settings.record_every).min(settings.max_step),
        Method::FixedRk4 => settings.max_step,
    };
    let mut k1 = match settings.method {
        Method::AdaptiveRk45 => {
            traj.stats.rhs_evals += 1;
            sys.rhs(&y)?
        }
        Method::FixedRk4 => DVector::zeros(0),
    };

    while next <= n_records {
        let target = record_time(next);
        let remaining = target - t;
        let lands = h >= remaining;
        let h_try = if lands { remaining } else { h };

        let outcome = match settings.method {
            Method::AdaptiveRk45 => dopri_step(&sys, &y, &k1, h_try, &mut traj.stats).map(|(y5, err, k7)| {
                let e = error_norm(&err, &y, &y5, settings);
                (y5, Some((e, k7)))
            }),
            Method::FixedRk4 => rk4_step(&sys, &y, h_try, &mut traj.stats).map(|y4| (y4, None)),
        };

        let (y_new, control) = match outcome {
            Ok(v) => v,
            Err(StepError::Impact(msg)) => {
                traj.termination = Termination::ImpactDetected;
                traj.detail = Some(msg);
                break;
            }
            Err(StepError::Rejected(msg)) => {
                traj.stats.rejected += 1;
                h = 0.25 * h_try;
                if h < min_step {
                    traj.termination = Termination::StepFailure;
                    traj.detail = Some(msg);
                    break;
                }
                continue;
            }
        };

        if let Some((e, k7)) = control {
            if !e.is_finite() || e > 1.0 {
                traj.stats.rejected += 1;
                let factor = if e.is_finite() { (0.9 * e.powf(-0.2)).clamp(0.2, 1.0) } else { 0.2 };
                h = h_try * factor;
                if h < min_step {
                    traj.termination = Termination::StepFailure;
                    traj.detail = Some(format!("step size {h:e} below minimum at t = {t}"));
                    break;
                }
                continue;
            }
            let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            // A step shortened to hit a record time says little about the next one.
            let proposal = h_try * factor;
            h = if lands { proposal.max(h) } else { proposal };
            h = h.min(settings.max_step);
            k1 = k7;
        }

        traj.stats.accepted += 1;
        t = if lands { target } else { t + h_try };
        y = y_new;
        let state = sys.split(&y);

        if let Some((node, distance)) = closest_node(body, &state) {
            if distance < material.impact_radius {
                traj.termination = Termination::ImpactDetected;
                traj.detail = Some(format!("node {node} at distance {distance:e}"));
                push_record(&mut traj, &sys, t, &y)?;
                return Ok(traj);
            }
        }
        if body.covers(&state.q, &Vector3::zeros()) {
            traj.termination = Termination::ImpactDetected;
            traj.detail = Some(format!("planet inside the deformed body at t = {t}"));
            push_record(&mut traj, &sys, t, &y)?;
            return Ok(traj);
        }
        if lands {
            push_record(&mut traj, &sys, t, &y)?;
            next += 1;
        }
        if body.barycenter(&state.q).norm() > settings.escape_radius {
            traj.termination = Termination::EscapeDetected;
            traj.detail = Some(format!("barycenter beyond {} at t = {t}", settings.escape_radius));
            if !lands {
                push_record(&mut traj, &sys, t, &y)?;
            }
            return Ok(traj);
        }
        if settings.method == Method::FixedRk4 {
            h = settings.max_step;
        }
    }

    if traj.termination != Termination::Completed && *traj.times.last().unwrap() < t {
        push_record(&mut traj, &sys, t, &y)?;
    }
    Ok(traj)
}

fn push_record(traj: &mut Trajectory, sys: &System, t: f64, y: &DVector<f64>) -> Result<()> {
    let state = sys.split(y);
    let dissipated = y[2 * sys.n];
    let m = match monitor(sys.body, &state, sys.material, sys.viscosity, dissipated) {
        Ok(m) => m,
        // Energies are undefined once a node touches the planet; keep the
        // kinematic part of the record.
        Err(_) => Monitor {
            energy: EnergyBreakdown {
                total: f64::NAN,
                gravity: f64::NAN,
                angular_momentum: crate::energetics::angular_momentum(sys.body, &state),
                ..EnergyBreakdown::default()
            },
            cdot_max: f64::NAN,
            distance: sys.body.barycenter(&state.q).norm(),
            spin_rate: spin_vector(sys.body, &state).norm(),
            dissipated,
        },
    };
    traj.times.push(t);
    traj.states.push(state);
    traj.monitors.push(m);
    Ok(())
}

fn closest_node(body: &ReferenceBody, state: &DeformationState) -> Option<(usize, f64)> {
    body.node_positions(&state.q)
        .iter()
        .map(|z| z.norm())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// The same configuration moving with reversed velocities.
pub fn time_reversed(state: &DeformationState) -> DeformationState {
    DeformationState { q: state.q.clone(), qdot: -&state.qdot }
}

/// `(max node ‖Ċ‖, max over node pairs of |d/dt |ζ(x) − ζ(y)||)`.
/// Both vanish exactly for instantaneously rigid motion.
pub fn rigidity_diagnostic(body: &ReferenceBody, state: &DeformationState) -> (f64, f64) {
    let cdot = node_cauchy_green_rates(body, state)
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    let z = body.node_positions(&state.q);
    let v = body.node_positions(&state.qdot);
    let mut drift: f64 = 0.0;
    for a in 0..z.len() {
        for b in (a + 1)..z.len() {
            let d = z[a] - z[b];
            let len = d.norm();
            if len > 0.0 {
                drift = drift.max((d.dot(&(v[a] - v[b])) / len).abs());
            }
        }
    }
    (cdot, drift)
}

/// Best rigid factorization `ζ(x) ≈ R (x + Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComovingFrame {
    pub rotation: Matrix3<f64>,
    /// Planet-to-body offset expressed in the body frame.
    pub offset: Vector3<f64>,
    /// Root mean square (mass-weighted) misfit of the rigid model.
    pub residual: f64,
}

/// Mass-weighted orthogonal Procrustes fit of the node images against the
/// reference nodes.
pub fn comoving_decomposition(body: &ReferenceBody, state: &DeformationState) -> ComovingFrame {
    let z = body.node_positions(&state.q);
    let c = body.barycenter(&state.q);
    let rho = body.density();
    let mut cross = Matrix3::zeros();
    for (zk, n) in z.iter().zip(body.nodes()) {
        cross += (zk - c) * n.point.transpose() * (rho * n.weight);
    }
    let rotation = nearest_rotation(&cross);
    let misfit: f64 = z
        .iter()
        .zip(body.nodes())
        .map(|(zk, n)| rho * n.weight * (zk - c - rotation * n.point).norm_squared())
        .sum();
    ComovingFrame {
        rotation,
        offset: rotation.transpose() * c,
        residual: (misfit / body.mass()).sqrt(),
    }
}

/// The rotation `R` maximizing `tr(Rᵀ H)`.
pub fn nearest_rotation(h: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

/// Barycenter position and velocity.
pub fn barycenter_motion(body: &ReferenceBody, state: &DeformationState) -> (Vector3<f64>, Vector3<f64>) {
    (body.barycenter(&state.q), body.barycenter(&state.qdot))
}

/// Spin angular velocity about the barycenter: `I_c⁻¹ L_c`, the least-squares
/// rigid rotation rate of the velocity field.
pub fn spin_vector(body: &ReferenceBody, state: &DeformationState) -> Vector3<f64> {
    let (c, cdot) = barycenter_motion(body, state);
    let z = body.node_positions(&state.q);
    let v = body.node_positions(&state.qdot);
    let rho = body.density();
    let mut inertia = Matrix3::zeros();
    let mut l = Vector3::zeros();
    for ((zk, vk), n) in z.iter().zip(&v).zip(body.nodes()) {
        let d = zk - c;
        let w = rho * n.weight;
        inertia += (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * w;
        l += d.cross(&(vk - cdot)) * w;
    }
    inertia.try_inverse().map(|i| i * l).unwrap_or_else(Vector3::zeros)
}

/// Orbital angular velocity of the barycenter about the planet.
pub fn orbital_rate_vector(body: &ReferenceBody, state: &DeformationState) -> Vector3<f64> {
    let (c, cdot) = barycenter_motion(body, state);
    let r2 = c.norm_squared();
    if r2 == 0.0 {
        Vector3::zeros()
    } else {
        c.cross(&cdot) / r2
    }
}
