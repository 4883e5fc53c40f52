//! Long-time outcome of a dissipative trajectory.
//!
//! With positive viscosity every bounded motion that avoids the planet
//! approaches the set where the body moves rigidly, and on that set the
//! orbital and spin rates lock. A finite run is therefore sorted into one of
//! escape, impact or synchronous capture, with an explicit `Undetermined`
//! when the data do not settle the question.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::body::{DeformationState, ReferenceBody};
use crate::dynamics::{comoving_decomposition, orbital_rate_vector, spin_vector, Termination, Trajectory};
use crate::energetics::{angular_momentum, MaterialParams};
use crate::equilibria::{group_orbit_distance, solve_relative_equilibrium, EquilibriumGuess, RelativeEquilibrium, SolverOptions};
use crate::error::{ensure_positive, Error, Result};

/// Acceptance thresholds for synchronous capture. All are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Bound on the tail mean of `max ‖Ċ‖ / n`, with `n` the orbital rate.
    #[serde(default = "default_small")]
    pub cdot_max: f64,
    /// Bound on the tail mean of `||Ω_spin| − |Ω_orbit|| / n`.
    #[serde(default = "default_gap")]
    pub spin_orbit_gap: f64,
    /// Bound on the drift rate of the comoving offset, `|Ẏ| / (n|Y|)`.
    #[serde(default = "default_small")]
    pub y_drift: f64,
    /// Bound on the relative distance of the final state to the matched
    /// equilibrium's group orbit.
    #[serde(default = "default_small")]
    pub shape_residual: f64,
    /// Length of the tail window in orbital periods.
    #[serde(default = "default_tail")]
    pub tail_periods: f64,
    /// Barycenter distance beyond which a positive-energy orbit counts as escaped.
    #[serde(default = "default_escape")]
    pub escape_radius: f64,
}

fn default_small() -> f64 {
    1e-6
}
fn default_gap() -> f64 {
    1e-3
}
fn default_tail() -> f64 {
    5.0
}
fn default_escape() -> f64 {
    1e3
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            cdot_max: default_small(),
            spin_orbit_gap: default_gap(),
            y_drift: default_small(),
            shape_residual: default_small(),
            tail_periods: default_tail(),
            escape_radius: default_escape(),
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("cdot_max", self.cdot_max)?;
        ensure_positive("spin_orbit_gap", self.spin_orbit_gap)?;
        ensure_positive("y_drift", self.y_drift)?;
        ensure_positive("shape_residual", self.shape_residual)?;
        ensure_positive("tail_periods", self.tail_periods)?;
        ensure_positive("escape_radius", self.escape_radius)
    }
}

/// Rigidity and synchronism measured over the tail of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureMetrics {
    /// Orbital rate `n` at the end of the run.
    pub orbital_rate: f64,
    pub cdot_max: f64,
    pub spin_orbit_gap: f64,
    pub y_drift: f64,
    /// `None` until an equilibrium has been matched.
    pub shape_residual: Option<f64>,
    pub tail_start: f64,
    pub samples: usize,
}

impl CaptureMetrics {
    /// Names of the metrics at or above their thresholds. A missing shape
    /// residual counts as a violation.
    pub fn violations(&self, thresholds: &Thresholds) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !(self.cdot_max < thresholds.cdot_max) {
            out.push("cdot_max");
        }
        if !(self.spin_orbit_gap < thresholds.spin_orbit_gap) {
            out.push("spin_orbit_gap");
        }
        if !(self.y_drift < thresholds.y_drift) {
            out.push("y_drift");
        }
        if !self.shape_residual.is_some_and(|r| r < thresholds.shape_residual) {
            out.push("shape_residual");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// Barycenter beyond the escape radius on a hyperbolic orbit.
    Unbounded { t_escape: f64, escape_energy: f64 },
    /// Some material point reached the planet.
    Impact { t_impact: f64, detail: Option<String> },
    /// Rigid, spin-orbit locked motion near a relative equilibrium.
    SynchronousCapture { equilibrium: Box<RelativeEquilibrium>, metrics: CaptureMetrics },
    Undetermined { reason: String, metrics: Option<CaptureMetrics> },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Unbounded { .. } => "unbounded",
            Outcome::Impact { .. } => "impact",
            Outcome::SynchronousCapture { .. } => "synchronous_capture",
            Outcome::Undetermined { .. } => "undetermined",
        }
    }
}

/// Two-body energy of the barycenter, `½ m |ċ|² − kM m / |c|`.
pub fn orbital_energy(body: &ReferenceBody, state: &DeformationState, material: &MaterialParams) -> f64 {
    let c = body.barycenter(&state.q);
    let v = body.barycenter(&state.qdot);
    let m = body.mass();
    0.5 * m * v.norm_squared() - material.k_m * m / c.norm()
}

/// Tail-window metrics, averaged over the records of the last
/// `tail_periods` orbital periods. The shape residual is filled in when an
/// equilibrium is given.
///
/// Fails with [`Error::InsufficientData`] when the run is shorter than the
/// window or holds fewer than ten records in it.
pub fn capture_metrics(
    body: &ReferenceBody,
    traj: &Trajectory,
    equilibrium: Option<&RelativeEquilibrium>,
    thresholds: &Thresholds,
) -> Result<CaptureMetrics> {
    let last = traj.final_state();
    let n = orbital_rate_vector(body, last).norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::InsufficientData("no orbital motion at the end of the run".into()));
    }
    let window = thresholds.tail_periods * std::f64::consts::TAU / n;
    let t_end = traj.final_time();
    let tail_start = t_end - window;
    if tail_start < traj.times[0] {
        return Err(Error::InsufficientData(format!(
            "run of length {t_end} is shorter than the tail window {window}"
        )));
    }
    let idx: Vec<usize> = (0..traj.times.len()).filter(|&i| traj.times[i] >= tail_start).collect();
    if idx.len() < 10 {
        return Err(Error::InsufficientData(format!("{} records in the tail window", idx.len())));
    }

    let mut cdot = 0.0;
    let mut gap = 0.0;
    let mut offsets = Vec::with_capacity(idx.len());
    for &i in &idx {
        let state = &traj.states[i];
        let orbit = orbital_rate_vector(body, state).norm();
        cdot += traj.monitors[i].cdot_max / orbit;
        gap += (spin_vector(body, state).norm() - orbit).abs() / orbit;
        offsets.push(comoving_decomposition(body, state).offset);
    }
    let count = idx.len() as f64;

    // least-squares slope of the comoving offset
    let times: Vec<f64> = idx.iter().map(|&i| traj.times[i]).collect();
    let t_mean = times.iter().sum::<f64>() / count;
    let y_mean = offsets.iter().sum::<Vector3<f64>>() / count;
    let mut num = Vector3::zeros();
    let mut den = 0.0;
    for (t, y) in times.iter().zip(&offsets) {
        num += (y - y_mean) * (t - t_mean);
        den += (t - t_mean).powi(2);
    }
    let y_drift = (num / den).norm() / (n * y_mean.norm());

    Ok(CaptureMetrics {
        orbital_rate: n,
        cdot_max: cdot / count,
        spin_orbit_gap: gap / count,
        y_drift,
        shape_residual: equilibrium.map(|eq| group_orbit_distance(body, last, eq)),
        tail_start,
        samples: idx.len(),
    })
}

/// Energy dissipated in consecutive windows of length `window`, from the
/// recorded cumulative dissipation. Trailing partial windows are dropped.
pub fn windowed_dissipation(traj: &Trajectory, window: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut edge = traj.times[0] + window;
    for (i, &t) in traj.times.iter().enumerate() {
        if t >= edge - 1e-9 * window {
            out.push(traj.monitors[i].dissipated - traj.monitors[start].dissipated);
            start = i;
            edge += window;
        }
    }
    out
}

/// Sorts a finished trajectory into the trichotomy.
///
/// Impact and escape are read off the termination and the final orbital
/// energy. Capture requires the tail metrics to pass and a relative
/// equilibrium, solved from the final state at the trajectory's angular
/// momentum, to lie on the final state's group orbit.
pub fn classify_outcome(
    body: &ReferenceBody,
    material: &MaterialParams,
    traj: &Trajectory,
    thresholds: &Thresholds,
    solver: &SolverOptions,
) -> Outcome {
    let last = traj.final_state();
    match traj.termination {
        Termination::ImpactDetected => {
            return Outcome::Impact { t_impact: traj.final_time(), detail: traj.detail.clone() };
        }
        Termination::StepFailure => {
            return Outcome::Undetermined {
                reason: format!("integration failed: {}", traj.detail.as_deref().unwrap_or("step failure")),
                metrics: None,
            };
        }
        Termination::EscapeDetected | Termination::Completed => {}
    }

    if body.barycenter(&last.q).norm() > thresholds.escape_radius {
        let escape_energy = orbital_energy(body, last, material);
        if escape_energy > 0.0 {
            return Outcome::Unbounded { t_escape: traj.final_time(), escape_energy };
        }
        return Outcome::Undetermined {
            reason: format!("beyond the escape radius on a bound orbit (energy {escape_energy:e})"),
            metrics: None,
        };
    }

    let mut metrics = match capture_metrics(body, traj, None, thresholds) {
        Ok(m) => m,
        Err(e) => return Outcome::Undetermined { reason: e.to_string(), metrics: None },
    };
    let pending: Vec<_> = metrics.violations(thresholds).into_iter().filter(|v| *v != "shape_residual").collect();
    if !pending.is_empty() {
        return Outcome::Undetermined {
            reason: format!("thresholds not met: {}", pending.join(", ")),
            metrics: Some(metrics),
        };
    }

    let l0 = angular_momentum(body, last);
    let guess = EquilibriumGuess { q: last.q.clone(), omega: orbital_rate_vector(body, last) };
    let eq = match solve_relative_equilibrium(body, material, &l0, &guess, solver) {
        Ok(eq) => eq,
        Err(e) => {
            return Outcome::Undetermined {
                reason: format!("no relative equilibrium near the final state: {e}"),
                metrics: Some(metrics),
            }
        }
    };
    metrics.shape_residual = Some(group_orbit_distance(body, last, &eq));
    if metrics.violations(thresholds).is_empty() {
        Outcome::SynchronousCapture { equilibrium: Box::new(eq), metrics }
    } else {
        Outcome::Undetermined {
            reason: "final state is not on the matched equilibrium's group orbit".into(),
            metrics: Some(metrics),
        }
    }
}
