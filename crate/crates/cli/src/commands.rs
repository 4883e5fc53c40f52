//! The four subcommands. Each reads one scenario file and writes its results
//! and a manifest into the output directory.

use std::f64::consts::TAU;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use tidelock::classifier::{classify_outcome, windowed_dissipation, Outcome, Thresholds};
use tidelock::dynamics::{orbital_rate_vector, StepStats};
use tidelock::equilibria::{
    nondegeneracy_spectrum, rigid_quadrupole_catalog, rigid_residual_recheck, rotation_consistency, RelativeEquilibrium,
    RigidBodyModel, RigidRelativeEquilibrium,
};
use tidelock::{integrate, ReferenceBody, Termination, Trajectory};

use crate::output::{monitors_csv, sha256_hex, to_json, Drift, Manifest, OutputDir};
use crate::scenario::{Scenario, SweepParameter, SCHEMA_VERSION};
use crate::CliError;

/// A finished simulation and its classification.
pub struct Run {
    pub body: ReferenceBody,
    pub trajectory: Trajectory,
    pub outcome: Outcome,
}

/// Integrates the scenario's initial state and classifies the result.
pub fn run_scenario(scenario: &Scenario) -> Result<Run, CliError> {
    let body = scenario.build_body()?;
    let settings = scenario.integrator()?;
    let start = scenario.initial_state(&body)?;
    let trajectory = integrate(&body, &start, &scenario.material, &scenario.viscosity, settings)?;
    log::info!(
        "{}: {:?} at t = {} after {} steps",
        scenario.label(),
        trajectory.termination,
        trajectory.final_time(),
        trajectory.stats.accepted
    );
    let outcome = classify_outcome(&body, &scenario.material, &trajectory, &scenario.thresholds, &scenario.solver);
    log::info!("{}: outcome {}", scenario.label(), outcome.label());
    Ok(Run { body, trajectory, outcome })
}

#[derive(Debug, Clone, Serialize)]
pub struct DissipationWindows {
    /// Window length: the orbital period at the end of the run.
    pub window: f64,
    /// Energy dissipated in each full window.
    pub values: Vec<f64>,
}

impl DissipationWindows {
    pub fn of(run: &Run) -> Option<Self> {
        let n = orbital_rate_vector(&run.body, run.trajectory.final_state()).norm();
        if !(n > 0.0 && n.is_finite()) {
            return None;
        }
        let window = TAU / n;
        Some(Self { window, values: windowed_dissipation(&run.trajectory, window) })
    }
}

#[derive(Serialize)]
struct OutcomeDocument<'a> {
    schema_version: u32,
    document: &'static str,
    scenario: String,
    seed: u64,
    termination: Termination,
    detail: Option<&'a str>,
    final_time: f64,
    records: usize,
    steps: StepStats,
    thresholds: &'a Thresholds,
    outcome: &'a Outcome,
    dissipation_windows: Option<DissipationWindows>,
}

fn manifest(command: &str, config: &Path, bytes: &[u8], started: Instant, drift: Option<Drift>) -> Manifest {
    Manifest {
        schema_version: SCHEMA_VERSION,
        document: "manifest",
        tool: "tidelock",
        version: env!("CARGO_PKG_VERSION"),
        command: command.into(),
        config_path: config.display().to_string(),
        config_sha256: sha256_hex(bytes),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        drift,
        files: Vec::new(),
    }
}

/// `simulate`: writes `monitors.csv`, `outcome.json` and `manifest.json`.
pub fn cmd_simulate(config: &Path, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let (scenario, bytes) = Scenario::load(config)?;
    let run = run_scenario(&scenario)?;
    let traj = &run.trajectory;
    let doc = OutcomeDocument {
        schema_version: SCHEMA_VERSION,
        document: "outcome",
        scenario: scenario.label(),
        seed: scenario.seed,
        termination: traj.termination,
        detail: traj.detail.as_deref(),
        final_time: traj.final_time(),
        records: traj.times.len(),
        steps: traj.stats,
        thresholds: &scenario.thresholds,
        outcome: &run.outcome,
        dissipation_windows: DissipationWindows::of(&run),
    };
    let mut dir = OutputDir::create(out)?;
    dir.write("monitors.csv", &monitors_csv(traj))?;
    dir.write("outcome.json", &to_json(&doc)?)?;
    let drift = Drift::of(traj);
    log::info!("energy drift {:e}, balance {:e}, momentum drift {:e}", drift.energy, drift.energy_balance, drift.angular_momentum);
    dir.finish(manifest("simulate", config, &bytes, started, Some(drift)))
}

#[derive(Serialize)]
struct EquilibriumRecord<'a> {
    /// Barycenter distance from the planet.
    radius: f64,
    /// `√(kM/r³)` at that distance.
    kepler_rate: f64,
    /// `‖q̈ − ω̂²q‖` when the state is integrated with the scenario's viscosity.
    rotation_consistency: f64,
    #[serde(flatten)]
    equilibrium: &'a RelativeEquilibrium,
}

#[derive(Serialize)]
struct EquilibriaDocument<'a> {
    schema_version: u32,
    document: &'static str,
    scenario: String,
    records: Vec<EquilibriumRecord<'a>>,
}

/// `equilibria`: solves from the synchronous guess and writes
/// `equilibria.json`.
pub fn cmd_equilibria(config: &Path, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let (scenario, bytes) = Scenario::load(config)?;
    let spec = scenario.equilibrium.clone().ok_or_else(|| CliError::Config("missing [equilibrium] section".into()))?;
    let body = scenario.build_body()?;
    let eq = scenario.solve_equilibrium(&body, spec.radius, &scenario.equilibrium_attitude()?, spec.omega_scale)?;
    // the solver certifies with its own options; recompute so the document
    // reflects exactly the spectrum routine
    let spectrum = nondegeneracy_spectrum(&body, &eq, &scenario.material, &scenario.solver)?;
    let eq = RelativeEquilibrium { nondegenerate: spectrum.nondegenerate, spectrum, ..eq };
    log::info!(
        "converged in {} iterations, residual {:e}, nondegenerate {}",
        eq.iterations,
        eq.residual,
        eq.nondegenerate
    );
    let radius = body.barycenter(&eq.q).norm();
    let record = EquilibriumRecord {
        radius,
        kepler_rate: (scenario.material.k_m / radius.powi(3)).sqrt(),
        rotation_consistency: rotation_consistency(&body, &eq, &scenario.material, &scenario.viscosity)?,
        equilibrium: &eq,
    };
    let doc = EquilibriaDocument {
        schema_version: SCHEMA_VERSION,
        document: "equilibria",
        scenario: scenario.label(),
        records: vec![record],
    };
    let mut dir = OutputDir::create(out)?;
    dir.write("equilibria.json", &to_json(&doc)?)?;
    dir.finish(manifest("equilibria", config, &bytes, started, None))
}

#[derive(Serialize)]
struct CatalogRecord<'a> {
    index: usize,
    /// Residual of the critical-point equations recomputed by finite
    /// differences of the augmented potential.
    recheck: f64,
    kepler_deviation: f64,
    #[serde(flatten)]
    entry: &'a RigidRelativeEquilibrium,
}

#[derive(Serialize)]
struct CatalogDocument<'a> {
    schema_version: u32,
    document: &'static str,
    scenario: String,
    model: RigidBodyModel,
    count: usize,
    records: Vec<CatalogRecord<'a>>,
}

/// `catalog`: the rigid quadrupole catalog, written to `catalog.json`.
pub fn cmd_catalog(config: &Path, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let (scenario, bytes) = Scenario::load(config)?;
    let model = scenario.rigid_model()?;
    let catalog = rigid_quadrupole_catalog(&model)?;
    let records: Vec<_> = catalog
        .iter()
        .enumerate()
        .map(|(index, entry)| CatalogRecord {
            index,
            recheck: rigid_residual_recheck(&model, entry),
            kepler_deviation: entry.kepler_deviation(&model),
            entry,
        })
        .collect();
    log::info!("{} catalog entries", records.len());
    let doc = CatalogDocument {
        schema_version: SCHEMA_VERSION,
        document: "catalog",
        scenario: scenario.label(),
        model,
        count: records.len(),
        records,
    };
    let mut dir = OutputDir::create(out)?;
    dir.write("catalog.json", &to_json(&doc)?)?;
    dir.finish(manifest("catalog", config, &bytes, started, None))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub seed: u64,
    pub outcome: String,
    pub final_time: f64,
    pub record: Outcome,
}

/// A maximal run of consecutive points with the same outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub outcome: String,
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub parameter: SweepParameter,
    pub unbounded: usize,
    pub impact: usize,
    pub synchronous_capture: usize,
    pub undetermined: usize,
    pub bands: Vec<Band>,
}

pub fn summarize(parameter: SweepParameter, points: &[SweepPoint]) -> SweepSummary {
    let count = |label: &str| points.iter().filter(|p| p.outcome == label).count();
    let mut bands: Vec<Band> = Vec::new();
    for p in points {
        match bands.last_mut() {
            Some(b) if b.outcome == p.outcome => {
                b.to = p.value;
                b.points += 1;
            }
            _ => bands.push(Band { outcome: p.outcome.clone(), from: p.value, to: p.value, points: 1 }),
        }
    }
    SweepSummary {
        parameter,
        unbounded: count("unbounded"),
        impact: count("impact"),
        synchronous_capture: count("synchronous_capture"),
        undetermined: count("undetermined"),
        bands,
    }
}

#[derive(Serialize)]
struct SweepDocument<'a> {
    schema_version: u32,
    document: &'static str,
    scenario: String,
    summary: &'a SweepSummary,
    points: &'a [SweepPoint],
}

/// Runs every sweep point on a pool of `n_workers` threads. Point `i` uses
/// seed `seed + i`, so the results do not depend on the pool size.
pub fn run_sweep(scenario: &Scenario, n_workers: usize) -> Result<(SweepSummary, Vec<SweepPoint>), CliError> {
    let spec = scenario.sweep.as_ref().ok_or_else(|| CliError::Config("missing [sweep] section".into()))?;
    let values = spec.points()?;
    let variants = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut s = scenario.with_parameter(spec.parameter, v)?;
            s.seed = scenario.seed.wrapping_add(i as u64);
            Ok(s)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n_workers.max(1))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let points: Vec<SweepPoint> = pool.install(|| {
        variants
            .par_iter()
            .enumerate()
            .map(|(index, s)| {
                let (record, final_time) = match run_scenario(s) {
                    Ok(run) => (run.outcome, run.trajectory.final_time()),
                    Err(e @ CliError::Numeric(_)) => {
                        (Outcome::Undetermined { reason: format!("numeric failure: {e}"), metrics: None }, 0.0)
                    }
                    Err(e) => (Outcome::Undetermined { reason: e.to_string(), metrics: None }, 0.0),
                };
                SweepPoint {
                    index,
                    value: values[index],
                    seed: s.seed,
                    outcome: record.label().into(),
                    final_time,
                    record,
                }
            })
            .collect()
    });
    Ok((summarize(spec.parameter, &points), points))
}

/// `sweep`: writes `sweep.json` (summary and every outcome) and `sweep.csv`.
pub fn cmd_sweep(config: &Path, out: &Path, n_workers: usize) -> Result<(), CliError> {
    let started = Instant::now();
    let (scenario, bytes) = Scenario::load(config)?;
    let (summary, points) = run_sweep(&scenario, n_workers)?;
    for b in &summary.bands {
        log::info!("{} for {} in [{}, {}] ({} points)", b.outcome, serde_json::to_string(&summary.parameter).unwrap_or_default(), b.from, b.to, b.points);
    }
    let doc = SweepDocument {
        schema_version: SCHEMA_VERSION,
        document: "sweep",
        scenario: scenario.label(),
        summary: &summary,
        points: &points,
    };
    let mut csv = String::from("index,value,seed,outcome,final_time\n");
    for p in &points {
        csv.push_str(&format!("{},{:e},{},{},{:e}\n", p.index, p.value, p.seed, p.outcome, p.final_time));
    }
    let mut dir = OutputDir::create(out)?;
    dir.write("sweep.json", &to_json(&doc)?)?;
    dir.write("sweep.csv", &csv)?;
    dir.finish(manifest("sweep", config, &bytes, started, None))
}
