//! Result files and the run manifest.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! recovers every value bit for bit. Everything except the manifest (which
//! records wall time) is a pure function of the scenario file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tidelock::Trajectory;

use crate::CliError;

/// Frozen column order of the monitors file.
pub const MONITOR_COLUMNS: [&str; 13] =
    ["t", "K", "U_g", "U_sg", "U_e", "H", "Lx", "Ly", "Lz", "diss_rate", "Cdot_max", "|Y|", "|omega|"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// One line per recorded state.
pub fn monitors_csv(traj: &Trajectory) -> String {
    let mut out = MONITOR_COLUMNS.join(",");
    out.push('\n');
    for (t, m) in traj.times.iter().zip(&traj.monitors) {
        let e = &m.energy;
        let l = &e.angular_momentum;
        let row = [
            *t,
            e.kinetic,
            e.gravity,
            e.self_gravity,
            e.elastic,
            e.total,
            l.x,
            l.y,
            l.z,
            e.dissipation_rate,
            m.cdot_max,
            m.distance,
            m.spin_rate,
        ];
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:e}");
        }
        out.push('\n');
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Drift {
    /// Largest `|H(t) − H(0)| / |H(0)|`.
    pub energy: f64,
    /// Largest `|H(t) + D(t) − H(0)| / |H(0)|`, with `D` the dissipated energy.
    pub energy_balance: f64,
    /// Largest `‖L(t) − L(0)‖ / ‖L(0)‖`.
    pub angular_momentum: f64,
}

impl Drift {
    pub fn of(traj: &Trajectory) -> Self {
        let h0 = traj.monitors[0].energy.total;
        let balance = traj
            .monitors
            .iter()
            .map(|m| (m.energy.total + m.dissipated - h0).abs() / h0.abs())
            .fold(0.0, f64::max);
        Self { energy: traj.max_energy_drift(), energy_balance: balance, angular_momentum: traj.max_momentum_drift() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub document: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub wall_time_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<Drift>,
    pub files: Vec<FileEntry>,
}

/// Collects output files and writes them, then the manifest.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(FileEntry { path: name.into(), sha256: sha256_hex(contents.as_bytes()), bytes: contents.len() });
        log::info!("wrote {}", path.display());
        Ok(())
    }

    pub fn finish(self, mut manifest: Manifest) -> Result<(), CliError> {
        manifest.files = self.files;
        let text = to_json(&manifest)?;
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}
