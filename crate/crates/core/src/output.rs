//! CSV and manifest writers.
//!
//! Floats are written with 17 significant digits so that every value
//! round-trips exactly; lines end with `\n`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::dynamics::{Diagnostics, Snapshot};
use crate::energy::GammaRow;
use crate::error::Result;
use crate::geometry::GeometryRow;
use crate::grid::Grid;

pub const DIAGNOSTICS_HEADER: &str =
    "step,t,max_h,max_step_diff,total_mass,min_rho_a,min_rho_i,ripping_flux,weighted_density_spread";
pub const SNAPSHOT_HEADER: &str = "x,y,h,rho_a,rho_i";
pub const SWEEP_HEADER: &str = "peak_pressure,max_h";
pub const GAMMA_HEADER: &str = "theta,J_theta,J0,gap,minimizer_distance";
pub const GEOMETRY_HEADER: &str = "kind,variant,R,l,formula,fd_value,rel_err,stability";

/// `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}

fn write_lines(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    for row in rows {
        w.write_all(row.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics_csv(path: &Path, diagnostics: &Diagnostics) -> Result<()> {
    write_lines(
        path,
        DIAGNOSTICS_HEADER,
        diagnostics.records.iter().map(|r| {
            format!(
                "{},{}",
                r.step,
                join(&[
                    r.t,
                    r.max_h,
                    r.max_step_diff,
                    r.total_mass,
                    r.min_rho_a,
                    r.min_rho_i,
                    r.ripping_flux,
                    r.weighted_density_spread,
                ])
            )
        }),
    )
}

/// Per-node fields in row-major node order.
pub fn write_fields_csv(path: &Path, grid: &Grid, h: &[f64], rho_a: &[f64], rho_i: &[f64]) -> Result<()> {
    write_lines(
        path,
        SNAPSHOT_HEADER,
        grid.node_coords()
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| join(&[x, y, h[k], rho_a[k], rho_i[k]])),
    )
}

pub fn write_snapshot_csv(path: &Path, grid: &Grid, snapshot: &Snapshot) -> Result<()> {
    write_fields_csv(path, grid, &snapshot.h, &snapshot.rho_a, &snapshot.rho_i)
}

/// File name of the snapshot taken after `step`.
pub fn snapshot_file_name(step: usize) -> String {
    format!("snapshot_{step:05}.csv")
}

pub fn write_sweep_csv(path: &Path, samples: &[(f64, f64)]) -> Result<()> {
    write_lines(path, SWEEP_HEADER, samples.iter().map(|&(p, h)| join(&[p, h])))
}

pub fn write_gamma_csv(path: &Path, rows: &[GammaRow]) -> Result<()> {
    write_lines(
        path,
        GAMMA_HEADER,
        rows.iter()
            .map(|r| join(&[r.theta, r.j_theta, r.j0, r.gap, r.minimizer_distance])),
    )
}

pub fn write_geometry_csv(path: &Path, rows: &[GeometryRow]) -> Result<()> {
    write_lines(
        path,
        GEOMETRY_HEADER,
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                r.kind.name(),
                r.variant.name(),
                fmt_f64(r.radius),
                r.mode,
                join(&[r.formula, r.fd_value, r.rel_err, r.stability])
            )
        }),
    )
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ScenarioConfig,
    pub version: String,
    pub wall_time_seconds: f64,
    /// Output files relative to the output directory.
    pub outputs: Vec<String>,
    /// Scenario-specific results.
    pub summary: serde_json::Value,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
