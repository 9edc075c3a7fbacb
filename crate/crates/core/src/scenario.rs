//! Scenario dispatch and the pressure sweep.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{InitialCondition, ScenarioConfig, ScenarioKind};
use crate::dynamics::{initial_state, Simulation, SimulationOutput, Stepper};
use crate::energy::gamma_ladder;
use crate::error::{Error, Result};
use crate::geometry::{geometry_report, GeometryRow, SurfaceKind, FormulaVariant};
use crate::grid::{build_grid, Grid};
use crate::model::{pressure_pulse, PressureDescriptor, PressureField};
use crate::output::{self, Manifest};

/// Centre and radius of the sweep pulse. Non-pulse configs use the default shape.
fn pulse_shape(config: &ScenarioConfig) -> ([f64; 2], f64) {
    match config.pressure {
        PressureDescriptor::Pulse { center, radius, .. } => (center, radius),
        _ => ([0.5, 0.5], 0.4),
    }
}

/// `max_h` after `config.sweep.steps` steps under a pulse with the given peak.
pub fn sweep_point(config: &ScenarioConfig, grid: &Grid, peak: f64) -> Result<f64> {
    let (center, radius) = pulse_shape(config);
    let pressure = pressure_pulse(grid, peak, (center[0], center[1]), radius);
    let stepper = Stepper::new(grid, &config.params, &pressure, config.scheme, config.tau, &config.solver)?;
    let mut state = initial_state(config, grid)?;
    for _ in 0..config.sweep.steps {
        state = stepper.step(&state)?;
    }
    Ok(state.max_h())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    /// `(peak_pressure, max_h)` in input order.
    pub samples: Vec<(f64, f64)>,
    /// Smallest peak known to trigger, within the bisection tolerance.
    pub critical_pressure: Option<f64>,
    pub bracket: Option<[f64; 2]>,
    /// `(peak_pressure, max_h)` of every bisection evaluation.
    pub bisection: Vec<(f64, f64)>,
}

impl SweepOutcome {
    pub fn found(&self) -> bool {
        self.critical_pressure.is_some()
    }
}

pub const NO_CRITICAL_PRESSURE: &str = "no critical pressure in range";

/// Samples the peak range on `workers` threads, then bisects the first crossing of `h*`.
pub fn pressure_sweep(config: &ScenarioConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let grid = build_grid(config.n)?;
    let s = &config.sweep;
    let h_star = config.params.critical_height;
    let peaks: Vec<f64> = (0..s.samples)
        .map(|k| s.min_peak + (s.max_peak - s.min_peak) * k as f64 / (s.samples - 1) as f64)
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let heights: Vec<f64> = pool.install(|| {
        peaks
            .par_iter()
            .map(|&p| sweep_point(config, &grid, p))
            .collect::<Result<Vec<_>>>()
    })?;
    let samples: Vec<(f64, f64)> = peaks.iter().copied().zip(heights).collect();

    let mut outcome = SweepOutcome {
        samples,
        critical_pressure: None,
        bracket: None,
        bisection: Vec::new(),
    };
    let Some(first) = outcome.samples.iter().position(|&(_, h)| h > h_star) else {
        return Ok(outcome);
    };
    if first == 0 {
        let p = outcome.samples[0].0;
        outcome.critical_pressure = Some(p);
        outcome.bracket = Some([p, p]);
        return Ok(outcome);
    }
    let (mut lo, mut hi) = (outcome.samples[first - 1].0, outcome.samples[first].0);
    while hi - lo > s.tolerance {
        let mid = 0.5 * (lo + hi);
        let h = sweep_point(config, &grid, mid)?;
        outcome.bisection.push((mid, h));
        if h > h_star {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    outcome.critical_pressure = Some(hi);
    outcome.bracket = Some([lo, hi]);
    Ok(outcome)
}

/// `max h` inside `B_R(m)` divided by `max h` outside it.
pub fn inside_outside_ratio(grid: &Grid, h: &[f64], center: [f64; 2], radius: f64) -> f64 {
    let (mut inside, mut outside) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (&(x, y), &v) in grid.node_coords().iter().zip(h) {
        if (x - center[0]).hypot(y - center[1]) < radius {
            inside = inside.max(v);
        } else {
            outside = outside.max(v);
        }
    }
    inside / outside
}

/// What a finished run wrote.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    /// Set when the run succeeded without producing its headline result.
    pub flag: Option<String>,
}

/// Runs `config` and writes its outputs and manifest into `out_dir`.
///
/// Simulation scenarios that fail part way still flush the diagnostics
/// recorded so far before the error is returned.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    let result = match config.scenario {
        ScenarioKind::StationaryState | ScenarioKind::Disruption => run_simulation(config, out_dir, &mut outputs),
        ScenarioKind::PressureSweep => run_sweep(config, out_dir, &mut outputs),
        ScenarioKind::GammaLimit => run_gamma(config, out_dir, &mut outputs),
        ScenarioKind::GeometryVerify => run_geometry(config, out_dir, &mut outputs),
    };
    let (summary, flag) = match &result {
        Ok((summary, flag)) => (summary.clone(), flag.clone()),
        Err(e) => (json!({ "error": e.to_string() }), None),
    };
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs: outputs.clone(),
        summary: summary.clone(),
    };
    output::write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    result?;
    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        outputs,
        summary,
        flag,
    })
}

type Summary = (serde_json::Value, Option<String>);

fn write_simulation(grid: &Grid, out: &SimulationOutput, out_dir: &Path, outputs: &mut Vec<String>) -> Result<()> {
    output::write_diagnostics_csv(&out_dir.join("diagnostics.csv"), &out.diagnostics)?;
    outputs.push("diagnostics.csv".into());
    for snap in &out.snapshots {
        let name = output::snapshot_file_name(snap.step);
        output::write_snapshot_csv(&out_dir.join(&name), grid, snap)?;
        outputs.push(name);
    }
    Ok(())
}

fn run_simulation(config: &ScenarioConfig, out_dir: &Path, outputs: &mut Vec<String>) -> Result<Summary> {
    let grid = build_grid(config.n)?;
    let pressure = PressureField::from_descriptor(&grid, &config.pressure)?;
    let mut sim = Simulation::with_pressure(config, &grid, &pressure)?;
    let mut failure = None;
    while !sim.is_finished() {
        if let Err(e) = sim.advance() {
            failure = Some(e);
            break;
        }
    }
    let out = sim.into_output();
    write_simulation(&grid, &out, out_dir, outputs)?;
    if let Some(e) = failure {
        return Err(e);
    }

    let records = &out.diagnostics.records;
    let peak = records
        .iter()
        .max_by(|a, b| a.max_h.total_cmp(&b.max_h))
        .map(|r| (r.step, r.max_h));
    let mut summary = json!({
        "steps": records.len(),
        "final_max_h": out.final_state.max_h(),
        "max_mass_drift": out.diagnostics.max_mass_drift(),
        "min_rho_a": records.iter().map(|r| r.min_rho_a).fold(f64::INFINITY, f64::min),
        "min_rho_i": records.iter().map(|r| r.min_rho_i).fold(f64::INFINITY, f64::min),
        "decay_fit": out.diagnostics.decay_fit,
        "peak_step": peak.map(|p| p.0),
        "peak_max_h": peak.map(|p| p.1),
    });
    if let InitialCondition::Disruption { center, radius, .. } = config.initial {
        let ratios: Vec<_> = out
            .snapshots
            .iter()
            .map(|s| json!({ "step": s.step, "ratio": inside_outside_ratio(&grid, &s.h, center, radius) }))
            .collect();
        summary["inside_outside_ratio"] = json!(ratios);
    }
    Ok((summary, None))
}

fn run_sweep(config: &ScenarioConfig, out_dir: &Path, outputs: &mut Vec<String>) -> Result<Summary> {
    let outcome = pressure_sweep(config)?;
    output::write_sweep_csv(&out_dir.join("sweep.csv"), &outcome.samples)?;
    outputs.push("sweep.csv".into());
    output::write_sweep_csv(&out_dir.join("sweep_bisection.csv"), &outcome.bisection)?;
    outputs.push("sweep_bisection.csv".into());
    let flag = (!outcome.found()).then(|| NO_CRITICAL_PRESSURE.to_string());
    let summary = json!({
        "critical_pressure": outcome.critical_pressure,
        "bracket": outcome.bracket,
        "found": outcome.found(),
        "message": flag,
    });
    Ok((summary, flag))
}

fn run_gamma(config: &ScenarioConfig, out_dir: &Path, outputs: &mut Vec<String>) -> Result<Summary> {
    let report = gamma_ladder(config)?;
    output::write_gamma_csv(&out_dir.join("gamma.csv"), &report.rows)?;
    outputs.push("gamma.csv".into());
    let grid = build_grid(config.n)?;
    let z = vec![0.0; grid.num_nodes()];
    output::write_fields_csv(&out_dir.join("limit_minimizer.csv"), &grid, &report.limit_minimizer, &z, &z)?;
    outputs.push("limit_minimizer.csv".into());
    Ok((json!({ "rho0": report.rho0, "el_residual": report.el_residual }), None))
}

fn geometry_summary(rows: &[GeometryRow]) -> serde_json::Value {
    let worst = |kind: SurfaceKind, variant: FormulaVariant| {
        rows.iter()
            .filter(|r| r.kind == kind && r.variant == variant)
            .map(|r| r.rel_err)
            .fold(0.0, f64::max)
    };
    json!({
        "rows": rows.len(),
        "max_rel_err_area": worst(SurfaceKind::Area, FormulaVariant::AppendixGeneral),
        "max_rel_err_mean_curv_int": worst(SurfaceKind::MeanCurvInt, FormulaVariant::AppendixGeneral),
        "max_rel_err_willmore_int": worst(SurfaceKind::WillmoreInt, FormulaVariant::AppendixGeneral),
        "max_stability": rows.iter().map(|r| r.stability).fold(0.0, f64::max),
    })
}

fn run_geometry(config: &ScenarioConfig, out_dir: &Path, outputs: &mut Vec<String>) -> Result<Summary> {
    let g = &config.geometry;
    let rows = geometry_report(&g.radii, &g.modes, &g.delta_steps, g.quadrature_nodes)?;
    output::write_geometry_csv(&out_dir.join("geometry.csv"), &rows)?;
    outputs.push("geometry.csv".into());
    Ok((geometry_summary(&rows), None))
}
