//! Stationary states, by damped Picard iteration and by time marching.
//!
//! At a stationary state the linker equations force
//! `η_a ρ_a + η_i ρ_i ≡ ρ₀`, so the inactive density can be eliminated and
//! the iteration runs on `(h, ρ_a)` alone.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::discretization::Discretization;
use crate::dynamics::Simulation;
use crate::error::{Error, Result};
use crate::grid::{build_grid, integrate, Grid};
use crate::linalg::{cg_solve_with_history, norm_inf, SolveOptions};
use crate::model::{ripping_rate, ModelParams, PressureField};

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryResult {
    pub h: Vec<f64>,
    pub rho_a: Vec<f64>,
    pub rho_i: Vec<f64>,
    /// `‖(E + ξρ_a)h − p‖∞ / ‖p‖∞` on interior nodes.
    pub height_residual: f64,
    /// Largest nodal residual of the two linker equations, relative to `k·max ρ`.
    pub linker_residual: f64,
    /// Picard iterations or time steps.
    pub iterations: usize,
    pub total_mass: f64,
    /// Mean of `η_a ρ_a + η_i ρ_i`.
    pub rho0: f64,
}

impl StationaryResult {
    pub fn max_h(&self) -> f64 {
        self.h.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `rho0: None` takes the mean of the weighted density.
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        disc: &Discretization,
        params: &ModelParams,
        pressure: &PressureField,
        h: Vec<f64>,
        rho_a: Vec<f64>,
        rho_i: Vec<f64>,
        iterations: usize,
        rho0: Option<f64>,
    ) -> Self {
        let grid = &disc.grid;
        let total: Vec<f64> = rho_a.iter().zip(&rho_i).map(|(a, i)| a + i).collect();
        let weighted: Vec<f64> = weighted_density(params, &rho_a, &rho_i);
        let (height_residual, linker_residual) = residuals(disc, params, pressure, &h, &rho_a, &rho_i);
        StationaryResult {
            total_mass: integrate(grid, &total).expect("lengths match"),
            rho0: rho0.unwrap_or_else(|| integrate(grid, &weighted).expect("lengths match") / domain_area(grid)),
            h,
            rho_a,
            rho_i,
            height_residual,
            linker_residual,
            iterations,
        }
    }
}

fn domain_area(grid: &Grid) -> f64 {
    grid.weights().iter().sum()
}

fn weighted_density(params: &ModelParams, rho_a: &[f64], rho_i: &[f64]) -> Vec<f64> {
    rho_a
        .iter()
        .zip(rho_i)
        .map(|(a, i)| params.diffusivity_active * a + params.diffusivity_inactive * i)
        .collect()
}

fn residuals(disc: &Discretization, params: &ModelParams, pressure: &PressureField, h: &[f64], rho_a: &[f64], rho_i: &[f64]) -> (f64, f64) {
    let grid = &disc.grid;
    let h_int = grid.restrict(h);
    let a_int = grid.restrict(rho_a);
    let forcing = disc.forcing(pressure, params);
    let eh = disc.elastic.mul_vec(&h_int);
    let height: Vec<f64> = (0..h_int.len())
        .map(|q| eh[q] + params.spring_constant * a_int[q] * h_int[q] - forcing[q])
        .collect();
    let f_scale = norm_inf(&forcing);
    let height_residual = if f_scale > 0.0 { norm_inf(&height) / f_scale } else { norm_inf(&height) };

    let lap_a = disc.laplacian_n.mul_vec(rho_a);
    let lap_i = disc.laplacian_n.mul_vec(rho_i);
    let k = params.reconnection_rate;
    let mut worst: f64 = 0.0;
    for q in 0..rho_a.len() {
        let exchange = ripping_rate(h[q], params) * rho_a[q] - k * rho_i[q];
        worst = worst
            .max((params.diffusivity_active * lap_a[q] + exchange).abs())
            .max((params.diffusivity_inactive * lap_i[q] - exchange).abs());
    }
    let scale = k * norm_inf(rho_a).max(norm_inf(rho_i)).max(1.0);
    (height_residual, worst / scale)
}

/// `max |η_a ρ_a + η_i ρ_i − ρ₀|` with `ρ₀` taken from the result.
pub fn weighted_density_residual(result: &StationaryResult, params: &ModelParams, grid: &Grid) -> f64 {
    assert_eq!(result.rho_a.len(), grid.num_nodes());
    weighted_density(params, &result.rho_a, &result.rho_i)
        .iter()
        .fold(0.0, |m, w| f64::max(m, (w - result.rho0).abs()))
}

struct PicardMap<'a> {
    disc: &'a Discretization,
    params: &'a ModelParams,
    forcing: Vec<f64>,
    m0: f64,
    opts: SolveOptions,
    linker_opts: SolveOptions,
}

impl PicardMap<'_> {
    /// Height with frozen `ρ̄_a`, then `ρ_a` from the active-linker problem.
    fn apply(&self, h_int: &[f64], rho_a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let grid = &self.disc.grid;
        let p = self.params;
        let spring: Vec<f64> = grid.restrict(rho_a).iter().map(|a| p.spring_constant * a).collect();
        let a_h = self.disc.elastic.add_diagonal(&spring).with_symmetry_flag(true);
        let h_new = cg_solve_with_history(&a_h, &self.forcing, Some(h_int), &self.opts)?.x;
        let h_full = grid.prolong(&h_new);

        let ratio = p.diffusivity_active / p.diffusivity_inactive;
        let k = p.reconnection_rate;
        let source = k / domain_area(grid) * ((ratio - 1.0) * integrate(grid, rho_a)? + self.m0);
        let wts = grid.weights();
        let shift: Vec<f64> = (0..wts.len())
            .map(|q| wts[q] * (k * ratio + ripping_rate(h_full[q], p)))
            .collect();
        let a_rho = self
            .disc
            .stiffness_n
            .scaled(p.diffusivity_active)
            .add_diagonal(&shift)
            .with_symmetry_flag(true);
        let rhs: Vec<f64> = wts.iter().map(|w| w * source).collect();
        let rho_new = cg_solve_with_history(&a_rho, &rhs, Some(rho_a), &self.linker_opts)?.x;
        Ok((h_new, rho_new))
    }
}

/// Damped Picard iteration `x ← (1−d)x + d F(x)` on `(h, ρ_a)`, stopped when
/// `‖x − F(x)‖∞ ≤ 1e-10`. `ρ_i` is reconstructed from the weighted identity.
pub fn stationary_fixed_point(
    params: &ModelParams,
    pressure: &PressureField,
    m0: f64,
    grid: &Grid,
    opts: &SolveOptions,
    damping: f64,
) -> Result<StationaryResult> {
    params.validate()?;
    opts.validate()?;
    if !(params.diffusivity_active > 0.0 && params.diffusivity_inactive > 0.0) {
        return Err(Error::InvalidParameter("both diffusivities must be positive".into()));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {damping}")));
    }
    if !(m0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("mass must be nonnegative, got {m0}")));
    }
    if pressure.values.len() != grid.num_nodes() {
        return Err(Error::LengthMismatch {
            expected: grid.num_nodes(),
            got: pressure.values.len(),
        });
    }
    let disc = Discretization::new(grid, params);
    let map = PicardMap {
        disc: &disc,
        params,
        forcing: disc.forcing(pressure, params),
        m0,
        opts: *opts,
        linker_opts: SolveOptions {
            rel_tolerance: opts.rel_tolerance.min(1e-13),
            ..*opts
        },
    };
    let area = domain_area(grid);
    let mut h = vec![0.0; grid.num_interior()];
    let mut rho_a = vec![m0 / area; grid.num_nodes()];
    let mut residual = f64::INFINITY;
    for iteration in 1..=FIXED_POINT_MAX_ITER {
        let (fh, fa) = map.apply(&h, &rho_a)?;
        residual = h
            .iter()
            .zip(&fh)
            .chain(rho_a.iter().zip(&fa))
            .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()));
        if residual <= FIXED_POINT_TOL {
            return Ok(reconstruct(&disc, params, pressure, m0, grid.prolong(&fh), fa, iteration));
        }
        for (x, y) in h.iter_mut().zip(&fh) {
            *x += damping * (y - *x);
        }
        for (x, y) in rho_a.iter_mut().zip(&fa) {
            *x += damping * (y - *x);
        }
    }
    let mut last_iterate = grid.prolong(&h);
    last_iterate.extend_from_slice(&rho_a);
    Err(Error::FixedPoint {
        iterations: FIXED_POINT_MAX_ITER,
        residual,
        last_iterate,
    })
}

fn reconstruct(
    disc: &Discretization,
    params: &ModelParams,
    pressure: &PressureField,
    m0: f64,
    h: Vec<f64>,
    rho_a: Vec<f64>,
    iterations: usize,
) -> StationaryResult {
    let grid = &disc.grid;
    let (ea, ei) = (params.diffusivity_active, params.diffusivity_inactive);
    let rho0 = ei / domain_area(grid) * (m0 + (ea / ei - 1.0) * integrate(grid, &rho_a).expect("lengths match"));
    let rho_i = rho_a.iter().map(|a| (rho0 - ea * a) / ei).collect();
    StationaryResult::assemble(disc, params, pressure, h, rho_a, rho_i, iterations, Some(rho0))
}

/// Marches the config's dynamics until `max_step_diff ≤ stop_tol`.
pub fn stationary_by_marching(config: &ScenarioConfig, stop_tol: f64) -> Result<StationaryResult> {
    if !(stop_tol > 0.0) {
        return Err(Error::InvalidParameter("stop_tol must be positive".into()));
    }
    config.validate()?;
    let grid = build_grid(config.n)?;
    let pressure = PressureField::from_descriptor(&grid, &config.pressure)?;
    let mut sim = Simulation::with_pressure(config, &grid, &pressure)?;
    let cap = config.stationary.max_steps;
    let mut last_diff = f64::INFINITY;
    for _ in 0..cap {
        last_diff = sim.advance()?.max_step_diff;
        if last_diff <= stop_tol {
            let state = sim.state().clone();
            let disc = sim.stepper().discretization();
            return Ok(StationaryResult::assemble(
                disc,
                &config.params,
                &pressure,
                state.h,
                state.rho_a,
                state.rho_i,
                state.step_index,
                None,
            ));
        }
    }
    Err(Error::StepCapReached { steps: cap, last_diff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioKind;
    use crate::model::{pressure_pulse, PressureDescriptor};

    fn config(n: usize, peak: f64) -> ScenarioConfig {
        let mut c = ScenarioConfig::defaults(ScenarioKind::StationaryState);
        c.n = n;
        c.pressure = PressureDescriptor::Pulse {
            peak,
            center: [0.5, 0.5],
            radius: 0.4,
        };
        c
    }

    #[test]
    fn zero_pressure_gives_flat_homogeneous_state() {
        let grid = build_grid(8).unwrap();
        let params = ModelParams::default();
        let r = stationary_fixed_point(&params, &PressureField::zero(&grid), 1.0, &grid, &SolveOptions::default(), 0.5).unwrap();
        assert!(r.h.iter().all(|&v| v == 0.0));
        assert!(r.rho_a.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!(r.rho_i.iter().all(|&v| v.abs() < 1e-14));
        assert_eq!(weighted_density_residual(&r, &params, &grid), 0.0);

        let mut c = config(8, 0.0);
        c.pressure = PressureDescriptor::Constant { value: 0.0 };
        let m = stationary_by_marching(&c, 1e-10).unwrap();
        assert_eq!(m.iterations, 1);
        assert_eq!(m.max_h(), 0.0);
    }

    #[test]
    fn subcritical_fixed_point_matches_marching() {
        let c = config(12, 30.0);
        let grid = build_grid(12).unwrap();
        let pressure = PressureField::from_descriptor(&grid, &c.pressure).unwrap();
        let fp = stationary_fixed_point(&c.params, &pressure, 1.0, &grid, &c.solver, 0.5).unwrap();
        let march = stationary_by_marching(&c, 1e-10).unwrap();
        let diff = fp.h.iter().zip(&march.h).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()));
        assert!(diff <= 1e-6, "{diff}");
        assert!(fp.height_residual <= 1e-9, "{}", fp.height_residual);
        assert!(weighted_density_residual(&fp, &c.params, &grid) <= 1e-6);
        assert!(weighted_density_residual(&march, &c.params, &grid) <= 1e-6);
        assert!((fp.total_mass - 1.0).abs() <= 1e-8);
        assert!((march.total_mass - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn unequal_diffusivities_with_ripping() {
        let grid = build_grid(10).unwrap();
        let params = ModelParams {
            diffusivity_active: 0.1,
            ripping_scale: 1e-4,
            ..Default::default()
        };
        let pressure = pressure_pulse(&grid, 400.0, (0.5, 0.5), 0.4);
        let m0 = 1.3;
        let r = stationary_fixed_point(&params, &pressure, m0, &grid, &SolveOptions::default(), 0.5).unwrap();
        assert!(r.max_h() > params.critical_height);
        assert!((r.total_mass - m0).abs() <= 1e-8 * m0);
        assert!(r.rho_i.iter().any(|&v| v > 1e-3), "ripping should leave inactive linkers");
        assert!(r.rho_a.iter().chain(&r.rho_i).all(|&v| v >= -1e-10));
        assert!(weighted_density_residual(&r, &params, &grid) <= 1e-10);
        assert!(r.linker_residual <= 1e-9, "{}", r.linker_residual);
    }

    #[test]
    fn peak_400_exceeds_critical_height() {
        let grid = build_grid(16).unwrap();
        let params = ModelParams::default();
        let pressure = pressure_pulse(&grid, 400.0, (0.5, 0.5), 0.4);
        let r = stationary_fixed_point(&params, &pressure, 1.0, &grid, &SolveOptions::default(), 0.5).unwrap();
        assert!(r.h.iter().any(|&v| v > params.critical_height));
    }

    #[test]
    fn mid_run_state_violates_the_stationary_identity() {
        let mut c = config(8, 100.0);
        c.initial = crate::config::InitialCondition::Homogeneous { rho_a: 1.0, rho_i: 0.0 };
        c.params.diffusivity_active = 0.1;
        let grid = build_grid(8).unwrap();
        let pressure = PressureField::from_descriptor(&grid, &c.pressure).unwrap();
        let mut sim = Simulation::with_pressure(&c, &grid, &pressure).unwrap();
        for _ in 0..40 {
            sim.advance().unwrap();
        }
        let s = sim.state().clone();
        let disc = sim.stepper().discretization().clone();
        let r = StationaryResult::assemble(&disc, &c.params, &pressure, s.h, s.rho_a, s.rho_i, 40, None);
        assert!(weighted_density_residual(&r, &c.params, &grid) > 1e-6);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let grid = build_grid(4).unwrap();
        let p = ModelParams::default();
        let zero = PressureField::zero(&grid);
        let o = SolveOptions::default();
        assert!(stationary_fixed_point(&p, &zero, 1.0, &grid, &o, 0.0).is_err());
        assert!(stationary_fixed_point(&p, &zero, -1.0, &grid, &o, 0.5).is_err());
        let q = ModelParams { diffusivity_inactive: 0.0, ..p };
        assert!(stationary_fixed_point(&q, &zero, 1.0, &grid, &o, 0.5).is_err());
        assert!(matches!(
            stationary_by_marching(&config(4, 100.0), 0.0),
            Err(Error::InvalidParameter(_))
        ));
    }
}
