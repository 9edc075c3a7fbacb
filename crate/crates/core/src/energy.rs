//! Reduced energies of the no-diffusion model and their singular limit.
//!
//! Unknowns are interior heights. All interior nodes carry the same weight
//! `w = Δx²`, so the discrete gradient of the energy is `w` times the nodal
//! strong-form residual `Eh + G′(h) − p`.

use serde::{Deserialize, Serialize};

use crate::config::{InitialCondition, ScenarioConfig};
use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::grid::{build_grid, integrate, Grid};
use crate::linalg::{cg_solve_with_history, newton_minimize, norm_inf, SolveOptions};
use crate::model::{disruption_initial, ModelParams, PressureField};
use crate::sparse::SparseMatrix;

/// How the inner integral `∫₀^H s g(s) ds` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerIntegral {
    ClosedForm,
    Quadrature,
}

/// `∫₀^H s g_ϑ(s) ds` for the positive-part rate, `θ > 0`.
pub fn density_primitive(big_h: f64, rho0: f64, theta: f64, params: &ModelParams) -> f64 {
    let h_star = params.critical_height;
    if big_h <= h_star {
        return 0.5 * rho0 * big_h * big_h;
    }
    let kt = params.reconnection_rate * theta;
    let d = big_h - h_star;
    0.5 * rho0 * h_star * h_star + kt * rho0 * (d + (h_star - kt) * (d / kt).ln_1p())
}

fn density_first(big_h: f64, rho0: f64, theta: f64, params: &ModelParams) -> f64 {
    let d = big_h - params.critical_height;
    if d <= 0.0 {
        rho0 * big_h
    } else {
        rho0 * big_h / (1.0 + d / (params.reconnection_rate * theta))
    }
}

fn density_second(big_h: f64, rho0: f64, theta: f64, params: &ModelParams) -> f64 {
    let d = big_h - params.critical_height;
    if d <= 0.0 {
        rho0
    } else {
        let kt = params.reconnection_rate * theta;
        rho0 * (kt - params.critical_height) / (kt * (1.0 + d / kt).powi(2))
    }
}

/// Pointwise limit of [`density_primitive`] as `θ → 0`.
pub fn density_primitive_limit(big_h: f64, rho0: f64, params: &ModelParams) -> f64 {
    let h = if big_h <= params.critical_height { big_h } else { params.critical_height };
    0.5 * rho0 * h * h
}

/// Heaviside factor `H(1 − h/h*)` with `H(0) = 0`.
fn spring_active(h: f64, params: &ModelParams) -> bool {
    h < params.critical_height
}

/// `Σ aᵢbᵢ` with error-free products and compensated summation.
fn accurate_sum(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    let mut add = |v: f64| {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    };
    for (a, b) in terms {
        let p = a * b;
        add(p);
        add(a.mul_add(b, -p));
    }
    s + c
}

/// `(M + diag d)x − b`, each row accumulated accurately.
fn accurate_residual(m: &SparseMatrix, d: &[f64], x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|r| {
            let terms = m
                .row(r)
                .map(|(c, v)| (v, x[c]))
                .chain([(d[r], x[r]), (-1.0, b[r])]);
            accurate_sum(terms)
        })
        .collect()
}

/// Energies on a fixed grid, pressure and total density `ρ₀`.
#[derive(Debug, Clone)]
pub struct EnergyProblem {
    disc: Discretization,
    params: ModelParams,
    rho0: f64,
    /// `s_p · p₀` on interior nodes.
    forcing: Vec<f64>,
    /// Weight of every interior node.
    cell: f64,
}

/// Outcome of [`EnergyProblem::minimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `0` for the limit energy.
    pub theta: f64,
    pub energy: f64,
    /// Sup norm of the discrete gradient at `h`.
    pub grad_norm: f64,
    /// Per-node minimizer.
    pub h: Vec<f64>,
    pub method: InnerIntegral,
    pub iterations: usize,
}

impl EnergyProblem {
    pub fn new(grid: &Grid, params: &ModelParams, pressure: &PressureField, rho0: f64) -> Result<Self> {
        params.validate()?;
        if !(rho0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("rho0 must be nonnegative, got {rho0}")));
        }
        if pressure.values.len() != grid.num_nodes() {
            return Err(Error::LengthMismatch {
                expected: grid.num_nodes(),
                got: pressure.values.len(),
            });
        }
        let disc = Discretization::new(grid, params);
        let forcing = disc.forcing(pressure, params);
        Ok(EnergyProblem {
            cell: grid.spacing() * grid.spacing(),
            disc,
            params: *params,
            rho0,
            forcing,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.disc.grid
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    fn check(&self, h: &[f64]) {
        assert_eq!(h.len(), self.grid().num_interior(), "energies take interior heights");
    }

    fn quadratic_part(&self, h: &[f64]) -> f64 {
        let eh = self.disc.elastic.mul_vec(h);
        let elastic: f64 = h.iter().zip(&eh).map(|(a, b)| a * b).sum();
        let work: f64 = h.iter().zip(&self.forcing).map(|(a, b)| a * b).sum();
        self.cell * (0.5 * elastic - work)
    }

    /// `J_ϑ(h)`; `theta` must be positive.
    pub fn j_theta(&self, h: &[f64], theta: f64) -> Result<f64> {
        self.check(h);
        check_theta(theta)?;
        let density: f64 = h.iter().map(|&v| density_primitive(v, self.rho0, theta, &self.params)).sum();
        Ok(self.quadratic_part(h) + self.cell * density)
    }

    /// Limit energy `J_0(h)`.
    pub fn j0(&self, h: &[f64]) -> f64 {
        self.check(h);
        let density: f64 = h.iter().map(|&v| density_primitive_limit(v, self.rho0, &self.params)).sum();
        self.quadratic_part(h) + self.cell * density
    }

    pub fn gradient_theta(&self, h: &[f64], theta: f64) -> Result<Vec<f64>> {
        self.check(h);
        check_theta(theta)?;
        let d: Vec<f64> = h
            .iter()
            .map(|&v| if v == 0.0 { 0.0 } else { density_first(v, self.rho0, theta, &self.params) / v })
            .collect();
        Ok(accurate_residual(&self.disc.elastic, &d, h, &self.forcing)
            .into_iter()
            .map(|r| self.cell * r)
            .collect())
    }

    pub fn hessian_theta(&self, h: &[f64], theta: f64) -> Result<SparseMatrix> {
        self.check(h);
        check_theta(theta)?;
        let d: Vec<f64> = h
            .iter()
            .map(|&v| self.cell * density_second(v, self.rho0, theta, &self.params))
            .collect();
        Ok(self.disc.elastic.scaled(self.cell).add_diagonal(&d))
    }

    fn spring_diagonal(&self, active: &[bool]) -> Vec<f64> {
        active.iter().map(|&a| if a { self.rho0 } else { 0.0 }).collect()
    }

    /// Nodal strong-form residual `κA²h + γAh + λh + ρ₀hH(1 − h/h*) − p`.
    pub fn euler_lagrange_residual(&self, h: &[f64]) -> Vec<f64> {
        self.check(h);
        let active: Vec<bool> = h.iter().map(|&v| spring_active(v, &self.params)).collect();
        accurate_residual(&self.disc.elastic, &self.spring_diagonal(&active), h, &self.forcing)
    }

    /// Minimizes `J_ϑ` (`theta > 0`) by Newton–Armijo, or `J_0` (`theta = 0`)
    /// by a semismooth active-set iteration on the Euler–Lagrange equation.
    pub fn minimize(&self, theta: f64, h0: &[f64], opts: &SolveOptions) -> Result<EnergyReport> {
        self.check(h0);
        opts.validate()?;
        if theta == 0.0 {
            return self.minimize_limit(h0, opts);
        }
        check_theta(theta)?;
        let out = newton_minimize(
            |h| self.j_theta(h, theta).expect("theta checked"),
            |h| self.gradient_theta(h, theta).expect("theta checked"),
            |h| self.hessian_theta(h, theta).expect("theta checked"),
            h0,
            opts,
        )?;
        Ok(EnergyReport {
            theta,
            energy: out.value,
            grad_norm: out.grad_norm,
            h: self.grid().prolong(&out.x),
            method: InnerIntegral::ClosedForm,
            iterations: out.iterations,
        })
    }

    fn minimize_limit(&self, h0: &[f64], opts: &SolveOptions) -> Result<EnergyReport> {
        let mut active: Vec<bool> = h0.iter().map(|&v| spring_active(v, &self.params)).collect();
        let mut h = h0.to_vec();
        for iteration in 1..=opts.newton_max_iter {
            h = self.solve_refined(&self.spring_diagonal(&active), &h, opts)?;
            // A node exactly at h* keeps its previous status.
            let next: Vec<bool> = h
                .iter()
                .zip(&active)
                .map(|(&v, &prev)| if v == self.params.critical_height { prev } else { spring_active(v, &self.params) })
                .collect();
            if next == active {
                let grad_norm = self.cell * norm_inf(&self.euler_lagrange_residual(&h));
                return Ok(EnergyReport {
                    theta: 0.0,
                    energy: self.j0(&h),
                    grad_norm,
                    h: self.grid().prolong(&h),
                    method: InnerIntegral::ClosedForm,
                    iterations: iteration,
                });
            }
            active = next;
        }
        Err(Error::Newton {
            iterations: opts.newton_max_iter,
            residual: self.cell * norm_inf(&self.euler_lagrange_residual(&h)),
            reason: "active set did not settle",
            last_iterate: self.grid().prolong(&h),
        })
    }

    /// Solves `(E + diag d)h = p` by CG followed by iterative refinement
    /// with accurately accumulated residuals.
    fn solve_refined(&self, d: &[f64], x0: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
        let a = self.disc.elastic.add_diagonal(d).with_symmetry_flag(true);
        let mut h = cg_solve_with_history(&a, &self.forcing, Some(x0), opts)?.x;
        let mut best = norm_inf(&accurate_residual(&self.disc.elastic, d, &h, &self.forcing));
        for _ in 0..8 {
            let r = accurate_residual(&self.disc.elastic, d, &h, &self.forcing);
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let dx = cg_solve_with_history(&a, &neg, None, opts)?.x;
            let trial: Vec<f64> = h.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let norm = norm_inf(&accurate_residual(&self.disc.elastic, d, &trial, &self.forcing));
            if norm >= best {
                break;
            }
            best = norm;
            h = trial;
        }
        Ok(h)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")))
    }
}

/// `J_ϑ` of a per-node field.
pub fn eval_j_theta(
    h: &[f64],
    theta: f64,
    rho0: f64,
    params: &ModelParams,
    pressure: &PressureField,
    grid: &Grid,
) -> Result<f64> {
    EnergyProblem::new(grid, params, pressure, rho0)?.j_theta(&grid.restrict(h), theta)
}

/// `J_0` of a per-node field.
pub fn eval_j0(h: &[f64], rho0: f64, params: &ModelParams, pressure: &PressureField, grid: &Grid) -> Result<f64> {
    Ok(EnergyProblem::new(grid, params, pressure, rho0)?.j0(&grid.restrict(h)))
}

/// Per-node minimization entry point; `theta = 0` selects `J_0`.
pub fn minimize_j(
    theta: f64,
    rho0: f64,
    params: &ModelParams,
    pressure: &PressureField,
    grid: &Grid,
    h0: &[f64],
    opts: &SolveOptions,
) -> Result<EnergyReport> {
    EnergyProblem::new(grid, params, pressure, rho0)?.minimize(theta, &grid.restrict(h0), opts)
}

/// Per-node Euler–Lagrange residual of `J_0`, zero on the boundary.
pub fn euler_lagrange_residual_j0(
    h: &[f64],
    rho0: f64,
    params: &ModelParams,
    pressure: &PressureField,
    grid: &Grid,
) -> Result<Vec<f64>> {
    let problem = EnergyProblem::new(grid, params, pressure, rho0)?;
    Ok(grid.prolong(&problem.euler_lagrange_residual(&grid.restrict(h))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub theta: f64,
    pub j_theta: f64,
    pub j0: f64,
    pub gap: f64,
    pub minimizer_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub rows: Vec<GammaRow>,
    pub rho0: f64,
    /// `‖EL residual‖∞` of the `J_0` minimizer.
    pub el_residual: f64,
    pub limit_minimizer: Vec<f64>,
    pub test_field: Vec<f64>,
}

/// `amplitude · sin(πx) sin(πy)`.
pub fn bump_field(grid: &Grid, amplitude: f64) -> Vec<f64> {
    use std::f64::consts::PI;
    let mut h = grid.sample(|x, y| amplitude * (PI * x).sin() * (PI * y).sin());
    for (v, &b) in h.iter_mut().zip(grid.boundary_mask()) {
        if b {
            *v = 0.0;
        }
    }
    h
}

/// Total density `m₀/|D|` of the config's initial data.
pub fn initial_total_density(config: &ScenarioConfig, grid: &Grid) -> Result<f64> {
    let area: f64 = grid.weights().iter().sum();
    match config.initial {
        InitialCondition::Homogeneous { rho_a, rho_i } => Ok(rho_a + rho_i),
        InitialCondition::Disruption { rho_hat, center, radius } => {
            let (a, i) = disruption_initial(grid, rho_hat, (center[0], center[1]), radius, config.disruption_ramp)?;
            let total: Vec<f64> = a.iter().zip(&i).map(|(x, y)| x + y).collect();
            Ok(integrate(grid, &total)? / area)
        }
    }
}

/// Energy gaps on a fixed bump and minimizer distances along the ladder.
pub fn gamma_ladder(config: &ScenarioConfig) -> Result<GammaReport> {
    let grid = build_grid(config.n)?;
    let pressure = PressureField::from_descriptor(&grid, &config.pressure)?;
    let rho0 = match config.gamma.rho0 {
        Some(r) => r,
        None => initial_total_density(config, &grid)?,
    };
    let problem = EnergyProblem::new(&grid, &config.params, &pressure, rho0)?;
    let test_field = bump_field(&grid, config.gamma.bump_amplitude);
    let test_int = grid.restrict(&test_field);
    let j0_test = problem.j0(&test_int);

    let start = vec![0.0; grid.num_interior()];
    let limit = problem.minimize(0.0, &start, &config.solver)?;
    let h0 = grid.restrict(&limit.h);
    let el_residual = norm_inf(&problem.euler_lagrange_residual(&h0));

    let mut rows = Vec::with_capacity(config.gamma.theta_ladder.len());
    let mut guess = h0.clone();
    for &theta in &config.gamma.theta_ladder {
        let report = problem.minimize(theta, &guess, &config.solver)?;
        let h_theta = grid.restrict(&report.h);
        let j_test = problem.j_theta(&test_int, theta)?;
        rows.push(GammaRow {
            theta,
            j_theta: j_test,
            j0: j0_test,
            gap: (j_test - j0_test).abs(),
            minimizer_distance: h_theta.iter().zip(&h0).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())),
        });
        guess = h_theta;
    }
    Ok(GammaReport {
        rows,
        rho0,
        el_residual,
        limit_minimizer: limit.h,
        test_field,
    })
}
