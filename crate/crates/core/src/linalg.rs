//! Iterative linear solvers and damped Newton methods.
//!
//! [`cg_solve`] is Jacobi-preconditioned conjugate gradients with minimal
//! residual smoothing: the returned iterate is the smoothed one, whose
//! residual norm never increases from one iteration to the next.
//! [`bicgstab`] handles the nonsymmetric systems of the coupled linker step
//! and of Newton linearizations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub rel_tolerance: f64,
    /// `None` means `10 · N` for an `N × N` system.
    pub max_iterations: Option<usize>,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub newton_grad_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rel_tolerance: 1e-10,
            max_iterations: None,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            newton_grad_tol: 1e-10,
            newton_max_iter: 50,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return bad("armijo_c1 must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.rel_tolerance > 0.0 && self.newton_grad_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }

    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(10 * n.max(1))
    }
}

/// Applies an approximate inverse `z ≈ A⁻¹ r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Inverse-diagonal scaling.
#[derive(Debug, Clone)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &SparseMatrix) -> Self {
        let inv_diag = a
            .diag()
            .into_iter()
            .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Jacobi { inv_diag }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// Solution plus the per-iteration residual history `‖b − A xₖ‖₂`.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.mul_vec(x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    r
}

/// Solves an SPD system; returns `x` with `‖Ax − b‖₂ ≤ rel_tolerance · ‖b‖₂`.
pub fn cg_solve(a: &SparseMatrix, b: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
    cg_solve_with_history(a, b, None, opts).map(|s| s.x)
}

/// [`cg_solve`] with an optional starting guess, reporting the residual history.
pub fn cg_solve_with_history(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<LinearSolution> {
    assert_eq!(a.nrows(), b.len());
    let n = b.len();
    let b_norm = norm2(b);
    let target = opts.rel_tolerance * b_norm;
    if b_norm == 0.0 {
        return Ok(LinearSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual_history: vec![0.0],
        });
    }
    let precond = Jacobi::new(a);
    let cap = opts.iteration_cap(n);

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = residual(a, &x, b);
    // Smoothed iterate and its residual.
    let mut s = x.clone();
    let mut q = r.clone();
    let mut q_norm = norm2(&q);
    let mut history = vec![q_norm];
    if q_norm <= target {
        return Ok(LinearSolution { x: s, iterations: 0, residual_history: history });
    }

    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut diff = vec![0.0; n];
    let mut iterations = 0;
    while iterations < cap {
        iterations += 1;
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);

        for ((d, ri), qi) in diff.iter_mut().zip(&r).zip(&q) {
            *d = ri - qi;
        }
        let dd = dot(&diff, &diff);
        if dd > 0.0 {
            let eta = -dot(&q, &diff) / dd;
            for (si, xi) in s.iter_mut().zip(&x) {
                *si += eta * (xi - *si);
            }
            axpy(eta, &diff, &mut q);
        }
        q_norm = norm2(&q);
        history.push(q_norm);
        if q_norm <= target {
            // Guard against drift of the recursively updated residual.
            let true_norm = norm2(&residual(a, &s, b));
            if true_norm <= target {
                return Ok(LinearSolution { x: s, iterations, residual_history: history });
            }
            q = residual(a, &s, b);
            x.copy_from_slice(&s);
            r.copy_from_slice(&q);
            precond.apply(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }

        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::LinearSolve {
        iterations,
        residual: q_norm / b_norm,
    })
}

/// Preconditioned BiCGSTAB for general square systems.
pub fn bicgstab(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: &dyn Preconditioner,
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = opts.rel_tolerance * b_norm;
    let cap = opts.iteration_cap(n);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = residual(a, &x, b);
    let mut iterations = 0;
    let mut restarts = 0;

    'outer: loop {
        if norm2(&r) <= target {
            return Ok(x);
        }
        let r_hat = r.clone();
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut omega = 1.0;
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];
        while iterations < cap {
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for ((pi, ri), vi) in p.iter_mut().zip(&r).zip(&v) {
                *pi = ri + beta * (*pi - omega * vi);
            }
            precond.apply(&p, &mut y);
            a.mul_vec_into(&y, &mut v);
            let denom = dot(&r_hat, &v);
            if denom.abs() < 1e-300 {
                break;
            }
            alpha = rho / denom;
            for ((si, ri), vi) in s.iter_mut().zip(&r).zip(&v) {
                *si = ri - alpha * vi;
            }
            if norm2(&s) <= target {
                axpy(alpha, &y, &mut x);
                r = residual(a, &x, b);
                if norm2(&r) <= target {
                    return Ok(x);
                }
                continue 'outer;
            }
            precond.apply(&s, &mut z);
            a.mul_vec_into(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            axpy(alpha, &y, &mut x);
            axpy(omega, &z, &mut x);
            for ((ri, si), ti) in r.iter_mut().zip(&s).zip(&t) {
                *ri = si - omega * ti;
            }
            if norm2(&r) <= target {
                let true_r = residual(a, &x, b);
                if norm2(&true_r) <= target {
                    return Ok(x);
                }
                r = true_r;
                continue 'outer;
            }
        }
        // Breakdown or cap: restart from the current iterate while budget remains.
        r = residual(a, &x, b);
        restarts += 1;
        if iterations >= cap || restarts > 20 {
            return Err(Error::LinearSolve {
                iterations,
                residual: norm2(&r) / b_norm,
            });
        }
    }
}

/// Result of a converged Newton iteration.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    /// `‖F(xₖ)‖∞` for every iterate, starting with `x0`.
    pub residual_history: Vec<f64>,
}

const MIN_STEP: f64 = 1e-14;
/// Relative rounding level assumed for objectives summed over many nodes.
const OBJECTIVE_NOISE: f64 = 1e-10;

fn newton_direction(jac: &SparseMatrix, rhs: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
    let inner = SolveOptions {
        rel_tolerance: opts.rel_tolerance.min(1e-12),
        ..*opts
    };
    bicgstab(jac, rhs, None, &Jacobi::new(jac), &inner)
}

/// Solves `F(x) = 0` by Newton's method with Armijo backtracking on the
/// merit `½‖F‖₂²`. Converges when `‖F‖∞ ≤ newton_grad_tol`.
pub fn newton_armijo(
    mut residual_fn: impl FnMut(&[f64]) -> Vec<f64>,
    mut jacobian_fn: impl FnMut(&[f64]) -> SparseMatrix,
    x0: &[f64],
    opts: &SolveOptions,
) -> Result<NewtonOutcome> {
    let mut x = x0.to_vec();
    let mut f = residual_fn(&x);
    let mut history = vec![norm_inf(&f)];
    for iteration in 0..=opts.newton_max_iter {
        let f_inf = norm_inf(&f);
        if f_inf <= opts.newton_grad_tol {
            return Ok(NewtonOutcome {
                x,
                iterations: iteration,
                residual_norm: f_inf,
                residual_history: history,
            });
        }
        if iteration == opts.newton_max_iter {
            break;
        }
        let jac = jacobian_fn(&x);
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let d = newton_direction(&jac, &neg_f, opts).map_err(|_| Error::Newton {
            iterations: iteration,
            residual: f_inf,
            reason: "linearized system could not be solved",
            last_iterate: x.clone(),
        })?;
        let merit = 0.5 * dot(&f, &f);
        let slope = dot(&f, &jac.mul_vec(&d));
        if slope >= 0.0 {
            return Err(Error::Newton {
                iterations: iteration,
                residual: f_inf,
                reason: "Newton direction is not a descent direction for the merit",
                last_iterate: x,
            });
        }
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let f_trial = residual_fn(&trial);
            if 0.5 * dot(&f_trial, &f_trial) <= merit + opts.armijo_c1 * step * slope {
                x = trial;
                f = f_trial;
                break;
            }
            step *= opts.backtrack_factor;
            if step < MIN_STEP {
                return Err(Error::Newton {
                    iterations: iteration,
                    residual: f_inf,
                    reason: "line search step fell below 1e-14",
                    last_iterate: x,
                });
            }
        }
        history.push(norm_inf(&f));
    }
    Err(Error::Newton {
        iterations: opts.newton_max_iter,
        residual: norm_inf(&f),
        reason: "iteration cap reached",
        last_iterate: x,
    })
}

/// Result of [`newton_minimize`].
#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Objective value at every accepted iterate, starting with `x0`.
    pub value_history: Vec<f64>,
}

/// Minimizes a smooth objective by Newton's method with Armijo backtracking
/// on the objective itself. Falls back to steepest descent when the Newton
/// direction is not a descent direction. Converges when `‖∇f‖∞ ≤ newton_grad_tol`.
pub fn newton_minimize(
    mut objective: impl FnMut(&[f64]) -> f64,
    mut gradient: impl FnMut(&[f64]) -> Vec<f64>,
    mut hessian: impl FnMut(&[f64]) -> SparseMatrix,
    x0: &[f64],
    opts: &SolveOptions,
) -> Result<MinimizeOutcome> {
    let mut x = x0.to_vec();
    let mut value = objective(&x);
    let mut g = gradient(&x);
    let mut history = vec![value];
    for iteration in 0..=opts.newton_max_iter {
        let g_inf = norm_inf(&g);
        if g_inf <= opts.newton_grad_tol {
            return Ok(MinimizeOutcome {
                x,
                value,
                grad_norm: g_inf,
                iterations: iteration,
                value_history: history,
            });
        }
        if iteration == opts.newton_max_iter {
            break;
        }
        let hess = hessian(&x);
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut d = newton_direction(&hess, &neg_g, opts).unwrap_or_else(|_| neg_g.clone());
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = neg_g;
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let trial_value = objective(&trial);
            if trial_value <= value + opts.armijo_c1 * step * slope {
                x = trial;
                value = trial_value;
                g = gradient(&x);
                break;
            }
            // Once the predicted decrease is below the rounding level of the
            // objective, judge the full step by the gradient instead.
            let noise = OBJECTIVE_NOISE * value.abs().max(1.0);
            if step == 1.0 && slope.abs() <= noise {
                let g_trial = gradient(&trial);
                if norm_inf(&g_trial) < g_inf && trial_value <= value + noise {
                    x = trial;
                    value = trial_value.min(value);
                    g = g_trial;
                    break;
                }
            }
            step *= opts.backtrack_factor;
            if step < MIN_STEP {
                return Err(Error::Newton {
                    iterations: iteration,
                    residual: g_inf,
                    reason: "line search step fell below 1e-14",
                    last_iterate: x,
                });
            }
        }
        history.push(value);
    }
    Err(Error::Newton {
        iterations: opts.newton_max_iter,
        residual: norm_inf(&g),
        reason: "iteration cap reached",
        last_iterate: x,
    })
}
