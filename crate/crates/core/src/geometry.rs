//! Second variations of surface functionals on perturbed spheres.
//!
//! Surfaces are radial graphs of revolution `r(θ) = R + δ P_l(cos θ)`.
//! Principal curvatures are available in closed form, so the functionals are
//! 1D integrals in `t = cos θ`, evaluated by Gauss–Legendre quadrature.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    /// `∫ 1 dA`.
    Area,
    /// `∫ H dA` with `H = κ₁ + κ₂`.
    MeanCurvInt,
    /// `∫ H² dA`.
    WillmoreInt,
}

impl SurfaceKind {
    pub const ALL: [SurfaceKind; 3] = [SurfaceKind::Area, SurfaceKind::MeanCurvInt, SurfaceKind::WillmoreInt];

    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::Area => "area",
            SurfaceKind::MeanCurvInt => "mean_curv_int",
            SurfaceKind::WillmoreInt => "willmore_int",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaVariant {
    AppendixGeneral,
    /// Area only: coefficient `7/R²` on `∫h²`.
    MainText,
}

impl FormulaVariant {
    pub fn name(self) -> &'static str {
        match self {
            FormulaVariant::AppendixGeneral => "appendix_general",
            FormulaVariant::MainText => "main_text",
        }
    }
}

pub const MIN_QUADRATURE_NODES: usize = 16;

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `(P_l(t), P_l′(t))` by the three-term recurrence.
pub fn legendre(l: usize, t: f64) -> (f64, f64) {
    if l == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=l {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let lf = l as f64;
    // P_l′ = l (t P_l − P_{l−1}) / (t² − 1), valid off the endpoints.
    let dp = if (1.0 - t * t).abs() > 1e-300 {
        lf * (t * p1 - p0) / (t * t - 1.0)
    } else {
        0.5 * lf * (lf + 1.0) * t.powi(l as i32 + 1)
    };
    (p1, dp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSphere {
    pub radius: f64,
    pub mode: usize,
    pub amplitude: f64,
    quadrature: GaussLegendre,
}

impl PerturbedSphere {
    pub fn new(radius: f64, mode: usize, amplitude: f64, quadrature_nodes: usize) -> Result<Self> {
        if quadrature_nodes < MIN_QUADRATURE_NODES {
            return Err(Error::InvalidParameter(format!(
                "at least {MIN_QUADRATURE_NODES} quadrature nodes are needed, got {quadrature_nodes}"
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        let quadrature = GaussLegendre::new(quadrature_nodes);
        let surf = PerturbedSphere {
            radius,
            mode,
            amplitude,
            quadrature,
        };
        if surf.quadrature.nodes.iter().any(|&t| surf.radius_at(t) <= 0.0) {
            return Err(Error::InvalidParameter("perturbed radius must stay positive".into()));
        }
        Ok(surf)
    }

    fn radius_at(&self, t: f64) -> f64 {
        self.radius + self.amplitude * legendre(self.mode, t).0
    }

    /// `(r, r q, H)` at `t = cos θ`, with `q = √(r² + r_θ²)`.
    fn local(&self, t: f64) -> (f64, f64, f64) {
        let (p, dp) = legendre(self.mode, t);
        let lf = self.mode as f64;
        let d = self.amplitude;
        let r = self.radius + d * p;
        let sin2 = 1.0 - t * t;
        let r_t = -d * sin2.sqrt() * dp;
        let r_tt = d * (t * dp - lf * (lf + 1.0) * p);
        let q = (r * r + r_t * r_t).sqrt();
        let meridian = (r * r + 2.0 * r_t * r_t - r * r_tt) / q.powi(3);
        let parallel = (r + d * t * dp) / (r * q);
        (r, r * q, meridian + parallel)
    }
}

/// `∫ f dA` over the surface.
pub fn surface_functional(kind: SurfaceKind, surf: &PerturbedSphere) -> f64 {
    2.0 * PI
        * surf.quadrature.integrate(|t| {
            let (_, jac, h) = surf.local(t);
            jac * match kind {
                SurfaceKind::Area => 1.0,
                SurfaceKind::MeanCurvInt => h,
                SurfaceKind::WillmoreInt => h * h,
            }
        })
}

/// Richardson-extrapolated second difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub value: f64,
    /// Difference between the two finest extrapolants.
    pub stability: f64,
    /// Functional at `δ = 0`; the scale for near-zero values.
    pub base_value: f64,
}

impl FdEstimate {
    pub fn relative_stability(&self) -> f64 {
        self.stability / self.value.abs().max(self.base_value.abs())
    }
}

/// Threshold on the relative stability estimate.
pub const STABILITY_THRESHOLD: f64 = 1e-4;

/// `d²F/dδ²` at `δ = 0` without the stability check.
pub fn fd_estimate(kind: SurfaceKind, radius: f64, mode: usize, delta_steps: &[f64], quadrature_nodes: usize) -> Result<FdEstimate> {
    if delta_steps.len() < 2 {
        return Err(Error::InvalidParameter("Richardson extrapolation needs at least two steps".into()));
    }
    let mut steps = delta_steps.to_vec();
    steps.sort_by(|a, b| b.total_cmp(a));
    if steps.windows(2).any(|w| !(w[1] < w[0])) || steps[steps.len() - 1] <= 0.0 {
        return Err(Error::InvalidParameter("delta steps must be distinct and positive".into()));
    }
    let eval = |d: f64| -> Result<f64> { Ok(surface_functional(kind, &PerturbedSphere::new(radius, mode, d, quadrature_nodes)?)) };
    let f0 = eval(0.0)?;
    let diffs: Vec<f64> = steps
        .iter()
        .map(|&d| Ok((eval(d)? + eval(-d)? - 2.0 * f0) / (d * d)))
        .collect::<Result<_>>()?;
    // Error expansion in δ²: eliminate the leading term between neighbours.
    let extrap: Vec<f64> = (0..steps.len() - 1)
        .map(|i| {
            let (a, b) = (steps[i] * steps[i], steps[i + 1] * steps[i + 1]);
            (diffs[i + 1] * a - diffs[i] * b) / (a - b)
        })
        .collect();
    let value = extrap[extrap.len() - 1];
    let stability = if extrap.len() >= 2 {
        (value - extrap[extrap.len() - 2]).abs()
    } else {
        (value - diffs[diffs.len() - 1]).abs()
    };
    Ok(FdEstimate {
        value,
        stability,
        base_value: f0,
    })
}

/// [`fd_estimate`] that rejects unstable extrapolations.
pub fn second_derivative_fd(kind: SurfaceKind, radius: f64, mode: usize, delta_steps: &[f64], quadrature_nodes: usize) -> Result<FdEstimate> {
    let est = fd_estimate(kind, radius, mode, delta_steps, quadrature_nodes)?;
    if est.relative_stability() > STABILITY_THRESHOLD {
        return Err(Error::UnstableExtrapolation {
            stability: est.relative_stability(),
            threshold: STABILITY_THRESHOLD,
        });
    }
    Ok(est)
}

/// Closed-form second variation for `h = P_l(cos θ)` on the sphere of radius `R`.
/// `None` when the variant has no formula for `kind`.
pub fn formula_value(kind: SurfaceKind, variant: FormulaVariant, radius: f64, mode: usize) -> Option<f64> {
    let r2 = radius * radius;
    let lf = mode as f64;
    let eig = lf * (lf + 1.0) / r2;
    let h_sq = 4.0 * PI * r2 / (2.0 * lf + 1.0);
    let grad_sq = eig * h_sq;
    match (kind, variant) {
        // |W|² = 2/R², H² = 4/R².
        (SurfaceKind::Area, FormulaVariant::AppendixGeneral) => Some(grad_sq + (4.0 - 2.0) / r2 * h_sq),
        (SurfaceKind::Area, FormulaVariant::MainText) => Some(grad_sq + 7.0 / r2 * h_sq),
        (SurfaceKind::MeanCurvInt, FormulaVariant::AppendixGeneral) => Some(2.0 / radius * grad_sq),
        (SurfaceKind::WillmoreInt, FormulaVariant::AppendixGeneral) => Some(eig * eig * h_sq + 1.5 / r2 * grad_sq),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRow {
    pub kind: SurfaceKind,
    pub variant: FormulaVariant,
    pub radius: f64,
    pub mode: usize,
    pub formula: f64,
    pub fd_value: f64,
    pub rel_err: f64,
    pub stability: f64,
}

impl GeometryRow {
    /// Whether the extrapolation met [`STABILITY_THRESHOLD`].
    pub fn is_stable(&self) -> bool {
        self.stability <= STABILITY_THRESHOLD
    }
}

/// FD-versus-formula comparison for every kind, variant, radius and mode.
/// `rel_err` and `stability` are relative to `|formula|` (or to the
/// functional's value at `δ = 0` when that is zero).
pub fn geometry_report(radii: &[f64], modes: &[usize], delta_steps: &[f64], quadrature_nodes: usize) -> Result<Vec<GeometryRow>> {
    let mut rows = Vec::new();
    for kind in SurfaceKind::ALL {
        for variant in [FormulaVariant::AppendixGeneral, FormulaVariant::MainText] {
            for &radius in radii {
                for &mode in modes {
                    let Some(formula) = formula_value(kind, variant, radius, mode) else {
                        continue;
                    };
                    let est = fd_estimate(kind, radius, mode, delta_steps, quadrature_nodes)?;
                    let scale = if formula != 0.0 { formula.abs() } else { est.base_value.abs() };
                    rows.push(GeometryRow {
                        kind,
                        variant,
                        radius,
                        mode,
                        formula,
                        fd_value: est.value,
                        rel_err: (est.value - formula).abs() / scale,
                        stability: est.relative_stability(),
                    });
                }
            }
        }
    }
    Ok(rows)
}
