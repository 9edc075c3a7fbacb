//! Physical parameters, the ripping-rate family and scenario data.
//!
//! Lengths are in nm, masses in ng and times in s. Pressures are given in Pa
//! and converted to the model's force density (ng·nm⁻¹·s⁻²) through
//! [`ModelParams::pressure_scale`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Width of the linear density ramp around a cortex hole.
pub const RAMP_WIDTH: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Damping `c` standing in for the fluid operator.
    pub damping: f64,
    /// Bending rigidity `κ`.
    pub bending_rigidity: f64,
    /// Surface tension `γ`.
    pub surface_tension: f64,
    /// Zeroth-order coefficient `λ`.
    pub zeroth_order: f64,
    /// Linker spring constant `ξ`.
    pub spring_constant: f64,
    pub diffusivity_active: f64,
    pub diffusivity_inactive: f64,
    /// Reconnection rate `k`.
    pub reconnection_rate: f64,
    /// Critical height `h*` above which linkers rip.
    pub critical_height: f64,
    /// Sharpness `ϑ` of the ripping rate.
    pub ripping_scale: f64,
    /// Spontaneous curvature `H̄`; only zero is supported.
    pub spontaneous_curvature: f64,
    /// Model force density per Pa (1 Pa = 10³ ng·nm⁻¹·s⁻²).
    pub pressure_scale: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            damping: 1.0,
            bending_rigidity: 100.0,
            surface_tension: 100.0,
            zeroth_order: 0.0,
            spring_constant: 100.0,
            diffusivity_active: 0.2,
            diffusivity_inactive: 0.2,
            reconnection_rate: 1e4,
            critical_height: 0.5,
            ripping_scale: 1e-8,
            spontaneous_curvature: 0.0,
            pressure_scale: 1e3,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.damping > 0.0, "damping must be positive"),
            (self.bending_rigidity > 0.0, "bending_rigidity must be positive"),
            (self.surface_tension >= 0.0, "surface_tension must be nonnegative"),
            (self.zeroth_order >= 0.0, "zeroth_order must be nonnegative"),
            (self.spring_constant >= 0.0, "spring_constant must be nonnegative"),
            (self.diffusivity_active >= 0.0, "diffusivity_active must be nonnegative"),
            (self.diffusivity_inactive >= 0.0, "diffusivity_inactive must be nonnegative"),
            (self.reconnection_rate >= 0.0, "reconnection_rate must be nonnegative"),
            (self.critical_height > 0.0, "critical_height must be positive"),
            (self.ripping_scale > 0.0, "ripping_scale must be positive"),
            (self.pressure_scale > 0.0, "pressure_scale must be positive"),
            (self.spontaneous_curvature == 0.0, "nonzero spontaneous_curvature is not supported"),
        ];
        if !self.is_finite() {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::InvalidParameter((*msg).to_string())),
            None => Ok(()),
        }
    }

    fn is_finite(&self) -> bool {
        [
            self.damping,
            self.bending_rigidity,
            self.surface_tension,
            self.zeroth_order,
            self.spring_constant,
            self.diffusivity_active,
            self.diffusivity_inactive,
            self.reconnection_rate,
            self.critical_height,
            self.ripping_scale,
            self.spontaneous_curvature,
            self.pressure_scale,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Copy with a different ripping scale.
    pub fn with_theta(&self, theta: f64) -> Self {
        ModelParams { ripping_scale: theta, ..*self }
    }
}

/// `r_ϑ(h) = max(0, (h − h*)/ϑ)`.
pub fn ripping_rate(h: f64, params: &ModelParams) -> f64 {
    ((h - params.critical_height) / params.ripping_scale).max(0.0)
}

/// Derivative of [`ripping_rate`] in `h`, taking the value 0 at the kink.
pub fn ripping_rate_derivative(h: f64, params: &ModelParams) -> f64 {
    if h > params.critical_height {
        1.0 / params.ripping_scale
    } else {
        0.0
    }
}

/// Active-linker density `k ρ₀ / (k + r_ϑ(x))` of the no-diffusion balance.
pub fn g_theta(x: f64, rho0: f64, params: &ModelParams) -> Result<f64> {
    let k = params.reconnection_rate;
    if k <= 0.0 {
        return Err(Error::InvalidParameter(
            "g_theta needs a positive reconnection rate".into(),
        ));
    }
    Ok(rho0 / (1.0 + ripping_rate(x, params) / k))
}

/// How a [`PressureField`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PressureDescriptor {
    Pulse {
        peak: f64,
        center: [f64; 2],
        radius: f64,
    },
    Constant {
        value: f64,
    },
    Custom,
}

impl PressureDescriptor {
    /// Pulse with peak 100 Pa centred in the square with radius 0.4.
    pub fn default_pulse() -> Self {
        PressureDescriptor::Pulse {
            peak: 100.0,
            center: [0.5, 0.5],
            radius: 0.4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PressureDescriptor::Pulse { peak, center, radius } => {
                if !(radius > 0.0) {
                    return Err(Error::InvalidParameter("pulse radius must be positive".into()));
                }
                if !center.iter().all(|c| (0.0..=1.0).contains(c)) {
                    return Err(Error::InvalidParameter("pulse center must lie in the unit square".into()));
                }
                if !peak.is_finite() {
                    return Err(Error::InvalidParameter("pulse peak must be finite".into()));
                }
            }
            PressureDescriptor::Constant { value } if !value.is_finite() => {
                return Err(Error::InvalidParameter("pressure must be finite".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Per-node pressure `p₀` in Pa.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    pub values: Vec<f64>,
    pub descriptor: PressureDescriptor,
}

impl PressureField {
    pub fn from_descriptor(grid: &Grid, descriptor: &PressureDescriptor) -> Result<Self> {
        descriptor.validate()?;
        match *descriptor {
            PressureDescriptor::Pulse { peak, center, radius } => {
                Ok(pressure_pulse(grid, peak, (center[0], center[1]), radius))
            }
            PressureDescriptor::Constant { value } => Ok(PressureField {
                values: vec![value; grid.num_nodes()],
                descriptor: descriptor.clone(),
            }),
            PressureDescriptor::Custom => Err(Error::InvalidParameter(
                "a custom pressure field needs explicit values".into(),
            )),
        }
    }

    pub fn custom(values: Vec<f64>) -> Self {
        PressureField {
            values,
            descriptor: PressureDescriptor::Custom,
        }
    }

    pub fn zero(grid: &Grid) -> Self {
        PressureField {
            values: vec![0.0; grid.num_nodes()],
            descriptor: PressureDescriptor::Constant { value: 0.0 },
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `p₀(x) = peak · χ_{B_R(m)}(x) · (R − ‖x − m‖)² / R²`.
pub fn pressure_pulse(grid: &Grid, peak: f64, center: (f64, f64), radius: f64) -> PressureField {
    let values = grid.sample(|x, y| pulse_value(((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt(), peak, radius));
    PressureField {
        values,
        descriptor: PressureDescriptor::Pulse {
            peak,
            center: [center.0, center.1],
            radius,
        },
    }
}

fn pulse_value(dist: f64, peak: f64, radius: f64) -> f64 {
    if dist < radius {
        peak * (radius - dist).powi(2) / (radius * radius)
    } else {
        0.0
    }
}

/// Reading of the density ramp around a cortex hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisruptionRamp {
    /// `min{ρ̂, ρ̂/0.2 · |‖x−m‖ − R|}`: active linkers ramp up over the band.
    #[default]
    Min,
    /// `max{ρ̂, …}` as literally printed; the inactive field vanishes.
    Max,
}

/// Initial `(ρ_a, ρ_i)` at distance `dist` from the hole centre.
pub fn disruption_profile(dist: f64, rho_hat: f64, radius: f64, ramp: DisruptionRamp) -> (f64, f64) {
    if dist <= radius {
        return (0.0, 0.0);
    }
    let slope_term = rho_hat / RAMP_WIDTH * (dist - radius).abs();
    let active = match ramp {
        DisruptionRamp::Min => rho_hat.min(slope_term),
        DisruptionRamp::Max => rho_hat.max(slope_term),
    };
    (active, (rho_hat - active).max(0.0))
}

/// Linker densities of a cortex with a hole `B_R(m)`.
pub fn disruption_initial(
    grid: &Grid,
    rho_hat: f64,
    center: (f64, f64),
    radius: f64,
    ramp: DisruptionRamp,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("hole radius must be positive".into()));
    }
    Ok(grid
        .node_coords()
        .iter()
        .map(|&(x, y)| {
            let dist = ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt();
            disruption_profile(dist, rho_hat, radius, ramp)
        })
        .unzip())
}
