//! Actuator-disk aerodynamics of the coaxial rotor pair.
//!
//! The two rotors are lumped into one disk of area πR². Thrust and torque
//! returned here are two-rotor totals; each rotor carries half.
//!
//! Sign convention: `vz` is the flow-relative velocity along the rotor axis,
//! positive in climb. Only the VRS classifier and map outputs use the
//! descent-positive `vz_bar`.
//!
//! Induced velocity uses momentum theory where it has a physical root
//! (climb, and the windmill branch below `vz = -2 v_h`). Between those the
//! inflow is a cubic Hermite bridge in `vz / v_h` plus a VRS excess bump
//! scaled by the instability factor `f`. The whole result is multiplied by
//! the induced-loss factor `k`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};

/// Peak VRS excess inflow, in units of `v_h`, reached at `vz_bar = 1`, `vx_bar = 0`, `f = 1`.
pub const VRS_PEAK_EXCESS: f64 = 0.25;
/// Excess inflow (units of `v_h`) above which a state is classified as VRS.
pub const VRS_THRESHOLD: f64 = 0.05;
/// Edgewise speed ratio at which the VRS excess has tapered to zero.
pub const VRS_TAPER_VX_BAR: f64 = 1.0;
/// Lower edge of the bridged band, in climb-positive `vz / v_h`.
pub const BRIDGE_LOWER: f64 = -2.0;
/// Cap on the bridge end slope. The windmill branch has a vertical tangent
/// at `vz = -2 v_h`, `vx = 0`.
const BRIDGE_SLOPE_LIMIT: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum RotorError {
    #[error("thrust must be non-negative (got {0} N)")]
    NegativeThrust(f64),
    #[error("density and disk area must be positive (got rho={0}, A={1})")]
    BadMedium(f64, f64),
    #[error("invalid rotor parameter {0}: {1}")]
    InvalidParam(&'static str, f64),
}

/// Rotor geometry, aerodynamic constants and actuator limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotorParams {
    /// m
    pub radius: f64,
    pub solidity: f64,
    pub mean_profile_drag: f64,
    /// Stall-limit C_T/σ.
    pub stall_ct_sigma: f64,
    pub stall_exponent: f64,
    /// VRS instability factor, 0 suppresses the VRS excess.
    #[serde(rename = "f")]
    pub vrs_instability_factor: f64,
    /// Additional induced losses.
    #[serde(rename = "k")]
    pub induced_loss_factor: f64,
    /// rad/s
    pub omega_max: f64,
    /// N·m, two-rotor total.
    pub torque_max: f64,
    /// Maximum blade collective, deg. Carried for completeness; the disk
    /// model has no collective.
    pub collective_max_deg: f64,
    pub ct_sigma_design: f64,
    pub ct_sigma_max: f64,
    /// Nominal rotor speed, rpm.
    pub rotor_speed_rpm: f64,
    pub blades_per_rotor: u32,
    /// kg per blade.
    pub blade_mass: f64,
}

impl RotorParams {
    pub fn disk_area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    /// Nominal rotor speed in rad/s.
    pub fn omega_nominal(&self) -> f64 {
        self.rotor_speed_rpm * std::f64::consts::TAU / 60.0
    }

    /// Polar moment of inertia of one rotor, blades modelled as uniform rods.
    pub fn polar_inertia_per_rotor(&self) -> f64 {
        f64::from(self.blades_per_rotor) * self.blade_mass * self.radius * self.radius / 3.0
    }

    pub fn validate(&self) -> Result<(), RotorError> {
        let check = |ok: bool, name: &'static str, v: f64| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(RotorError::InvalidParam(name, v))
            }
        };
        check(self.radius > 0.0, "radius", self.radius)?;
        check(self.solidity > 0.0 && self.solidity < 1.0, "solidity", self.solidity)?;
        check(
            self.mean_profile_drag >= 0.0,
            "mean_profile_drag",
            self.mean_profile_drag,
        )?;
        check(self.stall_ct_sigma > 0.0, "stall_ct_sigma", self.stall_ct_sigma)?;
        check(self.stall_exponent > 0.0, "stall_exponent", self.stall_exponent)?;
        check(
            (0.0..=1.0).contains(&self.vrs_instability_factor),
            "f",
            self.vrs_instability_factor,
        )?;
        check(self.induced_loss_factor >= 1.0, "k", self.induced_loss_factor)?;
        check(self.omega_max > 0.0, "omega_max", self.omega_max)?;
        check(self.torque_max > 0.0, "torque_max", self.torque_max)?;
        check(self.ct_sigma_max > 0.0, "ct_sigma_max", self.ct_sigma_max)?;
        check(
            self.rotor_speed_rpm > 0.0 && self.omega_nominal() <= self.omega_max * (1.0 + 1e-12),
            "rotor_speed_rpm",
            self.rotor_speed_rpm,
        )?;
        check(self.blade_mass > 0.0, "blade_mass", self.blade_mass)?;
        check(
            self.blades_per_rotor > 0,
            "blades_per_rotor",
            f64::from(self.blades_per_rotor),
        )
    }
}

/// Ideal hover induced velocity `sqrt(T / (2 rho A))`.
pub fn hover_induced_velocity(thrust: f64, rho: f64, area: f64) -> Result<f64, RotorError> {
    if thrust < 0.0 {
        return Err(RotorError::NegativeThrust(thrust));
    }
    if !(rho > 0.0 && area > 0.0) {
        return Err(RotorError::BadMedium(rho, area));
    }
    Ok((thrust / (2.0 * rho * area)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thrust {
    /// Two-rotor total, N.
    pub thrust: f64,
    /// C_T/σ actually applied after clipping.
    pub ct_sigma: f64,
    pub saturated: bool,
}

/// Clip a commanded C_T/σ into `[0, ct_sigma_max]`.
pub fn clip_ct_sigma(ct_sigma: f64, params: &RotorParams) -> (f64, bool) {
    let clipped = ct_sigma.clamp(0.0, params.ct_sigma_max);
    (clipped, clipped != ct_sigma)
}

/// `T = C_T rho A (Omega R)^2` for the rotor pair.
pub fn thrust(ct_sigma: f64, params: &RotorParams, rho: f64, omega: f64) -> Thrust {
    let (ct_sigma, saturated) = clip_ct_sigma(ct_sigma, params);
    let tip = omega.max(0.0) * params.radius;
    Thrust {
        thrust: ct_sigma * params.solidity * rho * params.disk_area() * tip * tip,
        ct_sigma,
        saturated,
    }
}

/// Rotor-aligned flow quantities at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorFlowState {
    /// In-plane speed, m/s, non-negative.
    pub vx: f64,
    /// Axial speed, climb-positive, m/s.
    pub vz: f64,
    pub omega: f64,
    pub v_i: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl RotorFlowState {
    pub fn new(vx: f64, vz: f64, omega: f64, v_i: f64, radius: f64) -> Self {
        let tip = omega * radius;
        let (mu, lambda) = if tip > 0.0 {
            (vx.abs() / tip, (vz + v_i) / tip)
        } else {
            (0.0, 0.0)
        };
        Self {
            vx: vx.abs(),
            vz,
            omega,
            v_i,
            mu,
            lambda,
        }
    }
}

/// Residual of the normalized momentum relation `u^2 ((z+u)^2 + x^2) = 1`.
fn momentum_residual(x: f64, z: f64, u: f64) -> (f64, f64) {
    let w = z + u;
    let s = w * w + x * x;
    (u * u * s - 1.0, 2.0 * u * s + 2.0 * u * u * w)
}

/// Safeguarded Newton on a bracket where the residual goes from negative to
/// non-negative and is increasing.
fn solve_bracketed(x: f64, z: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut u = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (r, dr) = momentum_residual(x, z, u);
        if r == 0.0 {
            return u;
        }
        if r < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let newton = u - r / dr;
        let next = if dr > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - u).abs() <= 2.0 * f64::EPSILON * u || hi - lo <= 2.0 * f64::EPSILON * hi {
            return next;
        }
        u = next;
    }
    u
}

/// Momentum-theory root for climb (`z >= 0`), unique for all `x`.
fn climb_root(x: f64, z: f64) -> f64 {
    if x == 0.0 {
        return -0.5 * z + (0.25 * z * z + 1.0).sqrt();
    }
    let hi = (1.0 / x.hypot(z)).min(1.0);
    solve_bracketed(x, z, 0.0, hi)
}

/// Windmill-brake root (`z <= -2`): the smallest positive root.
fn windmill_root(x: f64, z: f64) -> f64 {
    if x == 0.0 {
        return 2.0 / (-z + (z * z - 4.0).max(0.0).sqrt());
    }
    let disc = z * z - 8.0 * x * x;
    let hi = if disc >= 0.0 {
        // first local maximum of the residual, which is >= 0 for z <= -2
        (-3.0 * z - disc.sqrt()) / 4.0
    } else {
        1.0 / x
    };
    solve_bracketed(x, z, 0.0, hi)
}

/// d(u)/d(z) along the momentum root, clamped to the bridge slope limit.
fn root_slope(x: f64, z: f64, u: f64) -> f64 {
    let w = z + u;
    let fz = 2.0 * u * u * w;
    let fu = 2.0 * u * (w * w + x * x) + 2.0 * u * u * w;
    if fu <= 0.0 {
        return BRIDGE_SLOPE_LIMIT.copysign(-fz);
    }
    (-fz / fu).clamp(-BRIDGE_SLOPE_LIMIT, BRIDGE_SLOPE_LIMIT)
}

/// Hermite bridge between the windmill root at `z = -2` and the climb root at `z = 0`.
fn bridge_baseline(x: f64, z: f64) -> f64 {
    let top = climb_root(x, 0.0);
    let bot = windmill_root(x, BRIDGE_LOWER);
    let span = -BRIDGE_LOWER;
    let m_top = span * root_slope(x, 0.0, top);
    let m_bot = span * root_slope(x, BRIDGE_LOWER, bot);
    let t = (z - BRIDGE_LOWER) / span;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * bot + h10 * m_bot + h01 * top + h11 * m_top
}

/// VRS excess inflow in units of `v_h` for normalized rotor-frame speeds
/// (`vz_bar` descent-positive).
pub fn vrs_excess(vx_bar: f64, vz_bar: f64, f: f64) -> f64 {
    if vz_bar <= 0.0 || vz_bar >= -BRIDGE_LOWER {
        return 0.0;
    }
    let s = vz_bar * (2.0 - vz_bar);
    let taper = (1.0 - vx_bar.abs() / VRS_TAPER_VX_BAR).max(0.0);
    f * VRS_PEAK_EXCESS * s * s * taper
}

/// Ideal (k = 1) induced velocity normalized by `v_h`, for climb-positive `z = vz / v_h`.
pub fn normalized_inflow(x: f64, z: f64, f: f64) -> f64 {
    let x = x.abs();
    if z >= 0.0 {
        climb_root(x, z)
    } else if z <= BRIDGE_LOWER {
        windmill_root(x, z)
    } else {
        bridge_baseline(x, z) + vrs_excess(x, -z, f)
    }
}

/// Pure axial momentum theory curve (normal working state up to
/// `vz_bar = 2`, windmill branch beyond), as a function of descent-positive
/// `vz_bar`. This is the reference the simulated inflow is compared against.
pub fn axial_momentum_inflow(vz_bar: f64) -> f64 {
    if vz_bar <= -BRIDGE_LOWER {
        0.5 * vz_bar + (0.25 * vz_bar * vz_bar + 1.0).sqrt()
    } else {
        2.0 / (vz_bar + (vz_bar * vz_bar - 4.0).sqrt())
    }
}

/// Whether descent-positive `vz_bar` lies strictly inside the bridged band.
pub fn in_bridge_band(vz_bar: f64) -> bool {
    vz_bar > 0.0 && vz_bar < -BRIDGE_LOWER
}

/// Induced velocity including the loss factor `k`. `vz` is climb-positive.
pub fn induced_velocity(vx: f64, vz: f64, v_h: f64, params: &RotorParams) -> f64 {
    if v_h <= 0.0 {
        return 0.0;
    }
    let u = normalized_inflow(vx / v_h, vz / v_h, params.vrs_instability_factor);
    (params.induced_loss_factor * v_h * u).max(0.0)
}

/// Torque coefficient of the rotor pair.
pub fn torque_coefficient(ct_sigma: f64, mu: f64, lambda: f64, params: &RotorParams) -> f64 {
    let ct = ct_sigma * params.solidity;
    let profile = params.mean_profile_drag * params.solidity / 8.0;
    let stall = (ct_sigma / params.stall_ct_sigma).powf(params.stall_exponent);
    profile * (1.0 + (6.0 * ct_sigma).powi(2) + stall) * (1.0 + 4.6 * mu * mu) + ct * lambda
}

/// Aerodynamic torque `Q = C_Q rho A R (Omega R)^2`, two-rotor total.
pub fn torque(ct_sigma: f64, flow: &RotorFlowState, params: &RotorParams, rho: f64) -> f64 {
    let (ct_sigma, _) = clip_ct_sigma(ct_sigma, params);
    let cq = torque_coefficient(ct_sigma, flow.mu, flow.lambda, params);
    let tip = flow.omega * params.radius;
    cq * rho * params.disk_area() * params.radius * tip * tip
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Normal,
    Vrs,
    Windmill,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Normal => "normal",
            Regime::Vrs => "vrs",
            Regime::Windmill => "windmill",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VrsClass {
    pub regime: Regime,
    /// Excess inflow relative to its peak value, 0 outside the VRS region.
    pub severity: f64,
}

/// Classify a normalized rotor-frame state (`vz_bar` descent-positive).
pub fn vrs_classify(vx_bar: f64, vz_bar: f64, params: &RotorParams) -> VrsClass {
    if vz_bar >= -BRIDGE_LOWER {
        return VrsClass {
            regime: Regime::Windmill,
            severity: 0.0,
        };
    }
    let excess = vrs_excess(vx_bar, vz_bar, params.vrs_instability_factor);
    if excess > VRS_THRESHOLD {
        VrsClass {
            regime: Regime::Vrs,
            severity: (excess / VRS_PEAK_EXCESS).min(1.0),
        }
    } else {
        VrsClass {
            regime: Regime::Normal,
            severity: 0.0,
        }
    }
}

/// Rectangular grid in normalized rotor-frame velocity space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VrsGrid {
    pub vx_min: f64,
    pub vx_max: f64,
    pub vx_steps: usize,
    pub vz_min: f64,
    pub vz_max: f64,
    pub vz_steps: usize,
}

impl Default for VrsGrid {
    fn default() -> Self {
        Self {
            vx_min: 0.0,
            vx_max: 2.5,
            vx_steps: 51,
            vz_min: -1.0,
            vz_max: 3.0,
            vz_steps: 81,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| lo + step * i as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VrsMapPoint {
    pub vx_bar: f64,
    /// descent-positive
    pub vz_bar: f64,
    /// includes the loss factor `k`
    pub vi_over_vh: f64,
    pub class: VrsClass,
}

/// Evaluate inflow and regime over a grid, row-major in `vx_bar`.
pub fn vrs_map(grid: &VrsGrid, params: &RotorParams, exec: Execution) -> Vec<VrsMapPoint> {
    let points: Vec<(f64, f64)> = linspace(grid.vx_min, grid.vx_max, grid.vx_steps)
        .flat_map(|x| linspace(grid.vz_min, grid.vz_max, grid.vz_steps).map(move |z| (x, z)))
        .collect();
    par::map(exec, &points, |&(x, z)| VrsMapPoint {
        vx_bar: x,
        vz_bar: z,
        vi_over_vh: induced_velocity(x, -z, 1.0, params),
        class: vrs_classify(x, z, params),
    })
}
