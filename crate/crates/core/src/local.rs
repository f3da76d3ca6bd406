//! Closed-form optimum for a device that executes its task locally.
//!
//! The local cost `β1 ρC(M)/f + β2 κρC(M) f² - β3 Φ(M)` separates per
//! device. Both compute terms scale with `C(M)`, so the optimal frequency
//! does not depend on `M`:
//!
//! ```text
//! f* = min{ (β1 / (2 β2 κ))^(1/3), f_max }
//! M* = clamp( sqrt(β3 m_a0 / (β1 ρ m_c0 / f* + β2 κ ρ m_c0 f*²)) - m_a1, M_min, M_max )
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{local_cost, DeviceProfile, Models, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSolution {
    pub local_hz: f64,
    /// Stationary point clamped to the frame bounds, before rounding.
    pub frames_continuous: f64,
    pub frames: u32,
    pub cost: f64,
}

/// Cost-minimizing local CPU frequency.
///
/// With `β2 κ = 0` there is no energy penalty and the device runs flat out.
/// With `β1 = 0` and `β2 κ > 0` the infimum is approached as `f -> 0` and is
/// not attained, which is reported as a domain error.
pub fn optimal_frequency(params: &SystemParams, device: &DeviceProfile) -> Result<f64> {
    let energy = params.beta2 * params.kappa;
    if energy == 0.0 {
        return Ok(device.local_compute_hz);
    }
    if params.beta1 == 0.0 {
        return Err(Error::Domain(
            "zero delay weight with positive energy weight: local frequency has no minimizer".into(),
        ));
    }
    Ok((params.beta1 / (2.0 * energy)).cbrt().min(device.local_compute_hz))
}

/// Continuous frame count minimizing the cost at frequency `local_hz`,
/// clamped to the device's bounds. `m_a1_offset` is the accuracy curve's
/// offset: the true model uses `m_a1`, the log-domain relaxation uses 0.
pub(crate) fn stationary_frames(
    params: &SystemParams,
    models: &Models,
    device: &DeviceProfile,
    local_hz: f64,
    m_a1_offset: f64,
) -> f64 {
    let c = &models.complexity;
    let a = &models.accuracy;
    let lo = device.m_min as f64;
    let hi = device.m_max as f64;
    let per_frame = params.rho * c.m_c0 * (params.beta1 / local_hz + params.beta2 * params.kappa * local_hz * local_hz);
    if per_frame <= 0.0 {
        // frames are free: accuracy alone decides
        return if params.beta3 * a.m_a0 > 0.0 { hi } else { lo };
    }
    ((params.beta3 * a.m_a0 / per_frame).sqrt() - m_a1_offset).clamp(lo, hi)
}

pub fn solve_local(params: &SystemParams, models: &Models, device: &DeviceProfile) -> Result<LocalSolution> {
    let local_hz = optimal_frequency(params, device)?;
    let frames_continuous = stationary_frames(params, models, device, local_hz, models.accuracy.m_a1);
    let lo = frames_continuous.floor().max(device.m_min as f64);
    let hi = frames_continuous.ceil().min(device.m_max as f64);
    let cost_lo = local_cost(params, models, lo, local_hz)?;
    let cost_hi = local_cost(params, models, hi, local_hz)?;
    // ties go to fewer frames
    let (frames, cost) = if cost_hi < cost_lo { (hi, cost_hi) } else { (lo, cost_lo) };
    Ok(LocalSolution { local_hz, frames_continuous, frames: frames as u32, cost })
}

/// Partial derivatives `(∂F/∂f, ∂F/∂M)` of the local cost.
pub fn local_kkt_residual(params: &SystemParams, models: &Models, frames: f64, local_hz: f64) -> (f64, f64) {
    let c = &models.complexity;
    let a = &models.accuracy;
    let cycles = params.rho * c.macs(frames);
    let d_f = -params.beta1 * cycles / (local_hz * local_hz) + 2.0 * params.beta2 * params.kappa * cycles * local_hz;
    let d_m = params.beta1 * params.rho * c.m_c0 / local_hz
        + params.beta2 * params.kappa * params.rho * c.m_c0 * local_hz * local_hz
        - params.beta3 * a.m_a0 / (frames + a.m_a1).powi(2);
    (d_f, d_m)
}
