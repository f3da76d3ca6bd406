//! Physical and cost models: MAC counting, linearized complexity, the
//! accuracy curve, uplink rate, per-device delay/energy and the two
//! per-device cost functions (local execution and edge execution).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global system constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Weight on delay.
    pub beta1: f64,
    /// Weight on device energy.
    pub beta2: f64,
    /// Weight on accuracy.
    pub beta3: f64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    /// Effective switched capacitance, J·s²/cycle³.
    pub kappa: f64,
    /// CPU cycles per MAC.
    pub rho: f64,
    /// Bits per video frame.
    pub frame_bits: f64,
    /// Total edge server compute, cycles/s.
    pub edge_compute_hz: f64,
    /// Radio frame length. Kept for reference only; the transmission delay
    /// uses the continuous approximation `M d / (R t)`.
    pub radio_frame_s: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            beta1: 0.2,
            beta2: 0.2,
            beta3: 0.6,
            bandwidth_hz: 5e6,
            noise_density_dbm_hz: -174.0,
            kappa: 1e-28,
            rho: 0.12,
            frame_bits: DEFAULT_FRAME_BITS,
            edge_compute_hz: 22e9,
            radio_frame_s: 0.01,
        }
    }
}

/// Raw 112×112 RGB frame at 8 bits per channel.
pub const DEFAULT_FRAME_BITS: f64 = 112.0 * 112.0 * 3.0 * 8.0;

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let betas = [self.beta1, self.beta2, self.beta3];
        if betas.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::InvalidParams(format!("weights must be >= 0, got {betas:?}")));
        }
        let sum: f64 = betas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("weights must sum to 1, got {sum}")));
        }
        for (name, v) in [
            ("bandwidth_hz", self.bandwidth_hz),
            ("kappa", self.kappa),
            ("rho", self.rho),
            ("frame_bits", self.frame_bits),
            ("edge_compute_hz", self.edge_compute_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.noise_density_dbm_hz.is_finite() {
            return Err(Error::InvalidParams("noise density must be finite".into()));
        }
        Ok(())
    }

    /// Noise power spectral density in W/Hz: `10^((dBm - 30) / 10)`.
    pub fn noise_density_w_per_hz(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Per-device radio and compute profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    /// Linear power gain.
    pub channel_gain: f64,
    pub tx_power_w: f64,
    /// Maximum local CPU frequency, cycles/s.
    pub local_compute_hz: f64,
    pub m_min: u32,
    pub m_max: u32,
    pub accuracy_floor: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        if self.m_min < 1 || self.m_min > self.m_max {
            return Err(Error::InvalidParams(format!(
                "frame bounds must satisfy 1 <= m_min <= m_max, got [{}, {}]",
                self.m_min, self.m_max
            )));
        }
        for (name, v) in [
            ("channel_gain", self.channel_gain),
            ("tx_power_w", self.tx_power_w),
            ("local_compute_hz", self.local_compute_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.accuracy_floor) {
            return Err(Error::InvalidParams(format!(
                "accuracy floor must lie in [0, 1), got {}",
                self.accuracy_floor
            )));
        }
        Ok(())
    }

    /// All admissible integer frame counts, ascending.
    pub fn frame_grid(&self) -> Vec<u32> {
        (self.m_min..=self.m_max).collect()
    }
}

/// `C(M) = m_c0 * M + m_c1` (MACs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityModel {
    pub m_c0: f64,
    pub m_c1: f64,
}

impl ComplexityModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_c0.is_finite() && self.m_c0 >= 0.0 && self.m_c1.is_finite()) {
            return Err(Error::InvalidParams(format!("bad complexity model {self:?}")));
        }
        Ok(())
    }

    pub fn macs(&self, frames: f64) -> f64 {
        self.m_c0 * frames + self.m_c1
    }
}

/// `Φ(M) = -m_a0 / (M + m_a1) + m_a2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyModel {
    pub m_a0: f64,
    pub m_a1: f64,
    pub m_a2: f64,
}

impl AccuracyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_a0 >= 0.0 && self.m_a2 >= 0.0 && self.m_a1 > -1.0)
            || !(self.m_a0.is_finite() && self.m_a1.is_finite() && self.m_a2.is_finite())
        {
            return Err(Error::InvalidParams(format!("bad accuracy model {self:?}")));
        }
        Ok(())
    }

    pub fn accuracy(&self, frames: f64) -> Result<f64> {
        let denom = frames + self.m_a1;
        if denom <= 0.0 {
            return Err(Error::Domain(format!(
                "accuracy curve has a pole at frames = {}; got frames = {frames}",
                -self.m_a1
            )));
        }
        Ok(self.m_a2 - self.m_a0 / denom)
    }

    /// Curve with the `m_a1` offset dropped, used inside the log-domain solvers.
    pub fn relaxed(&self, frames: f64) -> f64 {
        self.m_a2 - self.m_a0 / frames
    }
}

/// Illustrative coefficients shaped like a 3D ResNet-18 at 112×112 input.
/// These are not measured values.
impl Default for ComplexityModel {
    fn default() -> Self {
        Self { m_c0: 2.0e9, m_c1: 1.0e9 }
    }
}

/// Illustrative gesture-recognition style curve.
impl Default for AccuracyModel {
    fn default() -> Self {
        Self { m_a0: 1.2, m_a1: 2.0, m_a2: 0.95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Models {
    pub complexity: ComplexityModel,
    pub accuracy: AccuracyModel,
}

impl Models {
    pub fn validate(&self) -> Result<()> {
        self.complexity.validate()?;
        self.accuracy.validate()
    }
}

/// Everything a solver needs: system constants, models and the device list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub params: SystemParams,
    pub models: Models,
    pub devices: Vec<DeviceProfile>,
}

impl Instance {
    pub fn new(params: SystemParams, models: Models, devices: Vec<DeviceProfile>) -> Result<Self> {
        let inst = Self { params, models, devices };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.models.validate()?;
        for (i, d) in self.devices.iter().enumerate() {
            d.validate().map_err(|e| Error::InvalidParams(format!("device {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.devices.iter().map(|d| achievable_rate(&self.params, d)).collect()
    }
}

/// One 3D convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv3dLayerSpec {
    pub in_channels: u64,
    pub out_channels: u64,
    /// (temporal, height, width)
    pub kernel: [u64; 3],
    pub stride: [u64; 3],
    pub padding: [u64; 3],
}

impl Conv3dLayerSpec {
    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(Error::InvalidLayer(format!("channels, kernel and stride must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

/// Output feature-map size per axis: `floor((M - K + 2d) / r) + 1`.
pub fn conv3d_output_dims(layer: &Conv3dLayerSpec, in_dims: [u64; 3]) -> Result<[u64; 3]> {
    layer.validate()?;
    let mut out = [0u64; 3];
    for axis in 0..3 {
        let padded = in_dims[axis] + 2 * layer.padding[axis];
        if padded < layer.kernel[axis] {
            return Err(Error::InvalidLayer(format!(
                "axis {axis}: padded input {padded} smaller than kernel {}",
                layer.kernel[axis]
            )));
        }
        out[axis] = (padded - layer.kernel[axis]) / layer.stride[axis] + 1;
    }
    Ok(out)
}

/// `o_l * o_{l+1} * prod(K) * prod(output dims)`.
pub fn conv3d_macs(layer: &Conv3dLayerSpec, in_dims: [u64; 3]) -> Result<u64> {
    let out = conv3d_output_dims(layer, in_dims)?;
    let kernel: u64 = layer.kernel.iter().product();
    let fmap: u64 = out.iter().product();
    Ok(layer.in_channels * layer.out_channels * kernel * fmap)
}

pub fn linear_complexity(model: &ComplexityModel, frames: f64) -> f64 {
    model.macs(frames)
}

pub fn accuracy(model: &AccuracyModel, frames: f64) -> Result<f64> {
    model.accuracy(frames)
}

/// Shannon rate `B log2(1 + p h / (B N0))`, with N0 converted to W/Hz.
pub fn achievable_rate(params: &SystemParams, device: &DeviceProfile) -> f64 {
    let noise = params.bandwidth_hz * params.noise_density_w_per_hz();
    params.bandwidth_hz * (1.0 + device.tx_power_w * device.channel_gain / noise).log2()
}

/// Local execution cost `β1 ρC/f + β2 κρC f² - β3 Φ(M)`.
pub fn local_cost(params: &SystemParams, models: &Models, frames: f64, local_hz: f64) -> Result<f64> {
    if !(local_hz > 0.0) {
        return Err(Error::Domain(format!("local frequency must be > 0, got {local_hz}")));
    }
    let cycles = params.rho * models.complexity.macs(frames);
    let phi = models.accuracy.accuracy(frames)?;
    Ok(params.beta1 * cycles / local_hz + params.beta2 * params.kappa * cycles * local_hz * local_hz
        - params.beta3 * phi)
}

/// Edge execution cost `β1 ρC/fᵉ + β1 M d/(R t) + β2 M d p/R - β3 Φ(M)`.
pub fn edge_cost(
    params: &SystemParams,
    models: &Models,
    device: &DeviceProfile,
    frames: f64,
    edge_hz: f64,
    time_share: f64,
) -> Result<f64> {
    let rate = achievable_rate(params, device);
    edge_cost_with_rate(params, models, device, rate, frames, edge_hz, time_share)
}

pub(crate) fn edge_cost_with_rate(
    params: &SystemParams,
    models: &Models,
    device: &DeviceProfile,
    rate: f64,
    frames: f64,
    edge_hz: f64,
    time_share: f64,
) -> Result<f64> {
    if !(edge_hz > 0.0) || !(time_share > 0.0) {
        return Err(Error::Domain(format!(
            "edge frequency and time share must be > 0, got {edge_hz} and {time_share}"
        )));
    }
    if !(rate > 0.0) {
        return Err(Error::Domain("uplink rate is zero".into()));
    }
    let cycles = params.rho * models.complexity.macs(frames);
    let bits = frames * params.frame_bits;
    let phi = models.accuracy.accuracy(frames)?;
    Ok(params.beta1 * cycles / edge_hz
        + params.beta1 * bits / (rate * time_share)
        + params.beta2 * bits * device.tx_power_w / rate
        - params.beta3 * phi)
}

/// Decision for a single device.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviceDecision {
    pub offload: bool,
    pub frames: f64,
    pub time_share: f64,
    pub local_hz: f64,
    pub edge_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Allocation {
    pub devices: Vec<DeviceDecision>,
}

impl Allocation {
    pub fn offload_vector(&self) -> Vec<bool> {
        self.devices.iter().map(|d| d.offload).collect()
    }

    pub fn offload_rate(&self) -> f64 {
        if self.devices.is_empty() {
            return 0.0;
        }
        self.devices.iter().filter(|d| d.offload).count() as f64 / self.devices.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceMetrics {
    pub delay_s: f64,
    pub energy_j: f64,
    pub accuracy: f64,
    /// `β1 D + β2 E - β3 Φ`.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_device: Vec<DeviceMetrics>,
    pub total_delay_s: f64,
    pub total_energy_j: f64,
    pub total_accuracy: f64,
    pub avg_delay_s: f64,
    pub avg_energy_j: f64,
    pub avg_accuracy: f64,
    pub objective: f64,
    pub offload_rate: f64,
}

impl Metrics {
    pub fn avg_cost(&self) -> f64 {
        self.objective / self.per_device.len().max(1) as f64
    }
}

const FEAS_TOL: f64 = 1e-9;

/// Validates an allocation against every constraint and computes delay,
/// energy, accuracy and total cost per device.
pub fn evaluate_allocation(inst: &Instance, alloc: &Allocation) -> Result<Metrics> {
    let params = &inst.params;
    let models = &inst.models;
    let mut violations = Vec::new();
    if alloc.devices.len() != inst.devices.len() {
        return Err(Error::InfeasibleAllocation(vec![format!(
            "allocation has {} entries for {} devices",
            alloc.devices.len(),
            inst.devices.len()
        )]));
    }

    let mut time_sum = 0.0;
    let mut edge_sum = 0.0;
    for (n, (dec, dev)) in alloc.devices.iter().zip(&inst.devices).enumerate() {
        let lo = dev.m_min as f64 * (1.0 - FEAS_TOL);
        let hi = dev.m_max as f64 * (1.0 + FEAS_TOL);
        if !(dec.frames >= lo && dec.frames <= hi) {
            violations.push(format!("device {n}: frames {} outside [{}, {}]", dec.frames, dev.m_min, dev.m_max));
        }
        if dec.local_hz < 0.0 || dec.local_hz > dev.local_compute_hz * (1.0 + FEAS_TOL) {
            violations
                .push(format!("device {n}: local frequency {} outside [0, {}]", dec.local_hz, dev.local_compute_hz));
        }
        if dec.time_share < 0.0 || dec.edge_hz < 0.0 {
            violations.push(format!("device {n}: negative time share or edge frequency"));
        }
        if dec.offload {
            time_sum += dec.time_share;
            edge_sum += dec.edge_hz;
            if !(dec.time_share > 0.0 && dec.edge_hz > 0.0) {
                violations.push(format!("device {n}: offloaded with zero time share or edge frequency"));
            }
            if !(achievable_rate(params, dev) > 0.0) {
                violations.push(format!("device {n}: offloaded with zero uplink rate"));
            }
        } else if !(dec.local_hz > 0.0) {
            violations.push(format!("device {n}: local execution with zero frequency"));
        }
    }
    if time_sum > 1.0 + FEAS_TOL {
        violations.push(format!("time shares sum to {time_sum} > 1"));
    }
    if edge_sum > params.edge_compute_hz * (1.0 + FEAS_TOL) {
        violations.push(format!("edge frequencies sum to {edge_sum} > {}", params.edge_compute_hz));
    }
    if !violations.is_empty() {
        return Err(Error::InfeasibleAllocation(violations));
    }

    let mut per_device = Vec::with_capacity(alloc.devices.len());
    for (dec, dev) in alloc.devices.iter().zip(&inst.devices) {
        let cycles = params.rho * models.complexity.macs(dec.frames);
        let phi = models.accuracy.accuracy(dec.frames)?;
        let (delay, energy) = if dec.offload {
            let rate = achievable_rate(params, dev);
            let bits = dec.frames * params.frame_bits;
            (cycles / dec.edge_hz + bits / (rate * dec.time_share), bits * dev.tx_power_w / rate)
        } else {
            (cycles / dec.local_hz, params.kappa * cycles * dec.local_hz * dec.local_hz)
        };
        per_device.push(DeviceMetrics {
            delay_s: delay,
            energy_j: energy,
            accuracy: phi,
            cost: params.beta1 * delay + params.beta2 * energy - params.beta3 * phi,
        });
    }
    let n = per_device.len().max(1) as f64;
    let total_delay_s: f64 = per_device.iter().map(|m| m.delay_s).sum();
    let total_energy_j: f64 = per_device.iter().map(|m| m.energy_j).sum();
    let total_accuracy: f64 = per_device.iter().map(|m| m.accuracy).sum();
    Ok(Metrics {
        objective: per_device.iter().map(|m| m.cost).sum(),
        total_delay_s,
        total_energy_j,
        total_accuracy,
        avg_delay_s: total_delay_s / n,
        avg_energy_j: total_energy_j / n,
        avg_accuracy: total_accuracy / n,
        offload_rate: alloc.offload_rate(),
        per_device,
    })
}
