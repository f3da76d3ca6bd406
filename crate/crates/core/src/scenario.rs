//! Seeded single-cell scenarios: devices dropped uniformly in a square
//! region around a central base station, with log-distance path loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AccuracyModel, ComplexityModel, DeviceProfile, Instance, Models, SystemParams, DEFAULT_FRAME_BITS};

/// Full scenario description. Serialized as JSON; every physical field
/// carries its unit in the name.
///
/// The default complexity and accuracy coefficients are illustrative
/// values shaped like a 3D-CNN action recognizer, not measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_devices: usize,
    /// Side of the square region; the base station sits at its center.
    pub region_m: f64,
    pub seed: u64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub kappa: f64,
    pub rho_cycles_per_mac: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub edge_compute_hz: f64,
    pub device_compute_hz: f64,
    pub accuracy_floor: f64,
    pub m_max: u32,
    /// Replaces the frame lower bound derived from the accuracy floor.
    pub m_min_override: Option<u32>,
    pub tx_power_w: f64,
    pub frame_bits: f64,
    pub radio_frame_s: f64,
    pub complexity: ComplexityModel,
    pub accuracy: AccuracyModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let p = SystemParams::default();
        Self {
            n_devices: 10,
            region_m: 500.0,
            seed: 1,
            bandwidth_hz: p.bandwidth_hz,
            noise_density_dbm_hz: p.noise_density_dbm_hz,
            kappa: p.kappa,
            rho_cycles_per_mac: p.rho,
            beta1: p.beta1,
            beta2: p.beta2,
            beta3: p.beta3,
            edge_compute_hz: p.edge_compute_hz,
            device_compute_hz: 1.8e9,
            accuracy_floor: 0.86,
            m_max: 16,
            m_min_override: None,
            tx_power_w: 0.1,
            frame_bits: DEFAULT_FRAME_BITS,
            radio_frame_s: p.radio_frame_s,
            complexity: ComplexityModel::default(),
            accuracy: AccuracyModel::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.params()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn params(&self) -> Result<SystemParams> {
        let p = SystemParams {
            beta1: self.beta1,
            beta2: self.beta2,
            beta3: self.beta3,
            bandwidth_hz: self.bandwidth_hz,
            noise_density_dbm_hz: self.noise_density_dbm_hz,
            kappa: self.kappa,
            rho: self.rho_cycles_per_mac,
            frame_bits: self.frame_bits,
            edge_compute_hz: self.edge_compute_hz,
            radio_frame_s: self.radio_frame_s,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn models(&self) -> Result<Models> {
        let m = Models { complexity: self.complexity, accuracy: self.accuracy };
        m.validate()?;
        Ok(m)
    }

    /// Frame lower bound: the override if set, otherwise the smallest frame
    /// count whose accuracy reaches the floor.
    pub fn m_min(&self) -> Result<u32> {
        if let Some(m) = self.m_min_override {
            return Ok(m);
        }
        min_frames_for_accuracy(&self.accuracy, self.accuracy_floor, self.m_max)
    }
}

/// Smallest `M` in `1..=m_max` with `Φ(M) ≥ floor`.
pub fn min_frames_for_accuracy(model: &AccuracyModel, floor: f64, m_max: u32) -> Result<u32> {
    (1..=m_max)
        .find(|&m| model.accuracy(m as f64).is_ok_and(|a| a >= floor))
        .ok_or_else(|| Error::Config(format!("accuracy floor {floor} is unreachable within {m_max} frames")))
}

/// `128.1 + 37.6 log10(D)` with `D` in km.
pub fn path_loss_db(distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0) {
        return Err(Error::Domain(format!("distance must be > 0, got {distance_km}")));
    }
    Ok(128.1 + 37.6 * distance_km.log10())
}

/// Devices closer than this to the base station are placed at this range,
/// keeping the path-loss model in its domain.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub instance: Instance,
    /// Device coordinates in metres, origin at the region's corner.
    pub positions: Vec<[f64; 2]>,
    pub distances_m: Vec<f64>,
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    let params = cfg.params()?;
    let models = cfg.models()?;
    if cfg.n_devices == 0 {
        return Err(Error::Config("n_devices must be >= 1".into()));
    }
    if !(cfg.region_m > 0.0) {
        return Err(Error::Config(format!("region_m must be > 0, got {}", cfg.region_m)));
    }
    let m_min = cfg.m_min()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let center = cfg.region_m / 2.0;
    let mut positions = Vec::with_capacity(cfg.n_devices);
    let mut distances_m = Vec::with_capacity(cfg.n_devices);
    let mut devices = Vec::with_capacity(cfg.n_devices);
    for _ in 0..cfg.n_devices {
        let x = rng.gen_range(0.0..cfg.region_m);
        let y = rng.gen_range(0.0..cfg.region_m);
        let dist = (x - center).hypot(y - center).max(MIN_DISTANCE_M);
        let pl = path_loss_db(dist / 1000.0)?;
        positions.push([x, y]);
        distances_m.push(dist);
        devices.push(DeviceProfile {
            channel_gain: 10f64.powf(-pl / 10.0),
            tx_power_w: cfg.tx_power_w,
            local_compute_hz: cfg.device_compute_hz,
            m_min,
            m_max: cfg.m_max,
            accuracy_floor: cfg.accuracy_floor,
        });
    }
    let instance = Instance::new(params, models, devices)?;
    Ok(Scenario { instance, positions, distances_m })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for replication `rep` of sweep point `value_idx`.
pub fn stream_seed(base: u64, value_idx: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ value_idx) ^ rep)
}
