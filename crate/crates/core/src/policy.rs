//! Offloading decisions. Each scheme picks the binary offload vector and
//! composes per-set solutions: the closed-form local optimum for local devices and the
//! edge solver of choice for the offloaded set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edge::{solve_edge_gp, solve_edge_search};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::local::solve_local;
use crate::model::{evaluate_allocation, Allocation, DeviceDecision, DeviceProfile, Instance};

/// Solver used for the offloaded set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeInner {
    /// Exhaustive search over each device's full frame grid.
    Search,
    /// Log-domain relaxation with rounding.
    Gp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OffloadScheme {
    ChannelAware,
    Exhaustive,
    AllLocal,
    AllEdge,
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyOptions {
    pub edge_inner: EdgeInner,
    /// Largest N accepted by the exhaustive scheme.
    pub exhaustive_cap: usize,
    pub exec: Exec,
}

impl Default for PolicyOptions {
    fn default() -> Self {
        Self { edge_inner: EdgeInner::Gp, exhaustive_cap: 16, exec: Exec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solved {
    pub allocation: Allocation,
    /// Total objective as computed by [`evaluate_allocation`].
    pub cost: f64,
}

/// Improvements smaller than this are treated as float noise.
pub const IMPROVEMENT_EPS: f64 = 1e-12;

/// Builds and evaluates the allocation for a fixed offload vector.
pub fn compose(inst: &Instance, offload: &[bool], inner: EdgeInner, exec: Exec) -> Result<Solved> {
    let n = inst.len();
    if offload.len() != n {
        return Err(Error::InvalidParams(format!("{} offload flags for {n} devices", offload.len())));
    }
    let mut decisions = vec![DeviceDecision::default(); n];
    let edge_idx: Vec<usize> = (0..n).filter(|&i| offload[i]).collect();
    for i in (0..n).filter(|&i| !offload[i]) {
        let s = solve_local(&inst.params, &inst.models, &inst.devices[i])?;
        decisions[i] = DeviceDecision {
            offload: false,
            frames: s.frames as f64,
            time_share: 0.0,
            local_hz: s.local_hz,
            edge_hz: 0.0,
        };
    }
    if !edge_idx.is_empty() {
        let devs: Vec<DeviceProfile> = edge_idx.iter().map(|&i| inst.devices[i]).collect();
        let sol = match inner {
            EdgeInner::Gp => solve_edge_gp(&inst.params, &inst.models, &devs)?,
            EdgeInner::Search => {
                let grids: Vec<Vec<u32>> = devs.iter().map(|d| d.frame_grid()).collect();
                solve_edge_search(&inst.params, &inst.models, &devs, &grids, exec)?
            }
        };
        for (k, &i) in edge_idx.iter().enumerate() {
            decisions[i] = DeviceDecision {
                offload: true,
                frames: sol.frames[k] as f64,
                time_share: sol.time_share[k],
                local_hz: 0.0,
                edge_hz: sol.edge_hz[k],
            };
        }
    }
    let allocation = Allocation { devices: decisions };
    let cost = evaluate_allocation(inst, &allocation)?.objective;
    Ok(Solved { allocation, cost })
}

/// Starts with every device offloaded and moves the weakest-channel device
/// to local execution while that lowers the total cost.
pub fn solve_channel_aware(inst: &Instance, inner: EdgeInner, exec: Exec) -> Result<Solved> {
    if inst.is_empty() {
        return Err(Error::EmptyInput("no devices".into()));
    }
    let mut offload = vec![true; inst.len()];
    let mut current = compose(inst, &offload, inner, exec)?;
    loop {
        // lowest gain, ties to lowest index
        let candidate = (0..inst.len())
            .filter(|&i| offload[i])
            .min_by(|&a, &b| inst.devices[a].channel_gain.total_cmp(&inst.devices[b].channel_gain).then(a.cmp(&b)));
        let Some(i) = candidate else { break };
        offload[i] = false;
        let trial = compose(inst, &offload, inner, exec)?;
        if trial.cost < current.cost - IMPROVEMENT_EPS {
            current = trial;
        } else {
            break;
        }
    }
    Ok(current)
}

/// Minimum-cost allocation over all `2^N` offload vectors. Bit `n` of the
/// mask is device `n`'s offload flag; ties go to the lowest mask.
pub fn solve_exhaustive(inst: &Instance, inner: EdgeInner, cap: usize, exec: Exec) -> Result<Solved> {
    let n = inst.len();
    if n == 0 {
        return Err(Error::EmptyInput("no devices".into()));
    }
    if n > cap || n >= 63 {
        return Err(Error::TooLarge(format!("exhaustive offloading over {n} devices exceeds the cap of {cap}")));
    }
    let mask_to_vec = |mask: usize| -> Vec<bool> { (0..n).map(|i| mask >> i & 1 == 1).collect() };
    // the inner search runs sequentially; the masks already fill the pool
    let costs =
        exec.map_range(1 << n, |mask| compose(inst, &mask_to_vec(mask), inner, Exec::Sequential).map(|s| s.cost));
    let mut best: Option<(usize, f64)> = None;
    for (mask, c) in costs.into_iter().enumerate() {
        let c = c?;
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((mask, c));
        }
    }
    let (mask, _) = best.expect("at least one mask");
    compose(inst, &mask_to_vec(mask), inner, Exec::Sequential)
}

/// Reference schemes: all local, all offloaded (GP edge solve), or a
/// seeded fair coin per device.
pub fn solve_baseline(scheme: OffloadScheme, inst: &Instance, exec: Exec) -> Result<Solved> {
    let n = inst.len();
    let offload = match scheme {
        OffloadScheme::AllLocal => vec![false; n],
        OffloadScheme::AllEdge => vec![true; n],
        OffloadScheme::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.gen_bool(0.5)).collect()
        }
        other => {
            return Err(Error::InvalidParams(format!("{other:?} is not a baseline scheme")));
        }
    };
    compose(inst, &offload, EdgeInner::Gp, exec)
}

pub fn solve(inst: &Instance, scheme: OffloadScheme, opts: PolicyOptions) -> Result<Solved> {
    match scheme {
        OffloadScheme::ChannelAware => solve_channel_aware(inst, opts.edge_inner, opts.exec),
        OffloadScheme::Exhaustive => solve_exhaustive(inst, opts.edge_inner, opts.exhaustive_cap, opts.exec),
        _ => solve_baseline(scheme, inst, opts.exec),
    }
}
