//! Resource allocation for the offloaded set.
//!
//! For fixed frame counts the edge compute and uplink time shares have a
//! closed form: `fᵉ ∝ √C(M)` and `t ∝ √(M/R)`. Substituting them gives the
//! reduced objective
//!
//! ```text
//! (β1 ρ / fᵐᵃˣ)(Σ √C(Mₙ))² + β1 d (Σ √(Mₙ/Rₙ))² + β2 d Σ pₙMₙ/Rₙ - β3 Σ Φ(Mₙ)
//! ```
//!
//! which is minimized over integer frames either by exhaustive search over
//! the grid product ([`solve_edge_search`]) or by a log-domain convex
//! relaxation ([`solve_edge_gp`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{achievable_rate, edge_cost_with_rate, DeviceProfile, Models, SystemParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSolution {
    pub frames: Vec<u32>,
    pub edge_hz: Vec<f64>,
    pub time_share: Vec<f64>,
    /// Sum of true per-device edge costs.
    pub cost: f64,
}

pub(crate) fn rates(params: &SystemParams, devices: &[DeviceProfile]) -> Result<Vec<f64>> {
    devices
        .iter()
        .enumerate()
        .map(|(n, d)| {
            let r = achievable_rate(params, d);
            if r > 0.0 && r.is_finite() {
                Ok(r)
            } else {
                Err(Error::Domain(format!("device {n}: uplink rate {r} is not positive")))
            }
        })
        .collect()
}

fn normalize(weights: &[f64], total: f64) -> Vec<f64> {
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        weights.iter().map(|w| total * w / sum).collect()
    } else {
        vec![total / weights.len() as f64; weights.len()]
    }
}

fn check_set(devices: &[DeviceProfile], frames_len: usize) -> Result<()> {
    if devices.is_empty() {
        return Err(Error::EmptyInput("offloaded set is empty".into()));
    }
    if frames_len != devices.len() {
        return Err(Error::InvalidParams(format!("{frames_len} frame counts for {} devices", devices.len())));
    }
    Ok(())
}

/// Optimal edge frequencies and time shares for fixed frame counts.
pub fn share_given_m(
    params: &SystemParams,
    models: &Models,
    devices: &[DeviceProfile],
    frames: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_set(devices, frames.len())?;
    let rates = rates(params, devices)?;
    Ok(shares_with_rates(params, models, &rates, frames))
}

pub(crate) fn shares_with_rates(
    params: &SystemParams,
    models: &Models,
    rates: &[f64],
    frames: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let sqrt_c: Vec<f64> = frames.iter().map(|&m| models.complexity.macs(m).sqrt()).collect();
    let sqrt_t: Vec<f64> = frames.iter().zip(rates).map(|(&m, &r)| (m / r).sqrt()).collect();
    (normalize(&sqrt_c, params.edge_compute_hz), normalize(&sqrt_t, 1.0))
}

/// Edge objective after substituting the optimal shares.
pub fn reduced_edge_objective(
    params: &SystemParams,
    models: &Models,
    devices: &[DeviceProfile],
    frames: &[f64],
) -> Result<f64> {
    check_set(devices, frames.len())?;
    let rates = rates(params, devices)?;
    let mut sum_c = 0.0;
    let mut sum_t = 0.0;
    let mut energy = 0.0;
    let mut acc = 0.0;
    for ((&m, &r), d) in frames.iter().zip(&rates).zip(devices) {
        sum_c += models.complexity.macs(m).sqrt();
        sum_t += (m / r).sqrt();
        energy += d.tx_power_w * m / r;
        acc += models.accuracy.accuracy(m)?;
    }
    Ok(params.beta1 * params.rho / params.edge_compute_hz * sum_c * sum_c
        + params.beta1 * params.frame_bits * sum_t * sum_t
        + params.beta2 * params.frame_bits * energy
        - params.beta3 * acc)
}

/// Builds the solution for integer frames: shares from the closed form and
/// the sum of true edge costs.
pub(crate) fn finish(
    params: &SystemParams,
    models: &Models,
    devices: &[DeviceProfile],
    rates: &[f64],
    frames: Vec<u32>,
) -> Result<EdgeSolution> {
    let mf: Vec<f64> = frames.iter().map(|&m| m as f64).collect();
    let (edge_hz, time_share) = shares_with_rates(params, models, rates, &mf);
    let mut cost = 0.0;
    for n in 0..devices.len() {
        cost += edge_cost_with_rate(params, models, &devices[n], rates[n], mf[n], edge_hz[n], time_share[n])?;
    }
    Ok(EdgeSolution { frames, edge_hz, time_share, cost })
}

/// Upper bound on the number of grid points [`solve_edge_search`] visits.
pub const SEARCH_LIMIT: u64 = 1 << 34;

/// Minimizes the reduced objective over the Cartesian product of per-device
/// frame grids. Ties go to the lexicographically smallest frame vector in
/// grid order.
pub fn solve_edge_search(
    params: &SystemParams,
    models: &Models,
    devices: &[DeviceProfile],
    grids: &[Vec<u32>],
    exec: Exec,
) -> Result<EdgeSolution> {
    check_set(devices, grids.len())?;
    let rates = rates(params, devices)?;
    let mut total: u64 = 1;
    for (n, g) in grids.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::EmptyInput(format!("device {n}: frame grid is empty")));
        }
        total = total
            .checked_mul(g.len() as u64)
            .filter(|&t| t <= SEARCH_LIMIT)
            .ok_or_else(|| Error::TooLarge(format!("frame grid product exceeds {SEARCH_LIMIT}")))?;
    }

    // per device and grid point: (√C, √(M/R), pM/R, Φ)
    let mut table: Vec<Vec<[f64; 4]>> = Vec::with_capacity(grids.len());
    for ((g, &r), d) in grids.iter().zip(&rates).zip(devices) {
        let mut rows = Vec::with_capacity(g.len());
        for &m in g {
            let m = m as f64;
            rows.push([
                models.complexity.macs(m).sqrt(),
                (m / r).sqrt(),
                d.tx_power_w * m / r,
                models.accuracy.accuracy(m)?,
            ]);
        }
        table.push(rows);
    }
    let k_c = params.beta1 * params.rho / params.edge_compute_hz;
    let k_t = params.beta1 * params.frame_bits;
    let k_e = params.beta2 * params.frame_bits;
    let k_a = params.beta3;

    // mixed radix with device 0 most significant, so index order is
    // lexicographic order on the frame vector
    let objective = |mut idx: u64| -> f64 {
        let mut s = [0.0; 4];
        for rows in table.iter().rev() {
            let base = rows.len() as u64;
            let row = &rows[(idx % base) as usize];
            idx /= base;
            for k in 0..4 {
                s[k] += row[k];
            }
        }
        k_c * s[0] * s[0] + k_t * s[1] * s[1] + k_e * s[2] - k_a * s[3]
    };
    let (best, _) = exec.argmin_range(total, objective).expect("nonempty product");

    let mut frames = vec![0; grids.len()];
    let mut idx = best;
    for (n, g) in grids.iter().enumerate().rev() {
        let base = g.len() as u64;
        frames[n] = g[(idx % base) as usize];
        idx /= base;
    }
    finish(params, models, devices, &rates, frames)
}

/// Continuous optimum of the log-domain relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSolution {
    /// `ln M` per device.
    pub log_frames: Vec<f64>,
    /// `ln(fᵉ / fᵐᵃˣ)` per device.
    pub log_edge_share: Vec<f64>,
    /// `ln t` per device.
    pub log_time_share: Vec<f64>,
    /// Objective with the relaxed accuracy `-m_a0/M + m_a2`.
    pub relaxed_objective: f64,
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

/// Edge cost with the relaxed accuracy curve at an arbitrary feasible point.
pub fn relaxed_edge_objective(
    params: &SystemParams,
    models: &Models,
    devices: &[DeviceProfile],
    frames: &[f64],
    edge_hz: &[f64],
    time_share: &[f64],
) -> Result<f64> {
    check_set(devices, frames.len())?;
    let rates = rates(params, devices)?;
    let mut total = 0.0;
    for n in 0..devices.len() {
        let m = frames[n];
        let cycles = params.rho * models.complexity.macs(m);
        let bits = m * params.frame_bits;
        total += params.beta1 * cycles / edge_hz[n]
            + params.beta1 * bits / (rates[n] * time_share[n])
            + params.beta2 * bits * devices[n].tx_power_w / rates[n]
            - params.beta3 * models.accuracy.relaxed(m);
    }
    Ok(total)
}

/// Reduced relaxed objective as a function of `m = ln M`:
///
/// ```text
/// k_c A(m)² + k_t B(m)² + Σ (eₙ e^{mₙ} + qₙ e^{-mₙ}) - β3 m_a2 N
/// A = Σ √(c0 e^{mₙ} + c1),  B = Σ √(e^{mₙ} / Rₙ)
/// ```
///
/// This is the log-domain program with the edge and time shares minimized
/// out in closed form, so it stays convex in `m`. Its Hessian is diagonal
/// plus the two rank-one terms `2 k_c ∇A ∇Aᵀ` and `2 k_t ∇B ∇Bᵀ`.
struct Reduced {
    k_c: f64,
    k_t: f64,
    c0: f64,
    c1: f64,
    inv_rate: Vec<f64>,
    e: Vec<f64>,
    q: Vec<f64>,
    constant: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Reduced {
    fn value(&self, m: &[f64]) -> f64 {
        let mut a = 0.0;
        let mut b = 0.0;
        let mut rest = 0.0;
        for (i, &mi) in m.iter().enumerate() {
            let em = mi.exp();
            a += (self.c0 * em + self.c1).sqrt();
            b += (em * self.inv_rate[i]).sqrt();
            rest += self.e[i] * em + self.q[i] / em;
        }
        self.k_c * a * a + self.k_t * b * b + rest - self.constant
    }

    /// Gradient, Hessian diagonal and the two rank-one factors.
    fn derivatives(&self, m: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = m.len();
        let em: Vec<f64> = m.iter().map(|v| v.exp()).collect();
        let ai: Vec<f64> = em.iter().map(|&x| (self.c0 * x + self.c1).sqrt()).collect();
        let bi: Vec<f64> = em.iter().zip(&self.inv_rate).map(|(&x, &r)| (x * r).sqrt()).collect();
        let a: f64 = ai.iter().sum();
        let b: f64 = bi.iter().sum();
        let mut grad = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        for i in 0..n {
            let (da, d2a) = if ai[i] > 0.0 {
                let da = self.c0 * em[i] / (2.0 * ai[i]);
                (da, da * (1.0 - self.c0 * em[i] / (2.0 * ai[i] * ai[i])))
            } else {
                (0.0, 0.0)
            };
            let db = bi[i] / 2.0;
            let d2b = bi[i] / 4.0;
            let own = self.e[i] * em[i] + self.q[i] / em[i];
            grad[i] = 2.0 * self.k_c * a * da + 2.0 * self.k_t * b * db + self.e[i] * em[i] - self.q[i] / em[i];
            diag[i] = 2.0 * self.k_c * a * d2a + 2.0 * self.k_t * b * d2b + own;
            u[i] = (2.0 * self.k_c).sqrt() * da;
            v[i] = (2.0 * self.k_t).sqrt() * db;
        }
        (grad, diag, u, v)
    }

    /// Gradient with components that push against an active bound zeroed.
    fn projected_gradient(&self, m: &[f64], grad: &[f64]) -> Vec<f64> {
        (0..m.len()).map(|i| if self.at_bound(m, grad, i) { 0.0 } else { grad[i] }).collect()
    }

    fn at_bound(&self, m: &[f64], grad: &[f64], i: usize) -> bool {
        let span = 1e-12 * (1.0 + self.hi[i].abs());
        self.lo[i] >= self.hi[i]
            || (m[i] <= self.lo[i] + span && grad[i] > 0.0)
            || (m[i] >= self.hi[i] - span && grad[i] < 0.0)
    }

    fn project(&self, m: &mut [f64]) {
        for i in 0..m.len() {
            m[i] = m[i].clamp(self.lo[i], self.hi[i]);
        }
    }
}

/// `(D + u uᵀ + v vᵀ) x = r` for diagonal `D > 0`, restricted to `free`.
fn woodbury2(diag: &[f64], u: &[f64], v: &[f64], r: &[f64], free: &[bool]) -> Vec<f64> {
    let n = diag.len();
    let mut da = vec![0.0; n];
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    for i in (0..n).filter(|&i| free[i]) {
        da[i] = r[i] / diag[i];
        du[i] = u[i] / diag[i];
        dv[i] = v[i] / diag[i];
    }
    let dot = |x: &[f64], y: &[f64]| -> f64 { (0..n).filter(|&i| free[i]).map(|i| x[i] * y[i]).sum() };
    let s00 = 1.0 + dot(u, &du);
    let s01 = dot(u, &dv);
    let s11 = 1.0 + dot(v, &dv);
    let r0 = dot(u, &da);
    let r1 = dot(v, &da);
    let det = s00 * s11 - s01 * s01;
    let c0 = (s11 * r0 - s01 * r1) / det;
    let c1 = (s00 * r1 - s01 * r0) / det;
    (0..n).map(|i| if free[i] { da[i] - c0 * du[i] - c1 * dv[i] } else { 0.0 }).collect()
}

const GP_TOL: f64 = 1e-13;
const GP_KKT_TOL: f64 = 1e-8;
const GP_MAX_NEWTON: usize = 500;

/// Solves the log-domain relaxation over `(ln M, ln(fᵉ/fᵐᵃˣ), ln t)`.
///
/// For any `ln M` the optimal shares are the closed-form square-root
/// splits, which leave both coupling constraints active with multipliers
/// that satisfy stationarity exactly. The remaining box-constrained problem
/// in `ln M` is solved by projected Newton with Armijo backtracking. The
/// reported KKT residual is the projected gradient's max norm.
pub fn solve_gp_relaxed(params: &SystemParams, models: &Models, devices: &[DeviceProfile]) -> Result<GpSolution> {
    if devices.is_empty() {
        return Err(Error::EmptyInput("offloaded set is empty".into()));
    }
    if models.complexity.m_c1 < 0.0 {
        return Err(Error::Domain(
            "negative complexity intercept is not posynomial; log-domain solve undefined".into(),
        ));
    }
    let rates = rates(params, devices)?;
    let n = devices.len();
    let red = Reduced {
        k_c: params.beta1 * params.rho / params.edge_compute_hz,
        k_t: params.beta1 * params.frame_bits,
        c0: models.complexity.m_c0,
        c1: models.complexity.m_c1,
        inv_rate: rates.iter().map(|r| 1.0 / r).collect(),
        e: devices.iter().zip(&rates).map(|(d, r)| params.beta2 * params.frame_bits * d.tx_power_w / r).collect(),
        q: vec![params.beta3 * models.accuracy.m_a0; n],
        constant: params.beta3 * models.accuracy.m_a2 * n as f64,
        lo: devices.iter().map(|d| (d.m_min as f64).ln()).collect(),
        hi: devices.iter().map(|d| (d.m_max as f64).ln()).collect(),
    };

    let mut m: Vec<f64> = (0..n).map(|i| 0.5 * (red.lo[i] + red.hi[i])).collect();
    let mut steps = 0;
    let mut residual;
    loop {
        let (grad, diag, u, v) = red.derivatives(&m);
        let pg = red.projected_gradient(&m, &grad);
        residual = pg.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if residual <= GP_TOL || steps >= GP_MAX_NEWTON {
            break;
        }
        let free: Vec<bool> = (0..n).map(|i| !red.at_bound(&m, &grad, i)).collect();
        let diag: Vec<f64> = diag.iter().map(|d| d.max(f64::MIN_POSITIVE)).collect();
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let dir = woodbury2(&diag, &u, &v, &neg, &free);
        let f0 = red.value(&m);
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let mut trial: Vec<f64> = m.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            red.project(&mut trial);
            let decrease: f64 = (0..n).map(|i| grad[i] * (trial[i] - m[i])).sum();
            let f1 = red.value(&trial);
            if f1 <= f0 + 1e-4 * decrease {
                moved = trial != m;
                m = trial;
                break;
            }
            step *= 0.5;
        }
        steps += 1;
        if !moved {
            // stalled at working precision; the residual check decides
            let (grad, _, _, _) = red.derivatives(&m);
            let pg = red.projected_gradient(&m, &grad);
            residual = pg.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            break;
        }
    }
    if !(residual <= GP_KKT_TOL) {
        return Err(Error::Convergence { solver: "edge GP", iterations: steps, residual });
    }

    let frames: Vec<f64> = m.iter().map(|v| v.exp()).collect();
    let (fe, t) = shares_with_rates(params, models, &rates, &frames);
    Ok(GpSolution {
        log_edge_share: fe.iter().map(|f| (f / params.edge_compute_hz).ln()).collect(),
        log_time_share: t.iter().map(|v| v.ln()).collect(),
        relaxed_objective: red.value(&m),
        log_frames: m,
        kkt_residual: residual,
        newton_steps: steps,
    })
}

/// Nearest integer with halves rounded down.
pub(crate) fn round_half_down(v: f64) -> f64 {
    (v - 0.5).ceil()
}

/// Solves the relaxation, rounds frames to the nearest integer within
/// bounds and recomputes the shares in closed form.
pub fn solve_edge_gp(params: &SystemParams, models: &Models, devices: &[DeviceProfile]) -> Result<EdgeSolution> {
    let gp = solve_gp_relaxed(params, models, devices)?;
    let rates = rates(params, devices)?;
    let frames = gp
        .log_frames
        .iter()
        .zip(devices)
        .map(|(&lm, d)| round_half_down(lm.exp()).clamp(d.m_min as f64, d.m_max as f64) as u32)
        .collect();
    finish(params, models, devices, &rates, frames)
}
