//! Experiment harness: named schemes, parameter sweeps, convergence traces,
//! local/edge breakdowns and the weight trade-off grid, all written as CSV.
//!
//! Every run draws its scenario from `stream_seed(cfg.seed, value_idx, rep)`
//! and stores that seed in its output row, so any row can be reproduced by
//! setting `cfg.seed` to the stored value and re-solving.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, AdmmOptions, AdmmResult, AdmmTraceRow};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{evaluate_allocation, Allocation, Instance, Metrics};
use crate::policy::{compose, solve_channel_aware, solve_exhaustive, EdgeInner};
use crate::scenario::{generate_scenario, stream_seed, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    GpHeuristic,
    SearchHeuristic,
    GpExhaustive,
    SearchExhaustive,
    Admm,
    Local,
    Edge,
    Random,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::GpHeuristic,
        Scheme::SearchHeuristic,
        Scheme::GpExhaustive,
        Scheme::SearchExhaustive,
        Scheme::Admm,
        Scheme::Local,
        Scheme::Edge,
        Scheme::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::GpHeuristic => "gp-heuristic",
            Scheme::SearchHeuristic => "search-heuristic",
            Scheme::GpExhaustive => "gp-exhaustive",
            Scheme::SearchExhaustive => "search-exhaustive",
            Scheme::Admm => "admm",
            Scheme::Local => "local",
            Scheme::Edge => "edge",
            Scheme::Random => "random",
        }
    }

    pub fn parse_list(text: &str) -> Result<Vec<Scheme>> {
        text.split(',').map(|s| s.trim().parse()).collect()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Scheme::ALL.iter().map(|k| k.name()).collect();
            Error::Config(format!("unknown scheme {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub admm: AdmmOptions,
    pub exhaustive_cap: usize,
    /// Execution mode inside a single solve.
    pub inner_exec: Exec,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            admm: AdmmOptions { exec: Exec::Sequential, ..AdmmOptions::default() },
            exhaustive_cap: 16,
            inner_exec: Exec::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub allocation: Allocation,
    pub metrics: Metrics,
    pub wall_time_s: f64,
    /// ADMM iteration count; `None` for other schemes.
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

/// Seed of the fair coin used by the random scheme for a given run.
pub fn random_scheme_seed(run_seed: u64) -> u64 {
    stream_seed(run_seed, u64::MAX, 0)
}

/// Solves one instance with one scheme and evaluates the result.
pub fn solve_scheme(inst: &Instance, scheme: Scheme, run_seed: u64, opts: &RunOptions) -> Result<Outcome> {
    let exec = opts.inner_exec;
    let clock = Instant::now();
    let mut iterations = None;
    let mut converged = None;
    let allocation = match scheme {
        Scheme::GpHeuristic => solve_channel_aware(inst, EdgeInner::Gp, exec)?.allocation,
        Scheme::SearchHeuristic => solve_channel_aware(inst, EdgeInner::Search, exec)?.allocation,
        Scheme::GpExhaustive => solve_exhaustive(inst, EdgeInner::Gp, opts.exhaustive_cap, exec)?.allocation,
        Scheme::SearchExhaustive => solve_exhaustive(inst, EdgeInner::Search, opts.exhaustive_cap, exec)?.allocation,
        Scheme::Admm => {
            let r = admm_solve(inst, opts.admm)?;
            iterations = Some(r.iterations);
            converged = Some(r.converged);
            r.allocation
        }
        Scheme::Local => compose(inst, &vec![false; inst.len()], EdgeInner::Gp, exec)?.allocation,
        Scheme::Edge => compose(inst, &vec![true; inst.len()], EdgeInner::Gp, exec)?.allocation,
        Scheme::Random => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(random_scheme_seed(run_seed));
            let x: Vec<bool> = (0..inst.len()).map(|_| rng.gen_bool(0.5)).collect();
            compose(inst, &x, EdgeInner::Gp, exec)?.allocation
        }
    };
    let wall_time_s = clock.elapsed().as_secs_f64();
    let metrics = evaluate_allocation(inst, &allocation)?;
    Ok(Outcome { allocation, metrics, wall_time_s, iterations, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    NDevices,
    Bandwidth,
    EdgeCompute,
    /// Accuracy weight `β3`; the rest is split evenly between delay and
    /// energy.
    Weights,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NDevices => "n_devices",
            SweepAxis::Bandwidth => "bandwidth",
            SweepAxis::EdgeCompute => "edge_compute",
            SweepAxis::Weights => "weights",
        }
    }

    /// Config with this axis set to `value`.
    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut c = cfg.clone();
        match self {
            SweepAxis::NDevices => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("n_devices must be a positive integer, got {value}")));
                }
                c.n_devices = value as usize;
            }
            SweepAxis::Bandwidth => c.bandwidth_hz = value,
            SweepAxis::EdgeCompute => c.edge_compute_hz = value,
            SweepAxis::Weights => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::Config(format!("accuracy weight must lie in [0, 1], got {value}")));
                }
                c.beta3 = value;
                c.beta1 = (1.0 - value) / 2.0;
                c.beta2 = (1.0 - value) / 2.0;
            }
        }
        c.params()?;
        Ok(c)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::NDevices, SweepAxis::Bandwidth, SweepAxis::EdgeCompute, SweepAxis::Weights]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sweep axis {s:?}; expected n_devices, bandwidth, edge_compute or weights"
                ))
            })
    }
}

/// One CSV row per (value, scheme, seed). Metric fields are empty when the
/// run failed, in which case `error` holds the message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub scheme: String,
    pub seed: u64,
    pub avg_cost: Option<f64>,
    pub avg_delay_s: Option<f64>,
    pub avg_energy_j: Option<f64>,
    pub avg_accuracy: Option<f64>,
    pub offload_rate: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub iterations: Option<usize>,
    pub error: String,
}

impl SweepRow {
    fn new(value: f64, scheme: Scheme, seed: u64, outcome: Result<Outcome>) -> Self {
        match outcome {
            Ok(o) => Self {
                value,
                scheme: scheme.name().into(),
                seed,
                avg_cost: Some(o.metrics.avg_cost()),
                avg_delay_s: Some(o.metrics.avg_delay_s),
                avg_energy_j: Some(o.metrics.avg_energy_j),
                avg_accuracy: Some(o.metrics.avg_accuracy),
                offload_rate: Some(o.metrics.offload_rate),
                wall_time_s: Some(o.wall_time_s),
                iterations: o.iterations,
                error: String::new(),
            },
            Err(e) => Self {
                value,
                scheme: scheme.name().into(),
                seed,
                avg_cost: None,
                avg_delay_s: None,
                avg_energy_j: None,
                avg_accuracy: None,
                offload_rate: None,
                wall_time_s: None,
                iterations: None,
                error: format!("{}: {e}", e.kind()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Rows of one scheme, in sweep order.
    pub fn scheme_rows<'a>(&'a self, scheme: Scheme) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.scheme == scheme.name())
    }
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub run: RunOptions,
    /// Execution mode across runs.
    pub exec: Exec,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { run: RunOptions::default(), exec: Exec::Parallel }
    }
}

/// Runs every scheme on `reps` scenarios per axis value. All schemes of one
/// (value, rep) pair see the same scenario. Failed runs are recorded in the
/// `error` column and the sweep continues; only an invalid axis value
/// aborts.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    schemes: &[Scheme],
    reps: usize,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    let configs: Vec<ScenarioConfig> = values.iter().map(|&v| axis.apply(cfg, v)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..values.len()).flat_map(|v| (0..reps).map(move |r| (v, r))).collect();
    let chunks = opts.exec.map(&jobs, |&(vi, rep)| {
        let seed = stream_seed(cfg.seed, vi as u64, rep as u64);
        let run_cfg = ScenarioConfig { seed, ..configs[vi].clone() };
        let scenario = generate_scenario(&run_cfg);
        schemes
            .iter()
            .map(|&scheme| {
                let outcome = match &scenario {
                    Ok(sc) => solve_scheme(&sc.instance, scheme, seed, &opts.run),
                    Err(e) => Err(Error::Config(e.to_string())),
                };
                SweepRow::new(values[vi], scheme, seed, outcome)
            })
            .collect::<Vec<_>>()
    });
    Ok(SweepResult { rows: chunks.into_iter().flatten().collect() })
}

/// Re-solves the run behind a sweep row from its stored seed.
pub fn rerun_row(cfg: &ScenarioConfig, axis: SweepAxis, row: &SweepRow, opts: &RunOptions) -> Result<Outcome> {
    let run_cfg = ScenarioConfig { seed: row.seed, ..axis.apply(cfg, row.value)? };
    let sc = generate_scenario(&run_cfg)?;
    solve_scheme(&sc.instance, row.scheme.parse()?, row.seed, opts)
}

/// Single-scenario ADMM run on `cfg` as given, with the full trace.
pub fn convergence_trace(cfg: &ScenarioConfig, opts: AdmmOptions) -> Result<AdmmResult> {
    let sc = generate_scenario(cfg)?;
    admm_solve(&sc.instance, opts)
}

#[derive(Debug, Serialize)]
struct TraceCsvRow {
    iter: usize,
    objective: f64,
    primal_res_f: f64,
    primal_res_t: f64,
    offload_rate: f64,
    flips: usize,
    converged: bool,
}

pub fn write_trace_csv<W: Write>(out: W, trace: &[AdmmTraceRow]) -> Result<()> {
    let rows: Vec<TraceCsvRow> = trace
        .iter()
        .map(|r| TraceCsvRow {
            iter: r.iter,
            objective: r.objective,
            primal_res_f: r.primal_res_f,
            primal_res_t: r.primal_res_t,
            offload_rate: r.offload_rate,
            flips: r.flips,
            converged: r.converged,
        })
        .collect();
    write_rows(out, &rows)
}

/// Pooled statistics of the devices in one set across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetStats {
    /// Mean set size per replication.
    pub count_mean: f64,
    pub devices: usize,
    pub avg_delay_s: f64,
    pub avg_energy_j: f64,
    pub avg_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    /// `None` when no device ran locally in any replication.
    pub local: Option<SetStats>,
    /// `None` when no device was offloaded in any replication.
    pub edge: Option<SetStats>,
    pub offload_fraction: f64,
    pub reps: usize,
    pub failures: usize,
}

#[derive(Debug, Serialize)]
struct BreakdownCsvRow {
    set: &'static str,
    count_mean: f64,
    avg_delay_s: f64,
    avg_energy_j: f64,
    avg_accuracy: f64,
}

impl Breakdown {
    /// One row per non-empty set.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows: Vec<BreakdownCsvRow> = [("local", self.local), ("edge", self.edge)]
            .into_iter()
            .filter_map(|(set, s)| {
                s.map(|s| BreakdownCsvRow {
                    set,
                    count_mean: s.count_mean,
                    avg_delay_s: s.avg_delay_s,
                    avg_energy_j: s.avg_energy_j,
                    avg_accuracy: s.avg_accuracy,
                })
            })
            .collect();
        write_rows(out, &rows)
    }
}

/// Splits per-device delay, energy and accuracy by offloading decision,
/// pooled over `reps` scenarios drawn like sweep value 0.
pub fn local_edge_breakdown(
    cfg: &ScenarioConfig,
    scheme: Scheme,
    reps: usize,
    opts: &SweepOptions,
) -> Result<Breakdown> {
    if reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    let outcomes = opts.exec.map_range(reps, |rep| {
        let seed = stream_seed(cfg.seed, 0, rep as u64);
        let sc = generate_scenario(&ScenarioConfig { seed, ..cfg.clone() })?;
        solve_scheme(&sc.instance, scheme, seed, &opts.run)
    });
    // (count, delay, energy, accuracy) per set
    let mut acc = [[0.0f64; 4]; 2];
    let mut rate = 0.0;
    let mut ok = 0;
    for o in outcomes.iter().flatten() {
        ok += 1;
        rate += o.metrics.offload_rate;
        for (d, m) in o.allocation.devices.iter().zip(&o.metrics.per_device) {
            let s = &mut acc[d.offload as usize];
            s[0] += 1.0;
            s[1] += m.delay_s;
            s[2] += m.energy_j;
            s[3] += m.accuracy;
        }
    }
    if ok == 0 {
        return Err(outcomes.into_iter().find_map(|o| o.err()).expect("all runs failed"));
    }
    let stats = |s: [f64; 4]| {
        (s[0] > 0.0).then(|| SetStats {
            count_mean: s[0] / ok as f64,
            devices: s[0] as usize,
            avg_delay_s: s[1] / s[0],
            avg_energy_j: s[2] / s[0],
            avg_accuracy: s[3] / s[0],
        })
    };
    Ok(Breakdown {
        local: stats(acc[0]),
        edge: stats(acc[1]),
        offload_fraction: rate / ok as f64,
        reps,
        failures: reps - ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub avg_cost: f64,
    pub avg_delay_s: f64,
    pub avg_energy_j: f64,
    pub avg_accuracy: f64,
    pub offload_rate: f64,
}

/// Interior points of the weight simplex with step `1/k`: every weight is
/// at least `1/k`.
pub fn weight_grid(k: usize) -> Result<Vec<[f64; 3]>> {
    if k < 3 {
        return Err(Error::Config(format!("weights grid needs k >= 3, got {k}")));
    }
    let kf = k as f64;
    let mut out = Vec::new();
    for i in 1..k {
        for j in 1..k - i {
            out.push([i as f64 / kf, j as f64 / kf, (k - i - j) as f64 / kf]);
        }
    }
    Ok(out)
}

/// Averages delay, energy and accuracy over `reps` scenarios at each grid
/// point. Unless `m_min_override` is set, the frame lower bound is dropped
/// to 1 so the frame count can respond to the weights.
pub fn tradeoff(
    cfg: &ScenarioConfig,
    k: usize,
    scheme: Scheme,
    reps: usize,
    opts: &SweepOptions,
) -> Result<Vec<TradeoffRow>> {
    if reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    let grid = weight_grid(k)?;
    let base = ScenarioConfig { m_min_override: cfg.m_min_override.or(Some(1)), ..cfg.clone() };
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..reps).map(move |r| (g, r))).collect();
    let outcomes = opts.exec.map(&jobs, |&(g, rep)| {
        let [b1, b2, b3] = grid[g];
        let seed = stream_seed(cfg.seed, 0, rep as u64);
        let c = ScenarioConfig { beta1: b1, beta2: b2, beta3: b3, seed, ..base.clone() };
        let sc = generate_scenario(&c)?;
        solve_scheme(&sc.instance, scheme, seed, &opts.run)
    });
    let mut rows = Vec::with_capacity(grid.len());
    for (g, w) in grid.iter().enumerate() {
        let mut s = [0.0; 5];
        for o in &outcomes[g * reps..(g + 1) * reps] {
            let m = &o.as_ref().map_err(|e| Error::Config(format!("weights {w:?}: {e}")))?.metrics;
            s[0] += m.avg_cost();
            s[1] += m.avg_delay_s;
            s[2] += m.avg_energy_j;
            s[3] += m.avg_accuracy;
            s[4] += m.offload_rate;
        }
        let r = reps as f64;
        rows.push(TradeoffRow {
            beta1: w[0],
            beta2: w[1],
            beta3: w[2],
            avg_cost: s[0] / r,
            avg_delay_s: s[1] / r,
            avg_energy_j: s[2] / r,
            avg_accuracy: s[3] / r,
            offload_rate: s[4] / r,
        });
    }
    Ok(rows)
}

pub fn write_tradeoff_csv<W: Write>(out: W, rows: &[TradeoffRow]) -> Result<()> {
    write_rows(out, rows)
}
