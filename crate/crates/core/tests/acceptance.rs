//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Costs in this system are usually negative (the accuracy reward dominates),
//! so every "within x% of" bound is read as `candidate - reference <= x *
//! |reference|`.
//!
//! Exits 0 even when a criterion fails so the rest of `cargo test` still
//! runs; set `ACCEPTANCE_STRICT=1` to turn failures into a nonzero exit.

use std::time::{Duration, Instant};

use mec_offload::admm::{
    admm_global_update, admm_local_update, admm_multiplier_update, admm_solve, AdmmOptions, AdmmState,
};
use mec_offload::edge::{share_given_m, solve_edge_gp, solve_edge_search};
use mec_offload::exec::Exec;
use mec_offload::fit::{fit_accuracy, fit_complexity, AccuracySample, ComplexitySample};
use mec_offload::harness::{
    local_edge_breakdown, run_sweep, solve_scheme, RunOptions, Scheme, SweepAxis, SweepOptions,
};
use mec_offload::local::solve_local;
use mec_offload::model::{
    achievable_rate, local_cost, AccuracyModel, ComplexityModel, DeviceProfile, Instance, Models, SystemParams,
};
use mec_offload::policy::{compose, solve_channel_aware, solve_exhaustive, EdgeInner};
use mec_offload::scenario::{generate_scenario, stream_seed, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name, check and runtime budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, Option<f64>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn gap(candidate: f64, reference: f64) -> f64 {
    (candidate - reference) / reference.abs()
}

fn scenario(n: usize, seed: u64) -> Instance {
    let cfg = ScenarioConfig { n_devices: n, seed, ..Default::default() };
    generate_scenario(&cfg).expect("default scenario").instance
}

fn seq_opts() -> RunOptions {
    RunOptions::default()
}

fn random_params(rng: &mut ChaCha8Rng) -> (SystemParams, Models, DeviceProfile) {
    let w: [f64; 3] = [rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0)];
    let s: f64 = w.iter().sum();
    let params = SystemParams {
        beta1: w[0] / s,
        beta2: w[1] / s,
        beta3: w[2] / s,
        kappa: 10f64.powf(rng.gen_range(-29.0..-27.0)),
        rho: rng.gen_range(0.05..0.5),
        ..Default::default()
    };
    let models = Models {
        complexity: ComplexityModel { m_c0: rng.gen_range(0.5e9..4e9), m_c1: rng.gen_range(0.0..3e9) },
        accuracy: AccuracyModel {
            m_a0: rng.gen_range(0.2..3.0),
            m_a1: rng.gen_range(-0.5..5.0),
            m_a2: rng.gen_range(0.8..1.0),
        },
    };
    let m_min = rng.gen_range(1..8);
    let device = DeviceProfile {
        channel_gain: 1e-10,
        tx_power_w: 0.1,
        local_compute_hz: rng.gen_range(0.8e9..3e9),
        m_min,
        m_max: rng.gen_range(m_min..=24),
        accuracy_floor: 0.0,
    };
    (params, models, device)
}

fn c1_local_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let (p, m, d) = random_params(&mut rng);
        let sol = solve_local(&p, &m, &d).unwrap();
        let mut grid_min = f64::INFINITY;
        for k in 1..=1000 {
            let f = d.local_compute_hz * k as f64 / 1000.0;
            for frames in d.m_min..=d.m_max {
                grid_min = grid_min.min(local_cost(&p, &m, frames as f64, f).unwrap());
            }
        }
        worst = worst.max(sol.cost - grid_min);
    }
    Outcome { pass: worst <= 1e-9, detail: format!("worst cost - grid minimum = {worst:.3e} over 100 draws") }
}

fn c2_share_kkt() -> Outcome {
    let p = SystemParams::default();
    let models = Models::default();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut sum_err, mut ratio_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.gen_range(2..=8);
        let devs: Vec<DeviceProfile> = (0..n)
            .map(|_| DeviceProfile {
                channel_gain: 10f64.powf(rng.gen_range(-13.0..-8.0)),
                tx_power_w: rng.gen_range(0.05..0.5),
                local_compute_hz: 1.8e9,
                m_min: 1,
                m_max: 16,
                accuracy_floor: 0.0,
            })
            .collect();
        let frames: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=16) as f64).collect();
        let (fe, t) = share_given_m(&p, &models, &devs, &frames).unwrap();
        sum_err = sum_err
            .max((fe.iter().sum::<f64>() / p.edge_compute_hz - 1.0).abs())
            .max((t.iter().sum::<f64>() - 1.0).abs());
        let r: Vec<f64> = devs.iter().map(|d| achievable_rate(&p, d)).collect();
        // marginal delay reduction per unit of each resource
        let cf: Vec<f64> =
            (0..n).map(|i| p.beta1 * p.rho * models.complexity.macs(frames[i]) / fe[i].powi(2)).collect();
        let ct: Vec<f64> = (0..n).map(|i| p.beta1 * frames[i] * p.frame_bits / (r[i] * t[i].powi(2))).collect();
        for i in 1..n {
            ratio_err = ratio_err.max((cf[i] / cf[0] - 1.0).abs()).max((ct[i] / ct[0] - 1.0).abs());
        }
    }
    Outcome {
        pass: sum_err <= 1e-9 && ratio_err <= 1e-8,
        detail: format!("budget error {sum_err:.2e}, stationarity ratio spread {ratio_err:.2e} over 100 sets"),
    }
}

fn c3_gp_vs_search() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for s in 0..50u64 {
        let n = 1 + (s % 4) as usize;
        let inst = scenario(n, stream_seed(103, s, 0));
        let grids: Vec<Vec<u32>> = inst.devices.iter().map(|d| d.frame_grid()).collect();
        let search = solve_edge_search(&inst.params, &inst.models, &inst.devices, &grids, Exec::Sequential).unwrap();
        let gp = solve_edge_gp(&inst.params, &inst.models, &inst.devices).unwrap();
        worst = worst.max(gap(gp.cost, search.cost));
    }
    Outcome { pass: worst <= 0.01, detail: format!("worst GP gap over search {:.4}% on 50 scenarios", 100.0 * worst) }
}

fn c4_heuristic_vs_exhaustive() -> Outcome {
    let (mut same, mut worst) = (0, 0.0f64);
    for s in 0..100u64 {
        let n = 1 + (s % 4) as usize;
        let inst = scenario(n, stream_seed(104, s, 0));
        let ca = solve_channel_aware(&inst, EdgeInner::Gp, Exec::Sequential).unwrap();
        let ex = solve_exhaustive(&inst, EdgeInner::Gp, 16, Exec::Sequential).unwrap();
        if ca.allocation.offload_vector() == ex.allocation.offload_vector() {
            same += 1;
        } else {
            worst = worst.max(gap(ca.cost, ex.cost));
        }
    }
    Outcome {
        pass: same >= 90 && worst <= 0.01,
        detail: format!("same offload set in {same}/100, worst gap otherwise {:.4}%", 100.0 * worst),
    }
}

fn c5_admm_quality() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for s in 0..50u64 {
        let n = 1 + (s % 4) as usize;
        let inst = scenario(n, stream_seed(105, s, 0));
        let ex = solve_exhaustive(&inst, EdgeInner::Search, 16, Exec::Sequential).unwrap();
        let r = admm_solve(&inst, AdmmOptions { exec: Exec::Sequential, ..Default::default() }).unwrap();
        worst = worst.max(gap(r.cost, ex.cost));
    }
    Outcome {
        pass: worst <= 0.02,
        detail: format!("worst ADMM gap over search-exhaustive {:.4}% on 50 instances", 100.0 * worst),
    }
}

fn c6_admm_convergence() -> Outcome {
    let (mut ok, mut unconverged, mut max_iters) = (0, 0, 0);
    for s in 0..20u64 {
        let inst = scenario(16, stream_seed(106, s, 0));
        let r = admm_solve(&inst, AdmmOptions { exec: Exec::Sequential, ..Default::default() }).unwrap();
        max_iters = max_iters.max(r.iterations);
        if !r.converged {
            unconverged += 1;
            continue;
        }
        let fin = r.trace.last().unwrap().objective;
        let at10 = r.trace[r.trace.len().min(10) - 1].objective;
        if (at10 - fin).abs() <= 0.05 * fin.abs() {
            ok += 1;
        }
    }
    Outcome {
        pass: ok >= 18,
        detail: format!(
            "{ok}/20 seeds within 5% of the converged value by iteration 10 ({unconverged} did not converge; \
             longest run {max_iters} iterations)"
        ),
    }
}

fn c7_offload_phase() -> Outcome {
    let cfg = ScenarioConfig { seed: 107, ..Default::default() };
    let opts = SweepOptions::default();
    let small =
        run_sweep(&cfg, SweepAxis::NDevices, &[2.0, 4.0, 6.0, 8.0, 10.0], &[Scheme::GpHeuristic], 20, &opts).unwrap();
    let full = small.rows.iter().filter(|r| r.offload_rate == Some(1.0)).count();
    let large = run_sweep(&cfg, SweepAxis::NDevices, &[16.0, 20.0, 25.0], &[Scheme::GpHeuristic], 20, &opts).unwrap();
    let means: Vec<f64> = [16.0, 20.0, 25.0]
        .iter()
        .map(|&v| {
            let rates: Vec<f64> = large.rows.iter().filter(|r| r.value == v).filter_map(|r| r.offload_rate).collect();
            rates.iter().sum::<f64>() / rates.len() as f64
        })
        .collect();
    let small_means: Vec<String> = [2.0, 4.0, 6.0, 8.0, 10.0]
        .iter()
        .map(|&v| {
            let rates: Vec<f64> = small.rows.iter().filter(|r| r.value == v).filter_map(|r| r.offload_rate).collect();
            format!("{:.2}", rates.iter().sum::<f64>() / rates.len() as f64)
        })
        .collect();
    let pass = full == small.rows.len() && means.iter().all(|&m| m < 1.0) && means.windows(2).all(|w| w[1] <= w[0]);
    Outcome {
        pass,
        detail: format!(
            "N<=10: {full}/{} runs fully offloaded (means {}); N=16,20,25 means {:.3}, {:.3}, {:.3}",
            small.rows.len(),
            small_means.join(", "),
            means[0],
            means[1],
            means[2]
        ),
    }
}

fn c8_table_orderings() -> Outcome {
    let cfg = ScenarioConfig { n_devices: 25, seed: 108, ..Default::default() };
    let b = local_edge_breakdown(&cfg, Scheme::GpHeuristic, 20, &SweepOptions::default()).unwrap();
    let (Some(l), Some(e)) = (b.local, b.edge) else {
        return Outcome { pass: false, detail: format!("a set is empty: {b:?}") };
    };
    let checks = [
        e.avg_energy_j < l.avg_energy_j,
        e.avg_delay_s > l.avg_delay_s,
        e.avg_accuracy < l.avg_accuracy,
        (0.4..=0.6).contains(&b.offload_fraction),
    ];
    Outcome {
        pass: checks.iter().all(|&c| c),
        detail: format!(
            "energy edge {:.4} J vs local {:.4} J [{}]; delay edge {:.3} s vs local {:.3} s [{}]; accuracy edge {:.4} \
             vs local {:.4} [{}]; offload fraction {:.3} [{}]",
            e.avg_energy_j,
            l.avg_energy_j,
            ok(checks[0]),
            e.avg_delay_s,
            l.avg_delay_s,
            ok(checks[1]),
            e.avg_accuracy,
            l.avg_accuracy,
            ok(checks[2]),
            b.offload_fraction,
            ok(checks[3])
        ),
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "violated"
    }
}

fn c9_dominance() -> Outcome {
    let opts = seq_opts();
    let (mut chain_violations, mut ca_beats_random) = (0, 0);
    for s in 0..100u64 {
        let n = 2 + (s % 7) as usize;
        let seed = stream_seed(109, s, 0);
        let inst = scenario(n, seed);
        let cost = |k: Scheme| solve_scheme(&inst, k, seed, &opts).unwrap().metrics.objective;
        let ex = cost(Scheme::GpExhaustive);
        let ca = cost(Scheme::GpHeuristic);
        let edge = cost(Scheme::Edge);
        let local = cost(Scheme::Local);
        let random = cost(Scheme::Random);
        if !(ex <= ca && ca <= edge && ex <= local) {
            chain_violations += 1;
        }
        if ca <= random {
            ca_beats_random += 1;
        }
    }
    // the chain also holds for the search inner solver on the same instances
    for s in 0..20u64 {
        let inst = scenario(1 + (s % 4) as usize, stream_seed(109, s, 1));
        let ex = solve_exhaustive(&inst, EdgeInner::Search, 16, Exec::Sequential).unwrap().cost;
        let ca = solve_channel_aware(&inst, EdgeInner::Search, Exec::Sequential).unwrap().cost;
        let all = compose(&inst, &vec![true; inst.len()], EdgeInner::Search, Exec::Sequential).unwrap().cost;
        if !(ex <= ca && ca <= all) {
            chain_violations += 1;
        }
    }
    Outcome {
        pass: chain_violations == 0 && ca_beats_random >= 95,
        detail: format!("{chain_violations} chain violations; heuristic <= random in {ca_beats_random}/100"),
    }
}

fn fit_errors(seed: u64, noise: f64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth_c = ComplexityModel { m_c0: 2.0e9, m_c1: 1.0e9 };
    let truth_a = AccuracyModel { m_a0: 1.2, m_a1: 2.0, m_a2: 0.95 };
    let mut jitter = || 1.0 + noise * rng.gen_range(-1.0..1.0);
    let cs: Vec<ComplexitySample> =
        (1..=16).map(|m| ComplexitySample { frames: m, value: truth_c.macs(m as f64) * jitter() }).collect();
    let as_: Vec<AccuracySample> =
        (1..=16).map(|m| AccuracySample { frames: m, value: truth_a.accuracy(m as f64).unwrap() * jitter() }).collect();
    let c = fit_complexity(&cs).unwrap().model;
    let a = fit_accuracy(&as_).unwrap().model;
    let rel = |x: f64, t: f64| ((x - t) / t).abs();
    let ce = rel(c.m_c0, truth_c.m_c0).max(rel(c.m_c1, truth_c.m_c1));
    let ae = rel(a.m_a0, truth_a.m_a0).max(rel(a.m_a1, truth_a.m_a1)).max(rel(a.m_a2, truth_a.m_a2));
    (ce, ae)
}

fn c10_fit_recovery() -> Outcome {
    let (c0, a0) = fit_errors(110, 0.0);
    let (c1, a1) = fit_errors(110, 0.01);
    let passing_seeds = (0..100).filter(|&s| {
        let (c, a) = fit_errors(1000 + s, 0.01);
        c <= 0.05 && a <= 0.05
    });
    let spread = passing_seeds.count();
    Outcome {
        pass: c0 <= 1e-4 && a0 <= 1e-4 && c1 <= 0.05 && a1 <= 0.05,
        detail: format!(
            "noiseless max rel error {:.1e}/{:.1e}; 1% noise {:.2}%/{:.2}% (complexity/accuracy); \
             {spread}/100 other noise seeds within 5%",
            c0,
            a0,
            100.0 * c1,
            100.0 * a1
        ),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Median seconds per device per iteration for the three algorithmic steps
/// (local update, projection, multiplier update). With `pin` every device is
/// held on the edge so the projection runs at every size; unpinned, large
/// drops settle on all-local and skip the projection entirely, so the two
/// sizes would not be doing the same work.
fn admm_iteration_cost(n: usize, pin: bool) -> f64 {
    let opts = AdmmOptions { exec: Exec::Sequential, ..Default::default() };
    let iters = 20;
    let forced = vec![true; n];
    let forced = pin.then_some(forced.as_slice());
    let mut total = Vec::new();
    for s in 0..15 {
        let inst = scenario(n, stream_seed(111, n as u64, s));
        let mut state = AdmmState::new(&inst, &opts);
        let mut elapsed = Duration::ZERO;
        for _ in 0..iters {
            let t0 = Instant::now();
            admm_local_update(&mut state, &inst, forced, Exec::Sequential).unwrap();
            admm_global_update(&mut state, inst.params.edge_compute_hz, opts.mu_max).unwrap();
            admm_multiplier_update(&mut state);
            elapsed += t0.elapsed();
        }
        total.push(elapsed.as_secs_f64() / (iters * n) as f64);
    }
    median(total)
}

fn exhaustive_time(n: usize) -> f64 {
    let times: Vec<f64> = (0..3)
        .map(|s| {
            let inst = scenario(n, stream_seed(111, n as u64, s));
            let t = Instant::now();
            solve_exhaustive(&inst, EdgeInner::Gp, 16, Exec::Sequential).unwrap();
            t.elapsed().as_secs_f64()
        })
        .collect();
    median(times)
}

fn c11_scaling() -> Outcome {
    // warm-up
    admm_iteration_cost(8, true);
    let (t4, t32) = (admm_iteration_cost(4, true), admm_iteration_cost(32, true));
    let (u4, u32_) = (admm_iteration_cost(4, false), admm_iteration_cost(32, false));
    let admm_ratio = t32.max(t4) / t32.min(t4);
    let ex_ratio = exhaustive_time(8) / exhaustive_time(4);
    Outcome {
        pass: admm_ratio < 3.0 && ex_ratio > 2.0,
        detail: format!(
            "ADMM per device-iteration, all devices on the edge: {:.2} us (N=4) vs {:.2} us (N=32), ratio \
             {admm_ratio:.2} (unpinned: {:.2} vs {:.2} us); exhaustive N=8/N=4 time ratio {ex_ratio:.1} (linear \
             would be 2)",
            1e6 * t4,
            1e6 * t32,
            1e6 * u4,
            1e6 * u32_
        ),
    }
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("local optimum vs dense grid", c1_local_oracle, Some(10.0)),
        ("edge share KKT conditions", c2_share_kkt, Some(5.0)),
        ("GP vs search gap", c3_gp_vs_search, Some(120.0)),
        ("heuristic vs exhaustive", c4_heuristic_vs_exhaustive, Some(300.0)),
        ("ADMM quality", c5_admm_quality, Some(300.0)),
        ("ADMM convergence shape", c6_admm_convergence, Some(300.0)),
        ("offload-rate phase", c7_offload_phase, Some(600.0)),
        ("local/edge set orderings", c8_table_orderings, Some(600.0)),
        ("dominance chain", c9_dominance, None),
        ("fit recovery", c10_fit_recovery, Some(5.0)),
        ("scaling shape", c11_scaling, None),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let mut out = check();
        let secs = t.elapsed().as_secs_f64();
        if let Some(b) = budget {
            if secs >= *b {
                out.pass = false;
                out.detail.push_str(&format!("; over the {b:.0} s budget"));
            }
        }
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {} ({secs:.2} s)",
            if out.pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail
        );
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
