use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand, ValueEnum};
use mec_offload::admm::{AdmmInit, AdmmOptions};
use mec_offload::error::Result;
use mec_offload::exec::Exec;
use mec_offload::fit::{fit_accuracy, fit_complexity, read_samples, AccuracySample, ComplexitySample};
use mec_offload::harness::{
    convergence_trace, local_edge_breakdown, run_sweep, solve_scheme, tradeoff, write_trace_csv, write_tradeoff_csv,
    RunOptions, Scheme, SweepAxis, SweepOptions,
};
use mec_offload::scenario::{generate_scenario, ScenarioConfig};
use serde_json::json;

/// Joint frame-count and resource allocation for video inference offloading
/// in a single-cell edge system.
#[derive(Parser)]
#[command(name = "mec-offload", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit C(M) = m_c0*M + m_c1 to a `frames,value` CSV.
    FitComplexity { csv: PathBuf },
    /// Fit Φ(M) = -m_a0/(M + m_a1) + m_a2 to a `frames,value` CSV.
    FitAccuracy { csv: PathBuf },
    /// Solve one seeded scenario and print the allocation as JSON.
    Solve {
        #[arg(long)]
        scheme: Scheme,
        #[command(flatten)]
        common: Common,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep one parameter and write sweep.csv.
    Sweep {
        #[arg(long)]
        vary: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Comma-separated scheme names.
        #[arg(long, value_delimiter = ',', required = true)]
        schemes: Vec<Scheme>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run ADMM on one scenario and write convergence.csv.
    Convergence {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = InitArg::FeasibleUniform)]
        init: InitArg,
        #[command(flatten)]
        common: Common,
    },
    /// Per-set delay, energy and accuracy split by offloading decision;
    /// writes breakdown.csv.
    Breakdown {
        #[arg(long, default_value = "gp-heuristic")]
        scheme: Scheme,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Average metrics over the interior weight simplex; writes tradeoff.csv.
    Tradeoff {
        #[arg(long)]
        weights_grid: usize,
        #[arg(long, default_value = "gp-heuristic")]
        scheme: Scheme,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the default scenario config as JSON.
    PrintConfig,
}

#[derive(Args)]
struct Common {
    /// Scenario config (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run everything on one thread.
    #[arg(long)]
    sequential: bool,
    /// ADMM step size s.
    #[arg(long)]
    admm_step: Option<f64>,
    /// ADMM stopping tolerance on the objective change.
    #[arg(long)]
    admm_tol: Option<f64>,
    #[arg(long)]
    admm_max_iters: Option<usize>,
    /// Largest N accepted by the exhaustive schemes.
    #[arg(long, default_value_t = 16)]
    exhaustive_cap: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    FeasibleUniform,
    Zero,
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig> {
        match &self.config {
            Some(p) => ScenarioConfig::load(p),
            None => Ok(ScenarioConfig::default()),
        }
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    fn admm(&self, exec: Exec) -> AdmmOptions {
        let d = AdmmOptions::default();
        AdmmOptions {
            step: self.admm_step.unwrap_or(d.step),
            tolerance: self.admm_tol.unwrap_or(d.tolerance),
            max_iters: self.admm_max_iters.unwrap_or(d.max_iters),
            exec,
            ..d
        }
    }

    /// Options for batches of runs: parallel across runs, sequential inside.
    fn sweep(&self) -> SweepOptions {
        SweepOptions {
            run: RunOptions {
                admm: self.admm(Exec::Sequential),
                exhaustive_cap: self.exhaustive_cap,
                inner_exec: Exec::Sequential,
            },
            exec: self.exec(),
        }
    }
}

fn create_out(dir: &Path, file: &str) -> Result<(PathBuf, fs::File)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(file);
    let f = fs::File::create(&path)?;
    Ok((path, f))
}

fn print_json(v: &serde_json::Value) {
    use std::io::Write;
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::FitComplexity { csv } => {
            let s: Vec<ComplexitySample> =
                read_samples(&csv)?.into_iter().map(|(frames, value)| ComplexitySample { frames, value }).collect();
            print_json(&serde_json::to_value(fit_complexity(&s)?)?);
        }
        Command::FitAccuracy { csv } => {
            let s: Vec<AccuracySample> =
                read_samples(&csv)?.into_iter().map(|(frames, value)| AccuracySample { frames, value }).collect();
            print_json(&serde_json::to_value(fit_accuracy(&s)?)?);
        }
        Command::Solve { scheme, common, seed } => {
            let mut cfg = common.config()?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let sc = generate_scenario(&cfg)?;
            let exec = common.exec();
            let opts = RunOptions { admm: common.admm(exec), exhaustive_cap: common.exhaustive_cap, inner_exec: exec };
            let o = solve_scheme(&sc.instance, scheme, cfg.seed, &opts)?;
            print_json(&json!({
                "scheme": scheme.name(),
                "seed": cfg.seed,
                "objective": o.metrics.objective,
                "avg_cost": o.metrics.avg_cost(),
                "avg_delay_s": o.metrics.avg_delay_s,
                "avg_energy_j": o.metrics.avg_energy_j,
                "avg_accuracy": o.metrics.avg_accuracy,
                "offload_rate": o.metrics.offload_rate,
                "wall_time_s": o.wall_time_s,
                "iterations": o.iterations,
                "converged": o.converged,
                "distances_m": sc.distances_m,
                "allocation": o.allocation.devices,
            }));
        }
        Command::Sweep { vary, values, schemes, reps, out, common } => {
            let cfg = common.config()?;
            let r = run_sweep(&cfg, vary, &values, &schemes, reps, &common.sweep())?;
            let (path, f) = create_out(&out, "sweep.csv")?;
            r.write_csv(f)?;
            let failed = r.rows.iter().filter(|row| !row.error.is_empty()).count();
            print_json(&json!({ "path": path, "rows": r.rows.len(), "failed": failed }));
        }
        Command::Convergence { out, init, common } => {
            let cfg = common.config()?;
            let init = match init {
                InitArg::FeasibleUniform => AdmmInit::FeasibleUniform,
                InitArg::Zero => AdmmInit::Zero,
            };
            let r = convergence_trace(&cfg, AdmmOptions { init, ..common.admm(common.exec()) })?;
            let (path, f) = create_out(&out, "convergence.csv")?;
            write_trace_csv(f, &r.trace)?;
            print_json(&json!({
                "path": path,
                "iterations": r.iterations,
                "converged": r.converged,
                "objective": r.cost,
            }));
        }
        Command::Breakdown { scheme, reps, out, common } => {
            let cfg = common.config()?;
            let b = local_edge_breakdown(&cfg, scheme, reps, &common.sweep())?;
            let (path, f) = create_out(&out, "breakdown.csv")?;
            b.write_csv(f)?;
            print_json(&json!({ "path": path, "breakdown": b }));
        }
        Command::Tradeoff { weights_grid, scheme, reps, out, common } => {
            let cfg = common.config()?;
            let rows = tradeoff(&cfg, weights_grid, scheme, reps, &common.sweep())?;
            let (path, f) = create_out(&out, "tradeoff.csv")?;
            write_tradeoff_csv(f, &rows)?;
            print_json(&json!({ "path": path, "rows": rows.len() }));
        }
        Command::PrintConfig => print_json(&serde_json::to_value(ScenarioConfig::default())?),
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            error_line("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error_line(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
