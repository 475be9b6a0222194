//! `cpr`: run fishery experiments, baselines and theory checks from the shell.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cpr_core::analytics::TheoryLimits;
use cpr_core::control::{brute_force_optimal, forward_backward_sweep, ControlProblem, SweepOptions};
use cpr_core::harness::{
    baseline_csv, baseline_sweep, fmt_float, load_manifest, persist, replay, CellSummary, ExperimentConfig,
};
use cpr_core::learner::{Checkpoint, PpoAgent, PpoHyper};
use cpr_core::metrics::{cic, CicConfig, UniformPartialStates};
use cpr_core::Error;

#[derive(Parser)]
#[command(name = "cpr", version, about = "Common-pool resource experiments with independent PPO learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents over a grid of cells and write results to a directory.
    Run(RunArgs),
    /// Max-effort sweep over scarcity levels.
    Baseline(BaselineArgs),
    /// Print the sustainability thresholds of the max-effort game.
    Limits(LimitsArgs),
    /// Solve the single-owner harvesting problem.
    Control(ControlArgs),
    /// Signal influence of the agents stored in a checkpoint.
    Cic(CicArgs),
    /// Re-run an experiment from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    /// File of `key = value` lines applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated populations, e.g. `2,4,8`.
    #[arg(long)]
    agents: Option<String>,
    /// Comma-separated scarcity multipliers.
    #[arg(long)]
    ms: Option<String>,
    /// Comma-separated signal sizes; `N` means one value per agent.
    #[arg(long)]
    signal: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    tmax: Option<usize>,
    /// Any configuration key, e.g. `--set learning-rate=3e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    agents: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    growth_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    e_max: f64,
    #[arg(long, default_value_t = 500)]
    tmax: usize,
    #[arg(long, default_value_t = 0.1)]
    ms_min: f64,
    #[arg(long, default_value_t = 1.5)]
    ms_max: f64,
    #[arg(long, default_value_t = 0.01)]
    ms_step: f64,
    /// Write every row of the sweep to this CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LimitsArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    agents: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    growth_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    e_max: f64,
}

#[derive(Args)]
struct ControlArgs {
    #[arg(long)]
    s_eq: f64,
    #[arg(long, default_value_t = 1.0)]
    growth_rate: f64,
    /// Maximum total effort.
    #[arg(long, default_value_t = 1.0)]
    effort: f64,
    #[arg(long, default_value_t = 10)]
    horizon: usize,
    #[arg(long, default_value_t = 1.0)]
    price: f64,
    #[arg(long, default_value_t = 0.0)]
    cost: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
}

#[derive(Args)]
struct CicArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    price: f64,
    #[arg(long, default_value_t = 100)]
    states: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Directory of the original run; episode tables are compared byte for byte.
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_parameter_error() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::Run(a) => run(a),
        Command::Baseline(a) => baseline(a),
        Command::Limits(a) => limits(a),
        Command::Control(a) => control(a),
        Command::Cic(a) => cic_cmd(a),
        Command::Replay(a) => replay_cmd(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn resolve_config(a: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut c = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::from_kv(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let flags = [
        ("agents", a.agents.clone()),
        ("ms", a.ms.clone()),
        ("signal", a.signal.clone()),
        ("trials", a.trials.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("episodes", a.episodes.map(|v| v.to_string())),
        ("tmax", a.tmax.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            c.set(k, &v)?;
        }
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        c.set(k, v)?;
    }
    c.validate()?;
    Ok(c)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_else(|| "-".into())
}

fn print_summary(rows: &[CellSummary]) {
    println!(
        "{:<22} {:>6} {:>12} {:>9} {:>8} {:>7} {:>7} {:>8} {:>10}",
        "cell", "failed", "welfare", "length", "ct", "jain", "gini", "cic", "p(welfare)"
    );
    for s in rows {
        println!(
            "{:<22} {:>6} {:>12} {:>9} {:>8} {:>7} {:>7} {:>8} {:>10}",
            s.cell,
            s.failed,
            opt(s.social_welfare),
            opt(s.length),
            opt(s.convergence_time),
            opt(s.jain.map(|v| (v * 1e3).round() / 1e3)),
            opt(s.gini.map(|v| (v * 1e3).round() / 1e3)),
            opt(s.cic.map(|v| (v * 1e3).round() / 1e3)),
            opt(s.social_welfare_vs_no_signal.p_value),
        );
    }
}

fn run(a: RunArgs) -> Outcome {
    let config = resolve_config(&a)?;
    if a.dry_run {
        print!("{}", config.to_kv());
        return Ok(());
    }
    let results = cpr_core::harness::run_experiment(&config)?;
    persist(&results, &a.out)?;
    let rows: Vec<CellSummary> = results.cells.iter().map(|c| c.summary.clone()).collect();
    print_summary(&rows);
    eprintln!(
        "{} cells, {} steps in {:.1}s; results in {}",
        rows.len(),
        results.total_steps(),
        results.wall_clock_seconds,
        a.out.display()
    );
    Ok(())
}

fn baseline(a: BaselineArgs) -> Outcome {
    let sweep = baseline_sweep(&a.agents, a.growth_rate, a.e_max, a.tmax, (a.ms_min, a.ms_max, a.ms_step))?;
    println!("{:>6} {:>12} {:>14} {:>10}", "agents", "analytic", "first_survivor", "rel_err");
    for (n, lsh, first) in &sweep.limits {
        let rel = first.map(|f| (f - lsh).abs() / lsh);
        println!("{:>6} {:>12} {:>14} {:>10}", n, fmt_float(*lsh), opt(*first), opt(rel));
    }
    if let Some(path) = &a.out {
        write_file(path, &baseline_csv(&sweep.rows)?)?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome {
    std::fs::write(path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn limits(a: LimitsArgs) -> Outcome {
    println!("{:>6} {:>12} {:>12} {:>10} {:>10}", "agents", "s_lsh", "s_lid", "K", "ms_lid");
    for &n in &a.agents {
        let l = TheoryLimits::compute(n, a.growth_rate, a.e_max)?;
        println!(
            "{:>6} {:>12} {:>12} {:>10} {:>10}",
            n,
            fmt_float(l.s_lsh),
            fmt_float(l.s_lid),
            fmt_float(l.k_const),
            fmt_float(l.ms_lid)
        );
    }
    Ok(())
}

fn schedule(e: &[f64]) -> String {
    e.iter().map(|x| fmt_float(*x)).collect::<Vec<_>>().join(" ")
}

fn control(a: ControlArgs) -> Outcome {
    let p = ControlProblem::new(a.s_eq, a.growth_rate, a.effort, a.horizon, a.price, a.cost);
    let opts = SweepOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        damping: a.damping,
    };
    let sol = forward_backward_sweep(&p, opts)?;
    println!("status:    {:?}", sol.status);
    println!("schedule:  {}", schedule(&sol.efforts));
    println!("objective: {}", fmt_float(sol.objective));
    if a.horizon <= 16 {
        let best = brute_force_optimal(&p)?;
        println!("optimal:   {}", schedule(&best.efforts));
        println!("objective: {}", fmt_float(best.objective));
    }
    Ok(())
}

fn cic_cmd(a: CicArgs) -> Outcome {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let config = CicConfig {
        n_states: a.states,
        n_samples: a.samples,
        n_bins: a.bins,
    };
    let sampler = UniformPartialStates::new(ckpt.e_max, a.price);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut total = 0.0;
    let params = ckpt.policy_params()?;
    for (i, p) in params.into_iter().enumerate() {
        let agent = PpoAgent::from_params(p, PpoHyper::default());
        let v = cic(&agent, &sampler, &config, &mut rng)?;
        total += v;
        println!("agent {i}: {}", fmt_float(v));
    }
    println!("mean:    {}", fmt_float(total / ckpt.n_agents() as f64));
    Ok(())
}

fn replay_cmd(a: ReplayArgs) -> Outcome {
    let manifest = load_manifest(&a.manifest)?;
    replay(&a.manifest, &a.out)?;
    let Some(orig) = &a.compare else {
        println!("replayed {} cells into {}", manifest.cells.len(), a.out.display());
        return Ok(());
    };
    let mut mismatched = Vec::new();
    for cell in &manifest.cells {
        let read = |root: &Path| std::fs::read(root.join(&cell.id).join("episodes.csv"));
        let (x, y) = (read(orig), read(&a.out));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => mismatched.push(cell.id.clone()),
        }
    }
    if mismatched.is_empty() {
        println!("replay identical for {} cells", manifest.cells.len());
        Ok(())
    } else {
        Err(Failure::Runtime(format!("replay differs in {}", mismatched.join(", "))))
    }
}
