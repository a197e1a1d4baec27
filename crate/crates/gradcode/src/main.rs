use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gradcode::config::ExperimentConfig;
use gradcode::core::codes::CodeParams;
use gradcode::core::optim::Loss;
use gradcode::core::simulator::{run_experiment, summarize};
use gradcode::net::{self, InjectedDelay, WorkerOptions};
use gradcode::verify::{self, Suite, VerifyOptions};
use gradcode::{analyze, data, output, shard, Error, Result};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "gradcode",
    version,
    about = "Approximate gradient coding: simulate, analyse, verify and run"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay training under sampled straggler delays.
    Simulate(SimulateArgs),
    /// Coverage moments, noise floors and runtime bounds over a parameter grid.
    Analyze(analyze::AnalyzeArgs),
    /// Run the oracle suites; exits 1 if any check fails.
    Verify(VerifyArgs),
    /// Split a CSV dataset into per-task files.
    Shard(ShardArgs),
    /// Coordinate real workers over TCP.
    Master(MasterArgs),
    /// Serve gradients to a master.
    Worker(WorkerArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Inclusive seed range `a..b`, or a single seed. Defaults to the config seed.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// moments, convergence, runtime or all
    #[arg(long, default_value = "all")]
    suite: String,
    /// Monte-Carlo draws (moments), seeds (convergence) or rounds (runtime).
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, hide = true)]
    corrupt_bound: bool,
}

#[derive(Args)]
struct ShardArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Workers; defaults to n.
    #[arg(long)]
    k: Option<usize>,
    /// Tasks per worker.
    #[arg(long, default_value_t = 1)]
    c: usize,
    /// least_squares or logistic
    #[arg(long, default_value = "least_squares")]
    loss: String,
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct MasterArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7070")]
    listen: String,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WorkerArgs {
    #[arg(long)]
    master: String,
    #[arg(long)]
    worker_id: u32,
    /// Shard directory, or an experiment config describing a synthetic objective.
    #[arg(long)]
    data: PathBuf,
    /// Seed for exponential delay injection.
    #[arg(long, conflicts_with = "delay_table")]
    delay_seed: Option<u64>,
    /// Rate of the injected exponential delay.
    #[arg(long, default_value_t = 0.5)]
    delay_lambda: f64,
    /// CSV of per-round delays, one column per worker.
    #[arg(long)]
    delay_table: Option<PathBuf>,
    /// Seconds per delay unit.
    #[arg(long, default_value_t = 1.0)]
    delay_scale: f64,
    #[arg(long, default_value_t = 20)]
    retries: u32,
}

fn parse_seeds(spec: Option<&str>, default: u64) -> Result<Vec<u64>> {
    let Some(spec) = spec else {
        return Ok(vec![default]);
    };
    let bad = || Error::Usage(format!("--seeds expects 'a..b' or a number, got '{spec}'"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else {
        Ok(vec![spec.trim().parse().map_err(|_| bad())?])
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let seeds = parse_seeds(args.seeds.as_deref(), cfg.seed)?;
    let dir = out_dir(args.out, &cfg);
    let objective = data::build_objective(&cfg)?;
    let specs = seeds.iter().map(|&s| cfg.run_spec(s)).collect::<Result<Vec<_>>>()?;
    log::info!(
        "simulating {} seed(s) of {} into {}",
        seeds.len(),
        cfg.method.name(),
        dir.display()
    );
    let results = specs
        .into_par_iter()
        .map(|spec| run_experiment(&*objective, spec))
        .collect::<gradcode::core::Result<Vec<_>>>()?;
    for r in &results {
        output::write_run(&dir, &cfg, r)?;
    }
    let summary = summarize(cfg.method.name(), &results)?;
    output::write(&dir.join("summary.csv"), &output::summary_csv(&cfg, &summary))?;
    let last = summary.rows.last().expect("row 0 always present");
    println!(
        "{} run(s), T={}: mean final gap {:.6e}, mean total time {:.4}",
        results.len(),
        cfg.iterations,
        last.gap.mean,
        last.elapsed.mean
    );
    Ok(())
}

fn verify_cmd(args: VerifyArgs) -> Result<bool> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![args.suite.parse()?]
    };
    let opts = VerifyOptions {
        budget: args.budget,
        seed: args.seed,
        corrupt_bound: args.corrupt_bound,
    };
    let mut ok = true;
    for suite in suites {
        println!("== {}", suite.name());
        for check in verify::run_suite(suite, &opts)? {
            println!("{check}");
            ok &= check.pass || check.informational;
        }
    }
    println!("{}", if ok { "all checks passed" } else { "some checks FAILED" });
    Ok(ok)
}

fn shard_cmd(args: ShardArgs) -> Result<()> {
    let loss = match args.loss.as_str() {
        "least_squares" => Loss::LeastSquares,
        "logistic" => Loss::Logistic,
        other => return Err(Error::Usage(format!("unknown loss '{other}'"))),
    };
    let params = CodeParams::new(args.n, args.k.unwrap_or(args.n), args.c).map_err(|e| Error::Usage(e.to_string()))?;
    let m = shard::shard(
        &args.dataset,
        &args.out,
        &shard::ShardOptions {
            label_column: &args.label_column,
            params,
            loss,
            standardize: args.standardize,
        },
    )?;
    println!(
        "wrote {} tasks of {} rows ({} dropped) and {} blocks to {}",
        m.n,
        m.rows_per_task,
        m.dropped_rows,
        m.blocks.len(),
        args.out.display()
    );
    Ok(())
}

fn master(args: MasterArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let dir = out_dir(args.out, &cfg);
    let result = net::serve_master(&cfg, &args.listen)?;
    output::write_run(&dir, &cfg, &result)?;
    println!(
        "{} rounds in {:.3}s, final loss {}",
        result.records.len(),
        result.total_time,
        result.final_loss
    );
    Ok(())
}

fn worker(args: WorkerArgs) -> Result<()> {
    let mut opts = WorkerOptions::new(args.worker_id);
    opts.delay_scale = args.delay_scale;
    opts.connect_retries = args.retries;
    opts.delay = match (args.delay_seed, &args.delay_table) {
        (Some(seed), None) => {
            if !(args.delay_lambda > 0.0) {
                return Err(Error::Usage("--delay-lambda must be positive".into()));
            }
            InjectedDelay::Exponential {
                seed,
                lambda: args.delay_lambda,
            }
        }
        (None, Some(path)) => InjectedDelay::Table(data::load_delay_table(path)?),
        _ => InjectedDelay::None,
    };
    let data: &Path = &args.data;
    let report = net::run_worker(&args.master, |a| net::load_worker_objective(data, a), &opts)?;
    log::info!(
        "worker {}: sent {}, abandoned {}",
        args.worker_id,
        report.sent,
        report.abandoned
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Analyze(a) => analyze::run(&a).map(|_| true),
        Command::Verify(a) => verify_cmd(a),
        Command::Shard(a) => shard_cmd(a).map(|_| true),
        Command::Master(a) => master(a).map(|_| true),
        Command::Worker(a) => worker(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
