//! Experiment runner CLI.
//!
//! Subcommands: `run` (execute a seeded experiment from a config file or
//! inline flags), `summarize` (scaling report over a results directory),
//! `verify` (re-assert every trace invariant on disk artifacts),
//! `bench-bounds` (concentration property suites), `plot-data` (gnuplot
//! column files), and `serve` (TCP coordinator endpoint).
//!
//! Exit codes: 0 success, 1 usage error, 2 invariant violation, 3 numerical
//! failure.

use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use distucrl::coordinator::SyncOptions;
use distucrl::envs::{EnvName, EnvSpec};
use distucrl::error::Error;
use distucrl::exec::ExecMode;
use distucrl::harness::{
    check_martingale_bound, load_summaries, parse_config, run_experiment, scaling_report_csv,
    sum_of_roots_suite, summarize, verify_dir, write_plot_data, RunConfig, TransportConfig,
    TransportKind,
};
use distucrl::trace::Algorithm;
use distucrl::transport::{serve_session, TransportError};

const EXIT_USAGE: u8 = 1;
const EXIT_INVARIANT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "distucrl", version, about = "Communication-efficient parallel RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment and write step/trace/summary artifacts.
    Run(RunArgs),
    /// Aggregate summary CSVs under a directory into a scaling report.
    Summarize {
        dir: PathBuf,
        /// Also print the report CSVs to stdout.
        #[arg(long)]
        print: bool,
    },
    /// Re-assert all trace invariants on every run recorded under a directory.
    Verify { dir: PathBuf },
    /// Run a concentration property suite.
    BenchBounds(BenchBoundsArgs),
    /// Emit gnuplot-compatible column files for the runs under a directory.
    PlotData {
        dir: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Serve the coordinator synchronization endpoint over TCP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; unknown keys are rejected. Mutually exclusive with
    /// the inline flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment: riverswim6, riverswim12, gridworld4room.
    #[arg(long)]
    env: Option<String>,
    /// Algorithm: dist_ucrl, mod_ucrl2, ucrl2.
    #[arg(long)]
    algo: Option<String>,
    /// Number of agents M.
    #[arg(long)]
    agents: Option<usize>,
    /// Per-agent horizon T.
    #[arg(long)]
    horizon: Option<u64>,
    /// Number of master seeds; expands to 1..=N.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed EVI accuracy instead of the 1/sqrt(M t) schedule.
    #[arg(long)]
    epsilon_override: Option<f64>,
    /// Clip optimistic rewards at 1.
    #[arg(long)]
    clip_rewards: bool,
    /// Transport: "inproc" or "tcp:HOST:PORT".
    #[arg(long)]
    transport: Option<String>,
}

#[derive(Args)]
struct BenchBoundsArgs {
    /// Which lemma suite to run: martingale or sumroots.
    #[arg(long)]
    lemma: String,
    #[arg(long, default_value_t = 8)]
    sequences: usize,
    #[arg(long, default_value_t = 1000)]
    len: usize,
    #[arg(long, default_value_t = 2.0)]
    increment_bound: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    /// Listen address, e.g. 127.0.0.1:9000.
    #[arg(long)]
    listen: String,
    /// Number of agent connections per session.
    #[arg(long)]
    agents: usize,
    #[arg(long)]
    states: usize,
    #[arg(long)]
    actions: usize,
    #[arg(long)]
    epsilon_override: Option<f64>,
    #[arg(long)]
    clip_rewards: bool,
    /// Serve a single session, then exit (default: loop forever).
    #[arg(long)]
    once: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap reserves 2 for usage errors; this tool uses 1.
            let _ = err.print();
            return match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Invariant(_) => EXIT_INVARIANT,
        Error::Diverged { .. } => EXIT_NUMERICAL,
        Error::Transport(TransportError::Coordinator(_)) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn dispatch(command: Command) -> distucrl::Result<ExitCode> {
    match command {
        Command::Run(args) => run(args),
        Command::Summarize { dir, print } => {
            let rows = load_summaries(&dir)?;
            let report = summarize(&rows, |env| match env {
                "riverswim6" => Some((6, 2)),
                "riverswim12" => Some((12, 2)),
                "gridworld4room" => Some((20, 4)),
                _ => None,
            })?;
            let (groups_csv, ratios_csv) = scaling_report_csv(&report);
            std::fs::write(dir.join("scaling.csv"), &groups_csv)?;
            std::fs::write(dir.join("ratios.csv"), &ratios_csv)?;
            if print {
                print!("{groups_csv}\n{ratios_csv}");
            }
            println!(
                "summarized {} runs into {} groups → {}",
                rows.len(),
                report.groups.len(),
                dir.join("scaling.csv").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { dir } => {
            let checked = verify_dir(&dir)?;
            println!("verify: {checked} runs, all invariants hold");
            Ok(ExitCode::SUCCESS)
        }
        Command::BenchBounds(args) => bench_bounds(args),
        Command::PlotData { dir, out } => {
            let files = write_plot_data(&dir, &out)?;
            println!("wrote {} curve files under {}", files.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve(args) => serve(args),
    }
}

fn run(args: RunArgs) -> distucrl::Result<ExitCode> {
    let config = build_config(args)?;
    let outcomes = run_experiment(&config)?;
    let failed = outcomes.iter().filter(|o| o.trace.is_err()).count();
    println!(
        "ran {} seeds ({} failed) → {}",
        outcomes.len(),
        failed,
        config.output_dir.display()
    );
    if failed > 0 {
        return Ok(ExitCode::from(EXIT_NUMERICAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn build_config(args: RunArgs) -> distucrl::Result<RunConfig> {
    if let Some(path) = args.config {
        let inline_flags = args.env.is_some()
            || args.algo.is_some()
            || args.agents.is_some()
            || args.horizon.is_some()
            || args.seeds.is_some()
            || args.out.is_some();
        if inline_flags {
            return Err(Error::Config(
                "--config cannot be combined with inline experiment flags".into(),
            ));
        }
        return parse_config(&std::fs::read_to_string(path)?);
    }
    let env_name = args
        .env
        .ok_or_else(|| Error::Config("--env is required without --config".into()))?;
    let env = EnvSpec::named(EnvName::from_str(&env_name)?);
    let algorithm = Algorithm::from_str(
        &args
            .algo
            .ok_or_else(|| Error::Config("--algo is required without --config".into()))?,
    )?;
    let seeds = args
        .seeds
        .ok_or_else(|| Error::Config("--seeds is required without --config".into()))?;
    if seeds == 0 {
        return Err(Error::Config("--seeds must be positive".into()));
    }
    let transport = match args.transport.as_deref() {
        None | Some("inproc") => TransportConfig::default(),
        Some(spec) => {
            let rest = spec
                .strip_prefix("tcp:")
                .ok_or_else(|| Error::Config(format!("bad transport {spec:?}; use inproc or tcp:HOST:PORT")))?;
            let (host, port) = rest
                .rsplit_once(':')
                .ok_or_else(|| Error::Config("tcp transport needs HOST:PORT".into()))?;
            TransportConfig {
                kind: TransportKind::Tcp,
                host: Some(host.to_string()),
                port: Some(
                    port.parse()
                        .map_err(|e| Error::Config(format!("bad port {port:?}: {e}")))?,
                ),
            }
        }
    };
    let config = RunConfig {
        env,
        algorithm,
        agents: args
            .agents
            .ok_or_else(|| Error::Config("--agents is required without --config".into()))?,
        horizon: args
            .horizon
            .ok_or_else(|| Error::Config("--horizon is required without --config".into()))?,
        seeds: (1..=seeds).collect(),
        epsilon_override: args.epsilon_override,
        clip_optimistic_reward: args.clip_rewards,
        output_dir: args
            .out
            .ok_or_else(|| Error::Config("--out is required without --config".into()))?,
        transport,
    };
    config.validate()?;
    Ok(config)
}

fn bench_bounds(args: BenchBoundsArgs) -> distucrl::Result<ExitCode> {
    match args.lemma.as_str() {
        "martingale" => {
            let scale = ((args.sequences * args.len) as f64).sqrt();
            let grid: Vec<f64> = [0.5, 1.0, 2.0, 4.0].iter().map(|k| k * scale).collect();
            let report = check_martingale_bound(
                args.sequences,
                args.len,
                args.increment_bound,
                &grid,
                args.trials,
                args.seed,
                ExecMode::Parallel,
            )?;
            println!("martingale tail check: M={} T={} c={} trials={}", report.n_sequences, report.len, report.increment_bound, report.trials);
            println!("epsilon,empirical,bound,threshold,flagged");
            for e in &report.entries {
                println!(
                    "{},{},{},{},{}",
                    e.epsilon, e.empirical, e.bound, e.threshold, e.flagged
                );
            }
            if report.any_flagged() {
                eprintln!("flagged: an empirical frequency exceeded its bound threshold");
                return Ok(ExitCode::from(EXIT_INVARIANT));
            }
            Ok(ExitCode::SUCCESS)
        }
        "sumroots" => {
            let report = sum_of_roots_suite(200, args.seed)?;
            println!(
                "sum-of-roots check: {} sequences, {} violations",
                report.sequences, report.violations
            );
            if report.violations > 0 {
                return Ok(ExitCode::from(EXIT_INVARIANT));
            }
            Ok(ExitCode::SUCCESS)
        }
        other => Err(Error::Config(format!(
            "unknown lemma {other:?}; expected martingale or sumroots"
        ))),
    }
}

fn serve(args: ServeArgs) -> distucrl::Result<ExitCode> {
    let opts = SyncOptions {
        epsilon_override: args.epsilon_override,
        clip_optimistic_reward: args.clip_rewards,
        ..SyncOptions::default()
    };
    let listener = TcpListener::bind(&args.listen).map_err(Error::Io)?;
    println!("coordinator listening on {} for {} agents", args.listen, args.agents);
    loop {
        serve_session(&listener, args.agents, args.states, args.actions, opts)
            .map_err(Error::Transport)?;
        println!("session complete");
        if args.once {
            return Ok(ExitCode::SUCCESS);
        }
    }
}
