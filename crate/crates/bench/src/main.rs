use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualsmooth_bench::config::{ExperimentConfig, GraphSpec, Mode, Scenario, Schedule};
use dualsmooth_bench::instance::{generate, Instance};
use dualsmooth_bench::reference::{self, Method};
use dualsmooth_bench::run::{run_seeds, write_json, REFERENCE_FILE};
use dualsmooth_bench::scenario::ScenarioProblem;
use dualsmooth_bench::{report, BenchError, Result};

#[derive(Parser)]
#[command(
    name = "dsbench",
    version,
    about = "Decentralized dual-smoothing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance and its edge list.
    Gen(GenArgs),
    /// Solve an instance and write CSV records plus a JSON summary.
    Run(RunArgs),
    /// Compute a reference solution.
    Reference(ReferenceArgs),
    /// Tabulate every run summary under a directory.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct InstanceArgs {
    /// Defaults to the instance's own scenario, or basis_pursuit.
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// path, ring, star, complete, er:<p>:<seed> or file:<edge list>.
    #[arg(long, default_value = "ring")]
    graph: String,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Defaults to 0 for basis pursuit and 0.1 for the consensus scenarios.
    #[arg(long)]
    noise: Option<f64>,
    /// Use this instance file instead of generating one.
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SolveArgs {
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Dual radius R; the regularization weight is eps / R².
    #[arg(long, default_value_t = 10.0)]
    radius: f64,
    #[arg(long = "max-iter", default_value_t = 2_000_000)]
    max_iter: usize,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    #[command(flatten)]
    solve: SolveArgs,
    #[arg(long, value_enum, default_value_t = Mode::Centralized)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = Schedule::Verbatim)]
    schedule: Schedule,
    /// Measure distances against this reference.
    #[arg(long = "reference", value_enum)]
    reference: Option<Method>,
    #[arg(long = "record-every", default_value_t = 100)]
    record_every: usize,
    /// Write one JSON line per communication round (decentralized mode).
    #[arg(long)]
    trace: bool,
    /// Seeds to run, e.g. `7`, `1,2,3` or `1-8`; overrides --seed.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReferenceArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    #[command(flatten)]
    solve: SolveArgs,
    #[arg(long, value_enum, default_value_t = Method::LongRun)]
    method: Method,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "out")]
    dir: PathBuf,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || BenchError::Config(format!("bad seed list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn config(inst: &InstanceArgs, solve: Option<&SolveArgs>) -> Result<ExperimentConfig> {
    let scenario = match (inst.scenario, &inst.instance) {
        (Some(s), _) => s,
        (None, Some(path)) => Instance::load(path)?.file.scenario,
        (None, None) => Scenario::BasisPursuit,
    };
    let mut cfg = ExperimentConfig {
        scenario,
        graph: inst.graph.parse::<GraphSpec>()?,
        n: inst.n,
        d: inst.d,
        p: inst.p,
        lambda: inst.lambda,
        seed: inst.seed,
        noise: inst.noise,
        instance: inst.instance.clone(),
        ..ExperimentConfig::default()
    };
    if let Some(s) = solve {
        cfg.eps = s.eps;
        cfg.radius = s.radius;
        cfg.max_iter = s.max_iter;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_gen(args: &GenArgs) -> Result<ExitCode> {
    let cfg = config(&args.inst, None)?;
    let path = generate(&cfg)?.save(&args.out)?;
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let mut cfg = config(&args.inst, Some(&args.solve))?;
    cfg.mode = args.mode;
    cfg.schedule = args.schedule;
    cfg.reference = args.reference;
    cfg.record_every = args.record_every;
    cfg.trace = args.trace;
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => vec![cfg.seed],
    };
    let results = run_seeds(&cfg, &seeds, args.jobs, &args.out)?;
    let mut code = 0u8;
    for (seed, dir, result) in results {
        match result {
            Ok(o) => {
                let s = &o.summary;
                println!(
                    "seed {seed}: {} after {} iterations, {} rounds, primal residual {:.3e} -> {}",
                    if s.converged {
                        "converged"
                    } else {
                        "not converged"
                    },
                    s.iterations,
                    s.comm_rounds,
                    s.primal_feas_residual,
                    dir.display()
                );
                if !s.converged {
                    code = code.max(2);
                }
            }
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                code = code.max(e.exit_code() as u8);
            }
        }
    }
    Ok(ExitCode::from(code))
}

fn cmd_reference(args: &ReferenceArgs) -> Result<ExitCode> {
    let cfg = config(&args.inst, Some(&args.solve))?;
    let inst = dualsmooth_bench::run::load_or_generate(&cfg)?;
    let sp = ScenarioProblem::new(cfg.scenario, &inst)?;
    let r = reference::compute(&sp, args.method, cfg.eps, cfg.radius, cfg.max_iter)?;
    std::fs::create_dir_all(&args.out).map_err(|source| BenchError::Io {
        path: args.out.clone(),
        source,
    })?;
    if cfg.instance.is_none() {
        inst.save(&args.out)?;
    }
    let path = args.out.join(REFERENCE_FILE);
    write_json(&r, &path)?;
    println!(
        "{:?}: objective {:.12e}, certified tolerance {:.3e} -> {}",
        r.method,
        r.objective,
        r.certified_tolerance,
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(args: &ReportArgs) -> Result<ExitCode> {
    let rows = report::collect(&args.dir)?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|source| BenchError::Io {
                path: path.clone(),
                source,
            })?;
            report::write_csv(&rows, file)?;
        }
        None => report::write_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Usage errors are configuration errors; clap's default code 2 would
    // read as non-convergence.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Reference(a) => cmd_reference(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
