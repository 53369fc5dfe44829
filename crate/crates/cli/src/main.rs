//! `lpbound`: entropic L_p lower bounds on online prediction error.

mod files;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lpbound::estimators::EstimatorParams;
use lpbound::harness::{
    achievability_diagnostics, bound_report, run_scenario, run_trajectory, BoundReport, EntropySource, HarnessError, ScenarioConfig,
    ScenarioOutcome,
};
use lpbound::maxent::PNorm;
use lpbound::predictors::{run_online, PredictorSpec};
use lpbound::processes::ProcessError;

use files::BenchOutput;

const DEFAULT_OUT_DIR: &str = "lpbound-out";

#[derive(Parser)]
#[command(name = "lpbound", version, about = "Entropic lower bounds on online prediction error")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "LPBOUND_OUT_DIR", default_value = DEFAULT_OUT_DIR)]
    out: PathBuf,
    /// Replace every scenario's seeds with this one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Progress messages on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate trajectories (and traces for the configured predictors).
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Bound report for one predictor on a trajectory file.
    Bound(BoundArgs),
    /// Achievability diagnostics for a trajectory and trace.
    Diagnose(DiagnoseArgs),
    /// Run scenarios and write JSON and CSV reports.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Override the norms of every scenario (`inf` for L_∞).
        #[arg(long, num_args = 1.., value_parser = parse_p)]
        p: Vec<PNorm>,
        /// Run the scenarios' predictors on this trajectory instead of simulating.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Re-emit CSV tables and a summary from a `reports.json`.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Args)]
struct EstimatorArgs {
    #[arg(long, default_value_t = 5)]
    lag: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = lpbound::estimators::DEFAULT_PERMUTATIONS)]
    permutations: usize,
    #[arg(long, default_value_t = lpbound::estimators::DEFAULT_WINDOW_PERMUTATIONS)]
    window_permutations: usize,
}

impl EstimatorArgs {
    fn params(&self, seed: Option<u64>) -> EstimatorParams {
        let base = EstimatorParams::default();
        EstimatorParams {
            k: self.k,
            lag: self.lag,
            permutations: self.permutations,
            window_permutations: self.window_permutations,
            seed: seed.unwrap_or(base.seed),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Oracle,
    Estimated,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    trajectory: PathBuf,
    /// Predictor kind (`zero`, `ar_plugin`, `kalman`, ...) or a JSON object.
    #[arg(long, conflicts_with = "trace", required_unless_present = "trace")]
    predictor: Option<String>,
    /// Use an existing trace instead of running a predictor.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, num_args = 1.., value_parser = parse_p, default_value = "2")]
    p: Vec<PNorm>,
    #[arg(long, value_enum, default_value = "oracle")]
    entropy: SourceArg,
    #[command(flatten)]
    estimator: EstimatorArgs,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
}

fn parse_p(s: &str) -> Result<PNorm, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl fmt::Debug for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_GENERATION: u8 = 3;
const EXIT_NO_REPORTS: u8 = 4;

trait ExitWith<T> {
    fn exit(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))
        .exit(1)?;
    match &cli.command {
        Command::Simulate { config } => simulate(cli, config),
        Command::Bound(args) => bound(cli, args),
        Command::Diagnose(args) => diagnose(cli, args),
        Command::Bench { config, p, trajectory } => bench(cli, config, p, trajectory.as_deref()),
        Command::Report { input } => report(cli, input),
    }
}

fn log(cli: &Cli, msg: impl fmt::Display) {
    if cli.verbose > 0 {
        eprintln!("{msg}");
    }
}

fn scenarios(cli: &Cli, config: &Path) -> Result<Vec<ScenarioConfig>, Failure> {
    let mut cfg = files::load_config(config).exit(EXIT_CONFIG)?;
    if let Some(seed) = cli.seed {
        for s in &mut cfg.scenarios {
            s.seeds = vec![seed];
        }
    }
    Ok(cfg.scenarios)
}

// Invalid process parameters are configuration errors; anything else is a
// generation failure.
fn generation_exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Config(_) | HarnessError::Oracle(_) => EXIT_CONFIG,
        HarnessError::Process(ProcessError::UnstableAr(_) | ProcessError::Model(_) | ProcessError::InputProcess(_)) => EXIT_CONFIG,
        _ => EXIT_GENERATION,
    }
}

fn simulate(cli: &Cli, config: &Path) -> Result<(), Failure> {
    for s in scenarios(cli, config)? {
        let Some(process) = &s.process else { continue };
        for &seed in &s.seeds {
            let t = process
                .generate(s.length, seed)
                .map_err(|e| Failure { code: generation_exit_code(&e), error: anyhow::Error::new(e).context(format!("scenario {}", s.name)) })?;
            let stem = format!("{}_s{seed}", s.name);
            let path = cli.out.join(format!("{stem}.csv"));
            files::write_trajectory(&t, &path).exit(1)?;
            log(cli, format!("wrote {}", path.display()));
            for raw in &s.predictors {
                let traced = serde_json::from_value::<PredictorSpec>(raw.clone())
                    .map_err(anyhow::Error::from)
                    .and_then(|spec| {
                        let mut p = spec.build(&t)?;
                        let trace = run_online(&t, p.as_mut())?;
                        let path = cli.out.join(format!("{stem}_{}.trace.csv", spec.tag()));
                        files::write_trace(&trace, &t.outputs, &path)?;
                        Ok(path)
                    });
                match traced {
                    Ok(path) => log(cli, format!("wrote {}", path.display())),
                    Err(e) => eprintln!("warning: scenario {} predictor {raw}: {e:#}", s.name),
                }
            }
        }
    }
    Ok(())
}

fn predictor_spec(arg: &str) -> Result<PredictorSpec> {
    let json = if arg.trim_start().starts_with('{') { arg.to_string() } else { format!(r#"{{"kind":"{arg}"}}"#) };
    serde_json::from_str(&json).with_context(|| format!("unknown or incomplete predictor {arg:?}"))
}

fn print_table(reports: &[BoundReport]) {
    println!("{:<20} {:<18} {:<13} {:>5} {:>12} {:>12} {:>12}", "scenario", "predictor", "mode", "p", "bound", "empirical", "gap");
    for r in reports {
        println!(
            "{:<20} {:<18} {:<13} {:>5} {:>12.6} {:>12.6} {:>12.6}",
            r.scenario,
            r.predictor,
            r.mode.as_str(),
            r.p.to_string(),
            r.lower_bound,
            r.empirical_lp,
            r.gap
        );
    }
}

fn bound(cli: &Cli, args: &BoundArgs) -> Result<(), Failure> {
    let t = files::read_trajectory(&args.trajectory).exit(EXIT_CONFIG)?;
    let trace = match (&args.trace, &args.predictor) {
        (Some(path), _) => files::read_trace(path).exit(EXIT_CONFIG)?,
        (None, Some(arg)) => {
            let spec = predictor_spec(arg).exit(EXIT_CONFIG)?;
            let mut p = spec.build(&t).exit(EXIT_CONFIG)?;
            run_online(&t, p.as_mut()).exit(EXIT_GENERATION)?
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let source = match args.entropy {
        SourceArg::Oracle => EntropySource::Oracle,
        SourceArg::Estimated => EntropySource::Estimated(args.estimator.params(cli.seed)),
    };
    let reports = args
        .p
        .iter()
        .map(|&p| bound_report(&t, &trace, p, &source, None))
        .collect::<Result<Vec<_>, _>>()
        .exit(EXIT_CONFIG)?;
    let stem = args.trajectory.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let reports: Vec<BoundReport> = reports.into_iter().map(|r| BoundReport { scenario: stem.clone(), ..r }).collect();
    files::write_json(&reports, &cli.out.join("bound.json")).exit(1)?;
    print_table(&reports);
    Ok(())
}

fn diagnose(cli: &Cli, args: &DiagnoseArgs) -> Result<(), Failure> {
    let t = files::read_trajectory(&args.trajectory).exit(EXIT_CONFIG)?;
    let trace = files::read_trace(&args.trace).exit(EXIT_CONFIG)?;
    let d = achievability_diagnostics(&t, &trace, &args.estimator.params(cli.seed)).exit(EXIT_CONFIG)?;
    let path = cli.out.join("diagnostics.json");
    files::write_json(&d, &path).exit(1)?;
    println!("innovation MI (lags 1..{}): {:.4} bits, floor {:.4}", d.lag, d.innovation_mi.reported(), d.innovation_mi_floor.threshold);
    for l in &d.lagged_mi {
        println!("  lag {}: {:.4} bits, floor {:.4}", l.lag, l.estimate.reported(), d.lagged_mi_floor.threshold);
    }
    println!("transfer entropy: {:.4} bits, floor {:.4}", d.transfer_entropy.reported(), d.transfer_entropy_floor.threshold);
    println!("innovations white: {}; inputs exhausted: {}", d.innovations_white(), d.inputs_exhausted());
    log(cli, format!("wrote {}", path.display()));
    Ok(())
}

fn bench(cli: &Cli, config: &Path, p: &[PNorm], trajectory: Option<&Path>) -> Result<(), Failure> {
    let mut list = scenarios(cli, config)?;
    if !p.is_empty() {
        for s in &mut list {
            s.p = p.to_vec();
        }
    }
    let external = trajectory.map(files::read_trajectory).transpose().exit(EXIT_CONFIG)?;
    let mut all = ScenarioOutcome::default();
    for s in &list {
        log(cli, format!("scenario {}", s.name));
        let outcome = match &external {
            Some(t) => run_trajectory(s, t),
            None => run_scenario(s).exit(EXIT_CONFIG)?,
        };
        all.extend(outcome);
    }
    for f in &all.failures {
        eprintln!(
            "warning: {} seed {} {} {}: {}",
            f.scenario,
            f.seed,
            f.predictor.as_deref().unwrap_or("-"),
            f.mode.map_or("-", |m| m.as_str()),
            f.error
        );
    }
    let out = BenchOutput { reports: all.reports, failures: all.failures };
    files::write_bench_output(&out, &cli.out).exit(1)?;
    print_table(&out.reports);
    if out.reports.is_empty() {
        return Err(Failure { code: EXIT_NO_REPORTS, error: anyhow::anyhow!("no report succeeded") });
    }
    Ok(())
}

fn report(cli: &Cli, input: &Path) -> Result<(), Failure> {
    let out = files::read_bench_output(input).exit(EXIT_CONFIG)?;
    files::write_bench_output(&out, &cli.out).exit(1)?;
    print_table(&out.reports);
    Ok(())
}
