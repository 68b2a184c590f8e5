use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gpbandit::kernels::{KernelFamily, KernelSpec};
use gpbandit::objectives::REGISTRY;
use gpbandit::runner::csvio::{curves_to_bytes, rounds_from_bytes, summaries_from_bytes, write_atomic};
use gpbandit::runner::suite::curve_tables;
use gpbandit::runner::{run_suite, EvaluationMode, ExperimentConfig, Overrides};
use gpbandit::strategies::Algorithm;
use gpbandit::theory::{
    beta_halfwidth, lower_bound_quantities, upper_bounds, BetaScheduleSpec, GainModel, LowerBoundConstants,
    LowerBoundKind,
};
use gpbandit::Error;

#[derive(Parser)]
#[command(name = "gpbandit", version, about = "GP bandit experiments with lenient regret and good-action search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite from a config file and/or flags.
    Run(RunArgs),
    /// List the registered objectives.
    ListObjectives,
    /// Print a theory-only bound report as JSON.
    Bounds(BoundsArgs),
    /// Rebuild curve tables from rounds.csv and summaries.csv.
    Curves(CurvesArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<String>,
    /// Algorithm names, comma separated.
    #[arg(long, value_delimiter = ',')]
    acq: Option<Vec<String>>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Quantile threshold: about this fraction of the domain is good.
    #[arg(long, group = "threshold")]
    xi: Option<f64>,
    /// Explicit threshold.
    #[arg(long, group = "threshold")]
    eta: Option<f64>,
    /// Threshold at the known maximum minus this offset.
    #[arg(long, group = "threshold")]
    delta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to every core.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Se,
    Matern,
}

#[derive(Args)]
struct BoundsArgs {
    /// Lenient tolerance Δ.
    #[arg(long)]
    delta_gap: f64,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    norm_bound: f64,
    /// Confidence failure probability.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long = "T")]
    horizon: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = KernelArg::Se)]
    kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    lengthscale: f64,
    #[arg(long, default_value_t = 2.5)]
    nu: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Leading constant of the information-gain growth model.
    #[arg(long, default_value_t = 1.0)]
    gain_coefficient: f64,
    /// Largest N scanned; defaults to 100·T.
    #[arg(long)]
    n_cap: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    FractionFound,
    BestEstimate,
    RegretCurves,
}

#[derive(Args)]
struct CurvesArgs {
    /// Directory holding rounds.csv and summaries.csv.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Last round; defaults to the largest round in the data.
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// Output directory; defaults to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<ExitCode, Error> {
    let algorithms = match args.acq {
        Some(names) => Some(
            names
                .iter()
                .map(|n| {
                    Algorithm::parse(n).ok_or_else(|| Error::config("--acq", format!("unknown algorithm `{n}`")))
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let overrides = Overrides {
        objective: args.objective,
        algorithms,
        horizon: args.horizon,
        seed: args.seed,
        trials: args.trials,
        noise: args.noise,
        xi: args.xi,
        eta: args.eta,
        delta: args.delta,
        output: args.out,
    };
    let config = match &args.config {
        Some(p) => ExperimentConfig::from_file(p, &overrides)?,
        None => ExperimentConfig::from_json_with("", &overrides)?,
    };
    let suite = run_suite(&config, args.parallel)?;
    let files = suite.write(&config.output)?;
    let failed = suite.episodes.iter().filter(|e| e.trace.termination.is_failure()).count();
    eprintln!(
        "{} episodes ({} failed), config {}",
        suite.episodes.len(),
        failed,
        suite.config_hash
    );
    for f in files {
        println!("{}", f.display());
    }
    Ok(if suite.all_failed() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn bounds(a: BoundsArgs) -> Result<ExitCode, Error> {
    let kernel = match a.kernel {
        KernelArg::Se => KernelSpec::squared_exponential(a.lengthscale, 1.0),
        KernelArg::Matern => KernelSpec::matern(a.nu, a.lengthscale, 1.0),
    };
    kernel.validate()?;
    let model = match kernel.family {
        KernelFamily::SquaredExponential => GainModel::SquaredExponential {
            coefficient: a.gain_coefficient,
            dim: a.dim,
        },
        _ => GainModel::Matern {
            coefficient: a.gain_coefficient,
            dim: a.dim,
            nu: a.nu,
        },
    };
    let schedule = BetaScheduleSpec::Rkhs {
        norm_bound: a.norm_bound,
        noise_std: a.noise,
        lambda: a.lambda,
        delta: a.delta,
    };
    schedule.validate()?;
    if !(a.delta_gap > 0.0) {
        return Err(Error::config("--delta-gap", "must be positive"));
    }
    let gain_of = |n: usize| model.gain(n);
    let beta_of = |n: usize| {
        let n = n.max(1);
        beta_halfwidth(&schedule, n, model.gain(n - 1)).map_or(f64::INFINITY, |b| b * b)
    };
    let cap = a.n_cap.unwrap_or(100 * a.horizon.max(1));
    let mut report = upper_bounds(a.delta_gap, a.lambda, a.norm_bound, a.horizon, beta_of, gain_of, cap);
    let constants = LowerBoundConstants::default();
    let lb = |kind| {
        lower_bound_quantities(
            &kernel,
            a.dim,
            a.norm_bound,
            a.delta_gap,
            a.noise,
            a.delta,
            a.horizon as f64,
            kind,
            &constants,
        )
    };
    report.lower_indicator = Some(lb(LowerBoundKind::Indicator));
    report.lower_hinge = Some(lb(LowerBoundKind::Hinge));
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn curves(a: CurvesArgs) -> Result<ExitCode, Error> {
    let rows = rounds_from_bytes(&std::fs::read(a.input.join("rounds.csv"))?)?;
    let summaries = summaries_from_bytes(&std::fs::read(a.input.join("summaries.csv"))?)?;
    let horizon = a
        .horizon
        .unwrap_or_else(|| rows.iter().map(|r| r.record.t.max(0) as usize).max().unwrap_or(0));
    let mode = match a.mode {
        ModeArg::FractionFound => EvaluationMode::FractionFound,
        ModeArg::BestEstimate => EvaluationMode::BestEstimate,
        ModeArg::RegretCurves => EvaluationMode::RegretCurves,
    };
    let out = a.out.unwrap_or(a.input);
    std::fs::create_dir_all(&out)?;
    for (stem, points) in curve_tables(mode, &summaries, &rows, horizon)? {
        let p = out.join(format!("{stem}.csv"));
        write_atomic(&p, &curves_to_bytes(&points)?)?;
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::ListObjectives => {
            for (name, description) in REGISTRY {
                println!("{name}\t{description}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bounds(a) => bounds(a),
        Command::Curves(a) => curves(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
