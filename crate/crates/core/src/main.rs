use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use confdist::error::Error;
use confdist::harness::{DataSource, ExperimentConfig, MeasureKind, Mode, run_experiment, write_dataset, write_outputs};
use confdist::regressors::RegressorSpec;
use confdist::synth::{Generator, generate};

#[derive(Parser)]
#[command(name = "confdist", version, about = "Conformal predictive distributions: experiments and data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the permutation / sweep protocol and write summaries.
    Run(RunArgs),
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RegressorArg {
    Ls,
    Ridge,
    Knn,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Simple,
    Normalized,
    Nw,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Crps,
    Calibration,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    /// Numeric CSV, label in the last column.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    data: Option<PathBuf>,
    /// Synthetic generator instead of a file.
    #[arg(long)]
    synth: Option<String>,
    /// Size of the synthetic dataset.
    #[arg(long, default_value_t = 500)]
    synth_n: usize,
    /// Noise level of the synthetic generator.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long)]
    test_len: usize,
    #[arg(long, default_value_t = 10)]
    perms: usize,
    /// Comma-separated split fractions (default 0.01, 0.05, ..., 0.95, 0.99;
    /// 0.5 in calibration mode, which uses the first entry).
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Comma-separated fold counts (default 2..=20; 5 in calibration mode,
    /// which uses the first entry).
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// Use fold counts 2..=100 when --ks is not given.
    #[arg(long)]
    full_k_grid: bool,
    #[arg(long, value_enum, default_value = "ls")]
    regressor: RegressorArg,
    /// Ridge penalty before tuning.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Number of neighbours before tuning.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, value_enum, default_value = "simple")]
    measure: MeasureArg,
    #[arg(long, value_enum, default_value = "crps")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "on")]
    tune: Switch,
    /// Also write every loss (or PIT value).
    #[arg(long)]
    emit_raw: bool,
    /// Double the cross-conformal PIT values in calibration mode.
    #[arg(long = "conservative-2x")]
    conservative_2x: bool,
}

#[derive(Args)]
struct SynthArgs {
    name: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

fn config(args: RunArgs) -> Result<(ExperimentConfig, PathBuf, bool), Error> {
    let source = match (args.data, args.synth) {
        (Some(path), _) => DataSource::Csv(path),
        (None, Some(name)) => DataSource::Synth {
            generator: name.parse::<Generator>()?,
            n: args.synth_n,
            noise: args.noise,
        },
        (None, None) => unreachable!("clap requires one source"),
    };
    let mut c = ExperimentConfig::new(source, args.test_len);
    c.permutations = args.perms;
    let calibration = matches!(args.mode, ModeArg::Calibration);
    c.alphas = match args.alphas {
        Some(a) => a,
        None if calibration => vec![0.5],
        None => c.alphas,
    };
    c.ks = match args.ks {
        Some(k) => k,
        None if calibration => vec![5],
        None if args.full_k_grid => (2..=100).collect(),
        None => (2..=20).collect(),
    };
    c.regressor = match args.regressor {
        RegressorArg::Ls => RegressorSpec::least_squares(),
        RegressorArg::Ridge => RegressorSpec::ridge(args.lambda),
        RegressorArg::Knn => RegressorSpec::knn(args.k),
    };
    c.measure = match args.measure {
        MeasureArg::Simple => MeasureKind::Simple,
        MeasureArg::Normalized => MeasureKind::Normalized,
        MeasureArg::Nw => MeasureKind::Nw,
    };
    c.mode = match args.mode {
        ModeArg::Crps => Mode::Crps,
        ModeArg::Calibration => Mode::Calibration,
    };
    c.tune = matches!(args.tune, Switch::On);
    c.seed = args.seed;
    c.conservative_2x = args.conservative_2x;
    c.validate()?;
    Ok((c, args.out, args.emit_raw))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let (config, out, emit_raw) = config(args)?;
            let report = run_experiment(&config)?;
            for path in write_outputs(&report, &out, emit_raw)? {
                log::info!("wrote {}", path.display());
            }
            if let (Some(s), Some(c)) = (report.best_scps(), report.best_ccps()) {
                println!("best SCPS median CRPS {} at alpha = {}", s.stats.median, s.param);
                println!("best CCPS median CRPS {} at K = {}", c.stats.median, c.param);
            }
            if let Some(c) = &report.calibration {
                println!("SCPS PIT KS distance {} (alpha = {})", c.scps_ks, c.alpha);
                println!("CCPS PIT KS distance {} (K = {})", c.ccps_ks, c.k);
            }
            Ok(())
        }
        Command::Synth(args) => {
            let data = generate(args.name.parse()?, args.n, args.noise, args.seed)?;
            write_dataset(&data, &args.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}
