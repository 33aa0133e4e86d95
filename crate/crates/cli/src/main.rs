//! `drf`: train, refine, denoise and evaluate regression forests from the shell.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drf_core::dae::{self, DaeStack, TrainConfig};
use drf_core::data::{candidate_pool_size, load_csv, make_subsets, Dataset, MinMaxScaler, TargetColumn};
use drf_core::forest::{train_forest, Forest, ForestConfig, SplitCandidates};
use drf_core::harness::{evaluate, predict_rows, run_experiment, ExperimentConfig, Mode, Models, Report};
use drf_core::seed;
use drf_core::treeselect::{entropy_report, select_trees};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] drf_core::Error),
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(drf_core::Error::Config(_)) => 2,
            CliError::Core(drf_core::Error::Numeric(_)) => 4,
            CliError::Core(_) => 3,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "drf", version, about = "Denoising random forests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest on a CSV file and write the model JSON.
    Train(TrainArgs),
    /// Keep the lowest cross-entropy trees of a model.
    Select(SelectArgs),
    /// Train the path autoencoder stack for a model.
    TrainDae(TrainDaeArgs),
    /// Predict every row of a CSV file.
    Predict(PredictArgs),
    /// Corrupt every row at the given noise levels and report metrics.
    Evaluate(EvaluateArgs),
    /// Run a full experiment described by a key-value config file.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a numeric target column.
    #[arg(long)]
    data: PathBuf,
    /// Target column index, or `last`.
    #[arg(long, default_value = "last")]
    target_col: TargetColumn,
}

impl DataArgs {
    fn load(&self) -> CliResult<Dataset> {
        Ok(load_csv(&self.data, self.target_col)?)
    }

    /// Loads the rows and applies the model's feature scaling.
    fn load_scaled(&self, forest: &Forest) -> CliResult<Dataset> {
        let data = self.load()?;
        Ok(match &forest.scaler {
            Some(s) => s.transform(&data)?,
            None => data,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 15)]
    trees: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// Share of rows in the pool common to every tree.
    #[arg(long, default_value_t = 1.0)]
    overlap: f64,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Dimensions examined per node: `all` or a count drawn at random.
    #[arg(long, default_value = "all")]
    split_dims: SplitCandidates,
    /// Bootstrap size relative to a tree's candidate pool.
    #[arg(long, default_value_t = 1.0)]
    subset_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Held-out rows the tree cross-entropies are measured on.
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.7)]
    keep: f64,
    /// Also write the per-tree entropy table here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainDaeArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated noise levels drawn while training.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.125, 0.25, 0.375, 0.5])]
    noise_levels: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Epochs without held-out improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 20)]
    patience: usize,
    /// One autoencoder per depth instead of the leaf level only.
    #[arg(long)]
    per_depth: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dae: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "plain")]
    mode: Mode,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dae: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated modes; defaults to plain, plus multipath when `--dae` is given.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<Mode>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',', default_values_t = [0.25])]
    snr: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult {
    let (result, path) = match out {
        Some(p) => {
            let mut w = create(p)?;
            (f(&mut w).and_then(|_| w.flush()), p.to_path_buf())
        }
        None => {
            let mut w = io::stdout().lock();
            (f(&mut w), PathBuf::from("<stdout>"))
        }
    };
    result.map_err(|source| CliError::Io { path, source })
}

fn train(args: &TrainArgs) -> CliResult {
    if !(0.0..=1.0).contains(&args.overlap) {
        return Err(CliError::Usage(format!("--overlap {} outside [0, 1]", args.overlap)));
    }
    if !(args.subset_fraction > 0.0 && args.subset_fraction.is_finite()) {
        return Err(CliError::Usage("--subset-fraction must be positive".into()));
    }
    let raw = args.data.load()?;
    let scaler = MinMaxScaler::fit(&raw);
    let data = scaler.transform(&raw)?;
    let pool = candidate_pool_size(data.len(), args.trees, args.overlap);
    let size = ((args.subset_fraction * pool as f64).round() as usize).max(1);
    let plan = make_subsets(&data, args.trees, args.overlap, size, seed::derive(args.seed, &[3]))?;
    let cfg = ForestConfig {
        tree_count: args.trees,
        max_depth: args.depth,
        min_leaf_samples: args.min_leaf,
        candidates: args.split_dims,
        seed: seed::derive(args.seed, &[4]),
    };
    let mut forest = train_forest(&data, &plan, &cfg)?;
    forest.scaler = Some(scaler);
    forest.save(&args.out)?;
    eprintln!("trained {} trees, {} leaves", forest.len(), forest.total_leaves());
    Ok(())
}

fn select(args: &SelectArgs) -> CliResult {
    if !(args.keep > 0.0 && args.keep <= 1.0) {
        return Err(CliError::Usage(format!("--keep {} outside (0, 1]", args.keep)));
    }
    let forest = Forest::load(&args.model)?;
    let data = args.data.load_scaled(&forest)?;
    let samples: Vec<&[f64]> = data.rows().collect();
    let report = entropy_report(&forest, &samples)?;
    if let Some(path) = &args.report {
        write_output(Some(path), |w| report.write_csv(w))?;
    }
    let (kept, idx) = select_trees(&forest, &report, args.keep)?;
    kept.save(&args.out)?;
    eprintln!("kept trees {idx:?} of {}", forest.len());
    Ok(())
}

fn train_dae(args: &TrainDaeArgs) -> CliResult {
    let forest = Forest::load(&args.model)?;
    let data = args.data.load_scaled(&forest)?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch,
        noise_levels: args.noise_levels.clone(),
        seed: args.seed,
        patience: args.patience,
        ..TrainConfig::default()
    };
    let stack = dae::train_stack(&data, &forest, &cfg, args.per_depth)?;
    stack.save(&args.out)?;
    eprintln!("trained {} autoencoder(s)", stack.members().len());
    Ok(())
}

fn load_models(model: &Path, dae_path: Option<&Path>) -> CliResult<(Forest, Option<DaeStack>)> {
    let forest = Forest::load(model)?;
    let stack = dae_path.map(DaeStack::load).transpose()?;
    Ok((forest, stack))
}

fn models<'a>(forest: &'a Forest, stack: &'a Option<DaeStack>) -> Models<'a> {
    Models {
        forest,
        stack: stack.as_ref(),
        feature_dae: None,
    }
}

fn check_modes(modes: &[Mode], allowed: &[Mode], stack: &Option<DaeStack>) -> CliResult {
    for m in modes {
        if !allowed.contains(m) {
            return Err(CliError::Usage(format!("mode {m} is not available here")));
        }
        if m.needs_path_dae() && stack.is_none() {
            return Err(CliError::Usage(format!("mode {m} needs --dae")));
        }
    }
    Ok(())
}

fn predict(args: &PredictArgs) -> CliResult {
    let (forest, stack) = load_models(&args.model, args.dae.as_deref())?;
    check_modes(&[args.mode], &[Mode::Plain, Mode::RefinedOnly, Mode::Multipath], &stack)?;
    let data = args.data.load_scaled(&forest)?;
    let preds = predict_rows(models(&forest, &stack), data.rows(), args.mode)?;
    write_output(args.out.as_deref(), |w| {
        writeln!(w, "sample_index,prediction")?;
        for (i, p) in preds.iter().enumerate() {
            writeln!(w, "{i},{p}")?;
        }
        Ok(())
    })
}

fn evaluate_cmd(args: &EvaluateArgs) -> CliResult {
    let (forest, stack) = load_models(&args.model, args.dae.as_deref())?;
    let modes = if args.mode.is_empty() {
        let mut m = vec![Mode::Plain];
        if stack.is_some() {
            m.push(Mode::Multipath);
        }
        m
    } else {
        args.mode.clone()
    };
    let allowed = [Mode::Plain, Mode::RefinedOnly, Mode::Multipath, Mode::MultipathKnownNoise];
    check_modes(&modes, &allowed, &stack)?;
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if args.snr.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(CliError::Usage("--snr values must lie in [0, 1]".into()));
    }
    let data = args.data.load_scaled(&forest)?;
    let mut report = Report {
        dataset: data.name.clone(),
        ..Report::default()
    };
    for rep in 0..args.reps {
        for (si, &snr) in args.snr.iter().enumerate() {
            let noise_seed = seed::derive(args.seed, &[rep as u64, 7, si as u64]);
            let cells = evaluate(
                models(&forest, &stack),
                &data,
                data.column_means(),
                snr,
                noise_seed,
                rep,
                &modes,
            )?;
            report.cells.extend(cells);
        }
    }
    write_output(args.out.as_deref(), |w| report.write_csv(w))
}

fn benchmark(args: &BenchmarkArgs) -> CliResult {
    let cfg = ExperimentConfig::load(&args.config)?;
    let report = run_experiment(&cfg)?;
    for info in &report.repetitions {
        eprintln!(
            "rep {}: {} rows ({} train, {} test), {} of {} trees kept",
            info.rep, info.rows_used, info.train_rows, info.test_rows, info.trees_kept, info.trees_trained
        );
    }
    write_output(args.out.as_deref(), |w| report.write_csv(w))
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Select(a) => select(a),
        Command::TrainDae(a) => train_dae(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Benchmark(a) => benchmark(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
