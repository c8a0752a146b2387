//! `oob-forest`: train random forests, compute bootstrap confidence
//! intervals for their generalization error from the out-of-bag bookkeeping,
//! run the Monte Carlo coverage study, and generate the synthetic benchmark
//! datasets.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oob_forest::datagen::{self, Process};
use oob_forest::forest::{Forest, TreeParams, train_forest};
use oob_forest::ingest::{DeclaredKind, LoadOptions, load_csv};
use oob_forest::montecarlo::{self, SimConfig};
use oob_forest::{Dataset, Error, Task, oobci};

#[derive(Parser)]
#[command(
    name = "oob-forest",
    version,
    about = "Random forests with out-of-bag bootstrap confidence intervals for the generalization error"
)]
struct Cli {
    /// Worker threads for tree training and Monte Carlo replications
    /// (default: all cores). Output is identical for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest on a CSV file, print the out-of-bag error estimate and
    /// save the model (trees plus in-bag bookkeeping).
    Train(TrainArgs),
    /// Compute percentile-bootstrap confidence intervals for the
    /// generalization error, from a saved model or by training in place.
    Ci(CiArgs),
    /// Run the Monte Carlo coverage study on a synthetic process.
    Simulate(SimulateArgs),
    /// Generate a synthetic dataset as CSV.
    Datagen(DatagenArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Training data CSV (headers in the first row; empty or NA = missing).
    #[arg(long)]
    data: PathBuf,

    /// Name of the response column.
    #[arg(long)]
    target: String,

    /// Prediction task: regression or classification.
    #[arg(long)]
    task: Task,

    /// Per-column kind overrides, e.g. `zip=categorical,age=numeric`.
    #[arg(long, value_parser = parse_overrides)]
    overrides: Option<Overrides>,

    /// CSV field delimiter.
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    delimiter: u8,
}

#[derive(Clone, Debug)]
struct Overrides(HashMap<String, DeclaredKind>);

fn parse_overrides(s: &str) -> Result<Overrides, String> {
    let mut map = HashMap::new();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let (name, kind) = part
            .split_once('=')
            .ok_or_else(|| format!("override `{part}` is not of the form column=kind"))?;
        let kind = match kind {
            "numeric" => DeclaredKind::Numeric,
            "categorical" => DeclaredKind::Categorical,
            other => return Err(format!("unknown kind `{other}`")),
        };
        map.insert(name.to_string(), kind);
    }
    Ok(Overrides(map))
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    let bytes = s.as_bytes();
    if bytes.len() != 1 {
        return Err("delimiter must be a single byte".into());
    }
    Ok(bytes[0])
}

#[derive(Args)]
struct ForestArgs {
    /// Number of trees in the forest.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    trees: u64,

    /// Candidate features per split (default: p/3 for regression, sqrt(p)
    /// for classification).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    mtry: Option<u64>,

    /// A node splits only while its in-bag weight exceeds this
    /// (default: 5 for regression, 1 for classification).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    min_node_size: Option<u64>,

    /// Optional depth cap (default: unlimited).
    #[arg(long)]
    max_depth: Option<usize>,
}

impl ForestArgs {
    fn params(&self, task: Task, n_features: usize) -> TreeParams {
        let mut params = TreeParams::defaults(task, n_features);
        if let Some(mtry) = self.mtry {
            params.mtry = mtry as usize;
        }
        if let Some(m) = self.min_node_size {
            params.min_node_size = m as usize;
        }
        params.max_depth = self.max_depth;
        params
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    forest: ForestArgs,

    /// Master seed; all randomness of the invocation flows from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Where to write the model file.
    #[arg(long)]
    model_out: PathBuf,

    /// Also print the ingestion schema report.
    #[arg(long)]
    schema_report: bool,
}

#[derive(Args)]
struct CiArgs {
    /// Previously saved model; when absent, a forest is trained in place
    /// with the flags below.
    #[arg(long)]
    model: Option<PathBuf>,

    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    forest: ForestArgs,

    /// Confidence levels, comma separated.
    #[arg(long, default_value = "0.90,0.95,0.99", value_parser = parse_levels)]
    levels: Levels,

    /// Bootstrap replicates M (one shared replicate vector across levels).
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(2..))]
    replicates: u64,

    /// Master seed; all randomness of the invocation flows from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Write the intervals as line-oriented records
    /// (`level lower upper point_estimate M seed`) to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct Levels(Vec<f64>);

fn parse_levels(s: &str) -> Result<Levels, String> {
    let mut levels = Vec::new();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let level: f64 = part.parse().map_err(|_| format!("bad level `{part}`"))?;
        if !(level > 0.0 && level < 1.0) {
            return Err(format!("level {level} outside (0, 1)"));
        }
        levels.push(level);
    }
    if levels.is_empty() {
        return Err("need at least one level".into());
    }
    for pair in levels.windows(2) {
        if pair[1] <= pair[0] {
            return Err("levels must be strictly increasing".into());
        }
    }
    Ok(Levels(levels))
}

#[derive(Args)]
struct SimulateArgs {
    /// Synthetic process: friedman or spheres.
    #[arg(long)]
    process: Process,

    /// Training sizes, comma separated (a sweep writes one block per size).
    #[arg(long, default_value = "200,500", value_parser = parse_sizes)]
    n: Sizes,

    /// Test sample size for approximating the true generalization error.
    #[arg(long, default_value_t = 20_000)]
    n_test: usize,

    /// Trees per forest.
    #[arg(long, default_value_t = 300)]
    trees: usize,

    /// Bootstrap replicates per interval.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(2..))]
    replicates: u64,

    /// Monte Carlo replications N.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    replications: u64,

    /// Nominal levels, comma separated (default: 0.05..0.95 step 0.05).
    #[arg(long, value_parser = parse_levels)]
    levels: Option<Levels>,

    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Report CSV path.
    #[arg(long, default_value = "coverage.csv")]
    out_csv: PathBuf,

    /// Report text table path.
    #[arg(long, default_value = "coverage.txt")]
    out_text: PathBuf,
}

#[derive(Clone, Debug)]
struct Sizes(Vec<usize>);

fn parse_sizes(s: &str) -> Result<Sizes, String> {
    let mut sizes = Vec::new();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let n: usize = part.parse().map_err(|_| format!("bad size `{part}`"))?;
        if n < 2 {
            return Err(format!("training size {n} must be >= 2"));
        }
        sizes.push(n);
    }
    if sizes.is_empty() {
        return Err("need at least one training size".into());
    }
    Ok(Sizes(sizes))
}

#[derive(Args)]
struct DatagenArgs {
    /// Synthetic process: friedman or spheres.
    #[arg(long)]
    process: Process,

    /// Rows to generate.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    n: u64,

    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let run = || match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Ci(args) => cmd_ci(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Datagen(args) => cmd_datagen(args),
    };

    let result = match cli.threads {
        None => run(),
        Some(k) if k >= 1 => {
            match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
                Ok(pool) => pool.install(run),
                Err(e) => Err(Error::InvalidArgument(format!("thread pool: {e}"))),
            }
        }
        Some(_) => Err(Error::InvalidArgument("--threads must be >= 1".into())),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 1,
        Error::InvalidDataset(_) | Error::SchemaMismatch(_) | Error::Io(_) | Error::ModelFormat(_) => 2,
        Error::EmptySubforest | Error::NoOobInformation => 3,
    }
}

fn load_data(args: &DataArgs) -> Result<(Dataset, oob_forest::ingest::SchemaReport), Error> {
    let mut options = LoadOptions::new(&args.target, args.task);
    options.delimiter = args.delimiter;
    if let Some(Overrides(map)) = &args.overrides {
        options.overrides = map.clone();
    }
    load_csv(&args.data, &options)
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let (data, report) = load_data(&args.data)?;
    if args.schema_report {
        print!("{}", report.render());
    }
    let params = args.forest.params(data.task(), data.n_features());
    let forest = train_forest(&data, args.forest.trees as usize, &params, args.seed)?;
    forest.save(&args.model_out)?;

    let aug = oobci::build_augmented(&forest, &data)?;
    let errors = oobci::per_observation_errors(&aug, &data)?;
    let estimate = oobci::oob_estimate(&errors)?;
    println!(
        "trained {} trees on {} rows ({} features, {})",
        forest.n_trees(),
        data.n_rows(),
        data.n_features(),
        data.task()
    );
    if !errors.excluded().is_empty() {
        println!(
            "note: {} observations had no out-of-bag trees and were excluded",
            errors.excluded().len()
        );
    }
    println!("oob estimate: {estimate}");
    println!("model written to {}", args.model_out.display());
    Ok(())
}

fn cmd_ci(args: &CiArgs) -> Result<(), Error> {
    let (data, _) = load_data(&args.data)?;
    let forest = match &args.model {
        Some(path) => {
            let forest = Forest::load(path)?;
            if forest.task() != data.task() {
                return Err(Error::SchemaMismatch(format!(
                    "model is {}, data is {}",
                    forest.task(),
                    data.task()
                )));
            }
            forest
        }
        None => {
            let params = args.forest.params(data.task(), data.n_features());
            train_forest(&data, args.forest.trees as usize, &params, args.seed)?
        }
    };

    let aug = oobci::build_augmented(&forest, &data)?;
    let errors = oobci::per_observation_errors(&aug, &data)?;
    let point = oobci::oob_estimate(&errors)?;
    let m = args.replicates as usize;
    let replicates = oobci::bootstrap_replicates(&errors, m, args.seed)?;
    let intervals = oobci::cis_from_replicates(&replicates, point, &args.levels.0, args.seed)?;

    println!("confidence intervals for the generalization error");
    println!("({} trees, {} rows, M = {m}, seed = {})", forest.n_trees(), data.n_rows(), args.seed);
    println!("{:<18} {:>16} {:>16}", "confidence level", "lower", "upper");
    for ci in &intervals {
        println!("{:<18} {:>16.6} {:>16.6}", ci.level, ci.lower, ci.upper);
    }
    println!("point estimate: {point}");
    if data.task() == Task::Regression {
        // The percentile interval is equivariant under monotone maps, so the
        // square-root scale is exact, not an approximation.
        println!();
        println!("root scale (same intervals through sqrt):");
        println!("{:<18} {:>16} {:>16}", "confidence level", "lower", "upper");
        for ci in &intervals {
            println!(
                "{:<18} {:>16.6} {:>16.6}",
                ci.level,
                ci.lower.sqrt(),
                ci.upper.sqrt()
            );
        }
        println!("point estimate (root scale): {}", point.sqrt());
    }

    if let Some(path) = &args.out {
        let mut file = create(path)?;
        for ci in &intervals {
            writeln!(file, "{}", ci.record_line())?;
        }
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let base = SimConfig {
        process: args.process,
        n: args.n.0[0],
        n_test: args.n_test,
        trees: args.trees,
        replicates: args.replicates as usize,
        replications: args.replications as usize,
        levels: args
            .levels
            .clone()
            .map_or_else(montecarlo::default_levels, |l| l.0),
        seed: args.seed,
    };
    // Validate everything up front, before any work starts.
    base.validate()?;

    let report = montecarlo::run_sweep(&base, &args.n.0)?;

    let csv = report.to_csv();
    let table = report.to_table();
    std::fs::write(&args.out_csv, &csv).map_err(|e| io_at(&args.out_csv, e))?;
    std::fs::write(&args.out_text, &table).map_err(|e| io_at(&args.out_text, e))?;
    print!("{table}");
    println!("report written to {} and {}", args.out_csv.display(), args.out_text.display());
    Ok(())
}

fn cmd_datagen(args: &DatagenArgs) -> Result<(), Error> {
    let data = datagen::generate(args.process, args.n as usize, args.seed)?;
    data.write_csv_path(&args.out)?;
    println!(
        "wrote {} rows of {} to {}",
        data.n_rows(),
        args.process,
        args.out.display()
    );
    Ok(())
}

fn create(path: &Path) -> Result<std::fs::File, Error> {
    std::fs::File::create(path).map_err(|e| io_at(path, e))
}

fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("cannot write {}: {e}", path.display()),
    ))
}
