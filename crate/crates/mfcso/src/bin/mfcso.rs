use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mfcso::data::{load_dataset, min_max_apply, min_max_fit, Dataset};
use mfcso::engine::{self, AlgorithmConfig, Variant};
use mfcso::filters::{generate_tasks, ReliefFParams, TaskGenConfig};
use mfcso::harness::{
    run_experiment, synth_dataset, DataSource, ExperimentConfig, OutputFormat, SyntheticSpec,
};
use mfcso::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mfcso",
    about = "Multi-filter multitask feature selection for high-dimensional classification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank features with all three filters and report task membership.
    Rank(RankArgs),
    /// One optimizer run on a dataset; reports the selected features.
    Run(RunArgs),
    /// Full protocol: repeated runs over stratified outer folds.
    Experiment(ExperimentArgs),
    /// Generate a synthetic benchmark dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct AlgoArgs {
    /// Algorithm variant.
    #[arg(long, default_value = "MF_CSO")]
    variant: String,
    /// Base random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Total population size (split evenly over tasks).
    #[arg(long, default_value_t = 300)]
    pop: usize,
    /// Number of generations.
    #[arg(long, default_value_t = 70)]
    iters: usize,
    /// Probability threshold of the no-transfer branch [0,1].
    #[arg(long)]
    ptrans: Option<f64>,
    /// Decoding threshold in [0,1]: a feature is selected iff its gene exceeds it.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Error weight of the fitness in (0,1).
    #[arg(long, default_value_t = 0.999999)]
    alpha: f64,
    /// Inner cross-validation folds for fitness evaluation.
    #[arg(long = "inner-folds", default_value_t = 10)]
    inner_folds: usize,
    /// Nearest hits/misses per class in Relief-F.
    #[arg(long = "relieff-h", default_value_t = 10)]
    relieff_h: usize,
}

impl AlgoArgs {
    fn to_config(&self) -> Result<AlgorithmConfig> {
        let variant = Variant::from_str(&self.variant)?;
        let default_ptrans = AlgorithmConfig::default().p_trans;
        if variant == Variant::EmtNoKt {
            if let Some(p) = self.ptrans {
                if p != default_ptrans {
                    return Err(Error::validation(
                        "--ptrans is inapplicable to EMT_noKT (no transfer happens); \
                         omit it or leave it at the default",
                    ));
                }
            }
        }
        let cfg = AlgorithmConfig {
            variant,
            population: self.pop,
            iterations: self.iters,
            p_trans: self.ptrans.unwrap_or(default_ptrans),
            delta: self.delta,
            alpha: self.alpha,
            inner_folds: self.inner_folds,
            relieff_h: self.relieff_h,
            seed: self.seed,
            ..AlgorithmConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct RankArgs {
    /// Input dataset (CSV, last column is the class label).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "relieff-h", default_value_t = 10)]
    relieff_h: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Input dataset (CSV, last column is the class label).
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    algo: AlgoArgs,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Also write per-generation best-fitness traces to this CSV file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Input dataset (CSV, last column is the class label).
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    algo: AlgoArgs,
    /// Independent repetitions of the whole fold protocol.
    #[arg(long, default_value_t = 30)]
    runs: usize,
    /// Outer cross-validation folds.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Also write per-generation best-fitness traces to this CSV file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    features: usize,
    #[arg(long, default_value_t = 20)]
    informative: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => std::io::stdout().write_all(content.as_bytes())?,
    }
    Ok(())
}

fn load_normalized(path: &PathBuf) -> Result<Dataset<f64>> {
    let raw = load_dataset::<f64>(path)?;
    let model = min_max_fit(&raw);
    min_max_apply(&model, &raw)
}

fn cmd_rank(args: &RankArgs) -> Result<()> {
    let data = load_normalized(&args.data)?;
    let cfg = TaskGenConfig {
        relieff: ReliefFParams {
            h: args.relieff_h,
            passes: None,
            seed: args.seed,
        },
        ..TaskGenConfig::default()
    };
    let generation = generate_tasks(&data, &cfg)?;
    let [relieff, tv, pcc] = match generation.weights.as_slice() {
        [a, b, c] => [a, b, c],
        _ => unreachable!("generate_tasks yields one weight vector per filter"),
    };
    let mut csv = String::from("feature_id,relieff,tv,pcc,selected_by\n");
    for j in 0..data.n_features() {
        let selected_by = generation
            .task_set
            .tasks
            .iter()
            .filter(|t| t.feature_indices.binary_search(&j).is_ok())
            .map(|t| t.source.name())
            .collect::<Vec<_>>()
            .join(";");
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            j, relieff.weights[j], tv.weights[j], pcc.weights[j], selected_by
        ));
    }
    emit(&args.out, &csv)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = args.algo.to_config()?;
    let data = load_normalized(&args.data)?;
    let result = engine::run(&cfg, &data)?;
    let best = result.best();
    if let Some(trace_path) = &args.trace {
        let mut csv = String::from("generation,task,best_fitness\n");
        for (task, trace) in result.trace_f64().iter().enumerate() {
            for (generation, fitness) in trace.iter().enumerate() {
                csv.push_str(&format!("{generation},{task},{fitness}\n"));
            }
        }
        std::fs::write(trace_path, csv)?;
    }
    match args.format {
        FormatArg::Json => {
            let doc = serde_json::json!({
                "dataset": data.name(),
                "variant": cfg.variant.name(),
                "seed": cfg.seed,
                "best_task": result.best_task,
                "fitness": best.fitness,
                "cv_error": best.error,
                "n_selected": result.selected.len(),
                "selected": result.selected,
                "evaluations": result.evaluations,
            });
            emit(&args.out, &format!("{}\n", serde_json::to_string_pretty(&doc)?))
        }
        FormatArg::Csv => {
            let sel = result
                .selected
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(";");
            let csv = format!(
                "dataset,variant,seed,best_task,fitness,cv_error,n_selected,selected\n\
                 {},{},{},{},{},{},{},{}\n",
                data.name(),
                cfg.variant.name(),
                cfg.seed,
                result.best_task,
                best.fitness,
                best.error,
                result.selected.len(),
                sel
            );
            emit(&args.out, &csv)
        }
    }
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let algorithm = args.algo.to_config()?;
    let mut cfg = ExperimentConfig::new(
        DataSource::Path(args.data.display().to_string()),
        algorithm,
    );
    cfg.runs = args.runs;
    cfg.outer_folds = args.folds;
    cfg.base_seed = args.algo.seed;
    cfg.output = args.out.as_ref().map(|p| p.display().to_string());
    cfg.format = match args.format {
        FormatArg::Json => OutputFormat::Json,
        FormatArg::Csv => OutputFormat::Csv,
    };
    let report = run_experiment(&cfg)?;
    if let Some(trace_path) = &args.trace {
        std::fs::write(trace_path, report.trace_csv())?;
    }
    let content = match cfg.format {
        OutputFormat::Json => format!("{}\n", report.to_json()?),
        OutputFormat::Csv => report.to_csv(),
    };
    emit(&args.out, &content)
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_features: args.features,
        n_informative: args.informative,
        n_samples: args.samples,
        n_classes: args.classes,
        noise: args.noise,
        seed: args.seed,
    };
    let (data, _) = synth_dataset::<f64>(&spec)?;
    let mut csv = String::new();
    for j in 0..data.n_features() {
        csv.push_str(&format!("f{j},"));
    }
    csv.push_str("class\n");
    for i in 0..data.n_samples() {
        for j in 0..data.n_features() {
            csv.push_str(&format!("{},", data.value(i, j)));
        }
        csv.push_str(&format!("{}\n", data.labels()[i]));
    }
    emit(&args.out, &csv)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MFCSO_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::validation("MFCSO_THREADS must be a positive integer"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::validation(format!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code_for(&e));
    }
    let result = match &cli.command {
        Command::Rank(args) => cmd_rank(args),
        Command::Run(args) => cmd_run(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
