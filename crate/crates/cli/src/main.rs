use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fairbench::batch::{expand_jobs, load_batch_file, run_batch, RunOptions};
use fairbench::dataset::recipes::Recipe;
use fairbench::dataset::{DatasetCache, SplitSpec};
use fairbench::metrics::FairnessMetric;
use fairbench::model::ModelRegistry;
use fairbench::params::Params;
use fairbench::pipeline::{
    default_data_dir, load_original, run_bench_stage, run_prep_stage, Arm, ArmOutcome, BenchConfig, DatasetSource,
    StageOneReport,
};
use fairbench::preproc::{Method, MethodConfig};
use fairbench::report::{format_value, read_summary_json, write_job_artifacts, MetricTable, Summary};

#[derive(Parser)]
#[command(name = "fairbench", version, about = "Benchmark fairness pre-processing on tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transform a dataset and compare data-level fairness metrics.
    Prep(PrepArgs),
    /// Train on original and transformed data and sweep thresholds.
    Bench(BenchArgs),
    /// Run a YAML experiment matrix.
    Batch(BatchArgs),
    /// Build prepared CSVs for the bundled datasets from raw downloads.
    PrepareData(PrepareDataArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct SourceArgs {
    /// Bundled dataset name, schema path, or `synthetic`.
    #[arg(long)]
    dataset: Option<String>,
    /// Schema file whose `data` key points at a CSV.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct PrepArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Sensitive attribute; defaults to the schema's `protected`.
    #[arg(long)]
    attribute: Option<String>,
    /// RW, LFR, DIR or OPP.
    #[arg(long)]
    method: Method,
    /// Method parameter as `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "results/prep")]
    out: PathBuf,
    /// Defaults to `<out>/cache`.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// `summary.json` written by `prep`.
    #[arg(long)]
    from: PathBuf,
    #[arg(long, default_value = "logreg")]
    model: String,
    /// Model parameter as `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// SPD, DI, EOD, AOD or Theil.
    #[arg(long, default_value = "SPD")]
    select_metric: String,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.15, 0.15])]
    split: Vec<f64>,
    /// Defaults to the directory of `--from`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to `<directory of --from>/cache`.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `parallelism` in the file.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Overrides `output` in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to `<out>/cache`.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct PrepareDataArgs {
    /// Dataset name, or `all` for every dataset whose raw files are present.
    #[arg(long, default_value = "all")]
    recipe: String,
    /// Directory holding the raw downloads; defaults to `<data dir>/raw`.
    #[arg(long)]
    raw: Option<PathBuf>,
    /// Defaults to `$FAIRBENCH_DATA_DIR` or `./data`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Prep(args) => prep(args),
        Command::Bench(args) => bench(args),
        Command::Batch(args) => batch(args),
        Command::PrepareData(args) => prepare_data(args),
    }
}

fn source_of(args: &SourceArgs) -> Result<DatasetSource> {
    Ok(match (&args.dataset, &args.schema) {
        (_, Some(path)) => DatasetSource::Schema { path: path.clone() },
        (Some(name), None) => DatasetSource::parse(name)?,
        (None, None) => bail!("one of --dataset or --schema is required"),
    })
}

fn print_stage_one(report: &StageOneReport) {
    print!("{}", MetricTable::with_original(std::slice::from_ref(report)).to_csv_string());
}

fn prep(args: PrepArgs) -> Result<ExitCode> {
    let source = source_of(&args.source)?;
    let params = Params::from_pairs(&args.params)?;
    let method = MethodConfig::from_params(args.method, &params)?;
    let loaded = source.load(args.attribute.as_deref())?;
    let cache = DatasetCache::new(args.cache.unwrap_or_else(|| args.out.join("cache")))?;
    let stage1 = run_prep_stage(&loaded, &method, args.seed, Some(&cache))?;
    let summary = Summary::new(None, stage1.report, None);
    write_job_artifacts(&args.out, &summary)?;
    print_stage_one(&summary.stage1);
    eprintln!("wrote {}", args.out.join("summary.json").display());
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    let summary = read_summary_json(&args.from)?;
    let base = args.from.parent().unwrap_or(Path::new(".")).to_path_buf();
    let cache = DatasetCache::new(args.cache.unwrap_or_else(|| base.join("cache")))?;
    let original = load_original(&summary.stage1, &cache)?;
    let selection_metric: FairnessMetric = args.select_metric.parse().map_err(anyhow::Error::msg)?;
    let split = SplitSpec {
        train: args.split[0],
        validation: args.split[1],
        test: args.split[2],
        seed: summary.stage1.seed,
    };
    let cfg = BenchConfig {
        model: args.model,
        model_params: Params::from_pairs(&args.params)?,
        split,
        selection_metric,
        ..BenchConfig::default()
    };
    let report = run_bench_stage(&summary.stage1, &original, &cfg, &ModelRegistry::builtin())?;
    let out = args.out.unwrap_or(base);
    let all_completed = report.all_completed();
    for arm in Arm::ALL {
        match report.arm(arm) {
            ArmOutcome::Completed(r) => {
                let m = &r.test_at_optimum;
                println!(
                    "{:<9} threshold {:.2}  test BA {}  SPD {}  DI {}  EOD {}  AOD {}  Theil {}",
                    arm.name(),
                    r.optimal_threshold,
                    format_value(&m.balanced_accuracy),
                    format_value(&m.statistical_parity_difference),
                    format_value(&m.disparate_impact),
                    format_value(&m.equal_opportunity_difference),
                    format_value(&m.average_odds_difference),
                    format_value(&m.theil_index)
                );
            }
            ArmOutcome::Failed { error } => println!("{:<9} failed: {error}", arm.name()),
        }
    }
    let summary = Summary::new(summary.job_id, summary.stage1, Some(report));
    write_job_artifacts(&out, &summary)?;
    eprintln!("wrote artifacts to {}", out.display());
    Ok(if all_completed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn batch(args: BatchArgs) -> Result<ExitCode> {
    let spec = load_batch_file(&args.config)?;
    let registry = ModelRegistry::builtin();
    let expansion = expand_jobs(&spec, &registry)?;
    for (dataset, attribute) in &expansion.skipped {
        eprintln!("skipped: dataset `{dataset}` has no attribute `{attribute}`");
    }
    let mut options = RunOptions::new(args.out.unwrap_or(spec.output.clone()));
    options.parallelism = args.parallelism.unwrap_or(spec.parallelism).max(1);
    options.cache_dir = args.cache;
    options.grid = spec.grid.clone();
    eprintln!(
        "running {} jobs ({} skipped combinations) with parallelism {}",
        expansion.jobs.len(),
        expansion.skipped.len(),
        options.parallelism
    );
    let report = run_batch(&expansion.jobs, &expansion.skipped, &options, &registry)?;
    for job in &report.jobs {
        let status = match &job.status {
            fairbench::batch::JobStatus::Succeeded => "ok".to_string(),
            fairbench::batch::JobStatus::Failed { error } => format!("FAILED: {error}"),
        };
        println!(
            "{}  {}:{} {} {} seed {}  {:.2}s  {status}",
            job.id, job.dataset, job.attribute, job.method, job.model, job.seed, job.wall_time_secs
        );
    }
    println!("{} succeeded, {} failed", report.succeeded, report.failed);
    Ok(if report.all_succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn prepare_data(args: PrepareDataArgs) -> Result<ExitCode> {
    let out_dir = args.out.unwrap_or_else(default_data_dir);
    let raw = args.raw.unwrap_or_else(|| out_dir.join("raw"));
    let recipes: Vec<Recipe> = if args.recipe == "all" {
        Recipe::ALL.into_iter().filter(|r| r.available(&raw)).collect()
    } else {
        vec![args.recipe.parse()?]
    };
    if recipes.is_empty() {
        bail!("no raw dataset files found in {}", raw.display());
    }
    for recipe in recipes {
        let out = out_dir.join(format!("{}.csv", recipe.name()));
        let report = recipe
            .prepare(&raw, &out)
            .with_context(|| format!("preparing {recipe}"))?;
        println!(
            "{recipe}: {} raw rows -> {} rows in {}",
            report.rows_in,
            report.rows_out,
            out.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}
