use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use chronofill::bench::{render_comparison, resolve_mechanism, run_pipeline, Axis, Metric, RunConfig};
use chronofill::masking::{make_mask, write_mask, DEFAULT_BETA};
use chronofill::metrics::{evaluate_table, read_reports, write_reports, ReportIds};
use chronofill::synth::{generate_pseudo_periodic, PseudoPeriodicConfig};
use chronofill::table::{apply_mask, read_csv_hinted, read_ground_truth, write_csv, write_ground_truth};
use chronofill::time_encoding::encode_time_column;
use chronofill::{Execution, ImputerSpec, Table};

#[derive(Parser)]
#[command(name = "chronofill", version, about = "Mask, impute and score time-series tables")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the pseudo-periodic synthetic table.
    Synth(SynthArgs),
    /// Hide cells of a table under a missingness mechanism.
    Mask(MaskArgs),
    /// Fill the missing cells of a table.
    Impute(ImputeArgs),
    /// Score an imputed table against a ground-truth sidecar.
    Eval(EvalArgs),
    /// Run a full benchmark from a config file.
    Bench(BenchArgs),
    /// Render a comparison table from a report CSV.
    Report(ReportArgs),
    /// Print the encoded features of a table's time column.
    Encode(EncodeArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Input CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Name of the time column when detection is ambiguous.
    #[arg(long)]
    time_column: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file with generator parameters (n_samples, n_points, amplitude, ...).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    /// Output CSV.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct MaskArgs {
    #[command(flatten)]
    input: InputArgs,
    /// mcar, mnar, mar (driven by the time column) or mar:<column>.
    #[arg(long, default_value = "mcar")]
    mechanism: String,
    #[arg(long, default_value_t = 0.3)]
    rate: f64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for masked.csv, mask.csv and ground_truth.csv.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ImputeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Imputer spec, e.g. mean, knn:k=5, mf:rank=3, mice:rounds=10, neural:hidden=64x32.
    #[arg(long, default_value = "neural")]
    imputer: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV for the filled table.
    #[arg(long, short)]
    out: PathBuf,
    /// Directory for per-column training logs (neural imputer).
    #[arg(long)]
    logs: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Ground-truth sidecar written by `mask`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "dataset")]
    dataset: String,
    #[arg(long, default_value = "unknown")]
    imputer: String,
    #[arg(long, default_value = "unknown")]
    mechanism: String,
    #[arg(long, default_value_t = 0.0)]
    rate: f64,
    /// Report CSV to write (prints to stdout otherwise).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Override the config's output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap the worker pool (also CHRONOFILL_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report CSV written by `bench` or `eval`.
    #[arg(long, short)]
    input: PathBuf,
    /// mre, mse, two_norm or pearson_r.
    #[arg(long, default_value = "mre")]
    metric: String,
    /// Column axis: mechanism or dataset.
    #[arg(long, default_value = "mechanism")]
    by: String,
    /// Keep only rows with this rate.
    #[arg(long)]
    rate: Option<f64>,
    /// Print CSV instead of Markdown.
    #[arg(long)]
    csv: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Read the input table. Without a hint, a numeric column named `time` is
/// taken as the (ordinal) time column, so `synth` output round-trips.
fn load(input: &InputArgs) -> Result<Table> {
    let path = &input.input;
    let table = read_csv_hinted(path, input.time_column.as_deref())
        .with_context(|| format!("reading {}", path.display()))?;
    if input.time_column.is_none() && table.time_column().is_none() && table.column_index("time").is_some() {
        log::info!("using column 'time' as an ordinal time column (pass --time-column to choose another)");
        return Ok(read_csv_hinted(path, Some("time"))?);
    }
    Ok(table)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<PseudoPeriodicConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => PseudoPeriodicConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.samples {
        cfg.n_samples = n;
    }
    if let Some(n) = args.points {
        cfg.n_points = n;
    }
    let table = generate_pseudo_periodic(&cfg)?;
    write_csv(&table, &args.out)?;
    log::info!("wrote {} x {} table to {}", table.n_rows(), table.n_cols(), args.out.display());
    Ok(())
}

fn mask(args: MaskArgs) -> Result<()> {
    let table = load(&args.input)?;
    let mechanism = resolve_mechanism(&args.mechanism, &table)?;
    let mask = make_mask(&table, &mechanism, args.rate, args.beta, args.seed)?;
    let (masked, truth) = apply_mask(&table, &mask)?;
    fs::create_dir_all(&args.out)?;
    write_csv(&masked, args.out.join("masked.csv"))?;
    write_mask(&mask, args.out.join("mask.csv"))?;
    write_ground_truth(&truth, args.out.join("ground_truth.csv"))?;
    log::info!("masked {} cells ({mechanism}) into {}", mask.len(), args.out.display());
    Ok(())
}

fn impute(args: ImputeArgs, exec: Execution) -> Result<()> {
    let table = load(&args.input)?;
    let spec: ImputerSpec = args.imputer.parse()?;
    let result = spec.impute_with(&table, args.seed, exec)?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    write_csv(&result.table, &args.out)?;
    if let Some(dir) = &args.logs {
        fs::create_dir_all(dir)?;
        for log in &result.diagnostics.training_logs {
            log.write_csv(&dir.join(format!("{}.csv", log.column)))?;
        }
    }
    log::info!("filled {} cells with {spec}", result.filled.len());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let table = load(&args.input)?;
    let truth = read_ground_truth(&args.truth, &table)?;
    let ids = ReportIds { dataset: args.dataset, imputer: args.imputer, mechanism: args.mechanism, rate: args.rate };
    let report = evaluate_table(&table, &truth, &ids)?;
    match &args.out {
        Some(p) => write_reports(&[report], p)?,
        None => chronofill::metrics::write_reports_to(&[report], std::io::stdout())?,
    }
    Ok(())
}

fn bench(args: BenchArgs, exec: Execution) -> Result<bool> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    let manifest = run_pipeline(&cfg, exec)?;
    let failed = manifest.failed();
    eprintln!(
        "{} jobs, {} failed; report at {}",
        manifest.jobs.len(),
        failed,
        cfg.out.join("report.csv").display()
    );
    for j in manifest.jobs.iter().filter(|j| j.error.is_some()) {
        eprintln!("  {}: {}", j.job.id, j.error.as_deref().unwrap_or_default());
    }
    Ok(failed == 0)
}

fn report(args: ReportArgs) -> Result<()> {
    let mut reports = read_reports(&args.input)?;
    if let Some(rate) = args.rate {
        reports.retain(|r| r.rate == rate);
        if reports.is_empty() {
            bail!("no report rows with rate {rate}");
        }
    }
    let metric: Metric = args.metric.parse()?;
    let axis: Axis = args.by.parse()?;
    let table = render_comparison(&reports, metric, axis)?;
    emit(if args.csv { &table.csv } else { &table.markdown }, args.out.as_deref())
}

fn encode(args: EncodeArgs) -> Result<()> {
    let table = load(&args.input)?;
    let t = table.time_column().context("table has no time column")?;
    let feats = encode_time_column(table.column(t))?;
    let mut text = feats.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(",");
    text.push('\n');
    for i in 0..table.n_rows() {
        let row: Vec<String> = feats.iter().map(|f| f.values[i].to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    emit(&text, args.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let outcome = match cli.command {
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Mask(a) => mask(a).map(|_| true),
        Command::Impute(a) => impute(a, exec).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Bench(a) => bench(a, exec),
        Command::Report(a) => report(a).map(|_| true),
        Command::Encode(a) => encode(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
