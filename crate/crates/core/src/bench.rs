//! End-to-end benchmark runs: load or synthesize a dataset, then mask, impute
//! and score it for every (mechanism, rate, seed, imputer) job.
//!
//! Each job writes into its own directory under `<out>/jobs/`, built in a
//! temporary directory and renamed into place, so a run can be interrupted
//! and resumed: jobs whose directory already holds a matching `job.json` are
//! reused, everything else is recomputed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impute::{ImputationResult, ImputerSpec};
use crate::masking::{make_mask, write_mask, Mechanism, DEFAULT_BETA};
use crate::metrics::{evaluate, scatter_pairs, write_reports_to, EvalReport, ReportIds};
use crate::par::{self, Execution};
use crate::rng::derive_seed;
use crate::synth::{generate_pseudo_periodic, PseudoPeriodicConfig};
use crate::table::{apply_mask, read_csv_hinted, write_csv_to, write_ground_truth, Table, TruthCell};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Synth(PseudoPeriodicConfig),
    Csv {
        path: PathBuf,
        #[serde(default)]
        time_column: Option<String>,
        #[serde(default)]
        name: Option<String>,
    },
}

impl DatasetSource {
    pub fn name(&self) -> String {
        match self {
            DatasetSource::Synth(_) => "synthetic".into(),
            DatasetSource::Csv { name: Some(n), .. } => n.clone(),
            DatasetSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
        }
    }

    pub fn load(&self) -> Result<Table> {
        match self {
            DatasetSource::Synth(cfg) => generate_pseudo_periodic(cfg),
            DatasetSource::Csv { path, time_column, .. } => read_csv_hinted(path, time_column.as_deref()),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// A benchmark run, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub mechanisms: Vec<String>,
    pub rates: Vec<f64>,
    pub imputers: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file. Relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DatasetSource::Csv { path: p, .. } = &mut cfg.dataset {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.mechanisms.is_empty() || self.rates.is_empty() || self.imputers.is_empty() || self.seeds.is_empty() {
            return bad("mechanisms, rates, imputers and seeds must all be non-empty".into());
        }
        for m in &self.mechanisms {
            if !m.trim().eq_ignore_ascii_case("mar") {
                m.parse::<Mechanism>().map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        for &r in &self.rates {
            if !(r > 0.0 && r < 1.0) {
                return bad(format!("rate {r} must be in (0, 1)"));
            }
        }
        for i in &self.imputers {
            i.parse::<ImputerSpec>().map_err(|e| Error::Config(e.to_string()))?;
        }
        if !self.beta.is_finite() {
            return bad(format!("beta {} is not finite", self.beta));
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        if let DatasetSource::Synth(s) = &self.dataset {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Parse a mechanism; a bare `mar` uses the table's time column as its driver.
pub fn resolve_mechanism(text: &str, table: &Table) -> Result<Mechanism> {
    if text.trim().eq_ignore_ascii_case("mar") {
        let t = table.time_column().ok_or_else(|| {
            Error::InvalidArgument("bare 'mar' needs a time column to drive it; use mar:<column>".into())
        })?;
        return Ok(Mechanism::Mar { driver: table.column(t).name.clone() });
    }
    text.parse()
}

/// Identity of one job. Equal specs produce identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: String,
    pub dataset: String,
    pub mechanism: String,
    pub rate: f64,
    pub seed: u64,
    pub imputer: String,
    pub beta: f64,
}

impl JobSpec {
    pub fn mask_seed(&self) -> u64 {
        derive_seed(self.seed, &["mask", &self.mechanism, &self.rate.to_string()])
    }

    pub fn impute_seed(&self) -> u64 {
        derive_seed(self.seed, &["impute", &self.mechanism, &self.rate.to_string(), &self.imputer])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Ok,
    Reused,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobEntry {
    pub job: JobSpec,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_clock_secs: f64,
    /// Paths relative to the run's output directory.
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    pub dataset: String,
    pub jobs: Vec<JobEntry>,
    /// Run-level files, relative to the output directory.
    pub artifacts: Vec<String>,
    /// Reports of successful jobs, in job order.
    #[serde(skip)]
    pub reports: Vec<EvalReport>,
}

impl RunManifest {
    pub fn failed(&self) -> usize {
        self.jobs.iter().filter(|j| j.status == JobStatus::Failed).count()
    }
}

/// Stored beside each job's artifacts; lets a rerun skip finished jobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JobRecord {
    job: JobSpec,
    report: EvalReport,
    warnings: Vec<String>,
    artifacts: Vec<String>,
}

fn sanitize(s: &str) -> String {
    let mut out = String::new();
    for ch in s.chars() {
        if ch.is_ascii_alphanumeric() || ch == '.' {
            out.push(ch);
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

/// Expand the config into jobs, ordered mechanism × rate × seed × imputer.
pub fn plan_jobs(config: &RunConfig, table: &Table, dataset: &str) -> Result<Vec<JobSpec>> {
    let mechanisms: Vec<Mechanism> = config
        .mechanisms
        .iter()
        .map(|m| resolve_mechanism(m, table))
        .collect::<Result<_>>()?;
    let imputers: Vec<String> = config
        .imputers
        .iter()
        .map(|i| i.parse::<ImputerSpec>().map(|s| s.to_string()))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for m in &mechanisms {
        for &rate in &config.rates {
            for &seed in &config.seeds {
                for imp in &imputers {
                    let base = sanitize(&format!("{m}_r{rate}_s{seed}_{imp}"));
                    let n = seen.entry(base.clone()).or_insert(0);
                    *n += 1;
                    let id = if *n == 1 { base } else { format!("{base}-{n}") };
                    jobs.push(JobSpec {
                        id,
                        dataset: dataset.to_string(),
                        mechanism: m.to_string(),
                        rate,
                        seed,
                        imputer: imp.clone(),
                        beta: config.beta,
                    });
                }
            }
        }
    }
    Ok(jobs)
}

/// Write `path` by filling a sibling temp file and renaming it into place.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
        fill(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Write the `truth,imputed,mechanism,column` scatter file; returns the row count.
pub fn scatter_dump(result: &ImputationResult, truth: &[TruthCell], mechanism: &str, path: &Path) -> Result<usize> {
    let pairs = scatter_pairs(result, truth);
    write_atomic(path, |w| {
        let mut csv = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        csv.write_record(["truth", "imputed", "mechanism", "column"])?;
        for (y, x, col) in &pairs {
            csv.write_record([y.to_string(), x.to_string(), mechanism.to_string(), col.clone()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(pairs.len())
}

fn reuse_job(dir: &Path, job: &JobSpec) -> Option<JobRecord> {
    let text = fs::read_to_string(dir.join("job.json")).ok()?;
    let record: JobRecord = serde_json::from_str(&text).ok()?;
    (record.job == *job && record.artifacts.iter().all(|a| dir.join(a).exists())).then_some(record)
}

fn run_job(table: &Table, job: &JobSpec, jobs_dir: &Path, exec: Execution) -> Result<JobRecord> {
    let mechanism = resolve_mechanism(&job.mechanism, table)?;
    let spec: ImputerSpec = job.imputer.parse()?;
    let tmp = jobs_dir.join(format!(".{}.tmp-{}", job.id, std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;

    let mask = make_mask(table, &mechanism, job.rate, job.beta, job.mask_seed())?;
    let (masked, truth) = apply_mask(table, &mask)?;
    write_mask(&mask, tmp.join("mask.csv"))?;
    write_ground_truth(&truth, tmp.join("ground_truth.csv"))?;
    let mut artifacts = vec!["mask.csv".to_string(), "ground_truth.csv".to_string()];

    let result = spec.impute_with(&masked, job.impute_seed(), exec)?;
    let ids = ReportIds {
        dataset: job.dataset.clone(),
        imputer: job.imputer.clone(),
        mechanism: job.mechanism.clone(),
        rate: job.rate,
    };
    let report = evaluate(&result, &truth, &ids)?;
    scatter_dump(&result, &truth, &job.mechanism, &tmp.join("scatter.csv"))?;
    artifacts.push("scatter.csv".into());
    if !result.diagnostics.training_logs.is_empty() {
        fs::create_dir_all(tmp.join("training_logs"))?;
        for log in &result.diagnostics.training_logs {
            let rel = format!("training_logs/{}.csv", sanitize(&log.column));
            log.write_csv(&tmp.join(&rel))?;
            artifacts.push(rel);
        }
    }
    let record = JobRecord { job: job.clone(), report, warnings: result.warnings.clone(), artifacts };
    fs::write(tmp.join("job.json"), serde_json::to_string_pretty(&record)?)?;

    let dir = jobs_dir.join(&job.id);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::rename(&tmp, &dir)?;
    Ok(record)
}

/// Run every job of `config`. Job failures are recorded, not raised; check
/// [`RunManifest::failed`]. Errors are returned only for run-level problems
/// (bad config, unreadable dataset, unwritable output directory).
pub fn run_pipeline(config: &RunConfig, exec: Execution) -> Result<RunManifest> {
    config.validate()?;
    let out = &config.out;
    let jobs_dir = out.join("jobs");
    fs::create_dir_all(&jobs_dir)?;
    let dataset = config.dataset.name();
    let table = config.dataset.load()?;
    write_atomic(&out.join("dataset.csv"), |w| write_csv_to(&table, w))?;
    let jobs = plan_jobs(config, &table, &dataset)?;
    log::info!("{} jobs on dataset '{dataset}' ({} rows)", jobs.len(), table.n_rows());

    let threads = match (config.threads, par::threads_from_env()) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let outcomes = par::with_threads(threads, || {
        par::map(exec, &jobs, |job| {
            let start = Instant::now();
            let dir = jobs_dir.join(&job.id);
            let (status, outcome) = match reuse_job(&dir, job) {
                Some(record) => (JobStatus::Reused, Ok(record)),
                None => (JobStatus::Ok, run_job(&table, job, &jobs_dir, exec)),
            };
            (status, outcome, start.elapsed().as_secs_f64())
        })
    });

    let mut entries = Vec::with_capacity(jobs.len());
    let mut reports = Vec::new();
    for (job, (status, outcome, secs)) in jobs.into_iter().zip(outcomes) {
        let entry = match outcome {
            Ok(record) => {
                reports.push(record.report);
                JobEntry {
                    artifacts: record.artifacts.iter().map(|a| format!("jobs/{}/{a}", job.id)).collect(),
                    job,
                    status,
                    error: None,
                    wall_clock_secs: secs,
                    warnings: record.warnings,
                }
            }
            Err(e) => {
                log::error!("job {} failed: {e}", job.id);
                let _ = fs::remove_dir_all(jobs_dir.join(format!(".{}.tmp-{}", job.id, std::process::id())));
                JobEntry {
                    job,
                    status: JobStatus::Failed,
                    error: Some(e.to_string()),
                    wall_clock_secs: secs,
                    artifacts: Vec::new(),
                    warnings: Vec::new(),
                }
            }
        };
        entries.push(entry);
    }

    write_atomic(&out.join("report.csv"), |w| write_reports_to(&reports, w))?;
    let mut artifacts = vec!["dataset.csv".to_string(), "report.csv".to_string()];
    if !reports.is_empty() {
        let axis = if reports.iter().any(|r| r.dataset != reports[0].dataset) {
            Axis::Dataset
        } else {
            Axis::Mechanism
        };
        let rates_agree = reports.iter().all(|r| r.rate == reports[0].rate);
        if rates_agree {
            let table = render_comparison(&reports, Metric::Mre, axis)?;
            write_atomic(&out.join("comparison_mre.md"), |w| Ok(w.write_all(table.markdown.as_bytes())?))?;
            write_atomic(&out.join("comparison_mre.csv"), |w| Ok(w.write_all(table.csv.as_bytes())?))?;
            artifacts.extend(["comparison_mre.md".to_string(), "comparison_mre.csv".to_string()]);
        }
    }
    artifacts.push("manifest.json".into());
    let manifest = RunManifest {
        version: VERSION.to_string(),
        config: config.clone(),
        dataset,
        jobs: entries,
        artifacts,
        reports,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&out.join("manifest.json"), |w| Ok(w.write_all(json.as_bytes())?))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mre,
    Mse,
    TwoNorm,
    PearsonR,
}

impl Metric {
    pub fn value(self, r: &EvalReport) -> Option<f64> {
        match self {
            Metric::Mre => Some(r.mre),
            Metric::Mse => Some(r.mse),
            Metric::TwoNorm => Some(r.two_norm),
            Metric::PearsonR => r.pearson_r,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Mre => "mre",
            Metric::Mse => "mse",
            Metric::TwoNorm => "two_norm",
            Metric::PearsonR => "pearson_r",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mre" => Ok(Metric::Mre),
            "mse" => Ok(Metric::Mse),
            "two_norm" | "2norm" | "norm" => Ok(Metric::TwoNorm),
            "pearson_r" | "pearson" | "r" => Ok(Metric::PearsonR),
            other => Err(Error::InvalidArgument(format!("unknown metric '{other}'"))),
        }
    }
}

/// What the comparison table's columns range over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Dataset,
    Mechanism,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dataset" => Ok(Axis::Dataset),
            "mechanism" => Ok(Axis::Mechanism),
            other => Err(Error::InvalidArgument(format!("unknown axis '{other}' (dataset or mechanism)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub markdown: String,
    pub csv: String,
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Imputers × datasets (or mechanisms) table of `metric`, averaged over
/// repeated runs; `mean (std)` when a cell has more than one run.
pub fn render_comparison(reports: &[EvalReport], metric: Metric, axis: Axis) -> Result<Comparison> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to compare".into()));
    }
    if reports.iter().any(|r| r.rate != reports[0].rate) {
        return Err(Error::InvalidArgument("reports mix several masking rates; filter to one rate".into()));
    }
    let fixed_differs = |f: fn(&EvalReport) -> &str| reports.iter().any(|r| f(r) != f(&reports[0]));
    match axis {
        Axis::Mechanism if fixed_differs(|r| &r.dataset) => {
            return Err(Error::InvalidArgument("reports mix datasets; compare by dataset or filter".into()))
        }
        Axis::Dataset if fixed_differs(|r| &r.mechanism) => {
            return Err(Error::InvalidArgument("reports mix mechanisms; compare by mechanism or filter".into()))
        }
        _ => {}
    }
    let key = |r: &EvalReport| -> String {
        match axis {
            Axis::Dataset => r.dataset.clone(),
            Axis::Mechanism => r.mechanism.clone(),
        }
    };
    let rows = first_seen(reports.iter().map(|r| r.imputer.as_str()));
    let keys: Vec<String> = reports.iter().map(key).collect();
    let cols = first_seen(keys.iter().map(String::as_str));

    let cell = |imp: &str, col: &str| -> String {
        let vals: Vec<f64> = reports
            .iter()
            .zip(&keys)
            .filter(|(r, k)| r.imputer == imp && k.as_str() == col)
            .filter_map(|(r, _)| metric.value(r))
            .collect();
        match vals.len() {
            0 => "N/A".into(),
            1 => format!("{:.4}", vals[0]),
            n => {
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                format!("{mean:.4} ({:.4})", var.sqrt())
            }
        }
    };
    let mut grid: Vec<Vec<String>> = vec![std::iter::once(format!("imputer \\ {metric}"))
        .chain(cols.iter().map(|c| c.to_string()))
        .collect()];
    for imp in &rows {
        grid.push(std::iter::once(imp.to_string()).chain(cols.iter().map(|c| cell(imp, c))).collect());
    }

    let widths: Vec<usize> = (0..grid[0].len())
        .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0).max(3))
        .collect();
    let line = |r: &[String]| {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", cells.join(" | "))
    };
    let mut markdown = line(&grid[0]);
    let sep: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    markdown.push_str(&format!("|-{}-|\n", sep.join("-|-")));
    for r in &grid[1..] {
        markdown.push_str(&line(r));
    }

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = grid[0].clone();
    header[0] = "imputer".into();
    w.write_record(&header)?;
    for r in &grid[1..] {
        w.write_record(r)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is utf-8");
    Ok(Comparison { markdown, csv })
}
