use std::fs;
use std::path::Path;

use chronofill::bench::{run_pipeline, DatasetSource, JobStatus, RunConfig, RunManifest};
use chronofill::masking::read_mask;
use chronofill::synth::PseudoPeriodicConfig;
use chronofill::table::{read_csv, read_ground_truth, read_csv_hinted};
use chronofill::Execution;

fn config(out: &Path) -> RunConfig {
    RunConfig {
        dataset: DatasetSource::Synth(PseudoPeriodicConfig { n_samples: 5, n_points: 40, ..Default::default() }),
        mechanisms: vec!["mcar".into()],
        rates: vec![0.3],
        imputers: vec!["mean".into(), "neural:hidden=16,epochs=20".into()],
        seeds: vec![0],
        beta: 4.0,
        out: out.to_path_buf(),
        threads: None,
    }
}

fn run(cfg: &RunConfig) -> RunManifest {
    let m = run_pipeline(cfg, Execution::Parallel).unwrap();
    assert_eq!(m.failed(), 0, "{:?}", m.jobs);
    m
}

#[test]
fn one_report_row_and_scatter_per_imputer() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&config(dir.path()));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    assert_eq!(m.jobs.len(), 2);
    for job in &m.jobs {
        let scatter = dir.path().join("jobs").join(&job.job.id).join("scatter.csv");
        assert!(scatter.is_file(), "{}", scatter.display());
    }
    for f in ["dataset.csv", "manifest.json", "comparison_mre.md", "comparison_mre.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn rerun_reuses_jobs_and_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    run(&cfg);
    let first = fs::read(dir.path().join("report.csv")).unwrap();
    let again = run(&cfg);
    assert!(again.jobs.iter().all(|j| j.status == JobStatus::Reused));
    assert_eq!(fs::read(dir.path().join("report.csv")).unwrap(), first);
}

#[test]
fn deleting_one_job_regenerates_only_that_job() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let m = run(&cfg);
    let victim = &m.jobs[1].job.id;
    let scatter = dir.path().join("jobs").join(victim).join("scatter.csv");
    let before = fs::read(&scatter).unwrap();
    fs::remove_dir_all(dir.path().join("jobs").join(victim)).unwrap();
    let again = run(&cfg);
    for j in &again.jobs {
        let want = if &j.job.id == victim { JobStatus::Ok } else { JobStatus::Reused };
        assert_eq!(j.status, want, "{}", j.job.id);
    }
    assert_eq!(fs::read(&scatter).unwrap(), before);
}

#[test]
fn scatter_covers_every_masked_numeric_cell_once() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&config(dir.path()));
    let dataset = read_csv_hinted(dir.path().join("dataset.csv"), Some("time")).unwrap();
    for job in &m.jobs {
        let jd = dir.path().join("jobs").join(&job.job.id);
        let mask = read_mask(jd.join("mask.csv")).unwrap();
        let truth = read_ground_truth(jd.join("ground_truth.csv"), &dataset).unwrap();
        assert_eq!(truth.len(), mask.len());
        let scatter = read_csv(jd.join("scatter.csv"), None).unwrap();
        assert_eq!(scatter.n_rows(), truth.len());
        assert_eq!(
            scatter.columns().iter().map(|c| c.name.as_str()).collect::<Vec<_>>(),
            ["truth", "imputed", "mechanism", "column"]
        );
        let mut seen: Vec<(String, String)> = (0..scatter.n_rows())
            .map(|i| (format!("{:?}", scatter.cell(i, 0)), format!("{:?}", scatter.cell(i, 3))))
            .collect();
        let mut want: Vec<(String, String)> = truth
            .iter()
            .map(|t| (format!("{:?}", t.value), format!("{:?}", chronofill::Cell::category(&t.column))))
            .collect();
        seen.sort();
        want.sort();
        assert_eq!(seen, want);
    }
}

#[test]
fn a_failed_job_does_not_stop_its_siblings() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tiny.csv");
    let mut text = String::from("time,a,b\n");
    for i in 0..8 {
        text.push_str(&format!("{i},{},{}\n", i as f64 * 1.5, 10 - i));
    }
    fs::write(&csv, text).unwrap();
    let cfg = RunConfig {
        dataset: DatasetSource::Csv { path: csv, time_column: Some("time".into()), name: Some("tiny".into()) },
        out: dir.path().join("out"),
        ..config(dir.path())
    };
    let m = run_pipeline(&cfg, Execution::Sequential).unwrap();
    assert_eq!(m.failed(), 1);
    let failed = m.jobs.iter().find(|j| j.status == JobStatus::Failed).unwrap();
    assert!(failed.job.imputer.starts_with("neural"));
    assert!(failed.error.as_deref().unwrap().contains("mean or knn"));
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
    assert!(report.lines().nth(1).unwrap().starts_with("tiny,mean,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["jobs"].as_array().unwrap().len(), 2);
}
