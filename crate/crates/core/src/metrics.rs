//! Imputation accuracy metrics, evaluated on masked cells only.
//!
//! With `x` the imputed values and `y` the hidden originals:
//!
//! * Pearson r = Σ(x−x̄)(y−ȳ) / (√Σ(x−x̄)² · √Σ(y−ȳ)²)
//! * MRE = Σ|x−y| / Σ|y|
//! * MSE = Σ(x−y)² / n
//! * 2-norm = √Σ(x−y)²

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impute::ImputationResult;
use crate::table::{Cell, Table, TruthCell};

fn check_lengths(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} imputed vs {} truth values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min {
        return Err(Error::InvalidArgument(format!("need at least {min} values, got {}", x.len())));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a zero-variance vector".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn mre(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, 1)?;
    let denom: f64 = y.iter().map(|v| v.abs()).sum();
    if denom == 0.0 {
        return Err(Error::Undefined("relative error against an all-zero truth vector".into()));
    }
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    Ok(num / denom)
}

fn sum_squared_residuals(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn mse(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, 1)?;
    Ok(sum_squared_residuals(x, y) / x.len() as f64)
}

pub fn two_norm(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, 1)?;
    Ok(sum_squared_residuals(x, y).sqrt())
}

/// Identifies what a report row was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportIds {
    pub dataset: String,
    pub imputer: String,
    pub mechanism: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub imputer: String,
    pub mechanism: String,
    pub rate: f64,
    /// Numeric masked cells scored.
    pub n_cells: usize,
    pub mre: f64,
    pub mse: f64,
    pub two_norm: f64,
    /// `None` when either side has zero variance.
    pub pearson_r: Option<f64>,
    pub n_label_cells: usize,
    /// Share of masked categorical cells imputed with the right label.
    pub label_accuracy: Option<f64>,
}

/// Score an imputation on the masked cells, pairing values in ground-truth order.
pub fn evaluate(result: &ImputationResult, truth: &[TruthCell], ids: &ReportIds) -> Result<EvalReport> {
    let filled: HashSet<(usize, &str)> = result
        .filled
        .iter()
        .map(|f| (f.row, f.column.as_str()))
        .collect();
    if let Some(t) = truth.iter().find(|t| !filled.contains(&(t.row, t.column.as_str()))) {
        return Err(Error::InvalidArgument(format!(
            "masked cell ({}, '{}') was not imputed",
            t.row, t.column
        )));
    }
    evaluate_table(&result.table, truth, ids)
}

/// Score a filled table directly (for tables read back from disk).
pub fn evaluate_table(table: &Table, truth: &[TruthCell], ids: &ReportIds) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no masked cells to evaluate".into()));
    }
    let (imputed, actual, labels) = paired_values(table, truth)?;
    if imputed.is_empty() {
        return Err(Error::InvalidArgument("no numeric masked cells to evaluate".into()));
    }
    let (n_label_cells, label_accuracy) = if labels.is_empty() {
        (0, None)
    } else {
        let hits = labels.iter().filter(|(a, b)| a == b).count();
        (labels.len(), Some(hits as f64 / labels.len() as f64))
    };
    Ok(EvalReport {
        dataset: ids.dataset.clone(),
        imputer: ids.imputer.clone(),
        mechanism: ids.mechanism.clone(),
        rate: ids.rate,
        n_cells: imputed.len(),
        mre: mre(&imputed, &actual)?,
        mse: mse(&imputed, &actual)?,
        two_norm: two_norm(&imputed, &actual)?,
        pearson_r: pearson_r(&imputed, &actual).ok(),
        n_label_cells,
        label_accuracy,
    })
}

type Pairs = (Vec<f64>, Vec<f64>, Vec<(String, String)>);

fn paired_values(table: &Table, truth: &[TruthCell]) -> Result<Pairs> {
    let mut imputed = Vec::new();
    let mut actual = Vec::new();
    let mut labels = Vec::new();
    for t in truth {
        let col = table
            .column_index(&t.column)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown column '{}'", t.column)))?;
        if t.row >= table.n_rows() {
            return Err(Error::InvalidArgument(format!("masked row {} is out of range", t.row)));
        }
        let got = table.cell(t.row, col);
        match (&t.value, got) {
            (Cell::Number(y), Cell::Number(x)) => {
                imputed.push(*x);
                actual.push(*y);
            }
            (Cell::Category(y), Cell::Category(x)) => labels.push((x.to_string(), y.to_string())),
            (_, Cell::Missing) => {
                return Err(Error::InvalidArgument(format!(
                    "masked cell ({}, '{}') was not imputed",
                    t.row, t.column
                )))
            }
            (want, got) => {
                return Err(Error::InvalidArgument(format!(
                    "cell ({}, '{}'): truth {want:?} vs imputed {got:?}",
                    t.row, t.column
                )))
            }
        }
    }
    Ok((imputed, actual, labels))
}

/// Pairs of (truth, imputed) numeric values in ground-truth order, with their column.
pub fn scatter_pairs(result: &ImputationResult, truth: &[TruthCell]) -> Vec<(f64, f64, String)> {
    truth
        .iter()
        .filter_map(|t| {
            let col = result.table.column_index(&t.column)?;
            match (&t.value, result.table.cell(t.row, col)) {
                (Cell::Number(y), Cell::Number(x)) => Some((*y, *x, t.column.clone())),
                _ => None,
            }
        })
        .collect()
}

pub const REPORT_HEADER: [&str; 9] = [
    "dataset", "imputer", "mechanism", "rate", "n_cells", "mre", "mse", "two_norm", "pearson_r",
];

/// Serialize report rows; an undefined Pearson r is written as an empty field.
pub fn write_reports_to<W: Write>(reports: &[EvalReport], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record([
            r.dataset.clone(),
            r.imputer.clone(),
            r.mechanism.clone(),
            r.rate.to_string(),
            r.n_cells.to_string(),
            r.mre.to_string(),
            r.mse.to_string(),
            r.two_norm.to_string(),
            r.pearson_r.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reports(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    write_reports_to(reports, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<EvalReport>> {
    let mut rdr = csv::ReaderBuilder::new().from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::Structural(format!("unexpected report header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|_| Error::Parse {
                row: i,
                column: REPORT_HEADER[k].into(),
                message: format!("'{}' is not a number", &rec[k]),
            })
        };
        out.push(EvalReport {
            dataset: rec[0].to_string(),
            imputer: rec[1].to_string(),
            mechanism: rec[2].to_string(),
            rate: num(3)?,
            n_cells: num(4)? as usize,
            mre: num(5)?,
            mse: num(6)?,
            two_norm: num(7)?,
            pearson_r: if rec[8].is_empty() { None } else { Some(num(8)?) },
            n_label_cells: 0,
            label_accuracy: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_fixed_cases() {
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // 3 / sqrt(2 * 14/3)
        let r = pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.981_980_506_061_965_7).abs() < 1e-9);
        assert!(matches!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Undefined(_))));
        assert!(pearson_r(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn error_metric_fixed_cases() {
        assert_eq!(mre(&[2.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert_eq!(mre(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(mre(&[1.0, 1.0], &[0.0, 0.0]), Err(Error::Undefined(_))));
        assert_eq!(mse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5);
        assert_eq!(mse(&[1.0], &[3.0]).unwrap(), 4.0);
        assert_eq!(two_norm(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(two_norm(&[2.0, 5.0], &[2.0, 5.0]).unwrap(), 0.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn mse_is_squared_norm_over_n(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
            let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let m = mse(&x, &y).unwrap();
            let n = two_norm(&x, &y).unwrap();
            prop_assert!((m - n * n / x.len() as f64).abs() <= 1e-9 * m.max(1e-300));
        }

        #[test]
        fn pearson_symmetric_and_affine_invariant(
            v in prop::collection::vec((-10f64..10.0, -10f64..10.0), 3..40),
            a in 0.1f64..10.0,
            b in -5f64..5.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            if let Ok(r) = pearson_r(&x, &y) {
                prop_assert_eq!(r, pearson_r(&y, &x).unwrap());
                let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                prop_assert!((pearson_r(&ax, &y).unwrap() - r).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn norm_is_homogeneous(v in prop::collection::vec((-10f64..10.0, -10f64..10.0), 1..20), c in -5f64..5.0) {
            let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
            let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
            let base = two_norm(&x, &y).unwrap();
            prop_assert!((two_norm(&cx, &cy).unwrap() - c.abs() * base).abs() <= 1e-9 * (1.0 + base));
        }
    }
}
