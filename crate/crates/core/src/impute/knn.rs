//! k-nearest-neighbour imputation over rows.
//!
//! Rows are compared on the numeric columns plus the encoded time features.
//! Each coordinate is divided by its column's standard deviation, only
//! coordinates observed in both rows count, and the sum is rescaled by
//! `sqrt(n_total / n_shared)` so rows with gaps are not artificially close.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{numeric_columns, time_covariates, ImputationResult};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::table::{Cell, ColumnKind, Table};

const INVERSE_DISTANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnnWeighting {
    Uniform,
    InverseDistance,
}

impl fmt::Display for KnnWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnnWeighting::Uniform => "uniform",
            KnnWeighting::InverseDistance => "inverse",
        })
    }
}

impl FromStr for KnnWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(KnnWeighting::Uniform),
            "inverse" | "inverse-distance" | "distance" => Ok(KnnWeighting::InverseDistance),
            other => Err(Error::InvalidArgument(format!("unknown knn weighting '{other}'"))),
        }
    }
}

/// Std-scaled Euclidean distance over the coordinates observed in both rows.
pub fn nan_aware_distance(a: &[Option<f64>], b: &[Option<f64>], column_stds: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != column_stds.len() {
        return Err(Error::InvalidArgument("rows and stds must have equal length".into()));
    }
    let mut shared = 0usize;
    let mut sum = 0.0;
    for ((x, y), s) in a.iter().zip(b).zip(column_stds) {
        if let (Some(x), Some(y)) = (x, y) {
            let d = (x - y) / s;
            sum += d * d;
            shared += 1;
        }
    }
    if shared == 0 {
        return Err(Error::Undefined("rows share no observed coordinates".into()));
    }
    Ok(sum.sqrt() * (a.len() as f64 / shared as f64).sqrt())
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 1.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var > 0.0 {
        var.sqrt()
    } else {
        1.0
    }
}

pub fn impute_knn(table: &Table, k: usize, weighting: KnnWeighting) -> Result<ImputationResult> {
    impute_knn_with(table, k, weighting, Execution::Sequential)
}

struct RowSpace {
    rows: Vec<Vec<Option<f64>>>,
    stds: Vec<f64>,
}

fn row_space(table: &Table) -> Result<RowSpace> {
    let mut columns: Vec<Vec<Option<f64>>> = numeric_columns(table)
        .into_iter()
        .map(|j| table.numeric_values(j))
        .collect();
    columns.extend(
        time_covariates(table)?
            .into_iter()
            .map(|f| f.into_iter().map(Some).collect()),
    );
    let stds = columns
        .iter()
        .map(|c| population_std(c.iter().flatten().copied()))
        .collect();
    let rows = (0..table.n_rows())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();
    Ok(RowSpace { rows, stds })
}

/// Fill each missing cell from the `k` nearest comparable rows observed at that column.
pub fn impute_knn_with(
    table: &Table,
    k: usize,
    weighting: KnnWeighting,
    exec: Execution,
) -> Result<ImputationResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let space = row_space(table)?;
    let incomplete: Vec<usize> = (0..table.n_rows())
        .filter(|&i| {
            table
                .columns()
                .iter()
                .any(|c| !c.kind.is_time() && c.cells[i].is_missing())
        })
        .collect();

    let per_row = par::map(exec, &incomplete, |&i| fill_row(table, &space, i, k, weighting));
    let mut fills = Vec::new();
    let mut clamped: BTreeMap<String, usize> = BTreeMap::new();
    for row in per_row {
        let (row_fills, row_clamps) = row?;
        fills.extend(row_fills);
        for (col, n) in row_clamps {
            let e = clamped.entry(col).or_insert(n);
            *e = (*e).min(n);
        }
    }
    let mut result = ImputationResult::assemble(table, fills, "knn", true)?;
    for (col, n) in clamped {
        let msg = format!("knn: k={k} exceeds the {n} candidate rows for column '{col}'; using k={n}");
        log::warn!("{msg}");
        result.warnings.push(msg);
    }
    Ok(result)
}

type RowFill = (Vec<(usize, usize, Cell)>, Vec<(String, usize)>);

fn fill_row(table: &Table, space: &RowSpace, i: usize, k: usize, weighting: KnnWeighting) -> Result<RowFill> {
    let mut fills = Vec::new();
    let mut clamps = Vec::new();
    // distance to every other row, computed once
    let distances: Vec<Option<f64>> = (0..table.n_rows())
        .map(|j| {
            (j != i)
                .then(|| nan_aware_distance(&space.rows[i], &space.rows[j], &space.stds).ok())
                .flatten()
        })
        .collect();
    for (c, col) in table.columns().iter().enumerate() {
        if col.kind.is_time() || !col.cells[i].is_missing() {
            continue;
        }
        let mut candidates: Vec<(f64, usize)> = distances
            .iter()
            .enumerate()
            .filter_map(|(j, d)| d.filter(|_| !col.cells[j].is_missing()).map(|d| (d, j)))
            .collect();
        if candidates.is_empty() {
            return Err(Error::Imputation {
                column: col.name.clone(),
                message: format!("row {i} has no comparable neighbour observed in this column"),
            });
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if candidates.len() < k {
            clamps.push((col.name.clone(), candidates.len()));
        }
        let neighbours = &candidates[..k.min(candidates.len())];
        let weight = |d: f64| match weighting {
            KnnWeighting::Uniform => 1.0,
            KnnWeighting::InverseDistance => 1.0 / (d + INVERSE_DISTANCE_EPS),
        };
        let cell = match col.kind {
            ColumnKind::Categorical => {
                let mut votes: BTreeMap<&str, f64> = BTreeMap::new();
                for &(d, j) in neighbours {
                    if let Cell::Category(label) = &col.cells[j] {
                        *votes.entry(label).or_insert(0.0) += weight(d);
                    }
                }
                // label order breaks ties toward the smallest label
                let mut best: Option<(&str, f64)> = None;
                for (label, w) in votes {
                    if best.is_none_or(|(_, bw)| w > bw) {
                        best = Some((label, w));
                    }
                }
                Cell::category(best.map(|(l, _)| l).unwrap_or_default())
            }
            _ => {
                let (mut num, mut den) = (0.0, 0.0);
                for &(d, j) in neighbours {
                    let w = weight(d);
                    num += w * col.cells[j].as_number().unwrap_or_default();
                    den += w;
                }
                Cell::Number(num / den)
            }
        };
        fills.push((i, c, cell));
    }
    Ok((fills, clamps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;

    #[test]
    fn distance_cases() {
        let s = [1.0, 1.0];
        assert_eq!(nan_aware_distance(&[Some(1.0), Some(2.0)], &[Some(1.0), Some(2.0)], &s).unwrap(), 0.0);
        assert_eq!(nan_aware_distance(&[Some(0.0), Some(0.0)], &[Some(3.0), Some(4.0)], &s).unwrap(), 5.0);
        assert_eq!(nan_aware_distance(&[Some(1.0), None], &[Some(1.0), Some(7.0)], &s).unwrap(), 0.0);
        // one shared coordinate of two: sqrt(2/1) rescale
        let d = nan_aware_distance(&[Some(0.0), None], &[Some(3.0), Some(7.0)], &s).unwrap();
        assert!((d - 3.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(nan_aware_distance(&[Some(1.0), None], &[None, Some(7.0)], &s).is_err());
    }

    #[test]
    fn zero_distance_duplicate_is_copied() {
        let t = Table::new(vec![
            Column::numeric("a", &[1.0, 1.0, 5.0, 9.0]),
            Column::numeric("b", &[2.0, 2.0, 6.0, 0.0]),
            Column::numeric("y", &[f64::NAN, 7.25, 3.0, 1.0]),
        ])
        .unwrap();
        for w in [KnnWeighting::Uniform, KnnWeighting::InverseDistance] {
            let r = impute_knn(&t, 1, w).unwrap();
            assert_eq!(r.table.cell(0, 2), &Cell::Number(7.25));
        }
    }

    #[test]
    fn equidistant_neighbours_average() {
        let t = Table::new(vec![
            Column::numeric("a", &[0.0, -1.0, 1.0, 10.0]),
            Column::numeric("y", &[f64::NAN, 2.0, 4.0, 100.0]),
        ])
        .unwrap();
        let r = impute_knn(&t, 2, KnnWeighting::Uniform).unwrap();
        assert_eq!(r.table.cell(0, 1), &Cell::Number(3.0));
    }

    #[test]
    fn k_clamped_with_warning() {
        let t = Table::new(vec![
            Column::numeric("a", &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
            Column::numeric("y", &[f64::NAN, 1.0, 2.0, 3.0, 4.0, 5.0]),
        ])
        .unwrap();
        let big = impute_knn(&t, 1000, KnnWeighting::Uniform).unwrap();
        let five = impute_knn(&t, 5, KnnWeighting::Uniform).unwrap();
        assert_eq!(big.table, five.table);
        assert_eq!(big.warnings.len(), 1);
        assert!(five.warnings.is_empty());
    }

    #[test]
    fn categorical_majority_vote() {
        let t = Table::new(vec![
            Column::numeric("a", &[0.0, 0.1, 0.2, 5.0]),
            Column::categorical("act", &["", "walk", "walk", "sit"]),
        ])
        .unwrap();
        let r = impute_knn(&t, 3, KnnWeighting::Uniform).unwrap();
        assert_eq!(r.table.cell(0, 1), &Cell::category("walk"));
    }

    #[test]
    fn incomparable_rows_error() {
        let t = Table::new(vec![
            Column::numeric("a", &[f64::NAN, 1.0]),
            Column::numeric("y", &[2.0, f64::NAN]),
        ])
        .unwrap();
        assert!(matches!(impute_knn(&t, 1, KnnWeighting::Uniform), Err(Error::Imputation { .. })));
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = crate::synth::PseudoPeriodicConfig { n_samples: 6, n_points: 40, ..Default::default() };
        let t = crate::synth::generate_pseudo_periodic(&cfg).unwrap();
        let mask = crate::masking::mask_mcar(&t, 0.3, 2).unwrap();
        let (masked, _) = crate::table::apply_mask(&t, &mask).unwrap();
        let a = impute_knn_with(&masked, 4, KnnWeighting::InverseDistance, Execution::Sequential).unwrap();
        let b = impute_knn_with(&masked, 4, KnnWeighting::InverseDistance, Execution::Parallel).unwrap();
        assert!(a.table.bit_eq(&b.table));
    }
}
