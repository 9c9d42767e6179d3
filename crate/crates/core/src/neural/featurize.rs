//! Turn every non-target column of a table into a dense, NaN-free feature grid.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::table::{Cell, ColumnKind, Table};
use crate::time_encoding::encode_time_column;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    ScaledNumeric,
    OneHot,
    TimeFeature,
    MissingIndicator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMeta {
    pub name: String,
    pub source: String,
    pub kind: FeatureKind,
}

/// Row-major `n_rows × n_features` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub values: Vec<f64>,
    pub meta: Vec<FeatureMeta>,
}

impl FeatureMatrix {
    pub fn n_features(&self) -> usize {
        self.meta.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_features();
        &self.values[i * m..(i + 1) * m]
    }

    /// All values of one feature.
    pub fn feature(&self, f: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i)[f]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Step {
    Numeric { col: String, mean: f64, std: f64, indicator: bool },
    OneHot { col: String, vocabulary: Vec<Arc<str>> },
    /// Encoded time feature index with its centering and scale (0 and 1 when bounded).
    Time { col: String, feature: usize, mean: f64, std: f64 },
}

/// Fitted featurization: statistics learned from one table, reusable on others
/// with the same column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    pub target: String,
    steps: Vec<Step>,
    pub meta: Vec<FeatureMeta>,
    pub warnings: Vec<String>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Featurizer {
    pub fn fit(table: &Table, target: &str) -> Result<Featurizer> {
        let t = table
            .column_index(target)
            .ok_or_else(|| Error::InvalidArgument(format!("no column named '{target}'")))?;
        if table.column(t).kind.is_time() {
            return Err(Error::InvalidArgument(format!("'{target}' is the time column and cannot be a target")));
        }
        let mut steps = Vec::new();
        let mut meta = Vec::new();
        let mut warnings = Vec::new();
        for (j, col) in table.columns().iter().enumerate() {
            if j == t {
                continue;
            }
            let name = col.name.clone();
            match col.kind {
                ColumnKind::Numeric => {
                    let obs: Vec<f64> = col.observed_numbers().collect();
                    let (mean, std) = if obs.is_empty() { (0.0, 0.0) } else { mean_std(&obs) };
                    if !(std > 0.0) {
                        let msg = format!("featurize: column '{name}' has zero variance and is dropped");
                        log::warn!("{msg}");
                        warnings.push(msg);
                        continue;
                    }
                    let indicator = col.missing_count() > 0;
                    meta.push(FeatureMeta { name: name.clone(), source: name.clone(), kind: FeatureKind::ScaledNumeric });
                    if indicator {
                        meta.push(FeatureMeta {
                            name: format!("{name}:missing"),
                            source: name.clone(),
                            kind: FeatureKind::MissingIndicator,
                        });
                    }
                    steps.push(Step::Numeric { col: name, mean, std, indicator });
                }
                ColumnKind::Categorical => {
                    let mut vocabulary: Vec<Arc<str>> =
                        col.cells
                        .iter()
                        .filter_map(|c| match c {
                            Cell::Category(label) => Some(label.clone()),
                            _ => None,
                        })
                        .collect();
                    vocabulary.sort();
                    vocabulary.dedup();
                    for label in &vocabulary {
                        meta.push(FeatureMeta {
                            name: format!("{name}={label}"),
                            source: name.clone(),
                            kind: FeatureKind::OneHot,
                        });
                    }
                    steps.push(Step::OneHot { col: name, vocabulary });
                }
                ColumnKind::Time(_) => {
                    for (f, feat) in encode_time_column(col)?.into_iter().enumerate() {
                        let (mean, std) = if feat.bounded { (0.0, 1.0) } else { mean_std(&feat.values) };
                        if !(std > 0.0) {
                            log::debug!("featurize: constant time feature '{}' dropped", feat.name);
                            continue;
                        }
                        meta.push(FeatureMeta { name: feat.name, source: name.clone(), kind: FeatureKind::TimeFeature });
                        steps.push(Step::Time { col: name.clone(), feature: f, mean, std });
                    }
                }
            }
        }
        Ok(Featurizer { target: target.to_string(), steps, meta, warnings })
    }

    pub fn n_features(&self) -> usize {
        self.meta.len()
    }

    /// Apply the fitted statistics to `table`.
    pub fn transform(&self, table: &Table) -> Result<FeatureMatrix> {
        let n = table.n_rows();
        let m = self.n_features();
        let mut values = vec![0.0; n * m];
        let lookup = |name: &str| {
            table
                .column_by_name(name)
                .ok_or_else(|| Error::InvalidArgument(format!("featurize: table has no column '{name}'")))
        };
        let mut time_cache: Option<(String, Vec<Vec<f64>>)> = None;
        let mut f = 0;
        for step in &self.steps {
            match step {
                Step::Numeric { col, mean, std, indicator } => {
                    for (i, cell) in lookup(col)?.cells.iter().enumerate() {
                        match cell.as_number() {
                            Some(x) => values[i * m + f] = (x - mean) / std,
                            None if *indicator => values[i * m + f + 1] = 1.0,
                            None => {}
                        }
                    }
                    f += 1 + usize::from(*indicator);
                }
                Step::OneHot { col, vocabulary } => {
                    for (i, cell) in lookup(col)?.cells.iter().enumerate() {
                        if let Cell::Category(label) = cell {
                            if let Ok(k) = vocabulary.binary_search(label) {
                                values[i * m + f + k] = 1.0;
                            }
                        }
                    }
                    f += vocabulary.len();
                }
                Step::Time { col, feature, mean, std } => {
                    if time_cache.as_ref().is_none_or(|(c, _)| c != col) {
                        let encoded = encode_time_column(lookup(col)?)?;
                        time_cache = Some((col.clone(), encoded.into_iter().map(|e| e.values).collect()));
                    }
                    let feats = &time_cache.as_ref().expect("cached").1;
                    for (i, v) in feats[*feature].iter().enumerate() {
                        values[i * m + f] = (v - mean) / std;
                    }
                    f += 1;
                }
            }
        }
        debug_assert_eq!(f, m);
        Ok(FeatureMatrix { n_rows: n, values, meta: self.meta.clone() })
    }
}

/// Featurize every column except `target` using statistics from `table` itself.
pub fn featurize(table: &Table, target: &str) -> Result<FeatureMatrix> {
    Featurizer::fit(table, target)?.transform(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{Column, TimeFormat};

    #[test]
    fn numeric_z_score_uses_population_std() {
        let t = Table::new(vec![
            Column::numeric("x", &[1.0, 2.0, 3.0]),
            Column::numeric("y", &[0.0, 0.0, 1.0]),
        ])
        .unwrap();
        let fm = featurize(&t, "y").unwrap();
        let x = fm.feature(0);
        let expected = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (a, b) in x.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_and_missing_indicator() {
        let t = Table::new(vec![
            Column::numeric("x", &[1.0, f64::NAN, 3.0, 5.0]),
            Column::categorical("c", &["b", "a", "", "c"]),
            Column::numeric("y", &[1.0, 2.0, 3.0, 4.0]),
        ])
        .unwrap();
        let fm = featurize(&t, "y").unwrap();
        let kinds: Vec<FeatureKind> = fm.meta.iter().map(|m| m.kind).collect();
        assert_eq!(
            kinds,
            [
                FeatureKind::ScaledNumeric,
                FeatureKind::MissingIndicator,
                FeatureKind::OneHot,
                FeatureKind::OneHot,
                FeatureKind::OneHot
            ]
        );
        assert_eq!(fm.row(1)[..2], [0.0, 1.0]);
        assert_eq!(fm.row(0)[2..], [0.0, 1.0, 0.0]);
        assert_eq!(fm.row(2)[2..], [0.0, 0.0, 0.0]);
        assert!(fm.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_variance_column_dropped() {
        let t = Table::new(vec![
            Column::numeric("k", &[2.0, 2.0, 2.0]),
            Column::numeric("y", &[1.0, 2.0, 3.0]),
        ])
        .unwrap();
        let fz = Featurizer::fit(&t, "y").unwrap();
        assert_eq!(fz.n_features(), 0);
        assert_eq!(fz.warnings.len(), 1);
    }

    #[test]
    fn time_target_rejected_and_time_expanded() {
        let t = Table::new(vec![
            Column::time("t", TimeFormat::HourMinute, &[0.0, 90.0, 600.0]),
            Column::numeric("y", &[1.0, 2.0, 3.0]),
        ])
        .unwrap();
        assert!(featurize(&t, "t").is_err());
        let fm = featurize(&t, "y").unwrap();
        assert_eq!(fm.n_features(), 3);
        assert!(fm.meta.iter().all(|m| m.kind == FeatureKind::TimeFeature));
    }

    #[test]
    fn unseen_label_is_all_zeros() {
        let train = Table::new(vec![
            Column::categorical("c", &["a", "b"]),
            Column::numeric("y", &[1.0, 2.0]),
        ])
        .unwrap();
        let other = Table::new(vec![
            Column::categorical("c", &["z", "a"]),
            Column::numeric("y", &[1.0, 2.0]),
        ])
        .unwrap();
        let fm = Featurizer::fit(&train, "y").unwrap().transform(&other).unwrap();
        assert_eq!(fm.row(0), [0.0, 0.0]);
        assert_eq!(fm.row(1), [1.0, 0.0]);
    }

    #[test]
    fn noise_column_leaves_existing_metadata() {
        let base = vec![
            Column::numeric("x", &[1.0, 2.0, 4.0]),
            Column::categorical("c", &["a", "b", "a"]),
            Column::numeric("y", &[1.0, 2.0, 3.0]),
        ];
        let before = Featurizer::fit(&Table::new(base.clone()).unwrap(), "y").unwrap();
        let mut extended = base;
        extended.push(Column::numeric("noise", &[0.3, -1.2, 0.8]));
        let after = Featurizer::fit(&Table::new(extended).unwrap(), "y").unwrap();
        assert_eq!(after.meta[..before.meta.len()], before.meta[..]);
    }
}
