//! Per-column neural imputation: for each target column, featurize every other
//! column (time included), train an MLP on the rows where the target is
//! observed, and predict the rest.

mod featurize;
mod mlp;
mod train;

pub use featurize::{featurize, FeatureKind, FeatureMatrix, FeatureMeta, Featurizer};
pub use mlp::{Batch, Gradients, Head, Layer, Mlp, Prediction, Target};
pub use train::{
    train, EpochLog, MlpModel, TargetValues, TrainConfig, TrainingLog, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON,
    MIN_TRAINING_ROWS,
};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::impute::ImputationResult;
use crate::par::{self, Execution};
use crate::rng::derive_seed;
use crate::table::{Cell, ColumnKind, Table};

pub fn impute_neural(table: &Table, targets: Option<&[String]>, config: &TrainConfig) -> Result<ImputationResult> {
    impute_neural_with(table, targets, config, Execution::Sequential)
}

struct TargetOutcome {
    fills: Vec<(usize, usize, Cell)>,
    log: TrainingLog,
    warnings: Vec<String>,
}

fn impute_target(table: &Table, col: usize, config: &TrainConfig) -> Result<TargetOutcome> {
    let column = table.column(col);
    let featurizer = Featurizer::fit(table, &column.name)?;
    let features = featurizer.transform(table)?;
    let observed: Vec<usize> = (0..table.n_rows()).filter(|&i| !column.cells[i].is_missing()).collect();
    let target = if column.kind == ColumnKind::Numeric {
        TargetValues::Numeric(observed.iter().map(|&i| column.cells[i].as_number().expect("observed")).collect())
    } else {
        let mut vocabulary: Vec<Arc<str>> = observed
            .iter()
            .filter_map(|&i| match &column.cells[i] {
                Cell::Category(l) => Some(l.clone()),
                _ => None,
            })
            .collect();
        vocabulary.sort();
        vocabulary.dedup();
        let labels = observed
            .iter()
            .map(|&i| match &column.cells[i] {
                Cell::Category(l) => vocabulary.binary_search(l).expect("label in vocabulary"),
                _ => unreachable!("observed categorical cell"),
            })
            .collect();
        TargetValues::Categorical { labels, vocabulary }
    };
    let seeded = TrainConfig { seed: derive_seed(config.seed, &["neural", &column.name]), ..config.clone() };
    let model = train(&features, &observed, &target, &seeded)?;
    let mut fills = Vec::new();
    for i in (0..table.n_rows()).filter(|&i| column.cells[i].is_missing()) {
        fills.push((i, col, model.predict(features.row(i))?));
    }
    let mut log = model.log;
    log.column = column.name.clone();
    Ok(TargetOutcome { fills, log, warnings: featurizer.warnings })
}

/// Impute `targets` (default: every non-time column with missing cells), one
/// independently trained model per column. Columns may train concurrently
/// under `exec`; results do not depend on it.
pub fn impute_neural_with(
    table: &Table,
    targets: Option<&[String]>,
    config: &TrainConfig,
    exec: Execution,
) -> Result<ImputationResult> {
    config.validate()?;
    let cols: Vec<usize> = match targets {
        Some(names) => names
            .iter()
            .map(|n| {
                let j = table
                    .column_index(n)
                    .ok_or_else(|| Error::InvalidArgument(format!("no column named '{n}'")))?;
                if table.column(j).kind.is_time() {
                    return Err(Error::InvalidArgument(format!("'{n}' is the time column and cannot be a target")));
                }
                Ok(j)
            })
            .collect::<Result<_>>()?,
        None => (0..table.n_cols())
            .filter(|&j| !table.column(j).kind.is_time() && table.column(j).missing_count() > 0)
            .collect(),
    };
    let outcomes = par::map(exec, &cols, |&j| {
        impute_target(table, j, config).map_err(|e| match e {
            Error::Imputation { .. } => e,
            other => Error::Imputation { column: table.column(j).name.clone(), message: other.to_string() },
        })
    });
    let mut fills = Vec::new();
    let mut logs = Vec::new();
    let mut warnings = Vec::new();
    for outcome in outcomes {
        let o = outcome?;
        fills.extend(o.fills);
        logs.push(o.log);
        for w in o.warnings {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
    }
    let mut result = ImputationResult::assemble(table, fills, "neural", targets.is_none())?;
    result.warnings = warnings;
    result.diagnostics.training_logs = logs;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;

    fn small_cfg() -> TrainConfig {
        TrainConfig { hidden: vec![8], max_epochs: 30, ..Default::default() }
    }

    #[test]
    fn single_label_categorical() {
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        let mut labels = vec!["run"; 12];
        labels[3] = "";
        labels[7] = "";
        let t = Table::new(vec![Column::numeric("x", &x), Column::categorical("act", &labels)]).unwrap();
        let r = impute_neural(&t, None, &small_cfg()).unwrap();
        assert_eq!(r.filled.len(), 2);
        assert!(r.filled.iter().all(|f| f.value == Cell::category("run")));
    }

    #[test]
    fn complete_target_trains_but_fills_nothing() {
        let x: Vec<f64> = (0..15).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.5).collect();
        let t = Table::new(vec![Column::numeric("x", &x), Column::numeric("y", &y)]).unwrap();
        let r = impute_neural(&t, Some(&["y".to_string()]), &small_cfg()).unwrap();
        assert!(r.filled.is_empty());
        assert_eq!(r.diagnostics.training_logs.len(), 1);
        assert!(!r.diagnostics.training_logs[0].epochs.is_empty());
    }

    #[test]
    fn errors_name_the_column() {
        let t = Table::new(vec![
            Column::numeric("x", &[1.0, 2.0, 3.0, 4.0]),
            Column::numeric("y", &[1.0, f64::NAN, 3.0, 4.0]),
        ])
        .unwrap();
        match impute_neural(&t, None, &small_cfg()) {
            Err(Error::Imputation { column, .. }) => assert_eq!(column, "y"),
            other => panic!("expected imputation error, got {other:?}"),
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = crate::synth::PseudoPeriodicConfig { n_samples: 4, n_points: 40, ..Default::default() };
        let t = crate::synth::generate_pseudo_periodic(&cfg).unwrap();
        let mask = crate::masking::mask_mcar(&t, 0.2, 5).unwrap();
        let (masked, _) = crate::table::apply_mask(&t, &mask).unwrap();
        let a = impute_neural_with(&masked, None, &small_cfg(), Execution::Sequential).unwrap();
        let b = impute_neural_with(&masked, None, &small_cfg(), Execution::Parallel).unwrap();
        assert!(a.table.bit_eq(&b.table));
        assert_eq!(a.diagnostics.training_logs, b.diagnostics.training_logs);
    }
}
