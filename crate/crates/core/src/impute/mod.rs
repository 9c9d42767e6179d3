//! Imputers behind one contract: given a table with missing cells, return a
//! filled copy plus a record of every cell that was filled.

mod knn;
mod mean;
mod mf;
mod mice;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{impute_neural_with, TrainConfig, TrainingLog};
use crate::par::Execution;
use crate::table::{Cell, ColumnKind, Table};
use crate::time_encoding::encode_time_column;

pub use knn::{impute_knn, impute_knn_with, nan_aware_distance, KnnWeighting};
pub use mean::impute_mean;
pub use mf::impute_mf;
pub use mice::impute_mice;

#[derive(Debug, Clone, PartialEq)]
pub struct FilledCell {
    pub row: usize,
    pub column: String,
    pub value: Cell,
    /// Imputer family that produced the value.
    pub source: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Matrix-factorization objective, initial value followed by one entry per sweep.
    pub objective_trace: Vec<f64>,
    /// Chained equations: largest absolute change of any fill during the final round.
    pub last_round_change: Option<f64>,
    /// Neural imputer: one log per trained target column.
    pub training_logs: Vec<TrainingLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    pub table: Table,
    /// Filled cells in (column, row) order.
    pub filled: Vec<FilledCell>,
    pub warnings: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl ImputationResult {
    /// Assemble a result from `fills` over `input`, checking the contract:
    /// only missing cells are written and, if `complete`, every missing
    /// non-time cell is written.
    pub(crate) fn assemble(
        input: &Table,
        mut fills: Vec<(usize, usize, Cell)>,
        source: &str,
        complete: bool,
    ) -> Result<ImputationResult> {
        fills.sort_by_key(|&(row, col, _)| (col, row));
        for w in fills.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::InvalidArgument(format!("cell ({}, {}) filled twice", w[0].0, w[0].1)));
            }
        }
        for &(row, col, ref cell) in &fills {
            if !input.cell(row, col).is_missing() {
                return Err(Error::InvalidArgument(format!(
                    "imputer tried to overwrite observed cell ({row}, '{}')",
                    input.column(col).name
                )));
            }
            if cell.is_missing() {
                return Err(Error::InvalidArgument(format!(
                    "imputer left cell ({row}, '{}') missing",
                    input.column(col).name
                )));
            }
        }
        let filled = fills
            .iter()
            .map(|(row, col, cell)| FilledCell {
                row: *row,
                column: input.column(*col).name.clone(),
                value: cell.clone(),
                source: source.to_string(),
            })
            .collect();
        let table = input.with_cells(fills)?;
        if complete {
            for col in table.columns() {
                if !col.kind.is_time() && col.missing_count() > 0 {
                    return Err(Error::Imputation {
                        column: col.name.clone(),
                        message: format!("{} cells left missing", col.missing_count()),
                    });
                }
            }
        }
        Ok(ImputationResult {
            table,
            filled,
            warnings: Vec::new(),
            diagnostics: Diagnostics::default(),
        })
    }
}

/// Which imputer to run, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ImputerSpec {
    Mean,
    Knn { k: usize, weighting: KnnWeighting },
    Mf { rank: usize, lambda: f64, sweeps: usize },
    Mice { rounds: usize, lambda: f64 },
    Neural(TrainConfig),
}

impl ImputerSpec {
    pub fn knn() -> Self {
        ImputerSpec::Knn { k: 5, weighting: KnnWeighting::InverseDistance }
    }

    pub fn mf() -> Self {
        ImputerSpec::Mf { rank: 3, lambda: 0.1, sweeps: 100 }
    }

    pub fn mice() -> Self {
        ImputerSpec::Mice { rounds: 10, lambda: 1e-3 }
    }

    pub fn neural() -> Self {
        ImputerSpec::Neural(TrainConfig::default())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            ImputerSpec::Mean => Ok(()),
            ImputerSpec::Knn { k, .. } if *k == 0 => bad("knn: k must be >= 1".into()),
            ImputerSpec::Knn { .. } => Ok(()),
            ImputerSpec::Mf { rank, lambda, sweeps } => {
                if *rank == 0 || *sweeps == 0 {
                    bad("mf: rank and sweeps must be >= 1".into())
                } else if !(*lambda >= 0.0) {
                    bad(format!("mf: lambda {lambda} must be >= 0"))
                } else {
                    Ok(())
                }
            }
            ImputerSpec::Mice { lambda, .. } if !(*lambda >= 0.0) => {
                bad(format!("mice: lambda {lambda} must be >= 0"))
            }
            ImputerSpec::Mice { .. } => Ok(()),
            ImputerSpec::Neural(cfg) => cfg.validate(),
        }
    }

    /// Short family name (`mean`, `knn`, `mf`, `mice`, `neural`).
    pub fn family(&self) -> &'static str {
        match self {
            ImputerSpec::Mean => "mean",
            ImputerSpec::Knn { .. } => "knn",
            ImputerSpec::Mf { .. } => "mf",
            ImputerSpec::Mice { .. } => "mice",
            ImputerSpec::Neural(_) => "neural",
        }
    }

    pub fn impute(&self, table: &Table, seed: u64) -> Result<ImputationResult> {
        self.impute_with(table, seed, Execution::Sequential)
    }

    /// Run the imputer. `exec` only changes speed; results are identical.
    pub fn impute_with(&self, table: &Table, seed: u64, exec: Execution) -> Result<ImputationResult> {
        self.validate()?;
        match self {
            ImputerSpec::Mean => impute_mean(table),
            ImputerSpec::Knn { k, weighting } => impute_knn_with(table, *k, *weighting, exec),
            ImputerSpec::Mf { rank, lambda, sweeps } => impute_mf(table, *rank, *lambda, *sweeps, seed),
            ImputerSpec::Mice { rounds, lambda } => impute_mice(table, *rounds, *lambda, seed),
            ImputerSpec::Neural(cfg) => {
                let cfg = TrainConfig { seed, ..cfg.clone() };
                impute_neural_with(table, None, &cfg, exec)
            }
        }
    }
}

impl fmt::Display for ImputerSpec {
    /// Canonical spec string; parses back to the same spec.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImputerSpec::Mean => f.write_str("mean"),
            ImputerSpec::Knn { k, weighting } => write!(f, "knn:k={k},weighting={weighting}"),
            ImputerSpec::Mf { rank, lambda, sweeps } => {
                write!(f, "mf:rank={rank},lambda={lambda},sweeps={sweeps}")
            }
            ImputerSpec::Mice { rounds, lambda } => write!(f, "mice:rounds={rounds},lambda={lambda}"),
            ImputerSpec::Neural(cfg) => {
                let hidden: Vec<String> = cfg.hidden.iter().map(|h| h.to_string()).collect();
                write!(
                    f,
                    "neural:hidden={},lr={},batch={},epochs={},patience={},val={}",
                    hidden.join("x"),
                    cfg.learning_rate,
                    cfg.batch_size,
                    cfg.max_epochs,
                    cfg.patience,
                    cfg.validation_fraction
                )
            }
        }
    }
}

impl FromStr for ImputerSpec {
    type Err = Error;

    /// `family[:key=value,...]`, e.g. `mean`, `knn:k=3,weighting=uniform`,
    /// `mf:rank=2,lambda=0.01,sweeps=50`, `mice:rounds=5`, `neural:hidden=32x16,epochs=100`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, params) = s.split_once(':').unwrap_or((s, ""));
        let mut pairs = Vec::new();
        for p in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("'{p}' is not key=value")))?;
            pairs.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value '{v}' for '{key}'")))
        }
        let unknown = |fam: &str, key: &str| Error::InvalidArgument(format!("{fam}: unknown parameter '{key}'"));

        let mut spec = match family.to_ascii_lowercase().as_str() {
            "mean" => ImputerSpec::Mean,
            "knn" => ImputerSpec::knn(),
            "mf" => ImputerSpec::mf(),
            "mice" => ImputerSpec::mice(),
            "neural" => ImputerSpec::neural(),
            other => return Err(Error::InvalidArgument(format!("unknown imputer '{other}'"))),
        };
        for (key, v) in &pairs {
            match (&mut spec, key.as_str()) {
                (ImputerSpec::Knn { k, .. }, "k") => *k = num(key, v)?,
                (ImputerSpec::Knn { weighting, .. }, "weighting") => *weighting = v.parse()?,
                (ImputerSpec::Mf { rank, .. }, "rank" | "r") => *rank = num(key, v)?,
                (ImputerSpec::Mf { lambda, .. }, "lambda") => *lambda = num(key, v)?,
                (ImputerSpec::Mf { sweeps, .. }, "sweeps") => *sweeps = num(key, v)?,
                (ImputerSpec::Mice { rounds, .. }, "rounds") => *rounds = num(key, v)?,
                (ImputerSpec::Mice { lambda, .. }, "lambda") => *lambda = num(key, v)?,
                (ImputerSpec::Neural(cfg), "hidden") => {
                    cfg.hidden = v
                        .split(['x', '-'])
                        .filter(|h| !h.is_empty())
                        .map(|h| num(key, h))
                        .collect::<Result<_>>()?;
                }
                (ImputerSpec::Neural(cfg), "lr") => cfg.learning_rate = num(key, v)?,
                (ImputerSpec::Neural(cfg), "batch") => cfg.batch_size = num(key, v)?,
                (ImputerSpec::Neural(cfg), "epochs") => cfg.max_epochs = num(key, v)?,
                (ImputerSpec::Neural(cfg), "patience") => cfg.patience = num(key, v)?,
                (ImputerSpec::Neural(cfg), "val") => cfg.validation_fraction = num(key, v)?,
                (spec, key) => return Err(unknown(spec.family(), key)),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Numeric, non-time columns: the block most imputers operate on.
pub(crate) fn numeric_columns(table: &Table) -> Vec<usize> {
    table
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::Numeric)
        .map(|(j, _)| j)
        .collect()
}

/// Encoded features of the time column (empty when there is none).
pub(crate) fn time_covariates(table: &Table) -> Result<Vec<Vec<f64>>> {
    match table.time_column() {
        Some(t) => Ok(encode_time_column(table.column(t))?
            .into_iter()
            .map(|f| f.values)
            .collect()),
        None => Ok(Vec::new()),
    }
}

/// Population mean of the observed numbers in a column.
pub(crate) fn column_mean(table: &Table, col: usize) -> Option<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in table.column(col).observed_numbers() {
        n += 1;
        sum += v;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Most frequent label; ties go to the lexicographically smallest.
pub(crate) fn column_mode(table: &Table, col: usize) -> Option<std::sync::Arc<str>> {
    let mut counts: std::collections::BTreeMap<&str, (usize, &std::sync::Arc<str>)> =
        std::collections::BTreeMap::new();
    for cell in &table.column(col).cells {
        if let Cell::Category(label) = cell {
            counts.entry(label).or_insert((0, label)).0 += 1;
        }
    }
    // BTreeMap iterates in label order, so the first maximum is the smallest label
    let mut best: Option<(usize, &std::sync::Arc<str>)> = None;
    for &(n, label) in counts.values() {
        if best.is_none_or(|(m, _)| n > m) {
            best = Some((n, label));
        }
    }
    best.map(|(_, l)| l.clone())
}

/// Mode-fill the missing cells of categorical columns (for imputers that only model numbers).
pub(crate) fn mode_fill_categoricals(
    table: &Table,
    family: &str,
    fills: &mut Vec<(usize, usize, Cell)>,
    warnings: &mut Vec<String>,
) -> Result<()> {
    for (j, col) in table.columns().iter().enumerate() {
        if col.kind != ColumnKind::Categorical || col.missing_count() == 0 {
            continue;
        }
        let label = column_mode(table, j).ok_or_else(|| Error::Imputation {
            column: col.name.clone(),
            message: "column has no observed labels".into(),
        })?;
        warnings.push(format!(
            "{family} models numeric columns only; categorical column '{}' filled with its mode",
            col.name
        ));
        log::warn!("{}", warnings.last().unwrap());
        for (i, c) in col.cells.iter().enumerate() {
            if c.is_missing() {
                fills.push((i, j, Cell::Category(label.clone())));
            }
        }
    }
    Ok(())
}
