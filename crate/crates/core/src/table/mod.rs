//! Columnar tables with explicit per-cell missingness.
//!
//! A [`Table`] is built once and never mutated. Operations that change cells
//! (masking, imputation) produce a new table. Missing observations are the
//! [`Cell::Missing`] variant; NaN is never stored.

mod csv_io;
mod schema;
mod time_format;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::Mask;

pub use csv_io::{
    read_csv, read_csv_hinted, read_ground_truth, table_from_raw, write_csv, write_csv_to,
    write_ground_truth,
};
pub use schema::{infer_schema, ColumnSchema, ColumnStats, Schema};
pub use time_format::{split_hour_minute, split_min_sec_ms, split_ymdh, TimeFormat};

/// A single observation.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Category(Arc<str>),
    Missing,
}

impl Cell {
    pub fn category(label: &str) -> Cell {
        Cell::Category(Arc::from(label))
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Cell::Category(s) => Some(s),
            _ => None,
        }
    }

    /// Bit-level equality (distinguishes `0.0` from `-0.0`).
    pub fn bit_eq(&self, other: &Cell) -> bool {
        match (self, other) {
            (Cell::Number(a), Cell::Number(b)) => a.to_bits() == b.to_bits(),
            (a, b) => a == b,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Number(v) => write!(f, "{v}"),
            Cell::Category(s) => f.write_str(s),
            Cell::Missing => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColumnKind {
    Time(TimeFormat),
    Numeric,
    Categorical,
}

impl ColumnKind {
    pub fn is_time(self) -> bool {
        matches!(self, ColumnKind::Time(_))
    }

    fn admits(self, cell: &Cell) -> bool {
        match (self, cell) {
            (_, Cell::Missing) => true,
            (ColumnKind::Time(_) | ColumnKind::Numeric, Cell::Number(v)) => v.is_finite(),
            (ColumnKind::Categorical, Cell::Category(s)) => !s.is_empty(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub cells: Vec<Cell>,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind, cells: Vec<Cell>) -> Self {
        Column {
            name: name.into(),
            kind,
            cells,
        }
    }

    /// Numeric column from plain values; NaN becomes `Missing`.
    pub fn numeric(name: impl Into<String>, values: &[f64]) -> Self {
        let cells = values
            .iter()
            .map(|&v| if v.is_nan() { Cell::Missing } else { Cell::Number(v) })
            .collect();
        Column::new(name, ColumnKind::Numeric, cells)
    }

    pub fn time(name: impl Into<String>, format: TimeFormat, values: &[f64]) -> Self {
        let cells = values.iter().map(|&v| Cell::Number(v)).collect();
        Column::new(name, ColumnKind::Time(format), cells)
    }

    /// Categorical column; empty labels become `Missing`.
    pub fn categorical(name: impl Into<String>, labels: &[&str]) -> Self {
        let cells = labels
            .iter()
            .map(|l| if l.is_empty() { Cell::Missing } else { Cell::category(l) })
            .collect();
        Column::new(name, ColumnKind::Categorical, cells)
    }

    pub fn observed_numbers(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().filter_map(Cell::as_number)
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_missing()).count()
    }
}

/// Wide-format table: one row per time point, one column per series.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Table {
    /// Validate columns and stably sort rows by the time column, if any.
    pub fn new(columns: Vec<Column>) -> Result<Table> {
        let n_rows = columns.first().map_or(0, |c| c.cells.len());
        let mut time_col = None;
        for (j, col) in columns.iter().enumerate() {
            if col.name.is_empty() {
                return Err(Error::Structural(format!("column {j} has an empty name")));
            }
            if columns[..j].iter().any(|c| c.name == col.name) {
                return Err(Error::Structural(format!("duplicate column name '{}'", col.name)));
            }
            if col.cells.len() != n_rows {
                return Err(Error::Structural(format!(
                    "column '{}' has {} cells, expected {n_rows}",
                    col.name,
                    col.cells.len()
                )));
            }
            if let Some(i) = col.cells.iter().position(|c| !col.kind.admits(c)) {
                return Err(Error::Structural(format!(
                    "cell ({i}, '{}') = {:?} is not valid for a {:?} column",
                    col.name, col.cells[i], col.kind
                )));
            }
            if col.kind.is_time() {
                if time_col.is_some() {
                    return Err(Error::Structural("a table has at most one time column".into()));
                }
                if col.missing_count() > 0 {
                    return Err(Error::Structural(format!(
                        "time column '{}' has missing values",
                        col.name
                    )));
                }
                time_col = Some(j);
            }
        }
        let mut table = Table { columns, n_rows };
        if let Some(t) = time_col {
            table.sort_by_time(t);
        }
        Ok(table)
    }

    fn sort_by_time(&mut self, t: usize) {
        let key: Vec<f64> = self.columns[t]
            .cells
            .iter()
            .map(|c| c.as_number().unwrap_or(f64::INFINITY))
            .collect();
        let mut order: Vec<usize> = (0..self.n_rows).collect();
        order.sort_by(|&a, &b| key[a].total_cmp(&key[b]));
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return;
        }
        for col in &mut self.columns {
            let old = std::mem::take(&mut col.cells);
            col.cells = order.iter().map(|&i| old[i].clone()).collect();
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Index of the time column, if the table has one.
    pub fn time_column(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.kind.is_time())
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.columns[col].cells[row]
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().map(Column::missing_count).sum()
    }

    /// Column values with `None` for missing cells. Categorical cells map to `None`.
    pub fn numeric_values(&self, col: usize) -> Vec<Option<f64>> {
        self.columns[col].cells.iter().map(Cell::as_number).collect()
    }

    /// Copy of the table with the given cells replaced. Time cells cannot be replaced.
    pub fn with_cells<I>(&self, updates: I) -> Result<Table>
    where
        I: IntoIterator<Item = (usize, usize, Cell)>,
    {
        let mut columns = self.columns.clone();
        for (row, col, cell) in updates {
            let column = columns
                .get_mut(col)
                .ok_or_else(|| Error::InvalidArgument(format!("column index {col} out of range")))?;
            if row >= self.n_rows {
                return Err(Error::InvalidArgument(format!("row index {row} out of range")));
            }
            if column.kind.is_time() {
                return Err(Error::InvalidArgument(format!(
                    "time column '{}' cannot be modified",
                    column.name
                )));
            }
            if !column.kind.admits(&cell) {
                return Err(Error::InvalidArgument(format!(
                    "{cell:?} is not valid for column '{}'",
                    column.name
                )));
            }
            column.cells[row] = cell;
        }
        Ok(Table {
            columns,
            n_rows: self.n_rows,
        })
    }

    /// Bit-level equality of every cell and the schema.
    pub fn bit_eq(&self, other: &Table) -> bool {
        self.n_rows == other.n_rows
            && self.columns.len() == other.columns.len()
            && self.columns.iter().zip(&other.columns).all(|(a, b)| {
                a.name == b.name
                    && a.kind == b.kind
                    && a.cells.iter().zip(&b.cells).all(|(x, y)| x.bit_eq(y))
            })
    }
}

/// An original value hidden by a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthCell {
    pub row: usize,
    pub column: String,
    pub value: Cell,
}

/// Hidden originals in mask order.
pub type GroundTruth = Vec<TruthCell>;

/// Hide the mask's cells, returning the masked table and the hidden originals.
pub fn apply_mask(table: &Table, mask: &Mask) -> Result<(Table, GroundTruth)> {
    let mut truth = Vec::with_capacity(mask.coordinates.len());
    let mut updates = Vec::with_capacity(mask.coordinates.len());
    let mut seen = std::collections::HashSet::new();
    for coord in &mask.coordinates {
        let col = table
            .column_index(&coord.column)
            .ok_or_else(|| Error::Mask(format!("unknown column '{}'", coord.column)))?;
        if coord.row >= table.n_rows() {
            return Err(Error::Mask(format!(
                "row {} out of range for '{}'",
                coord.row, coord.column
            )));
        }
        if table.column(col).kind.is_time() {
            return Err(Error::Mask(format!(
                "cell ({}, '{}') is in the time column, which is never masked",
                coord.row, coord.column
            )));
        }
        let cell = table.cell(coord.row, col);
        if cell.is_missing() || !seen.insert((coord.row, col)) {
            return Err(Error::Mask(format!(
                "cell ({}, '{}') is already missing",
                coord.row, coord.column
            )));
        }
        truth.push(TruthCell {
            row: coord.row,
            column: coord.column.clone(),
            value: cell.clone(),
        });
        updates.push((coord.row, col, Cell::Missing));
    }
    Ok((table.with_cells(updates)?, truth))
}

/// Put ground-truth values back into a table.
pub fn restore(table: &Table, truth: &[TruthCell]) -> Result<Table> {
    let mut updates = Vec::with_capacity(truth.len());
    for t in truth {
        let col = table
            .column_index(&t.column)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown column '{}'", t.column)))?;
        updates.push((t.row, col, t.value.clone()));
    }
    table.with_cells(updates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::{Coord, Mask, Mechanism};

    fn small() -> Table {
        Table::new(vec![
            Column::time("time", TimeFormat::OrdinalIndex, &[0.0, 1.0, 2.0]),
            Column::numeric("s1", &[3.7, 1.0, f64::NAN]),
            Column::categorical("act", &["walk", "sit", "walk"]),
        ])
        .unwrap()
    }

    fn mask_of(coords: &[(usize, &str)]) -> Mask {
        Mask {
            coordinates: coords
                .iter()
                .map(|&(row, c)| Coord { row, column: c.to_string() })
                .collect(),
            mechanism: Mechanism::Mcar,
            target_rate: 0.5,
            beta: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn rejects_nan_and_kind_mismatch() {
        let bad = Table::new(vec![Column::new("x", ColumnKind::Numeric, vec![Cell::Number(f64::NAN)])]);
        assert!(matches!(bad, Err(Error::Structural(_))));
        let bad = Table::new(vec![Column::new("x", ColumnKind::Numeric, vec![Cell::category("a")])]);
        assert!(bad.is_err());
        let bad = Table::new(vec![
            Column::time("t", TimeFormat::OrdinalIndex, &[0.0]),
            Column::time("u", TimeFormat::OrdinalIndex, &[0.0]),
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn sorts_stably_by_time() {
        let t = Table::new(vec![
            Column::time("time", TimeFormat::OrdinalIndex, &[2.0, 1.0, 1.0]),
            Column::numeric("v", &[20.0, 10.0, 11.0]),
        ])
        .unwrap();
        assert_eq!(t.numeric_values(1), vec![Some(10.0), Some(11.0), Some(20.0)]);
    }

    #[test]
    fn empty_mask_is_identity() {
        let t = small();
        let (masked, truth) = apply_mask(&t, &mask_of(&[])).unwrap();
        assert!(masked.bit_eq(&t));
        assert!(truth.is_empty());
    }

    #[test]
    fn masks_single_cell() {
        let t = small();
        let (masked, truth) = apply_mask(&t, &mask_of(&[(0, "s1")])).unwrap();
        assert!(masked.cell(0, 1).is_missing());
        assert_eq!(truth, vec![TruthCell { row: 0, column: "s1".into(), value: Cell::Number(3.7) }]);
        assert!(restore(&masked, &truth).unwrap().bit_eq(&t));
    }

    #[test]
    fn mask_errors() {
        let t = small();
        assert!(matches!(apply_mask(&t, &mask_of(&[(2, "s1")])), Err(Error::Mask(_))));
        assert!(matches!(apply_mask(&t, &mask_of(&[(0, "time")])), Err(Error::Mask(_))));
        assert!(matches!(apply_mask(&t, &mask_of(&[(0, "s1"), (0, "s1")])), Err(Error::Mask(_))));
        assert!(apply_mask(&t, &mask_of(&[(9, "s1")])).is_err());
    }
}
