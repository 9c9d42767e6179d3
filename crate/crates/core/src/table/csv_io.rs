use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{infer_schema, Cell, Column, ColumnKind, Schema, Table, TruthCell};
use crate::error::{Error, Result};

fn read_grid<R: Read>(reader: R) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

/// Build a table from a header-first grid under a known schema.
pub fn table_from_raw(raw_rows: &[Vec<String>], schema: &Schema) -> Result<Table> {
    let header = raw_rows
        .first()
        .ok_or_else(|| Error::Structural("no header row".into()))?;
    let names: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    if header.iter().map(String::as_str).ne(names.iter().copied()) {
        return Err(Error::Structural(format!(
            "header {header:?} does not match schema columns {names:?}"
        )));
    }
    let data = &raw_rows[1..];
    let mut columns: Vec<Column> = schema
        .columns
        .iter()
        .map(|c| Column::new(c.name.clone(), c.kind, Vec::with_capacity(data.len())))
        .collect();
    for (i, row) in data.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(Error::Structural(format!(
                "row {i} has {} fields, header has {}",
                row.len(),
                columns.len()
            )));
        }
        for (col, field) in columns.iter_mut().zip(row) {
            let text = field.trim();
            let cell = if text.is_empty() {
                Cell::Missing
            } else {
                match col.kind {
                    ColumnKind::Numeric => match text.parse::<f64>() {
                        Ok(v) if v.is_finite() => Cell::Number(v),
                        _ => {
                            return Err(Error::Parse {
                                row: i,
                                column: col.name.clone(),
                                message: format!("'{text}' is not a finite number"),
                            })
                        }
                    },
                    ColumnKind::Time(fmt) => match fmt.parse(text) {
                        Some(v) => Cell::Number(v),
                        None => {
                            return Err(Error::Parse {
                                row: i,
                                column: col.name.clone(),
                                message: format!("'{text}' does not match time format {fmt:?}"),
                            })
                        }
                    },
                    ColumnKind::Categorical => Cell::category(field),
                }
            };
            col.cells.push(cell);
        }
    }
    Table::new(columns)
}

/// Read a CSV file. Without a schema, one is inferred (no time-column hint).
pub fn read_csv(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<Table> {
    let raw = read_grid(File::open(path)?)?;
    match schema {
        Some(s) => table_from_raw(&raw, s),
        None => table_from_raw(&raw, &infer_schema(&raw, None)?),
    }
}

/// Read a CSV file, inferring its schema with the given time-column hint.
pub fn read_csv_hinted(path: impl AsRef<Path>, time_column: Option<&str>) -> Result<Table> {
    let raw = read_grid(File::open(path)?)?;
    let schema = infer_schema(&raw, time_column)?;
    table_from_raw(&raw, &schema)
}

fn field(cell: &Cell, kind: ColumnKind) -> String {
    match (cell, kind) {
        (Cell::Number(v), ColumnKind::Time(fmt)) => fmt.format(*v),
        (Cell::Number(v), _) => format!("{v}"),
        (Cell::Category(s), _) => s.to_string(),
        (Cell::Missing, _) => String::new(),
    }
}

/// Write a table as CSV. Numbers use the shortest representation that parses back exactly.
pub fn write_csv_to<W: Write>(table: &Table, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(table.columns().iter().map(|c| c.name.as_str()))?;
    for row in 0..table.n_rows() {
        w.write_record(table.columns().iter().map(|c| field(&c.cells[row], c.kind)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    write_csv_to(table, BufWriter::new(File::create(path)?))
}

/// Write the ground-truth sidecar (`row_index,column_name,value`).
pub fn write_ground_truth(truth: &[TruthCell], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["row_index", "column_name", "value"])?;
    for t in truth {
        w.write_record([t.row.to_string(), t.column.clone(), t.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a ground-truth sidecar, interpreting values by the column kinds of `table`.
pub fn read_ground_truth(path: impl AsRef<Path>, table: &Table) -> Result<Vec<TruthCell>> {
    let raw = read_grid(File::open(path)?)?;
    let header = raw.first().ok_or_else(|| Error::Structural("empty ground-truth file".into()))?;
    if header.as_slice() != ["row_index", "column_name", "value"] {
        return Err(Error::Structural(format!("unexpected ground-truth header {header:?}")));
    }
    let mut out = Vec::with_capacity(raw.len() - 1);
    for (i, rec) in raw[1..].iter().enumerate() {
        let [row, column, value] = rec.as_slice() else {
            return Err(Error::Structural(format!("ground-truth row {i} is not 3 fields")));
        };
        let parse_err = |message: String| Error::Parse { row: i, column: column.clone(), message };
        let row: usize = row
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad row index '{row}'")))?;
        let col = table
            .column_by_name(column)
            .ok_or_else(|| parse_err("unknown column".into()))?;
        let value = match col.kind {
            ColumnKind::Categorical => Cell::category(value),
            _ => Cell::Number(
                value
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(format!("bad value '{value}'")))?,
            ),
        };
        out.push(TruthCell { row, column: column.clone(), value });
    }
    Ok(out)
}
