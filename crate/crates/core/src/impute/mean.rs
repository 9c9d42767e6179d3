use super::{column_mean, column_mode, ImputationResult};
use crate::error::{Error, Result};
use crate::table::{Cell, ColumnKind, Table};

/// Numeric gaps take the column's observed mean; categorical gaps take its mode.
pub fn impute_mean(table: &Table) -> Result<ImputationResult> {
    let mut fills = Vec::new();
    for (j, col) in table.columns().iter().enumerate() {
        if col.kind.is_time() || col.missing_count() == 0 {
            continue;
        }
        let fill = match col.kind {
            ColumnKind::Categorical => column_mode(table, j).map(Cell::Category),
            _ => column_mean(table, j).map(Cell::Number),
        }
        .ok_or_else(|| Error::Imputation {
            column: col.name.clone(),
            message: "every cell is missing, nothing to average".into(),
        })?;
        for (i, c) in col.cells.iter().enumerate() {
            if c.is_missing() {
                fills.push((i, j, fill.clone()));
            }
        }
    }
    ImputationResult::assemble(table, fills, "mean", true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;

    #[test]
    fn fills_mean_and_mode() {
        let t = Table::new(vec![
            Column::numeric("x", &[1.0, f64::NAN, 3.0, 2.0]),
            Column::categorical("c", &["b", "a", "a", ""]),
        ])
        .unwrap();
        let r = impute_mean(&t).unwrap();
        assert_eq!(r.table.cell(1, 0), &Cell::Number(2.0));
        assert_eq!(r.table.cell(3, 1), &Cell::category("a"));
        assert_eq!(r.filled.len(), 2);
        assert_eq!(r.filled[0].column, "x");
    }

    #[test]
    fn mode_ties_take_smallest_label() {
        let t = Table::new(vec![Column::categorical("c", &["b", "a", "", "b", "a"])]).unwrap();
        assert_eq!(impute_mean(&t).unwrap().table.cell(2, 0), &Cell::category("a"));
    }

    #[test]
    fn complete_table_is_identity() {
        let t = Table::new(vec![Column::numeric("x", &[1.0, 2.0])]).unwrap();
        let r = impute_mean(&t).unwrap();
        assert!(r.filled.is_empty());
        assert!(r.table.bit_eq(&t));
    }

    #[test]
    fn fully_missing_column_is_named() {
        let t = Table::new(vec![
            Column::numeric("ok", &[1.0, 2.0]),
            Column::numeric("gone", &[f64::NAN, f64::NAN]),
        ])
        .unwrap();
        match impute_mean(&t) {
            Err(Error::Imputation { column, .. }) => assert_eq!(column, "gone"),
            other => panic!("{other:?}"),
        }
    }
}
