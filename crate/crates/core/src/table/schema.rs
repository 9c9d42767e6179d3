use serde::{Deserialize, Serialize};

use super::{ColumnKind, TimeFormat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnStats {
    /// Numeric and time columns. `mean`/`std` are over observed values (population std).
    Numeric { count: usize, mean: f64, std: f64 },
    /// Vocabulary in first-appearance order.
    Categorical { count: usize, vocabulary: Vec<String> },
}

impl ColumnStats {
    pub fn count(&self) -> usize {
        match self {
            ColumnStats::Numeric { count, .. } | ColumnStats::Categorical { count, .. } => *count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub stats: ColumnStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSchema>,
    pub n_rows: usize,
}

impl Schema {
    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }
}

fn is_empty_field(s: &str) -> bool {
    s.trim().is_empty()
}

fn numeric_stats(values: &[f64]) -> ColumnStats {
    let count = values.len();
    if count == 0 {
        return ColumnStats::Numeric { count, mean: 0.0, std: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
    ColumnStats::Numeric { count, mean, std: var.sqrt() }
}

/// Infer column kinds and statistics from a header-first grid of strings.
///
/// A column whose non-empty fields all parse as finite numbers is numeric; one
/// whose fields all match a single time pattern is a time column; anything else
/// is categorical. The hinted column is forced to be the time column (plain
/// numbers become [`TimeFormat::OrdinalIndex`]). Without a hint, more than one
/// time-patterned column is ambiguous.
pub fn infer_schema(raw_rows: &[Vec<String>], time_column_hint: Option<&str>) -> Result<Schema> {
    let header = raw_rows
        .first()
        .ok_or_else(|| Error::Structural("no header row".into()))?;
    if header.is_empty() {
        return Err(Error::Structural("header row has no columns".into()));
    }
    let data = &raw_rows[1..];
    for (i, row) in data.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Structural(format!(
                "row {i} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
    }
    for (j, name) in header.iter().enumerate() {
        if header[..j].contains(name) {
            return Err(Error::Structural(format!("duplicate column name '{name}'")));
        }
    }
    if let Some(hint) = time_column_hint {
        if !header.iter().any(|h| h == hint) {
            return Err(Error::Structural(format!("time column '{hint}' not in header")));
        }
    }

    let mut columns = Vec::with_capacity(header.len());
    let mut patterned_time = Vec::new();
    for (j, name) in header.iter().enumerate() {
        let fields: Vec<&str> = data
            .iter()
            .map(|r| r[j].as_str())
            .filter(|s| !is_empty_field(s))
            .collect();
        let numbers: Option<Vec<f64>> = fields
            .iter()
            .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let time_format = fields
            .first()
            .and_then(|f| TimeFormat::detect(f))
            .filter(|fmt| fields.iter().all(|s| fmt.parse(s).is_some()));
        let hinted = time_column_hint == Some(name.as_str());

        let (kind, stats) = match (numbers, time_format) {
            (Some(values), _) => {
                let kind = if hinted {
                    ColumnKind::Time(TimeFormat::OrdinalIndex)
                } else {
                    ColumnKind::Numeric
                };
                (kind, numeric_stats(&values))
            }
            (None, Some(fmt)) if hinted || time_column_hint.is_none() => {
                patterned_time.push(name.clone());
                let values: Vec<f64> = fields.iter().filter_map(|s| fmt.parse(s)).collect();
                (ColumnKind::Time(fmt), numeric_stats(&values))
            }
            (None, _) if hinted => {
                return Err(Error::Structural(format!(
                    "hinted time column '{name}' matches no time format"
                )));
            }
            (None, _) => {
                let mut vocabulary: Vec<String> = Vec::new();
                for f in &fields {
                    if !vocabulary.iter().any(|v| v == f) {
                        vocabulary.push((*f).to_string());
                    }
                }
                (
                    ColumnKind::Categorical,
                    ColumnStats::Categorical { count: fields.len(), vocabulary },
                )
            }
        };
        columns.push(ColumnSchema { name: name.clone(), kind, stats });
    }
    if time_column_hint.is_none() && patterned_time.len() > 1 {
        return Err(Error::Ambiguous(format!(
            "columns {patterned_time:?} all look like time values; pass a time-column hint"
        )));
    }
    Ok(Schema { columns, n_rows: data.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&[&str]]) -> Vec<Vec<String>> {
        rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn numeric_with_missing() {
        let raw = grid(&[&["t", "v"], &["1", "2.5"], &["2", ""]]);
        let s = infer_schema(&raw, None).unwrap();
        assert_eq!(s.columns[0].kind, ColumnKind::Numeric);
        assert_eq!(s.columns[1].kind, ColumnKind::Numeric);
        assert_eq!(s.columns[1].stats.count(), 1);
        let s = infer_schema(&raw, Some("t")).unwrap();
        assert_eq!(s.columns[0].kind, ColumnKind::Time(TimeFormat::OrdinalIndex));
    }

    #[test]
    fn categorical_vocabulary() {
        let raw = grid(&[&["act"], &["walk"], &["sit"], &["walk"]]);
        let s = infer_schema(&raw, None).unwrap();
        assert_eq!(s.columns[0].kind, ColumnKind::Categorical);
        assert_eq!(
            s.columns[0].stats,
            ColumnStats::Categorical { count: 3, vocabulary: vec!["walk".into(), "sit".into()] }
        );
    }

    #[test]
    fn min_sec_ms_time() {
        let raw = grid(&[&["ts", "x"], &["03:25:127", "1"], &["03:25:147", "2"]]);
        let s = infer_schema(&raw, None).unwrap();
        assert_eq!(s.columns[0].kind, ColumnKind::Time(TimeFormat::MinSecMs));
    }

    #[test]
    fn ragged_and_ambiguous() {
        let raw = grid(&[&["a", "b"], &["1"]]);
        assert!(matches!(infer_schema(&raw, None), Err(Error::Structural(_))));
        let raw = grid(&[&["a", "b"], &["03:25:127", "10:15"]]);
        assert!(matches!(infer_schema(&raw, None), Err(Error::Ambiguous(_))));
        let s = infer_schema(&raw, Some("b")).unwrap();
        assert_eq!(s.columns[1].kind, ColumnKind::Time(TimeFormat::HourMinute));
        assert_eq!(s.columns[0].kind, ColumnKind::Categorical);
    }

    #[test]
    fn population_std() {
        let raw = grid(&[&["x"], &["1"], &["2"], &["3"]]);
        let s = infer_schema(&raw, None).unwrap();
        match s.columns[0].stats {
            ColumnStats::Numeric { mean, std, .. } => {
                assert_eq!(mean, 2.0);
                assert!((std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
            }
            _ => panic!(),
        }
    }
}
