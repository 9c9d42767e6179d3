//! Chained-equation imputation (single chain, final values).
//!
//! Missing numeric cells start at their column means. Each round visits the
//! columns with gaps in table order, fits a ridge regression of that column on
//! every other numeric column and the encoded time features (using rows where
//! the column was originally observed), and overwrites its gaps with the
//! predictions.

use nalgebra::{DMatrix, DVector};

use super::{column_mean, mode_fill_categoricals, numeric_columns, time_covariates, ImputationResult};
use crate::error::{Error, Result};
use crate::table::{Cell, Table};

struct RidgeFit {
    intercept: f64,
    /// (regressor index, mean, std, coefficient on the standardized regressor)
    terms: Vec<(usize, f64, f64, f64)>,
}

impl RidgeFit {
    fn predict(&self, regressors: &[&[f64]], row: usize) -> f64 {
        self.intercept
            + self
                .terms
                .iter()
                .map(|&(r, mean, std, beta)| beta * (regressors[r][row] - mean) / std)
                .sum::<f64>()
    }
}

/// Ridge regression on standardized regressors with an unpenalized intercept.
fn fit_ridge(target: &[f64], regressors: &[&[f64]], rows: &[usize], lambda: f64) -> Result<RidgeFit> {
    let n = rows.len() as f64;
    let y_mean = rows.iter().map(|&i| target[i]).sum::<f64>() / n;
    let mut terms = Vec::new();
    for (r, x) in regressors.iter().enumerate() {
        let mean = rows.iter().map(|&i| x[i]).sum::<f64>() / n;
        let var = rows.iter().map(|&i| (x[i] - mean).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            terms.push((r, mean, var.sqrt(), 0.0));
        }
    }
    if terms.is_empty() {
        return Err(Error::Singular("every regressor has zero variance".into()));
    }
    let p = terms.len();
    let z = DMatrix::from_fn(rows.len(), p, |a, b| {
        let (r, mean, std, _) = terms[b];
        (regressors[r][rows[a]] - mean) / std
    });
    let yc = DVector::from_iterator(rows.len(), rows.iter().map(|&i| target[i] - y_mean));
    let gram = z.transpose() * &z + DMatrix::<f64>::identity(p, p) * lambda;
    let rhs = z.transpose() * yc;
    let beta = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("collinear regressors; use lambda > 0".into()))?,
    };
    for (t, b) in terms.iter_mut().zip(beta.iter()) {
        t.3 = *b;
    }
    Ok(RidgeFit { intercept: y_mean, terms })
}

/// Chained ridge regressions for `rounds` rounds. `rounds = 0` is mean imputation.
pub fn impute_mice(table: &Table, rounds: usize, lambda: f64, _seed: u64) -> Result<ImputationResult> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be >= 0")));
    }
    let cols = numeric_columns(table);
    let times = time_covariates(table)?;
    let n = table.n_rows();

    let mut current: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    let mut observed_rows: Vec<Vec<usize>> = Vec::with_capacity(cols.len());
    let mut missing_rows: Vec<Vec<usize>> = Vec::with_capacity(cols.len());
    for &j in &cols {
        let col = table.column(j);
        let obs: Vec<usize> = (0..n).filter(|&i| !col.cells[i].is_missing()).collect();
        let miss: Vec<usize> = (0..n).filter(|&i| col.cells[i].is_missing()).collect();
        let mean = column_mean(table, j);
        if !miss.is_empty() && obs.len() < 2 {
            return Err(Error::Imputation {
                column: col.name.clone(),
                message: format!("{} observed cells; chained regression needs at least 2", obs.len()),
            });
        }
        let fill = mean.unwrap_or(0.0);
        current.push(col.cells.iter().map(|c| c.as_number().unwrap_or(fill)).collect());
        observed_rows.push(obs);
        missing_rows.push(miss);
    }
    let targets: Vec<usize> = (0..cols.len()).filter(|&b| !missing_rows[b].is_empty()).collect();
    if rounds > 0 && !targets.is_empty() && cols.len() + times.len() < 2 {
        return Err(Error::InvalidArgument(
            "chained regression needs at least one other numeric or time column".into(),
        ));
    }

    let mut last_change = None;
    for _ in 0..rounds {
        let mut round_change: f64 = 0.0;
        for &b in &targets {
            let regressors: Vec<&[f64]> = current
                .iter()
                .enumerate()
                .filter(|&(o, _)| o != b)
                .map(|(_, v)| v.as_slice())
                .chain(times.iter().map(Vec::as_slice))
                .collect();
            let fit = fit_ridge(&current[b], &regressors, &observed_rows[b], lambda).map_err(|e| {
                Error::Imputation { column: table.column(cols[b]).name.clone(), message: e.to_string() }
            })?;
            let preds: Vec<f64> = missing_rows[b].iter().map(|&i| fit.predict(&regressors, i)).collect();
            for (&i, p) in missing_rows[b].iter().zip(preds) {
                round_change = round_change.max((current[b][i] - p).abs());
                current[b][i] = p;
            }
        }
        last_change = Some(round_change);
    }

    let mut fills = Vec::new();
    for &b in &targets {
        for &i in &missing_rows[b] {
            fills.push((i, cols[b], Cell::Number(current[b][i])));
        }
    }
    let mut warnings = Vec::new();
    mode_fill_categoricals(table, "mice", &mut fills, &mut warnings)?;
    let mut result = ImputationResult::assemble(table, fills, "mice", true)?;
    result.warnings.extend(warnings);
    result.diagnostics.last_round_change = last_change;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impute::impute_mean;
    use crate::table::Column;

    #[test]
    fn recovers_exact_linear_relation() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        y[6] = f64::NAN;
        let t = Table::new(vec![Column::numeric("x", &x), Column::numeric("y", &y)]).unwrap();
        let r = impute_mice(&t, 2, 1e-10, 0).unwrap();
        let fill = r.table.cell(6, 1).as_number().unwrap();
        assert!((fill - 14.0).abs() < 1e-6, "fill {fill}");
        assert!(r.diagnostics.last_round_change.is_some());
    }

    #[test]
    fn zero_rounds_is_mean_imputation() {
        let t = Table::new(vec![
            Column::numeric("x", &[1.0, f64::NAN, 3.5, 4.0]),
            Column::numeric("y", &[0.1, 0.2, f64::NAN, 0.7]),
            Column::categorical("c", &["a", "", "b", "b"]),
        ])
        .unwrap();
        let mice = impute_mice(&t, 0, 1e-3, 0).unwrap();
        let mean = impute_mean(&t).unwrap();
        assert!(mice.table.bit_eq(&mean.table));
        assert_eq!(mice.diagnostics.last_round_change, None);
    }

    #[test]
    fn constant_regressors_error() {
        let t = Table::new(vec![
            Column::numeric("x", &[1.0, 1.0, 1.0, 1.0]),
            Column::numeric("y", &[0.1, 0.2, f64::NAN, 0.7]),
        ])
        .unwrap();
        assert!(matches!(impute_mice(&t, 1, 1e-3, 0), Err(Error::Imputation { .. })));
    }

    #[test]
    fn last_round_change_shrinks() {
        let cfg = crate::synth::PseudoPeriodicConfig { n_samples: 5, n_points: 50, ..Default::default() };
        let t = crate::synth::generate_pseudo_periodic(&cfg).unwrap();
        let mask = crate::masking::mask_mcar(&t, 0.2, 8).unwrap();
        let (masked, _) = crate::table::apply_mask(&t, &mask).unwrap();
        let one = impute_mice(&masked, 1, 1e-3, 0).unwrap().diagnostics.last_round_change.unwrap();
        let many = impute_mice(&masked, 20, 1e-3, 0).unwrap().diagnostics.last_round_change.unwrap();
        assert!(many < one);
    }
}
