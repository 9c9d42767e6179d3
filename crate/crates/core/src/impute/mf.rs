//! Low-rank matrix completion by alternating least squares.
//!
//! The numeric block `X` (rows × numeric columns) is scaled per column by the
//! root-mean-square of its observed entries, then factorized as `U Vᵀ` by
//! minimizing
//!
//! ```text
//! Σ_observed (X_ij − U_i·V_j)² + λ (‖U‖² + ‖V‖²)
//! ```
//!
//! Each half-sweep solves the ridge normal equations exactly for one factor,
//! so the objective never increases. Scaling without centering keeps the rank
//! of the data: a rank-r matrix stays rank r.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};

use super::{mode_fill_categoricals, numeric_columns, ImputationResult};
use crate::error::{Error, Result};
use crate::rng::rng;
use crate::table::{Cell, Table};

const INIT_SD: f64 = 0.01;

struct Block {
    /// Scaled values, row-major n × m.
    values: Vec<Option<f64>>,
    n: usize,
    m: usize,
}

impl Block {
    fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.m + j]
    }
}

fn objective(block: &Block, u: &[f64], v: &[f64], rank: usize, lambda: f64) -> f64 {
    let mut loss = 0.0;
    for i in 0..block.n {
        for j in 0..block.m {
            if let Some(x) = block.get(i, j) {
                let pred: f64 = (0..rank).map(|r| u[i * rank + r] * v[j * rank + r]).sum();
                loss += (x - pred).powi(2);
            }
        }
    }
    let reg: f64 = u.iter().chain(v).map(|p| p * p).sum();
    loss + lambda * reg
}

/// Solve for each row of `target` given the fixed `other` factor.
/// `entries(a)` yields (index into `other`, value) pairs observed for row `a`.
fn solve_factor<F>(
    target: &mut [f64],
    other: &[f64],
    count: usize,
    rank: usize,
    lambda: f64,
    entries: F,
) -> Result<()>
where
    F: Fn(usize) -> Vec<(usize, f64)>,
{
    for a in 0..count {
        let obs = entries(a);
        let mut gram = DMatrix::<f64>::identity(rank, rank) * lambda;
        let mut rhs = DVector::<f64>::zeros(rank);
        for &(b, x) in &obs {
            let vb = &other[b * rank..(b + 1) * rank];
            for p in 0..rank {
                rhs[p] += x * vb[p];
                for q in 0..rank {
                    gram[(p, q)] += vb[p] * vb[q];
                }
            }
        }
        let chol = gram.cholesky().ok_or_else(|| {
            Error::Singular(format!(
                "normal equations for factor row {a} are singular ({} observed entries, rank {rank}); use lambda > 0",
                obs.len()
            ))
        })?;
        let sol = chol.solve(&rhs);
        target[a * rank..(a + 1) * rank].copy_from_slice(sol.as_slice());
    }
    Ok(())
}

/// Rescale each rank component so `‖u_r‖ = ‖v_r‖`. `U Vᵀ` is unchanged and
/// the penalty can only drop, so the objective stays non-increasing.
fn rebalance(u: &mut [f64], v: &mut [f64], rank: usize) {
    for r in 0..rank {
        let nu = u.iter().skip(r).step_by(rank).map(|x| x * x).sum::<f64>().sqrt();
        let nv = v.iter().skip(r).step_by(rank).map(|x| x * x).sum::<f64>().sqrt();
        if nu > 0.0 && nv > 0.0 {
            let c = (nv / nu).sqrt();
            u.iter_mut().skip(r).step_by(rank).for_each(|x| *x *= c);
            v.iter_mut().skip(r).step_by(rank).for_each(|x| *x /= c);
        }
    }
}

/// Fill numeric gaps from a rank-`rank` factorization; categorical gaps get the column mode.
pub fn impute_mf(table: &Table, rank: usize, lambda: f64, sweeps: usize, seed: u64) -> Result<ImputationResult> {
    if rank == 0 || sweeps == 0 {
        return Err(Error::InvalidArgument("rank and sweeps must be >= 1".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be >= 0")));
    }
    let cols = numeric_columns(table);
    let (n, m) = (table.n_rows(), cols.len());
    let mut warnings = Vec::new();

    let mut scales = Vec::with_capacity(m);
    for &j in &cols {
        let obs: Vec<f64> = table.column(j).observed_numbers().collect();
        if obs.is_empty() && table.column(j).missing_count() > 0 {
            return Err(Error::Imputation {
                column: table.column(j).name.clone(),
                message: "every cell is missing".into(),
            });
        }
        let rms = (obs.iter().map(|v| v * v).sum::<f64>() / obs.len().max(1) as f64).sqrt();
        scales.push(if rms > 0.0 { rms } else { 1.0 });
    }
    let mut values = vec![None; n * m];
    for (b, &j) in cols.iter().enumerate() {
        for (i, c) in table.column(j).cells.iter().enumerate() {
            values[i * m + b] = c.as_number().map(|x| x / scales[b]);
        }
    }
    let block = Block { values, n, m };
    let observed = block.values.iter().filter(|v| v.is_some()).count();
    if observed <= rank * (n + m) {
        let msg = format!(
            "mf: {observed} observed entries for rank {rank} on a {n}x{m} block; the factorization is underdetermined"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut rng = rng(seed);
    let init = Normal::new(0.0, INIT_SD).expect("valid normal");
    let mut u: Vec<f64> = (0..n * rank).map(|_| init.sample(&mut rng)).collect();
    let mut v: Vec<f64> = (0..m * rank).map(|_| init.sample(&mut rng)).collect();

    let mut trace = vec![objective(&block, &u, &v, rank, lambda)];
    for _ in 0..sweeps {
        solve_factor(&mut u, &v, n, rank, lambda, |i| {
            (0..m).filter_map(|j| block.get(i, j).map(|x| (j, x))).collect()
        })?;
        solve_factor(&mut v, &u, m, rank, lambda, |j| {
            (0..n).filter_map(|i| block.get(i, j).map(|x| (i, x))).collect()
        })?;
        rebalance(&mut u, &mut v, rank);
        let obj = objective(&block, &u, &v, rank, lambda);
        debug_assert!(
            obj <= trace.last().unwrap() * (1.0 + 1e-9) + 1e-12,
            "ALS objective increased: {} -> {obj}",
            trace.last().unwrap()
        );
        trace.push(obj);
    }

    let mut fills = Vec::new();
    for (b, &j) in cols.iter().enumerate() {
        for (i, c) in table.column(j).cells.iter().enumerate() {
            if c.is_missing() {
                let pred: f64 = (0..rank).map(|r| u[i * rank + r] * v[b * rank + r]).sum();
                fills.push((i, j, Cell::Number(pred * scales[b])));
            }
        }
    }
    mode_fill_categoricals(table, "mf", &mut fills, &mut warnings)?;
    let mut result = ImputationResult::assemble(table, fills, "mf", true)?;
    result.warnings.extend(warnings);
    result.diagnostics.objective_trace = trace;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;

    #[test]
    fn rank_one_completion() {
        let t = Table::new(vec![
            Column::numeric("a", &[1.0, 2.0]),
            Column::numeric("b", &[2.0, f64::NAN]),
        ])
        .unwrap();
        let r = impute_mf(&t, 1, 1e-6, 200, 7).unwrap();
        let fill = r.table.cell(1, 1).as_number().unwrap();
        assert!((fill - 4.0).abs() < 1e-2, "fill {fill}");
    }

    #[test]
    fn objective_never_increases() {
        let cfg = crate::synth::PseudoPeriodicConfig { n_samples: 8, n_points: 30, ..Default::default() };
        let t = crate::synth::generate_pseudo_periodic(&cfg).unwrap();
        let mask = crate::masking::mask_mcar(&t, 0.3, 4).unwrap();
        let (masked, _) = crate::table::apply_mask(&t, &mask).unwrap();
        let r = impute_mf(&masked, 3, 0.1, 40, 1).unwrap();
        let trace = &r.diagnostics.objective_trace;
        assert_eq!(trace.len(), 41);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn exact_factorization_of_full_matrix() {
        let rows: [[f64; 3]; 4] = [[1.0, 2.0, 0.5], [3.0, -1.0, 2.0], [0.0, 4.0, 1.0], [2.0, 2.0, -3.0]];
        let cols: Vec<Column> = (0..3)
            .map(|j| Column::numeric(format!("c{j}"), &rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect();
        let t = Table::new(cols).unwrap();
        let r = impute_mf(&t, 3, 1e-15, 50, 3).unwrap();
        let last = *r.diagnostics.objective_trace.last().unwrap();
        // objective is in scaled units and bounds the squared residuals over 12 entries
        assert!((last / 12.0).sqrt() < 1e-6, "rmse {}", (last / 12.0).sqrt());
    }

    #[test]
    fn zero_lambda_singular() {
        let t = Table::new(vec![
            Column::numeric("a", &[1.0, f64::NAN]),
            Column::numeric("b", &[f64::NAN, f64::NAN]),
            Column::numeric("c", &[1.0, 2.0]),
        ])
        .unwrap();
        // column b has no observations: its factor row has an empty system
        assert!(matches!(impute_mf(&t, 2, 0.0, 5, 1), Err(Error::Imputation { .. })));
        let t = Table::new(vec![
            Column::numeric("a", &[1.0, f64::NAN, 3.0]),
            Column::numeric("c", &[1.0, 2.0, 2.0]),
        ])
        .unwrap();
        assert!(matches!(impute_mf(&t, 2, 0.0, 5, 1), Err(Error::Singular(_))));
    }

    #[test]
    fn categoricals_fall_back_to_mode() {
        let t = Table::new(vec![
            Column::numeric("a", &[1.0, 2.0, 3.0]),
            Column::categorical("act", &["x", "", "x"]),
        ])
        .unwrap();
        let r = impute_mf(&t, 1, 0.1, 5, 1).unwrap();
        assert_eq!(r.table.cell(1, 1), &Cell::category("x"));
        assert!(r.warnings.iter().any(|w| w.contains("act")));
    }
}
