//! Missingness simulation under MCAR, MAR and MNAR.
//!
//! Every mechanism hides exactly `round(rate * N)` of the `N` maskable cells.
//! MAR and MNAR give each cell an inclusion weight
//!
//! ```text
//! w = logistic(alpha + beta * (p - 0.5))
//! ```
//!
//! where `p` is a within-column percentile rank: of the driver column's value
//! in the same row (MAR) or of the cell's own value (MNAR). `alpha` is solved
//! by bisection so the weights sum to the requested count, which makes them
//! target inclusion probabilities. The cells themselves are drawn by Pareto
//! order sampling: each candidate gets the key `logit(u) - logit(w)` with
//! `u ~ U(0,1)` and the `K` smallest keys are selected. That gives a fixed-size
//! sample whose inclusion probabilities closely track `w`. With `beta = 0`
//! every weight is equal and the draw is a uniform sample.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::pearson_r;
use crate::par::{self, Execution};
use crate::rng::rng;
use crate::table::{Cell, ColumnKind, Table};

pub const DEFAULT_BETA: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    Mcar,
    /// Missingness driven by an observed column.
    Mar { driver: String },
    Mnar,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Mcar => f.write_str("mcar"),
            Mechanism::Mar { driver } => write!(f, "mar({driver})"),
            Mechanism::Mnar => f.write_str("mnar"),
        }
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    /// Accepts `mcar`, `mnar`, `mar:<driver>` and `mar(<driver>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "mcar" => return Ok(Mechanism::Mcar),
            "mnar" => return Ok(Mechanism::Mnar),
            _ => {}
        }
        let driver = if lower.starts_with("mar:") {
            Some(&s[4..])
        } else if lower.starts_with("mar(") && s.ends_with(')') {
            Some(&s[4..s.len() - 1])
        } else {
            None
        };
        match driver {
            Some(d) if !d.trim().is_empty() => Ok(Mechanism::Mar { driver: d.trim().to_string() }),
            Some(_) => Err(Error::InvalidArgument("MAR needs a driver column, e.g. mar:time".into())),
            None => Err(Error::InvalidArgument(format!(
                "unknown mechanism '{s}' (expected mcar, mar:<column> or mnar)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub row: usize,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    /// Ordered by column position in the source table, then by row.
    pub coordinates: Vec<Coord>,
    pub mechanism: Mechanism,
    pub target_rate: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Mask {
    pub fn len(&self) -> usize {
        self.coordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coordinates.is_empty()
    }
}

/// (row, column index) candidates that `mechanism` may hide, in column-major order.
fn maskable_cells(table: &Table, mechanism: &Mechanism) -> Result<Vec<(usize, usize)>> {
    let driver = match mechanism {
        Mechanism::Mar { driver } => Some(check_driver(table, driver)?),
        _ => None,
    };
    let mut cells = Vec::new();
    for (j, col) in table.columns().iter().enumerate() {
        let eligible = match col.kind {
            ColumnKind::Time(_) => false,
            ColumnKind::Numeric => Some(j) != driver,
            ColumnKind::Categorical => !matches!(mechanism, Mechanism::Mnar) && Some(j) != driver,
        };
        if eligible {
            cells.extend(
                col.cells
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !c.is_missing())
                    .map(|(i, _)| (i, j)),
            );
        }
    }
    Ok(cells)
}

fn check_driver(table: &Table, driver: &str) -> Result<usize> {
    let j = table
        .column_index(driver)
        .ok_or_else(|| Error::InvalidArgument(format!("MAR driver column '{driver}' does not exist")))?;
    let col = table.column(j);
    if col.kind == ColumnKind::Categorical {
        return Err(Error::InvalidArgument(format!(
            "MAR driver '{driver}' must be numeric or time"
        )));
    }
    if col.missing_count() > 0 {
        return Err(Error::InvalidArgument(format!(
            "MAR driver '{driver}' has {} missing cells",
            col.missing_count()
        )));
    }
    Ok(j)
}

/// Percentile ranks in [0, 1] of the observed numbers of a column (average rank for ties).
/// Missing and non-numeric cells get `None`.
pub fn percentile_ranks(cells: &[Cell]) -> Vec<Option<f64>> {
    let mut observed: Vec<(f64, usize)> = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.as_number().map(|v| (v, i)))
        .collect();
    observed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = observed.len();
    let mut out = vec![None; cells.len()];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && observed[end].0 == observed[start].0 {
            end += 1;
        }
        let avg_rank = (start + end - 1) as f64 / 2.0;
        let p = if n > 1 { avg_rank / (n - 1) as f64 } else { 0.5 };
        for &(_, i) in &observed[start..end] {
            out[i] = Some(p);
        }
        start = end;
    }
    out
}

fn target_count(rate: f64, n: usize) -> Result<usize> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidArgument(format!("rate {rate} is outside (0, 1)")));
    }
    if n == 0 {
        return Err(Error::Mask("table has no maskable cells".into()));
    }
    let k = (rate * n as f64).round() as usize;
    if k == 0 {
        return Err(Error::Mask(format!(
            "rate {rate} of {n} maskable cells rounds to zero cells"
        )));
    }
    if k == n {
        log::warn!("rate {rate} masks all {n} maskable cells; imputers will fail on fully-missing columns");
    }
    Ok(k)
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Intercept `alpha` such that `sum logistic(alpha + s_i) = k`.
pub fn calibrate_intercept(scores: &[f64], k: usize) -> Result<f64> {
    let total = |alpha: f64| scores.iter().map(|&s| logistic(alpha + s)).sum::<f64>();
    let target = k as f64;
    let spread = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let (mut lo, mut hi) = (-spread - 50.0, spread + 50.0);
    if !(total(lo) < target && total(hi) > target) {
        return Err(Error::Mask(format!(
            "could not bracket the intercept for {k} of {} cells (steepness too extreme?)",
            scores.len()
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draw exactly `k` cells with inclusion weights `logistic(alpha + scores)`.
fn weighted_select(
    cells: &[(usize, usize)],
    scores: &[f64],
    k: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if k == cells.len() {
        return Ok(cells.to_vec());
    }
    let alpha = calibrate_intercept(scores, k)?;
    let mut rng = rng(seed);
    let mut keyed: Vec<(f64, usize)> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            // u in (0, 1)
            let u: f64 = (rng.random::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let u = u.max(f64::MIN_POSITIVE);
            ((u / (1.0 - u)).ln() - (alpha + s), i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<(usize, usize)> = keyed[..k].iter().map(|&(_, i)| cells[i]).collect();
    chosen.sort_by_key(|&(row, col)| (col, row));
    Ok(chosen)
}

fn to_mask(
    table: &Table,
    chosen: Vec<(usize, usize)>,
    mechanism: Mechanism,
    rate: f64,
    beta: f64,
    seed: u64,
) -> Mask {
    Mask {
        coordinates: chosen
            .into_iter()
            .map(|(row, col)| Coord { row, column: table.column(col).name.clone() })
            .collect(),
        mechanism,
        target_rate: rate,
        beta,
        seed,
    }
}

/// Uniform sample of exactly `round(rate * N)` maskable cells.
pub fn mask_mcar(table: &Table, rate: f64, seed: u64) -> Result<Mask> {
    let cells = maskable_cells(table, &Mechanism::Mcar)?;
    let k = target_count(rate, cells.len())?;
    let scores = vec![0.0; cells.len()];
    let chosen = weighted_select(&cells, &scores, k, seed)?;
    Ok(to_mask(table, chosen, Mechanism::Mcar, rate, 0.0, seed))
}

/// Mask cells more often in rows where `driver` ranks high (for `beta > 0`).
pub fn mask_mar(table: &Table, rate: f64, driver: &str, beta: f64, seed: u64) -> Result<Mask> {
    check_beta(beta)?;
    let mechanism = Mechanism::Mar { driver: driver.to_string() };
    let cells = maskable_cells(table, &mechanism)?;
    let k = target_count(rate, cells.len())?;
    let driver_col = check_driver(table, driver)?;
    let ranks = percentile_ranks(&table.column(driver_col).cells);
    let scores: Vec<f64> = cells
        .iter()
        .map(|&(row, _)| beta * (ranks[row].unwrap_or(0.5) - 0.5))
        .collect();
    let chosen = weighted_select(&cells, &scores, k, seed)?;
    Ok(to_mask(table, chosen, mechanism, rate, beta, seed))
}

/// Mask numeric cells more often when their own value ranks high (for `beta > 0`).
pub fn mask_mnar(table: &Table, rate: f64, beta: f64, seed: u64) -> Result<Mask> {
    check_beta(beta)?;
    let cells = maskable_cells(table, &Mechanism::Mnar)?;
    let k = target_count(rate, cells.len())?;
    let ranks: Vec<Vec<Option<f64>>> = table
        .columns()
        .iter()
        .map(|c| percentile_ranks(&c.cells))
        .collect();
    let scores: Vec<f64> = cells
        .iter()
        .map(|&(row, col)| beta * (ranks[col][row].unwrap_or(0.5) - 0.5))
        .collect();
    let chosen = weighted_select(&cells, &scores, k, seed)?;
    Ok(to_mask(table, chosen, Mechanism::Mnar, rate, beta, seed))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("steepness {beta} is not finite")))
    }
}

/// Dispatch on `mechanism`. `beta` is ignored for MCAR.
pub fn make_mask(table: &Table, mechanism: &Mechanism, rate: f64, beta: f64, seed: u64) -> Result<Mask> {
    match mechanism {
        Mechanism::Mcar => mask_mcar(table, rate, seed),
        Mechanism::Mar { driver } => mask_mar(table, rate, driver, beta, seed),
        Mechanism::Mnar => mask_mnar(table, rate, beta, seed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostic {
    /// |coordinates| / number of cells the mechanism could mask.
    pub rate_achieved: f64,
    /// Pearson r between the 0/1 mask indicator and the within-column percentile
    /// of each numeric maskable cell's true value. `None` when undefined.
    pub value_mask_corr: Option<f64>,
}

/// Check empirically how the mask relates to the hidden values.
pub fn mechanism_diagnostic(table: &Table, mask: &Mask) -> Result<Diagnostic> {
    let cells = maskable_cells(table, &mask.mechanism)?;
    let rate_achieved = if cells.is_empty() {
        0.0
    } else {
        mask.len() as f64 / cells.len() as f64
    };
    let masked: std::collections::HashSet<(usize, &str)> = mask
        .coordinates
        .iter()
        .map(|c| (c.row, c.column.as_str()))
        .collect();
    let ranks: Vec<Vec<Option<f64>>> = table
        .columns()
        .iter()
        .map(|c| percentile_ranks(&c.cells))
        .collect();
    let mut indicator = Vec::new();
    let mut percentile = Vec::new();
    for &(row, col) in &cells {
        if let Some(p) = ranks[col][row] {
            let name = table.column(col).name.as_str();
            indicator.push(if masked.contains(&(row, name)) { 1.0 } else { 0.0 });
            percentile.push(p);
        }
    }
    Ok(Diagnostic {
        rate_achieved,
        value_mask_corr: pearson_r(&indicator, &percentile).ok(),
    })
}

/// Build one mask per seed and return its diagnostic, seeds in input order.
pub fn sweep_diagnostics(
    table: &Table,
    mechanism: &Mechanism,
    rate: f64,
    beta: f64,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<Diagnostic>> {
    par::map(exec, seeds, |&seed| {
        let mask = make_mask(table, mechanism, rate, beta, seed)?;
        mechanism_diagnostic(table, &mask)
    })
    .into_iter()
    .collect()
}

/// Write a mask file: a `# mechanism=…, rate=…, beta=…, seed=…` line, then
/// `row_index,column_name` rows.
pub fn write_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "# mechanism={}, rate={}, beta={}, seed={}",
        mask.mechanism, mask.target_rate, mask.beta, mask.seed
    )?;
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut out);
        w.write_record(["row_index", "column_name"])?;
        for c in &mask.coordinates {
            w.write_record([c.row.to_string(), c.column.clone()])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let meta = first
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Structural("mask file must start with a '# mechanism=…' line".into()))?;
    let mut mechanism = None;
    let (mut rate, mut beta, mut seed) = (None, None, None);
    for part in meta.split(',') {
        let Some((key, value)) = part.split_once('=') else { continue };
        let value = value.trim();
        let bad = || Error::Structural(format!("bad mask header value '{part}'"));
        match key.trim() {
            "mechanism" => mechanism = Some(value.parse::<Mechanism>()?),
            "rate" => rate = Some(value.parse::<f64>().map_err(|_| bad())?),
            "beta" => beta = Some(value.parse::<f64>().map_err(|_| bad())?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad())?),
            _ => {}
        }
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(["row_index", "column_name"]) {
        return Err(Error::Structural(format!("unexpected mask header {header:?}")));
    }
    let mut coordinates = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec[0].trim().parse().map_err(|_| Error::Parse {
            row: i,
            column: "row_index".into(),
            message: format!("'{}' is not a row index", &rec[0]),
        })?;
        coordinates.push(Coord { row, column: rec[1].to_string() });
    }
    let missing = |k: &str| Error::Structural(format!("mask header lacks '{k}'"));
    Ok(Mask {
        coordinates,
        mechanism: mechanism.ok_or_else(|| missing("mechanism"))?,
        target_rate: rate.ok_or_else(|| missing("rate"))?,
        beta: beta.unwrap_or(0.0),
        seed: seed.ok_or_else(|| missing("seed"))?,
    })
}
