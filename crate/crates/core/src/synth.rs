//! Pseudo-periodic signal generator.
//!
//! Each sample is a sinusoid whose amplitude and frequency are redrawn at
//! every grid point:
//!
//! ```text
//! x_k(t_j) = a_kj * sin(2*pi * f_kj * t_j + phase),  a_kj ~ N(A, sd_A^2),  f_kj ~ N(F, sd_F^2)
//! ```
//!
//! Sample `k` draws from its own ChaCha8 stream (`stream = k`), so samples can
//! be generated in any order or in parallel with identical output.

use std::f64::consts::TAU;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rng::rng_stream;
use crate::table::{Column, Table, TimeFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoPeriodicConfig {
    pub n_samples: usize,
    pub n_points: usize,
    pub t_start: f64,
    pub t_stop: f64,
    pub amplitude: f64,
    pub amplitude_sd: f64,
    /// Cycles per time unit.
    pub frequency: f64,
    pub frequency_sd: f64,
    /// Radians.
    pub phase: f64,
    pub seed: u64,
}

impl Default for PseudoPeriodicConfig {
    fn default() -> Self {
        PseudoPeriodicConfig {
            n_samples: 30,
            n_points: 100,
            t_start: 0.0,
            t_stop: 20.0,
            amplitude: 1.0,
            amplitude_sd: 0.1,
            frequency: 0.25,
            frequency_sd: 0.01,
            phase: 0.0,
            seed: 0,
        }
    }
}

impl PseudoPeriodicConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1");
        }
        if self.n_points < 2 {
            return bad("n_points must be at least 2");
        }
        if !(self.t_stop > self.t_start) || !self.t_start.is_finite() || !self.t_stop.is_finite() {
            return bad("t_stop must be greater than t_start");
        }
        for (name, v) in [("amplitude_sd", self.amplitude_sd), ("frequency_sd", self.frequency_sd)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be a finite value >= 0")));
            }
        }
        if ![self.amplitude, self.frequency, self.phase].iter().all(|v| v.is_finite()) {
            return bad("amplitude, frequency and phase must be finite");
        }
        Ok(())
    }
}

/// `n_points` evenly spaced times from `t_start` to `t_stop`, both inclusive.
pub fn regular_time_grid(t_start: f64, t_stop: f64, n_points: usize) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::InvalidArgument(format!("n_points = {n_points}, need at least 2")));
    }
    if !(t_stop > t_start) {
        return Err(Error::InvalidArgument(format!(
            "t_stop ({t_stop}) must be greater than t_start ({t_start})"
        )));
    }
    let step = (t_stop - t_start) / (n_points - 1) as f64;
    Ok((0..n_points).map(|j| t_start + j as f64 * step).collect())
}

pub fn generate_pseudo_periodic(config: &PseudoPeriodicConfig) -> Result<Table> {
    generate_pseudo_periodic_with(config, Execution::Sequential)
}

/// Generate the table; `exec` only affects speed, never the output.
pub fn generate_pseudo_periodic_with(config: &PseudoPeriodicConfig, exec: Execution) -> Result<Table> {
    config.validate()?;
    let times = regular_time_grid(config.t_start, config.t_stop, config.n_points)?;
    let amp = Normal::new(config.amplitude, config.amplitude_sd)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let freq = Normal::new(config.frequency, config.frequency_sd)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let samples: Vec<usize> = (0..config.n_samples).collect();
    let series = par::map(exec, &samples, |&k| {
        let mut rng = rng_stream(config.seed, k as u64);
        times
            .iter()
            .map(|&t| {
                let a = amp.sample(&mut rng);
                let f = freq.sample(&mut rng);
                a * (TAU * f * t + config.phase).sin()
            })
            .collect::<Vec<f64>>()
    });

    let mut columns = Vec::with_capacity(config.n_samples + 1);
    columns.push(Column::time("time", TimeFormat::OrdinalIndex, &times));
    for (k, values) in series.iter().enumerate() {
        columns.push(Column::numeric(format!("s{}", k + 1), values));
    }
    Table::new(columns)
}
