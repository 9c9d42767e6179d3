#![allow(dead_code)]

use chronofill::neural::{Batch, Mlp};
use chronofill::synth::{generate_pseudo_periodic, PseudoPeriodicConfig};
use chronofill::Table;

pub fn synthetic() -> Table {
    generate_pseudo_periodic(&PseudoPeriodicConfig::default()).unwrap()
}

pub fn small_synthetic(n_samples: usize, n_points: usize, seed: u64) -> Table {
    generate_pseudo_periodic(&PseudoPeriodicConfig { n_samples, n_points, seed, ..Default::default() }).unwrap()
}

/// Reference metrics written from the textbook formulas, using the
/// one-pass sum form for Pearson r so it shares no code path with the library.
pub struct Naive {
    pub r: f64,
    pub mre: f64,
    pub mse: f64,
    pub two_norm: f64,
}

pub fn naive(x: &[f64], y: &[f64]) -> Naive {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut abs_err, mut abs_y, mut sq) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
        abs_err += (x[i] - y[i]).abs();
        abs_y += y[i].abs();
        sq += (x[i] - y[i]) * (x[i] - y[i]);
    }
    let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    Naive { r, mre: abs_err / abs_y, mse: sq / n, two_norm: sq.sqrt() }
}

/// Signs of every hidden pre-activation for one input.
fn activation_pattern(net: &Mlp, x: &[f64]) -> Vec<bool> {
    let mut pattern = Vec::new();
    let mut a = x.to_vec();
    for (l, layer) in net.layers.iter().enumerate() {
        if l + 1 == net.layers.len() {
            break;
        }
        let z: Vec<f64> = (0..layer.n_out)
            .map(|o| {
                let w = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                layer.biases[o] + w.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>()
            })
            .collect();
        pattern.extend(z.iter().map(|v| *v > 0.0));
        a = z.iter().map(|v| v.max(0.0)).collect();
    }
    pattern
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Parameters whose ±h perturbation moved some hidden unit across the ReLU kink.
    pub skipped: usize,
}

/// Compare backprop with central differences on every parameter.
/// Relative error is |a − n| / max(|a|, |n|, 1e-6).
pub fn gradient_check(net: &Mlp, batch: &Batch<'_>, h: f64) -> GradCheck {
    let analytic = net.gradient(batch).unwrap().flat();
    let base = net.params();
    let patterns = |m: &Mlp| -> Vec<Vec<bool>> { batch.inputs.iter().map(|x| activation_pattern(m, x)).collect() };
    let mut probe = net.clone();
    let mut out = GradCheck { max_rel_err: 0.0, checked: 0, skipped: 0 };
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + h;
        probe.set_params(&p).unwrap();
        let plus = probe.loss(batch).unwrap();
        let pat_plus = patterns(&probe);
        p[k] = base[k] - h;
        probe.set_params(&p).unwrap();
        let minus = probe.loss(batch).unwrap();
        if pat_plus != patterns(&probe) {
            out.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        out.max_rel_err = out.max_rel_err.max(rel);
        out.checked += 1;
    }
    out
}
