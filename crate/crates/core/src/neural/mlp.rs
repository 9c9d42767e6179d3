//! Fully connected ReLU network with an identity (regression) or softmax
//! (classification) head, plus exact backpropagation of the mean batch loss.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// One linear output, squared-error loss.
    Regression,
    /// Softmax over `classes` outputs, cross-entropy loss.
    Classification { classes: usize },
}

impl Head {
    fn outputs(self) -> usize {
        match self {
            Head::Regression => 1,
            Head::Classification { classes } => classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Value(f64),
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Value(f64),
    Probabilities(Vec<f64>),
}

impl Prediction {
    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        match self {
            Prediction::Value(_) => None,
            Prediction::Probabilities(p) => {
                let mut best = 0;
                for (k, &v) in p.iter().enumerate() {
                    if v > p[best] {
                        best = k;
                    }
                }
                Some(best)
            }
        }
    }
}

/// Dense layer; `weights` is `n_out × n_in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Layer {
        Layer { n_in, n_out, weights: vec![0.0; n_in * n_out], biases: vec![0.0; n_out] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let w = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            out.push(self.biases[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub head: Head,
}

/// Gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    /// Weights then biases, layer by layer (same order as [`Mlp::params`]).
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Inputs and targets for one loss evaluation.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub inputs: Vec<&'a [f64]>,
    pub targets: Vec<Target>,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

fn log_softmax(z: &[f64], k: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z[k] - lse
}

impl Mlp {
    /// Network of the given shape with every parameter zero.
    pub fn zeros(n_in: usize, hidden: &[usize], head: Head) -> Mlp {
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(head.outputs());
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Mlp { layers, head }
    }

    /// He-normal hidden weights, zero biases, zero output layer.
    ///
    /// A zero output layer starts every prediction at the (standardized)
    /// target mean, so a constant target is already optimal.
    pub fn init(n_in: usize, hidden: &[usize], head: Head, rng: &mut Rng) -> Mlp {
        let mut mlp = Mlp::zeros(n_in, hidden, head);
        let last = mlp.layers.len() - 1;
        for layer in &mut mlp.layers[..last] {
            let sd = (2.0 / layer.n_in.max(1) as f64).sqrt();
            let normal = Normal::new(0.0, sd).expect("valid normal");
            for w in &mut layer.weights {
                *w = normal.sample(rng);
            }
        }
        mlp
    }

    /// Network with every parameter drawn uniformly from [-scale, scale].
    pub fn random(n_in: usize, hidden: &[usize], head: Head, scale: f64, rng: &mut Rng) -> Mlp {
        let mut mlp = Mlp::zeros(n_in, hidden, head);
        for p in mlp.params_mut() {
            *p = rng.random_range(-scale..=scale);
        }
        mlp
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        for (p, v) in self.params_mut().zip(params) {
            *p = *v;
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::InvalidArgument(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.n_inputs()
            )));
        }
        Ok(())
    }

    /// Pre-activations of every layer for one input.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(&a, &mut z);
            if l + 1 < self.layers.len() {
                a = z.iter().map(|v| v.max(0.0)).collect();
            }
            zs.push(z);
        }
        zs
    }

    fn output(&self, x: &[f64]) -> Vec<f64> {
        self.pre_activations(x).pop().expect("at least one layer")
    }

    pub fn forward(&self, x: &[f64]) -> Result<Prediction> {
        self.check_input(x)?;
        let z = self.output(x);
        Ok(match self.head {
            Head::Regression => Prediction::Value(z[0]),
            Head::Classification { .. } => Prediction::Probabilities(softmax(&z)),
        })
    }

    fn check_target(&self, target: Target) -> Result<()> {
        match (self.head, target) {
            (Head::Regression, Target::Value(_)) => Ok(()),
            (Head::Classification { classes }, Target::Class(k)) if k < classes => Ok(()),
            _ => Err(Error::InvalidArgument("target does not match the network head".into())),
        }
    }

    fn sample_loss(&self, z: &[f64], target: Target) -> Result<f64> {
        self.check_target(target)?;
        Ok(match target {
            Target::Value(y) => (z[0] - y).powi(2),
            Target::Class(k) => -log_softmax(z, k),
        })
    }

    /// Mean loss over the batch.
    pub fn loss(&self, batch: &Batch<'_>) -> Result<f64> {
        check_batch(batch)?;
        let mut total = 0.0;
        for (x, &t) in batch.inputs.iter().zip(&batch.targets) {
            self.check_input(x)?;
            total += self.sample_loss(&self.output(x), t)?;
        }
        Ok(total / batch.inputs.len() as f64)
    }

    /// Exact gradient of [`Mlp::loss`] with respect to every parameter.
    pub fn gradient(&self, batch: &Batch<'_>) -> Result<Gradients> {
        check_batch(batch)?;
        let scale = 1.0 / batch.inputs.len() as f64;
        let mut grads = Gradients {
            layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        };
        for (x, &t) in batch.inputs.iter().zip(&batch.targets) {
            self.check_input(x)?;
            self.check_target(t)?;
            let zs = self.pre_activations(x);
            let out = zs.last().expect("at least one layer");
            let mut delta: Vec<f64> = match (self.head, t) {
                (Head::Regression, Target::Value(y)) => vec![2.0 * (out[0] - y) * scale],
                (Head::Classification { .. }, Target::Class(k)) => {
                    let mut p = softmax(out);
                    p[k] -= 1.0;
                    p.into_iter().map(|v| v * scale).collect()
                }
                _ => unreachable!("checked by check_target"),
            };
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let g = &mut grads.layers[l];
                let input: Vec<f64> = if l == 0 { x.to_vec() } else { zs[l - 1].iter().map(|v| v.max(0.0)).collect() };
                for (o, d) in delta.iter().enumerate() {
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (gw, a) in row.iter_mut().zip(&input) {
                        *gw += d * a;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; layer.n_in];
                    for (w, d) in layer.weights.chunks_exact(layer.n_in).zip(&delta) {
                        for (p, wv) in prev.iter_mut().zip(w) {
                            *p += wv * d;
                        }
                    }
                    for (p, z) in prev.iter_mut().zip(&zs[l - 1]) {
                        if *z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok(grads)
    }
}

fn check_batch(batch: &Batch<'_>) -> Result<()> {
    if batch.inputs.is_empty() || batch.inputs.len() != batch.targets.len() {
        return Err(Error::InvalidArgument("batch must be non-empty with one target per input".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(3, &[4], Head::Regression);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), Prediction::Value(0.0));
    }

    #[test]
    fn identity_network() {
        let mut m = Mlp::zeros(1, &[], Head::Regression);
        m.set_params(&[1.0, 0.0]).unwrap();
        for x in [-3.5, 0.0, 2.25] {
            assert_eq!(m.forward(&[x]).unwrap(), Prediction::Value(x));
        }
        assert!(m.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut r = rng(3);
        let m = Mlp::random(5, &[6, 4], Head::Classification { classes: 4 }, 2.0, &mut r);
        let Prediction::Probabilities(p) = m.forward(&[0.3, -1.0, 2.0, 0.5, 9.0]).unwrap() else {
            panic!("expected probabilities")
        };
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(Prediction::Probabilities(vec![0.4, 0.4, 0.2]).argmax(), Some(0));
        assert_eq!(Prediction::Probabilities(vec![0.2, 0.4, 0.4]).argmax(), Some(1));
    }

    #[test]
    fn gradient_zero_at_exact_fit() {
        let mut r = rng(1);
        let mut m = Mlp::init(2, &[3], Head::Regression, &mut r);
        let last = m.layers.len() - 1;
        m.layers[last].biases[0] = 1.5;
        let xs = [[0.1, 0.2], [1.0, -1.0], [3.0, 0.5]];
        let batch = Batch { inputs: xs.iter().map(|x| &x[..]).collect(), targets: vec![Target::Value(1.5); 3] };
        assert!(m.gradient(&batch).unwrap().norm() < 1e-8);
    }

    #[test]
    fn duplicated_batch_keeps_gradient() {
        let mut r = rng(2);
        let m = Mlp::random(2, &[3], Head::Regression, 1.0, &mut r);
        let xs = [[0.1, 0.2], [1.0, -1.0]];
        let once = Batch { inputs: xs.iter().map(|x| &x[..]).collect(), targets: vec![Target::Value(1.0), Target::Value(-2.0)] };
        let twice = Batch {
            inputs: once.inputs.iter().chain(&once.inputs).copied().collect(),
            targets: once.targets.iter().chain(&once.targets).copied().collect(),
        };
        let a = m.gradient(&once).unwrap().flat();
        let b = m.gradient(&twice).unwrap().flat();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_target_rejected() {
        let m = Mlp::zeros(1, &[], Head::Regression);
        let x = [1.0];
        let batch = Batch { inputs: vec![&x[..]], targets: vec![Target::Class(0)] };
        assert!(m.gradient(&batch).is_err());
        assert!(m.gradient(&Batch { inputs: vec![], targets: vec![] }).is_err());
    }
}
