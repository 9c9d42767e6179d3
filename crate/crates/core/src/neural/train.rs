//! Minibatch Adam with a held-out validation split and early stopping.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::featurize::FeatureMatrix;
use super::mlp::{Batch, Head, Mlp, Target};
use crate::error::{Error, Result};
use crate::rng::rng;
use crate::table::Cell;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
pub const MIN_TRAINING_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![64, 32],
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("neural: {m}")));
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch size, max epochs and patience must be >= 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return bad("validation fraction must be in (0, 0.5]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub column: String,
    pub epochs: Vec<EpochLog>,
    /// Epoch of the returned snapshot.
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn write_csv_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_loss")?;
        for e in &self.epochs {
            writeln!(w, "{},{},{}", e.epoch, e.train_loss, e.val_loss)?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Observed values of the target column, aligned with the training rows.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetValues {
    Numeric(Vec<f64>),
    Categorical { labels: Vec<usize>, vocabulary: Vec<Arc<str>> },
}

impl TargetValues {
    fn len(&self) -> usize {
        match self {
            TargetValues::Numeric(v) => v.len(),
            TargetValues::Categorical { labels, .. } => labels.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Decoder {
    /// Standardized target: value = mean + std · output.
    Numeric { mean: f64, std: f64 },
    Categorical { vocabulary: Vec<Arc<str>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub network: Mlp,
    decoder: Decoder,
    pub log: TrainingLog,
}

impl MlpModel {
    /// Predict one cell from a feature row, in the target's original units or labels.
    pub fn predict(&self, x: &[f64]) -> Result<Cell> {
        let p = self.network.forward(x)?;
        Ok(match (&self.decoder, p) {
            (Decoder::Numeric { mean, std }, super::mlp::Prediction::Value(z)) => Cell::Number(mean + std * z),
            (Decoder::Categorical { vocabulary }, p) => {
                Cell::Category(vocabulary[p.argmax().expect("classification head")].clone())
            }
            _ => unreachable!("decoder matches head"),
        })
    }

    /// Scale a target value the way training did.
    pub fn scale(&self, y: f64) -> Option<f64> {
        match self.decoder {
            Decoder::Numeric { mean, std } => Some((y - mean) / std),
            Decoder::Categorical { .. } => None,
        }
    }

    pub fn unscale(&self, z: f64) -> Option<f64> {
        match self.decoder {
            Decoder::Numeric { mean, std } => Some(mean + std * z),
            Decoder::Categorical { .. } => None,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Adam {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, net: &mut Mlp, grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in net.params_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
        }
    }
}

fn batch_of<'a>(features: &'a FeatureMatrix, rows: &[usize], targets: &[Target], idx: &[usize]) -> Batch<'a> {
    Batch {
        inputs: idx.iter().map(|&k| features.row(rows[k])).collect(),
        targets: idx.iter().map(|&k| targets[k]).collect(),
    }
}

/// Train on `features.row(rows[k])` → `target[k]`.
pub fn train(features: &FeatureMatrix, rows: &[usize], target: &TargetValues, config: &TrainConfig) -> Result<MlpModel> {
    config.validate()?;
    if rows.len() != target.len() {
        return Err(Error::InvalidArgument("one target value per training row is required".into()));
    }
    if rows.len() < MIN_TRAINING_ROWS {
        return Err(Error::Training(format!(
            "{} rows with an observed target; the neural imputer needs at least {MIN_TRAINING_ROWS} (use mean or knn instead)",
            rows.len()
        )));
    }
    let (head, decoder, targets): (Head, Decoder, Vec<Target>) = match target {
        TargetValues::Numeric(y) => {
            let n = y.len() as f64;
            let mean = y.iter().sum::<f64>() / n;
            let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let std = if std > 0.0 { std } else { 1.0 };
            let t = y.iter().map(|v| Target::Value((v - mean) / std)).collect();
            (Head::Regression, Decoder::Numeric { mean, std }, t)
        }
        TargetValues::Categorical { labels, vocabulary } => {
            if vocabulary.is_empty() || labels.iter().any(|&k| k >= vocabulary.len()) {
                return Err(Error::InvalidArgument("label index outside the vocabulary".into()));
            }
            let t = labels.iter().map(|&k| Target::Class(k)).collect();
            (
                Head::Classification { classes: vocabulary.len() },
                Decoder::Categorical { vocabulary: vocabulary.clone() },
                t,
            )
        }
    };

    let mut r = rng(config.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut r);
    let n_val = ((config.validation_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val_batch = batch_of(features, rows, &targets, val_idx);

    let mut net = Mlp::init(features.n_features(), &config.hidden, head, &mut r);
    let mut adam = Adam::new(net.n_params(), config.learning_rate);
    let mut log = TrainingLog::default();
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut r);
        for chunk in train_idx.chunks(config.batch_size) {
            let batch = batch_of(features, rows, &targets, chunk);
            let grad = net.gradient(&batch)?.flat();
            adam.step(&mut net, &grad);
        }
        let train_loss = net.loss(&batch_of(features, rows, &targets, &train_idx))?;
        let val_loss = net.loss(&val_batch)?;
        if !train_loss.is_finite() || !val_loss.is_finite() || net.params_mut().any(|p| !p.is_finite()) {
            return Err(Error::Training(format!(
                "loss became non-finite at epoch {epoch}; lower the learning rate (currently {})",
                config.learning_rate
            )));
        }
        log.epochs.push(EpochLog { epoch, train_loss, val_loss });
        if val_loss < best.0 {
            best = (val_loss, net.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    log.best_epoch = best.2;
    Ok(MlpModel { network: best.1, decoder, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::featurize::FeatureKind;
    use crate::neural::featurize::FeatureMeta;

    fn one_feature(xs: &[f64]) -> FeatureMatrix {
        FeatureMatrix {
            n_rows: xs.len(),
            values: xs.to_vec(),
            meta: vec![FeatureMeta { name: "x".into(), source: "x".into(), kind: FeatureKind::ScaledNumeric }],
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { validation_fraction: 0.0, ..Default::default() },
            TrainConfig { validation_fraction: 0.6, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { hidden: vec![4, 0], ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn too_few_rows() {
        let f = one_feature(&[0.0; 9]);
        let rows: Vec<usize> = (0..9).collect();
        let err = train(&f, &rows, &TargetValues::Numeric(vec![1.0; 9]), &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("mean or knn"));
    }

    #[test]
    fn constant_target_is_exact() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 10.0 - 1.0).collect();
        let f = one_feature(&xs);
        let rows: Vec<usize> = (0..20).collect();
        let m = train(&f, &rows, &TargetValues::Numeric(vec![4.5; 20]), &TrainConfig::default()).unwrap();
        for i in 0..20 {
            let y = m.predict(f.row(i)).unwrap().as_number().unwrap();
            assert!((y - 4.5).abs() < 1e-3);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let f = one_feature(&xs);
        let rows: Vec<usize> = (0..40).collect();
        let y: Vec<f64> = xs.iter().map(|x| x * 1e3).collect();
        let cfg = TrainConfig { learning_rate: 1e150, hidden: vec![8], ..Default::default() };
        match train(&f, &rows, &TargetValues::Numeric(y), &cfg) {
            Err(Error::Training(msg)) => assert!(msg.contains("learning rate")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn log_csv_layout() {
        let log = TrainingLog {
            column: "s1".into(),
            epochs: vec![EpochLog { epoch: 1, train_loss: 0.5, val_loss: 0.25 }],
            best_epoch: 1,
        };
        let mut buf = Vec::new();
        log.write_csv_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,val_loss\n1,0.5,0.25\n");
    }
}
