//! A logistic scorer trained on soft-label cross-entropy.
//!
//! The model is `p(x) = sigmoid(w . x + b)`. Training minimizes
//!
//! ```text
//! LOSS = -(1/M) sum_i [ w1_i log p(x_i) + w2_i log(1 - p(x_i)) ]
//! ```
//!
//! with plain mini-batch gradient descent. For the Gaussian generator in
//! [`crate::synth`] the exact observed-feature posterior is logistic-linear,
//! so it lies inside this model class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::odds::{sigmoid, ScoredInstance, SoftLabel, WeightedInstance};
use crate::stats::weighted_auc;
use crate::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 256,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "validation_fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Anything the trainer can learn from.
pub trait Example {
    fn features(&self) -> &[f64];
    fn label(&self) -> SoftLabel;
    /// Class weights used for validation AUC.
    fn class_weights(&self) -> (f64, f64) {
        let l = self.label();
        (l.w1(), l.w2())
    }
}

impl Example for WeightedInstance {
    fn features(&self) -> &[f64] {
        &self.features
    }

    fn label(&self) -> SoftLabel {
        self.soft_label()
            .unwrap_or_else(|_| SoftLabel::new(0.5).expect("0.5 is a valid label"))
    }

    fn class_weights(&self) -> (f64, f64) {
        (self.omega_a, self.omega_b)
    }
}

impl Example for (Vec<f64>, SoftLabel) {
    fn features(&self) -> &[f64] {
        &self.0
    }

    fn label(&self) -> SoftLabel {
        self.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    dim: usize,
    weights: Vec<f64>,
    bias: f64,
    config: TrainConfig,
}

impl ScorerModel {
    pub fn zeros(dim: usize, config: TrainConfig) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            config,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.len(),
            });
        }
        Ok(sigmoid(self.logit(features)))
    }

    fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_VERSION,
            dim: self.dim(),
            weights: self.weights.clone(),
            bias: self.bias,
            config: self.config.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("model file: {e}")))?;
        if file.version != MODEL_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model version {}",
                file.version
            )));
        }
        if file.weights.len() != file.dim {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                found: file.weights.len(),
            });
        }
        Ok(Self {
            weights: file.weights,
            bias: file.bias,
            config: file.config,
        })
    }
}

/// Convenience form of [`ScorerModel::score`].
pub fn score(model: &ScorerModel, features: &[f64]) -> Result<f64> {
    model.score(features)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_train: f64,
    pub loss_val: f64,
    pub auc_val: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn loss_refs<E: Example>(model: &ScorerModel, batch: &[&E]) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|e| {
            let z = model.logit(e.features());
            let l = e.label();
            // log p = -softplus(-z), log(1 - p) = -softplus(z)
            l.w1() * softplus(-z) + l.w2() * softplus(z)
        })
        .sum();
    total / batch.len() as f64
}

fn gradient_refs<E: Example>(model: &ScorerModel, batch: &[&E]) -> Vec<f64> {
    let d = model.dim();
    let mut g = vec![0.0; d + 1];
    for e in batch {
        let x = e.features();
        let r = sigmoid(model.logit(x)) - e.label().w1();
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += r * xi;
        }
        g[d] += r;
    }
    let m = batch.len() as f64;
    g.iter_mut().for_each(|v| *v /= m);
    g
}

fn check_batch<E: Example>(model: &ScorerModel, batch: &[E]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Domain("batch is empty".into()));
    }
    if let Some(e) = batch.iter().find(|e| e.features().len() != model.dim()) {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: e.features().len(),
        });
    }
    Ok(())
}

/// Mean soft-label cross-entropy, in its non-negative minimized form.
pub fn loss<E: Example>(model: &ScorerModel, batch: &[E]) -> Result<f64> {
    check_batch(model, batch)?;
    Ok(loss_refs(model, &batch.iter().collect::<Vec<_>>()))
}

/// Gradient of [`loss`] with respect to `[weights..., bias]`:
/// `(1/M) sum_i (p_i - w1_i) [x_i, 1]`.
pub fn gradient<E: Example>(model: &ScorerModel, batch: &[E]) -> Result<Vec<f64>> {
    check_batch(model, batch)?;
    Ok(gradient_refs(model, &batch.iter().collect::<Vec<_>>()))
}

fn validation_auc<E: Example>(model: &ScorerModel, val: &[&E]) -> f64 {
    let scored: Vec<ScoredInstance> = val
        .iter()
        .map(|e| {
            let (wa, wb) = e.class_weights();
            ScoredInstance::new(sigmoid(model.logit(e.features())), wa, wb)
        })
        .collect();
    weighted_auc(&scored).unwrap_or(f64::NAN)
}

/// Trains from zero initial parameters. See [`fit_observed`].
pub fn fit<E: Example + Sync>(
    dataset: &[E],
    config: &TrainConfig,
) -> Result<(ScorerModel, TrainTrace)> {
    fit_observed(dataset, config, |_, _| {})
}

/// Trains and calls `observer` with the record and model after every epoch.
///
/// The data are split once into train and validation parts by a seeded
/// permutation; each epoch then visits the training part in a freshly
/// shuffled order. The whole run is a function of `config`.
pub fn fit_observed<E, F>(
    dataset: &[E],
    config: &TrainConfig,
    mut observer: F,
) -> Result<(ScorerModel, TrainTrace)>
where
    E: Example + Sync,
    F: FnMut(&EpochRecord, &ScorerModel),
{
    config.validate()?;
    if dataset.len() < 2 * config.batch_size {
        return Err(Error::InsufficientData(format!(
            "need at least {} examples for batch size {}, got {}",
            2 * config.batch_size,
            config.batch_size,
            dataset.len()
        )));
    }
    let dim = dataset[0].features().len();
    let mut model = ScorerModel::zeros(dim, config.clone());
    check_batch(&model, dataset)?;
    for e in dataset {
        let l = e.label();
        if !(l.w1().is_finite() && e.features().iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInstance("non-finite feature or label".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((dataset.len() as f64 * config.validation_fraction).round() as usize)
        .clamp(1, dataset.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val: Vec<&E> = val_idx.iter().map(|&i| &dataset[i]).collect();
    let mut train: Vec<&E> = train_idx.iter().map(|&i| &dataset[i]).collect();

    let mut trace = TrainTrace::default();
    for epoch in 1..=config.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(config.batch_size) {
            let g = gradient_refs(&model, batch);
            for (w, gi) in model.weights.iter_mut().zip(&g) {
                *w -= config.learning_rate * gi;
            }
            model.bias -= config.learning_rate * g[dim];
        }
        let record = EpochRecord {
            epoch,
            loss_train: loss_refs(&model, &train),
            loss_val: loss_refs(&model, &val),
            auc_val: validation_auc(&model, &val),
        };
        trace.epochs.push(record);
        if !model.is_finite() || !record.loss_train.is_finite() {
            return Err(Error::Diverged { epoch, trace });
        }
        observer(&record, &model);
    }
    Ok((model, trace))
}
