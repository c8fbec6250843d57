use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::network::{forward_one, loss_and_grads, INPUT_LEN};
use super::{adam_step, AdamState, LeNetModel};
use crate::error::{Error, Result};
use crate::exemplar::NUM_CLASSES;
use crate::idx::IdxDataset;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Training stops once the epoch-mean loss improves by less than this.
    pub plateau: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 20,
            plateau: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
            ("plateau", self.plateau),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::invalid("beta1 and beta2 must be below 1"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid(
                "batch_size and max_epochs must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Sample-weighted mean of the batch losses.
    pub loss: f64,
    /// Fraction of samples classified correctly before each batch update.
    pub train_acc: f64,
}

/// Index of the largest value; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn scaled_inputs(ds: &IdxDataset, order: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(order.len() * INPUT_LEN);
    for &i in order {
        out.extend(ds.image_bytes(i).iter().map(|&b| f64::from(b) / 255.0));
    }
    out
}

fn check_dataset(ds: &IdxDataset) -> Result<()> {
    if ds.rows() * ds.cols() != INPUT_LEN {
        return Err(Error::Shape(format!(
            "dataset images are {}x{}, the network expects 28x28",
            ds.rows(),
            ds.cols()
        )));
    }
    Ok(())
}

pub fn train(ds: &IdxDataset, cfg: &TrainConfig) -> Result<(LeNetModel, Vec<EpochStats>)> {
    train_with(ds, cfg, |_| {})
}

/// Trains from a seeded initialization, calling `on_epoch` after every epoch.
pub fn train_with(
    ds: &IdxDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(LeNetModel, Vec<EpochStats>)> {
    cfg.validate()?;
    check_dataset(ds)?;
    if ds.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut model = LeNetModel::init(cfg.seed);
    let mut state = AdamState::default();
    let mut history: Vec<EpochStats> = Vec::new();
    let mut order: Vec<usize> = (0..ds.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut stream = rng::stream(&[rng::DOMAIN_EPOCH, cfg.seed, epoch as u64]);
        order.shuffle(&mut stream);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let inputs = scaled_inputs(ds, batch);
            let labels: Vec<u8> = batch.iter().map(|&i| ds.labels()[i]).collect();
            let out = loss_and_grads(&model.widened(), &inputs, &labels)?;
            loss_sum += out.loss * batch.len() as f64;
            correct += out.correct;
            adam_step(&mut model, &out.grads, &mut state, cfg);
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / ds.len() as f64,
            train_acc: correct as f64 / ds.len() as f64,
        };
        on_epoch(&stats);
        let improvement = history.last().map(|prev| prev.loss - stats.loss);
        history.push(stats);
        if !stats.loss.is_finite() {
            return Err(Error::invalid(format!(
                "training diverged at epoch {epoch}"
            )));
        }
        if improvement.is_some_and(|d| d < cfg.plateau) {
            break;
        }
    }
    Ok((model, history))
}

/// Rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, u8)>) -> Self {
        let mut counts = [[0; NUM_CLASSES]; NUM_CLASSES];
        for (truth, pred) in pairs {
            counts[truth as usize][pred as usize] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|r| self.counts[r].iter().sum())
    }

    /// Header row `true\pred,0..9`, then one row per true label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for c in 0..NUM_CLASSES {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (r, row) in self.counts.iter().enumerate() {
            out.push_str(&r.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Argmax class for every image in the dataset.
pub fn predict(model: &LeNetModel, ds: &IdxDataset) -> Result<Vec<u8>> {
    check_dataset(ds)?;
    let p = model.widened();
    Ok((0..ds.len())
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = ds
                .image_bytes(i)
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect();
            argmax(&forward_one(&p, &x).logits) as u8
        })
        .collect())
}

pub fn evaluate(model: &LeNetModel, ds: &IdxDataset) -> Result<(f64, ConfusionMatrix)> {
    let preds = predict(model, ds)?;
    let cm = ConfusionMatrix::from_pairs(ds.labels().iter().copied().zip(preds));
    Ok((cm.accuracy(), cm))
}
