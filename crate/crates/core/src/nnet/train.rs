use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{softmax_row, LOG_FLOOR};
use super::{Network, NetworkConfig, NetworkParams, NnetError, Tensor};

/// Images `[N, H, W, 3]` with one class ordinal per image.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>) -> Self {
        assert_eq!(images.shape().first().copied().unwrap_or(0), labels.len());
        Dataset { images, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnetError> {
        let bad = |m: &str| Err(NnetError::InvalidTrainConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy (earliest
    /// on ties; the last epoch when there is no validation data).
    pub network: Network,
    pub history: Vec<EpochRecord>,
    /// One-based epoch whose parameters were returned.
    pub best_epoch: Option<usize>,
}

impl TrainOutcome {
    /// `epoch,train_loss,train_accuracy,val_loss,val_accuracy` rows.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
            ));
        }
        out
    }
}

/// Mini-batch SGD with classical momentum (`v = m v - lr g; w += v`).
/// Batch order is reshuffled every epoch from a seeded ChaCha8 stream;
/// training and batch statistics are reported as means over the epoch's
/// batches, measured before each update.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
    net: &NetworkConfig,
) -> Result<TrainOutcome, NnetError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(NnetError::EmptyDataset("training set"));
    }
    let mut network = Network::init(net.clone(), config.seed)?;
    let mut velocity = network.params.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, NetworkParams)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let images = train_set.images.select(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.labels[i]).collect();
            let (logits, cache) = network.forward(&images).map_err(|e| match e {
                NnetError::NonFinite(_) => NnetError::Diverged {
                    epoch,
                    batch,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            let (batch_loss, batch_correct) = score(&logits, &labels);
            if !batch_loss.is_finite() {
                return Err(NnetError::Diverged {
                    epoch,
                    batch,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss * idx.len() as f64;
            correct += batch_correct;

            let grads = network.backward(&cache, &labels)?;
            velocity.scale(config.momentum);
            velocity.add_scaled(&grads, -config.learning_rate);
            network.params.add_scaled(&velocity, 1.0);
        }
        if !network.params.is_finite() {
            return Err(NnetError::Diverged {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
                loss: f64::NAN,
            });
        }
        let n = train_set.len() as f64;
        let (val_loss, val_accuracy) = evaluate(&network, val_set);
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss,
            val_accuracy,
        });

        let metric = if val_set.is_empty() { epoch as f64 } else { val_accuracy };
        if best.as_ref().is_none_or(|(m, _, _)| metric > *m) {
            best = Some((metric, epoch, network.params.clone()));
        }
    }

    let best_epoch = best.as_ref().map(|(_, e, _)| *e);
    if let Some((_, _, params)) = best {
        network.params = params;
    }
    Ok(TrainOutcome {
        network,
        history,
        best_epoch,
    })
}

/// Mean loss and number of correct argmax predictions for a batch of logits.
fn score(logits: &Tensor, labels: &[usize]) -> (f64, usize) {
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, &label) in logits.data().chunks_exact(logits.shape()[1]).zip(labels) {
        let p = softmax_row(row);
        loss -= p[label].max(LOG_FLOOR).ln();
        if argmax(&p) == label {
            correct += 1;
        }
    }
    (loss / labels.len().max(1) as f64, correct)
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean loss and accuracy over a dataset, one sample at a time.
pub(crate) fn evaluate(network: &Network, data: &Dataset) -> (f64, f64) {
    if data.is_empty() {
        return (0.0, 0.0);
    }
    let mut loss = 0.0;
    let mut correct = 0;
    for (i, &label) in data.labels.iter().enumerate() {
        let logits = network.forward_sample(data.images.row(i)).logits;
        let p = softmax_row(&logits);
        loss -= p[label].max(LOG_FLOOR).ln();
        if argmax(&p) == label {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    (loss / n, correct as f64 / n)
}
