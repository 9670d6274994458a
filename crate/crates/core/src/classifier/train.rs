use rand::seq::SliceRandom;
use rand::Rng as _;

use super::config::ClassifierConfig;
use super::dataset::LabeledTweetSet;
use super::encoder::CharEncoder;
use super::model::Classifier;
use super::network::{Dims, Dropout, Network, Params};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvBuffer};
use crate::rng;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (1-based).
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn best_accuracy(&self) -> f64 {
        self.epochs
            .get(self.best_epoch.wrapping_sub(1))
            .map_or(0.0, |r| r.val_accuracy)
    }

    pub fn to_csv(&self, provenance: Option<&str>) -> Result<Vec<u8>> {
        let mut csv = CsvBuffer::new(provenance, &["epoch", "train_loss", "val_accuracy"])?;
        for r in &self.epochs {
            csv.row([r.epoch.to_string(), fmt_f64(r.train_loss), fmt_f64(r.val_accuracy)])?;
        }
        csv.into_bytes()
    }
}

/// Encoded example: the token prefix the network reads plus its real length.
pub(crate) struct Example {
    tokens: Vec<usize>,
    len: usize,
    label: usize,
}

pub(crate) fn encode_examples(
    set: &LabeledTweetSet,
    encoder: &CharEncoder,
    labels: &[String],
    width: usize,
) -> Result<Vec<Example>> {
    set.items
        .iter()
        .map(|item| {
            let label = labels.iter().position(|l| *l == item.label).ok_or_else(|| {
                Error::invalid(format!("label {} is not a catalog party", item.label))
            })?;
            let (mut tokens, len) = encoder.encode_with_len(&item.tweet.text);
            tokens.truncate((len.max(1) + width - 1).min(encoder.max_len()));
            Ok(Example { tokens, len, label })
        })
        .collect()
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
    lr: f32,
}

impl Adam {
    const BETA1: f32 = 0.9;
    const BETA2: f32 = 0.999;
    const EPS: f32 = 1e-7;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: lr as f32,
        }
    }

    fn step(&mut self, params: &mut Params<f32>, grads: &Params<f32>) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
            for (w, dw) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * dw;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * dw * dw;
                *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
                k += 1;
            }
        }
    }
}

/// Output-layer columns are drawn from per-label seeds, so training with a
/// permuted label order permutes the model instead of changing it.
fn init_head(params: &mut Params<f32>, labels: &[String], seed: u64) {
    let rows = params.out_w.nrows();
    let limit = (6.0 / (rows + labels.len()) as f64).sqrt();
    for (j, label) in labels.iter().enumerate() {
        let mut r = rng::seeded(rng::derive_seed(seed, &format!("head/{label}")));
        for i in 0..rows {
            params.out_w[[i, j]] = r.random_range(-limit..limit) as f32;
        }
    }
}

fn accuracy(net: &Network<f32>, data: &[Example]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .iter()
        .filter(|ex| {
            let p = net.predict(&ex.tokens, ex.len);
            argmax(p.as_slice().unwrap()) == ex.label
        })
        .count();
    correct as f64 / data.len() as f64
}

pub(crate) fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Trains a classifier over the party `labels` (catalog order).
///
/// Mini-batch Adam on softmax cross-entropy. After every epoch the validation
/// accuracy is measured; training stops after `patience` epochs without
/// improvement and the best weights are kept.
pub fn train(
    set: &LabeledTweetSet,
    encoder: &CharEncoder,
    config: &ClassifierConfig,
    validation: &LabeledTweetSet,
    labels: &[String],
) -> Result<(Classifier, TrainingLog)> {
    config.validate()?;
    if set.label_counts().len() < 2 {
        return Err(Error::Training("training set needs at least two classes".into()));
    }
    let train_data = encode_examples(set, encoder, labels, config.conv_width)?;
    let val_data = encode_examples(validation, encoder, labels, config.conv_width)?;
    let dims: Dims = config.dims(encoder.size(), labels.len(), encoder.max_len());
    let mut net = Network::<f32>::init(dims, rng::derive_seed(config.seed, "init"));
    init_head(&mut net.params, labels, config.seed);
    let mut adam = Adam::new(net.params.n_params(), config.learning_rate);
    let mut shuffle_rng = rng::seeded(rng::derive_seed(config.seed, "shuffle"));
    let mut dropout_rng = rng::seeded(rng::derive_seed(config.seed, "dropout"));

    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, Params<f32>)> = None;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total_loss = 0.0f64;
        for batch in order.chunks(config.batch_size) {
            let mut grads = net.params.zeros_like();
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                let ex = &train_data[i];
                let cache = net.forward(
                    &ex.tokens,
                    ex.len,
                    Some(Dropout {
                        rate: config.dropout,
                        rng: &mut dropout_rng,
                    }),
                );
                total_loss += net.backward(&cache, ex.label, scale, &mut grads) as f64;
            }
            if !total_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss or gradient in epoch {epoch} (accumulated loss {total_loss})"
                )));
            }
            adam.step(&mut net.params, &grads);
        }
        let train_loss = total_loss / train_data.len().max(1) as f64;
        let val_accuracy = accuracy(&net, &val_data);
        log::info!("epoch {epoch}: loss {train_loss:.4}, validation accuracy {val_accuracy:.4}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(b, _)| val_accuracy > *b) {
            best = Some((val_accuracy, net.params.clone()));
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        net.params = params;
    }
    Ok((
        Classifier::new(labels.to_vec(), encoder.clone(), config.clone(), net),
        log,
    ))
}

/// Trains C' from scratch on the union of the base and enrichment sets.
pub fn retrain_enriched(
    base: &LabeledTweetSet,
    enrichment: &LabeledTweetSet,
    encoder: &CharEncoder,
    config: &ClassifierConfig,
    validation: &LabeledTweetSet,
    labels: &[String],
) -> Result<(Classifier, TrainingLog)> {
    train(&base.union(enrichment), encoder, config, validation, labels)
}
