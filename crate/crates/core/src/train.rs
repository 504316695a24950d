//! Mini-batch SGD on the empirical LW risk with iterative weight refresh.
//!
//! One epoch shuffles the training rows, takes a heavy-ball momentum step per
//! mini-batch (`v ← μ v + ∇`, `θ ← θ − ρ_t v`, weight decay on weight
//! matrices only) and then recomputes the weighting parameters from the
//! updated scores. The learning rate halves every `lr_halving_period`
//! epochs.
//!
//! Per-instance gradients are computed in parallel over fixed-size chunks of
//! the batch and summed in chunk order, so results do not depend on the
//! number of worker threads.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::labelset::PartialLabelSet;
use crate::losses::{lw_loss_and_gradient, LwConfig};
use crate::model::{argmax, Gradients, Network, Workspace};
use crate::rng::{self, streams};
use crate::scalar::{NeumaierSum, Scalar};
use crate::weights::WeightState;
use crate::{Error, Result};

/// Instances per parallel work unit inside a mini-batch.
const CHUNK: usize = 16;

/// When the weighting parameters are recomputed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WeightRefresh {
    /// Once per epoch, over the whole training set, after the last step.
    #[default]
    PerEpoch,
    /// After every step, for the rows of that mini-batch.
    PerBatch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig<T> {
    pub learning_rate: T,
    pub momentum: T,
    pub weight_decay: T,
    pub batch_size: usize,
    pub epochs: usize,
    /// Halve the learning rate every this many epochs; 0 disables halving.
    pub lr_halving_period: usize,
    pub seed: u64,
    pub weight_refresh: WeightRefresh,
}

impl<T: Scalar> Default for TrainerConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::lit(0.01),
            momentum: T::lit(0.9),
            weight_decay: T::lit(1e-4),
            batch_size: 256,
            epochs: 30,
            lr_halving_period: 50,
            seed: 0,
            weight_refresh: WeightRefresh::PerEpoch,
        }
    }
}

impl<T: Scalar> TrainerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > T::zero()) {
            return Err(Error::invalid(format!("learning_rate = {} must be positive", self.learning_rate)));
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(Error::invalid(format!("momentum = {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= T::zero()) {
            return Err(Error::invalid(format!("weight_decay = {} must be ≥ 0", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> T {
        if self.lr_halving_period == 0 {
            return self.learning_rate;
        }
        let halvings = epoch.saturating_sub(1) / self.lr_halving_period;
        self.learning_rate * T::lit(0.5f64.powi(halvings.min(1074) as i32))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean LW loss over the epoch's mini-batch evaluations.
    pub mean_risk: f64,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub network: Network<T>,
    pub weights: WeightState<T>,
    pub metrics: Vec<EpochMetrics>,
    /// Training-row indices of the first mini-batch of epoch 1.
    pub first_batch: Vec<usize>,
}

/// Heavy-ball momentum. Weight decay is added to the gradient of weight
/// matrices, not biases.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    velocity: Gradients<T>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(net: &Network<T>) -> Self {
        Self {
            velocity: Gradients::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut Network<T>, grad: &Gradients<T>, lr: T, momentum: T, weight_decay: T) {
        for ((layer, (gw, gb)), (vw, vb)) in net
            .layers_mut()
            .iter_mut()
            .zip(&grad.layers)
            .zip(&mut self.velocity.layers)
        {
            for ((p, g), v) in layer.weight.iter_mut().zip(gw).zip(vw.iter_mut()) {
                *v = momentum * *v + *g + weight_decay * *p;
                *p -= lr * *v;
            }
            for ((p, g), v) in layer.bias.iter_mut().zip(gb).zip(vb.iter_mut()) {
                *v = momentum * *v + *g;
                *p -= lr * *v;
            }
        }
    }
}

/// Trains `network` on the candidate sets of `train`.
pub fn train<T: Scalar>(
    network: Network<T>,
    train: &Dataset<T>,
    val: Option<&Dataset<T>>,
    lw: &LwConfig<T>,
    cfg: &TrainerConfig<T>,
) -> Result<TrainOutcome<T>> {
    train_observed(network, train, val, lw, cfg, |_, _| {})
}

/// [`train`] with a callback after every epoch's weight refresh.
pub fn train_observed<T: Scalar>(
    mut network: Network<T>,
    train: &Dataset<T>,
    val: Option<&Dataset<T>>,
    lw: &LwConfig<T>,
    cfg: &TrainerConfig<T>,
    mut on_epoch: impl FnMut(&EpochMetrics, &WeightState<T>),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    lw.validate()?;
    if !lw.surrogate.is_differentiable() {
        return Err(Error::UnsupportedLoss(lw.surrogate.name()));
    }
    let masks = train
        .partial_masks()
        .ok_or_else(|| Error::invalid("training set has no candidate sets"))?;
    check_shape(&network, train)?;
    if let Some(v) = val {
        check_shape(&network, v)?;
    }
    let k = train.num_classes();
    let mut weights = WeightState::init(masks.to_vec(), k)?;
    let mut sgd = Sgd::new(&network);
    let mut shuffle_rng = rng::stream(cfg.seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut first_batch = Vec::new();

    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut shuffle_rng);
        if epoch == 1 {
            first_batch = order.iter().take(cfg.batch_size).copied().collect();
        }
        let mut risk = NeumaierSum::<f64>::new();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (mut grad, loss) = batch_gradient(&network, train, masks, &weights, lw, batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    lr: lr.as_f64(),
                });
            }
            risk += loss;
            grad.scale(T::one() / T::lit(batch.len() as f64));
            sgd.step(&mut network, &grad, lr, cfg.momentum, cfg.weight_decay);
            if cfg.weight_refresh == WeightRefresh::PerBatch {
                for &i in batch {
                    let g = network.forward(train.row(i))?;
                    weights.update_row(i, &g)?;
                }
            }
        }
        let scores = score_matrix(&network, train)?;
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
                lr: lr.as_f64(),
            });
        }
        if cfg.weight_refresh == WeightRefresh::PerEpoch {
            weights.update(&scores)?;
        }
        let row = EpochMetrics {
            epoch,
            learning_rate: lr.as_f64(),
            mean_risk: if train.is_empty() { 0.0 } else { risk.value() / train.len() as f64 },
            train_accuracy: train.true_labels().map(|y| accuracy_from_scores(&scores, k, y)),
            val_accuracy: match val {
                Some(v) => accuracy(&network, v)?,
                None => None,
            },
        };
        on_epoch(&row, &weights);
        metrics.push(row);
    }
    Ok(TrainOutcome {
        network,
        weights,
        metrics,
        first_batch,
    })
}

fn check_shape<T: Scalar>(net: &Network<T>, ds: &Dataset<T>) -> Result<()> {
    if net.input_dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            what: "network input width vs feature dimension",
            expected: ds.dim(),
            actual: net.input_dim(),
        });
    }
    if net.num_classes() != ds.num_classes() {
        return Err(Error::DimensionMismatch {
            what: "network output width vs class count",
            expected: ds.num_classes(),
            actual: net.num_classes(),
        });
    }
    Ok(())
}

/// Summed (not averaged) gradient and loss over `batch`.
fn batch_gradient<T: Scalar>(
    net: &Network<T>,
    ds: &Dataset<T>,
    masks: &[PartialLabelSet],
    weights: &WeightState<T>,
    lw: &LwConfig<T>,
    batch: &[usize],
) -> Result<(Gradients<T>, f64)> {
    let parts: Vec<Result<(Gradients<T>, f64)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ws = Workspace::new();
            let mut grad = Gradients::zeros_like(net);
            let mut upstream = vec![T::zero(); net.num_classes()];
            let mut loss = 0.0;
            for &i in chunk {
                let x = ds.row(i);
                let scores = net.forward_into(x, &mut ws)?.to_vec();
                if scores.iter().any(|v| !v.is_finite()) {
                    return Ok((grad, f64::NAN));
                }
                loss += lw_loss_and_gradient(&scores, &masks[i], weights.row(i), lw, &mut upstream)?.as_f64();
                net.accumulate_gradient(x, &mut ws, &upstream, &mut grad)?;
            }
            Ok((grad, loss))
        })
        .collect();
    let mut total = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for part in parts {
        let (g, l) = part?;
        total.add_assign(&g);
        loss += l;
    }
    Ok((total, loss))
}

/// Row-major `n × K` scores for every row of `ds`.
pub fn score_matrix<T: Scalar>(net: &Network<T>, ds: &Dataset<T>) -> Result<Vec<T>> {
    let rows: Vec<Result<Vec<T>>> = (0..ds.len()).into_par_iter().map(|i| net.forward(ds.row(i))).collect();
    let mut out = Vec::with_capacity(ds.len() * net.num_classes());
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

pub fn predictions<T: Scalar>(net: &Network<T>, ds: &Dataset<T>) -> Result<Vec<usize>> {
    let k = net.num_classes();
    Ok(score_matrix(net, ds)?.chunks(k).map(argmax).collect())
}

fn accuracy_from_scores<T: Scalar>(scores: &[T], k: usize, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = scores.chunks(k).zip(labels).filter(|(g, &y)| argmax(g) == y).count();
    hits as f64 / labels.len() as f64
}

/// Fraction of rows whose prediction equals the true label; `None` without
/// true labels.
pub fn accuracy<T: Scalar>(net: &Network<T>, ds: &Dataset<T>) -> Result<Option<f64>> {
    let Some(labels) = ds.true_labels() else {
        return Ok(None);
    };
    Ok(Some(accuracy_from_scores(&score_matrix(net, ds)?, net.num_classes(), labels)))
}

/// Empirical multi-class 0-1 risk, `mean 1{argmax g(x) ≠ y}`.
pub fn zero_one_risk<T: Scalar>(net: &Network<T>, ds: &Dataset<T>) -> Result<Option<f64>> {
    let Some(labels) = ds.true_labels() else {
        return Ok(None);
    };
    let pred = predictions(net, ds)?;
    let wrong = pred.iter().zip(labels).filter(|(p, y)| p != y).count();
    Ok(Some(if labels.is_empty() { 0.0 } else { wrong as f64 / labels.len() as f64 }))
}

/// `counts[true][predicted]`.
pub fn confusion<T: Scalar>(net: &Network<T>, ds: &Dataset<T>) -> Result<Vec<Vec<usize>>> {
    let labels = ds
        .true_labels()
        .ok_or_else(|| Error::invalid("confusion matrix needs true labels"))?;
    let k = ds.num_classes().max(net.num_classes());
    let mut counts = vec![vec![0usize; k]; k];
    for (p, &y) in predictions(net, ds)?.into_iter().zip(labels) {
        counts[y][p] += 1;
    }
    Ok(counts)
}
