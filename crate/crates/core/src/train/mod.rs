//! Training pruned, binarized networks at toy scale.
//!
//! Forward and backward passes use the sign of the latent weights; the
//! gradient with respect to the sign weights updates the latent weights
//! directly (straight-through), which are then clipped to `[-1, 1]`. Removed
//! connections are never read and never updated.

mod dataset;
mod net;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;
use crate::mask::MaskScheme;

pub use dataset::{Pattern, ToyDataset};
pub use net::{ConvLayer, DenseLayer, Gradients, ToyLayer, ToyNetwork, ToySpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Seeds the shuffling; initialisation is seeded by [`ToyNetwork::build`].
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.05,
            batch_size: 8,
            seed: 0,
        }
    }
}

/// One point of a training curve; epoch 0 is the untrained network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Mean loss and accuracy over a dataset.
pub fn evaluate(net: &ToyNetwork, data: &ToyDataset) -> Result<(f64, f64), Error> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty dataset".into()));
    }
    let images: Vec<_> = data.images.iter().collect();
    let g = net.forward_backward(&images, &data.labels)?;
    Ok((g.loss, g.correct as f64 / data.len() as f64))
}

/// Minibatch SGD. Returns `epochs + 1` points; a non-finite loss stops
/// training with [`Error::Diverged`].
pub fn train(net: &mut ToyNetwork, train: &ToyDataset, test: &ToyDataset, cfg: &TrainConfig) -> Result<Vec<EpochStats>, Error> {
    if cfg.batch_size == 0 || !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "need batch_size >= 1 and a positive finite lr, got {} and {}",
            cfg.batch_size, cfg.lr
        )));
    }
    let point = |net: &ToyNetwork, epoch: usize| -> Result<EpochStats, Error> {
        let (loss, train_acc) = evaluate(net, train).map_err(|e| at_epoch(e, epoch))?;
        let (_, test_acc) = evaluate(net, test).map_err(|e| at_epoch(e, epoch))?;
        Ok(EpochStats {
            epoch,
            loss,
            train_acc,
            test_acc,
        })
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = vec![point(net, 0)?];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let images: Vec<_> = batch.iter().map(|&i| &train.images[i]).collect();
            let labels: Vec<_> = batch.iter().map(|&i| train.labels[i]).collect();
            let grads = net.forward_backward(&images, &labels).map_err(|e| at_epoch(e, epoch))?;
            net.apply(&grads, cfg.lr)?;
        }
        curve.push(point(net, epoch)?);
    }
    Ok(curve)
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Diverged { loss, .. } => Error::Diverged { epoch, loss },
        e => e,
    }
}

pub fn curve_csv(curve: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,train_acc,test_acc\n");
    for p in curve {
        s.push_str(&format!("{},{:.6},{:.4},{:.4}\n", p.epoch, p.loss, p.train_acc, p.test_acc));
    }
    s
}

/// Final accuracies for one number of removed connections per slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub removed: usize,
    /// Final test accuracy per seed, in seed order.
    pub test_acc: Vec<f64>,
    pub mean_test_acc: f64,
}

/// Trains `spec` once per `(m, seed)` with `m` random connections removed per
/// slice. Network seed, mask seed and shuffle seed are all `seed`.
pub fn sweep_random_removal(
    spec: &ToySpec,
    train_set: &ToyDataset,
    test_set: &ToyDataset,
    removed: &[usize],
    seeds: &[u64],
    cfg: &TrainConfig,
) -> Result<Vec<SweepRow>, Error> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one seed".into()));
    }
    removed
        .iter()
        .map(|&m| {
            let test_acc = seeds
                .iter()
                .map(|&seed| {
                    let spec = ToySpec {
                        scheme: MaskScheme::Random { removed: m, seed },
                        ..spec.clone()
                    };
                    let mut net = ToyNetwork::build(&spec, seed)?;
                    let curve = train(&mut net, train_set, test_set, &TrainConfig { seed, ..*cfg })?;
                    Ok(curve.last().expect("epoch 0 is always present").test_acc)
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let mean_test_acc = test_acc.iter().sum::<f64>() / test_acc.len() as f64;
            Ok(SweepRow {
                removed: m,
                test_acc,
                mean_test_acc,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("removed,mean_test_acc,test_acc\n");
    for r in rows {
        let per_seed: Vec<_> = r.test_acc.iter().map(|a| format!("{a:.4}")).collect();
        s.push_str(&format!("{},{:.4},{}\n", r.removed, r.mean_test_acc, per_seed.join(";")));
    }
    s
}
