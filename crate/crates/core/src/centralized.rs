//! Centralized (non-federated) training of the same architecture on a
//! stratified 70/15/15 split, used as a sanity reference and by the PCA
//! export. Early stopping tracks validation accuracy.

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::federated::{client_update, Strategy, TrainingHyper};
use crate::losses::DistillConfig;
use crate::metrics::{accuracy_from_preds, predictions};
use crate::nn::{init_params, CnnParams, NUM_CLASSES};
use crate::seeding::{self, purpose};

#[derive(Debug, Clone)]
pub struct CentralizedConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
}

impl Default for CentralizedConfig {
    fn default() -> Self {
        CentralizedConfig {
            max_epochs: 20,
            batch_size: 32,
            eta: 0.01,
            dropout: 0.5,
            seed: 17,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CentralizedOutcome {
    pub params: CnnParams,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Stratified 70/15/15 split in shuffled per-class order.
pub fn stratified_split(pool: &Dataset, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if pool.is_empty() {
        return Err(Error::Config("empty pool".into()));
    }
    let mut rng = seeding::rng_for(seed, &[purpose::CENTRAL]);
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, e) in pool.examples().iter().enumerate() {
        by_class[e.label].push(i);
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for list in by_class.iter_mut() {
        list.shuffle(&mut rng);
        let n = list.len();
        let n_val = (n as f64 * 0.15).floor() as usize;
        let n_test = n_val;
        let n_train = n - n_val - n_test;
        for (pos, &i) in list.iter().enumerate() {
            let e = pool.get(i).clone();
            if pos < n_train {
                train.push(e);
            } else if pos < n_train + n_val {
                val.push(e);
            } else {
                test.push(e);
            }
        }
    }
    Ok((Dataset::new(train), Dataset::new(val), Dataset::new(test)))
}

fn whole_accuracy(params: &CnnParams, ds: &Dataset) -> Result<f64> {
    let preds = predictions(params, ds)?;
    accuracy_from_preds(&preds, ds, &(0..NUM_CLASSES).collect())
}

/// Mini-batch SGD on the train split with per-epoch validation; returns the
/// parameters of the best validation epoch and their test accuracy.
pub fn centralized_train(pool: &Dataset, cfg: &CentralizedConfig) -> Result<CentralizedOutcome> {
    let (train, val, test) = stratified_split(pool, cfg.seed)?;
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::Config(
            "pool too small for a 70/15/15 split with all three parts non-empty".into(),
        ));
    }
    let channels = train.signal_channels().unwrap();
    let mut params = init_params(
        seeding::derive_seed(cfg.seed, &[purpose::CENTRAL, purpose::INIT]),
        channels,
    );

    let epoch_hyper = |_epoch: usize| TrainingHyper {
        epochs: 1,
        batch_size: cfg.batch_size,
        eta: cfg.eta,
        dropout: cfg.dropout,
        distill: DistillConfig {
            temperature: 1.0,
            alpha: 1.0,
            beta: 0.0,
        },
        master_seed: cfg.seed,
    };

    let mut best_params = params.clone();
    let mut best_val = whole_accuracy(&params, &val)?;
    let mut best_epoch = 0;
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        // one epoch of fine-tuning; the epoch number seeds shuffle/dropout
        params = client_update(
            0,
            epoch,
            &params,
            &params,
            &train,
            Strategy::FineTune,
            &epoch_hyper(epoch),
        )?;
        let val_acc = whole_accuracy(&params, &val)?;
        if val_acc > best_val {
            best_val = val_acc;
            best_params = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let test_accuracy = whole_accuracy(&best_params, &test)?;
    Ok(CentralizedOutcome {
        params: best_params,
        best_epoch,
        val_accuracy: best_val,
        test_accuracy,
    })
}
