//! Training loop, evaluation and the ablation matrix.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tensorcore::{clip_grad_norm, Adam, Tensor};

use crate::config::{Switch, TrainConfig};
use crate::corpus::{ArgumentSpan, Dataset, Frame};
use crate::error::{CsrlError, Result};
use crate::metrics::{score, Metrics, TupleCounts};
use crate::model::{LossValues, Model, Prepared};
use crate::tags::LabelSet;
use crate::vocab::Vocab;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevScores {
    pub f1_all: f64,
    pub f1_intra: f64,
    pub f1_cross: f64,
}

impl From<&Metrics> for DevScores {
    fn from(m: &Metrics) -> Self {
        DevScores {
            f1_all: m.all.f1,
            f1_intra: m.intra.f1,
            f1_cross: m.cross.f1,
        }
    }
}

/// One line of the training log. Loss components are per-instance means
/// over the epoch, before weighting; `l_total` is weighted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_srl: f64,
    pub l_intra: f64,
    pub l_ut: f64,
    pub l_total: f64,
    pub dev: Option<DevScores>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best dev epoch, or of the last epoch without dev data.
    pub model: Model,
    pub log: Vec<EpochLog>,
    /// 1-based; 0 when no epoch ran.
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub counts: TupleCounts,
    pub predictions: Vec<Vec<ArgumentSpan>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub switch: Switch,
    pub baseline: Metrics,
    pub ablated: Metrics,
}

/// Fresh model sized for `train`: vocabulary from its tokens, labels from
/// its role inventory, relation parameters for the larger of the configured
/// and observed speaker counts.
pub fn build_model(train: &Dataset, cfg: &TrainConfig) -> Result<Model> {
    let mut model_cfg = cfg.model.clone();
    let observed = train
        .instances
        .iter()
        .map(|i| i.conversation.num_speakers)
        .max()
        .unwrap_or(1);
    model_cfg.num_speakers = model_cfg.num_speakers.max(observed);
    Model::new(
        model_cfg,
        Vocab::build(train),
        LabelSet::new(&train.roles),
        cfg.ablations(),
        cfg.seed,
    )
}

fn prepare_all(model: &Model, data: &Dataset) -> Result<Vec<Prepared>> {
    data.instances
        .par_iter()
        .map(|i| model.prepare(i))
        .collect()
}

fn check_finite(epoch: usize, loss: &LossValues, grads: &[Tensor]) -> Result<()> {
    if !loss.is_finite() {
        return Err(CsrlError::Divergence {
            epoch,
            detail: format!("non-finite loss {loss:?}"),
        });
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(CsrlError::Divergence {
            epoch,
            detail: format!("non-finite gradient in parameter slot {bad}"),
        });
    }
    Ok(())
}

/// One pass over `prepared` in the given order. Returns summed loss values.
fn run_epoch(
    model: &mut Model,
    prepared: &[Prepared],
    order: &[usize],
    cfg: &TrainConfig,
    adam: &mut Adam,
    epoch: usize,
) -> Result<LossValues> {
    let weights = cfg.effective_weights();
    let mut epoch_loss = LossValues::default();
    for batch in order.chunks(cfg.batch_size) {
        let frozen: &Model = model;
        let results: Vec<(LossValues, Vec<Tensor>)> = batch
            .par_iter()
            .map(|&i| frozen.gradients(&prepared[i], &weights, cfg.reduction))
            .collect::<Result<_>>()?;
        let mut grads: Vec<Tensor> = Vec::new();
        let mut batch_loss = LossValues::default();
        for (loss, g) in results {
            check_finite(epoch, &loss, &g)?;
            batch_loss.add(&loss);
            if grads.is_empty() {
                grads = g;
            } else {
                for (acc, item) in grads.iter_mut().zip(&g) {
                    for (a, b) in acc.data_mut().iter_mut().zip(item.data()) {
                        *a += b;
                    }
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        for g in &mut grads {
            g.data_mut().iter_mut().for_each(|v| *v *= inv);
        }
        clip_grad_norm(&mut grads, cfg.clip_norm);
        adam.step(&mut model.params, &grads);
        if !model.params.all_finite() {
            return Err(CsrlError::Divergence {
                epoch,
                detail: "non-finite parameter after update".into(),
            });
        }
        epoch_loss.add(&batch_loss);
    }
    Ok(epoch_loss)
}

/// Trains from a fresh seeded initialization. Deterministic for a fixed
/// config: batch gradients are reduced in instance order.
pub fn train(
    train_set: &Dataset,
    dev: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(CsrlError::EmptyDataset);
    }
    let mut model = build_model(train_set, cfg)?;
    let prepared = prepare_all(&model, train_set)?;
    let mut adam = Adam::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005E_ED0F_DA7A);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let n = prepared.len() as f64;

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, tensorcore::ParamStore)> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let sum = run_epoch(&mut model, &prepared, &order, cfg, &mut adam, epoch)?;
        let dev_scores = match dev {
            Some(d) if !d.is_empty() => Some(DevScores::from(&evaluate(&model, d)?.metrics)),
            _ => None,
        };
        log.push(EpochLog {
            epoch,
            l_srl: sum.srl / n,
            l_intra: sum.intra / n,
            l_ut: sum.ut / n,
            l_total: sum.total / n,
            dev: dev_scores,
        });
        let Some(scores) = dev_scores else { continue };
        let improved = best.as_ref().is_none_or(|(f1, _, _)| scores.f1_all > *f1);
        if improved {
            best = Some((scores.f1_all, epoch, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.target_f1.is_some_and(|t| scores.f1_all >= t) || since_best >= cfg.patience {
            break;
        }
    }
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => log.len(),
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
    })
}

/// Micro-averaged scores of `model` on `data`; predictions are in dataset order.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<Evaluation> {
    let predictions: Vec<Vec<ArgumentSpan>> = data
        .instances
        .par_iter()
        .map(|i| model.predict(i))
        .collect::<Result<_>>()?;
    let gold: Vec<&Frame> = data.instances.iter().map(|i| &i.frame).collect();
    let counts = score(&gold, &predictions);
    Ok(Evaluation {
        metrics: Metrics::from_counts(&counts),
        counts,
        predictions,
    })
}

/// Trains the configured baseline and the same config with `switch` added,
/// from the same seed, and scores both on `test`.
pub fn run_ablation(
    train_set: &Dataset,
    dev: Option<&Dataset>,
    test: &Dataset,
    cfg: &TrainConfig,
    switch: Switch,
) -> Result<AblationReport> {
    let base = train(train_set, dev, cfg)?;
    let ablated = train(train_set, dev, &cfg.clone().with_switch(switch))?;
    Ok(AblationReport {
        switch,
        baseline: evaluate(&base.model, test)?.metrics,
        ablated: evaluate(&ablated.model, test)?.metrics,
    })
}
