use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalOptions};
use super::{HarnessError, TrainConfig, TrainedModel};
use crate::corpus::{build_vocab, split_kfold, ProblemInstance};
use crate::decoder::{Model, ModelConfig};
use crate::nnmath::{adam_step, AdamConfig, AdamState, Gradients, Graph, TensorError};

/// Returned by the per-epoch observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of `NLL + λ·SSAR` over training instances.
    pub mean_loss: f64,
    pub mean_nll: f64,
    /// Mean SSAR term (before weighting); absent when λ = 0.
    pub mean_ssar: Option<f64>,
    pub min_ssar: Option<f64>,
    pub ssar_finite: bool,
    pub val_accuracy: Option<f64>,
    pub skipped_updates: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation accuracy (the last ones without a validation split).
    pub best: TrainedModel,
    pub last: TrainedModel,
    pub history: Vec<EpochReport>,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    /// Instances left out because their gold tree does not fit the target vocabulary.
    pub rejected: Vec<String>,
}

fn mix(seed: u64, epoch: usize, index: usize) -> u64 {
    // splitmix64 finalizer over the combined key.
    let mut z = seed ^ ((epoch as u64) << 40) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains with teacher forcing and the halving schedule; `observer` sees
/// every epoch and may stop the run early.
pub fn train(
    config: &TrainConfig,
    instances: &[ProblemInstance],
    observer: &mut dyn FnMut(&EpochReport, &TrainedModel) -> Control,
) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    let constants = config.constants()?;
    let mut rejected = Vec::new();
    let usable: Vec<&ProblemInstance> = instances
        .iter()
        .filter(|p| {
            let ok = p.validate(&constants).is_ok() && !p.tokens.is_empty();
            if !ok {
                rejected.push(p.id.clone());
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    let mut order: Vec<usize> = (0..usable.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_val = (usable.len() as f64 * config.val_fraction).floor() as usize;
    let n_val = n_val.min(usable.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut val_idx = val_idx.to_vec();
    val_idx.sort_unstable();
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let train_set: Vec<ProblemInstance> = train_idx.iter().map(|&i| usable[i].clone()).collect();
    let val_set: Vec<ProblemInstance> = val_idx.iter().map(|&i| usable[i].clone()).collect();

    let vocab = build_vocab(&train_set, config.min_count);
    let model_config = ModelConfig {
        vocab_size: vocab.len(),
        embed: config.embed,
        hidden: config.hidden,
        constants: constants.len(),
        encoder_layers: 2,
        separate_ssar_attention: config.separate_ssar_attention,
    };
    let mut current = TrainedModel {
        model: Model::new(model_config, config.seed),
        vocab,
        constants,
        config: config.clone(),
        epoch: 0,
    };
    let token_ids: Vec<Vec<usize>> = train_set.iter().map(|p| current.vocab.encode(&p.tokens)).collect();
    let mut adam = AdamState::new(
        &current.model.store,
        AdamConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut grads = Gradients::zeros_like(&current.model.store);
    let mut log = match &config.metric_log {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Some(BufWriter::new(File::create(path)?))
        }
        None => None,
    };
    let select = EvalOptions {
        beam: config.selection_beam,
        ..EvalOptions::from_config(config)
    };

    let mut best: Option<(f64, TrainedModel)> = None;
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.learning_rate(epoch);
        adam.set_lr(lr);
        let mut epoch_order: Vec<usize> = (0..train_set.len()).collect();
        epoch_order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(config.seed, epoch, usize::MAX)));
        let (mut loss_sum, mut nll_sum, mut ssar_sum) = (0.0, 0.0, 0.0);
        let mut ssar_min: Option<f64> = None;
        let mut ssar_finite = true;
        let mut skipped_updates = 0;
        for batch in epoch_order.chunks(config.batch_size) {
            grads.clear();
            for &i in batch {
                let p = &train_set[i];
                let model = &current.model;
                let mut g = Graph::training(&model.store, mix(config.seed, epoch, i));
                let problem = model.prepare(&mut g, p, &token_ids[i], &current.constants, config.dropout)?;
                let loss = model.training_loss(&mut g, &problem, &p.gold_prefix, config.lambda)?;
                let total = g.scalar(loss.total) as f64;
                if !total.is_finite() {
                    return Err(HarnessError::NonFiniteLoss {
                        epoch,
                        id: p.id.clone(),
                    });
                }
                loss_sum += total;
                nll_sum += g.scalar(loss.nll) as f64;
                if let Some(s) = loss.ssar {
                    let s = g.scalar(s) as f64;
                    ssar_finite &= s.is_finite() && s >= 0.0;
                    ssar_sum += s;
                    ssar_min = Some(ssar_min.map_or(s, |m| m.min(s)));
                }
                g.backward(loss.total, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f32);
            match adam_step(&mut current.model.store, &grads, &mut adam) {
                Ok(()) => {}
                Err(TensorError::NonFiniteGradient) => skipped_updates += 1,
                Err(e) => return Err(e.into()),
            }
        }
        current.epoch = epoch + 1;
        let n = train_set.len() as f64;
        let last_epoch = epoch + 1 == config.epochs;
        let val_accuracy = (!val_set.is_empty() && ((epoch + 1) % config.eval_every == 0 || last_epoch))
            .then(|| evaluate(&current, &val_set, &select).accuracy);
        if let Some(acc) = val_accuracy {
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, current.clone()));
            }
        }
        let report = EpochReport {
            epoch,
            lr,
            mean_loss: loss_sum / n,
            mean_nll: nll_sum / n,
            mean_ssar: (config.lambda > 0.0).then_some(ssar_sum / n),
            min_ssar: ssar_min,
            ssar_finite,
            val_accuracy,
            skipped_updates,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let Some(w) = log.as_mut() {
            serde_json::to_writer(&mut *w, &report).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        let control = observer(&report, &current);
        history.push(report);
        if control == Control::Stop {
            break;
        }
    }
    let best = best.map(|(_, m)| m).unwrap_or_else(|| current.clone());
    if let Some(path) = &config.checkpoint {
        best.save(path)?;
    }
    Ok(TrainOutcome {
        best,
        last: current,
        history,
        train_ids: train_set.iter().map(|p| p.id.clone()).collect(),
        validation_ids: val_set.iter().map(|p| p.id.clone()).collect(),
        rejected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_ids: Vec<String>,
    pub accuracy: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub mean: f64,
}

/// Trains one model per fold complement and scores it on the fold.
pub fn crossvalidate(config: &TrainConfig, instances: &[ProblemInstance], k: usize) -> Result<CvReport, HarnessError> {
    if instances.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    let mut folds = Vec::with_capacity(k);
    for (fold, (train_idx, test_idx)) in split_kfold(instances.len(), k, config.seed)?.into_iter().enumerate() {
        let train_part: Vec<ProblemInstance> = train_idx.iter().map(|&i| instances[i].clone()).collect();
        let test_part: Vec<ProblemInstance> = test_idx.iter().map(|&i| instances[i].clone()).collect();
        let mut fold_config = config.clone();
        fold_config.checkpoint = None;
        fold_config.metric_log = config
            .metric_log
            .as_ref()
            .map(|p| p.with_extension(format!("fold{fold}.jsonl")));
        let outcome = train(&fold_config, &train_part, &mut |_, _| Control::Continue)?;
        let report = evaluate(&outcome.best, &test_part, &EvalOptions::from_config(config));
        folds.push(FoldReport {
            fold,
            train_size: train_part.len(),
            test_ids: test_part.iter().map(|p| p.id.clone()).collect(),
            accuracy: report.accuracy,
            epochs_run: outcome.history.len(),
        });
    }
    let mean = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    Ok(CvReport { folds, mean })
}
