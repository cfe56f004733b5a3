use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cnn::{cnn_forward, forward, loss_and_grad, CnnParams, Mode};
use super::{windows_to_tensor, SampleWindow};
use crate::error::{Error, Result};

/// Rows per gradient work unit. Fixed so results do not depend on the
/// number of threads.
const CHUNK: usize = 8;
/// Consecutive batches with no hidden-layer gradient before the layer is
/// checked for death.
const DEAD_STREAK: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub val_fraction: f64,
    /// Training stops once validation accuracy reaches this value.
    pub early_stop_accuracy: f64,
    /// Each epoch draws equally many training windows from both classes
    /// (the majority class is subsampled afresh) and validation is scored
    /// by balanced accuracy.
    pub class_balanced: bool,
    /// Fresh initializations allowed when the hidden layer dies.
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 100,
            val_fraction: 0.2,
            early_stop_accuracy: 0.99,
            class_balanced: true,
            max_restarts: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction must be in (0, 1), got {}", self.val_fraction)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config("learning_rate and epsilon must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest validation accuracy (the
    /// latest such epoch on ties).
    pub params: CnnParams,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    /// Initializations discarded because the hidden layer died.
    pub restarts: usize,
}

pub struct Adam {
    config: TrainConfig,
    m: CnnParams,
    v: CnnParams,
    t: i32,
}

impl Adam {
    pub fn new(config: TrainConfig) -> Self {
        Adam { config, m: CnnParams::zeros(), v: CnnParams::zeros(), t: 0 }
    }

    pub fn step(&mut self, params: &mut CnnParams, grad: &CnnParams) {
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let tensors = params.tensors_mut().into_iter().zip(self.m.tensors_mut()).zip(self.v.tensors_mut());
        for (((p, m), v), g) in tensors.zip(grad.tensors()) {
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                p[i] -= c.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.epsilon);
            }
        }
    }
}

/// Splits segment ids into (train, validation), stratified by label.
fn split_segments(windows: &[SampleWindow], labels: &[u8], config: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut segs: BTreeMap<usize, u8> = BTreeMap::new();
    for (w, &l) in windows.iter().zip(labels) {
        if *segs.entry(w.segment).or_insert(l) != l {
            return Err(Error::invalid(format!("segment {} has windows with both labels", w.segment)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in 0..2u8 {
        let mut ids: Vec<usize> = segs.iter().filter(|(_, l)| **l == class).map(|(s, _)| *s).collect();
        ids.shuffle(&mut rng);
        let n_val = (config.val_fraction * ids.len() as f64).round() as usize;
        let n_val = n_val.min(ids.len().saturating_sub(1));
        val.extend_from_slice(&ids[..n_val]);
        train.extend_from_slice(&ids[n_val..]);
    }
    if val.is_empty() {
        return Err(Error::invalid("validation split is empty; need more training segments"));
    }
    Ok((train, val))
}

pub fn accuracy(probs: &[f64], labels: &[u8]) -> f64 {
    let correct = probs.iter().zip(labels).filter(|(p, l)| u8::from(**p > 0.5) == **l).count();
    correct as f64 / labels.len().max(1) as f64
}

/// Mean of the per-class recalls; a constant predictor scores 0.5.
pub fn balanced_accuracy(probs: &[f64], labels: &[u8]) -> f64 {
    let recall = |class: u8| {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let hit = idx.iter().filter(|&&i| u8::from(probs[i] > 0.5) == class).count();
        (!idx.is_empty()).then(|| hit as f64 / idx.len() as f64)
    };
    match (recall(0), recall(1)) {
        (Some(a), Some(b)) => (a + b) / 2.0,
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 0.0,
    }
}

/// PD probability for each window, eval mode.
pub fn predict_sample_probs(params: &CnnParams, windows: &[SampleWindow]) -> Result<Vec<f64>> {
    let chunks: Vec<Vec<f64>> = windows
        .par_chunks(CHUNK)
        .map(|c| Ok(cnn_forward(params, &windows_to_tensor(c)?)?.into_iter().map(|p| p[1]).collect()))
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

fn batch_gradient(
    params: &CnnParams,
    batch: &[&SampleWindow],
    labels: &[u8],
    seed: u64,
    stream: u64,
) -> Result<(f64, CnnParams)> {
    let n = batch.len() as f64;
    let parts: Vec<(f64, CnnParams, f64)> = batch
        .par_chunks(CHUNK)
        .zip(labels.par_chunks(CHUNK))
        .enumerate()
        .map(|(ci, (ws, ls))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream * 1024 + ci as u64);
            let input = windows_to_tensor(ws.iter().copied())?;
            let (loss, g, _) = loss_and_grad(params, &input, ls, Mode::Train, Some(&mut rng))?;
            Ok((loss, g, ws.len() as f64))
        })
        .collect::<Result<_>>()?;
    let mut total = CnnParams::zeros();
    let mut loss = 0.0;
    for (l, g, m) in &parts {
        total.add_scaled(g, m / n);
        loss += l * m / n;
    }
    Ok((loss, total))
}

/// Adam training with a segment-grouped validation split. Stops once the
/// validation accuracy reaches the configured threshold or after
/// `max_epochs`, returning the best checkpoint seen.
pub fn cnn_train(windows: &[SampleWindow], labels: &[u8], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if windows.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: windows.len(), got: labels.len() });
    }
    let (train_segs, val_segs) = split_segments(windows, labels, config)?;
    let in_set = |set: &[usize], s: usize| set.binary_search(&s).is_ok();
    let (mut train_segs, mut val_segs) = (train_segs, val_segs);
    train_segs.sort_unstable();
    val_segs.sort_unstable();
    let train_idx: Vec<usize> = (0..windows.len()).filter(|&i| in_set(&train_segs, windows[i].segment)).collect();
    let val: Vec<SampleWindow> =
        (0..windows.len()).filter(|&i| in_set(&val_segs, windows[i].segment)).map(|i| windows[i].clone()).collect();
    let val_labels: Vec<u8> =
        (0..windows.len()).filter(|&i| in_set(&val_segs, windows[i].segment)).map(|i| labels[i]).collect();
    let train_classes: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    if !(train_classes.contains(&0) && train_classes.contains(&1)) {
        return Err(Error::invalid("CNN training portion must contain both classes"));
    }

    let set = TrainSet { windows, labels, train_idx: &train_idx, val: &val, val_labels: &val_labels };
    for attempt in 0..=config.max_restarts {
        let init_seed = if attempt == 0 { config.seed } else { restart_seed(config.seed, attempt) };
        let allow_restart = attempt < config.max_restarts;
        if let Some(mut outcome) = train_attempt(&set, config, init_seed, allow_restart)? {
            outcome.restarts = attempt;
            return Ok(outcome);
        }
        log::warn!("hidden layer died (seed {init_seed}); restarting from a new initialization");
    }
    unreachable!("the last attempt never restarts")
}

struct TrainSet<'a> {
    windows: &'a [SampleWindow],
    labels: &'a [u8],
    train_idx: &'a [usize],
    val: &'a [SampleWindow],
    val_labels: &'a [u8],
}

fn restart_seed(seed: u64, attempt: usize) -> u64 {
    seed ^ (attempt as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// True when every hidden unit is zero on every window, leaving only the
/// output bias with a nonzero gradient.
fn hidden_layer_dead(params: &CnnParams, windows: &[SampleWindow]) -> Result<bool> {
    let alive = windows
        .par_chunks(CHUNK)
        .map(|c| {
            let cache = forward(params, &windows_to_tensor(c)?, Mode::Eval, None)?;
            Ok(cache.hidden().data.iter().any(|v| *v > 0.0))
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(!alive.contains(&true))
}

/// One training run from the given initialization; `None` when the hidden
/// layer died and a restart is allowed.
fn train_attempt(set: &TrainSet, config: &TrainConfig, seed: u64, allow_restart: bool) -> Result<Option<TrainOutcome>> {
    let mut params = CnnParams::init(seed);
    let mut adam = Adam::new(*config);
    let by_class: [Vec<usize>; 2] =
        [0, 1].map(|c| set.train_idx.iter().copied().filter(|&i| set.labels[i] == c).collect());
    let per_class = by_class[0].len().min(by_class[1].len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(2);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, CnnParams)> = None;
    let mut stopped_early = false;
    let mut step = 0u64;
    let mut streak = 0;
    for epoch in 1..=config.max_epochs {
        let mut order = if config.class_balanced {
            let mut drawn = Vec::with_capacity(2 * per_class);
            for ids in &by_class {
                drawn.extend(ids.choose_multiple(&mut shuffle_rng, per_class).copied());
            }
            drawn
        } else {
            set.train_idx.to_vec()
        };
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let ws: Vec<&SampleWindow> = batch.iter().map(|&i| &set.windows[i]).collect();
            let ls: Vec<u8> = batch.iter().map(|&i| set.labels[i]).collect();
            let (loss, grad) = batch_gradient(&params, &ws, &ls, seed, step + 3)?;
            adam.step(&mut params, &grad);
            loss_sum += loss * batch.len() as f64;
            step += 1;
            // a dead hidden layer passes no gradient to its own weights
            let silent = grad.fc1_w.iter().chain(&grad.fc1_b).all(|g| *g == 0.0);
            streak = if silent { streak + 1 } else { 0 };
            if allow_restart && streak >= DEAD_STREAK && hidden_layer_dead(&params, set.val)? {
                return Ok(None);
            }
        }
        if allow_restart && hidden_layer_dead(&params, set.val)? {
            return Ok(None);
        }
        let val_probs = predict_sample_probs(&params, set.val)?;
        let val_acc = if config.class_balanced {
            balanced_accuracy(&val_probs, set.val_labels)
        } else {
            accuracy(&val_probs, set.val_labels)
        };
        let train_loss = loss_sum / order.len() as f64;
        log::debug!("epoch {epoch}: train loss {train_loss:.4}, val acc {val_acc:.4}");
        history.push(EpochRecord { epoch, train_loss, val_accuracy: val_acc });
        if best.as_ref().is_none_or(|(_, a, _)| val_acc >= *a) {
            best = Some((epoch, val_acc, params.clone()));
        }
        if val_acc >= config.early_stop_accuracy {
            stopped_early = true;
            break;
        }
    }
    let (best_epoch, best_val_accuracy, params) = best.expect("at least one epoch runs");
    Ok(Some(TrainOutcome { params, best_epoch, best_val_accuracy, history, stopped_early, restarts: 0 }))
}
