//! Adam training loop, k-fold cross-validation, the PSO/GA/GD hybrid and a
//! small grid search.

mod adam;
mod hybrid;
mod search;

pub use adam::{adam_step, AdamState};
pub use hybrid::{hybrid_train, HybridConfig, HybridOutcome};
pub use search::{grid_search, ParamGrid, SearchResult};

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{split_folds, BinaryLabel, Fold, MotionLabel, WindowedExample};
use crate::error::{Error, Result};
use crate::evaluation::ConfusionMatrix;
use crate::nnet::{argmax, Model, ModelConfig, Tensor};

/// Which labels a model is trained to separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// No Jamming vs Yes Jamming.
    Stage1,
    /// Fixed vs Moving, jammed windows only.
    Stage2,
    ThreeClass,
}

impl Task {
    pub fn classes(self) -> usize {
        match self {
            Task::ThreeClass => 3,
            _ => 2,
        }
    }

    pub fn class_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            Task::Stage1 => &[BinaryLabel::NoJamming.as_str(), BinaryLabel::YesJamming.as_str()],
            Task::Stage2 => &[MotionLabel::FixedJamming.as_str(), MotionLabel::MovingJamming.as_str()],
            Task::ThreeClass => &["No Jamming", "Fixed Jamming", "Moving Jamming"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Class index of `e`, or `None` when the task ignores it.
    pub fn target(self, e: &WindowedExample) -> Option<usize> {
        match self {
            Task::Stage1 => Some(match e.binary_label {
                BinaryLabel::NoJamming => 0,
                BinaryLabel::YesJamming => 1,
            }),
            Task::Stage2 => match (e.binary_label, e.motion_label) {
                (BinaryLabel::YesJamming, Some(MotionLabel::FixedJamming)) => Some(0),
                (BinaryLabel::YesJamming, Some(MotionLabel::MovingJamming)) => Some(1),
                _ => None,
            },
            Task::ThreeClass => Some(e.label().index()),
        }
    }

    /// Examples the task trains on.
    pub fn filter(self, examples: Vec<WindowedExample>) -> Vec<WindowedExample> {
        examples.into_iter().filter(|e| self.target(e).is_some()).collect()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Stage1 => "1",
            Task::Stage2 => "2",
            Task::ThreeClass => "3class",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "stage1" => Ok(Task::Stage1),
            "2" | "stage2" => Ok(Task::Stage2),
            "3class" | "three-class" => Ok(Task::ThreeClass),
            other => Err(Error::Config(format!(
                "unknown stage `{other}` (expected 1, 2 or 3class)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Stop once validation loss has not improved for this many epochs.
    pub patience: Option<usize>,
    pub hybrid: Option<HybridConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2.5e-2,
            batch_size: 32,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            patience: None,
            hybrid: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.validate_frozen_ok()
    }

    /// Like [`validate`](Self::validate) but accepts a zero learning rate.
    pub(crate) fn validate_frozen_ok(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if let Some(h) = &self.hybrid {
            h.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
}

/// Loss, accuracy and per-example predictions over a subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEval {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub targets: Vec<usize>,
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;

fn targets_for(examples: &[WindowedExample], indices: &[usize], task: Task) -> Result<Vec<usize>> {
    indices
        .iter()
        .map(|&i| {
            task.target(&examples[i]).ok_or_else(|| {
                Error::Data(format!(
                    "window {i} (trace {}) has no label for stage {task}",
                    examples[i].trace_id
                ))
            })
        })
        .collect()
}

/// Inference over `indices`; the merge order follows `indices`.
pub fn evaluate_split(
    model: &Model<f32>,
    examples: &[WindowedExample],
    indices: &[usize],
    task: Task,
) -> Result<SplitEval> {
    let targets = targets_for(examples, indices, task)?;
    let probs: Vec<Vec<f64>> = indices
        .par_iter()
        .map(|&i| model.predict(&examples[i].rssi, &examples[i].sinr))
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(indices.len());
    for (p, &t) in probs.iter().zip(&targets) {
        loss += -p[t].max(1e-30).ln();
        let pred = argmax(p);
        correct += usize::from(pred == t);
        predictions.push(pred);
    }
    let n = indices.len().max(1) as f64;
    Ok(SplitEval {
        loss: loss / n,
        accuracy: correct as f64 / n,
        predictions,
        targets,
    })
}

/// One pass over `train` in seeded mini-batches. Returns the mean batch loss.
///
/// Per-example gradients are computed in parallel and summed in batch order,
/// so the result does not depend on the thread count.
pub fn run_epoch(
    model: &mut Model<f32>,
    adam: &mut AdamState<f32>,
    examples: &[WindowedExample],
    train: &[usize],
    task: Task,
    config: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Data("training partition is empty".into()));
    }
    let targets = targets_for(examples, train, task)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SHUFFLE_STREAM, epoch as u64));
    order.shuffle(&mut rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for (b, batch) in order.chunks(config.batch_size).enumerate() {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let per_example: Vec<(f32, Vec<Tensor<f32>>)> = batch
            .par_iter()
            .enumerate()
            .map(|(j, &pos)| {
                let e = &examples[train[pos]];
                let stream = ((epoch as u64) << 32) | ((b * config.batch_size + j) as u64);
                let mut drng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, DROPOUT_STREAM, stream));
                let mut grads = model.zero_grads();
                let loss = model.loss_and_grad(&e.rssi, &e.sinr, targets[pos], Some(&mut drng), &mut grads)?;
                Ok((loss, grads))
            })
            .collect::<Result<_>>()?;
        let mut iter = per_example.into_iter();
        let (first_loss, mut grads) = iter.next().expect("non-empty batch");
        let mut loss = first_loss as f64;
        for (l, g) in iter {
            loss += l as f64;
            for (acc, gi) in grads.iter_mut().zip(&g) {
                acc.add_assign(gi);
            }
        }
        let scale = 1.0 / batch.len() as f32;
        for g in &mut grads {
            g.scale(scale);
        }
        adam_step(&mut model.params_mut(), &grads, adam, config.learning_rate)?;
        total += loss / batch.len() as f64;
        batches += 1;
    }
    Ok(total / batches as f64)
}

pub fn new_adam(model: &Model<f32>, config: &TrainConfig) -> AdamState<f32> {
    AdamState::new(&model.params(), config.beta1, config.beta2, config.epsilon)
}

/// Trains with Adam and keeps the weights of the epoch with the lowest
/// validation loss.
pub fn train_fold(
    mut model: Model<f32>,
    examples: &[WindowedExample],
    train: &[usize],
    val: &[usize],
    task: Task,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate_frozen_ok()?;
    if model.config.output_classes != task.classes() {
        return Err(Error::Config(format!(
            "model has {} outputs but stage {task} needs {}",
            model.config.output_classes,
            task.classes()
        )));
    }
    let val_set: std::collections::BTreeSet<usize> = val.iter().copied().collect();
    assert!(
        train.iter().all(|i| !val_set.contains(i)),
        "validation windows must not be trained on"
    );
    let mut adam = new_adam(&model, config);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Model<f32>)> = None;
    for epoch in 1..=config.epochs {
        let train_loss = run_epoch(&mut model, &mut adam, examples, train, task, config, epoch)?;
        let (val_loss, val_acc) = if val.is_empty() {
            (train_loss, f64::NAN)
        } else {
            let e = evaluate_split(&model, examples, val, task)?;
            (e.loss, e.accuracy)
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
        });
        if best.as_ref().is_none_or(|(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, model.clone()));
        }
        if let (Some(p), Some((_, be, _))) = (config.patience, &best) {
            if epoch - be >= p {
                break;
            }
        }
    }
    let (_, best_epoch, model) = best.unwrap_or((f64::NAN, 0, model));
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Model initialization seed for fold `index`.
pub fn fold_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, INIT_STREAM, index as u64)
}

#[derive(Debug, Clone)]
pub struct FoldReport {
    pub index: usize,
    pub outcome: TrainOutcome,
    pub val: SplitEval,
    pub val_indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub task: Task,
    pub folds: Vec<FoldReport>,
    pub pooled: ConfusionMatrix,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

impl CvReport {
    pub fn pooled_accuracy(&self) -> f64 {
        self.pooled.accuracy()
    }
}

/// k-fold cross-validation at trace granularity. Every fold is checked for
/// train/validation trace disjointness before training.
pub fn cross_validate(
    examples: &[WindowedExample],
    k: usize,
    task: Task,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<CvReport> {
    let folds = split_folds(examples, k, config.seed)?;
    cross_validate_folds(examples, &folds, task, model_config, config)
}

pub fn cross_validate_folds(
    examples: &[WindowedExample],
    folds: &[Fold],
    task: Task,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<CvReport> {
    let mut model_config = model_config.clone();
    model_config.output_classes = task.classes();
    let mut pooled = ConfusionMatrix::new(task.class_names());
    let mut reports = Vec::with_capacity(folds.len());
    for fold in folds {
        fold.assert_disjoint(examples);
        let wrap = |e: Error| Error::Fold {
            fold: fold.index,
            source: Box::new(e),
        };
        let mut fold_config = config.clone();
        fold_config.seed = fold_seed(config.seed, fold.index);
        let model = Model::<f32>::new(model_config.clone(), fold_config.seed).map_err(wrap)?;
        let outcome = match &config.hybrid {
            None => train_fold(model, examples, &fold.train, &fold.val, task, &fold_config),
            Some(h) => hybrid_train(
                (0..h.population)
                    .map(|p| Model::new(model_config.clone(), derive_seed(fold_config.seed, INIT_STREAM, p as u64)))
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap)?,
                examples,
                &fold.train,
                &fold.val,
                task,
                &fold_config,
                h,
            )
            .map(|o| o.into_outcome()),
        }
        .map_err(wrap)?;
        let val = evaluate_split(&outcome.model, examples, &fold.val, task).map_err(wrap)?;
        for (&t, &p) in val.targets.iter().zip(&val.predictions) {
            pooled.record(t, p);
        }
        reports.push(FoldReport {
            index: fold.index,
            outcome,
            val,
            val_indices: fold.val.clone(),
        });
    }
    let accs: Vec<f64> = reports.iter().map(|r| r.val.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64;
    Ok(CvReport {
        task,
        folds: reports,
        pooled,
        mean_accuracy: mean,
        std_accuracy: var.sqrt(),
    })
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,val_acc\n");
    for r in history {
        s.push_str(&format!(
            "{},{:.8e},{:.8e},{:.6}\n",
            r.epoch, r.train_loss, r.val_loss, r.val_acc
        ));
    }
    s
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(history_csv(history).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod toy {
    use super::*;
    use crate::dataset::BinaryLabel;
    use rand::Rng;

    /// Windows whose class is encoded in a level shift of the second half.
    pub fn separable(traces: usize, per_trace: usize, window: usize, seed: u64) -> Vec<WindowedExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for t in 0..traces {
            let jammed = t % 2 == 1;
            for w in 0..per_trace {
                let mut sinr: Vec<f64> = (0..window).map(|_| rng.random_range(-0.3..0.3)).collect();
                if jammed {
                    for v in &mut sinr[window / 2..] {
                        *v -= 2.0;
                    }
                }
                let rssi: Vec<f64> = (0..window).map(|_| rng.random_range(-1.0..1.0)).collect();
                out.push(WindowedExample {
                    rssi: crate::dataset::standardize(&rssi),
                    sinr: crate::dataset::standardize(&sinr),
                    binary_label: if jammed { BinaryLabel::YesJamming } else { BinaryLabel::NoJamming },
                    motion_label: jammed.then_some(MotionLabel::FixedJamming),
                    trace_id: t,
                    offset: w * window,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Variant;

    fn small(classes: usize) -> ModelConfig {
        ModelConfig::table(Variant::Attention, classes, 128)
    }

    #[test]
    fn separable_toy_reaches_high_accuracy() {
        let ex = toy::separable(20, 6, 128, 1);
        let train: Vec<usize> = (0..ex.len()).filter(|i| ex[*i].trace_id % 5 != 0).collect();
        let val: Vec<usize> = (0..ex.len()).filter(|i| ex[*i].trace_id % 5 == 0).collect();
        let cfg = TrainConfig {
            epochs: 20,
            learning_rate: 2.5e-3,
            seed: 3,
            ..TrainConfig::default()
        };
        let model = Model::new(small(2), 3).unwrap();
        let out = train_fold(model, &ex, &train, &val, Task::Stage1, &cfg).unwrap();
        let best = out.history.iter().map(|h| h.val_acc).fold(0.0, f64::max);
        assert!(best >= 0.99, "{:?}", out.history);
    }

    #[test]
    fn memorizes_single_example() {
        let ex = toy::separable(2, 1, 128, 2);
        let mut cfg = TrainConfig {
            epochs: 150,
            learning_rate: 1e-3,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let mut model = Model::new(ModelConfig { dropout_rate: 0.0, ..small(2) }, 0).unwrap();
        cfg.seed = 1;
        let mut adam = new_adam(&model, &cfg);
        let mut last = f64::MAX;
        for epoch in 0..cfg.epochs {
            last = run_epoch(&mut model, &mut adam, &ex, &[1], Task::Stage1, &cfg, epoch).unwrap();
        }
        assert!(last < 1e-3, "{last}");
    }

    #[test]
    fn identical_seeds_identical_history() {
        let ex = toy::separable(6, 3, 128, 4);
        let train: Vec<usize> = (0..12).collect();
        let val: Vec<usize> = (12..18).collect();
        let cfg = TrainConfig {
            epochs: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = || {
            let m = Model::new(small(2), 1).unwrap();
            train_fold(m, &ex, &train, &val, Task::Stage1, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(history_csv(&a.history), history_csv(&b.history));
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn empty_training_set_is_a_data_error() {
        let ex = toy::separable(2, 1, 128, 2);
        let m = Model::new(small(2), 1).unwrap();
        let r = train_fold(m, &ex, &[], &[0], Task::Stage1, &TrainConfig::default());
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn cv_pools_every_validation_window() {
        let ex = toy::separable(10, 2, 128, 5);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let r = cross_validate(&ex, 5, Task::Stage1, &small(2), &cfg).unwrap();
        assert_eq!(r.folds.len(), 5);
        assert_eq!(r.pooled.total() as usize, ex.len());
        let val_total: usize = r.folds.iter().map(|f| f.val_indices.len()).sum();
        assert_eq!(val_total, ex.len());
    }

    #[test]
    fn single_label_dataset_is_perfect() {
        let ex: Vec<WindowedExample> = toy::separable(10, 2, 128, 6)
            .into_iter()
            .filter(|e| e.binary_label == BinaryLabel::YesJamming)
            .collect();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let r = cross_validate(&ex, 5, Task::Stage1, &small(2), &cfg).unwrap();
        for f in &r.folds {
            assert_eq!(f.val.accuracy, 1.0);
        }
    }

    #[test]
    fn stage_targets() {
        let ex = toy::separable(2, 1, 128, 0);
        assert_eq!(Task::Stage1.target(&ex[0]), Some(0));
        assert_eq!(Task::Stage2.target(&ex[0]), None);
        assert_eq!(Task::Stage2.target(&ex[1]), Some(0));
        assert_eq!(Task::ThreeClass.target(&ex[1]), Some(1));
        assert_eq!("3class".parse::<Task>().unwrap(), Task::ThreeClass);
        assert!("4".parse::<Task>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let zero_lr = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(zero_lr.validate().is_err());
        assert!(zero_lr.validate_frozen_ok().is_ok());
        let zero_batch = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(zero_batch.validate().is_err());
    }
}
