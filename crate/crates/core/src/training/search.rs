use crate::dataset::WindowedExample;
use crate::error::{Error, Result};
use crate::nnet::{Model, ModelConfig};
use crate::training::{train_fold, Task, TrainConfig};

/// Learning-rate by batch-size grid; expanded learning-rate major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl ParamGrid {
    pub fn expand(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &bs in &self.batch_sizes {
                out.push(TrainConfig {
                    learning_rate: lr,
                    batch_size: bs,
                    ..base.clone()
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub grid_index: usize,
    pub config: TrainConfig,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Trains every grid point from the same initial weights and ranks by best
/// validation loss, ties broken by grid index.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    grid: &ParamGrid,
    base: &TrainConfig,
    model_config: &ModelConfig,
    examples: &[WindowedExample],
    train: &[usize],
    val: &[usize],
    task: Task,
) -> Result<Vec<SearchResult>> {
    let configs = grid.expand(base);
    if configs.is_empty() {
        return Err(Error::Config("parameter grid is empty".into()));
    }
    let mut mc = model_config.clone();
    mc.output_classes = task.classes();
    let mut results = Vec::with_capacity(configs.len());
    for (grid_index, config) in configs.into_iter().enumerate() {
        let model = Model::new(mc.clone(), base.seed)?;
        let out = train_fold(model, examples, train, val, task, &config)?;
        let best = out
            .history
            .get(out.best_epoch.saturating_sub(1))
            .copied()
            .ok_or_else(|| Error::Config("grid search needs at least one epoch".into()))?;
        results.push(SearchResult {
            grid_index,
            config,
            val_loss: best.val_loss,
            val_acc: best.val_acc,
        });
    }
    results.sort_by(|a, b| a.val_loss.total_cmp(&b.val_loss).then(a.grid_index.cmp(&b.grid_index)));
    Ok(results)
}
