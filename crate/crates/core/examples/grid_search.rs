//! Learning-rate x batch-size grid search ranked by validation loss.
//!
//! cargo run --release --example grid_search

use uavjam::channel::RadioConstants;
use uavjam::dataset::{split_folds, synthesize_traces, window_dataset};
use uavjam::nnet::{ModelConfig, Variant};
use uavjam::scenario::ScenarioConfig;
use uavjam::training::{grid_search, ParamGrid, Task, TrainConfig};

fn main() -> uavjam::Result<()> {
    let grid: Vec<ScenarioConfig> = (0..16)
        .map(|i| ScenarioConfig {
            num_attackers: i % 2,
            sim_time_s: 0.768,
            ..ScenarioConfig::default()
        })
        .collect();
    let traces = synthesize_traces(&grid, 4, &RadioConstants::default())?;
    let examples = window_dataset(&traces, 128, 64)?;
    let fold = &split_folds(&examples, 4, 4)?[0];
    let params = ParamGrid {
        learning_rates: vec![2.5e-2, 1e-3],
        batch_sizes: vec![16, 32],
    };
    let base = TrainConfig {
        epochs: 3,
        seed: 4,
        ..TrainConfig::default()
    };
    let mc = ModelConfig::table(Variant::Attention, 2, 128);
    for r in grid_search(&params, &base, &mc, &examples, &fold.train, &fold.val, Task::Stage1)? {
        println!(
            "lr {:<8} batch {:<3} val loss {:.4} val acc {:.3}",
            r.config.learning_rate, r.config.batch_size, r.val_loss, r.val_acc
        );
    }
    Ok(())
}
