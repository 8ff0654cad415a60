//! k-fold cross-validation of the stage-1 detector on a small grid, with
//! per-fold histories and the pooled confusion matrix.
//!
//! cargo run --release --example train_cv -- [epochs]

use uavjam::channel::RadioConstants;
use uavjam::dataset::{synthesize_traces, window_dataset};
use uavjam::nnet::{ModelConfig, Variant};
use uavjam::scenario::ScenarioConfig;
use uavjam::training::{cross_validate, history_csv, Task, TrainConfig};

fn main() -> uavjam::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let grid: Vec<ScenarioConfig> = (0..40)
        .map(|i| ScenarioConfig {
            num_attackers: i % 2,
            attacker_power_dbm: 20.0,
            serving_distance_m: 100.0,
            sim_time_s: 1.024,
            ..ScenarioConfig::default()
        })
        .collect();
    let traces = synthesize_traces(&grid, 1, &RadioConstants::default())?;
    let examples = window_dataset(&traces, 128, 64)?;
    let config = TrainConfig {
        learning_rate: 1e-3,
        epochs,
        seed: 1,
        ..TrainConfig::default()
    };
    let report = cross_validate(&examples, 4, Task::Stage1, &ModelConfig::table(Variant::Attention, 2, 128), &config)?;
    for f in &report.folds {
        println!("fold {} accuracy {:.3}, best epoch {}", f.index, f.val.accuracy, f.outcome.best_epoch);
    }
    print!("{}", history_csv(&report.folds[0].outcome.history));
    println!("mean {:.3} +- {:.3}, pooled {:.3}", report.mean_accuracy, report.std_accuracy, report.pooled_accuracy());
    print!("{}", report.pooled.to_markdown());
    Ok(())
}
