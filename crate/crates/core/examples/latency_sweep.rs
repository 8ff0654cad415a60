//! Trains a quick detector, then measures sustained-detection latency for
//! jammers switched on mid-trace, with clean controls.
//!
//! cargo run --release --example latency_sweep

use uavjam::channel::RadioConstants;
use uavjam::dataset::{split_folds, synthesize_traces, window_dataset};
use uavjam::evaluation::{detection_latency_sweep, LatencySpec};
use uavjam::nnet::{Model, ModelConfig, Variant};
use uavjam::scenario::ScenarioConfig;
use uavjam::training::{train_fold, Task, TrainConfig};

fn main() -> uavjam::Result<()> {
    let constants = RadioConstants::default();
    let base = ScenarioConfig {
        attacker_power_dbm: 20.0,
        serving_distance_m: 100.0,
        sim_time_s: 1.024,
        ..ScenarioConfig::default()
    };
    let grid: Vec<ScenarioConfig> = (0..40)
        .map(|i| ScenarioConfig {
            num_attackers: i % 2,
            ..base.clone()
        })
        .collect();
    let traces = synthesize_traces(&grid, 10, &constants)?;
    let examples = window_dataset(&traces, 128, 64)?;
    let fold = &split_folds(&examples, 4, 10)?[0];
    let config = TrainConfig {
        learning_rate: 1e-3,
        epochs: 6,
        seed: 10,
        ..TrainConfig::default()
    };
    let model = Model::new(ModelConfig::table(Variant::Attention, 2, 128), 10)?;
    let model = train_fold(model, &examples, &fold.train, &fold.val, Task::Stage1, &config)?.model;
    let spec = LatencySpec {
        base: ScenarioConfig {
            num_attackers: 1,
            sim_time_s: 2.0,
            ..base
        },
        powers_dbm: vec![2.0, 20.0],
        distances_m: vec![100.0, 500.0],
        onset_slots: vec![1000],
        traces_per_cell: 5,
        stride: 16,
        seed: 10,
        clean_control: true,
    };
    let table = detection_latency_sweep(&model, &spec, &constants)?;
    print!("{}", table.to_markdown());
    Ok(())
}
