//! PSO + GA + gradient-descent hybrid on a small population, compared with
//! plain Adam on the same split.
//!
//! cargo run --release --example hybrid_training

use uavjam::channel::RadioConstants;
use uavjam::dataset::{split_folds, synthesize_traces, window_dataset};
use uavjam::nnet::{Model, ModelConfig, Variant};
use uavjam::scenario::ScenarioConfig;
use uavjam::training::{fold_seed, hybrid_train, train_fold, HybridConfig, Task, TrainConfig};

fn main() -> uavjam::Result<()> {
    let grid: Vec<ScenarioConfig> = (0..24)
        .map(|i| ScenarioConfig {
            num_attackers: i % 2,
            sim_time_s: 1.024,
            ..ScenarioConfig::default()
        })
        .collect();
    let traces = synthesize_traces(&grid, 2, &RadioConstants::default())?;
    let examples = window_dataset(&traces, 128, 64)?;
    let fold = &split_folds(&examples, 4, 2)?[0];
    let mc = ModelConfig::table(Variant::Attention, 2, 128);
    let config = TrainConfig {
        learning_rate: 1e-3,
        epochs: 4,
        seed: 2,
        ..TrainConfig::default()
    };
    let hybrid = HybridConfig {
        population: 4,
        generations: 4,
        ..HybridConfig::default()
    };
    let population = (0..hybrid.population)
        .map(|p| Model::<f32>::new(mc.clone(), fold_seed(2, p)))
        .collect::<uavjam::Result<Vec<_>>>()?;
    let out = hybrid_train(population, &examples, &fold.train, &fold.val, Task::Stage1, &config, &hybrid)?;
    for (g, l) in out.gbest_history.iter().enumerate() {
        println!("generation {} global best val loss {l:.4}", g + 1);
    }
    let plain = train_fold(Model::new(mc, fold_seed(2, 0))?, &examples, &fold.train, &fold.val, Task::Stage1, &config)?;
    let best = plain.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    println!("plain Adam best val loss {best:.4}");
    Ok(())
}
