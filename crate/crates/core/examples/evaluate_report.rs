//! Trains stage-1, stage-2 and three-class models on a small mixed grid,
//! then runs both pipelines and writes the reports directory.
//!
//! cargo run --release --example evaluate_report -- [out-dir]

use std::collections::BTreeMap;
use std::path::PathBuf;

use uavjam::channel::RadioConstants;
use uavjam::dataset::{split_folds, synthesize_traces, window_dataset, WindowedExample};
use uavjam::evaluation::{evaluate_section, write_reports, Pipelines};
use uavjam::nnet::{Model, ModelConfig, Variant};
use uavjam::scenario::{MobilityGroup, ScenarioConfig};
use uavjam::training::{train_fold, Task, TrainConfig};

fn train(task: Task, examples: &[WindowedExample]) -> uavjam::Result<Model<f32>> {
    let examples = task.filter(examples.to_vec());
    let fold = &split_folds(&examples, 4, 6)?[0];
    let config = TrainConfig {
        learning_rate: 1e-3,
        epochs: 4,
        seed: 6,
        ..TrainConfig::default()
    };
    let model = Model::new(ModelConfig::table(Variant::Attention, task.classes(), 128), 6)?;
    Ok(train_fold(model, &examples, &fold.train, &fold.val, task, &config)?.model)
}

fn main() -> uavjam::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("uavjam-reports"));
    let mut grid = Vec::new();
    for group in [MobilityGroup::NoneSpeed, MobilityGroup::AttackerSpeed] {
        for attackers in [0, 1] {
            for users in [0, 5] {
                for _ in 0..4 {
                    grid.push(ScenarioConfig {
                        num_users: users,
                        num_attackers: attackers,
                        mobility_group: group,
                        sim_time_s: 1.024,
                        ..ScenarioConfig::default()
                    });
                }
            }
        }
    }
    let traces = synthesize_traces(&grid, 6, &RadioConstants::default())?;
    let examples = window_dataset(&traces, 128, 64)?;
    let stage1 = train(Task::Stage1, &examples)?;
    let stage2 = train(Task::Stage2, &examples)?;
    let three = train(Task::ThreeClass, &examples)?;
    let configs: BTreeMap<usize, ScenarioConfig> = traces.iter().map(|t| (t.id, t.config.clone())).collect();
    let pipelines = Pipelines {
        stage1: &stage1,
        stage2: Some(&stage2),
        three_class: Some(&three),
    };
    let section = evaluate_section("All cells", pipelines, &examples, &configs)?;
    println!("stage-1 accuracy {:.3}", section.stage1.accuracy());
    if let Some(c) = &section.two_stage {
        println!("two-stage accuracy {:.3}", c.accuracy());
    }
    if let Some(c) = &section.three_class {
        println!("direct three-class accuracy {:.3}", c.accuracy());
    }
    write_reports(&out, &[section], None, "In-sample example run.")?;
    println!("reports in {}", out.display());
    Ok(())
}
