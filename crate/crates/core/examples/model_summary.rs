//! Parameter counts of both variants at a given window size.
//!
//! cargo run --example model_summary -- [window]

use uavjam::nnet::{count_parameters, Model, ModelConfig, Variant};

fn main() -> uavjam::Result<()> {
    let window = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let mut counts = Vec::new();
    for v in [Variant::Attention, Variant::Lstm] {
        let config = ModelConfig::table(v, 2, window);
        let model = Model::<f32>::new(config.clone(), 0)?;
        println!("{v:<9} window {window}: {} parameters, head output {} x {}", count_parameters(&model), config.head_steps()?, config.head_channels());
        for (name, p) in model.param_names().iter().zip(model.params()) {
            println!("    {name:<28} {:?}", p.shape());
        }
        counts.push(count_parameters(&model));
    }
    println!("attention / lstm = {:.3}", counts[0] as f64 / counts[1] as f64);
    Ok(())
}
