//! Saves a model, loads it back and checks predictions are bit-identical.
//!
//! cargo run --example checkpoint_roundtrip

use uavjam::nnet::{load_checkpoint, save_checkpoint, Model, ModelConfig, Variant};

fn main() -> uavjam::Result<()> {
    let model = Model::<f32>::new(ModelConfig::table(Variant::Lstm, 3, 128), 9)?;
    let path = std::env::temp_dir().join("uavjam-example.ckpt");
    save_checkpoint(&model, &path)?;
    let back = load_checkpoint(&path)?;
    let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.1).sin()).collect();
    let (a, b) = (model.predict(&x, &x)?, back.predict(&x, &x)?);
    println!("{} bytes at {}", std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0), path.display());
    println!("probabilities {a:?}");
    println!("identical after reload: {}", a == b);
    Ok(())
}
