//! Expands a TOML grid, writes the dataset tree and reads it back.
//!
//! cargo run --release --example simulate_dataset -- [configs/desk.toml] [out-dir]

use std::path::PathBuf;

use uavjam::dataset::{read_dataset, synthesize_dataset, GridSpec};

fn main() -> uavjam::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/desk.toml")
    });
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("uavjam-desk"));
    let spec = GridSpec::from_file(&config)?;
    let grid = spec.expand();
    println!("{} configurations from {}", grid.len(), config.display());
    let seed = spec.dataset.master_seed.unwrap_or(1);
    synthesize_dataset(&grid, seed, &spec.radio, &out)?;
    let traces = read_dataset(&out)?;
    let jammed = traces.iter().filter(|t| t.config.num_attackers > 0).count();
    println!("read back {} traces ({jammed} jammed) from {}", traces.len(), out.display());
    let t = &traces[0];
    println!("trace {}: {} slots, label {}, {}", t.id, t.len(), t.label().as_str(), t.config.cell_label());
    Ok(())
}
