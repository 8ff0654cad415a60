//! Picks the window size from the SINR autocorrelation and slices traces
//! into standardized windows.
//!
//! cargo run --release --example window_selection

use uavjam::channel::RadioConstants;
use uavjam::dataset::{autocorrelation, select_window_size, synthesize_traces, window_dataset};
use uavjam::nnet::{ModelConfig, Variant};
use uavjam::scenario::ScenarioConfig;

fn main() -> uavjam::Result<()> {
    let grid: Vec<ScenarioConfig> = (0..8)
        .map(|i| ScenarioConfig {
            num_users: 3,
            num_attackers: i % 2,
            sim_time_s: 2.0,
            ..ScenarioConfig::default()
        })
        .collect();
    let traces = synthesize_traces(&grid, 3, &RadioConstants::default())?;
    let acf = autocorrelation(&traces[0].sinr, 64)?;
    let lags: Vec<String> = acf.iter().step_by(8).map(|v| format!("{v:.2}")).collect();
    println!("acf every 8 lags: {}", lags.join(" "));
    let series: Vec<&[f64]> = traces.iter().map(|t| t.sinr.as_slice()).collect();
    let w = select_window_size(&series)?;
    let min = ModelConfig::table(Variant::Attention, 2, w).min_window();
    let w = if w < min { min.next_power_of_two() } else { w };
    println!("window {w} (model minimum {min})");
    let windows = window_dataset(&traces, w, w / 2)?;
    let first = &windows[0];
    let m = first.sinr.iter().sum::<f64>() / w as f64;
    println!("{} windows; first window sinr mean {m:.2e}, label {}", windows.len(), first.label().as_str());
    Ok(())
}
