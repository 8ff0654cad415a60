//! Synthesizes the same trace with and without its jammer and prints how
//! RSSI and SINR move apart.
//!
//! cargo run --release --example channel_trace

use uavjam::channel::RadioConstants;
use uavjam::dataset::{synthesize_trace, TraceOptions};
use uavjam::scenario::ScenarioConfig;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn main() -> uavjam::Result<()> {
    let constants = RadioConstants::default();
    let config = ScenarioConfig {
        num_users: 3,
        num_attackers: 1,
        attacker_power_dbm: 20.0,
        serving_distance_m: 100.0,
        sim_time_s: 2.0,
        ..ScenarioConfig::default()
    };
    let slots = 2000;
    // Onset past the end keeps the jammer silent with identical fading draws.
    let quiet = TraceOptions { jammer_onset_slot: Some(slots) };
    let half = TraceOptions { jammer_onset_slot: Some(slots / 2) };
    let clean = synthesize_trace(0, &config, 42, &constants, &quiet)?;
    let jammed = synthesize_trace(0, &config, 42, &constants, &half)?;
    println!("noise floor {:.1} dBm", constants.noise_dbm());
    for (name, range) in [("before onset", 0..slots / 2), ("after onset", slots / 2..slots)] {
        println!(
            "{name:>12}: clean rssi {:7.2} sinr {:6.2} | jammed rssi {:7.2} sinr {:6.2}",
            mean(&clean.rssi[range.clone()]),
            mean(&clean.sinr[range.clone()]),
            mean(&jammed.rssi[range.clone()]),
            mean(&jammed.sinr[range]),
        );
    }
    println!("slot  clean_sinr  jammed_sinr");
    for s in (slots / 2 - 3..slots / 2 + 3).step_by(1) {
        println!("{s:>5} {:>10.3} {:>12.3}", clean.sinr[s], jammed.sinr[s]);
    }
    Ok(())
}
