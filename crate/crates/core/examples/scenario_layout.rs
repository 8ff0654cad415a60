//! Builds one urban scenario and prints its node table, then steps the
//! mobility model for a few seconds.
//!
//! cargo run --example scenario_layout -- [seed]

use uavjam::scenario::{generate_scenario, step_mobility, MobilityGroup, Role, ScenarioConfig};

fn main() -> uavjam::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let config = ScenarioConfig {
        num_users: 5,
        num_attackers: 2,
        attacker_power_dbm: 10.0,
        serving_distance_m: 200.0,
        mobility_group: MobilityGroup::BothSpeed,
        ..ScenarioConfig::default()
    };
    let mut s = generate_scenario(&config, seed)?;
    println!("{}", config.cell_label());
    println!("{} buildings", s.buildings.len());
    for n in &s.nodes {
        println!(
            "{:>3} {:<10} ({:7.1}, {:7.1}, {:6.1}) {:5.1} dBm",
            n.id,
            n.role.as_str(),
            n.position.x,
            n.position.y,
            n.position.z,
            n.tx_power_dbm
        );
    }
    let uav = |s: &uavjam::scenario::Scenario| s.nodes_with_role(Role::AuthUav).next().map(|n| n.position);
    for step in 1..=5 {
        s = step_mobility(&s, 1.0)?;
        let u = uav(&s).expect("one authenticated UAV");
        let d: Vec<String> = s.attackers().map(|a| format!("{:.1}", a.position.distance(u))).collect();
        println!("t={step} s attacker distances to UAV: {}", d.join(", "));
    }
    Ok(())
}
