//! Labelled RSSI/SINR traces: synthesis, the on-disk tree, windowing and
//! trace-granular fold splitting.
//!
//! Layout on disk:
//!
//! ```text
//! root/
//!   dataset.txt
//!   none_speed/scenario_0000/{rssi.csv, sinr.csv, meta.txt}
//!   attacker_speed/...
//!   user_speed/...
//!   both_speed/...
//! ```

mod folds;
mod grid;
mod io;
mod window;

pub use folds::{split_folds, Fold};
pub use grid::GridSpec;
pub use io::{format_value, quantize, read_dataset, read_trace_dir, write_trace, DATASET_FILE};
pub use window::{
    autocorrelation, select_window_size, standardize, window_count, window_dataset,
    window_trace, WindowedExample, DEFAULT_STRIDE, DEFAULT_WINDOW,
};

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::channel::{RadioConstants, ReceiverChannel};
use crate::error::{Error, Result};
use crate::scenario::{generate_scenario, step_mobility, MobilityGroup, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryLabel {
    NoJamming,
    YesJamming,
}

impl BinaryLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::NoJamming => "No Jamming",
            BinaryLabel::YesJamming => "Yes Jamming",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "No Jamming" => Ok(BinaryLabel::NoJamming),
            "Yes Jamming" => Ok(BinaryLabel::YesJamming),
            other => Err(Error::Data(format!("unknown binary label `{other}`"))),
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MotionLabel {
    FixedJamming,
    MovingJamming,
}

impl MotionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            MotionLabel::FixedJamming => "Fixed Jamming",
            MotionLabel::MovingJamming => "Moving Jamming",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "Fixed Jamming" => Ok(MotionLabel::FixedJamming),
            "Moving Jamming" => Ok(MotionLabel::MovingJamming),
            other => Err(Error::Data(format!("unknown motion label `{other}`"))),
        }
    }
}

impl fmt::Display for MotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Final label of the two-stage pipeline, also the 3-class target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JamLabel {
    NoJamming,
    FixedJamming,
    MovingJamming,
}

impl JamLabel {
    pub const ALL: [JamLabel; 3] = [
        JamLabel::NoJamming,
        JamLabel::FixedJamming,
        JamLabel::MovingJamming,
    ];

    pub fn from_labels(binary: BinaryLabel, motion: Option<MotionLabel>) -> Self {
        match (binary, motion) {
            (BinaryLabel::NoJamming, _) => JamLabel::NoJamming,
            (BinaryLabel::YesJamming, Some(MotionLabel::MovingJamming)) => JamLabel::MovingJamming,
            (BinaryLabel::YesJamming, _) => JamLabel::FixedJamming,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JamLabel::NoJamming => "No Jamming",
            JamLabel::FixedJamming => "Fixed Jamming",
            JamLabel::MovingJamming => "Moving Jamming",
        }
    }
}

/// Labels implied by a generating configuration.
pub fn labels_for(config: &ScenarioConfig) -> (BinaryLabel, Option<MotionLabel>) {
    if config.num_attackers == 0 {
        (BinaryLabel::NoJamming, None)
    } else if config.mobility_group.attackers_move() {
        (BinaryLabel::YesJamming, Some(MotionLabel::MovingJamming))
    } else {
        (BinaryLabel::YesJamming, Some(MotionLabel::FixedJamming))
    }
}

/// One simulated trace: RSSI and SINR per slot, with labels and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePair {
    pub id: usize,
    pub config: ScenarioConfig,
    pub seed: u64,
    pub rssi: Vec<f64>,
    pub sinr: Vec<f64>,
    pub binary_label: BinaryLabel,
    pub motion_label: Option<MotionLabel>,
    /// First slot at which attackers radiate, when not from the start.
    pub jammer_onset_slot: Option<usize>,
}

impl TracePair {
    pub fn len(&self) -> usize {
        self.rssi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rssi.is_empty()
    }

    pub fn label(&self) -> JamLabel {
        JamLabel::from_labels(self.binary_label, self.motion_label)
    }

    pub fn group(&self) -> MobilityGroup {
        self.config.mobility_group
    }

    /// Folder of this trace relative to the dataset root.
    pub fn relative_dir(&self) -> PathBuf {
        PathBuf::from(self.group().dir_name()).join(format!("scenario_{:04}", self.id))
    }
}

/// Per-trace synthesis knobs.
#[derive(Debug, Clone, Default)]
pub struct TraceOptions {
    /// Attackers stay silent before this slot.
    pub jammer_onset_slot: Option<usize>,
}

pub fn slots_for(config: &ScenarioConfig, constants: &RadioConstants) -> usize {
    (config.sim_time_s / constants.slot_duration_s).round().max(1.0) as usize
}

/// Simulates one trace. Values are quantized to the on-disk precision so a
/// written-then-read trace compares equal.
pub fn synthesize_trace(
    id: usize,
    config: &ScenarioConfig,
    seed: u64,
    constants: &RadioConstants,
    options: &TraceOptions,
) -> Result<TracePair> {
    let mut constants = constants.clone();
    let n = slots_for(config, &constants);
    constants.slots_per_trace = n;
    constants.subchannels = constants.subchannels.min(n);
    let dt = constants.slot_duration_s;

    let mut config = config.clone();
    config.seed = seed;
    let mut scenario = generate_scenario(&config, seed)?;
    let onset_s = options.jammer_onset_slot.map(|s| s as f64 * dt);
    let mut rx = ReceiverChannel::new(&scenario, &constants, seed)?.with_jammer_onset(onset_s);
    let moving = config.mobility_group != MobilityGroup::NoneSpeed;

    let mut rssi = Vec::with_capacity(n);
    let mut sinr = Vec::with_capacity(n);
    for slot in 0..n {
        let t = slot as f64 * dt;
        if slot > 0 && moving {
            scenario = step_mobility(&scenario, dt)?;
            rx.update_geometry(&scenario, t)?;
        }
        let (r, s) = rx.slot_powers(&scenario, t).measurements(true);
        rssi.push(quantize(r));
        sinr.push(quantize(s));
    }
    let (binary_label, motion_label) = labels_for(&config);
    Ok(TracePair {
        id,
        config,
        seed,
        rssi,
        sinr,
        binary_label,
        motion_label,
        jammer_onset_slot: options.jammer_onset_slot,
    })
}

/// Seed of the `index`-th trace under `master_seed`.
pub fn trace_seed(master_seed: u64, index: usize) -> u64 {
    master_seed ^ index as u64
}

/// Simulates every config of `grid` in memory (parallel across traces).
pub fn synthesize_traces(
    grid: &[ScenarioConfig],
    master_seed: u64,
    constants: &RadioConstants,
) -> Result<Vec<TracePair>> {
    if grid.is_empty() {
        return Err(Error::Config("configuration grid is empty".into()));
    }
    grid.par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            synthesize_trace(i, cfg, trace_seed(master_seed, i), constants, &TraceOptions::default())
        })
        .collect()
}

/// Simulates the grid and writes the dataset tree under `root`.
pub fn synthesize_dataset(
    grid: &[ScenarioConfig],
    master_seed: u64,
    constants: &RadioConstants,
    root: &Path,
) -> Result<Vec<TracePair>> {
    let traces = synthesize_traces(grid, master_seed, constants)?;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for g in MobilityGroup::ALL {
        let dir = root.join(g.dir_name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for t in &traces {
        write_trace(root, t)?;
    }
    io::write_dataset_info(root, master_seed, traces.len())?;
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(cfg: ScenarioConfig) -> ScenarioConfig {
        ScenarioConfig {
            sim_time_s: 0.3,
            ..cfg
        }
    }

    #[test]
    fn labels_follow_config() {
        let clean = ScenarioConfig::default();
        assert_eq!(labels_for(&clean), (BinaryLabel::NoJamming, None));
        for g in MobilityGroup::ALL {
            let c = ScenarioConfig {
                num_attackers: 2,
                mobility_group: g,
                ..clean.clone()
            };
            let expected = if g.attackers_move() {
                MotionLabel::MovingJamming
            } else {
                MotionLabel::FixedJamming
            };
            assert_eq!(labels_for(&c), (BinaryLabel::YesJamming, Some(expected)));
        }
        assert_eq!(BinaryLabel::parse("Yes Jamming").unwrap(), BinaryLabel::YesJamming);
        assert_eq!(MotionLabel::parse("Fixed Jamming").unwrap(), MotionLabel::FixedJamming);
    }

    #[test]
    fn trace_has_equal_length_series() {
        let c = short(ScenarioConfig {
            num_users: 3,
            num_attackers: 1,
            mobility_group: MobilityGroup::BothSpeed,
            ..Default::default()
        });
        let t = synthesize_trace(0, &c, 5, &RadioConstants::default(), &TraceOptions::default())
            .unwrap();
        assert_eq!(t.rssi.len(), 300);
        assert_eq!(t.sinr.len(), 300);
        assert!(t.rssi.iter().chain(&t.sinr).all(|v| v.is_finite()));
        assert_eq!(t.motion_label, Some(MotionLabel::MovingJamming));
    }

    #[test]
    fn jammer_onset_silences_early_slots() {
        let c = short(ScenarioConfig {
            num_attackers: 1,
            ..Default::default()
        });
        let k = RadioConstants::default();
        let clean = synthesize_trace(
            0,
            &ScenarioConfig {
                num_attackers: 0,
                ..c.clone()
            },
            9,
            &k,
            &TraceOptions::default(),
        )
        .unwrap();
        let onset = synthesize_trace(
            0,
            &c,
            9,
            &k,
            &TraceOptions {
                jammer_onset_slot: Some(100),
            },
        )
        .unwrap();
        assert_eq!(clean.rssi[..100], onset.rssi[..100]);
        assert!(onset.rssi[100..].iter().zip(&clean.rssi[100..]).all(|(j, c)| j > c));
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(synthesize_traces(&[], 1, &RadioConstants::default()).is_err());
    }
}
