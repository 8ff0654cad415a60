use std::fmt::Write as _;

use rayon::prelude::*;

use crate::channel::RadioConstants;
use crate::dataset::{synthesize_trace, window_trace, TraceOptions, TracePair};
use crate::error::{Error, Result};
use crate::nnet::{argmax, Model};
use crate::scenario::ScenarioConfig;
use crate::training::derive_seed;

/// Consecutive positive windows needed to declare a detection.
pub const CONFIRM_WINDOWS: usize = 3;

/// End slot (exclusive) of the window that completes the first run of
/// [`CONFIRM_WINDOWS`] positives among windows ending after `onset`.
/// Windows lying entirely before the onset never count.
pub fn sustained_detection(positives: &[bool], window_ends: &[usize], onset: usize) -> Option<usize> {
    let mut run = 0;
    for (&pos, &end) in positives.iter().zip(window_ends) {
        if end <= onset {
            continue;
        }
        run = if pos { run + 1 } else { 0 };
        if run == CONFIRM_WINDOWS {
            return Some(end);
        }
    }
    None
}

/// Stage-1 positives for every window of a trace, with window end slots.
pub fn window_decisions(
    model: &Model<f32>,
    trace: &TracePair,
    stride: usize,
) -> Result<(Vec<bool>, Vec<usize>)> {
    let window = model.config.window;
    let windows = window_trace(trace, window, stride)?;
    let positives = windows
        .par_iter()
        .map(|w| model.predict(&w.rssi, &w.sinr).map(|p| argmax(&p) == 1))
        .collect::<Result<Vec<_>>>()?;
    let ends = windows.iter().map(|w| w.offset + window).collect();
    Ok((positives, ends))
}

/// Detection latency in milliseconds, `None` when never detected.
pub fn trace_latency_ms(
    model: &Model<f32>,
    trace: &TracePair,
    stride: usize,
    onset_slot: usize,
    slot_duration_s: f64,
) -> Result<Option<f64>> {
    let (positives, ends) = window_decisions(model, trace, stride)?;
    Ok(sustained_detection(&positives, &ends, onset_slot)
        .map(|end| (end - onset_slot) as f64 * slot_duration_s * 1000.0))
}

#[derive(Debug, Clone)]
pub struct LatencySpec {
    pub base: ScenarioConfig,
    pub powers_dbm: Vec<f64>,
    pub distances_m: Vec<f64>,
    pub onset_slots: Vec<usize>,
    pub traces_per_cell: usize,
    pub stride: usize,
    pub seed: u64,
    /// Adds one attacker-free control row per distance and onset.
    pub clean_control: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    /// `None` on clean-control rows.
    pub power_dbm: Option<f64>,
    pub distance_m: f64,
    pub onset_ms: f64,
    pub latencies_ms: Vec<Option<f64>>,
}

impl LatencyRow {
    pub fn traces(&self) -> usize {
        self.latencies_ms.len()
    }

    pub fn detected(&self) -> usize {
        self.latencies_ms.iter().filter(|l| l.is_some()).count()
    }

    pub fn never_detected(&self) -> usize {
        self.traces() - self.detected()
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.latencies_ms.iter().flatten().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn min_ms(&self) -> Option<f64> {
        self.sorted().first().copied()
    }

    pub fn median_ms(&self) -> Option<f64> {
        let v = self.sorted();
        (!v.is_empty()).then(|| v[v.len() / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyTable {
    pub rows: Vec<LatencyRow>,
}

impl LatencyTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "attacker_power_dbm,distance_m,onset_ms,traces,detected,never_detected,min_latency_ms,median_latency_ms\n",
        );
        let opt = |v: Option<f64>| v.map_or_else(|| "NeverDetected".to_string(), |x| format!("{x:.1}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.power_dbm.map_or_else(|| "clean".to_string(), |p| p.to_string()),
                r.distance_m,
                r.onset_ms,
                r.traces(),
                r.detected(),
                r.never_detected(),
                opt(r.min_ms()),
                opt(r.median_ms())
            );
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| attacker power (dBm) | distance (m) | onset (ms) | detected | min latency (ms) | median latency (ms) |\n|---|---|---|---:|---:|---:|\n",
        );
        let opt = |v: Option<f64>| v.map_or_else(|| "never".to_string(), |x| format!("{x:.0}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {}/{} | {} | {} |",
                r.power_dbm.map_or_else(|| "clean".to_string(), |p| p.to_string()),
                r.distance_m,
                r.onset_ms,
                r.detected(),
                r.traces(),
                opt(r.min_ms()),
                opt(r.median_ms())
            );
        }
        s
    }
}

const LATENCY_STREAM: u64 = 21;

/// Synthesizes traces with a delayed jammer for every (power, distance,
/// onset) cell and measures the sustained-detection latency.
pub fn detection_latency_sweep(
    model: &Model<f32>,
    spec: &LatencySpec,
    constants: &RadioConstants,
) -> Result<LatencyTable> {
    if spec.traces_per_cell == 0 {
        return Err(Error::Config("traces_per_cell must be positive".into()));
    }
    let mut cells: Vec<(Option<f64>, f64, usize)> = Vec::new();
    for &d in &spec.distances_m {
        for &onset in &spec.onset_slots {
            for &p in &spec.powers_dbm {
                cells.push((Some(p), d, onset));
            }
            if spec.clean_control {
                cells.push((None, d, onset));
            }
        }
    }
    let dt = constants.slot_duration_s;
    let mut rows = Vec::with_capacity(cells.len());
    for (ci, &(power, distance, onset)) in cells.iter().enumerate() {
        let mut cfg = spec.base.clone();
        cfg.serving_distance_m = distance;
        match power {
            Some(p) => {
                cfg.attacker_power_dbm = p;
                cfg.num_attackers = cfg.num_attackers.max(1);
            }
            None => cfg.num_attackers = 0,
        }
        let latencies = (0..spec.traces_per_cell)
            .into_par_iter()
            .map(|k| {
                let seed = derive_seed(spec.seed, LATENCY_STREAM, ((ci as u64) << 32) | k as u64);
                let opts = TraceOptions {
                    jammer_onset_slot: Some(onset),
                };
                let trace = synthesize_trace(k, &cfg, seed, constants, &opts)?;
                trace_latency_ms(model, &trace, spec.stride, onset, dt)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(LatencyRow {
            power_dbm: power,
            distance_m: distance,
            onset_ms: onset as f64 * dt * 1000.0,
            latencies_ms: latencies,
        });
    }
    Ok(LatencyTable { rows })
}
