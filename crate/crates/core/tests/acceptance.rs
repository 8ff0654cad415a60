//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,4,8` restricts the run to the listed criteria.
//! `ACCEPTANCE_STRICT=1` makes any failed criterion fail the process.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uavjam::channel::{pathloss_db, LinkState, RadioConstants};
use uavjam::dataset::{
    split_folds, synthesize_trace, synthesize_traces, window_dataset, TraceOptions, TracePair,
    WindowedExample,
};
use uavjam::evaluation::{
    accuracy_from_errors, compute_metrics, detection_latency_sweep, evaluate_section, f1_score,
    ConfusionMatrix, LatencySpec, Pipelines,
};
use uavjam::nnet::gradcheck::run_layer_checks;
use uavjam::nnet::{count_parameters, Model, ModelConfig, Variant};
use uavjam::scenario::{MobilityGroup, ScenarioConfig};
use uavjam::training::{cross_validate, train_fold, Task, TrainConfig};

/// Learning rate used for every desk-scale training run.
const DESK_LR: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn cfg(users: usize, attackers: usize, power: f64, distance: f64, sim_time_s: f64) -> ScenarioConfig {
    ScenarioConfig {
        num_users: users,
        num_attackers: attackers,
        attacker_power_dbm: power,
        serving_distance_m: distance,
        mobility_group: MobilityGroup::NoneSpeed,
        sim_time_s,
        ..ScenarioConfig::default()
    }
}

fn desk_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: DESK_LR,
        epochs,
        seed,
        ..TrainConfig::default()
    }
}

fn crit1() -> Outcome {
    let f1a = f1_score(0.79, 0.92);
    let f1b = f1_score(0.90, 0.55);
    let acc_a = accuracy_from_errors(72_288, 11_407);
    let acc_b = accuracy_from_errors(315_800, 80_537);
    let round2 = |x: f64| (x * 100.0).round() / 100.0;
    // Same identities through the confusion-matrix path.
    let mut cm = ConfusionMatrix::new(vec!["clean".into(), "jammed".into()]);
    for (t, p, n) in [(1usize, 1usize, 92u64), (1, 0, 8), (0, 1, 24), (0, 0, 76)] {
        for _ in 0..n {
            cm.record(t, p);
        }
    }
    let m = compute_metrics(&cm).expect("non-empty matrix");
    let f1_cm = m.classes[1].f1;
    let pass = round2(f1a) == 0.85
        && round2(f1b) == 0.68
        && (acc_a - 0.842).abs() < 5e-4
        && (acc_b - 0.745).abs() < 5e-4
        && (f1_cm - f1_score(92.0 / 116.0, 0.92)).abs() < 1e-12;
    outcome(
        pass,
        format!("f1 {f1a:.4} / {f1b:.4}, accuracy {acc_a:.4} / {acc_b:.4}"),
    )
}

fn crit2() -> Outcome {
    let reports = run_layer_checks(5, 2024);
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let detail = reports
        .iter()
        .map(|r| format!("{} {:.1e} ({} shapes)", r.layer, r.max_rel_error, r.shapes.len()))
        .collect::<Vec<_>>()
        .join(", ");
    let pass = reports.len() == 5 && reports.iter().all(|r| r.shapes.len() >= 5) && worst < 1e-4;
    outcome(pass, detail)
}

fn crit3() -> Outcome {
    let count = |v| {
        let m = Model::<f32>::new(ModelConfig::table(v, 2, 256), 0).expect("table config");
        count_parameters(&m)
    };
    let (a, l) = (count(Variant::Attention), count(Variant::Lstm));
    let ratio = a as f64 / l as f64;
    outcome(ratio <= 0.6, format!("attention {a}, lstm {l}, ratio {ratio:.3} (<= 0.6)"))
}

fn crit4() -> Outcome {
    let constants = RadioConstants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_norm: f64 = 0.0;
    for k in [0.0, constants.rician_k_linear()] {
        let n = 100_000;
        let mut sum = 0.0;
        for i in 0..n {
            let mut link = LinkState::new(0, 1, true, 0.0, k, &constants, &mut rng);
            link.doppler_hz = 11.7;
            sum += link.gain(i as f64 * 1e-3, i % link.subchannels()).norm_sqr();
        }
        worst_norm = worst_norm.max((sum / n as f64 - 1.0).abs());
    }

    let mut jam_ok = true;
    let mut slots = 0usize;
    for (i, (power, distance, users)) in [(0.0, 100.0, 0), (2.0, 500.0, 5), (20.0, 200.0, 20), (10.0, 100.0, 3)]
        .into_iter()
        .enumerate()
    {
        let c = cfg(users, 1, power, distance, 0.5);
        let seed = 400 + i as u64;
        let n = (c.sim_time_s / constants.slot_duration_s).round() as usize;
        let silent = TraceOptions {
            jammer_onset_slot: Some(n),
        };
        let clean = synthesize_trace(0, &c, seed, &constants, &silent).expect("trace");
        let jammed = synthesize_trace(0, &c, seed, &constants, &TraceOptions::default()).expect("trace");
        for s in 0..n {
            jam_ok &= jammed.sinr[s] < clean.sinr[s] && jammed.rssi[s] > clean.rssi[s];
        }
        slots += n;
    }

    let mut pl_ok = true;
    for los in [true, false] {
        let mut prev = f64::NEG_INFINITY;
        for d in (1..=2000).map(|i| i as f64 * 0.75 + 1.0) {
            let pl = pathloss_db(d, los, &constants).expect("distance in range");
            pl_ok &= pl > prev && pl > 0.0;
            prev = pl;
        }
    }
    outcome(
        worst_norm < 0.01 && jam_ok && pl_ok,
        format!(
            "|E|g|^2 - 1| = {worst_norm:.4}, jammer monotone on {slots} slots: {jam_ok}, pathloss monotone: {pl_ok}"
        ),
    )
}

/// Trace-level disjointness of every fold, plus full coverage of the traces.
fn folds_clean(examples: &[WindowedExample], k: usize, seed: u64) -> bool {
    let folds = split_folds(examples, k, seed).expect("enough traces");
    let all: BTreeSet<usize> = examples.iter().map(|e| e.trace_id).collect();
    let mut covered = BTreeSet::new();
    for f in &folds {
        let train: BTreeSet<usize> = f.train.iter().map(|&i| examples[i].trace_id).collect();
        let val: BTreeSet<usize> = f.val.iter().map(|&i| examples[i].trace_id).collect();
        if !train.is_disjoint(&val) || val != f.val_traces || train.len() + val.len() != all.len() {
            return false;
        }
        if !covered.is_disjoint(&val) {
            return false;
        }
        covered.extend(val);
    }
    covered == all
}

struct LearnedModel {
    model: Model<f32>,
}

fn crit5(state: &mut Option<LearnedModel>, hygiene: &mut Vec<bool>) -> Outcome {
    let constants = RadioConstants::default();
    let grid: Vec<ScenarioConfig> = (0..200).map(|i| cfg(0, i % 2, 20.0, 100.0, 1.024)).collect();
    let traces = synthesize_traces(&grid, 5, &constants).expect("simulation");
    let examples = window_dataset(&traces, 256, 128).expect("windows");
    hygiene.push(folds_clean(&examples, 5, 5));
    let config = desk_config(5, 20);
    let mc = ModelConfig::table(Variant::Attention, 2, 256);
    let report = match cross_validate(&examples, 5, Task::Stage1, &mc, &config) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("training failed: {e}")),
    };
    let best = report
        .folds
        .iter()
        .min_by(|a, b| a.val.loss.total_cmp(&b.val.loss))
        .expect("five folds");
    *state = Some(LearnedModel {
        model: best.outcome.model.clone(),
    });
    let acc = report.pooled_accuracy();
    outcome(
        acc >= 0.95,
        format!(
            "pooled validation accuracy {acc:.4} over {} windows (>= 0.95)",
            report.pooled.total()
        ),
    )
}

/// One seed of the trend and generalization protocol.
struct SeedResult {
    users0: f64,
    users20: f64,
    power20: f64,
    power2: f64,
    held_out: f64,
    held_out_windows: usize,
}

const HELD_OUT: (f64, f64) = (2.0, 200.0);
const TREND_WINDOW: usize = 128;

fn trend_grid(replicas: usize) -> Vec<ScenarioConfig> {
    let mut grid = Vec::new();
    for users in [0, 20] {
        for attackers in [0, 1] {
            for power in [2.0, 20.0] {
                for distance in [100.0, 200.0] {
                    for _ in 0..replicas {
                        grid.push(cfg(users, attackers, power, distance, 2.048));
                    }
                }
            }
        }
    }
    grid
}

fn is_held_out(c: &ScenarioConfig) -> bool {
    c.attacker_power_dbm == HELD_OUT.0 && c.serving_distance_m == HELD_OUT.1
}

fn trend_seed(seed: u64, hygiene: &mut Vec<bool>) -> uavjam::Result<SeedResult> {
    let constants = RadioConstants::default();
    let traces = synthesize_traces(&trend_grid(6), 600 + seed, &constants)?;
    let (held, kept): (Vec<TracePair>, Vec<TracePair>) = traces.into_iter().partition(|t| is_held_out(&t.config));
    let examples = window_dataset(&kept, TREND_WINDOW, TREND_WINDOW / 2)?;
    let folds = split_folds(&examples, 5, seed)?;
    hygiene.push(folds_clean(&examples, 5, seed));
    let fold = &folds[0];
    let model = Model::<f32>::new(ModelConfig::table(Variant::Attention, 2, TREND_WINDOW), seed)?;
    let outcome = train_fold(model, &examples, &fold.train, &fold.val, Task::Stage1, &desk_config(seed, 20))?;
    let trained: BTreeSet<usize> = fold.train.iter().map(|&i| examples[i].trace_id).collect();
    hygiene.push(held.iter().all(|t| !trained.contains(&t.id)));

    // Fresh traces over the full grid, ids offset past the training set.
    let mut test = synthesize_traces(&trend_grid(2), 900 + seed, &constants)?;
    for t in &mut test {
        t.id += 10_000;
    }
    let configs: BTreeMap<usize, ScenarioConfig> =
        held.iter().chain(&test).map(|t| (t.id, t.config.clone())).collect();
    let pipelines = Pipelines {
        stage1: &outcome.model,
        stage2: None,
        three_class: None,
    };
    let test_windows = window_dataset(&test, TREND_WINDOW, TREND_WINDOW / 2)?;
    let section = evaluate_section("Test", pipelines, &test_windows, &configs)?;
    let held_test: Vec<TracePair> = test.iter().filter(|t| is_held_out(&t.config)).cloned().collect();
    let held_windows = window_dataset(&[held, held_test].concat(), TREND_WINDOW, TREND_WINDOW / 2)?;
    let held_section = evaluate_section("Held-out", pipelines, &held_windows, &configs)?;

    let users = &section.sweeps.users;
    let acc_of = |t: &uavjam::evaluation::SweepTable, key: &[&str]| t.row(key).and_then(|r| r.accuracy()).unwrap_or(0.0);
    let power = |p: &str| {
        let rows: Vec<_> = section.sweeps.power_distance.rows.iter().filter(|r| r.key[0] == p).collect();
        let c: u64 = rows.iter().map(|r| r.correct).sum();
        let t: u64 = rows.iter().map(|r| r.total).sum();
        c as f64 / t.max(1) as f64
    };
    Ok(SeedResult {
        users0: acc_of(users, &["0"]),
        users20: acc_of(users, &["20"]),
        power20: power("20"),
        power2: power("2"),
        held_out: held_section.stage1.accuracy(),
        held_out_windows: held_section.windows,
    })
}

fn crit6_7(hygiene: &mut Vec<bool>) -> (Outcome, Outcome) {
    let mut results = Vec::new();
    for seed in 0..5 {
        match trend_seed(seed, hygiene) {
            Ok(r) => results.push(r),
            Err(e) => {
                let o = || outcome(false, format!("seed {seed} failed: {e}"));
                return (o(), o());
            }
        }
    }
    let users_ok = results.iter().filter(|r| r.users0 >= r.users20).count();
    let power_ok = results.iter().filter(|r| r.power20 >= r.power2).count();
    let held_ok = results.iter().filter(|r| r.held_out > 0.5).count();
    let fmt = |f: &dyn Fn(&SeedResult) -> String| results.iter().map(f).collect::<Vec<_>>().join(" ");
    let trend = outcome(
        users_ok >= 4 && power_ok >= 4,
        format!(
            "0 >= 20 users on {users_ok}/5 seeds [{}], 20 >= 2 dBm on {power_ok}/5 seeds [{}]",
            fmt(&|r| format!("{:.3}/{:.3}", r.users0, r.users20)),
            fmt(&|r| format!("{:.3}/{:.3}", r.power20, r.power2)),
        ),
    );
    let held = outcome(
        held_ok >= 4,
        format!(
            "held-out (2 dBm, 200 m) accuracy > 0.5 on {held_ok}/5 seeds [{}]",
            fmt(&|r| format!("{:.3}@{}", r.held_out, r.held_out_windows))
        ),
    );
    (trend, held)
}

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("readable dir") {
            let p = entry.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "run_manifest.txt") {
                let rel = p.strip_prefix(root).expect("prefix").display().to_string();
                out.insert(rel, std::fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

fn uavjam(args: &[&str], cwd: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_uavjam"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn crit8() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();
    std::fs::write(
        dir.join("grid.toml"),
        "[dataset]\nreplicas = 3\n[scenario]\nsim_time_s = 0.512\n[grid]\nmobility_groups = [\"none_speed\", \"both_speed\"]\nusers = [0, 3]\nattackers = [0, 1]\n",
    )
    .expect("write grid");
    let mut ok = true;
    for out in ["a", "b"] {
        ok &= uavjam(&["--seed", "8", "--config", "grid.toml", "--out", out, "simulate"], dir);
    }
    let (a, b) = (files_under(&dir.join("a")), files_under(&dir.join("b")));
    let sim_same = ok && !a.is_empty() && a == b;
    for out in ["ta", "tb"] {
        ok &= uavjam(
            &[
                "--seed", "8", "--jobs", "1", "--out", out, "train", "--data", "a", "--window", "128", "--stride",
                "64", "--folds", "2", "--epochs", "2", "--lr", "1e-3",
            ],
            dir,
        );
    }
    let (ta, tb) = (files_under(&dir.join("ta")), files_under(&dir.join("tb")));
    let train_same = ok
        && ta.keys().any(|k| k.ends_with(".ckpt"))
        && ta.keys().any(|k| k.starts_with("history"))
        && ta == tb;
    outcome(
        sim_same && train_same,
        format!(
            "simulate trees identical: {sim_same} ({} files), train outputs identical: {train_same} ({} files)",
            a.len(),
            ta.len()
        ),
    )
}

fn crit9(hygiene: &[bool]) -> Outcome {
    let constants = RadioConstants::default();
    let grid: Vec<ScenarioConfig> = (0..40).map(|i| cfg(i % 3, i % 2, 10.0, 200.0, 0.3)).collect();
    let traces = synthesize_traces(&grid, 9, &constants).expect("simulation");
    let examples = window_dataset(&traces, 128, 32).expect("windows");
    let mut checks = hygiene.to_vec();
    for seed in 0..10 {
        for k in [2, 3, 5, 10] {
            checks.push(folds_clean(&examples, k, seed));
        }
    }
    let clean = checks.iter().filter(|&&c| c).count();
    outcome(clean == checks.len(), format!("{clean}/{} partitionings disjoint and covering", checks.len()))
}

fn crit10(state: &Option<LearnedModel>) -> Outcome {
    let Some(learned) = state else {
        return outcome(false, "no trained model (criterion 5 did not run)");
    };
    let constants = RadioConstants::default();
    let spec = LatencySpec {
        base: cfg(0, 1, 20.0, 100.0, 2.048),
        powers_dbm: vec![20.0],
        distances_m: vec![100.0],
        onset_slots: vec![1024],
        traces_per_cell: 20,
        stride: 32,
        seed: 10,
        clean_control: true,
    };
    let table = match detection_latency_sweep(&learned.model, &spec, &constants) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let jammed = table.rows.iter().find(|r| r.power_dbm.is_some()).expect("jammed row");
    let clean = table.rows.iter().find(|r| r.power_dbm.is_none()).expect("control row");
    let det = jammed.detected() as f64 / jammed.traces() as f64;
    let quiet = clean.never_detected() as f64 / clean.traces() as f64;
    outcome(
        det >= 0.9 && quiet >= 0.9,
        format!(
            "detected {}/{} jammed (median {} ms), NeverDetected {}/{} clean",
            jammed.detected(),
            jammed.traces(),
            jammed.median_ms().map_or("-".into(), |m| format!("{m:.0}")),
            clean.never_detected(),
            clean.traces()
        ),
    )
}

fn main() -> ExitCode {
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let names = [
        "",
        "metrics identities",
        "gradient checks",
        "parameter-count ratio",
        "channel properties",
        "end-to-end learnability",
        "trend reproduction",
        "held-out generalization",
        "determinism",
        "fold hygiene",
        "latency harness",
    ];
    let mut failed = 0;
    let mut report = |n: u32, start: Instant, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {n:>2} {}: {} ({:.1}s)",
            names[n as usize],
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    };
    let mut learned = None;
    let mut hygiene = Vec::new();
    let simple: [(u32, fn() -> Outcome); 4] = [(1, crit1), (2, crit2), (3, crit3), (4, crit4)];
    for (n, f) in simple {
        if wanted(n) {
            let t = Instant::now();
            report(n, t, f());
        }
    }
    if wanted(5) || wanted(10) {
        let t = Instant::now();
        let o = crit5(&mut learned, &mut hygiene);
        if wanted(5) {
            report(5, t, o);
        }
    }
    if wanted(10) {
        let t = Instant::now();
        report(10, t, crit10(&learned));
    }
    if wanted(6) || wanted(7) {
        let t = Instant::now();
        let (trend, held) = crit6_7(&mut hygiene);
        if wanted(6) {
            report(6, t, trend);
        }
        if wanted(7) {
            report(7, t, held);
        }
    }
    if wanted(8) {
        let t = Instant::now();
        report(8, t, crit8());
    }
    if wanted(9) {
        let t = Instant::now();
        report(9, t, crit9(&hygiene));
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("{failed} acceptance criteria failed (set ACCEPTANCE_STRICT=1 to fail the run)");
        ExitCode::SUCCESS
    }
}
