//! The `uavjam` command: simulate, window, train, eval, latency, report.
//!
//! Exit codes: 0 success, 1 I/O or internal, 2 configuration, 3 placement,
//! 4 data, 5 checkpoint or window compatibility.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::channel::RadioConstants;
use crate::dataset::{
    read_dataset, select_window_size, synthesize_dataset, window_dataset, GridSpec, TracePair,
    WindowedExample, DEFAULT_STRIDE, DEFAULT_WINDOW,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    detection_latency_sweep, evaluate_section, write_reports, LatencySpec, Pipelines,
    REPORT_FILES,
};
use crate::nnet::{count_parameters, load_checkpoint, save_checkpoint, Model, ModelConfig, Variant};
use crate::training::{
    cross_validate, write_history, HybridConfig, Task, TrainConfig,
};

pub const MANIFEST_FILE: &str = "run_manifest.txt";
pub const WINDOW_FILE: &str = "window.txt";

#[derive(Debug, Parser)]
#[command(name = "uavjam", version, about = "Jamming detection for UAV air-to-ground links")]
pub struct Cli {
    /// Master seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Simulation manifest (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the dataset tree described by --config.
    Simulate,
    /// Pick the window size from the autocorrelation of the traces.
    Window(WindowArgs),
    /// k-fold training of one stage.
    Train(TrainArgs),
    /// Evaluate checkpoints and write the reports directory.
    Eval(EvalArgs),
    /// Detection-latency sweep with a delayed jammer.
    Latency(LatencyArgs),
    /// Rebuild report.md from the CSV tables in --out.
    Report,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Fixed window size instead of the autocorrelation rule.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Traces sampled for the autocorrelation estimate.
    #[arg(long, default_value_t = 64)]
    pub sample: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Attention,
    Lstm,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Attention => Variant::Attention,
            VariantArg::Lstm => Variant::Lstm,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WindowingArgs {
    /// Window size; defaults to the data's window.txt, else 256.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Held-out cell as POWER_DBM:DISTANCE_M; repeatable.
    #[arg(long = "holdout", value_parser = parse_cell)]
    pub holdout: Vec<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "attention")]
    pub variant: VariantArg,
    /// 1, 2 or 3class.
    #[arg(long, default_value = "1")]
    pub stage: Task,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2.5e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Train with the PSO/GA/GD hybrid.
    #[arg(long)]
    pub hybrid: bool,
    #[arg(long, default_value_t = 8)]
    pub population: usize,
    #[arg(long, default_value_t = 10)]
    pub generations: usize,
    #[command(flatten)]
    pub windowing: WindowingArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "stage1-ckpt")]
    pub stage1_ckpt: PathBuf,
    #[arg(long = "stage2-ckpt")]
    pub stage2_ckpt: Option<PathBuf>,
    #[arg(long = "3class-ckpt")]
    pub three_class_ckpt: Option<PathBuf>,
    #[command(flatten)]
    pub windowing: WindowingArgs,
}

#[derive(Debug, Args)]
pub struct LatencyArgs {
    #[arg(long = "stage1-ckpt")]
    pub stage1_ckpt: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 10.0, 20.0])]
    pub powers: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![100.0, 200.0, 500.0])]
    pub distances: Vec<f64>,
    /// Jammer onset times in milliseconds.
    #[arg(long = "onset-ms", value_delimiter = ',', default_values_t = vec![10_000.0])]
    pub onset_ms: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub traces: usize,
    /// Window stride in slots (default: window / 8).
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub attackers: Option<usize>,
    #[arg(long)]
    pub users: Option<usize>,
    /// Leave out the attacker-free control rows.
    #[arg(long)]
    pub no_control: bool,
}

fn parse_cell(s: &str) -> std::result::Result<(f64, f64), String> {
    let (p, d) = s
        .split_once(':')
        .ok_or_else(|| format!("expected POWER_DBM:DISTANCE_M, got `{s}`"))?;
    let p = p.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let d = d.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((p, d))
}

/// Provenance written at the start of every run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub master_seed: u64,
    pub out: PathBuf,
    pub version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>, master_seed: u64, out: &Path) -> Self {
        let timestamp_unix = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| {
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            });
        Self {
            command: command.to_string(),
            config: config.map(Path::to_path_buf),
            master_seed,
            out: out.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix,
        }
    }

    pub fn to_kv(&self) -> String {
        format!(
            "command={}\nconfig={}\nmaster_seed={}\nout={}\nversion={}\ntimestamp_unix={}\n",
            self.command,
            self.config.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            self.master_seed,
            self.out.display(),
            self.version,
            self.timestamp_unix
        )
    }

    pub fn write(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let path = self.out.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_kv()).map_err(|e| Error::io(&path, e))
    }
}

/// Window size and stride stored next to a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowChoice {
    pub window: usize,
    pub stride: usize,
}

impl WindowChoice {
    pub fn read(data: &Path) -> Result<Option<Self>> {
        let path = data.join(WINDOW_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let get = |key: &str| -> Result<usize> {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Data(format!("{}: missing `{key}`", path.display())))
        };
        Ok(Some(Self {
            window: get("window")?,
            stride: get("stride")?,
        }))
    }
}

fn resolve_windowing(data: &Path, args: &WindowingArgs, default_window: Option<usize>) -> Result<WindowChoice> {
    let stored = WindowChoice::read(data)?;
    let window = args
        .window
        .or(default_window)
        .or(stored.map(|s| s.window))
        .unwrap_or(DEFAULT_WINDOW);
    let stride = args
        .stride
        .or(stored.filter(|s| s.window == window).map(|s| s.stride))
        .unwrap_or(if window == DEFAULT_WINDOW { DEFAULT_STRIDE } else { window / 2 });
    if window == 0 || stride == 0 {
        return Err(Error::Config("window and stride must be positive".into()));
    }
    Ok(WindowChoice { window, stride })
}

fn in_cells(cfg: &crate::scenario::ScenarioConfig, cells: &[(f64, f64)]) -> bool {
    cells.iter().any(|&(p, d)| {
        (cfg.attacker_power_dbm - p).abs() < 1e-9
            && (cfg.serving_distance_m - d).abs() < 1e-9
    })
}

fn check_lengths(traces: &[TracePair], window: usize) -> Result<()> {
    if let Some(t) = traces.iter().find(|t| t.len() < window) {
        return Err(Error::Compatibility(format!(
            "window size {window} exceeds trace {} length {}",
            t.id,
            t.len()
        )));
    }
    Ok(())
}

fn configure_pool(jobs: Option<usize>) {
    if let Some(j) = jobs {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
}

fn default_out(cli: &Cli, fallback: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn cmd_simulate(cli: &Cli) -> Result<String> {
    let config = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("simulate needs --config <FILE>".into()))?;
    let spec = GridSpec::from_file(config)?;
    let seed = cli.seed.or(spec.dataset.master_seed).unwrap_or(0);
    let out = default_out(cli, "data");
    RunManifest::new("simulate", Some(config), seed, &out).write()?;
    let grid = spec.expand();
    let traces = synthesize_dataset(&grid, seed, &spec.radio, &out)?;
    Ok(format!("simulated {} traces into {}", traces.len(), out.display()))
}

fn cmd_window(cli: &Cli, args: &WindowArgs) -> Result<String> {
    let traces = read_dataset(&args.data)?;
    let out = cli.out.clone().unwrap_or_else(|| args.data.clone());
    RunManifest::new("window", cli.config.as_deref(), cli.seed.unwrap_or(0), &out).write()?;
    let (window, rule) = match args.window {
        Some(w) => (w, "fixed".to_string()),
        None => {
            let n = args.sample.max(1).min(traces.len());
            let step = traces.len() / n;
            let mut sample: Vec<&[f64]> = Vec::new();
            for t in traces.iter().step_by(step.max(1)).take(n) {
                sample.push(&t.sinr);
            }
            let acf = select_window_size(&sample)?;
            let min = ModelConfig::table(Variant::Attention, 2, acf).min_window();
            if acf < min {
                (min.next_power_of_two(), format!("autocorrelation {acf}, raised to the model minimum"))
            } else {
                (acf, "autocorrelation".to_string())
            }
        }
    };
    let stride = args.stride.unwrap_or(if window == DEFAULT_WINDOW { DEFAULT_STRIDE } else { window / 2 }).max(1);
    check_lengths(&traces, window)?;
    let examples = window_dataset(&traces, window, stride)?;
    let jammed = examples
        .iter()
        .filter(|e| e.binary_label == crate::dataset::BinaryLabel::YesJamming)
        .count();
    let body = format!(
        "window={window}\nstride={stride}\nrule={rule}\ntraces={}\nwindows={}\njammed_windows={jammed}\n",
        traces.len(),
        examples.len()
    );
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let path = out.join(WINDOW_FILE);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(format!(
        "window {window} stride {stride} ({rule}): {} windows from {} traces",
        examples.len(),
        traces.len()
    ))
}

/// Traces and windows for training or evaluation, split by held-out cells.
fn load_windows(
    data: &Path,
    choice: WindowChoice,
    holdout: &[(f64, f64)],
) -> Result<(Vec<TracePair>, Vec<WindowedExample>, Vec<WindowedExample>)> {
    let traces = read_dataset(data)?;
    check_lengths(&traces, choice.window)?;
    let (held, kept): (Vec<TracePair>, Vec<TracePair>) =
        traces.iter().cloned().partition(|t| in_cells(&t.config, holdout));
    let kept_w = window_dataset(&kept, choice.window, choice.stride)?;
    let held_w = window_dataset(&held, choice.window, choice.stride)?;
    Ok((traces, kept_w, held_w))
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<String> {
    if args.folds < 2 {
        return Err(Error::Config(format!("--folds must be at least 2, got {}", args.folds)));
    }
    let seed = cli.seed.unwrap_or(0);
    let out = default_out(cli, "runs/train");
    RunManifest::new("train", cli.config.as_deref(), seed, &out).write()?;
    let choice = resolve_windowing(&args.data, &args.windowing, None)?;
    let (_, examples, _) = load_windows(&args.data, choice, &args.windowing.holdout)?;
    let task = args.stage;
    let examples = task.filter(examples);
    if examples.is_empty() {
        return Err(Error::Data(match task {
            Task::Stage2 => "stage 2 needs Yes Jamming traces, the dataset has none".to_string(),
            _ => "no training windows".to_string(),
        }));
    }
    let model_config = ModelConfig::table(args.variant.into(), task.classes(), choice.window);
    model_config.validate()?;
    let config = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed,
        patience: args.patience,
        hybrid: args.hybrid.then(|| HybridConfig {
            population: args.population,
            generations: args.generations,
            ..HybridConfig::default()
        }),
        ..TrainConfig::default()
    };
    config.validate()?;
    let params = count_parameters(&Model::<f32>::new(model_config.clone(), 0)?);
    let report = cross_validate(&examples, args.folds, task, &model_config, &config)?;

    let mut summary = String::new();
    let mut best: Option<(f64, usize)> = None;
    for f in &report.folds {
        let path = out.join(format!("fold{}.ckpt", f.index));
        save_checkpoint(&f.outcome.model, &path)?;
        write_history(&out.join(format!("history_fold{}.csv", f.index)), &f.outcome.history)?;
        let _ = writeln!(
            summary,
            "fold={} val_windows={} val_loss={:.6} val_acc={:.6} best_epoch={}",
            f.index,
            f.val_indices.len(),
            f.val.loss,
            f.val.accuracy,
            f.outcome.best_epoch
        );
        if best.is_none_or(|(l, _)| f.val.loss < l) {
            best = Some((f.val.loss, f.index));
        }
    }
    let (_, best_fold) = best.expect("at least two folds");
    save_checkpoint(&report.folds[best_fold].outcome.model, &out.join("model.ckpt"))?;
    let _ = writeln!(
        summary,
        "variant={} stage={task} parameters={params} window={} stride={} mean_acc={:.6} std_acc={:.6} pooled_acc={:.6} best_fold={best_fold}",
        Variant::from(args.variant),
        choice.window,
        choice.stride,
        report.mean_accuracy,
        report.std_accuracy,
        report.pooled_accuracy()
    );
    let path = out.join("cv_summary.txt");
    std::fs::write(&path, &summary).map_err(|e| Error::io(&path, e))?;
    let path = out.join("confusion_pooled.csv");
    std::fs::write(&path, report.pooled.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(format!(
        "parameters ({}): {params}\n{}-fold accuracy {:.4} ± {:.4}, pooled {:.4}; checkpoints in {}",
        Variant::from(args.variant),
        args.folds,
        report.mean_accuracy,
        report.std_accuracy,
        report.pooled_accuracy(),
        out.display()
    ))
}

fn load_for_window(path: &Path, expected_classes: usize, data_window: Option<usize>) -> Result<Model<f32>> {
    let m = load_checkpoint(path)?;
    if m.config.output_classes != expected_classes {
        return Err(Error::Compatibility(format!(
            "{} has {} outputs, expected {expected_classes}",
            path.display(),
            m.config.output_classes
        )));
    }
    if let Some(w) = data_window {
        if w != m.config.window {
            return Err(Error::Compatibility(format!(
                "checkpoint {} expects window {} but the data uses window {w}",
                path.display(),
                m.config.window
            )));
        }
    }
    Ok(m)
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<String> {
    let out = default_out(cli, "reports");
    RunManifest::new("eval", cli.config.as_deref(), cli.seed.unwrap_or(0), &out).write()?;
    let stored = WindowChoice::read(&args.data)?;
    let data_window = args.windowing.window.or(stored.map(|s| s.window));
    let stage1 = load_for_window(&args.stage1_ckpt, 2, data_window)?;
    let window = stage1.config.window;
    let stage2 = args
        .stage2_ckpt
        .as_deref()
        .map(|p| load_for_window(p, 2, Some(window)))
        .transpose()?;
    let three = args
        .three_class_ckpt
        .as_deref()
        .map(|p| load_for_window(p, 3, Some(window)))
        .transpose()?;
    let choice = resolve_windowing(&args.data, &args.windowing, Some(window))?;
    let (traces, kept, held) = load_windows(&args.data, choice, &args.windowing.holdout)?;
    let configs: BTreeMap<usize, _> = traces.iter().map(|t| (t.id, t.config.clone())).collect();
    let pipelines = Pipelines {
        stage1: &stage1,
        stage2: stage2.as_ref(),
        three_class: three.as_ref(),
    };
    let mut sections = Vec::new();
    let mut lines = Vec::new();
    let first_title = if args.windowing.holdout.is_empty() { "All cells" } else { "Training cells" };
    for (title, set) in [(first_title, &kept), ("Held-out cells", &held)] {
        if set.is_empty() && title == "Held-out cells" {
            continue;
        }
        let s = evaluate_section(title, pipelines, set, &configs)?;
        lines.push(format!(
            "{title}: stage-1 accuracy {:.4} over {} windows{}",
            s.stage1.accuracy(),
            s.windows,
            s.final_confusion()
                .map(|c| format!(", three-label accuracy {:.4}", c.accuracy()))
                .unwrap_or_default()
        ));
        sections.push(s);
    }
    if !args.windowing.holdout.is_empty() && held.is_empty() {
        lines.push("held-out cells matched no traces".to_string());
    }
    let latency = read_latency_csv(&out)?;
    let holdout_note = if args.windowing.holdout.is_empty() {
        String::new()
    } else {
        let cells: Vec<String> = args
            .windowing
            .holdout
            .iter()
            .map(|(p, d)| format!("{p} dBm at {d} m"))
            .collect();
        format!("Held-out cells (never trained on): {}.", cells.join(", "))
    };
    let preamble = format!(
        "Window {} slots, stride {}. {holdout_note}",
        choice.window, choice.stride
    );
    write_reports(&out, &sections, None, &preamble)?;
    if let Some(csv) = &latency {
        // Keep a latency table produced by an earlier `latency` run.
        std::fs::write(out.join("latency.csv"), csv.raw.as_bytes()).map_err(|e| Error::io(&out, e))?;
    }
    Ok(lines.join("\n"))
}

/// Previously written latency table, kept verbatim.
struct StoredLatency {
    raw: String,
}

fn read_latency_csv(dir: &Path) -> Result<Option<StoredLatency>> {
    let path = dir.join("latency.csv");
    if !path.exists() {
        return Ok(None);
    }
    let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok((raw.lines().count() > 1).then_some(StoredLatency { raw }))
}

fn cmd_latency(cli: &Cli, args: &LatencyArgs) -> Result<String> {
    let seed = cli.seed.unwrap_or(0);
    let out = default_out(cli, "reports");
    RunManifest::new("latency", cli.config.as_deref(), seed, &out).write()?;
    let (base, radio) = match cli.config.as_deref() {
        Some(p) => {
            let spec = GridSpec::from_file(p)?;
            (spec.scenario, spec.radio)
        }
        None => (Default::default(), RadioConstants::default()),
    };
    let model = load_for_window(&args.stage1_ckpt, 2, None)?;
    let mut base = base;
    if let Some(a) = args.attackers {
        base.num_attackers = a;
    }
    if let Some(u) = args.users {
        base.num_users = u;
    }
    base.num_attackers = base.num_attackers.max(1);
    let dt = radio.slot_duration_s;
    let onset_slots: Vec<usize> = args
        .onset_ms
        .iter()
        .map(|ms| (ms / 1000.0 / dt).round() as usize)
        .collect();
    let slots = (base.sim_time_s / dt).round() as usize;
    if let Some(&o) = onset_slots.iter().find(|&&o| o >= slots) {
        return Err(Error::Config(format!(
            "onset slot {o} is beyond the {slots}-slot trace"
        )));
    }
    let spec = LatencySpec {
        base,
        powers_dbm: args.powers.clone(),
        distances_m: args.distances.clone(),
        onset_slots,
        traces_per_cell: args.traces,
        stride: args.stride.unwrap_or((model.config.window / 8).max(1)),
        seed,
        clean_control: !args.no_control,
    };
    let table = detection_latency_sweep(&model, &spec, &radio)?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let path = out.join("latency.csv");
    std::fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
    let jammed: Vec<_> = table.rows.iter().filter(|r| r.power_dbm.is_some()).collect();
    let detected: usize = jammed.iter().map(|r| r.detected()).sum();
    let total: usize = jammed.iter().map(|r| r.traces()).sum();
    let best = jammed.iter().filter_map(|r| r.min_ms()).fold(f64::INFINITY, f64::min);
    Ok(format!(
        "latency: detected {detected}/{total} jammed traces, fastest {}",
        if best.is_finite() { format!("{best:.0} ms") } else { "never".to_string() }
    ))
}

fn csv_to_markdown(csv: &str) -> String {
    let mut lines = csv.lines();
    let Some(header) = lines.next() else {
        return "empty\n".to_string();
    };
    let cols: Vec<&str> = header.split(',').collect();
    let mut md = format!("| {} |\n|{}\n", cols.join(" | "), "---|".repeat(cols.len()));
    for l in lines {
        let _ = writeln!(md, "| {} |", l.split(',').collect::<Vec<_>>().join(" | "));
    }
    md
}

/// Aggregates every CSV table of a reports directory into `report.md`.
pub fn aggregate_report(dir: &Path) -> Result<PathBuf> {
    let mut md = String::from("# Jamming detection report\n\n");
    let mut extra: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && !REPORT_FILES.iter().any(|f| p.file_name().is_some_and(|n| n == *f))
        })
        .collect();
    extra.sort();
    let mut missing = Vec::new();
    let mains = REPORT_FILES.iter().map(|f| dir.join(f));
    for path in mains.chain(extra) {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
        match std::fs::read_to_string(&path) {
            Ok(csv) => {
                let _ = writeln!(md, "## {}\n\n{}", name.trim_end_matches(".csv"), csv_to_markdown(&csv));
            }
            Err(_) => missing.push(name),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "{} lacks {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    let path = dir.join("report.md");
    std::fs::write(&path, md).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn cmd_report(cli: &Cli) -> Result<String> {
    let dir = default_out(cli, "reports");
    let path = aggregate_report(&dir)?;
    Ok(format!("wrote {}", path.display()))
}

/// Runs one parsed invocation and returns its summary lines.
pub fn execute(cli: &Cli) -> Result<String> {
    configure_pool(cli.jobs);
    match &cli.command {
        Command::Simulate => cmd_simulate(cli),
        Command::Window(a) => cmd_window(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Latency(a) => cmd_latency(cli, a),
        Command::Report => cmd_report(cli),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            if !summary.is_empty() {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run() -> ExitCode {
    run_from(std::env::args_os())
}
