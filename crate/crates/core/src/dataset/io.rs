use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dataset::{BinaryLabel, MotionLabel, TracePair};
use crate::error::{Error, Result};
use crate::scenario::{MobilityGroup, ScenarioConfig};

pub const DATASET_FILE: &str = "dataset.txt";

/// Nine significant digits, scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

/// Rounds `v` to the precision written to disk.
pub fn quantize(v: f64) -> f64 {
    format_value(v).parse().expect("formatted float parses")
}

fn series_csv(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 24 + 16);
    out.push_str("slot,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", format_value(*v));
    }
    out
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn meta_txt(t: &TracePair) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "trace_id={}", t.id);
    for (k, v) in t.config.to_kv_lines() {
        if k != "seed" {
            let _ = writeln!(out, "{k}={v}");
        }
    }
    let _ = writeln!(out, "seed={}", t.seed);
    let _ = writeln!(out, "slots={}", t.len());
    let _ = writeln!(out, "binary_label={}", t.binary_label);
    let _ = writeln!(
        out,
        "motion_label={}",
        t.motion_label.map(|m| m.as_str()).unwrap_or("")
    );
    if let Some(onset) = t.jammer_onset_slot {
        let _ = writeln!(out, "jammer_onset_slot={onset}");
    }
    out
}

/// Writes `rssi.csv`, `sinr.csv` and `meta.txt` for one trace.
pub fn write_trace(root: &Path, t: &TracePair) -> Result<()> {
    let dir = root.join(t.relative_dir());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_file(&dir.join("rssi.csv"), &series_csv(&t.rssi))?;
    write_file(&dir.join("sinr.csv"), &series_csv(&t.sinr))?;
    write_file(&dir.join("meta.txt"), &meta_txt(t))
}

pub(crate) fn write_dataset_info(root: &Path, master_seed: u64, traces: usize) -> Result<()> {
    let body = format!("master_seed={master_seed}\ntraces={traces}\n");
    write_file(&root.join(DATASET_FILE), &body)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("slot,value") => {}
        other => {
            return Err(Error::Data(format!(
                "{}: expected header `slot,value`, found {:?}",
                path.display(),
                other
            )))
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let (slot, value) = line.split_once(',').ok_or_else(|| {
                Error::Data(format!("{}:{}: malformed row", path.display(), i + 2))
            })?;
            if slot.parse::<usize>().ok() != Some(i) {
                return Err(Error::Data(format!(
                    "{}:{}: slot index out of sequence",
                    path.display(),
                    i + 2
                )));
            }
            value.parse::<f64>().map_err(|_| {
                Error::Data(format!("{}:{}: bad value `{value}`", path.display(), i + 2))
            })
        })
        .collect()
}

pub(crate) fn parse_kv(text: &str) -> Vec<(&str, &str)> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .collect()
}

/// Reads one scenario folder.
pub fn read_trace_dir(dir: &Path) -> Result<TracePair> {
    let meta = read_to_string(&dir.join("meta.txt"))?;
    let kv = parse_kv(&meta);
    let get = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
    let need = |key: &str| {
        get(key).ok_or_else(|| Error::Data(format!("{}: meta.txt lacks `{key}`", dir.display())))
    };
    let config = ScenarioConfig::from_kv(kv.iter().copied())?;
    let id: usize = need("trace_id")?
        .parse()
        .map_err(|_| Error::Data(format!("{}: bad trace_id", dir.display())))?;
    let seed: u64 = need("seed")?
        .parse()
        .map_err(|_| Error::Data(format!("{}: bad seed", dir.display())))?;
    let binary_label = BinaryLabel::parse(need("binary_label")?)?;
    let motion_label = match get("motion_label").map(str::trim) {
        None | Some("") => None,
        Some(m) => Some(MotionLabel::parse(m)?),
    };
    if (binary_label == BinaryLabel::YesJamming) != motion_label.is_some() {
        return Err(Error::Data(format!(
            "{}: motion label must be present exactly for jammed traces",
            dir.display()
        )));
    }
    let jammer_onset_slot = match get("jammer_onset_slot") {
        Some(v) => Some(
            v.parse()
                .map_err(|_| Error::Data(format!("{}: bad jammer_onset_slot", dir.display())))?,
        ),
        None => None,
    };
    let rssi = read_series(&dir.join("rssi.csv"))?;
    let sinr = read_series(&dir.join("sinr.csv"))?;
    if rssi.len() != sinr.len() {
        return Err(Error::Data(format!(
            "{}: rssi has {} slots, sinr has {}",
            dir.display(),
            rssi.len(),
            sinr.len()
        )));
    }
    Ok(TracePair {
        id,
        config,
        seed,
        rssi,
        sinr,
        binary_label,
        motion_label,
        jammer_onset_slot,
    })
}

/// Reads every trace under the four group directories, ordered by trace id.
pub fn read_dataset(root: &Path) -> Result<Vec<TracePair>> {
    let mut traces = Vec::new();
    for g in MobilityGroup::ALL {
        let dir = root.join(g.dir_name());
        if !dir.is_dir() {
            continue;
        }
        let mut entries: Vec<_> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        entries.sort();
        for e in entries {
            traces.push(read_trace_dir(&e)?);
        }
    }
    if traces.is_empty() {
        return Err(Error::Data(format!("no traces found under {}", root.display())));
    }
    traces.sort_by_key(|t| t.id);
    Ok(traces)
}
