use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{BinaryLabel, JamLabel, WindowedExample};
use crate::error::{Error, Result};
use crate::evaluation::latency::LatencyTable;
use crate::evaluation::metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
use crate::evaluation::pipeline::{decide_two_stage, label_from_three};
use crate::evaluation::sweeps::{report_sweeps, SweepRecord, Sweeps};
use crate::nnet::{argmax, Model};
use crate::scenario::ScenarioConfig;
use crate::training::Task;

/// Models available to an evaluation run.
#[derive(Debug, Clone, Copy)]
pub struct Pipelines<'a> {
    pub stage1: &'a Model<f32>,
    pub stage2: Option<&'a Model<f32>>,
    pub three_class: Option<&'a Model<f32>>,
}

/// Everything reported for one set of windows.
#[derive(Debug, Clone)]
pub struct EvalSection {
    pub title: String,
    pub windows: usize,
    pub stage1: ConfusionMatrix,
    pub stage1_metrics: MetricsReport,
    /// Final labels of the two-stage pipeline.
    pub two_stage: Option<ConfusionMatrix>,
    pub three_class: Option<ConfusionMatrix>,
    /// Stage-1 correctness grouped by generating configuration.
    pub sweeps: Sweeps,
}

impl EvalSection {
    /// Three-label confusion of the preferred pipeline.
    pub fn final_confusion(&self) -> Option<&ConfusionMatrix> {
        self.two_stage.as_ref().or(self.three_class.as_ref())
    }
}

fn three_names() -> Vec<String> {
    JamLabel::ALL.iter().map(|l| l.as_str().to_string()).collect()
}

pub fn evaluate_section(
    title: &str,
    models: Pipelines<'_>,
    examples: &[WindowedExample],
    configs: &BTreeMap<usize, ScenarioConfig>,
) -> Result<EvalSection> {
    if examples.is_empty() {
        return Err(Error::Data(format!("evaluation set `{title}` is empty")));
    }
    let window = models.stage1.config.window;
    for m in [Some(models.stage1), models.stage2, models.three_class].into_iter().flatten() {
        if m.config.window != window {
            return Err(Error::Shape(format!(
                "checkpoint windows differ: {} vs {}",
                window, m.config.window
            )));
        }
    }
    struct Out {
        stage1: usize,
        two_stage: Option<JamLabel>,
        three: Option<JamLabel>,
    }
    let outs: Vec<Out> = examples
        .par_iter()
        .map(|e| {
            let p1 = models.stage1.predict(&e.rssi, &e.sinr)?;
            let stage1 = argmax(&p1);
            let two_stage = match models.stage2 {
                Some(s2) => Some(decide_two_stage(p1, || s2.predict(&e.rssi, &e.sinr))?.label),
                None => None,
            };
            let three = match models.three_class {
                Some(m) => Some(label_from_three(&m.predict(&e.rssi, &e.sinr)?)),
                None => None,
            };
            Ok(Out {
                stage1,
                two_stage,
                three,
            })
        })
        .collect::<Result<_>>()?;

    let mut stage1 = ConfusionMatrix::new(Task::Stage1.class_names());
    let mut two = models.stage2.map(|_| ConfusionMatrix::new(three_names()));
    let mut three = models.three_class.map(|_| ConfusionMatrix::new(three_names()));
    let mut records = Vec::with_capacity(examples.len());
    for (e, o) in examples.iter().zip(&outs) {
        let truth1 = usize::from(e.binary_label == BinaryLabel::YesJamming);
        stage1.record(truth1, o.stage1);
        if let (Some(cm), Some(l)) = (two.as_mut(), o.two_stage) {
            cm.record(e.label().index(), l.index());
        }
        if let (Some(cm), Some(l)) = (three.as_mut(), o.three) {
            cm.record(e.label().index(), l.index());
        }
        let config = configs.get(&e.trace_id).ok_or_else(|| {
            Error::Data(format!("no configuration recorded for trace {}", e.trace_id))
        })?;
        records.push(SweepRecord {
            config: config.clone(),
            correct: truth1 == o.stage1,
        });
    }
    Ok(EvalSection {
        title: title.to_string(),
        windows: examples.len(),
        stage1_metrics: compute_metrics(&stage1)?,
        stage1,
        two_stage: two,
        three_class: three,
        sweeps: report_sweeps(&records),
    })
}

/// Files every reports directory carries.
pub const REPORT_FILES: [&str; 8] = [
    "confusion_stage1.csv",
    "confusion_3class.csv",
    "metrics.csv",
    "sweep_users.csv",
    "sweep_power_distance.csv",
    "sweep_attackers.csv",
    "sweep_mobility.csv",
    "latency.csv",
];

fn slug(title: &str) -> String {
    title
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn metrics_csv(section: &EvalSection) -> Result<String> {
    let mut s = String::from("pipeline,class,precision,recall,f1,support\n");
    let mut push = |name: &str, m: &MetricsReport| {
        for c in &m.classes {
            let _ = writeln!(
                s,
                "{name},{},{:.4},{:.4},{:.4},{}",
                c.name, c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(s, "{name},accuracy,,,{:.4},{}", m.accuracy, m.total);
    };
    push("stage1", &section.stage1_metrics);
    if let Some(cm) = &section.two_stage {
        push("two_stage", &compute_metrics(cm)?);
    }
    if let Some(cm) = &section.three_class {
        push("three_class", &compute_metrics(cm)?);
    }
    Ok(s)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

/// Markdown aggregating every table of every section.
pub fn render_report(sections: &[EvalSection], latency: Option<&LatencyTable>, preamble: &str) -> Result<String> {
    let mut md = String::from("# Jamming detection report\n\n");
    if !preamble.is_empty() {
        md.push_str(preamble);
        md.push_str("\n\n");
    }
    for s in sections {
        let _ = writeln!(md, "## {}\n\n{} windows.\n", s.title, s.windows);
        let _ = writeln!(md, "### Stage-1 confusion matrix\n\n{}", s.stage1.to_markdown());
        let _ = writeln!(md, "### Three-label confusion matrix\n");
        match s.final_confusion() {
            Some(cm) => {
                let _ = writeln!(md, "{}", cm.to_markdown());
            }
            None => md.push_str("No stage-2 or three-class model given.\n\n"),
        }
        let _ = writeln!(md, "### Precision, recall and f1\n\nStage 1:\n\n{}", s.stage1_metrics.to_markdown());
        if let (Some(two), Some(three)) = (&s.two_stage, &s.three_class) {
            let _ = writeln!(
                md,
                "Two-stage accuracy {:.2}% vs single three-class model {:.2}%.\n",
                100.0 * two.accuracy(),
                100.0 * three.accuracy()
            );
        }
        for (heading, table) in [
            ("Accuracy by number of users", &s.sweeps.users),
            ("Accuracy by attacker power and distance", &s.sweeps.power_distance),
            ("Accuracy by number of attackers", &s.sweeps.attackers),
            ("Accuracy by mobility group", &s.sweeps.mobility),
        ] {
            let _ = writeln!(md, "### {heading}\n\n{}", table.to_markdown());
        }
    }
    md.push_str("## Detection latency\n\n");
    match latency {
        Some(t) => {
            let _ = writeln!(
                md,
                "A detection needs {} consecutive positive windows after the onset; latency runs from the onset to the end of the confirming window.\n\n{}",
                crate::evaluation::latency::CONFIRM_WINDOWS,
                t.to_markdown()
            );
        }
        None => md.push_str("Not run.\n"),
    }
    Ok(md)
}

/// Writes the CSV tables and `report.md`. The first section owns the plain
/// file names; later sections get their title as a file prefix.
pub fn write_reports(
    dir: &Path,
    sections: &[EvalSection],
    latency: Option<&LatencyTable>,
    preamble: &str,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, s) in sections.iter().enumerate() {
        let prefix = if i == 0 { String::new() } else { format!("{}_", slug(&s.title)) };
        write(dir, &format!("{prefix}confusion_stage1.csv"), &s.stage1.to_csv())?;
        let three = s
            .final_confusion()
            .map(|c| c.to_csv())
            .unwrap_or_else(|| ConfusionMatrix::new(three_names()).to_csv());
        write(dir, &format!("{prefix}confusion_3class.csv"), &three)?;
        if let (Some(_), Some(direct)) = (&s.two_stage, &s.three_class) {
            write(dir, &format!("{prefix}confusion_3class_direct.csv"), &direct.to_csv())?;
        }
        write(dir, &format!("{prefix}metrics.csv"), &metrics_csv(s)?)?;
        for t in s.sweeps.tables() {
            write(dir, &format!("{prefix}{}.csv", t.name), &t.to_csv())?;
        }
    }
    let latency_csv = latency
        .map(|t| t.to_csv())
        .unwrap_or_else(|| LatencyTable { rows: Vec::new() }.to_csv());
    write(dir, "latency.csv", &latency_csv)?;
    write(dir, "report.md", &render_report(sections, latency, preamble)?)
}
