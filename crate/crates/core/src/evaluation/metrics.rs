use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Rows are the true class, columns the prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let n = classes.len();
        Self {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_pairs(classes: Vec<String>, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cm = Self::new(classes);
        for (t, p) in pairs {
            cm.record(t, p);
        }
        cm
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => f64::NAN,
            t => self.correct() as f64 / t as f64,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Shape("confusion matrices have different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth\\predicted");
        for c in &self.classes {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            s.push_str(c);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| truth \\ predicted |");
        for c in &self.classes {
            let _ = write!(s, " {c} |");
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|".repeat(self.classes.len()));
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            let _ = write!(s, "| {c} |");
            for v in row {
                let _ = write!(s, " {v} |");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub total: u64,
    /// Classes without a single true example.
    pub degenerate: Vec<String>,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,precision,recall,f1,support\n");
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{},{:.4},{:.4},{:.4},{}",
                c.name, c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(s, "accuracy,,,{:.4},{}", self.accuracy, self.total);
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| class | precision | recall | f1-score | support |\n|---|---:|---:|---:|---:|\n");
        for c in &self.classes {
            let flag = if c.support == 0 { " (no support)" } else { "" };
            let _ = writeln!(
                s,
                "| {}{flag} | {:.2} | {:.2} | {:.2} | {} |",
                c.name, c.precision, c.recall, c.f1, c.support
            );
        }
        let _ = writeln!(s, "| accuracy | | | {:.2} | {} |", self.accuracy, self.total);
        s
    }
}

/// Harmonic mean of precision and recall, 0 when both vanish.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn accuracy_from_errors(total: u64, errors: u64) -> f64 {
    (total - errors) as f64 / total as f64
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::DegenerateInput("confusion matrix is empty".into()));
    }
    let n = cm.classes().len();
    let mut classes = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for c in 0..n {
        let tp = cm.count(c, c) as f64;
        let predicted: u64 = (0..n).map(|t| cm.count(t, c)).sum();
        let support: u64 = (0..n).map(|p| cm.count(c, p)).sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if support == 0 { 0.0 } else { tp / support as f64 };
        if support == 0 {
            degenerate.push(cm.classes()[c].clone());
        }
        classes.push(ClassMetrics {
            name: cm.classes()[c].clone(),
            precision,
            recall,
            f1: f1_score(precision, recall),
            support,
        });
    }
    Ok(MetricsReport {
        classes,
        accuracy: cm.accuracy(),
        total,
        degenerate,
    })
}
