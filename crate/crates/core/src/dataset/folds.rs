use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{JamLabel, WindowedExample};
use crate::error::{Error, Result};

/// One train/validation partition, as indices into the example slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub val_traces: BTreeSet<usize>,
}

impl Fold {
    pub fn train_traces(&self, examples: &[WindowedExample]) -> BTreeSet<usize> {
        self.train.iter().map(|&i| examples[i].trace_id).collect()
    }

    /// Panics if any trace contributes windows to both partitions.
    pub fn assert_disjoint(&self, examples: &[WindowedExample]) {
        let train = self.train_traces(examples);
        let val: BTreeSet<usize> = self.val.iter().map(|&i| examples[i].trace_id).collect();
        assert!(
            train.is_disjoint(&val),
            "fold {}: traces {:?} leak between train and validation",
            self.index,
            train.intersection(&val).collect::<Vec<_>>()
        );
    }
}

/// Splits at trace granularity into `k` folds, stratified by label so each
/// fold keeps the global class mix.
pub fn split_folds(examples: &[WindowedExample], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    let mut by_label: BTreeMap<JamLabel, BTreeSet<usize>> = BTreeMap::new();
    for e in examples {
        by_label.entry(e.label()).or_default().insert(e.trace_id);
    }
    let n_traces: usize = by_label.values().map(|s| s.len()).sum();
    if n_traces < k {
        return Err(Error::Config(format!(
            "{n_traces} traces cannot fill {k} folds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    for traces in by_label.values() {
        let mut ids: Vec<usize> = traces.iter().copied().collect();
        ids.shuffle(&mut rng);
        for id in ids {
            fold_of.insert(id, next % k);
            next += 1;
        }
    }
    let mut folds: Vec<Fold> = (0..k)
        .map(|index| Fold {
            index,
            train: Vec::new(),
            val: Vec::new(),
            val_traces: BTreeSet::new(),
        })
        .collect();
    for (i, e) in examples.iter().enumerate() {
        let f = fold_of[&e.trace_id];
        for (j, fold) in folds.iter_mut().enumerate() {
            if j == f {
                fold.val.push(i);
                fold.val_traces.insert(e.trace_id);
            } else {
                fold.train.push(i);
            }
        }
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BinaryLabel, MotionLabel};

    fn examples(traces: usize, per_trace: usize) -> Vec<WindowedExample> {
        let mut out = Vec::new();
        for t in 0..traces {
            let jammed = t % 2 == 1;
            for w in 0..per_trace {
                out.push(WindowedExample {
                    rssi: vec![0.0; 4],
                    sinr: vec![0.0; 4],
                    binary_label: if jammed {
                        BinaryLabel::YesJamming
                    } else {
                        BinaryLabel::NoJamming
                    },
                    motion_label: jammed.then_some(MotionLabel::FixedJamming),
                    trace_id: t,
                    offset: w,
                });
            }
        }
        out
    }

    #[test]
    fn ten_traces_five_folds() {
        let ex = examples(10, 3);
        let folds = split_folds(&ex, 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = BTreeSet::new();
        for f in &folds {
            assert_eq!(f.val_traces.len(), 2);
            for t in &f.val_traces {
                assert!(seen.insert(*t), "trace {t} in two folds");
            }
            f.assert_disjoint(&ex);
            assert_eq!(f.train.len() + f.val.len(), ex.len());
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn folds_partition_examples() {
        let ex = examples(37, 4);
        let folds = split_folds(&ex, 5, 9).unwrap();
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.val.iter().copied()).collect();
        all.sort();
        assert_eq!(all, (0..ex.len()).collect::<Vec<_>>());
    }

    #[test]
    fn folds_are_class_balanced() {
        let ex = examples(200, 5);
        for seed in 0..5 {
            for f in split_folds(&ex, 5, seed).unwrap() {
                let pos = f
                    .val
                    .iter()
                    .filter(|&&i| ex[i].binary_label == BinaryLabel::YesJamming)
                    .count() as f64;
                let frac = pos / f.val.len() as f64;
                assert!((0.45..=0.55).contains(&frac), "{frac}");
            }
        }
    }

    #[test]
    fn too_few_traces() {
        let ex = examples(3, 2);
        assert!(matches!(split_folds(&ex, 5, 0), Err(Error::Config(_))));
        assert!(matches!(split_folds(&ex, 1, 0), Err(Error::Config(_))));
    }
}
