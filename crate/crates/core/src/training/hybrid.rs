//! Population training: each generation runs Adam on every particle, then a
//! particle-swarm move in flattened weight space, then a genetic step that
//! rebuilds the worst quartile from the top half.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::WindowedExample;
use crate::error::{Error, Result};
use crate::nnet::Model;
use crate::training::{
    derive_seed, evaluate_split, new_adam, run_epoch, AdamState, EpochRecord, Task, TrainConfig,
    TrainOutcome,
};

#[derive(Debug, Clone, PartialEq)]
pub struct HybridConfig {
    pub population: usize,
    pub gd_epochs_per_gen: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub crossover_fraction: f64,
    pub mutation_sigma: f64,
    pub generations: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            population: 8,
            gd_epochs_per_gen: 1,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            crossover_fraction: 0.5,
            mutation_sigma: 0.01,
            generations: 10,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config(format!(
                "hybrid population must be at least 2, got {}",
                self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_fraction) {
            return Err(Error::Config("crossover_fraction must lie in [0, 1]".into()));
        }
        if !(self.mutation_sigma >= 0.0) {
            return Err(Error::Config("mutation_sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// PSO and GA switched off: the hybrid reduces to independent Adam runs.
    pub fn gradient_only(population: usize, generations: usize) -> Self {
        Self {
            population,
            generations,
            inertia: 0.0,
            cognitive: 0.0,
            social: 0.0,
            crossover_fraction: 0.0,
            mutation_sigma: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct HybridOutcome {
    pub best: Model<f32>,
    /// Global-best validation loss after each generation.
    pub gbest_history: Vec<f64>,
    /// Final particle positions.
    pub particles: Vec<Model<f32>>,
    pub history: Vec<EpochRecord>,
}

impl HybridOutcome {
    pub fn into_outcome(self) -> TrainOutcome {
        let best_epoch = self
            .gbest_history
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bl), (i, &l)| if l < bl { (i + 1, l) } else { (bi, bl) })
            .0;
        TrainOutcome {
            model: self.best,
            history: self.history,
            best_epoch,
        }
    }
}

const HYBRID_STREAM: u64 = 11;

fn fitness(model: &Model<f32>, examples: &[WindowedExample], val: &[usize], task: Task) -> Result<(f64, f64)> {
    let e = evaluate_split(model, examples, val, task)?;
    Ok((e.loss, e.accuracy))
}

/// Runs the hybrid and returns the global best.
pub fn hybrid_train(
    mut population: Vec<Model<f32>>,
    examples: &[WindowedExample],
    train: &[usize],
    val: &[usize],
    task: Task,
    config: &TrainConfig,
    hybrid: &HybridConfig,
) -> Result<HybridOutcome> {
    hybrid.validate()?;
    if population.len() < 2 {
        return Err(Error::Config(format!(
            "hybrid population must be at least 2, got {}",
            population.len()
        )));
    }
    let shapes: Vec<Vec<usize>> = population[0].params().iter().map(|p| p.shape().to_vec()).collect();
    for m in &population[1..] {
        let s: Vec<Vec<usize>> = m.params().iter().map(|p| p.shape().to_vec()).collect();
        if s != shapes || m.config != population[0].config {
            return Err(Error::Config("hybrid particles must share one architecture".into()));
        }
    }
    let val_or_train = if val.is_empty() { train } else { val };
    let n = population.len();
    let dim = population[0].count_parameters();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, HYBRID_STREAM, 0));
    let mut adams: Vec<AdamState<f32>> = population.iter().map(|m| new_adam(m, config)).collect();
    let mut velocity = vec![vec![0.0f32; dim]; n];
    let mut pbest: Vec<(f64, Vec<f32>)> = vec![(f64::INFINITY, Vec::new()); n];
    let mut gbest: (f64, Vec<f32>) = (f64::INFINITY, population[0].flat_weights());
    let mut gbest_history = Vec::with_capacity(hybrid.generations);
    let mut history = Vec::new();
    let mut epoch = 0;

    for generation in 0..hybrid.generations {
        // Gradient phase.
        let mut train_loss = 0.0;
        for _ in 0..hybrid.gd_epochs_per_gen {
            epoch += 1;
            for (p, (model, adam)) in population.iter_mut().zip(adams.iter_mut()).enumerate() {
                let particle_cfg = TrainConfig {
                    seed: derive_seed(config.seed, HYBRID_STREAM, 1 + p as u64),
                    ..config.clone()
                };
                train_loss += run_epoch(model, adam, examples, train, task, &particle_cfg, epoch)? / n as f64;
            }
        }
        let mut fit: Vec<f64> = Vec::with_capacity(n);
        for (p, model) in population.iter().enumerate() {
            let (loss, _) = fitness(model, examples, val_or_train, task)?;
            fit.push(loss);
            if loss < pbest[p].0 {
                pbest[p] = (loss, model.flat_weights());
            }
            if loss < gbest.0 {
                gbest = (loss, model.flat_weights());
            }
        }

        // Swarm phase.
        let (w, c1, c2) = (hybrid.inertia as f32, hybrid.cognitive as f32, hybrid.social as f32);
        if w != 0.0 || c1 != 0.0 || c2 != 0.0 {
            for (p, model) in population.iter_mut().enumerate() {
                let mut x = model.flat_weights();
                let v = &mut velocity[p];
                for i in 0..dim {
                    let r1: f32 = rng.random();
                    let r2: f32 = rng.random();
                    v[i] = w * v[i] + c1 * r1 * (pbest[p].1[i] - x[i]) + c2 * r2 * (gbest.1[i] - x[i]);
                    x[i] += v[i];
                }
                model.set_flat_weights(&x);
            }
            for (p, model) in population.iter().enumerate() {
                fit[p] = fitness(model, examples, val_or_train, task)?.0;
            }
        }

        // Genetic phase: worst quartile replaced by children of the top half.
        let replace = n / 4;
        if replace > 0 && hybrid.crossover_fraction > 0.0 {
            let mut rank: Vec<usize> = (0..n).collect();
            rank.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
            let top = &rank[..n.div_ceil(2)];
            let noise = Normal::new(0.0, hybrid.mutation_sigma).map_err(|e| Error::Config(e.to_string()))?;
            for &child in &rank[n - replace..] {
                let a = population[top[rng.random_range(0..top.len())]].flat_weights();
                let b = population[top[rng.random_range(0..top.len())]].flat_weights();
                let genes: Vec<f32> = a
                    .iter()
                    .zip(&b)
                    .map(|(&x, &y)| {
                        let g = if rng.random::<f64>() < hybrid.crossover_fraction { y } else { x };
                        g + noise.sample(&mut rng) as f32
                    })
                    .collect();
                population[child].set_flat_weights(&genes);
                velocity[child].iter_mut().for_each(|v| *v = 0.0);
            }
        }

        for (p, model) in population.iter().enumerate() {
            let loss = fitness(model, examples, val_or_train, task)?.0;
            if loss < pbest[p].0 {
                pbest[p] = (loss, model.flat_weights());
            }
            if loss < gbest.0 {
                gbest = (loss, model.flat_weights());
            }
        }
        gbest_history.push(gbest.0);
        let mut best_model = population[0].clone();
        best_model.set_flat_weights(&gbest.1);
        let (_, acc) = fitness(&best_model, examples, val_or_train, task)?;
        history.push(EpochRecord {
            epoch: generation + 1,
            train_loss,
            val_loss: gbest.0,
            val_acc: acc,
        });
    }
    let mut best = population[0].clone();
    best.set_flat_weights(&gbest.1);
    Ok(HybridOutcome {
        best,
        gbest_history,
        particles: population,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{ModelConfig, Variant};
    use crate::training::toy;

    fn cfg() -> ModelConfig {
        ModelConfig::table(Variant::Attention, 2, 128)
    }

    #[test]
    fn degenerate_hybrid_is_plain_adam() {
        let ex = toy::separable(6, 2, 128, 1);
        let train: Vec<usize> = (0..8).collect();
        let val: Vec<usize> = (8..12).collect();
        let tc = TrainConfig {
            seed: 5,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let pop: Vec<Model<f32>> = (0..2).map(|s| Model::new(cfg(), s).unwrap()).collect();
        let out = hybrid_train(pop.clone(), &ex, &train, &val, Task::Stage1, &tc, &HybridConfig::gradient_only(2, 1)).unwrap();
        for (p, start) in pop.into_iter().enumerate() {
            let mut m = start;
            let mut adam = new_adam(&m, &tc);
            let pc = TrainConfig {
                seed: derive_seed(tc.seed, HYBRID_STREAM, 1 + p as u64),
                ..tc.clone()
            };
            run_epoch(&mut m, &mut adam, &ex, &train, Task::Stage1, &pc, 1).unwrap();
            assert_eq!(m, out.particles[p]);
        }
    }

    #[test]
    fn gbest_is_monotone() {
        let ex = toy::separable(8, 2, 128, 2);
        let train: Vec<usize> = (0..12).collect();
        let val: Vec<usize> = (12..16).collect();
        let tc = TrainConfig {
            seed: 1,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let h = HybridConfig {
            population: 4,
            generations: 10,
            ..HybridConfig::default()
        };
        let pop: Vec<Model<f32>> = (0..4).map(|s| Model::new(cfg(), s).unwrap()).collect();
        let out = hybrid_train(pop, &ex, &train, &val, Task::Stage1, &tc, &h).unwrap();
        assert_eq!(out.gbest_history.len(), 10);
        for w in out.gbest_history.windows(2) {
            assert!(w[1] <= w[0], "{:?}", out.gbest_history);
        }
    }

    #[test]
    fn population_of_one_is_rejected() {
        let ex = toy::separable(2, 1, 128, 2);
        let pop = vec![Model::new(cfg(), 0).unwrap()];
        let r = hybrid_train(pop, &ex, &[0], &[1], Task::Stage1, &TrainConfig::default(), &HybridConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
        assert!(HybridConfig { population: 1, ..HybridConfig::default() }.validate().is_err());
    }
}
