//! Deep Q-learning machinery: replay memory, Boltzmann exploration, TD
//! targets and the per-step learner update.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{Adam, AdamConfig, NetworkParams};
use crate::rng::SimRng;
use crate::sim::OBS_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub s: [f64; OBS_DIM],
    pub a: usize,
    pub r: f64,
    pub s_next: [f64; OBS_DIM],
    /// True terminal (collision or exit); truncation is not terminal.
    pub terminal: bool,
}

/// Bounded FIFO of experiences with uniform sampling once warm.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: VecDeque<Experience>,
    capacity: usize,
    warmup: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize, warmup: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            warmup,
        }
    }

    pub fn push(&mut self, e: Experience) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_warm(&self) -> bool {
        self.buf.len() >= self.warmup
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.buf.iter()
    }

    /// Indices of a uniform sample with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if !self.is_warm() || self.buf.is_empty() {
            return Err(Error::contract(format!(
                "replay memory holds {} experiences, sampling needs {}",
                self.buf.len(),
                self.warmup.max(1)
            )));
        }
        Ok((0..n).map(|_| rng.random_range(0..self.buf.len())).collect())
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Experience>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| self.buf[i])
            .collect())
    }
}

/// Softmax of `q / t` computed with the maximum subtracted.
pub fn boltzmann_probabilities(q: &[f64], t: f64) -> Vec<f64> {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = q.iter().map(|&v| ((v - max) / t).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

pub fn boltzmann_sample<R: Rng + ?Sized>(q: &[f64], t: f64, rng: &mut R) -> usize {
    let p = boltzmann_probabilities(q, t);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding left the cumulative sum a hair under u.
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// Temperature annealed once per episode: T ← max(T·decay, floor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannSchedule {
    pub temperature: f64,
    pub decay: f64,
    pub floor: f64,
}

impl BoltzmannSchedule {
    pub fn new(initial: f64, decay: f64) -> Self {
        Self {
            temperature: initial,
            decay,
            floor: 1.0,
        }
    }

    pub fn anneal(&mut self) {
        self.temperature = (self.temperature * self.decay).max(self.floor);
    }

    /// Temperature after `n` anneals starting from `initial`.
    pub fn after(initial: f64, decay: f64, n: u64) -> f64 {
        let mut s = Self::new(initial, decay);
        for _ in 0..n {
            s.anneal();
        }
        s.temperature
    }
}

/// Learner hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub memory_capacity: usize,
    pub warmup: usize,
    pub target_update: u64,
    pub initial_temperature: f64,
    pub temperature_decay: f64,
    pub adam: AdamConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            batch_size: 32,
            memory_capacity: 50_000,
            warmup: 5_000,
            target_update: 1_000,
            initial_temperature: 50.0,
            temperature_decay: 0.998,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.memory_capacity == 0 || self.target_update == 0 {
            return Err(Error::Config("batch size, memory and target period must be positive".into()));
        }
        if self.warmup > self.memory_capacity {
            return Err(Error::Config("warm-up exceeds memory capacity".into()));
        }
        if !(self.initial_temperature >= 1.0 && 0.0 < self.temperature_decay && self.temperature_decay < 1.0) {
            return Err(Error::Config("need initial temperature ≥ 1 and decay in (0, 1)".into()));
        }
        Ok(())
    }
}

/// y = r for terminal experiences, r + γ·max_a' Q_target(s', a') otherwise.
pub fn td_targets(batch: &[Experience], target: &NetworkParams, gamma: f64) -> Vec<f64> {
    let next = Array2::from_shape_fn((batch.len(), OBS_DIM), |(i, j)| batch[i].s_next[j]);
    let q_next = target.forward_batch(next.view());
    batch
        .iter()
        .zip(q_next.rows())
        .map(|(e, q)| {
            if e.terminal {
                e.r
            } else {
                e.r + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect()
}

/// Owns the primary and target networks, the optimizer and the memory.
#[derive(Debug, Clone)]
pub struct DqnLearner {
    pub primary: NetworkParams,
    pub target: NetworkParams,
    pub adam: Adam,
    pub memory: ReplayMemory,
    config: TrainerConfig,
    ticks: u64,
    rng: SimRng,
}

impl DqnLearner {
    pub fn new(primary: NetworkParams, config: TrainerConfig, rng: SimRng) -> Self {
        Self {
            target: primary.clone(),
            adam: Adam::new(&primary, config.adam),
            memory: ReplayMemory::new(config.memory_capacity, config.warmup),
            primary,
            config,
            ticks: 0,
            rng,
        }
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn remember(&mut self, e: Experience) {
        self.memory.push(e);
    }

    /// One learner tick: an Adam step on a sampled batch once the memory is
    /// warm, then a target sync every `target_update` ticks. Returns the
    /// batch loss when a step was taken.
    pub fn train_tick(&mut self) -> Result<Option<f64>> {
        self.ticks += 1;
        let mut loss = None;
        if self.memory.is_warm() {
            let batch = self.memory.sample_batch(self.config.batch_size, &mut self.rng)?;
            let y = td_targets(&batch, &self.target, self.config.gamma);
            let states = Array2::from_shape_fn((batch.len(), OBS_DIM), |(i, j)| batch[i].s[j]);
            let actions: Vec<usize> = batch.iter().map(|e| e.a).collect();
            let (l, grads) = self.primary.td_gradient(states.view(), &actions, &y)?;
            self.adam.step(&mut self.primary, &grads)?;
            loss = Some(l);
        }
        if self.ticks.is_multiple_of(self.config.target_update) {
            self.target = self.primary.clone();
        }
        Ok(loss)
    }
}
