//! Top-level run configuration, read from TOML. Every section is optional
//! and falls back to its defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dqn::TrainerConfig;
use crate::error::{Error, Result};
use crate::eval::EgoMode;
use crate::hierarchy::Curriculum;
use crate::level0::Level0Params;
use crate::nnet::Q_HIDDEN;
use crate::sim::EnvConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub curriculum: Curriculum,
    /// Hidden layer widths of every Q-network.
    pub hidden: Vec<usize>,
    /// Probability that the ego starts an episode on the ramp.
    pub ego_ramp_prob: f64,
    pub checkpoint_every: u64,
    /// How many of the latest checkpoints compete in model selection.
    pub selection_candidates: usize,
    /// Self-play episodes per candidate.
    pub selection_episodes: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            curriculum: Curriculum::default(),
            hidden: Q_HIDDEN.to_vec(),
            ego_ramp_prob: 0.5,
            checkpoint_every: 100,
            selection_candidates: 5,
            selection_episodes: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub populations: Vec<usize>,
    pub episodes_per_population: usize,
    pub ego_mode: EgoMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            populations: vec![4, 8, 12, 16, 20, 24, 28],
            episodes_per_population: 150,
            ego_mode: EgoMode::Greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub level0: Level0Params,
    pub trainer: TrainerConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// A laptop-sized pipeline: 1500 episodes per policy over populations
    /// up to 16, narrower networks, faster annealing and smaller selection
    /// and evaluation budgets.
    pub fn desk_scale() -> Self {
        let mut c = Self::default();
        c.training.curriculum = Curriculum {
            populations: vec![4, 8, 12, 16],
            warmup_episodes: 100,
            sweep_end: 1200,
            total_episodes: 1500,
            block: 100,
        };
        c.training.hidden = vec![64, 64];
        c.trainer.temperature_decay = 0.995;
        c.eval.populations = vec![4, 8, 12, 16];
        c.eval.episodes_per_population = 50;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.level0.validate()?;
        self.trainer.validate()?;
        self.training.curriculum.validate()?;
        let t = &self.training;
        if t.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(0.0..=1.0).contains(&t.ego_ramp_prob) {
            return Err(Error::Config("ego_ramp_prob must lie in [0, 1]".into()));
        }
        if t.checkpoint_every == 0 || t.selection_candidates == 0 {
            return Err(Error::Config("checkpoint_every and selection_candidates must be positive".into()));
        }
        if self.eval.populations.is_empty() || self.eval.populations.contains(&0) {
            return Err(Error::Config("evaluation populations must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for c in [RunConfig::default(), RunConfig::desk_scale()] {
            c.validate().unwrap();
            let back = RunConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.digest(), c.digest());
        }
    }

    #[test]
    fn defaults_carry_training_table() {
        let c = RunConfig::default();
        assert_eq!(c.trainer.memory_capacity, 50_000);
        assert_eq!(c.trainer.warmup, 5_000);
        assert_eq!(c.trainer.target_update, 1_000);
        assert_eq!(c.trainer.initial_temperature, 50.0);
        assert_eq!(c.trainer.adam.lr, 0.0013);
        assert_eq!(c.trainer.gamma, 0.95);
        assert_eq!(c.trainer.batch_size, 32);
        assert_eq!(c.training.curriculum.total_episodes, 6000);
    }

    #[test]
    fn partial_file_and_bad_values() {
        let c = RunConfig::from_toml("seed = 9\n[env]\nmax_steps = 50\n").unwrap();
        assert_eq!((c.seed, c.env.max_steps), (9, 50));
        assert_eq!(c.trainer, TrainerConfig::default());
        assert!(RunConfig::from_toml("[trainer]\ngamma = 2.0\n").is_err());
        assert!(RunConfig::from_toml("[env]\nd_far = 5.0\n").is_err());
        assert!(RunConfig::from_toml("not toml at all =").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
