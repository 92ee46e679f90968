//! Level-k and dynamic training loops and checkpoint selection.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::agents::{dynamic_act, level_act, ActMode, Decision, PolicySet};
use super::episode::{play_episode, policy_tag, training_episode_seed, EgoAgent, FixedEgo, StepContext};
use crate::config::RunConfig;
use crate::dqn::{BoltzmannSchedule, DqnLearner, Experience};
use crate::error::{Error, Result};
use crate::nnet::{NetworkParams, NetworkSpec};
use crate::policy::{PolicyId, MAX_LEVEL};
use crate::rng::{derive_seed, streams, substream, SimRng};
use crate::sim::{EpisodeEnd, Lane, Observation, Surroundings, N_DRIVE_SLOTS};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub policy: PolicyId,
    pub episode: u64,
    pub population: usize,
    pub ego_lane: Lane,
    pub steps: usize,
    pub reward: f64,
    pub collision: bool,
    /// 1–3 for a collision, 0 otherwise.
    pub collision_type: usize,
    pub end: EpisodeEnd,
    /// Temperature the episode was played at.
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Episodes completed when taken.
    pub episode: u64,
    pub params: NetworkParams,
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policy: PolicyId,
    /// The selected checkpoint.
    pub params: NetworkParams,
    pub selected_episode: u64,
    /// The checkpoints that competed in selection, oldest first.
    pub candidates: Vec<Snapshot>,
    pub selection_collisions: Vec<usize>,
    pub log: Vec<EpisodeLog>,
}

/// Receives training progress; the default methods discard it.
pub trait TrainingSink {
    fn episode(&mut self, _log: &EpisodeLog) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&mut self, _policy: PolicyId, _episode: u64, _params: &NetworkParams) -> Result<()> {
        Ok(())
    }
}

pub struct NullSink;

impl TrainingSink for NullSink {}

/// Index of the fewest collisions, earliest on ties.
pub fn select_best_index(collisions: &[usize]) -> Result<usize> {
    collisions
        .iter()
        .enumerate()
        .min_by_key(|&(i, &c)| (c, i))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::contract("no checkpoints to select from"))
}

enum Role<'a> {
    Level,
    Dynamic([&'a NetworkParams; 3]),
}

struct LearningEgo<'a> {
    role: Role<'a>,
    learner: DqnLearner,
    schedule: BoltzmannSchedule,
    rng: SimRng,
    loss_sum: f64,
    loss_count: usize,
}

impl EgoAgent for LearningEgo<'_> {
    fn decide(&mut self, obs: &Observation, surr: &Surroundings) -> Result<Decision> {
        let mode = ActMode::Explore(self.schedule.temperature);
        match self.role {
            Role::Level => level_act(&self.learner.primary, obs, surr.merge_allowed, mode, &mut self.rng),
            Role::Dynamic(levels) => {
                dynamic_act(obs, surr.merge_allowed, &self.learner.primary, levels, mode, &mut self.rng)
            }
        }
    }

    fn observe(&mut self, step: &StepContext<'_>) -> Result<()> {
        let out = step.outcome;
        self.learner.remember(Experience {
            s: step.obs.features(),
            a: step.decision.index,
            r: out.reward,
            s_next: out.observation.features(),
            terminal: out.end.is_some_and(EpisodeEnd::is_terminal),
        });
        if let Some(loss) = self.learner.train_tick()? {
            self.loss_sum += loss;
            self.loss_count += 1;
        }
        Ok(())
    }
}

/// Shared DQN loop. `env_set` drives the traffic; `pool` is what
/// environment vehicles are drawn from.
fn train_policy(
    policy: PolicyId,
    role: Role<'_>,
    env_set: &PolicySet,
    pool: &[PolicyId],
    config: &RunConfig,
    sink: &mut dyn TrainingSink,
) -> Result<(Vec<EpisodeLog>, VecDeque<Snapshot>)> {
    config.validate()?;
    let n_out = match role {
        Role::Level => N_DRIVE_SLOTS,
        Role::Dynamic(_) => MAX_LEVEL as usize,
    };
    let seed = config.seed;
    let tag = policy_tag(policy);
    let spec = NetworkSpec::with_hidden(&config.training.hidden, n_out);
    let init = NetworkParams::xavier_init(&spec, &mut substream(seed, streams::INIT, tag));
    let mut ego = LearningEgo {
        role,
        learner: DqnLearner::new(init, config.trainer, substream(seed, streams::REPLAY, tag)),
        schedule: BoltzmannSchedule::new(config.trainer.initial_temperature, config.trainer.temperature_decay),
        rng: substream(seed, streams::EXPLORE, tag),
        loss_sum: 0.0,
        loss_count: 0,
    };
    let t = &config.training;
    let keep = t.selection_candidates;
    let mut snapshots = VecDeque::with_capacity(keep + 1);
    let mut log = Vec::with_capacity(t.curriculum.total_episodes as usize);
    for episode in 0..t.curriculum.total_episodes {
        let population = t.curriculum.population(episode, seed)?;
        let episode_seed = training_episode_seed(seed, policy, episode);
        let temperature = ego.schedule.temperature;
        ego.loss_sum = 0.0;
        ego.loss_count = 0;
        let result = play_episode(
            env_set,
            &config.env,
            &mut ego,
            policy,
            pool,
            population,
            t.ego_ramp_prob,
            episode_seed,
        )?;
        ego.schedule.anneal();
        let collision = result.end.collision();
        let entry = EpisodeLog {
            policy,
            episode,
            population,
            ego_lane: result.ego_lane,
            steps: result.steps,
            reward: result.reward,
            collision: collision.is_collision(),
            collision_type: collision.type_number(),
            end: result.end,
            temperature,
            mean_loss: (ego.loss_count > 0).then(|| ego.loss_sum / ego.loss_count as f64),
        };
        sink.episode(&entry)?;
        log.push(entry);

        let done = episode + 1;
        if done % t.checkpoint_every == 0 || done == t.curriculum.total_episodes {
            let params = ego.learner.primary.clone();
            if !params.is_finite() {
                return Err(Error::Contract(format!("{policy} diverged by episode {done}")));
            }
            sink.checkpoint(policy, done, &params)?;
            if snapshots.back().is_none_or(|s: &Snapshot| s.episode != done) {
                snapshots.push_back(Snapshot { episode: done, params });
                if snapshots.len() > keep {
                    snapshots.pop_front();
                }
            }
        }
    }
    Ok((log, snapshots))
}

/// Ego collisions of `candidate` in self-play over the selection budget.
/// Every candidate of a policy faces the same seeded episodes.
pub fn self_play_collisions(
    policy: PolicyId,
    candidate: &NetworkParams,
    base: &PolicySet,
    config: &RunConfig,
) -> Result<usize> {
    let set = base.clone().with(policy, Arc::new(candidate.clone()))?;
    let pops = &config.training.curriculum.populations;
    let base_seed = derive_seed(config.seed, streams::SELECTION, policy_tag(policy));
    let mut collisions = 0;
    for i in 0..config.training.selection_episodes {
        let episode_seed = derive_seed(base_seed, streams::EPISODE, i as u64);
        let mut ego = FixedEgo::new(policy, &set, &config.env, ActMode::Greedy, substream(episode_seed, streams::EXPLORE, 0))?;
        let r = play_episode(
            &set,
            &config.env,
            &mut ego,
            policy,
            &[policy],
            pops[i % pops.len()],
            config.training.ego_ramp_prob,
            episode_seed,
        )?;
        collisions += usize::from(r.ego_collided());
    }
    Ok(collisions)
}

fn finish(
    policy: PolicyId,
    base: &PolicySet,
    config: &RunConfig,
    log: Vec<EpisodeLog>,
    snapshots: VecDeque<Snapshot>,
) -> Result<TrainedPolicy> {
    let candidates: Vec<Snapshot> = snapshots.into();
    let collisions = candidates
        .iter()
        .map(|s| self_play_collisions(policy, &s.params, base, config))
        .collect::<Result<Vec<_>>>()?;
    let best = select_best_index(&collisions)?;
    Ok(TrainedPolicy {
        policy,
        params: candidates[best].params.clone(),
        selected_episode: candidates[best].episode,
        candidates,
        selection_collisions: collisions,
        log,
    })
}

/// Trains level `k` against traffic made entirely of level `k − 1`. Only
/// that one lower level is visible to the run.
pub fn train_level_k(k: u8, available: &PolicySet, config: &RunConfig, sink: &mut dyn TrainingSink) -> Result<TrainedPolicy> {
    let policy = PolicyId::level(k)?;
    if !policy.is_trained() {
        return Err(Error::Config("level-0 is rule based and not trained".into()));
    }
    let below = PolicyId::level(k - 1)?;
    let mut env_set = PolicySet::new(available.level0);
    if below.is_trained() {
        let net = available
            .level_net(k - 1)
            .map_err(|_| Error::Prerequisite(format!("training {policy} needs a trained {below}")))?;
        env_set.insert(below, Arc::new(net.clone()))?;
    }
    let (log, snapshots) = train_policy(policy, Role::Level, &env_set, &[below], config, sink)?;
    finish(policy, &PolicySet::new(available.level0), config, log, snapshots)
}

/// Trains the dynamic level selector over frozen level-1..3 networks in
/// traffic drawn uniformly from levels 0–3.
pub fn train_dynamic(available: &PolicySet, config: &RunConfig, sink: &mut dyn TrainingSink) -> Result<TrainedPolicy> {
    for k in 1..=MAX_LEVEL {
        available
            .level_net(k)
            .map_err(|_| Error::Prerequisite(format!("training dynamic needs a trained level-{k}")))?;
    }
    let levels = available.level_nets()?;
    let (log, snapshots) = train_policy(
        PolicyId::Dynamic,
        Role::Dynamic(levels),
        available,
        &PolicyId::all_levels(),
        config,
        sink,
    )?;
    finish(PolicyId::Dynamic, available, config, log, snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_rule() {
        assert_eq!(select_best_index(&[7, 3, 9, 3, 5]).unwrap(), 1);
        assert_eq!(select_best_index(&[0; 5]).unwrap(), 0);
        assert_eq!(select_best_index(&[200, 199, 200, 200, 200]).unwrap(), 1);
        assert!(select_best_index(&[]).is_err());
    }

    #[test]
    fn missing_prerequisites() {
        let cfg = RunConfig::desk_scale();
        let empty = PolicySet::default();
        assert!(matches!(train_level_k(2, &empty, &cfg, &mut NullSink), Err(Error::Prerequisite(_))));
        assert!(matches!(train_dynamic(&empty, &cfg, &mut NullSink), Err(Error::Prerequisite(_))));
        assert!(train_level_k(0, &empty, &cfg, &mut NullSink).is_err());
        assert!(train_level_k(4, &empty, &cfg, &mut NullSink).is_err());
    }
}
