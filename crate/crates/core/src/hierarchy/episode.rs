use rand::Rng;
use serde::{Deserialize, Serialize};

use super::agents::{dynamic_act, level_act, ActMode, Decision, PolicySet};
use crate::error::Result;
use crate::level0::level0_action;
use crate::policy::PolicyId;
use crate::rng::{derive_seed, streams, substream, SimRng};
use crate::sim::{
    EnvConfig, EpisodeEnd, EpisodeSetup, Environment, Lane, Observation, StepOutcome, Surroundings,
    TrafficModel, VehicleState,
};

/// Everything an observer sees about one ego step.
pub struct StepContext<'a> {
    /// 1-based step index.
    pub step: usize,
    pub time: f64,
    /// Ego observation the decision was made on.
    pub obs: Observation,
    pub decision: Decision,
    /// Vehicle states before the step.
    pub before: &'a [VehicleState],
    pub outcome: &'a StepOutcome,
}

pub trait EgoAgent {
    fn decide(&mut self, obs: &Observation, surr: &Surroundings) -> Result<Decision>;

    fn observe(&mut self, _step: &StepContext<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub population: usize,
    pub ego_lane: Lane,
    pub steps: usize,
    pub reward: f64,
    pub end: EpisodeEnd,
    /// The initial assignment of the environment vehicles.
    pub env_policies: Vec<PolicyId>,
}

impl EpisodeResult {
    pub fn ego_collided(&self) -> bool {
        matches!(self.end, EpisodeEnd::Collision(_))
    }
}

/// Plays one episode to its end.
pub fn run_episode(
    env: &mut Environment,
    agent: &mut dyn EgoAgent,
    traffic: &mut dyn TrafficModel,
) -> Result<(usize, f64, EpisodeEnd)> {
    let mut total = 0.0;
    loop {
        let surr = env.ego_surroundings();
        let obs = surr.normalize(env.config());
        let decision = agent.decide(&obs, &surr)?;
        let before = env.vehicles().to_vec();
        let outcome = env.step(decision.action, traffic)?;
        total += outcome.reward;
        agent.observe(&StepContext {
            step: env.steps(),
            time: env.time(),
            obs,
            decision,
            before: &before,
            outcome: &outcome,
        })?;
        if let Some(end) = outcome.end {
            return Ok((env.steps(), total, end));
        }
    }
}

/// Draws the ego lane and the environment assignment for one episode from
/// its seed. Each environment vehicle's policy is uniform over `pool`.
pub fn episode_setup(
    episode_seed: u64,
    population: usize,
    ego_ramp_prob: f64,
    ego_policy: PolicyId,
    pool: &[PolicyId],
) -> EpisodeSetup {
    let mut rng = substream(episode_seed, streams::SETUP, 0);
    let ego_lane = if rng.random::<f64>() < ego_ramp_prob {
        Lane::Ramp
    } else {
        Lane::Main
    };
    let assignment = (1..population)
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect();
    EpisodeSetup {
        ego_lane,
        ego_policy,
        assignment,
        respawn_pool: pool.to_vec(),
        seed: episode_seed,
    }
}

/// Plays one seeded episode with the given ego agent and a traffic pool.
#[allow(clippy::too_many_arguments)]
pub fn play_episode(
    set: &PolicySet,
    env_config: &EnvConfig,
    agent: &mut dyn EgoAgent,
    ego_policy: PolicyId,
    pool: &[PolicyId],
    population: usize,
    ego_ramp_prob: f64,
    episode_seed: u64,
) -> Result<EpisodeResult> {
    let setup = episode_setup(episode_seed, population, ego_ramp_prob, ego_policy, pool);
    let ego_lane = setup.ego_lane;
    let env_policies = setup.assignment.clone();
    let config = EnvConfig {
        n_vehicles: population,
        ..env_config.clone()
    };
    let mut env = Environment::new(config, setup)?;
    let mut traffic = super::agents::PolicyTraffic::new(set, substream(episode_seed, streams::TRAFFIC, 0));
    let (steps, reward, end) = run_episode(&mut env, agent, &mut traffic)?;
    Ok(EpisodeResult {
        population,
        ego_lane,
        steps,
        reward,
        end,
        env_policies,
    })
}

/// An ego with a fixed policy from a policy set.
pub struct FixedEgo<'a> {
    policy: PolicyId,
    set: &'a PolicySet,
    env_config: &'a EnvConfig,
    mode: ActMode,
    rng: SimRng,
}

impl<'a> FixedEgo<'a> {
    pub fn new(
        policy: PolicyId,
        set: &'a PolicySet,
        env_config: &'a EnvConfig,
        mode: ActMode,
        rng: SimRng,
    ) -> Result<Self> {
        set.require(policy)?;
        Ok(Self {
            policy,
            set,
            env_config,
            mode,
            rng,
        })
    }
}

impl EgoAgent for FixedEgo<'_> {
    fn decide(&mut self, obs: &Observation, surr: &Surroundings) -> Result<Decision> {
        match self.policy {
            PolicyId::Level0 => {
                let action = level0_action(surr, &self.set.level0, self.env_config, &mut self.rng);
                Ok(Decision {
                    index: action.slot(),
                    action,
                    level: None,
                })
            }
            PolicyId::Level(k) => level_act(self.set.level_net(k)?, obs, surr.merge_allowed, self.mode, &mut self.rng),
            PolicyId::Dynamic => dynamic_act(
                obs,
                surr.merge_allowed,
                self.set.dynamic_net()?,
                self.set.level_nets()?,
                self.mode,
                &mut self.rng,
            ),
        }
    }
}

/// Numeric tag used to keep per-policy random streams apart.
pub fn policy_tag(policy: PolicyId) -> u64 {
    match policy {
        PolicyId::Level0 => 0,
        PolicyId::Level(k) => k as u64,
        PolicyId::Dynamic => 4,
    }
}

/// Seed of training episode `episode` of `policy`.
pub fn training_episode_seed(master: u64, policy: PolicyId, episode: u64) -> u64 {
    derive_seed(master, streams::EPISODE, (policy_tag(policy) << 40) | episode)
}
