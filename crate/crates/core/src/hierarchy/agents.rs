//! Acting with the policy hierarchy: frozen level nets driving traffic, and
//! the ego's level-k or dynamic two-step decision.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::boltzmann_sample;
use crate::error::{Error, Result};
use crate::level0::{level0_action, Level0Params};
use crate::nnet::{argmax, NetworkParams};
use crate::policy::{PolicyId, MAX_LEVEL};
use crate::rng::SimRng;
use crate::sim::{
    DriveAction, EnvConfig, Observation, Surroundings, TrafficModel, VehicleState, OBS_DIM,
};

/// How a network turns Q-values into a choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActMode {
    /// Argmax, ties to the lowest index.
    Greedy,
    /// Boltzmann sampling at the given temperature.
    Explore(f64),
}

impl ActMode {
    pub fn choose<R: Rng + ?Sized>(self, q: &[f64], rng: &mut R) -> usize {
        match self {
            ActMode::Greedy => argmax(q),
            ActMode::Explore(t) => boltzmann_sample(q, t, rng),
        }
    }
}

/// Read-only driver models available to a run.
#[derive(Debug, Clone, Default)]
pub struct PolicySet {
    pub level0: Level0Params,
    levels: [Option<Arc<NetworkParams>>; MAX_LEVEL as usize],
    dynamic: Option<Arc<NetworkParams>>,
}

impl PolicySet {
    pub fn new(level0: Level0Params) -> Self {
        Self {
            level0,
            ..Self::default()
        }
    }

    pub fn with(mut self, policy: PolicyId, params: Arc<NetworkParams>) -> Result<Self> {
        self.insert(policy, params)?;
        Ok(self)
    }

    pub fn insert(&mut self, policy: PolicyId, params: Arc<NetworkParams>) -> Result<()> {
        match policy {
            PolicyId::Level0 => return Err(Error::contract("level-0 is rule based")),
            PolicyId::Level(k) => {
                expect_outputs(&params, crate::sim::N_DRIVE_SLOTS, policy)?;
                self.levels[k as usize - 1] = Some(params);
            }
            PolicyId::Dynamic => {
                expect_outputs(&params, MAX_LEVEL as usize, policy)?;
                self.dynamic = Some(params);
            }
        }
        Ok(())
    }

    pub fn has(&self, policy: PolicyId) -> bool {
        match policy {
            PolicyId::Level0 => true,
            PolicyId::Level(k) => self.levels[k as usize - 1].is_some(),
            PolicyId::Dynamic => self.dynamic.is_some() && self.levels.iter().all(Option::is_some),
        }
    }

    pub fn require(&self, policy: PolicyId) -> Result<()> {
        if self.has(policy) {
            Ok(())
        } else {
            Err(Error::Prerequisite(format!("no trained network for {policy}")))
        }
    }

    pub fn level_net(&self, k: u8) -> Result<&NetworkParams> {
        self.levels
            .get((k as usize).wrapping_sub(1))
            .and_then(|n| n.as_deref())
            .ok_or_else(|| Error::Prerequisite(format!("no trained network for level-{k}")))
    }

    pub fn dynamic_net(&self) -> Result<&NetworkParams> {
        self.dynamic
            .as_deref()
            .ok_or_else(|| Error::Prerequisite("no trained dynamic network".into()))
    }

    pub fn level_nets(&self) -> Result<[&NetworkParams; 3]> {
        Ok([self.level_net(1)?, self.level_net(2)?, self.level_net(3)?])
    }
}

fn expect_outputs(params: &NetworkParams, n: usize, policy: PolicyId) -> Result<()> {
    let found = params.spec().output_dim();
    if found != n {
        return Err(Error::contract(format!("{policy} network has {found} outputs, expected {n}")));
    }
    Ok(())
}

/// One ego decision. `index` is what gets stored as the experience action:
/// the drive slot for a level-k ego, the level slot (0..3 for levels 1–3)
/// for the dynamic ego.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub index: usize,
    pub action: DriveAction,
    pub level: Option<u8>,
}

/// Level-k decision from a 5-output network.
pub fn level_act<R: Rng + ?Sized>(
    net: &NetworkParams,
    obs: &Observation,
    merge_allowed: bool,
    mode: ActMode,
    rng: &mut R,
) -> Result<Decision> {
    let q = net.forward(&obs.features())?;
    let slot = mode.choose(&q, rng);
    Ok(Decision {
        index: slot,
        action: DriveAction::from_slot(slot, merge_allowed)?,
        level: None,
    })
}

/// Two-step dynamic decision: pick a level from the dynamic network, then a
/// driving action from that level's network, both under `mode`.
pub fn dynamic_act<R: Rng + ?Sized>(
    obs: &Observation,
    merge_allowed: bool,
    dynamic: &NetworkParams,
    levels: [&NetworkParams; 3],
    mode: ActMode,
    rng: &mut R,
) -> Result<Decision> {
    let q = dynamic.forward(&obs.features())?;
    let pick = mode.choose(&q, rng);
    let inner = level_act(levels[pick], obs, merge_allowed, mode, rng)?;
    Ok(Decision {
        index: pick,
        action: inner.action,
        level: Some(pick as u8 + 1),
    })
}

/// Traffic driven by a policy set: level-0 rules with their own random
/// stream, trained policies greedily with batched forward passes.
pub struct PolicyTraffic<'a> {
    set: &'a PolicySet,
    rng: SimRng,
}

impl<'a> PolicyTraffic<'a> {
    pub fn new(set: &'a PolicySet, rng: SimRng) -> Self {
        Self { set, rng }
    }
}

fn greedy_rows(net: &NetworkParams, rows: &[usize], observations: &[Observation]) -> Vec<usize> {
    let x = Array2::from_shape_fn((rows.len(), OBS_DIM), |(i, j)| observations[rows[i]].features()[j]);
    net.forward_batch(x.view())
        .rows()
        .into_iter()
        .map(|q| argmax(q.as_slice().expect("row-major output")))
        .collect()
}

impl TrafficModel for PolicyTraffic<'_> {
    fn actions(
        &mut self,
        vehicles: &[VehicleState],
        idx: &[usize],
        views: &[Surroundings],
        observations: &[Observation],
        config: &EnvConfig,
        out: &mut Vec<DriveAction>,
    ) -> Result<()> {
        out.clear();
        out.resize(idx.len(), DriveAction::Maintain);
        // Rows grouped by the level network that picks their drive slot.
        let mut by_level: [Vec<usize>; 3] = Default::default();
        let mut dynamic_rows = Vec::new();
        for (row, &i) in idx.iter().enumerate() {
            match vehicles[i].policy {
                PolicyId::Level0 => {
                    out[row] = level0_action(&views[row], &self.set.level0, config, &mut self.rng);
                }
                PolicyId::Level(k) => by_level[k as usize - 1].push(row),
                PolicyId::Dynamic => dynamic_rows.push(row),
            }
        }
        if !dynamic_rows.is_empty() {
            let picks = greedy_rows(self.set.dynamic_net()?, &dynamic_rows, observations);
            for (&row, pick) in dynamic_rows.iter().zip(picks) {
                by_level[pick].push(row);
            }
        }
        for (k, rows) in by_level.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let slots = greedy_rows(self.set.level_net(k as u8 + 1)?, rows, observations);
            for (&row, slot) in rows.iter().zip(slots) {
                out[row] = DriveAction::from_slot(slot, views[row].merge_allowed)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::NetworkSpec;
    use crate::rng::substream;

    fn biased_net(n_out: usize, favorite: usize, value: f64) -> NetworkParams {
        let spec = NetworkSpec::new(vec![OBS_DIM, n_out]).unwrap();
        let mut p = NetworkParams::zeros(&spec);
        p.layers_mut()[0].bias[favorite] = value;
        p
    }

    fn obs() -> Observation {
        Observation {
            fc_v: 1.0,
            fc_d: 1.0,
            fs_v: 1.0,
            fs_d: 1.0,
            rs_v: -1.0,
            rs_d: 1.0,
            d_e: 0.5,
            v_x: 0.3,
            l: 1.0,
        }
    }

    #[test]
    fn greedy_dynamic_picks_argmax_level_then_action() {
        let dynamic = biased_net(3, 1, 10.0);
        let l1 = biased_net(5, 0, 1.0);
        let l2 = biased_net(5, 4, 9.0);
        let l3 = biased_net(5, 1, 1.0);
        let mut rng = substream(0, "d", 0);
        let d = dynamic_act(&obs(), false, &dynamic, [&l1, &l2, &l3], ActMode::Greedy, &mut rng).unwrap();
        assert_eq!(d.level, Some(2));
        assert_eq!(d.index, 1);
        assert_eq!(d.action, DriveAction::HardDecelerate);
    }

    #[test]
    fn greedy_is_deterministic_and_ignores_rng() {
        let dynamic = biased_net(3, 2, 0.5);
        let l = biased_net(5, 3, 0.5);
        let a = dynamic_act(&obs(), true, &dynamic, [&l, &l, &l], ActMode::Greedy, &mut substream(1, "x", 0));
        let b = dynamic_act(&obs(), true, &dynamic, [&l, &l, &l], ActMode::Greedy, &mut substream(2, "x", 0));
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn hot_exploration_is_near_uniform() {
        let dynamic = biased_net(3, 0, 0.3);
        let l = biased_net(5, 0, 0.0);
        let mut rng = substream(3, "x", 0);
        let mut counts = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            let d = dynamic_act(&obs(), false, &dynamic, [&l, &l, &l], ActMode::Explore(50.0), &mut rng).unwrap();
            counts[d.index] += 1;
        }
        // Softmax oracle at T = 50 with q = (0.3, 0, 0).
        let z = (0.3f64 / 50.0).exp() + 2.0;
        let p = [(0.3f64 / 50.0).exp() / z, 1.0 / z, 1.0 / z];
        for (c, p) in counts.iter().zip(p) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn policy_set_guards() {
        let set = PolicySet::default();
        assert!(matches!(set.level_net(1), Err(Error::Prerequisite(_))));
        assert!(!set.has(PolicyId::Dynamic));
        assert!(set.has(PolicyId::Level0));
        let wrong = Arc::new(biased_net(3, 0, 0.0));
        assert!(PolicySet::default().with(PolicyId::Level(1), wrong).is_err());
    }
}
