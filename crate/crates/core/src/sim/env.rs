//! The merging environment: placement, spawning and the simultaneous step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::action::{sample_acceleration, DriveAction};
use super::collision::{detect_collisions, CollisionType};
use super::config::EnvConfig;
use super::observation::{Observation, Surroundings};
use super::reward::{compute_reward, reward_terms, RewardTerms};
use super::vehicle::{initial_ramp_velocity, Lane, VehicleState};
use crate::error::{Error, Result};
use crate::policy::PolicyId;
use crate::rng::{streams, substream, SimRng};

pub const EGO_ID: u64 = 0;

/// Chooses actions for the environment vehicles from their pre-step views.
pub trait TrafficModel {
    /// `out[i]` receives the action for `vehicles[idx[i]]`.
    fn actions(
        &mut self,
        vehicles: &[VehicleState],
        idx: &[usize],
        views: &[Surroundings],
        observations: &[Observation],
        config: &EnvConfig,
        out: &mut Vec<DriveAction>,
    ) -> Result<()>;
}

/// Everything needed to start one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSetup {
    pub ego_lane: Lane,
    pub ego_policy: PolicyId,
    /// Policies of the N − 1 environment vehicles (the assignment λ).
    pub assignment: Vec<PolicyId>,
    /// Pool replacement vehicles draw their policy from, uniformly.
    pub respawn_pool: Vec<PolicyId>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeEnd {
    Collision(CollisionType),
    Exit,
    Truncated,
}

impl EpisodeEnd {
    /// Terminal for bootstrapping purposes; truncation is not.
    pub fn is_terminal(self) -> bool {
        !matches!(self, EpisodeEnd::Truncated)
    }

    pub fn collision(self) -> CollisionType {
        match self {
            EpisodeEnd::Collision(c) => c,
            _ => CollisionType::None,
        }
    }
}

/// What happened to one vehicle during a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub id: u64,
    pub policy: PolicyId,
    pub action: DriveAction,
    /// Realized acceleration; 0 for a merge.
    pub accel: f64,
    pub lane: Lane,
    pub x: f64,
    pub v: f64,
    pub collision: CollisionType,
    /// Left the simulation at the end of this step (collided or exited).
    pub removed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: bool,
    pub end: Option<EpisodeEnd>,
    pub ego_collision: CollisionType,
    pub transitions: Vec<Transition>,
    pub spawned: Vec<VehicleState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Collision(CollisionType),
    Departure,
    Spawn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvEvent {
    pub step: usize,
    pub vehicle: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvConfig,
    vehicles: Vec<VehicleState>,
    respawn_pool: Vec<PolicyId>,
    pending_spawns: Vec<Lane>,
    next_id: u64,
    steps: usize,
    done: bool,
    dynamics_rng: SimRng,
    spawn_rng: SimRng,
    events: Vec<EnvEvent>,
}

/// `n` positions in `[lo, hi]` with pairwise distance ≥ `spacing`, uniform
/// over feasible configurations (uniform draws on the shrunk interval,
/// sorted, then re-expanded).
fn spaced_positions<R: Rng + ?Sized>(
    n: usize,
    lo: f64,
    hi: f64,
    spacing: f64,
    rng: &mut R,
) -> Option<Vec<f64>> {
    if n == 0 {
        return Some(Vec::new());
    }
    let slack = (hi - lo) - (n - 1) as f64 * spacing;
    if slack < 0.0 {
        return None;
    }
    let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * slack).collect();
    u.sort_by(f64::total_cmp);
    Some(
        u.into_iter()
            .enumerate()
            .map(|(i, ui)| lo + ui + i as f64 * spacing)
            .collect(),
    )
}

impl Environment {
    /// Places the ego (x = 0 on the main road, the ramp entry on the ramp)
    /// and N − 1 environment vehicles at random with the minimum spacing.
    pub fn new(config: EnvConfig, setup: EpisodeSetup) -> Result<Self> {
        config.validate()?;
        if setup.assignment.len() + 1 != config.n_vehicles {
            return Err(Error::contract(format!(
                "assignment has {} entries for a population of {}",
                setup.assignment.len(),
                config.n_vehicles
            )));
        }
        if setup.respawn_pool.is_empty() {
            return Err(Error::contract("respawn pool is empty"));
        }
        let mut spawn_rng = substream(setup.seed, streams::SPAWN, 0);
        let dynamics_rng = substream(setup.seed, streams::ENV, 0);
        let g = config.geometry;

        let mut ramp_count = usize::from(setup.ego_lane == Lane::Ramp);
        let mut lanes = Vec::with_capacity(setup.assignment.len());
        for _ in &setup.assignment {
            let mut lane = if spawn_rng.random::<f64>() < config.main_lane_prob {
                Lane::Main
            } else {
                Lane::Ramp
            };
            if lane == Lane::Ramp && ramp_count >= config.max_ramp_cars {
                lane = Lane::Main;
            }
            if lane == Lane::Ramp {
                ramp_count += 1;
            }
            lanes.push(lane);
        }

        let ramp_hi = g.merge_end_x - config.ramp_standoff;
        let main_hi = g.main_road_length - config.min_spacing;
        let place = |lane: Lane, rng: &mut SimRng| -> Result<Vec<f64>> {
            let n = lanes.iter().filter(|&&l| l == lane).count();
            let (ego_x, hi) = match lane {
                Lane::Main => (0.0, main_hi),
                Lane::Ramp => (g.ramp_start_x, ramp_hi),
            };
            let lo = if setup.ego_lane == lane {
                ego_x + config.min_spacing
            } else {
                ego_x
            };
            spaced_positions(n, lo, hi, config.min_spacing, rng).ok_or_else(|| Error::Placement {
                requested: n,
                lane: lane.name(),
                reason: format!(
                    "[{lo}, {hi}] cannot hold them {} m apart",
                    config.min_spacing
                ),
            })
        };
        let mut main_x = place(Lane::Main, &mut spawn_rng)?.into_iter();
        let mut ramp_x = place(Lane::Ramp, &mut spawn_rng)?.into_iter();

        let mut env = Environment {
            vehicles: Vec::with_capacity(config.n_vehicles + 8),
            respawn_pool: setup.respawn_pool,
            pending_spawns: Vec::new(),
            next_id: EGO_ID + 1,
            steps: 0,
            done: false,
            dynamics_rng,
            spawn_rng,
            events: Vec::new(),
            config,
        };
        let ego_x = match setup.ego_lane {
            Lane::Main => 0.0,
            Lane::Ramp => g.ramp_start_x,
        };
        let ego_v = env.initial_speed(setup.ego_lane, ego_x)?;
        env.vehicles.push(VehicleState {
            id: EGO_ID,
            x: ego_x,
            v: ego_v,
            lane: setup.ego_lane,
            policy: setup.ego_policy,
        });
        for (lane, policy) in lanes.into_iter().zip(setup.assignment) {
            let x = match lane {
                Lane::Main => main_x.next(),
                Lane::Ramp => ramp_x.next(),
            }
            .expect("one position per vehicle");
            let v = env.initial_speed(lane, x)?;
            let id = env.next_id;
            env.next_id += 1;
            env.vehicles.push(VehicleState {
                id,
                x,
                v,
                lane,
                policy,
            });
        }
        Ok(env)
    }

    /// Builds an environment from explicit vehicle states (vehicle 0 must
    /// be the ego). Used for fixtures and replays.
    pub fn from_vehicles(
        config: EnvConfig,
        vehicles: Vec<VehicleState>,
        respawn_pool: Vec<PolicyId>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if vehicles.first().map(|v| v.id) != Some(EGO_ID) {
            return Err(Error::contract("first vehicle must be the ego"));
        }
        if respawn_pool.is_empty() {
            return Err(Error::contract("respawn pool is empty"));
        }
        let next_id = vehicles.iter().map(|v| v.id).max().unwrap_or(0) + 1;
        Ok(Environment {
            config,
            vehicles,
            respawn_pool,
            pending_spawns: Vec::new(),
            next_id,
            steps: 0,
            done: false,
            dynamics_rng: substream(seed, streams::ENV, 0),
            spawn_rng: substream(seed, streams::SPAWN, 0),
            events: Vec::new(),
        })
    }

    fn initial_speed(&mut self, lane: Lane, x: f64) -> Result<f64> {
        let g = &self.config.geometry;
        if lane == Lane::Ramp && x >= g.merge_start_x {
            initial_ramp_velocity(x, &self.config, &mut self.spawn_rng)
        } else {
            let spread = self.config.init_speed_spread;
            let v = self.spawn_rng.random_range(-spread..=spread) + self.config.v_nom;
            Ok(v.clamp(0.0, self.config.v_max))
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn ego(&self) -> &VehicleState {
        &self.vehicles[0]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn events(&self) -> &[EnvEvent] {
        &self.events
    }

    pub fn pending_spawns(&self) -> usize {
        self.pending_spawns.len()
    }

    pub fn ramp_count(&self) -> usize {
        self.vehicles.iter().filter(|v| v.lane == Lane::Ramp).count()
    }

    pub fn ego_surroundings(&self) -> Surroundings {
        Surroundings::of(&self.vehicles, 0, &self.config)
    }

    pub fn ego_observation(&self) -> Observation {
        self.ego_surroundings().normalize(&self.config)
    }

    /// Whether the ego may merge right now.
    pub fn ego_can_merge(&self) -> bool {
        self.ego().can_merge(&self.config.geometry)
    }

    /// Handles one vehicle leaving: with the respawn probability a new
    /// vehicle is queued, on the main road with `main_lane_prob`, otherwise
    /// on the ramp unless the ramp is full.
    pub fn spawn_replacement(&mut self) {
        if self.spawn_rng.random::<f64>() >= self.config.respawn_prob {
            return;
        }
        let lane = if self.spawn_rng.random::<f64>() < self.config.main_lane_prob {
            Lane::Main
        } else {
            Lane::Ramp
        };
        self.pending_spawns.push(lane);
        self.flush_spawns(&mut Vec::new());
    }

    /// Places queued vehicles at their lane entry when the entry is clear,
    /// oldest first. Blocked entries stay queued.
    fn flush_spawns(&mut self, spawned: &mut Vec<VehicleState>) {
        let mut still_pending = Vec::new();
        let queue = std::mem::take(&mut self.pending_spawns);
        for mut lane in queue {
            let ramp_full = self.ramp_count() >= self.config.max_ramp_cars;
            if lane == Lane::Ramp && ramp_full {
                lane = Lane::Main;
            }
            let entry = match lane {
                Lane::Main => 0.0,
                Lane::Ramp => self.config.geometry.ramp_start_x,
            };
            let blocked = self
                .vehicles
                .iter()
                .any(|v| v.lane == lane && (v.x - entry).abs() < self.config.min_spacing);
            if blocked {
                still_pending.push(lane);
                continue;
            }
            let v = match self.initial_speed(lane, entry) {
                Ok(v) => v,
                Err(_) => unreachable!("lane entries lie outside the merging region"),
            };
            let policy = self.respawn_pool[self.spawn_rng.random_range(0..self.respawn_pool.len())];
            let vehicle = VehicleState {
                id: self.next_id,
                x: entry,
                v,
                lane,
                policy,
            };
            self.next_id += 1;
            self.vehicles.push(vehicle);
            self.events.push(EnvEvent {
                step: self.steps,
                vehicle: vehicle.id,
                kind: EventKind::Spawn,
            });
            spawned.push(vehicle);
        }
        self.pending_spawns = still_pending;
    }

    /// Advances the world one step: everyone observes the pre-step state,
    /// then all actions apply at once.
    pub fn step(&mut self, ego_action: DriveAction, traffic: &mut dyn TrafficModel) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::contract("step called on a finished episode"));
        }
        let views: Vec<Surroundings> = (0..self.vehicles.len())
            .map(|i| Surroundings::of(&self.vehicles, i, &self.config))
            .collect();
        let mut actions = Vec::with_capacity(self.vehicles.len());
        actions.push(ego_action);
        if self.vehicles.len() > 1 {
            let idx: Vec<usize> = (1..self.vehicles.len()).collect();
            let obs: Vec<Observation> = views[1..].iter().map(|s| s.normalize(&self.config)).collect();
            let mut env_actions = Vec::with_capacity(idx.len());
            traffic.actions(&self.vehicles, &idx, &views[1..], &obs, &self.config, &mut env_actions)?;
            if env_actions.len() != idx.len() {
                return Err(Error::contract("traffic model returned the wrong number of actions"));
            }
            actions.extend(env_actions);
        }
        self.step_with_actions(&views, &actions)
    }

    /// Step with every vehicle's action supplied by the caller; `views`
    /// must be the pre-step surroundings of each vehicle.
    pub fn step_with_actions(&mut self, views: &[Surroundings], actions: &[DriveAction]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::contract("step called on a finished episode"));
        }
        if actions.len() != self.vehicles.len() || views.len() != self.vehicles.len() {
            return Err(Error::contract("one action and view per vehicle required"));
        }
        let mut next = Vec::with_capacity(self.vehicles.len());
        let mut merged = vec![false; self.vehicles.len()];
        let mut accels = vec![0.0; self.vehicles.len()];
        for (i, (veh, &action)) in self.vehicles.iter().zip(actions).enumerate() {
            if action == DriveAction::Merge {
                next.push(veh.merged(&self.config)?);
                merged[i] = true;
            } else {
                let a = if action == DriveAction::Maintain && !self.config.maintain_noise {
                    0.0
                } else {
                    sample_acceleration(action, &mut self.dynamics_rng)?
                };
                accels[i] = a;
                next.push(veh.stepped(a, &self.config));
            }
        }
        let collisions = detect_collisions(&next, &merged, &self.config);
        self.vehicles = next;
        self.steps += 1;

        let ego = self.vehicles[0];
        let ego_collision = collisions[0];
        let terms = reward_terms(&views[0], actions[0], ego_collision, ego.v, &self.config);
        let reward = compute_reward(&terms, &self.config.reward_weights);

        let road_end = self.config.geometry.main_road_length;
        let mut transitions = Vec::with_capacity(self.vehicles.len());
        let mut departures = 0;
        for (i, veh) in self.vehicles.iter().enumerate() {
            let exited = veh.lane == Lane::Main && veh.x >= road_end;
            let removed = i > 0 && (collisions[i].is_collision() || exited);
            if i > 0 && collisions[i].is_collision() {
                self.events.push(EnvEvent {
                    step: self.steps,
                    vehicle: veh.id,
                    kind: EventKind::Collision(collisions[i]),
                });
            } else if i > 0 && exited {
                self.events.push(EnvEvent {
                    step: self.steps,
                    vehicle: veh.id,
                    kind: EventKind::Departure,
                });
            }
            departures += usize::from(removed);
            transitions.push(Transition {
                id: veh.id,
                policy: veh.policy,
                action: actions[i],
                accel: accels[i],
                lane: veh.lane,
                x: veh.x,
                v: veh.v,
                collision: collisions[i],
                removed,
            });
        }
        let mut keep = transitions.iter().map(|t| !t.removed);
        self.vehicles.retain(|_| keep.next().unwrap());

        let end = if ego_collision.is_collision() {
            Some(EpisodeEnd::Collision(ego_collision))
        } else if ego.x >= road_end {
            Some(EpisodeEnd::Exit)
        } else if self.steps >= self.config.max_steps {
            Some(EpisodeEnd::Truncated)
        } else {
            None
        };
        self.done = end.is_some();

        let mut spawned = Vec::new();
        if !self.done {
            for _ in 0..departures {
                if self.spawn_rng.random::<f64>() < self.config.respawn_prob {
                    let lane = if self.spawn_rng.random::<f64>() < self.config.main_lane_prob {
                        Lane::Main
                    } else {
                        Lane::Ramp
                    };
                    self.pending_spawns.push(lane);
                }
            }
            self.flush_spawns(&mut spawned);
        }

        Ok(StepOutcome {
            observation: self.ego_observation(),
            reward,
            terms,
            done: self.done,
            end,
            ego_collision,
            transitions,
            spawned,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::OBS_DIM;

    struct AllMaintain;

    impl TrafficModel for AllMaintain {
        fn actions(
            &mut self,
            _: &[VehicleState],
            idx: &[usize],
            _: &[Surroundings],
            _: &[Observation],
            _: &EnvConfig,
            out: &mut Vec<DriveAction>,
        ) -> Result<()> {
            out.extend(idx.iter().map(|_| DriveAction::Maintain));
            Ok(())
        }
    }

    fn setup(n: usize, ego_lane: Lane, seed: u64) -> (EnvConfig, EpisodeSetup) {
        let cfg = EnvConfig {
            n_vehicles: n,
            ..EnvConfig::default()
        };
        let s = EpisodeSetup {
            ego_lane,
            ego_policy: PolicyId::Level(1),
            assignment: vec![PolicyId::Level0; n - 1],
            respawn_pool: vec![PolicyId::Level0],
            seed,
        };
        (cfg, s)
    }

    fn min_same_lane_distance(vehicles: &[VehicleState]) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in vehicles.iter().enumerate() {
            for b in &vehicles[i + 1..] {
                if a.lane == b.lane {
                    best = best.min((a.x - b.x).abs());
                }
            }
        }
        best
    }

    #[test]
    fn ego_start_positions() {
        let (cfg, s) = setup(4, Lane::Ramp, 1);
        let env = Environment::new(cfg.clone(), s).unwrap();
        assert_eq!(env.ego().x, 75.0);
        assert_eq!(env.ego().id, EGO_ID);
        let (cfg, s) = setup(4, Lane::Main, 1);
        assert_eq!(Environment::new(cfg, s).unwrap().ego().x, 0.0);
    }

    #[test]
    fn placement_respects_spacing_cap_and_speeds() {
        for seed in 0..300 {
            for n in [4, 16, 28] {
                let lane = if seed % 2 == 0 { Lane::Main } else { Lane::Ramp };
                let (cfg, s) = setup(n, lane, seed);
                let env = Environment::new(cfg.clone(), s).unwrap();
                assert_eq!(env.vehicles().len(), n);
                assert!(min_same_lane_distance(env.vehicles()) >= 10.0 - 1e-9);
                assert!(env.ramp_count() <= 7);
                for v in env.vehicles() {
                    assert!(v.v >= 0.0 && v.v <= cfg.v_max);
                    if v.lane == Lane::Ramp {
                        assert!(v.x <= 237.0 + 1e-9);
                    }
                    if v.lane == Lane::Main || v.x < 115.0 {
                        assert!((7.78 - 1e-9..=11.78 + 1e-9).contains(&v.v));
                    }
                }
            }
        }
    }

    #[test]
    fn infeasible_population_is_a_placement_error() {
        let cfg = EnvConfig {
            n_vehicles: 60,
            max_ramp_cars: 7,
            ..EnvConfig::default()
        };
        let s = EpisodeSetup {
            ego_lane: Lane::Main,
            ego_policy: PolicyId::Level(1),
            assignment: vec![PolicyId::Level0; 59],
            respawn_pool: vec![PolicyId::Level0],
            seed: 3,
        };
        assert!(matches!(Environment::new(cfg, s), Err(Error::Placement { .. })));
    }

    #[test]
    fn same_seed_same_world() {
        let (cfg, s) = setup(12, Lane::Main, 42);
        let a = Environment::new(cfg.clone(), s.clone()).unwrap();
        let b = Environment::new(cfg, s).unwrap();
        assert_eq!(a.vehicles(), b.vehicles());
    }

    fn fixture(vehicles: Vec<VehicleState>) -> Environment {
        let cfg = EnvConfig {
            n_vehicles: vehicles.len(),
            ..EnvConfig::default()
        };
        Environment::from_vehicles(cfg, vehicles, vec![PolicyId::Level0], 5).unwrap()
    }

    fn car(id: u64, x: f64, v: f64, lane: Lane) -> VehicleState {
        VehicleState {
            id,
            x,
            v,
            lane,
            policy: PolicyId::Level0,
        }
    }

    #[test]
    fn step_applies_each_sampled_acceleration() {
        let cars = vec![
            car(0, 0.0, 10.0, Lane::Main),
            car(1, 40.0, 10.0, Lane::Main),
            car(2, 80.0, 10.0, Lane::Ramp),
        ];
        let mut env = fixture(cars.clone());
        let out = env.step(DriveAction::Accelerate, &mut AllMaintain).unwrap();
        for (before, t) in cars.iter().zip(&out.transitions) {
            let (x, v) = crate::sim::vehicle::step_kinematics(before.x, before.v, t.accel, 0.5, 29.16);
            assert_eq!((t.x, t.v), (x, v));
        }
        assert!((0.25..=2.0).contains(&out.transitions[0].accel));
        assert_eq!(env.steps(), 1);
        assert_eq!(env.time(), 0.5);
    }

    #[test]
    fn truncates_after_max_steps() {
        let mut env = fixture(vec![car(0, 0.0, 0.0, Lane::Main)]);
        env.config.max_steps = 3;
        let mut ends = Vec::new();
        while !env.is_done() {
            ends.push(env.step(DriveAction::HardDecelerate, &mut AllMaintain).unwrap().end);
        }
        assert_eq!(ends, vec![None, None, Some(EpisodeEnd::Truncated)]);
        assert!(!EpisodeEnd::Truncated.is_terminal());
    }

    #[test]
    fn collided_traffic_is_removed_and_may_respawn() {
        let mut env = fixture(vec![
            car(0, 0.0, 5.0, Lane::Main),
            car(1, 100.0, 0.0, Lane::Main),
            car(2, 104.0, 0.0, Lane::Main),
        ]);
        env.config.respawn_prob = 1.0;
        let out = env.step(DriveAction::Maintain, &mut AllMaintain).unwrap();
        assert!(out.transitions[1].removed && out.transitions[2].removed);
        assert_eq!(out.transitions[1].collision, CollisionType::RearEnd);
        assert!(!out.done);
        // Two departures, both respawned at an entry (one may be deferred).
        assert_eq!(out.spawned.len() + env.pending_spawns(), 2);
        assert!(env.vehicles().iter().all(|v| v.id != 1 && v.id != 2));
    }

    #[test]
    fn lone_ego_matches_closed_form() {
        let mut env = fixture(vec![car(0, 0.0, 9.78, Lane::Main)]);
        env.config.maintain_noise = false;
        let mut t = 0;
        while !env.is_done() {
            env.step(DriveAction::Maintain, &mut AllMaintain).unwrap();
            t += 1;
            // Summation rounding only; no drift from the model itself.
            assert!((env.ego().x - 9.78 * 0.5 * t as f64).abs() < 1e-9, "t = {t}");
        }
        assert_eq!(t, 63);
    }

    #[test]
    fn three_car_fixture_advances_two_v_dt() {
        let cars = vec![
            car(0, 0.0, 10.0, Lane::Main),
            car(1, 40.0, 10.0, Lane::Main),
            car(2, 80.0, 10.0, Lane::Ramp),
        ];
        let mut env = fixture(cars.clone());
        env.config.maintain_noise = false;
        for _ in 0..2 {
            env.step(DriveAction::Maintain, &mut AllMaintain).unwrap();
        }
        for (before, after) in cars.iter().zip(env.vehicles()) {
            assert_eq!(after.x, before.x + 2.0 * before.v * 0.5);
        }
    }

    #[test]
    fn ego_exit_ends_episode() {
        let mut env = fixture(vec![car(0, 300.0, 20.0, Lane::Main)]);
        let out = env.step(DriveAction::Maintain, &mut AllMaintain).unwrap();
        assert!(out.done);
        assert_eq!(out.end, Some(EpisodeEnd::Exit));
        assert!(env.step(DriveAction::Maintain, &mut AllMaintain).is_err());
    }

    #[test]
    fn ego_barrier_crash_is_terminal_with_collision_reward() {
        let mut env = fixture(vec![car(0, 255.0, 8.0, Lane::Ramp)]);
        let out = env.step(DriveAction::Maintain, &mut AllMaintain).unwrap();
        assert_eq!(out.end, Some(EpisodeEnd::Collision(CollisionType::RampEndBarrier)));
        assert_eq!(out.terms.c, -1.0);
        assert!(out.reward <= -100.0 + 5.0);
    }

    #[test]
    fn illegal_merge_is_rejected() {
        let mut env = fixture(vec![car(0, 50.0, 8.0, Lane::Main)]);
        assert!(env.step(DriveAction::Merge, &mut AllMaintain).is_err());
    }

    #[test]
    fn observations_stay_in_range_through_episodes() {
        for seed in 0..20 {
            let (cfg, s) = setup(16, if seed % 2 == 0 { Lane::Main } else { Lane::Ramp }, seed);
            let mut env = Environment::new(cfg, s).unwrap();
            while !env.is_done() {
                let out = env.step(DriveAction::Maintain, &mut AllMaintain).unwrap();
                assert!(out.observation.in_range());
                assert_eq!(out.observation.features().len(), OBS_DIM);
                for v in env.vehicles() {
                    assert!((0.0..=29.16).contains(&v.v));
                }
            }
        }
    }

    #[test]
    fn blocked_spawn_is_deferred() {
        let mut env = fixture(vec![car(0, 3.0, 0.0, Lane::Main), car(1, 150.0, 0.0, Lane::Ramp)]);
        env.config.respawn_prob = 1.0;
        env.config.main_lane_prob = 1.0;
        env.spawn_replacement();
        assert_eq!(env.pending_spawns(), 1);
        assert_eq!(env.vehicles().len(), 2);
        env.vehicles[0].x = 20.0;
        let mut spawned = Vec::new();
        env.flush_spawns(&mut spawned);
        assert_eq!(spawned.len(), 1);
        assert_eq!(spawned[0].x, 0.0);
        assert_eq!(env.pending_spawns(), 0);
    }
}
