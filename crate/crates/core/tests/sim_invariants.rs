use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use levelk::eval::{simulate_traces, Composition};
use levelk::hierarchy::{episode_setup, FixedEgo, ActMode, PolicySet, PolicyTraffic, run_episode};
use levelk::nnet::{NetworkParams, NetworkSpec};
use levelk::rng::substream;
use levelk::sim::{
    read_records, verify_replay, CollisionType, DriveAction, EnvConfig, EpisodeEnd, Environment, Lane,
    VehicleState, N_DRIVE_SLOTS,
};
use levelk::{PolicyId, RunConfig};

fn vehicle(id: u64, x: f64, v: f64, lane: Lane) -> VehicleState {
    VehicleState {
        id,
        x,
        v,
        lane,
        policy: PolicyId::Level0,
    }
}

/// Level-0 everywhere plus untrained level-1..3 and dynamic networks.
fn random_set(seed: u64) -> PolicySet {
    let mut set = PolicySet::new(Default::default());
    let mut rng = substream(seed, "test-nets", 0);
    for k in 1..=3 {
        let net = NetworkParams::xavier_init(&NetworkSpec::with_hidden(&[8], N_DRIVE_SLOTS), &mut rng);
        set.insert(PolicyId::Level(k), Arc::new(net)).unwrap();
    }
    let net = NetworkParams::xavier_init(&NetworkSpec::with_hidden(&[8], 3), &mut rng);
    set.insert(PolicyId::Dynamic, Arc::new(net)).unwrap();
    set
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rollouts_keep_speeds_and_observations_in_range(seed in any::<u64>(), n in 1usize..=16, ramp in any::<bool>()) {
        let set = random_set(seed);
        let pool = PolicyId::all_levels();
        let setup = episode_setup(seed, n, if ramp { 1.0 } else { 0.0 }, PolicyId::Level0, &pool);
        let cfg = EnvConfig { n_vehicles: n, ..EnvConfig::default() };
        let mut env = Environment::new(cfg.clone(), setup).unwrap();
        let mut traffic = PolicyTraffic::new(&set, substream(seed, "traffic", 0));
        let mut rng = substream(seed, "ego", 0);
        while !env.is_done() {
            let surr = env.ego_surroundings();
            let obs = env.ego_observation();
            prop_assert!(obs.in_range(), "{obs:?}");
            let slot = rng.random_range(0..N_DRIVE_SLOTS);
            let action = DriveAction::from_slot(slot, surr.merge_allowed).unwrap();
            env.step(action, &mut traffic).unwrap();
            for v in env.vehicles() {
                prop_assert!((0.0..=cfg.v_max).contains(&v.v));
            }
            prop_assert!(env.ramp_count() <= cfg.max_ramp_cars);
        }
    }

    #[test]
    fn placement_respects_spacing(seed in any::<u64>(), n in 1usize..=28) {
        let setup = episode_setup(seed, n, 0.5, PolicyId::Level0, &[PolicyId::Level0]);
        let cfg = EnvConfig { n_vehicles: n, ..EnvConfig::default() };
        let env = Environment::new(cfg.clone(), setup).unwrap();
        prop_assert_eq!(env.vehicles().len(), n);
        for lane in [Lane::Main, Lane::Ramp] {
            let mut xs: Vec<f64> = env.vehicles().iter().filter(|v| v.lane == lane).map(|v| v.x).collect();
            xs.sort_by(f64::total_cmp);
            for w in xs.windows(2) {
                prop_assert!(w[1] - w[0] >= cfg.min_spacing - 1e-9);
            }
        }
        prop_assert!(env.ramp_count() <= cfg.max_ramp_cars);
    }
}

#[test]
fn level0_follower_never_rear_ends() {
    let cfg = EnvConfig {
        n_vehicles: 2,
        respawn_prob: 0.0,
        ..EnvConfig::default()
    };
    let set = PolicySet::new(Default::default());
    for seed in 0..1000u64 {
        let mut rng = substream(seed, "two-car", 0);
        let lead_x = rng.random_range(10.0..120.0);
        let cars = vec![
            vehicle(0, 0.0, rng.random_range(7.78..=11.78), Lane::Main),
            vehicle(1, lead_x, rng.random_range(7.78..=11.78), Lane::Main),
        ];
        let mut env = Environment::from_vehicles(cfg.clone(), cars, vec![PolicyId::Level0], seed).unwrap();
        let mut ego = FixedEgo::new(PolicyId::Level0, &set, &cfg, ActMode::Greedy, substream(seed, "ego", 0)).unwrap();
        let mut traffic = PolicyTraffic::new(&set, substream(seed, "traffic", 0));
        let (_, _, end) = run_episode(&mut env, &mut ego, &mut traffic).unwrap();
        assert_ne!(end, EpisodeEnd::Collision(CollisionType::RearEnd), "seed {seed}");
    }
}

#[test]
fn full_ramp_redirects_spawns_to_main() {
    let cfg = EnvConfig::default();
    let mut main = 0;
    for seed in 0..10_000u64 {
        let mut cars = vec![vehicle(0, 150.0, 9.78, Lane::Main)];
        for i in 0..cfg.max_ramp_cars as u64 {
            cars.push(vehicle(i + 1, 100.0 + 20.0 * i as f64, 5.0, Lane::Ramp));
        }
        let mut env = Environment::from_vehicles(cfg.clone(), cars, vec![PolicyId::Level0], seed).unwrap();
        env.spawn_replacement();
        assert_eq!(env.ramp_count(), cfg.max_ramp_cars);
        if let Some(v) = env.vehicles().get(cfg.max_ramp_cars + 1) {
            assert_eq!((v.lane, v.x), (Lane::Main, 0.0));
            main += 1;
        }
    }
    let frac = main as f64 / 10_000.0;
    assert!((frac - 0.7).abs() < 0.02, "{frac}");
}

#[test]
fn open_ramp_receives_its_share() {
    let cfg = EnvConfig::default();
    let (mut main, mut ramp) = (0usize, 0usize);
    for seed in 0..20_000u64 {
        let cars = vec![vehicle(0, 150.0, 9.78, Lane::Main)];
        let mut env = Environment::from_vehicles(cfg.clone(), cars, vec![PolicyId::Level0], seed).unwrap();
        env.spawn_replacement();
        match env.vehicles().get(1).map(|v| v.lane) {
            Some(Lane::Main) => main += 1,
            Some(Lane::Ramp) => ramp += 1,
            None => {}
        }
    }
    let share = ramp as f64 / (main + ramp) as f64;
    assert!((share - 0.3).abs() < 0.015, "{share}");
}

#[test]
fn mixed_assignment_is_uniform_over_levels() {
    let pool = PolicyId::all_levels();
    let mut counts = [0usize; 4];
    for seed in 0..2000u64 {
        let setup = episode_setup(seed, 16, 0.5, PolicyId::Dynamic, &pool);
        for p in setup.assignment {
            counts[pool.iter().position(|&q| q == p).unwrap()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let expected = total as f64 / 4.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-square with 3 degrees of freedom.
    assert!(chi2 < 16.27, "{counts:?} chi2 {chi2}");
}

#[test]
fn traces_replay_exactly() {
    let set = random_set(3);
    let cfg = RunConfig::desk_scale();
    let mut buf = Vec::new();
    simulate_traces(PolicyId::Level(2), Composition::Mixed, &[4, 12], 6, &set, &cfg, 3, &mut buf).unwrap();
    let records = read_records(buf.as_slice()).unwrap();
    assert!(records.len() > 20);
    assert!(records.iter().all(|r| r.level.is_none()));
    verify_replay(&records, &cfg.env).unwrap();

    let mut tampered = records.clone();
    tampered[5].vehicles[0].x += 1e-9;
    assert!(verify_replay(&tampered, &cfg.env).is_err());
    let mut dropped = records.clone();
    dropped.remove(3);
    assert!(verify_replay(&dropped, &cfg.env).is_err());
}

#[test]
fn dynamic_traces_record_the_chosen_level() {
    let set = random_set(8);
    let cfg = RunConfig::desk_scale();
    let mut buf = Vec::new();
    simulate_traces(PolicyId::Dynamic, Composition::Mixed, &[8], 3, &set, &cfg, 8, &mut buf).unwrap();
    let records = read_records(buf.as_slice()).unwrap();
    assert!(!records.is_empty());
    assert!(records.iter().all(|r| matches!(r.level, Some(1..=3))));
    verify_replay(&records, &cfg.env).unwrap();
}
