use serde::{Deserialize, Serialize};

use super::action::DriveAction;
use super::collision::CollisionType;
use super::config::{EnvConfig, RewardWeights};
use super::observation::Surroundings;
use super::vehicle::Lane;

/// The six reward components, each roughly in [−1, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub c: f64,
    pub h: f64,
    pub m: f64,
    pub e: f64,
    pub nm: f64,
    pub s: f64,
}

impl RewardTerms {
    pub fn as_array(&self) -> [f64; 6] {
        [self.c, self.h, self.m, self.e, self.nm, self.s]
    }
}

/// Headway term from the front-center bumper gap in meters: −1 up to
/// d_close, linear through 0 at d_nom to 1 at d_far, 1 beyond.
pub fn headway_term(fc_gap: f64, config: &EnvConfig) -> f64 {
    let (close, nom, far) = (config.d_close, config.d_nom, config.d_far);
    if fc_gap <= close {
        -1.0
    } else if fc_gap <= nom {
        (fc_gap - nom) / (nom - close)
    } else if fc_gap <= far {
        (fc_gap - nom) / (far - nom)
    } else {
        1.0
    }
}

/// Velocity term: (v − v_nom)/v_nom up to v_nom, then (v_max − v)/(v_max − v_nom).
pub fn velocity_term(v: f64, config: &EnvConfig) -> f64 {
    if v <= config.v_nom {
        (v - config.v_nom) / config.v_nom
    } else {
        (config.v_max - v) / (config.v_max - config.v_nom)
    }
}

/// Effort term; zero below half the nominal speed.
pub fn effort_term(action: DriveAction, v: f64, config: &EnvConfig) -> f64 {
    if v < config.v_nom / 2.0 {
        return 0.0;
    }
    match action {
        DriveAction::Accelerate | DriveAction::Decelerate => -0.25,
        DriveAction::HardAccelerate | DriveAction::HardDecelerate => -1.0,
        DriveAction::Maintain | DriveAction::Merge => 0.0,
    }
}

/// Stopping term. On the main road anything but Hard-Accelerate is
/// penalized when the road ahead is clear and the merge end is still far.
/// On the ramp, passing up an available merge gap costs −1, lingering near
/// the barrier −0.05.
pub fn stopping_term(surr: &Surroundings, action: DriveAction, config: &EnvConfig) -> f64 {
    let far = config.d_far;
    match surr.lane {
        Lane::Main => {
            if action != DriveAction::HardAccelerate && surr.fc_gap >= far && surr.d_end >= far {
                -1.0
            } else {
                0.0
            }
        }
        Lane::Ramp => {
            let gap_open = surr.fs_gap >= config.d_close && surr.rs_gap >= 1.5 * far;
            if action != DriveAction::Merge && gap_open {
                -1.0
            } else if surr.d_end <= far {
                -0.05
            } else {
                0.0
            }
        }
    }
}

/// Reward components for one transition. `surr` is the state the action
/// was chosen in; `v` is the speed after the step.
pub fn reward_terms(
    surr: &Surroundings,
    action: DriveAction,
    collision: CollisionType,
    v: f64,
    config: &EnvConfig,
) -> RewardTerms {
    RewardTerms {
        c: if collision.is_collision() { -1.0 } else { 0.0 },
        h: headway_term(surr.fc_gap, config),
        m: velocity_term(v, config),
        e: effort_term(action, v, config),
        nm: if surr.lane == Lane::Ramp { -1.0 } else { 0.0 },
        s: stopping_term(surr, action, config),
    }
}

pub fn compute_reward(terms: &RewardTerms, weights: &RewardWeights) -> f64 {
    terms
        .as_array()
        .iter()
        .zip(weights.as_array())
        .map(|(t, w)| t * w)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_view(fs_gap: f64, rs_gap: f64, d_end: f64) -> Surroundings {
        Surroundings {
            fc_gap: f64::INFINITY,
            fc_rel_v: 29.16,
            fs_gap,
            fs_rel_v: 0.0,
            rs_gap,
            rs_rel_v: 0.0,
            d_end,
            speed: 8.0,
            lane: Lane::Ramp,
            merge_allowed: true,
        }
    }

    #[test]
    fn headway_anchor_values() {
        let cfg = EnvConfig::default();
        assert_eq!(headway_term(3.0, &cfg), -1.0);
        assert_eq!(headway_term(13.0, &cfg), 0.0);
        assert_eq!(headway_term(23.0, &cfg), 1.0);
        assert_eq!(headway_term(f64::INFINITY, &cfg), 1.0);
        assert!((headway_term(8.0, &cfg) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn velocity_anchor_values() {
        let cfg = EnvConfig::default();
        assert_eq!(velocity_term(9.78, &cfg), 0.0);
        assert_eq!(velocity_term(0.0, &cfg), -1.0);
        assert_eq!(velocity_term(29.16, &cfg), 0.0);
        assert!((velocity_term(19.47, &cfg) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn effort_values() {
        let cfg = EnvConfig::default();
        assert_eq!(effort_term(DriveAction::HardDecelerate, 9.0, &cfg), -1.0);
        assert_eq!(effort_term(DriveAction::HardAccelerate, 9.0, &cfg), -1.0);
        assert_eq!(effort_term(DriveAction::Decelerate, 9.0, &cfg), -0.25);
        assert_eq!(effort_term(DriveAction::Maintain, 9.0, &cfg), 0.0);
        assert_eq!(effort_term(DriveAction::HardDecelerate, 4.0, &cfg), 0.0);
    }

    #[test]
    fn ramp_stopping_branches() {
        let cfg = EnvConfig::default();
        let open = ramp_view(10.0, 40.0, 100.0);
        assert_eq!(stopping_term(&open, DriveAction::Maintain, &cfg), -1.0);
        assert_eq!(stopping_term(&open, DriveAction::Merge, &cfg), 0.0);
        let closed_near_end = ramp_view(10.0, 20.0, 15.0);
        assert_eq!(stopping_term(&closed_near_end, DriveAction::Maintain, &cfg), -0.05);
        let closed_far = ramp_view(2.0, 40.0, 100.0);
        assert_eq!(stopping_term(&closed_far, DriveAction::Maintain, &cfg), 0.0);
    }

    #[test]
    fn main_stopping_branch() {
        let cfg = EnvConfig::default();
        let mut clear = ramp_view(f64::INFINITY, f64::INFINITY, 100.0);
        clear.lane = Lane::Main;
        assert_eq!(stopping_term(&clear, DriveAction::Maintain, &cfg), -1.0);
        assert_eq!(stopping_term(&clear, DriveAction::HardAccelerate, &cfg), 0.0);
        clear.d_end = 10.0;
        assert_eq!(stopping_term(&clear, DriveAction::Maintain, &cfg), 0.0);
    }

    #[test]
    fn collision_flag_sets_c() {
        let cfg = EnvConfig::default();
        let mut view = ramp_view(10.0, 10.0, 100.0);
        view.lane = Lane::Main;
        view.fc_gap = 13.0;
        let t = reward_terms(&view, DriveAction::Maintain, CollisionType::RearEnd, 9.78, &cfg);
        assert_eq!(t, RewardTerms { c: -1.0, h: 0.0, m: 0.0, e: 0.0, nm: 0.0, s: 0.0 });
    }

    #[test]
    fn weighted_sum() {
        let zero = RewardTerms::default();
        assert_eq!(compute_reward(&zero, &RewardWeights::default()), 0.0);
        let crash = RewardTerms { c: -1.0, ..zero };
        let only_c = RewardWeights {
            collision: 100.0,
            headway: 0.0,
            velocity: 0.0,
            effort: 0.0,
            not_merging: 0.0,
            stopping: 0.0,
        };
        assert_eq!(compute_reward(&crash, &only_c), -100.0);
        let ones = RewardWeights {
            collision: 1.0,
            headway: 1.0,
            velocity: 1.0,
            effort: 1.0,
            not_merging: 1.0,
            stopping: 1.0,
        };
        let t = RewardTerms { c: 0.0, h: 1.0, m: 0.5, e: -0.25, nm: -1.0, s: 0.0 };
        assert!((compute_reward(&t, &ones) - 0.25).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn headway_is_monotone(a in 0.0f64..60.0, b in 0.0f64..60.0) {
            let cfg = EnvConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(headway_term(lo, &cfg) <= headway_term(hi, &cfg));
        }

        #[test]
        fn headway_is_continuous_above_d_close(g in 3.0001f64..40.0) {
            let cfg = EnvConfig::default();
            let d = 1e-7;
            prop_assert!((headway_term(g + d, &cfg) - headway_term(g, &cfg)).abs() <= 0.1 * d * 1.0001);
        }

        #[test]
        fn velocity_term_range(v in 0.0f64..=29.16) {
            let cfg = EnvConfig::default();
            let m = velocity_term(v, &cfg);
            prop_assert!((-1.0..=1.0).contains(&m));
        }
    }
}
