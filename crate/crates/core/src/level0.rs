//! Rule-based level-0 drivers.
//!
//! Both rule sets read the metric [`Surroundings`]: gaps in meters
//! (infinite when nobody is there), relative speeds `v_other − v_ego`.
//! Time-to-collision is `gap / closing speed`, with closing speeds floored
//! at `epsilon` so a receding neighbor gives a very large TTC.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{DriveAction, EnvConfig, Lane, Surroundings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Level0Params {
    /// TTC below which the driver brakes hard, s.
    pub ttc_hd: f64,
    /// TTC below which the driver brakes, s.
    pub ttc_d: f64,
    pub epsilon: f64,
    /// Distance to the merge end inside which a ramp driver slows to its
    /// target speed, m.
    pub slow_zone: f64,
}

impl Default for Level0Params {
    fn default() -> Self {
        Self {
            ttc_hd: 4.0,
            ttc_d: 7.0,
            epsilon: 0.01,
            slow_zone: 10.0,
        }
    }
}

impl Level0Params {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.ttc_hd && self.ttc_hd < self.ttc_d) {
            return Err(Error::Config("level-0 needs 0 < ttc_hd < ttc_d".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("level-0 epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Urge to merge as the ramp runs out: ((l_m − d_e)/l_m)², with the ratio
/// held to [0, 1] so it stays 0 before the merging region and 1 past it.
pub fn proximity_weight(d_end: f64, merge_length: f64) -> f64 {
    let r = ((merge_length - d_end) / merge_length).clamp(0.0, 1.0);
    r * r
}

/// Longitudinal braking rules shared by both lanes. Returns the braking
/// action if one fires.
fn brake(s: &Surroundings, p: &Level0Params, cfg: &EnvConfig) -> Option<DriveAction> {
    let closing = s.fc_rel_v.min(-p.epsilon);
    let ttc = -s.fc_gap / closing;
    let clear = s.fc_gap > cfg.d_close;
    if (ttc <= p.ttc_hd && clear) || !clear {
        Some(DriveAction::HardDecelerate)
    } else if ttc <= p.ttc_d {
        Some(DriveAction::Decelerate)
    } else {
        None
    }
}

/// Whether the adjacent-lane gap is wide enough to merge into.
pub fn merge_gap_open(s: &Surroundings, p: &Level0Params, cfg: &EnvConfig) -> bool {
    let cs_front = if s.fs_rel_v > 0.0 {
        p.epsilon
    } else {
        (-s.fs_rel_v).max(p.epsilon)
    };
    let cs_rear = if s.rs_rel_v < 0.0 {
        p.epsilon
    } else {
        s.rs_rel_v.max(p.epsilon)
    };
    let front = (s.fs_gap / cs_front >= p.ttc_hd && s.fs_gap > cfg.d_close) || s.fs_gap > cfg.d_far;
    let rear =
        (s.rs_gap / cs_rear >= p.ttc_hd && s.rs_gap > cfg.d_close) || s.rs_gap > 1.5 * cfg.d_far;
    front && rear
}

/// Ramp driver. `u` is a uniform draw on [0, 1) gating the merge attempt.
pub fn level0_ramp_action(s: &Surroundings, p: &Level0Params, cfg: &EnvConfig, u: f64) -> DriveAction {
    let d_e = s.d_end;
    let lm = cfg.geometry.merge_length;
    if s.merge_allowed
        && (u < proximity_weight(d_e, lm) || d_e < cfg.d_far)
        && merge_gap_open(s, p, cfg)
    {
        return DriveAction::Merge;
    }
    if let Some(a) = brake(s, p, cfg) {
        return a;
    }
    if d_e < p.slow_zone && s.speed > cfg.v_nom * d_e / lm {
        DriveAction::Decelerate
    } else if d_e >= cfg.d_far && s.fc_gap > cfg.d_close && s.fc_rel_v > p.epsilon {
        DriveAction::Accelerate
    } else {
        DriveAction::Maintain
    }
}

/// Main-road driver; fully deterministic.
pub fn level0_main_action(s: &Surroundings, p: &Level0Params, cfg: &EnvConfig) -> DriveAction {
    if let Some(a) = brake(s, p, cfg) {
        return a;
    }
    if s.fc_gap > cfg.d_close && s.fc_rel_v > p.epsilon && (s.speed < cfg.v_nom || s.d_end < 0.0) {
        DriveAction::Accelerate
    } else {
        DriveAction::Maintain
    }
}

/// Level-0 action for whichever lane the vehicle is on. Ramp vehicles
/// consume one uniform draw per call.
pub fn level0_action<R: Rng + ?Sized>(
    s: &Surroundings,
    p: &Level0Params,
    cfg: &EnvConfig,
    rng: &mut R,
) -> DriveAction {
    match s.lane {
        Lane::Ramp => level0_ramp_action(s, p, cfg, rng.random()),
        Lane::Main => level0_main_action(s, p, cfg),
    }
}
