//! The highway-merging world: a single-lane main road with an on-ramp that
//! joins it along a merging region ending in a barrier.

pub mod action;
pub mod collision;
pub mod config;
pub mod env;
pub mod observation;
pub mod reward;
pub mod trace;
pub mod vehicle;

pub use action::{sample_acceleration, DriveAction, GO_SLOT, N_DRIVE_SLOTS};
pub use collision::{detect_collisions, CollisionType};
pub use config::{EnvConfig, RewardWeights, RoadGeometry};
pub use env::{
    EnvEvent, EpisodeEnd, EpisodeSetup, Environment, EventKind, StepOutcome, TrafficModel, Transition,
    EGO_ID,
};
pub use observation::{build_observation, Observation, Surroundings, OBS_DIM};
pub use reward::{
    compute_reward, effort_term, headway_term, reward_terms, stopping_term, velocity_term, RewardTerms,
};
pub use trace::{read_records, verify_replay, write_record, StepRecord};
pub use vehicle::{initial_ramp_velocity, ramp_velocity_profile, step_kinematics, Lane, VehicleState};
