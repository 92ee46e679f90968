//! The level-k hierarchy: population curriculum, acting with frozen
//! policies, level-k and dynamic training, checkpoint selection and the
//! policy store.

mod agents;
mod curriculum;
mod episode;
mod store;
mod train;

pub use agents::{dynamic_act, level_act, ActMode, Decision, PolicySet, PolicyTraffic};
pub use curriculum::Curriculum;
pub use episode::{
    episode_setup, play_episode, policy_tag, run_episode, training_episode_seed, EgoAgent, EpisodeResult,
    FixedEgo, StepContext,
};
pub use store::{stored_spec, Manifest, ManifestEntry, PolicyStore, StoreSink};
pub use train::{
    select_best_index, self_play_collisions, train_dynamic, train_level_k, EpisodeLog, NullSink, Snapshot,
    TrainedPolicy, TrainingSink,
};
