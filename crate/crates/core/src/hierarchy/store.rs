//! On-disk policy store.
//!
//! ```text
//! <root>/manifest.json
//! <root>/<policy>/policy.lkq            selected network
//! <root>/<policy>/train_log.jsonl       one line per training episode
//! <root>/<policy>/checkpoints/ep<N>.lkq every checkpoint
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::agents::PolicySet;
use super::train::{EpisodeLog, TrainedPolicy, TrainingSink};
use crate::error::{Error, Result};
use crate::level0::Level0Params;
use crate::nnet::{load_params, save_params, CheckpointMeta, NetworkParams, NetworkSpec};
use crate::policy::{PolicyId, MAX_LEVEL};
use crate::sim::N_DRIVE_SLOTS;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the store root.
    pub file: String,
    pub seed: u64,
    pub episode: u64,
    pub config_digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub policies: BTreeMap<PolicyId, ManifestEntry>,
}

pub struct PolicyStore {
    root: PathBuf,
}

fn expected_outputs(policy: PolicyId) -> usize {
    match policy {
        PolicyId::Dynamic => MAX_LEVEL as usize,
        _ => N_DRIVE_SLOTS,
    }
}

impl PolicyStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn policy_dir(&self, policy: PolicyId) -> PathBuf {
        self.root.join(policy.to_string())
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.root.join("manifest.json");
        if !path.exists() {
            return Ok(Manifest::default());
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        let tmp = self.root.join("manifest.json.partial");
        fs::write(&tmp, serde_json::to_vec_pretty(manifest)?)?;
        fs::rename(tmp, self.root.join("manifest.json"))?;
        Ok(())
    }

    /// Stores the selected network of `trained` and registers it.
    pub fn save(&self, trained: &TrainedPolicy, seed: u64, config_digest: &str) -> Result<()> {
        let dir = self.policy_dir(trained.policy);
        fs::create_dir_all(&dir)?;
        let meta = CheckpointMeta {
            policy: trained.policy.to_string(),
            episode: trained.selected_episode,
            seed,
        };
        save_params(&trained.params, &meta, &dir.join("policy.lkq"))?;
        let mut manifest = self.manifest()?;
        manifest.policies.insert(
            trained.policy,
            ManifestEntry {
                file: format!("{}/policy.lkq", trained.policy),
                seed,
                episode: trained.selected_episode,
                config_digest: config_digest.to_string(),
            },
        );
        self.write_manifest(&manifest)
    }

    pub fn load(&self, policy: PolicyId) -> Result<NetworkParams> {
        let manifest = self.manifest()?;
        let entry = manifest
            .policies
            .get(&policy)
            .ok_or_else(|| Error::Prerequisite(format!("{policy} is not in the store at {}", self.root.display())))?;
        let (params, _) = load_params(&self.root.join(&entry.file), None)?;
        let found = params.spec().layer_sizes.clone();
        if found.last() != Some(&expected_outputs(policy)) {
            let mut expected = found.clone();
            *expected.last_mut().unwrap() = expected_outputs(policy);
            return Err(crate::error::CheckpointError::ShapeMismatch { expected, found }.into());
        }
        Ok(params)
    }

    /// Every stored policy, loaded into a set.
    pub fn policy_set(&self, level0: Level0Params) -> Result<PolicySet> {
        let mut set = PolicySet::new(level0);
        for policy in self.manifest()?.policies.keys() {
            set.insert(*policy, Arc::new(self.load(*policy)?))?;
        }
        Ok(set)
    }

    /// Sink writing the training log and every checkpoint of `policy`.
    pub fn sink(&self, policy: PolicyId, seed: u64) -> Result<StoreSink> {
        let dir = self.policy_dir(policy);
        fs::create_dir_all(dir.join("checkpoints"))?;
        Ok(StoreSink {
            log: BufWriter::new(File::create(dir.join("train_log.jsonl"))?),
            dir,
            seed,
        })
    }
}

pub struct StoreSink {
    log: BufWriter<File>,
    dir: PathBuf,
    seed: u64,
}

impl StoreSink {
    pub fn checkpoint_path(dir: &Path, episode: u64) -> PathBuf {
        dir.join("checkpoints").join(format!("ep{episode:05}.lkq"))
    }
}

impl TrainingSink for StoreSink {
    fn episode(&mut self, log: &EpisodeLog) -> Result<()> {
        serde_json::to_writer(&mut self.log, log)?;
        self.log.write_all(b"\n")?;
        Ok(())
    }

    fn checkpoint(&mut self, policy: PolicyId, episode: u64, params: &NetworkParams) -> Result<()> {
        self.log.flush()?;
        let meta = CheckpointMeta {
            policy: policy.to_string(),
            episode,
            seed: self.seed,
        };
        save_params(params, &meta, &Self::checkpoint_path(&self.dir, episode))
    }
}

impl Drop for StoreSink {
    fn drop(&mut self) {
        let _ = self.log.flush();
    }
}

/// Spec a stored network of `policy` must have, given hidden widths.
pub fn stored_spec(policy: PolicyId, hidden: &[usize]) -> NetworkSpec {
    NetworkSpec::with_hidden(hidden, expected_outputs(policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn trained(policy: PolicyId, n_out: usize) -> TrainedPolicy {
        let spec = NetworkSpec::with_hidden(&[4], n_out);
        TrainedPolicy {
            policy,
            params: NetworkParams::xavier_init(&spec, &mut substream(0, "s", n_out as u64)),
            selected_episode: 300,
            candidates: Vec::new(),
            selection_collisions: Vec::new(),
            log: Vec::new(),
        }
    }

    #[test]
    fn save_load_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let store = PolicyStore::open(dir.path()).unwrap();
        assert!(matches!(store.load(PolicyId::Level(1)), Err(Error::Prerequisite(_))));
        let t = trained(PolicyId::Level(1), 5);
        store.save(&t, 11, "abc").unwrap();
        assert_eq!(store.load(PolicyId::Level(1)).unwrap(), t.params);
        let m = store.manifest().unwrap();
        let e = &m.policies[&PolicyId::Level(1)];
        assert_eq!((e.seed, e.episode, e.config_digest.as_str()), (11, 300, "abc"));
        let set = store.policy_set(Level0Params::default()).unwrap();
        assert!(set.has(PolicyId::Level(1)) && !set.has(PolicyId::Level(2)));
    }

    #[test]
    fn five_output_net_in_dynamic_slot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = PolicyStore::open(dir.path()).unwrap();
        store.save(&trained(PolicyId::Dynamic, 5), 0, "x").unwrap();
        assert!(matches!(
            store.load(PolicyId::Dynamic),
            Err(Error::Checkpoint(crate::error::CheckpointError::ShapeMismatch { .. }))
        ));
    }
}
