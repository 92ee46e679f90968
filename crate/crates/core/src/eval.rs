//! Evaluation: collision rates per (ego policy, traffic composition),
//! collision-type breakdowns, CSV tables and a JSON summary.
//!
//! Output files written by [`emit_tables`]:
//!
//! * `collision_rates.csv`: one row per traffic composition (`Level-0`,
//!   `Level-1`, `Level-2`, `Level-3`, `Dynamic`, `Mixed`), one column per
//!   ego (`Level-1`, `Level-2`, `Level-3`, `Dynamic`); cells are collision
//!   rates in percent, empty when the pair was not run.
//! * `collision_types.csv`: columns `ego,type1,type2,type3,collisions,episodes`
//!   for every ego run in mixed traffic; type columns are percentages of
//!   that ego's collisions.
//! * `summary.json`: every experiment with raw counts.
//! * `episodes.jsonl`: one line per evaluated episode.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hierarchy::{play_episode, ActMode, Decision, EgoAgent, EpisodeResult, FixedEgo, PolicySet, StepContext};
use crate::policy::PolicyId;
use crate::rng::{derive_seed, streams, substream};
use crate::sim::{write_record, EpisodeEnd, Observation, StepRecord, Surroundings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Composition {
    /// Every environment vehicle runs the same policy.
    All(PolicyId),
    /// Each environment vehicle draws uniformly from levels 0–3.
    Mixed,
}

impl Composition {
    pub fn pool(self) -> Vec<PolicyId> {
        match self {
            Composition::All(p) => vec![p],
            Composition::Mixed => PolicyId::all_levels().to_vec(),
        }
    }

    /// Row label in the rate table.
    pub fn label(self) -> String {
        match self {
            Composition::All(PolicyId::Level0) => "Level-0".into(),
            Composition::All(PolicyId::Level(k)) => format!("Level-{k}"),
            Composition::All(PolicyId::Dynamic) => "Dynamic".into(),
            Composition::Mixed => "Mixed".into(),
        }
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Composition::All(p) => write!(f, "{p}"),
            Composition::Mixed => write!(f, "mixed"),
        }
    }
}

impl FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("mixed") {
            Ok(Composition::Mixed)
        } else {
            Ok(Composition::All(s.parse()?))
        }
    }
}

impl TryFrom<String> for Composition {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Composition> for String {
    fn from(c: Composition) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EgoMode {
    Greedy,
    Stochastic { temperature: f64 },
}

impl EgoMode {
    pub fn act_mode(self) -> ActMode {
        match self {
            EgoMode::Greedy => ActMode::Greedy,
            EgoMode::Stochastic { temperature } => ActMode::Explore(temperature),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSpec {
    pub composition: Composition,
    pub populations: Vec<usize>,
    pub episodes_per_population: usize,
}

impl TrafficSpec {
    pub fn from_config(composition: Composition, config: &RunConfig) -> Self {
        Self {
            composition,
            populations: config.eval.populations.clone(),
            episodes_per_population: config.eval.episodes_per_population,
        }
    }

    pub fn total_episodes(&self) -> usize {
        self.populations.len() * self.episodes_per_population
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    pub ego: PolicyId,
    pub traffic: Composition,
    pub episodes: Vec<EpisodeResult>,
}

impl CollisionStats {
    pub fn total(&self) -> usize {
        self.episodes.len()
    }

    pub fn collisions(&self) -> usize {
        self.episodes.iter().filter(|e| e.ego_collided()).count()
    }

    pub fn rate(&self) -> f64 {
        if self.episodes.is_empty() {
            0.0
        } else {
            self.collisions() as f64 / self.total() as f64
        }
    }

    /// Ego collisions by type 1–3.
    pub fn type_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for e in &self.episodes {
            if let EpisodeEnd::Collision(t) = e.end {
                c[t.type_number() - 1] += 1;
            }
        }
        c
    }

    /// Initial environment vehicles per level 0–3; dynamic vehicles are
    /// not counted.
    pub fn env_level_histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for p in self.episodes.iter().flat_map(|e| &e.env_policies) {
            if let Some(k) = p.level_number() {
                h[k as usize] += 1;
            }
        }
        h
    }
}

/// Seed of evaluation episode `episode` at population index `pop`. The
/// same seeds are used for every ego and composition.
pub fn eval_episode_seed(master: u64, pop: usize, episode: usize) -> u64 {
    derive_seed(master, streams::EVAL, ((pop as u64) << 32) | episode as u64)
}

pub fn run_experiment(
    ego: PolicyId,
    traffic: &TrafficSpec,
    set: &PolicySet,
    config: &RunConfig,
    seed: u64,
) -> Result<CollisionStats> {
    set.require(ego)?;
    for p in traffic.composition.pool() {
        set.require(p)?;
    }
    let pool = traffic.composition.pool();
    let mode = config.eval.ego_mode.act_mode();
    let mut episodes = Vec::with_capacity(traffic.total_episodes());
    for (pi, &population) in traffic.populations.iter().enumerate() {
        for ep in 0..traffic.episodes_per_population {
            let episode_seed = eval_episode_seed(seed, pi, ep);
            let mut agent = FixedEgo::new(ego, set, &config.env, mode, substream(episode_seed, streams::EXPLORE, 0))?;
            episodes.push(play_episode(
                set,
                &config.env,
                &mut agent,
                ego,
                &pool,
                population,
                config.training.ego_ramp_prob,
                episode_seed,
            )?);
        }
    }
    Ok(CollisionStats {
        ego,
        traffic: traffic.composition,
        episodes,
    })
}

/// Scales counts by 100 / reference.
pub fn normalize_counts(counts: &[f64], reference: f64) -> Result<Vec<f64>> {
    if !(reference > 0.0) {
        return Err(Error::contract("normalization reference must be positive"));
    }
    Ok(counts.iter().map(|c| c * 100.0 / reference).collect())
}

/// The (ego, traffic) cells of the standard rate table: each level against
/// the level it was trained on and the one below, plus mixed traffic.
pub const TABLE_CELLS: [(PolicyId, Composition); 11] = [
    (PolicyId::Level(1), Composition::All(PolicyId::Level0)),
    (PolicyId::Level(1), Composition::All(PolicyId::Level(1))),
    (PolicyId::Level(1), Composition::Mixed),
    (PolicyId::Level(2), Composition::All(PolicyId::Level(1))),
    (PolicyId::Level(2), Composition::All(PolicyId::Level(2))),
    (PolicyId::Level(2), Composition::Mixed),
    (PolicyId::Level(3), Composition::All(PolicyId::Level(2))),
    (PolicyId::Level(3), Composition::All(PolicyId::Level(3))),
    (PolicyId::Level(3), Composition::Mixed),
    (PolicyId::Dynamic, Composition::All(PolicyId::Dynamic)),
    (PolicyId::Dynamic, Composition::Mixed),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub ego: PolicyId,
    pub traffic: Composition,
    pub episodes: usize,
    pub collisions: usize,
    pub rate: f64,
    pub type_counts: [usize; 3],
    /// Type counts as percentages of the collisions; all zero without any.
    pub type_percent: [f64; 3],
    pub env_level_histogram: [usize; 4],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub experiments: Vec<ExperimentSummary>,
}

impl Summary {
    pub fn from_stats(seed: u64, stats: &[CollisionStats]) -> Self {
        let experiments = stats
            .iter()
            .map(|s| {
                let counts = s.type_counts();
                let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                let pct = normalize_counts(&as_f, s.collisions() as f64).unwrap_or_else(|_| vec![0.0; 3]);
                ExperimentSummary {
                    ego: s.ego,
                    traffic: s.traffic,
                    episodes: s.total(),
                    collisions: s.collisions(),
                    rate: s.rate(),
                    type_counts: counts,
                    type_percent: [pct[0], pct[1], pct[2]],
                    env_level_histogram: s.env_level_histogram(),
                }
            })
            .collect();
        Self { seed, experiments }
    }

    pub fn find(&self, ego: PolicyId, traffic: Composition) -> Option<&ExperimentSummary> {
        self.experiments.iter().find(|e| e.ego == ego && e.traffic == traffic)
    }

    pub fn rate_table_csv(&self) -> Result<String> {
        let egos = [PolicyId::Level(1), PolicyId::Level(2), PolicyId::Level(3), PolicyId::Dynamic];
        let rows = [
            Composition::All(PolicyId::Level0),
            Composition::All(PolicyId::Level(1)),
            Composition::All(PolicyId::Level(2)),
            Composition::All(PolicyId::Level(3)),
            Composition::All(PolicyId::Dynamic),
            Composition::Mixed,
        ];
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["traffic".to_string()];
        header.extend(egos.iter().map(|&e| Composition::All(e).label()));
        w.write_record(&header).map_err(csv_err)?;
        for row in rows {
            let mut rec = vec![row.label()];
            for &ego in &egos {
                rec.push(
                    self.find(ego, row)
                        .map(|e| format!("{:.3}", 100.0 * e.rate))
                        .unwrap_or_default(),
                );
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }

    pub fn type_table_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["ego", "type1", "type2", "type3", "collisions", "episodes"])
            .map_err(csv_err)?;
        for e in self.experiments.iter().filter(|e| e.traffic == Composition::Mixed) {
            w.write_record([
                Composition::All(e.ego).label(),
                format!("{:.3}", e.type_percent[0]),
                format!("{:.3}", e.type_percent[1]),
                format!("{:.3}", e.type_percent[2]),
                e.collisions.to_string(),
                e.episodes.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes the rate table, type table, JSON summary and per-episode log into
/// `dir`, returning the paths written.
pub fn emit_tables(stats: &[CollisionStats], seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    if stats.is_empty() {
        return Err(Error::contract("no experiments to tabulate"));
    }
    fs::create_dir_all(dir)?;
    let summary = Summary::from_stats(seed, stats);
    let rates = dir.join("collision_rates.csv");
    fs::write(&rates, summary.rate_table_csv()?)?;
    let types = dir.join("collision_types.csv");
    fs::write(&types, summary.type_table_csv()?)?;
    let json = dir.join("summary.json");
    fs::write(&json, serde_json::to_vec_pretty(&summary)?)?;
    let episodes = dir.join("episodes.jsonl");
    let mut w = BufWriter::new(fs::File::create(&episodes)?);
    for s in stats {
        for (i, e) in s.episodes.iter().enumerate() {
            serde_json::to_writer(
                &mut w,
                &serde_json::json!({
                    "ego": s.ego,
                    "traffic": s.traffic,
                    "index": i,
                    "result": e,
                }),
            )?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(vec![rates, types, json, episodes])
}

pub fn load_summary(path: &Path) -> Result<Summary> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Wraps an ego and writes one trace record per step.
struct TracingEgo<'a, W: Write> {
    inner: FixedEgo<'a>,
    out: &'a mut W,
    episode: u64,
}

impl<W: Write> EgoAgent for TracingEgo<'_, W> {
    fn decide(&mut self, obs: &Observation, surr: &Surroundings) -> Result<Decision> {
        self.inner.decide(obs, surr)
    }

    fn observe(&mut self, step: &StepContext<'_>) -> Result<()> {
        let record = StepRecord::new(
            self.episode,
            step.step,
            step.time,
            step.decision.level,
            step.before.to_vec(),
            step.outcome,
        );
        write_record(self.out, &record)
    }
}

/// Plays `episodes` traced episodes, cycling through `populations`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_traces<W: Write>(
    ego: PolicyId,
    composition: Composition,
    populations: &[usize],
    episodes: usize,
    set: &PolicySet,
    config: &RunConfig,
    seed: u64,
    out: &mut W,
) -> Result<Vec<EpisodeResult>> {
    set.require(ego)?;
    let pool = composition.pool();
    for p in &pool {
        set.require(*p)?;
    }
    if populations.is_empty() {
        return Err(Error::contract("no populations to simulate"));
    }
    let mode = config.eval.ego_mode.act_mode();
    let mut results = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let episode_seed = derive_seed(seed, streams::EPISODE, i as u64);
        let inner = FixedEgo::new(ego, set, &config.env, mode, substream(episode_seed, streams::EXPLORE, 0))?;
        let mut agent = TracingEgo {
            inner,
            out: &mut *out,
            episode: i as u64,
        };
        results.push(play_episode(
            set,
            &config.env,
            &mut agent,
            ego,
            &pool,
            populations[i % populations.len()],
            config.training.ego_ramp_prob,
            episode_seed,
        )?);
    }
    out.flush()?;
    Ok(results)
}
