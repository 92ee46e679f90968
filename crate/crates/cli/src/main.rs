//! `levelk`: train, evaluate, simulate and analyze level-k merging drivers.
//!
//! Every command writes into a fresh numbered directory under `--out`
//! (`train-level-1-001`, `eval-002`, ...) together with the effective
//! config (`config.toml`) and its SHA-256 digest (`config.sha256`).
//!
//! Environment overrides: `LEVELK_CONFIG`, `LEVELK_PRESET`, `LEVELK_SEED`,
//! `LEVELK_OUT`, `LEVELK_STORE`, `LEVELK_EPISODES`. Flags win over the
//! environment, which wins over the config file.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
//! 3 missing prerequisite (e.g. an untrained lower level).

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use levelk::eval::{emit_tables, run_experiment, simulate_traces, Composition, CollisionStats, TrafficSpec, TABLE_CELLS};
use levelk::hierarchy::{train_dynamic, train_level_k, PolicySet, PolicyStore, TrainedPolicy};
use levelk::stats::{lane_report, load_trajectory_file, suggest_env_fragment, write_lane_report, StatsOptions};
use levelk::{Error, PolicyId, RunConfig};

#[derive(Parser)]
#[command(name = "levelk", version, about = "Level-k driver models for highway merging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train level 1, 2 or 3, or the dynamic selector, and register it in the store.
    Train(TrainArgs),
    /// Collision-rate experiments over trained policies.
    Evaluate(EvaluateArgs),
    /// Write per-step traces of a few episodes as JSON lines.
    Simulate(SimulateArgs),
    /// Headway, velocity, acceleration and population distributions of a trajectory file.
    Stats(StatsArgs),
    /// Print the effective config as TOML.
    Config(ConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Full schedule and network.
    Full,
    /// Reduced schedule and network for a single CPU.
    Desk,
}

#[derive(Args)]
struct Common {
    /// TOML config; missing keys take the full-scale defaults.
    #[arg(long, env = "LEVELK_CONFIG")]
    config: Option<PathBuf>,
    /// Base config when no file is given.
    #[arg(long, env = "LEVELK_PRESET", value_enum, default_value = "full")]
    preset: Preset,
    /// Master seed.
    #[arg(long, env = "LEVELK_SEED")]
    seed: Option<u64>,
    /// Root for run directories.
    #[arg(long, env = "LEVELK_OUT", default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct StoreArg {
    /// Policy store holding the selected networks [default: <out>/policies].
    #[arg(long, env = "LEVELK_STORE")]
    store: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    store: StoreArg,
    /// 1, 2, 3 or dynamic.
    #[arg(long, value_parser = parse_trained_policy)]
    level: PolicyId,
    /// Replace a policy already in the store.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    store: StoreArg,
    /// Ego policy (level-1..3, dynamic) or `all`.
    // The full path stops clap from treating the field as an optional argument.
    #[arg(long, default_value = "all", value_parser = parse_ego_choice)]
    ego: std::option::Option<PolicyId>,
    /// Traffic (level-0..3, dynamic, mixed) or `table` for the standard cells.
    #[arg(long, default_value = "table", value_parser = parse_traffic_choice)]
    traffic: std::option::Option<Composition>,
    /// Episodes per population.
    #[arg(long, env = "LEVELK_EPISODES")]
    episodes: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    store: StoreArg,
    #[arg(long, value_parser = parse_policy)]
    ego: PolicyId,
    #[arg(long, default_value = "mixed", value_parser = parse_composition)]
    traffic: Composition,
    /// Number of episodes; populations cycle through the evaluation set.
    #[arg(long, env = "LEVELK_EPISODES", default_value_t = 1)]
    episodes: usize,
}

#[derive(Args)]
struct ConfigArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct StatsArgs {
    /// Delimited trajectory file with columns vehicle_id,frame,lane,x,v,a.
    file: PathBuf,
    #[arg(long, env = "LEVELK_OUT", default_value = "runs")]
    out: PathBuf,
    /// Lane ids of the ramp.
    #[arg(long, value_delimiter = ',', default_value = "7")]
    ramp_lanes: Vec<i64>,
    /// Lane ids of the main road [default: every lane not on the ramp].
    #[arg(long, value_delimiter = ',')]
    main_lanes: Option<Vec<i64>>,
    #[arg(long, default_value_t = 30)]
    bins: usize,
    #[arg(long, default_value_t = 5.0)]
    car_length: f64,
    /// Print a suggested `[env]` fragment derived from the both-lanes moments.
    #[arg(long)]
    emit_config: bool,
}

fn parse_policy(s: &str) -> Result<PolicyId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_trained_policy(s: &str) -> Result<PolicyId, String> {
    match parse_policy(s)? {
        PolicyId::Level0 => Err("level-0 is rule based; train 1, 2, 3 or dynamic".into()),
        p => Ok(p),
    }
}

fn parse_ego_choice(s: &str) -> Result<Option<PolicyId>, String> {
    if s.eq_ignore_ascii_case("all") {
        Ok(None)
    } else {
        parse_trained_policy(s).map(Some)
    }
}

fn parse_composition(s: &str) -> Result<Composition, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_traffic_choice(s: &str) -> Result<Option<Composition>, String> {
    if s.eq_ignore_ascii_case("table") {
        Ok(None)
    } else {
        parse_composition(s).map(Some)
    }
}

enum Failure {
    Usage(String),
    Prerequisite(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Prerequisite(_) => Failure::Prerequisite(e.to_string()),
            Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => match common.preset {
            Preset::Full => RunConfig::default(),
            Preset::Desk => RunConfig::desk_scale(),
        },
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Creates `<root>/<prefix>-NNN` with the first unused NNN.
fn fresh_run_dir(root: &Path, prefix: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(root)?;
    for n in 1..10_000 {
        let dir = root.join(format!("{prefix}-{n:03}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Failure::Runtime(format!("no free run directory for {prefix} under {}", root.display())))
}

fn archive_config(dir: &Path, cfg: &RunConfig) -> CliResult {
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    fs::write(dir.join("config.sha256"), format!("{}\n", cfg.digest()))?;
    Ok(())
}

fn store_dir(common: &Common, store: &StoreArg) -> PathBuf {
    store.store.clone().unwrap_or_else(|| common.out.join("policies"))
}

fn prerequisites(policy: PolicyId) -> Vec<PolicyId> {
    match policy {
        PolicyId::Level(k) if k > 1 => vec![PolicyId::Level(k - 1)],
        PolicyId::Dynamic => vec![PolicyId::Level(1), PolicyId::Level(2), PolicyId::Level(3)],
        _ => Vec::new(),
    }
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let cfg = load_config(&args.common)?;
    let store = PolicyStore::open(store_dir(&args.common, &args.store))?;
    let policy = args.level;
    let set = store.policy_set(cfg.level0)?;
    let missing: Vec<String> = prerequisites(policy)
        .into_iter()
        .filter(|p| !set.has(*p))
        .map(|p| p.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Failure::Prerequisite(format!(
            "training {policy} needs {} in the store at {}",
            missing.join(", "),
            store.root().display()
        )));
    }
    if set.has(policy) && !args.force {
        return Err(Failure::Usage(format!(
            "{policy} is already in the store at {}; pass --force to replace it",
            store.root().display()
        )));
    }

    let dir = fresh_run_dir(&args.common.out, &format!("train-{policy}"))?;
    archive_config(&dir, &cfg)?;
    eprintln!("training {policy} (seed {}) into {}", cfg.seed, dir.display());
    let run_store = PolicyStore::open(&dir)?;
    let mut sink = run_store.sink(policy, cfg.seed)?;
    let trained: TrainedPolicy = match policy {
        PolicyId::Level(k) => train_level_k(k, &set, &cfg, &mut sink)?,
        PolicyId::Dynamic => train_dynamic(&set, &cfg, &mut sink)?,
        PolicyId::Level0 => unreachable!("rejected by the argument parser"),
    };
    drop(sink);
    let selection = json!({
        "policy": policy,
        "selected_episode": trained.selected_episode,
        "candidates": trained.candidates.iter().map(|c| c.episode).collect::<Vec<_>>(),
        "self_play_collisions": trained.selection_collisions,
        "episodes": trained.log.len(),
        "training_collisions": trained.log.iter().filter(|l| l.collision).count(),
    });
    fs::write(dir.join("selection.json"), serde_json::to_vec_pretty(&selection).map_err(Error::from)?)?;
    run_store.save(&trained, cfg.seed, &cfg.digest())?;
    store.save(&trained, cfg.seed, &cfg.digest())?;
    println!(
        "{policy}: selected checkpoint at episode {} (self-play collisions {:?}); run directory {}",
        trained.selected_episode,
        trained.selection_collisions,
        dir.display()
    );
    Ok(())
}

fn eval_cells(ego: Option<PolicyId>, traffic: Option<Composition>) -> Vec<(PolicyId, Composition)> {
    let egos = [PolicyId::Level(1), PolicyId::Level(2), PolicyId::Level(3), PolicyId::Dynamic];
    match (ego, traffic) {
        (Some(e), Some(t)) => vec![(e, t)],
        (Some(e), None) => TABLE_CELLS.iter().copied().filter(|c| c.0 == e).collect(),
        (None, Some(t)) => egos.iter().map(|&e| (e, t)).collect(),
        (None, None) => TABLE_CELLS.to_vec(),
    }
}

fn require_all(set: &PolicySet, cells: &[(PolicyId, Composition)], store: &Path) -> CliResult {
    let mut missing: Vec<PolicyId> = Vec::new();
    for (ego, traffic) in cells {
        for p in std::iter::once(*ego).chain(traffic.pool()) {
            if !set.has(p) && !missing.contains(&p) {
                missing.push(p);
            }
        }
    }
    if missing.is_empty() {
        return Ok(());
    }
    let names: Vec<String> = missing.iter().map(ToString::to_string).collect();
    Err(Failure::Prerequisite(format!(
        "no trained {} in the store at {}",
        names.join(", "),
        store.display()
    )))
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult {
    let mut cfg = load_config(&args.common)?;
    if let Some(n) = args.episodes {
        if n == 0 {
            return Err(Failure::Usage("--episodes must be positive".into()));
        }
        cfg.eval.episodes_per_population = n;
    }
    let store_path = store_dir(&args.common, &args.store);
    let set = PolicyStore::open(&store_path)?.policy_set(cfg.level0)?;
    let cells = eval_cells(args.ego, args.traffic);
    require_all(&set, &cells, &store_path)?;

    let dir = fresh_run_dir(&args.common.out, "eval")?;
    archive_config(&dir, &cfg)?;
    let mut stats: Vec<CollisionStats> = Vec::with_capacity(cells.len());
    for (ego, traffic) in cells {
        let spec = TrafficSpec::from_config(traffic, &cfg);
        let s = run_experiment(ego, &spec, &set, &cfg, cfg.seed)?;
        eprintln!(
            "{ego} in {} traffic: {}/{} collisions ({:.2}%)",
            traffic.label(),
            s.collisions(),
            s.total(),
            100.0 * s.rate()
        );
        stats.push(s);
    }
    let written = emit_tables(&stats, cfg.seed, &dir)?;
    print!("{}", fs::read_to_string(&written[0])?);
    println!("tables written to {}", dir.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let cfg = load_config(&args.common)?;
    let store_path = store_dir(&args.common, &args.store);
    let set = PolicyStore::open(&store_path)?.policy_set(cfg.level0)?;
    require_all(&set, &[(args.ego, args.traffic)], &store_path)?;
    let dir = fresh_run_dir(&args.common.out, "sim")?;
    archive_config(&dir, &cfg)?;
    let path = dir.join("trace.jsonl");
    let mut out = BufWriter::new(fs::File::create(&path)?);
    let results = simulate_traces(
        args.ego,
        args.traffic,
        &cfg.eval.populations,
        args.episodes,
        &set,
        &cfg,
        cfg.seed,
        &mut out,
    )?;
    out.flush()?;
    let collisions = results.iter().filter(|r| r.ego_collided()).count();
    println!(
        "{} episodes, {collisions} ego collisions; trace written to {}",
        results.len(),
        path.display()
    );
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> CliResult {
    if args.bins == 0 {
        return Err(Failure::Usage("--bins must be positive".into()));
    }
    let text = fs::read_to_string(&args.file)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", args.file.display())))?;
    let records = if text.trim().is_empty() {
        eprintln!("warning: {} is empty; writing empty distributions", args.file.display());
        Vec::new()
    } else {
        load_trajectory_file(&args.file).map_err(|e| Failure::Runtime(format!("{}: {e}", args.file.display())))?
    };
    if records.is_empty() && !text.trim().is_empty() {
        eprintln!("warning: {} has a header but no rows", args.file.display());
    }

    let mut all_lanes: Vec<i64> = records.iter().map(|r| r.lane).collect();
    all_lanes.sort_unstable();
    all_lanes.dedup();
    let main = args
        .main_lanes
        .clone()
        .unwrap_or_else(|| all_lanes.iter().copied().filter(|l| !args.ramp_lanes.contains(l)).collect());
    let opts = StatsOptions {
        bins: args.bins,
        car_length: args.car_length,
    };
    let dir = fresh_run_dir(&args.out, "stats")?;
    let mut both = None;
    for (scope, lanes) in [("main", Some(main.as_slice())), ("ramp", Some(args.ramp_lanes.as_slice())), ("both", None)] {
        let report = lane_report(&records, scope, lanes, &opts)?;
        write_lane_report(&report, &dir)?;
        let describe = |m: Option<levelk::stats::Moments>| {
            m.map_or("-".to_string(), |m| format!("{:.3} ± {:.3} (n={})", m.mean, m.std, m.count))
        };
        println!(
            "{scope:>4}: headway {} m, velocity {} m/s, acceleration {} m/s²",
            describe(report.headway.moments),
            describe(report.velocity.moments),
            describe(report.acceleration.moments)
        );
        if scope == "both" {
            both = Some(report);
        }
    }
    if let Some(fragment) = both.as_ref().and_then(suggest_env_fragment) {
        fs::write(dir.join("suggested_env.toml"), &fragment)?;
        if args.emit_config {
            print!("{fragment}");
        }
    } else if args.emit_config {
        eprintln!("warning: not enough data to suggest environment parameters");
    }
    println!("outputs written to {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Config(a) => load_config(&a.common).map(|cfg| print!("{}", cfg.to_toml())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Prerequisite(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
