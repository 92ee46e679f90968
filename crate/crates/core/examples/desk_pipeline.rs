//! Trains the full hierarchy at desk scale for one seed and prints the
//! collision rates of the cells the trend checks look at.
//!
//! cargo run --release -p levelk --example desk_pipeline -- <seed> [config.toml]

use std::time::Instant;

use levelk::eval::{run_experiment, Composition, TrafficSpec};
use levelk::hierarchy::{train_dynamic, train_level_k, NullSink, PolicySet};
use levelk::{PolicyId, RunConfig};

fn main() -> levelk::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed"));
    let mut cfg = match std::env::args().nth(2) {
        Some(path) => RunConfig::load(std::path::Path::new(&path))?,
        None => RunConfig::desk_scale(),
    };
    cfg.seed = seed;
    let start = Instant::now();
    let mut set = PolicySet::new(cfg.level0);
    for k in 1..=3u8 {
        let t = train_level_k(k, &set, &cfg, &mut NullSink)?;
        let collisions = t.log.iter().filter(|l| l.collision).count();
        println!(
            "level-{k}: selected ep {} of {:?}, selection {:?}, training collisions {collisions}, {:.0}s",
            t.selected_episode,
            t.candidates.iter().map(|c| c.episode).collect::<Vec<_>>(),
            t.selection_collisions,
            start.elapsed().as_secs_f64()
        );
        set.insert(PolicyId::Level(k), std::sync::Arc::new(t.params))?;
    }
    let t = train_dynamic(&set, &cfg, &mut NullSink)?;
    println!(
        "dynamic: selected ep {}, selection {:?}, {:.0}s",
        t.selected_episode,
        t.selection_collisions,
        start.elapsed().as_secs_f64()
    );
    set.insert(PolicyId::Dynamic, std::sync::Arc::new(t.params))?;

    let cells = [
        (PolicyId::Level(1), Composition::All(PolicyId::Level0)),
        (PolicyId::Level(1), Composition::All(PolicyId::Level(1))),
        (PolicyId::Level(1), Composition::Mixed),
        (PolicyId::Level(2), Composition::Mixed),
        (PolicyId::Level(3), Composition::Mixed),
        (PolicyId::Dynamic, Composition::Mixed),
    ];
    for (ego, comp) in cells {
        let spec = TrafficSpec::from_config(comp, &cfg);
        let s = run_experiment(ego, &spec, &set, &cfg, seed)?;
        println!(
            "{ego} in {}: {}/{} = {:.1}% types {:?}",
            comp.label(),
            s.collisions(),
            s.total(),
            100.0 * s.rate(),
            s.type_counts()
        );
    }
    println!("total {:.0}s", start.elapsed().as_secs_f64());
    Ok(())
}
