//! Runs the bundled arenas over several seeds with and without optimization
//! and prints coverage, episode count and path length.
//!
//! cargo run --release -p diffexplore --example sweep -- [seeds] [key=value ...]
//!
//! Settings use the scenario-file keys, e.g. `alpha=5 max_iterations=20`.

use std::path::Path;
use std::time::Instant;

use diffexplore::map_io::load_world;
use diffexplore::{run_exploration, ScenarioConfig, ViewPoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().map_or(Ok(5), |s| s.parse())?;
    let mut scenario = ScenarioConfig::default();
    for item in args.iter().skip(1) {
        let (key, value) = item.split_once('=').ok_or("settings are key=value")?;
        scenario.set(key, value)?;
    }
    let base = scenario.explorer;
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut pooled: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for map in ["arena_a.txt", "arena_b.txt"] {
        let world = load_world(&root.join(map), 0.3)?;
        for optimize in [true, false] {
            let mut config = base;
            config.optimize = optimize;
            let mut lengths = Vec::new();
            let mut episodes = Vec::new();
            for seed in 0..seeds {
                let t = Instant::now();
                let out = run_exploration(&world, ViewPoint::new(1.05, 1.05, 0.0), &config, seed)?;
                let r = &out.report;
                let first95 = r
                    .episodes
                    .iter()
                    .find(|e| e.coverage.coverage >= 0.95)
                    .map(|e| e.episode);
                println!(
                    "{map} opt={optimize} seed={seed} status={} episodes={} coverage={:.4} length={:.2} first95={:?} bd_cells={} collisions={} time={:.2}s",
                    r.status.as_str(),
                    r.episodes.len(),
                    r.final_coverage.coverage,
                    r.cumulative_length,
                    first95,
                    r.boundary_cells,
                    r.collisions,
                    t.elapsed().as_secs_f64()
                );
                lengths.push(r.cumulative_length);
                pooled[usize::from(!optimize)].push(r.cumulative_length);
                episodes.push(first95.unwrap_or(usize::MAX));
            }
            lengths.sort_by(f64::total_cmp);
            episodes.sort();
            println!(
                "SUMMARY {map} opt={optimize} median_length={:.2} median_first95={}",
                lengths[lengths.len() / 2],
                episodes[episodes.len() / 2]
            );
        }
    }
    for p in &mut pooled {
        p.sort_by(f64::total_cmp);
    }
    let median = |v: &[f64]| (v[(v.len() - 1) / 2] + v[v.len() / 2]) / 2.0;
    println!(
        "POOLED opt={:.2} no_opt={:.2} ratio={:.3}",
        median(&pooled[0]),
        median(&pooled[1]),
        median(&pooled[0]) / median(&pooled[1])
    );
    Ok(())
}
