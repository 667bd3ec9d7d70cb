use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use diffexplore::info_gain::sample_augmentation;
use diffexplore::map_io::{
    boundariness_pgm, filter_to_csv, load_world, log_odds_from_csv, log_odds_to_csv, path_from_csv,
    path_to_csv, probability_pgm, trace_to_csv, write_atomic,
};
use diffexplore::optimizer::gradient_check;
use diffexplore::rng::{stream, Stream};
use diffexplore::{
    build_view_filter, path_information_gain, run_exploration_with, view_information_gain,
    BoundarinessMap, GridGeometry, LogOddsMap, Objective, ScenarioConfig, ViewPoint,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "diffexplore",
    version,
    about = "Frontier exploration with gradient-refined paths"
)]
struct Cli {
    /// Scenario file (`key = value` lines).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override one setting, e.g. `--set alpha=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exploration loop and write the report, maps and paths.
    Explore(ExploreArgs),
    /// View and path information gain of a path against a log-odds snapshot.
    Gain(SnapshotPath),
    /// Compare the objective gradient with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Boundariness image of a log-odds snapshot.
    Boundariness(BoundarinessArgs),
    /// Fuzzy view filter of one view-point as CSV.
    Filter(FilterArgs),
}

#[derive(Args)]
struct ExploreArgs {
    /// Skip gradient optimization (RRT-only baseline).
    #[arg(long)]
    no_opt: bool,
    /// Also write map_k.pgm, bd_k.pgm and odds_k.csv after every episode.
    #[arg(long)]
    snapshots: bool,
    /// Output directory; defaults to `output_dir` from the config.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SnapshotPath {
    /// Log-odds CSV as written by `explore`.
    #[arg(long)]
    map: PathBuf,
    /// Path CSV with `x,y,theta` rows.
    #[arg(long)]
    path: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    input: SnapshotPath,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    /// Fail when the largest relative error reaches this value.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct BoundarinessArgs {
    #[arg(long)]
    map: PathBuf,
    /// Output PGM.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long, allow_hyphen_values = true)]
    x: f64,
    #[arg(long, allow_hyphen_values = true)]
    y: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    theta_deg: f64,
    /// Log-odds CSV fixing the grid; without it the configured world is used.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            ScenarioConfig::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    for item in &cli.overrides {
        let (key, value) = item
            .split_once('=')
            .with_context(|| format!("override {item:?} is not KEY=VALUE"))?;
        config.set(key.trim(), value)?;
    }
    Ok(config)
}

fn read_odds(path: &FsPath) -> Result<LogOddsMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    log_odds_from_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_path(path: &FsPath) -> Result<diffexplore::Path> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    path_from_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(dir: &FsPath, name: &str, bytes: &[u8]) -> Result<()> {
    let target = dir.join(name);
    write_atomic(&target, bytes).with_context(|| format!("writing {}", target.display()))
}

fn explore(config: &ScenarioConfig, args: &ExploreArgs) -> Result<bool> {
    let world = load_world(&config.world, config.resolution)
        .with_context(|| format!("loading world {}", config.world.display()))?;
    let mut explorer = config.explorer;
    if args.no_opt {
        explorer.optimize = false;
    }
    let out = args
        .output
        .clone()
        .unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut io_error = None;
    let outcome = run_exploration_with(&world, config.start, &explorer, config.seed, |view| {
        if io_error.is_some() {
            return;
        }
        let k = view.record.episode;
        let mut files = vec![
            (
                format!("path_{k}.csv"),
                path_to_csv(view.executed).into_bytes(),
            ),
            (
                format!("trace_{k}.csv"),
                trace_to_csv(view.trace).into_bytes(),
            ),
        ];
        if args.snapshots {
            files.push((format!("map_{k}.pgm"), probability_pgm(view.odds).encode()));
            files.push((format!("bd_{k}.pgm"), boundariness_pgm(view.bd).encode()));
            files.push((
                format!("odds_{k}.csv"),
                log_odds_to_csv(view.odds).into_bytes(),
            ));
        }
        for (name, bytes) in files {
            if let Err(e) = write(&out, &name, &bytes) {
                io_error = Some(e);
                return;
            }
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }

    let report = &outcome.report;
    let mut coverage =
        String::from("episode,coverage,unknown_fraction,cumulative_length,boundary_cells\n");
    let c0 = &report.initial_coverage;
    coverage.push_str(&format!("0,{},{},0,\n", c0.coverage, c0.unknown_fraction));
    for e in &report.episodes {
        coverage.push_str(&format!(
            "{},{},{},{},{}\n",
            e.episode,
            e.coverage.coverage,
            e.coverage.unknown_fraction,
            e.cumulative_length,
            e.boundary_cells
        ));
    }
    write(&out, "coverage.csv", coverage.as_bytes())?;
    write(
        &out,
        "odds_final.csv",
        log_odds_to_csv(&outcome.state.odds).as_bytes(),
    )?;
    write(
        &out,
        "map_final.pgm",
        &probability_pgm(&outcome.state.odds).encode(),
    )?;
    write(
        &out,
        "bd_final.pgm",
        &boundariness_pgm(&outcome.state.bd).encode(),
    )?;
    write(&out, "report.json", report.to_json().as_bytes())?;

    println!(
        "{} after {} episodes: coverage {:.4}, path length {:.2} m, output in {}",
        report.status.as_str(),
        report.episodes.len(),
        report.final_coverage.coverage,
        report.cumulative_length,
        out.display()
    );
    Ok(report.status.is_success())
}

fn gain(config: &ScenarioConfig, args: &SnapshotPath) -> Result<()> {
    let odds = read_odds(&args.map)?;
    let path = read_path(&args.path)?;
    let bd = BoundarinessMap::compute(&odds, config.explorer.boundariness);
    let spec = &config.explorer.sensor;
    let samples = sample_augmentation(
        &path,
        odds.geometry().resolution,
        &mut stream(config.seed, Stream::PathSampling),
    );
    let result = path_information_gain(&path, &bd, spec, &samples);
    let views: Vec<f64> = path
        .vertices()
        .iter()
        .map(|xi| view_information_gain(xi, &bd, spec))
        .collect();
    let body = json!({
        "view_gains": views,
        "path_gain": result.gain,
        "samples": result.samples,
        "footprint_cells": result.filter.len(),
    });
    println!("{}", serde_json::to_string_pretty(&body)?);
    Ok(())
}

fn gradcheck(config: &ScenarioConfig, args: &GradcheckArgs) -> Result<bool> {
    let odds = read_odds(&args.input.map)?;
    let path = read_path(&args.input.path)?;
    if path.len() < 3 {
        bail!("gradient check needs a path with at least one interior vertex");
    }
    let bd = BoundarinessMap::compute(&odds, config.explorer.boundariness);
    let samples = sample_augmentation(
        &path,
        odds.geometry().resolution,
        &mut stream(config.seed, Stream::PathSampling),
    );
    let objective = Objective::new(
        &path,
        &bd,
        &config.explorer.sensor,
        config.explorer.objective,
        samples,
    )?;
    let check = gradient_check(&objective, path.interior(), args.step)?;
    let margin = objective.branch_margin(path.interior());
    let coordinate = ["x", "y", "theta"][check.worst_coordinate];
    let body = json!({
        "max_relative_error": check.max_relative_error,
        "worst_vertex": check.worst_vertex,
        "worst_coordinate": coordinate,
        "coordinates": check.coordinates,
        "branch_margin": margin,
        "tolerance": args.tolerance,
    });
    println!("{}", serde_json::to_string_pretty(&body)?);
    if margin < 1e-3 {
        eprintln!("warning: a vertex lies within {margin:.2e} of a piecewise boundary; finite differences may disagree");
    }
    Ok(check.max_relative_error < args.tolerance)
}

fn boundariness(config: &ScenarioConfig, args: &BoundarinessArgs) -> Result<()> {
    let odds = read_odds(&args.map)?;
    let bd = BoundarinessMap::compute(&odds, config.explorer.boundariness);
    write_atomic(&args.out, &boundariness_pgm(&bd).encode())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "max {:.4}, {} cells above {}",
        bd.max_value(),
        bd.count_above(config.explorer.termination.boundary_threshold),
        config.explorer.termination.boundary_threshold
    );
    Ok(())
}

fn filter(config: &ScenarioConfig, args: &FilterArgs) -> Result<()> {
    let geometry: GridGeometry = match &args.map {
        Some(map) => *read_odds(map)?.geometry(),
        None => *load_world(&config.world, config.resolution)
            .with_context(|| format!("loading world {}", config.world.display()))?
            .geometry(),
    };
    let xi = ViewPoint::new(args.x, args.y, args.theta_deg.to_radians());
    let filter = build_view_filter(&xi, &config.explorer.sensor, &geometry);
    write_atomic(&args.out, filter_to_csv(&filter, &geometry).as_bytes())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} cells in the footprint", filter.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let config = load_config(cli)?;
    if cli.print_config {
        print!("{}", config.to_text());
        return Ok(true);
    }
    match &cli.command {
        None => bail!("no command given; see --help"),
        Some(Command::Explore(args)) => explore(&config, args),
        Some(Command::Gain(args)) => gain(&config, args).map(|_| true),
        Some(Command::Gradcheck(args)) => gradcheck(&config, args),
        Some(Command::Boundariness(args)) => boundariness(&config, args).map(|_| true),
        Some(Command::Filter(args)) => filter(&config, args).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
