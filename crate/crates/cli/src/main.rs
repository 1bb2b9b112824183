use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lifeline::hazard::{generate_track, sample_scenario, Bounds, HazardEvent, Intensity, DEFAULT_OCCURRENCE_TIME, FLOOD_INTENSITY_WEIGHTS};
use lifeline::metrics::Mop;
use lifeline::network::{build_simple_testbed, load_network, save_network, Point};
use lifeline::pipeline::{self, load_network_source, BatchConfig, RunConfig, BUILTIN_SIMPLE};
use lifeline::recovery::{Heuristic, Strategy};
use lifeline::simulation::Simulator;

/// Disruption and restoration of interdependent water, power and road networks.
#[derive(Parser)]
#[command(name = "lifeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one seeded scenario under one strategy.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// max_flow, centrality, crew_distance, zone or mpc
        #[arg(long, default_value = "max_flow")]
        strategy: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare strategies over seeded scenarios.
    Batch {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated strategies.
        #[arg(long, default_value = "max_flow,centrality,zone")]
        strategy: String,
        #[arg(long, default_value_t = 50)]
        scenarios: usize,
        /// Worker threads (0: all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Draw intensities from the flood weights 0.1/0.3/0.5 for low,
        /// moderate and high.
        #[arg(long)]
        flood: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a network file.
    Validate {
        #[arg(long)]
        network: PathBuf,
    },
    /// Write the built-in testbed as a network file.
    MakeTestbed {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum HazardKind {
    Point,
    Track,
    Random,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Network file or builtin:simple.
    #[arg(long, default_value = BUILTIN_SIMPLE)]
    network: String,
    #[arg(long, value_enum, default_value = "point")]
    hazard: HazardKind,
    /// Epicentre "X,Y" in m (default: centre of the network).
    #[arg(long, value_parser = parse_point)]
    center: Option<Point>,
    /// Point footprint radius, m (default: a quarter of the network diagonal).
    #[arg(long)]
    radius: Option<f64>,
    /// JSON list of {"x","y"} points; a seeded random track when absent.
    #[arg(long)]
    track: Option<PathBuf>,
    /// Track footprint half-width, m (default: a tenth of the network diagonal).
    #[arg(long)]
    offset: Option<f64>,
    /// Components failed by a random event.
    #[arg(long, default_value_t = 3)]
    count: usize,
    /// low, moderate, high, extreme or random
    #[arg(long, default_value = "moderate")]
    intensity: Intensity,
    #[arg(long, default_value_t = 1.0)]
    p_hazard: f64,
    /// MPC prediction horizon.
    #[arg(long, default_value_t = 2)]
    horizon: usize,
    #[arg(long)]
    seed: u64,
    /// ecs or pcs
    #[arg(long, default_value = "pcs")]
    mop: Mop,
    /// Zone node the crews start from (default: most central zone).
    #[arg(long)]
    crew_depot: Option<String>,
    /// Event time, s.
    #[arg(long, default_value_t = DEFAULT_OCCURRENCE_TIME)]
    occurrence_time: f64,
    /// End of the simulated window, s (default: last repair plus 24 h).
    #[arg(long)]
    end_time: Option<f64>,
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
    Ok(Point::new(num(x)?, num(y)?))
}

fn parse_strategy(name: &str, horizon: usize) -> Result<Strategy> {
    if name == "mpc" {
        if horizon == 0 {
            bail!("--horizon must be at least 1");
        }
        return Ok(Strategy::Mpc { horizon });
    }
    Ok(Strategy::Heuristic(name.parse::<Heuristic>()?))
}

impl ScenarioArgs {
    /// Event and base config; `None` track means one is generated per seed.
    fn config(&self, strategy: Strategy) -> Result<(RunConfig, bool)> {
        let net = load_network_source(&self.network).context("loading network")?;
        let bounds = Bounds::of_network(&net);
        let diagonal = bounds.min.distance(bounds.max);
        let mut random_track = false;
        let mut event = match self.hazard {
            HazardKind::Point => HazardEvent::point(
                self.center.unwrap_or_else(|| bounds.min.midpoint(bounds.max)),
                self.radius.unwrap_or(0.25 * diagonal),
                self.intensity,
            ),
            HazardKind::Track => {
                let track = match &self.track {
                    Some(path) => read_track(path)?,
                    None => {
                        random_track = true;
                        generate_track(self.seed, bounds, TRACK_CONTROL_POINTS)?
                    }
                };
                HazardEvent::track(track, self.offset.unwrap_or(0.1 * diagonal), self.intensity)
            }
            HazardKind::Random => HazardEvent::random(self.count),
        };
        event.occurrence_time = self.occurrence_time;
        event.validate().context("checking hazard")?;
        let mut config = RunConfig::new(self.network.clone(), event, strategy, self.seed);
        config.p_hazard = self.p_hazard;
        config.mop = self.mop;
        config.crew_depot = self.crew_depot.clone();
        config.end_time = self.end_time;
        Ok((config, random_track))
    }
}

const TRACK_CONTROL_POINTS: usize = 4;

fn read_track(path: &Path) -> Result<Vec<Point>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading track {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing track {}", path.display()))
}

fn simulator(config: &RunConfig) -> Result<Simulator> {
    log::info!("loading network {}", config.network);
    config.simulator().context("loading network")
}

fn run(args: &ScenarioArgs, strategy: &str, out: &Path) -> Result<()> {
    let strategy = parse_strategy(strategy, args.horizon)?;
    let (config, _) = args.config(strategy)?;
    let sim = simulator(&config)?;
    log::info!("sampling scenario (seed {})", config.seed);
    let scenario = sample_scenario(sim.network(), &config.event, config.p_hazard, config.seed).context("sampling scenario")?;
    log::info!("{} components failed ({} intensity)", scenario.failures.len(), scenario.resolved_intensity);
    log::info!("ordering repairs with {strategy} and simulating recovery");
    let outcome = pipeline::run_scenario(&sim, &scenario, &config).context("simulating recovery")?;
    log::info!("writing results to {}", out.display());
    outcome.write(out).context("writing results")?;
    let r = &outcome.report;
    log::info!("done: weighted EOH {:.3} h over [{} s, {} s]", r.weighted_eoh, r.t0_s, r.end_time_s);
    Ok(())
}

fn batch(args: &ScenarioArgs, strategies: &str, scenarios: usize, jobs: usize, flood: bool, out: &Path) -> Result<()> {
    let strategies = strategies
        .split(',')
        .map(|s| parse_strategy(s.trim(), args.horizon))
        .collect::<Result<Vec<_>>>()?;
    let (base, random_track) = args.config(strategies[0])?;
    let sim = simulator(&base)?;
    let config = BatchConfig {
        base,
        scenarios,
        strategies,
        jobs,
        intensity_weights: flood.then(|| FLOOD_INTENSITY_WEIGHTS.to_vec()),
        random_track_points: random_track.then_some(TRACK_CONTROL_POINTS),
    };
    log::info!("running {scenarios} scenarios x {} strategies", config.strategies.len());
    let outcome = pipeline::batch(&sim, &config).context("running batch")?;
    log::info!(
        "{} of {scenarios} scenarios completed; writing results to {}",
        outcome.stats.scenarios_completed,
        out.display()
    );
    outcome.write(out).context("writing results")?;
    for (name, m) in &outcome.stats.measures {
        if let Some(a) = &m.anova {
            log::info!("{name}: F = {:?} (df {}, {}), p = {:.4}", a.f, a.df_treatment, a.df_error, a.p_value);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, strategy, out } => run(scenario, strategy, out),
        Command::Batch { scenario, strategy, scenarios, jobs, flood, out } => {
            batch(scenario, strategy, *scenarios, *jobs, *flood, out)
        }
        Command::Validate { network } => load_network(network)
            .map(|net| log::info!("{} is valid ({} components)", network.display(), net.all_components().count()))
            .with_context(|| format!("validating {}", network.display())),
        Command::MakeTestbed { out } => save_network(&build_simple_testbed(), out)
            .map(|_| log::info!("wrote {}", out.display()))
            .context("writing testbed"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
