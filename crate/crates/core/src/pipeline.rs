//! End-to-end runs: sample a scenario, order repairs, schedule crews,
//! simulate and summarise. Batches repeat this over seeded scenarios with
//! several strategies on the same failure sets and compare them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::{draw_intensity, generate_track, sample_scenario, Bounds, DisasterScenario, EventShape, HazardEvent, Intensity};
use crate::metrics::{benjamini_hochberg, paired_comparison, repeated_measures_anova, AnovaTable, EohWeights, Mop};
use crate::network::{build_simple_testbed, load_network, IntegratedNetwork, Network};
use crate::recovery::{default_crews, mpc_sequence, rank_components, Crew, MpcOptions, RankingContext, RepairOrder, Strategy};
use crate::simulation::{build_event_table, crew_travel_times, EventTable, SimParams, SimulationResult, Simulator};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Network source naming the built-in testbed.
pub const BUILTIN_SIMPLE: &str = "builtin:simple";

/// Loads `builtin:simple` or a network file.
pub fn load_network_source(source: &str) -> Result<IntegratedNetwork> {
    if source == BUILTIN_SIMPLE {
        Ok(build_simple_testbed())
    } else if let Some(other) = source.strip_prefix("builtin:") {
        Err(Error::InvalidInput(format!("unknown built-in network '{other}' (expected simple)")))
    } else {
        load_network(source)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Network file or `builtin:simple`.
    pub network: String,
    pub event: HazardEvent,
    pub p_hazard: f64,
    pub strategy: Strategy,
    /// Zone node the crews start from; central zone when absent.
    pub crew_depot: Option<String>,
    pub seed: u64,
    /// End of the simulated window, s; last event plus the refill margin
    /// when absent.
    pub end_time: Option<f64>,
    pub params: SimParams,
    pub mop: Mop,
    pub weights: EohWeights,
}

impl RunConfig {
    pub fn new(network: impl Into<String>, event: HazardEvent, strategy: Strategy, seed: u64) -> Self {
        RunConfig {
            network: network.into(),
            event,
            p_hazard: 1.0,
            strategy,
            crew_depot: None,
            seed,
            end_time: None,
            params: SimParams::default(),
            mop: Mop::default(),
            weights: EohWeights::default(),
        }
    }

    /// Loads the network and compiles it with `self.params`.
    pub fn simulator(&self) -> Result<Simulator> {
        Ok(Simulator::new(load_network_source(&self.network)?, self.params))
    }

    pub fn crews(&self, net: &IntegratedNetwork) -> Result<Vec<Crew>> {
        default_crews(net, self.crew_depot.as_deref())
    }

    fn mpc_options(&self) -> MpcOptions {
        MpcOptions { weights: self.weights, mop: self.mop }
    }
}

/// Repair order for `scenario` under `strategy`.
pub fn repair_order(
    sim: &Simulator,
    scenario: &DisasterScenario,
    crews: &[Crew],
    strategy: Strategy,
    options: &MpcOptions,
) -> Result<RepairOrder> {
    let failed: Vec<String> = scenario.failed_ids().into_iter().map(String::from).collect();
    match strategy {
        Strategy::Mpc { horizon } => mpc_sequence(sim, scenario, crews, horizon, options),
        Strategy::Heuristic(h) => {
            use crate::recovery::Heuristic::*;
            let mut ctx = RankingContext::default();
            if matches!(h, MaxFlow | Zone) {
                ctx.peak_flow = Some(sim.peak_flows()?);
            }
            if h == CrewDistance {
                let p = sim.params();
                ctx.crew_travel = Some(crew_travel_times(sim.network(), sim.roads(), scenario, crews, &p.assignment)?);
            }
            rank_components(sim.network(), &failed, h, &ctx)
        }
    }
}

/// EOH of both serviceability measures for one network, h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkEoh {
    pub ecs: f64,
    pub pcs: f64,
}

impl NetworkEoh {
    pub fn get(&self, mop: Mop) -> f64 {
        match mop {
            Mop::Ecs => self.ecs,
            Mop::Pcs => self.pcs,
        }
    }
}

/// Summary written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub seed: u64,
    pub strategy: String,
    pub mop: Mop,
    pub weights: EohWeights,
    pub resolved_intensity: Intensity,
    pub failures: Vec<String>,
    pub repair_order: RepairOrder,
    pub t0_s: f64,
    pub end_time_s: f64,
    pub eoh: BTreeMap<Network, NetworkEoh>,
    /// Combined EOH of the chosen measure.
    pub weighted_eoh: f64,
    /// Per-consumer EOH; `null` for consumers with no normal demand.
    pub consumer_eoh: BTreeMap<Network, BTreeMap<String, Option<f64>>>,
    /// (time s, reservoir id)
    pub dry_reservoirs: Vec<(f64, String)>,
}

/// Everything one run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub scenario: DisasterScenario,
    pub order: RepairOrder,
    pub table: EventTable,
    pub result: SimulationResult,
    pub report: Report,
}

fn summarise(config: &RunConfig, scenario: &DisasterScenario, order: &RepairOrder, result: &SimulationResult) -> Result<Report> {
    let (t0, end) = (result.t0, result.horizon);
    let mut eoh = BTreeMap::new();
    let mut consumer_eoh = BTreeMap::new();
    for series in [&result.water, &result.power] {
        eoh.insert(
            series.network,
            NetworkEoh { ecs: series.system_eoh(Mop::Ecs, t0, end)?, pcs: series.system_eoh(Mop::Pcs, t0, end)? },
        );
        let mut per = BTreeMap::new();
        for (i, id) in series.consumers.iter().enumerate() {
            per.insert(id.clone(), series.consumer_eoh(i, t0, end)?);
        }
        consumer_eoh.insert(series.network, per);
    }
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: scenario.seed,
        strategy: config.strategy.to_string(),
        mop: config.mop,
        weights: config.weights,
        resolved_intensity: scenario.resolved_intensity,
        failures: scenario.failed_ids().into_iter().map(String::from).collect(),
        repair_order: order.clone(),
        t0_s: t0,
        end_time_s: end,
        weighted_eoh: result.weighted_eoh(config.mop, config.weights)?,
        eoh,
        consumer_eoh,
        dry_reservoirs: result.dry_reservoirs.clone(),
    })
}

/// Orders, schedules and simulates an already sampled scenario.
pub fn run_scenario(sim: &Simulator, scenario: &DisasterScenario, config: &RunConfig) -> Result<RunOutcome> {
    let crews = config.crews(sim.network())?;
    let order = repair_order(sim, scenario, &crews, config.strategy, &config.mpc_options())?;
    log::debug!("repair order: {order:?}");
    let p = sim.params();
    let table = build_event_table(sim.network(), sim.roads(), scenario, &order, &crews, &p.durations, &p.assignment)?;
    log::debug!("event table: {} rows", table.rows().len());
    let result = sim.simulate(&table, config.end_time)?;
    let report = summarise(config, scenario, &order, &result)?;
    log::debug!("{}: weighted EOH {:.4} h", config.strategy, report.weighted_eoh);
    Ok(RunOutcome { scenario: scenario.clone(), order, table, result, report })
}

/// Samples the scenario of `config.seed` and runs it.
pub fn run(sim: &Simulator, config: &RunConfig) -> Result<RunOutcome> {
    let scenario = sample_scenario(sim.network(), &config.event, config.p_hazard, config.seed)?;
    log::info!("scenario: {} failures ({})", scenario.failures.len(), scenario.resolved_intensity);
    run_scenario(sim, &scenario, config)
}

#[derive(Serialize)]
struct CurveRow<'a> {
    time_s: f64,
    network: &'a str,
    #[serde(rename = "ECS")]
    ecs: Option<f64>,
    #[serde(rename = "PCS")]
    pcs: Option<f64>,
}

impl RunOutcome {
    /// Serviceability curves: water on the sampling grid, power at interval
    /// starts.
    pub fn performance_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for series in [&self.result.water, &self.result.power] {
            let (ecs, pcs) = (series.ecs_curve(), series.pcs_curve());
            for (k, &time_s) in series.times.iter().enumerate() {
                w.serialize(CurveRow { time_s, network: series.network.as_str(), ecs: ecs[k], pcs: pcs[k] })?;
            }
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
    }

    /// Writes `scenario.json`, `event_table.csv`, `performance.csv` and
    /// `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.scenario.save(&dir.join("scenario.json"))?;
        fs::write(dir.join("event_table.csv"), self.table.to_csv_string())?;
        fs::write(dir.join("performance.csv"), self.performance_csv()?)?;
        fs::write(dir.join("report.json"), to_json(&self.report))?;
        Ok(())
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub base: RunConfig,
    pub scenarios: usize,
    pub strategies: Vec<Strategy>,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    /// Draw each scenario's intensity from these relative weights instead
    /// of using the event's.
    pub intensity_weights: Option<Vec<(Intensity, f64)>>,
    /// Generate a fresh track per scenario through this many control points
    /// (track events only).
    pub random_track_points: Option<usize>,
}

impl BatchConfig {
    /// Seed of scenario `i`.
    pub fn seed_of(&self, i: usize) -> u64 {
        self.base.seed.wrapping_add(i as u64)
    }

    /// Event of the scenario seeded with `seed`.
    pub fn event_for(&self, net: &IntegratedNetwork, seed: u64) -> Result<HazardEvent> {
        let mut event = self.base.event.clone();
        // intensity and track come from a separate stream than failures
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        if let Some(weights) = &self.intensity_weights {
            event.intensity = draw_intensity(weights, &mut rng)?;
        }
        if let (Some(points), EventShape::Track { track, .. }) = (self.random_track_points, &mut event.shape) {
            *track = generate_track(seed, Bounds::of_network(net), points)?;
        }
        Ok(event)
    }
}

/// EOH of one strategy on one scenario, h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyEoh {
    pub water: f64,
    pub power: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub seed: u64,
    pub intensity: Intensity,
    pub failures: usize,
    /// One entry per strategy, in batch order.
    pub eoh: Vec<StrategyEoh>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedScenario {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostHoc {
    pub a: String,
    pub b: String,
    pub n: usize,
    /// mean of `a - b`, h
    pub mean_difference: f64,
    pub t: Option<f64>,
    pub df: usize,
    pub p_value: f64,
    /// Benjamini-Hochberg over all pairs of the same measure.
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureStats {
    pub mean_eoh: Vec<f64>,
    pub anova: Option<AnovaTable>,
    pub posthoc: Vec<PostHoc>,
}

/// Written to `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub schema_version: u32,
    pub scenarios_requested: usize,
    pub scenarios_completed: usize,
    pub skipped: Vec<SkippedScenario>,
    pub strategies: Vec<String>,
    pub mop: Mop,
    pub weights: EohWeights,
    /// keyed by `water`, `power`, `weighted`
    pub measures: BTreeMap<String, MeasureStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub records: Vec<ScenarioRecord>,
    pub stats: BatchStats,
}

pub const MEASURES: [&str; 3] = ["water", "power", "weighted"];

fn measure(e: &StrategyEoh, name: &str) -> f64 {
    match name {
        "water" => e.water,
        "power" => e.power,
        _ => e.weighted,
    }
}

impl BatchOutcome {
    /// `matrix[scenario][strategy]` of one measure.
    pub fn matrix(&self, name: &str) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|r| r.eoh.iter().map(|e| measure(e, name)).collect())
            .collect()
    }

    fn summary_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            network: &'a str,
            strategy: &'a str,
            #[serde(rename = "EOH")]
            eoh: f64,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for name in MEASURES {
            for (j, s) in self.stats.strategies.iter().enumerate() {
                w.serialize(Row { network: name, strategy: s, eoh: self.stats.measures[name].mean_eoh[j] })?;
            }
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
    }

    fn eoh_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            seed: u64,
            strategy: &'a str,
            water: f64,
            power: f64,
            weighted: f64,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            for (j, e) in r.eoh.iter().enumerate() {
                w.serialize(Row { seed: r.seed, strategy: &self.stats.strategies[j], water: e.water, power: e.power, weighted: e.weighted })?;
            }
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
    }

    /// Writes `batch_summary.csv` (mean EOH per measure and strategy),
    /// `batch_eoh.csv` (the paired matrix) and `stats.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("batch_summary.csv"), self.summary_csv()?)?;
        fs::write(dir.join("batch_eoh.csv"), self.eoh_csv()?)?;
        fs::write(dir.join("stats.json"), to_json(&self.stats))?;
        Ok(())
    }
}

fn measure_stats(matrix: &[Vec<f64>], labels: &[String]) -> MeasureStats {
    let k = labels.len();
    let n = matrix.len();
    let mean_eoh = (0..k)
        .map(|j| if n == 0 { 0.0 } else { matrix.iter().map(|r| r[j]).sum::<f64>() / n as f64 })
        .collect();
    let anova = match repeated_measures_anova(matrix) {
        Ok(a) => Some(a),
        Err(e) => {
            log::warn!("ANOVA skipped: {e}");
            None
        }
    };
    let mut posthoc = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let xa: Vec<f64> = matrix.iter().map(|r| r[a]).collect();
            let xb: Vec<f64> = matrix.iter().map(|r| r[b]).collect();
            match paired_comparison(&xa, &xb) {
                Ok(c) => posthoc.push(PostHoc {
                    a: labels[a].clone(),
                    b: labels[b].clone(),
                    n: c.n,
                    mean_difference: c.mean_difference,
                    t: c.t,
                    df: c.df,
                    p_value: c.p_value,
                    p_adjusted: c.p_value,
                }),
                Err(e) => log::warn!("comparison {} vs {} skipped: {e}", labels[a], labels[b]),
            }
        }
    }
    let adjusted = benjamini_hochberg(&posthoc.iter().map(|p| p.p_value).collect::<Vec<_>>());
    for (p, q) in posthoc.iter_mut().zip(adjusted) {
        p.p_adjusted = q;
    }
    MeasureStats { mean_eoh, anova, posthoc }
}

/// Runs every strategy on `config.scenarios` seeded scenarios.
///
/// A scenario that fails for any strategy is skipped for all of them so the
/// EOH matrix stays paired; the batch fails only if every scenario does.
pub fn batch(sim: &Simulator, config: &BatchConfig) -> Result<BatchOutcome> {
    if config.scenarios == 0 || config.strategies.is_empty() {
        return Err(Error::InvalidInput("a batch needs at least one scenario and one strategy".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let one = |i: usize| -> std::result::Result<ScenarioRecord, SkippedScenario> {
        let seed = config.seed_of(i);
        let attempt = || -> Result<ScenarioRecord> {
            let event = config.event_for(sim.network(), seed)?;
            let scenario = sample_scenario(sim.network(), &event, config.base.p_hazard, seed)?;
            let mut eoh = Vec::with_capacity(config.strategies.len());
            for &strategy in &config.strategies {
                let run_config = RunConfig { strategy, event: event.clone(), seed, ..config.base.clone() };
                let out = run_scenario(sim, &scenario, &run_config)?;
                let r = &out.report;
                eoh.push(StrategyEoh {
                    water: r.eoh[&Network::Water].get(config.base.mop),
                    power: r.eoh[&Network::Power].get(config.base.mop),
                    weighted: r.weighted_eoh,
                });
            }
            Ok(ScenarioRecord { seed, intensity: scenario.resolved_intensity, failures: scenario.failures.len(), eoh })
        };
        attempt().map_err(|e| {
            log::warn!("scenario seed {seed} skipped: {e}");
            SkippedScenario { seed, error: e.to_string() }
        })
    };
    let results: Vec<_> = pool.install(|| (0..config.scenarios).into_par_iter().map(one).collect());

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(s) => skipped.push(s),
        }
    }
    if records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "all {} scenarios failed; first error: {}",
            config.scenarios, skipped[0].error
        )));
    }
    let labels: Vec<String> = config.strategies.iter().map(|s| s.to_string()).collect();
    let outcome = BatchOutcome {
        records,
        stats: BatchStats {
            schema_version: REPORT_SCHEMA_VERSION,
            scenarios_requested: config.scenarios,
            scenarios_completed: 0,
            skipped,
            strategies: labels.clone(),
            mop: config.base.mop,
            weights: config.base.weights,
            measures: BTreeMap::new(),
        },
    };
    let measures = MEASURES
        .iter()
        .map(|m| (m.to_string(), measure_stats(&outcome.matrix(m), &labels)))
        .collect();
    let completed = outcome.records.len();
    Ok(BatchOutcome { stats: BatchStats { scenarios_completed: completed, measures, ..outcome.stats }, ..outcome })
}
