//! Interdependent simulation of a disruption and its repairs.
//!
//! Event timestamps cut the horizon into intervals. At the start of each
//! interval the statuses in force are applied, the power network is
//! dispatched once and held for the interval, pumps whose motors stop are
//! switched off, and the water network is stepped forward on a 60-second
//! sampling grid (with partial steps where events fall between grid
//! points). A reservoir that runs dry shuts down the generators it feeds
//! from that moment on.
//!
//! Supplied amounts are normalised by a run of the same horizon with no
//! events, so that serviceability reflects normal operating conditions.

mod event_table;
mod schedule;

pub use event_table::{Action, EventRow, EventTable};
pub use schedule::{build_event_table, crew_travel_times, CLOSED_LINK_PENALTY};

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{weighted_eoh, CurveMode, EohWeights, Mop, PerformanceSeries};
use crate::network::{ComponentKind, DependencyKind, IntegratedNetwork, Network, Status, Statuses};
use crate::recovery::RepairDurations;
use crate::solvers::hydraulics::LinkMode;
use crate::solvers::{frank_wolfe, AssignmentOptions, HydraulicOptions, PowerModel, PowerState, RoadGraph, WaterModel};

/// Water sampling interval, s.
pub const SAMPLE_STEP: f64 = 60.0;

/// Time simulated after the last repair by default, s.
pub const DEFAULT_REFILL_MARGIN: f64 = 24.0 * 3600.0;

/// Window of normal operation scanned for peak flows, s.
pub const PEAK_FLOW_WINDOW: f64 = 24.0 * 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub hydraulic: HydraulicOptions,
    pub assignment: AssignmentOptions,
    pub durations: RepairDurations,
    /// Time after the last event that is still simulated, s.
    pub refill_margin: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            hydraulic: HydraulicOptions::default(),
            assignment: AssignmentOptions::default(),
            durations: RepairDurations::default(),
            refill_margin: DEFAULT_REFILL_MARGIN,
        }
    }
}

/// Raw per-consumer supply of one run.
#[derive(Debug, Clone, PartialEq)]
struct RawRun {
    horizon: f64,
    water_times: Vec<f64>,
    water: Vec<Vec<f64>>,
    power_times: Vec<f64>,
    power: Vec<Vec<f64>>,
    /// (time, reservoir id)
    dry_events: Vec<(f64, String)>,
    /// Peak absolute flow per water link.
    water_peak: BTreeMap<String, f64>,
}

/// Outcome of one simulated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub water: PerformanceSeries,
    pub power: PerformanceSeries,
    /// Start of the disruption (first event), s.
    pub t0: f64,
    /// End of the simulated window, s.
    pub horizon: f64,
    pub dry_reservoirs: Vec<(f64, String)>,
}

impl SimulationResult {
    pub fn series(&self, network: Network) -> Option<&PerformanceSeries> {
        match network {
            Network::Water => Some(&self.water),
            Network::Power => Some(&self.power),
            Network::Traffic => None,
        }
    }

    /// Water and power EOH over `[t0, horizon]`, combined with `weights`.
    pub fn weighted_eoh(&self, mop: Mop, weights: EohWeights) -> Result<f64> {
        Ok(weighted_eoh(&[
            (self.water.system_eoh(mop, self.t0, self.horizon)?, weights.water),
            (self.power.system_eoh(mop, self.t0, self.horizon)?, weights.power),
        ]))
    }
}

/// Compiled models of one network plus cached normal-operation runs.
///
/// Shareable across threads; the cached baseline only ever grows.
pub struct Simulator {
    net: IntegratedNetwork,
    water: WaterModel,
    power: PowerModel,
    roads: RoadGraph,
    params: SimParams,
    water_consumers: Vec<usize>,
    baseline: Mutex<Option<Arc<RawRun>>>,
    peak: OnceLock<BTreeMap<String, f64>>,
}

/// Rounds up to the sampling grid.
pub fn grid_ceil(t: f64) -> f64 {
    (t / SAMPLE_STEP).ceil() * SAMPLE_STEP
}

impl Simulator {
    pub fn new(net: IntegratedNetwork, params: SimParams) -> Self {
        let water = WaterModel::new(&net, params.hydraulic);
        let power = PowerModel::new(&net);
        let roads = RoadGraph::from_network(&net);
        let water_consumers = water.consumer_indices();
        Simulator {
            net,
            water,
            power,
            roads,
            params,
            water_consumers,
            baseline: Mutex::new(None),
            peak: OnceLock::new(),
        }
    }

    pub fn network(&self) -> &IntegratedNetwork {
        &self.net
    }

    pub fn roads(&self) -> &RoadGraph {
        &self.roads
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn water_consumer_ids(&self) -> Vec<String> {
        self.water_consumers.iter().map(|&i| self.water.node_ids()[i].clone()).collect()
    }

    /// Horizon used when none is given: last event plus the refill margin,
    /// rounded up to the sampling grid.
    pub fn default_horizon(&self, table: &EventTable) -> f64 {
        grid_ceil(table.last_time().unwrap_or(0.0) + self.params.refill_margin)
    }

    fn statuses_with_dry(&self, base: &Statuses, dry: &[String]) -> Statuses {
        let mut s = base.clone();
        for dep in &self.net.dependencies {
            if dep.kind == DependencyKind::ReservoirFeedsGenerator && dry.contains(&dep.source_id) {
                s.set(dep.target_id.clone(), Status::Failed);
            }
        }
        s
    }

    fn water_modes(&self, statuses: &Statuses, power: &PowerState) -> Vec<LinkMode> {
        let mut modes = self.water.link_modes(statuses);
        for dep in &self.net.dependencies {
            if dep.kind == DependencyKind::MotorDrivesPump && !power.motor_running(&dep.source_id) {
                self.water.close_link(&mut modes, &dep.target_id);
            }
        }
        modes
    }

    fn generators_fed_by(&self, reservoirs: &[String]) -> bool {
        self.net.dependencies.iter().any(|d| {
            d.kind == DependencyKind::ReservoirFeedsGenerator && reservoirs.contains(&d.source_id)
        })
    }

    fn run_raw(&self, table: &EventTable, horizon: f64) -> Result<RawRun> {
        let consumers = self.power.consumer_ids();
        let mut out = RawRun {
            horizon,
            water_times: Vec::new(),
            water: Vec::new(),
            power_times: Vec::new(),
            power: Vec::new(),
            dry_events: Vec::new(),
            water_peak: BTreeMap::new(),
        };
        let mut run = self.water.start();
        let link_ids = self.water.link_ids();
        let mut peak = vec![0.0f64; link_ids.len()];
        let events = table.timestamps();
        let mut dry: Vec<String> = Vec::new();
        let mut t = 0.0;
        loop {
            let next_event = events.iter().copied().find(|&e| e > t).unwrap_or(f64::INFINITY);
            let until = next_event.min(horizon);
            let statuses = self.statuses_with_dry(&table.statuses_at(t), &dry);
            let wrap = |e: Error| Error::Simulation { time: t, until, source: Box::new(e) };

            let power = self.power.solve(&statuses).map_err(wrap)?;
            out.power_times.push(t);
            out.power.push(consumers.iter().map(|c| power.served_load[c]).collect());
            let modes = self.water_modes(&statuses, &power);

            // step water across [t, until), sampling on the grid
            let mut now = t;
            let mut cut = false;
            loop {
                let at_end = now >= horizon;
                let snap = self.water.snapshot(&mut run, &modes).map_err(wrap)?;
                if (now / SAMPLE_STEP).fract() == 0.0 {
                    out.water_times.push(now);
                    out.water.push(self.water_consumers.iter().map(|&i| snap.demand[i]).collect());
                    for (p, q) in peak.iter_mut().zip(&snap.flow) {
                        *p = p.max(q.abs());
                    }
                }
                if at_end {
                    break;
                }
                let next = (((now / SAMPLE_STEP).floor() + 1.0) * SAMPLE_STEP).min(until);
                self.water.integrate(&mut run, &snap, next - now);
                now = next;
                let dry_now = self.water.dry_reservoirs(&run);
                if dry_now != dry {
                    let fresh: Vec<String> = dry_now.iter().filter(|r| !dry.contains(r)).cloned().collect();
                    for r in &fresh {
                        out.dry_events.push((now, r.clone()));
                    }
                    let affects_power = self.generators_fed_by(&fresh);
                    dry = dry_now;
                    if affects_power && now < until {
                        cut = true;
                        break;
                    }
                }
                if now >= until && until < horizon {
                    break;
                }
            }
            if now >= horizon {
                break;
            }
            t = if cut { now } else { until };
        }
        out.water_peak = link_ids.into_iter().zip(peak).collect();
        Ok(out)
    }

    fn baseline(&self, horizon: f64) -> Result<Arc<RawRun>> {
        let mut guard = self.baseline.lock().expect("baseline lock");
        if let Some(b) = guard.as_ref() {
            if b.horizon >= horizon {
                return Ok(b.clone());
            }
        }
        // a fresh run from zero reproduces any shorter run as its prefix
        let b = Arc::new(self.run_raw(&EventTable::default(), horizon)?);
        *guard = Some(b.clone());
        Ok(b)
    }

    /// Peak absolute flow of every pipe, pump, line, transformer and road
    /// link under normal operation.
    pub fn peak_flows(&self) -> Result<BTreeMap<String, f64>> {
        if let Some(p) = self.peak.get() {
            return Ok(p.clone());
        }
        let mut peak = self.baseline(PEAK_FLOW_WINDOW)?.water_peak.clone();
        let power = self.power.solve(&Statuses::new())?;
        for (id, f) in &power.line_flow {
            peak.insert(id.clone(), f.abs());
        }
        let usable = vec![true; self.roads.link_ids.len()];
        let traffic = frank_wolfe(&self.roads, &usable, &self.params.assignment);
        for (id, f) in self.roads.link_ids.iter().zip(&traffic.link_flow) {
            peak.insert(id.clone(), f.abs());
        }
        Ok(self.peak.get_or_init(|| peak).clone())
    }

    /// Simulates `table` up to `horizon` (default: [`Simulator::default_horizon`]).
    pub fn simulate(&self, table: &EventTable, horizon: Option<f64>) -> Result<SimulationResult> {
        let horizon = grid_ceil(horizon.unwrap_or_else(|| self.default_horizon(table)));
        if let Some(last) = table.last_time() {
            if horizon < last {
                return Err(Error::InvalidInput(format!(
                    "horizon {horizon} s ends before the last event at {last} s"
                )));
            }
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        let base = self.baseline(horizon)?;
        let raw = if table.is_empty() {
            None
        } else {
            Some(self.run_raw(table, horizon)?)
        };
        let raw_ref = raw.as_ref().unwrap_or(&base);

        let mut water = PerformanceSeries::new(Network::Water, CurveMode::Linear, self.water_consumer_ids());
        for (k, &t) in raw_ref.water_times.iter().enumerate() {
            water.push(t, raw_ref.water[k].clone(), base.water[k].clone());
        }
        let base_power = &base.power[0];
        let mut power = PerformanceSeries::new(Network::Power, CurveMode::Step, self.power.consumer_ids());
        for (k, &t) in raw_ref.power_times.iter().enumerate() {
            power.push(t, raw_ref.power[k].clone(), base_power.clone());
        }
        Ok(SimulationResult {
            water,
            power,
            t0: table.first_time().unwrap_or(0.0).min(horizon),
            horizon,
            dry_reservoirs: raw_ref.dry_events.clone(),
        })
    }

    /// Components that can fail (pipes, pumps, lines, transformers, road links).
    pub fn repairable(&self) -> Vec<&str> {
        self.net
            .all_components()
            .filter(|c| c.kind.is_repairable())
            .map(|c| c.id.as_str())
            .collect()
    }
}

/// Ids of the consumers whose service is tracked: demand nodes, loads, motors.
pub fn consumers(net: &IntegratedNetwork, network: Network) -> Vec<String> {
    net.components(network)
        .iter()
        .filter(|c| {
            matches!(
                c.kind,
                ComponentKind::DemandNode(_) | ComponentKind::Load(_) | ComponentKind::Motor(_)
            )
        })
        .map(|c| c.id.clone())
        .collect()
}
