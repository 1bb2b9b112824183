//! Repair scheduling against the damaged road network.
//!
//! Crews are processed in order of availability (ties by crew id). A free
//! crew walks its network's repair order and takes the first component it
//! can reach over open roads; components it cannot reach are deferred and
//! retried once a road repair completes. Travel uses congested times from a
//! traffic assignment of the road network as it stands at departure, so
//! assignments change only when roads fail or reopen.
//!
//! If every crew with remaining work is cut off and no road repair is
//! pending, the road crew is sent to its nearest failed link by free-flow
//! time, ignoring closures. Without a road crew, closed links become
//! passable to crews at five times their free-flow time.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hazard::DisasterScenario;
use crate::network::{ComponentKind, IntegratedNetwork, Network};
use crate::recovery::{Crew, RepairDurations, RepairOrder};
use crate::solvers::paths::shortest_paths;
use crate::solvers::traffic::{frank_wolfe, AssignmentOptions, RoadGraph, TrafficState};

use super::event_table::{Action, EventRow, EventTable};

/// Free-flow multiplier for closed links when no road crew can clear them.
pub const CLOSED_LINK_PENALTY: f64 = 5.0;

/// Traffic states of the road network keyed by which links are open.
pub(crate) struct TrafficCache<'a> {
    pub graph: &'a RoadGraph,
    options: AssignmentOptions,
    states: BTreeMap<Vec<bool>, TrafficState>,
}

impl<'a> TrafficCache<'a> {
    pub fn new(graph: &'a RoadGraph, options: AssignmentOptions) -> Self {
        TrafficCache { graph, options, states: BTreeMap::new() }
    }

    pub fn state(&mut self, usable: &[bool]) -> &TrafficState {
        let graph = self.graph;
        let options = self.options;
        self.states
            .entry(usable.to_vec())
            .or_insert_with(|| frank_wolfe(graph, usable, &options))
    }

    /// Congested travel times from `origin` to every node; closed links are
    /// either impassable or cost `CLOSED_LINK_PENALTY` times free flow.
    pub fn travel_times(&mut self, usable: &[bool], origin: usize, passable_closed: bool) -> Vec<f64> {
        let graph = self.graph;
        let state = self.state(usable);
        let mut cost = state.link_time.clone();
        let mut allowed = usable.to_vec();
        if passable_closed {
            for (l, ok) in allowed.iter_mut().enumerate() {
                if !*ok {
                    cost[l] = CLOSED_LINK_PENALTY * graph.delay[l].free_flow_time();
                    *ok = true;
                }
            }
        }
        shortest_paths(&graph.graph, origin, &cost, &allowed).dist
    }
}

/// Where a crew goes to repair a component: one zone node, or either end of
/// a road link.
fn targets(net: &IntegratedNetwork, graph: &RoadGraph, id: &str) -> Result<Vec<usize>> {
    let c = net.require(id)?;
    let ids: Vec<&str> = match &c.kind {
        ComponentKind::RoadLink(l) => vec![l.from.as_str(), l.to.as_str()],
        _ => vec![net
            .access_node(c)
            .ok_or_else(|| Error::InvalidInput(format!("no zone node gives access to {id}")))?],
    };
    ids.into_iter()
        .map(|z| {
            graph
                .node_index(z)
                .ok_or_else(|| Error::InvalidInput(format!("access node {z} of {id} is not a zone node")))
        })
        .collect()
}

/// Nearest target and the time to reach it.
fn nearest(dist: &[f64], targets: &[usize]) -> Option<(usize, f64)> {
    targets
        .iter()
        .map(|&t| (t, dist[t]))
        .filter(|(_, d)| d.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

struct CrewState {
    crew: Crew,
    location: usize,
    free_at: f64,
    blocked: bool,
}

/// Builds the event table for `scenario` when each network's crews follow
/// `order`.
pub fn build_event_table(
    net: &IntegratedNetwork,
    graph: &RoadGraph,
    scenario: &DisasterScenario,
    order: &RepairOrder,
    crews: &[Crew],
    durations: &RepairDurations,
    assignment: &AssignmentOptions,
) -> Result<EventTable> {
    let mut cache = TrafficCache::new(graph, *assignment);
    let mut rows = Vec::new();
    let mut fail_time: BTreeMap<&str, f64> = BTreeMap::new();
    for f in &scenario.failures {
        net.require(&f.component_id)?;
        rows.push(EventRow {
            time: f.failure_time,
            component_id: f.component_id.clone(),
            action: Action::Fail,
            crew_id: None,
        });
        fail_time.insert(&f.component_id, f.failure_time);
    }

    // every failure must be ordered exactly once, in its own network
    let mut queues: BTreeMap<Network, Vec<String>> = BTreeMap::new();
    let mut seen = 0;
    for (network, list) in order {
        for id in list {
            if !fail_time.contains_key(id.as_str()) {
                return Err(Error::InvalidInput(format!("repair order lists {id}, which has not failed")));
            }
            if net.require(id)?.network() != *network {
                return Err(Error::InvalidInput(format!("{id} is ordered under the {network} network")));
            }
            if queues.get(network).is_some_and(|q| q.contains(id)) {
                return Err(Error::InvalidInput(format!("{id} appears twice in the repair order")));
            }
            queues.entry(*network).or_default().push(id.clone());
            seen += 1;
        }
    }
    if seen != fail_time.len() {
        return Err(Error::InvalidInput(format!(
            "repair order covers {seen} of {} failed components",
            fail_time.len()
        )));
    }
    for (network, queue) in &queues {
        if !queue.is_empty() && !crews.iter().any(|c| c.network == *network) && *network != Network::Traffic {
            return Err(Error::InvalidInput(format!("no crew serves the {network} network")));
        }
    }
    // without a road crew, failed roads stay down for the whole run
    if !crews.iter().any(|c| c.network == Network::Traffic) {
        queues.remove(&Network::Traffic);
    }

    let mut state: Vec<CrewState> = crews
        .iter()
        .map(|c| {
            Ok(CrewState {
                location: graph
                    .node_index(&c.location)
                    .ok_or_else(|| Error::InvalidInput(format!("crew {} starts at unknown zone node {}", c.id, c.location)))?,
                free_at: c.busy_until,
                blocked: false,
                crew: c.clone(),
            })
        })
        .collect::<Result<_>>()?;
    state.sort_by(|a, b| a.crew.id.cmp(&b.crew.id));

    let road_fail: Vec<Option<f64>> = graph.link_ids.iter().map(|id| fail_time.get(id.as_str()).copied()).collect();
    let mut road_open_at: Vec<Option<f64>> = vec![None; graph.link_ids.len()];
    let usable_at = |t: f64, open_at: &[Option<f64>]| -> Vec<bool> {
        (0..graph.link_ids.len())
            .map(|l| match road_fail[l] {
                Some(f) if f <= t => open_at[l].is_some_and(|o| o <= t),
                _ => true,
            })
            .collect()
    };
    let mut passable_closed = false;

    loop {
        let has_work = |s: &CrewState| queues.get(&s.crew.network).is_some_and(|q| !q.is_empty());
        let next = state
            .iter()
            .enumerate()
            .filter(|(_, s)| has_work(s) && !s.blocked)
            .min_by(|a, b| a.1.free_at.total_cmp(&b.1.free_at).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);

        let Some(ci) = next else {
            let stuck: Vec<usize> = (0..state.len()).filter(|&i| has_work(&state[i]) && state[i].blocked).collect();
            if stuck.is_empty() {
                break;
            }
            if let Some(&ri) = stuck.iter().find(|&&i| state[i].crew.network == Network::Traffic) {
                // clear the nearest failed road by free-flow time, ignoring closures
                let s = &state[ri];
                let free = graph.free_flow_times();
                let dist = shortest_paths(&graph.graph, s.location, &free, &vec![true; free.len()]).dist;
                let queue = &queues[&Network::Traffic];
                let mut best: Option<(usize, usize, f64)> = None;
                for (qi, id) in queue.iter().enumerate() {
                    if let Some((node, d)) = nearest(&dist, &targets(net, graph, id)?) {
                        if best.is_none_or(|b| d < b.2) {
                            best = Some((qi, node, d));
                        }
                    }
                }
                let (qi, node, travel) = best.ok_or_else(|| {
                    Error::InvalidInput("road crew cannot reach any failed road link".into())
                })?;
                let id = queues.get_mut(&Network::Traffic).expect("road queue").remove(qi);
                let depart = state[ri].free_at.max(fail_time[id.as_str()]);
                let end = assign(net, durations, &mut rows, &mut state[ri], &id, depart + travel, node)?;
                open_road(graph, &id, end, &mut road_open_at, &mut state);
                continue;
            }
            if passable_closed {
                return Err(Error::InvalidInput("crews cannot reach the remaining failed components".into()));
            }
            passable_closed = true;
            for i in stuck {
                state[i].blocked = false;
            }
            continue;
        };

        let queue = queues.get(&state[ci].crew.network).expect("queue").clone();
        let mut chosen = None;
        for (qi, id) in queue.iter().enumerate() {
            let depart = state[ci].free_at.max(fail_time[id.as_str()]);
            let usable = usable_at(depart, &road_open_at);
            let dist = cache.travel_times(&usable, state[ci].location, passable_closed);
            if let Some((node, travel)) = nearest(&dist, &targets(net, graph, id)?) {
                chosen = Some((qi, node, depart + travel));
                break;
            }
        }
        match chosen {
            Some((qi, node, start)) => {
                let id = queues.get_mut(&state[ci].crew.network).expect("queue").remove(qi);
                let end = assign(net, durations, &mut rows, &mut state[ci], &id, start, node)?;
                open_road(graph, &id, end, &mut road_open_at, &mut state);
            }
            None => {
                // wait for the next road to reopen, if one is scheduled
                let now = state[ci].free_at;
                let pending = road_open_at
                    .iter()
                    .flatten()
                    .copied()
                    .filter(|&t| t > now)
                    .min_by(f64::total_cmp);
                match pending {
                    Some(t) => state[ci].free_at = t,
                    None => state[ci].blocked = true,
                }
            }
        }
    }
    Ok(EventTable::new(rows))
}

fn assign(
    net: &IntegratedNetwork,
    durations: &RepairDurations,
    rows: &mut Vec<EventRow>,
    crew: &mut CrewState,
    id: &str,
    start: f64,
    node: usize,
) -> Result<f64> {
    let kind = &net.require(id)?.kind;
    let duration = durations
        .of(kind)
        .ok_or_else(|| Error::InvalidInput(format!("{id} ({}) is not repairable", kind.name())))?;
    let end = start + duration;
    for (time, action) in [(start, Action::RepairStart), (end, Action::RepairEnd)] {
        rows.push(EventRow {
            time,
            component_id: id.to_string(),
            action,
            crew_id: Some(crew.crew.id.clone()),
        });
    }
    crew.location = node;
    crew.free_at = end;
    Ok(end)
}

/// Records a road reopening and wakes crews that were cut off.
fn open_road(graph: &RoadGraph, id: &str, end: f64, open_at: &mut [Option<f64>], crews: &mut [CrewState]) {
    if let Some(l) = graph.link_index(id) {
        open_at[l] = Some(end);
        for c in crews.iter_mut().filter(|c| c.blocked) {
            c.blocked = false;
            c.free_at = c.free_at.max(end);
        }
    }
}

/// Congested travel time from the start of the crew serving each failed
/// component, right after the failures; infinite when unreachable.
pub fn crew_travel_times(
    net: &IntegratedNetwork,
    graph: &RoadGraph,
    scenario: &DisasterScenario,
    crews: &[Crew],
    assignment: &AssignmentOptions,
) -> Result<BTreeMap<String, f64>> {
    let failed: Vec<&str> = scenario.failed_ids();
    let usable: Vec<bool> = graph.link_ids.iter().map(|id| !failed.contains(&id.as_str())).collect();
    let mut cache = TrafficCache::new(graph, *assignment);
    let mut out = BTreeMap::new();
    for id in failed {
        let network = net.require(id)?.network();
        let Some(crew) = crews.iter().filter(|c| c.network == network).min_by(|a, b| a.id.cmp(&b.id)) else {
            out.insert(id.to_string(), f64::INFINITY);
            continue;
        };
        let origin = graph
            .node_index(&crew.location)
            .ok_or_else(|| Error::InvalidInput(format!("crew {} starts at unknown zone node {}", crew.id, crew.location)))?;
        let dist = cache.travel_times(&usable, origin, false);
        let t = nearest(&dist, &targets(net, graph, id)?).map_or(f64::INFINITY, |x| x.1);
        out.insert(id.to_string(), t);
    }
    Ok(out)
}
