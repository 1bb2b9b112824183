//! Static user-equilibrium traffic assignment.
//!
//! Frank-Wolfe on the Beckmann objective
//!
//! ```text
//! min  Σ_a ∫_0^{x_a} t_a(w) dw
//! s.t. path flows reproduce the OD demand and are non-negative
//! ```
//!
//! Each iteration loads all demand onto current shortest paths
//! (all-or-nothing), then moves towards that loading by the step that
//! minimises the objective along the segment. The step is found by
//! bisection on the directional derivative, which is monotone because every
//! volume-delay function is non-decreasing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::paths::{shortest_paths, Digraph};
use crate::network::{ComponentKind, IntegratedNetwork, Statuses};

pub const BPR_ALPHA: f64 = 0.15;
pub const BPR_BETA: f64 = 4.0;

/// Link travel time as a function of flow (veh/h -> s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VolumeDelay {
    /// `t0 * (1 + alpha * (x / capacity)^beta)`
    Bpr {
        free_flow: f64,
        capacity: f64,
        alpha: f64,
        beta: f64,
    },
    /// `intercept + slope * x`
    Affine { intercept: f64, slope: f64 },
}

impl VolumeDelay {
    pub fn bpr(free_flow: f64, capacity: f64) -> Self {
        VolumeDelay::Bpr {
            free_flow,
            capacity,
            alpha: BPR_ALPHA,
            beta: BPR_BETA,
        }
    }

    pub fn time(&self, x: f64) -> f64 {
        match *self {
            VolumeDelay::Bpr { free_flow, capacity, alpha, beta } => {
                free_flow * (1.0 + alpha * (x / capacity).powf(beta))
            }
            VolumeDelay::Affine { intercept, slope } => intercept + slope * x,
        }
    }

    /// `∫_0^x t(w) dw`
    pub fn integral(&self, x: f64) -> f64 {
        match *self {
            VolumeDelay::Bpr { free_flow, capacity, alpha, beta } => {
                free_flow * (x + alpha * capacity * (x / capacity).powf(beta + 1.0) / (beta + 1.0))
            }
            VolumeDelay::Affine { intercept, slope } => intercept * x + 0.5 * slope * x * x,
        }
    }

    pub fn free_flow_time(&self) -> f64 {
        self.time(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignmentOptions {
    pub relative_gap: f64,
    pub max_iterations: usize,
}

impl Default for AssignmentOptions {
    fn default() -> Self {
        AssignmentOptions {
            relative_gap: 1e-4,
            max_iterations: 500,
        }
    }
}

/// Road network compiled to dense indices.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    pub node_ids: Vec<String>,
    pub link_ids: Vec<String>,
    pub delay: Vec<VolumeDelay>,
    pub graph: Digraph,
    /// (origin, destination, veh/h)
    pub od: Vec<(usize, usize, f64)>,
}

impl RoadGraph {
    pub fn new(
        node_ids: Vec<String>,
        links: Vec<(String, usize, usize, VolumeDelay)>,
        od: Vec<(usize, usize, f64)>,
    ) -> Self {
        let mut link_ids = Vec::new();
        let mut delay = Vec::new();
        let mut ends = Vec::new();
        for (id, a, b, d) in links {
            link_ids.push(id);
            ends.push((a, b));
            delay.push(d);
        }
        RoadGraph {
            graph: Digraph::new(node_ids.len(), ends),
            node_ids,
            link_ids,
            delay,
            od,
        }
    }

    pub fn from_network(net: &IntegratedNetwork) -> Self {
        let node_ids: Vec<String> = net
            .traffic
            .iter()
            .filter(|c| matches!(c.kind, ComponentKind::ZoneNode(_)))
            .map(|c| c.id.clone())
            .collect();
        let index: BTreeMap<&str, usize> = node_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let links = net
            .traffic
            .iter()
            .filter_map(|c| match &c.kind {
                ComponentKind::RoadLink(r) => Some((
                    c.id.clone(),
                    index[r.from.as_str()],
                    index[r.to.as_str()],
                    VolumeDelay::bpr(r.free_flow_time, r.capacity),
                )),
                _ => None,
            })
            .collect();
        let od = net
            .od_matrix
            .iter()
            .filter(|d| d.demand > 0.0)
            .map(|d| (index[d.origin.as_str()], index[d.destination.as_str()], d.demand))
            .collect();
        RoadGraph::new(node_ids, links, od)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.link_ids.iter().position(|n| n == id)
    }

    /// Usability mask for the given statuses.
    pub fn usable(&self, statuses: &Statuses) -> Vec<bool> {
        self.link_ids.iter().map(|id| statuses.in_service(id)).collect()
    }

    pub fn free_flow_times(&self) -> Vec<f64> {
        self.delay.iter().map(|d| d.free_flow_time()).collect()
    }
}

/// OD demand that cannot be routed over in-service links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnreachableDemand {
    pub origin: String,
    pub destination: String,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficState {
    /// veh/h, aligned with [`RoadGraph::link_ids`].
    pub link_flow: Vec<f64>,
    /// s; failed links keep their free-flow time but are never used.
    pub link_time: Vec<f64>,
    pub usable: Vec<bool>,
    pub relative_gap: f64,
    pub iterations: usize,
    /// Beckmann objective after each iteration.
    pub objective_history: Vec<f64>,
    pub unreachable: Vec<UnreachableDemand>,
}

impl TrafficState {
    pub fn flow_of(&self, graph: &RoadGraph, link_id: &str) -> Option<f64> {
        graph.link_index(link_id).map(|i| self.link_flow[i])
    }

    pub fn time_of(&self, graph: &RoadGraph, link_id: &str) -> Option<f64> {
        graph.link_index(link_id).map(|i| self.link_time[i])
    }
}

fn beckmann(delay: &[VolumeDelay], x: &[f64]) -> f64 {
    delay.iter().zip(x).map(|(d, &x)| d.integral(x)).sum()
}

/// All-or-nothing loading on the shortest paths for `times`. Returns the
/// loading and the total shortest-path travel time `Σ d_rs · c_rs`.
fn all_or_nothing(g: &RoadGraph, od: &[(usize, usize, f64)], times: &[f64], usable: &[bool]) -> (Vec<f64>, f64) {
    let mut y = vec![0.0; g.link_ids.len()];
    let mut sptt = 0.0;
    let mut origin = usize::MAX;
    let mut tree = None;
    for &(o, d, demand) in od {
        if o != origin {
            origin = o;
            tree = Some(shortest_paths(&g.graph, o, times, usable));
        }
        let tree = tree.as_ref().expect("tree for origin");
        sptt += demand * tree.dist[d];
        for l in tree.links_to(d, &g.graph) {
            y[l] += demand;
        }
    }
    (y, sptt)
}

/// Frank-Wolfe assignment on the in-service part of `g`.
pub fn frank_wolfe(g: &RoadGraph, usable: &[bool], options: &AssignmentOptions) -> TrafficState {
    let n_links = g.link_ids.len();
    let free: Vec<f64> = g.free_flow_times();

    // group by origin; drop pairs with no path
    let mut od: Vec<(usize, usize, f64)> = g.od.clone();
    od.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut routable = Vec::with_capacity(od.len());
    let mut unreachable = Vec::new();
    let mut origin = usize::MAX;
    let mut tree = None;
    for &(o, d, demand) in &od {
        if o != origin {
            origin = o;
            tree = Some(shortest_paths(&g.graph, o, &free, usable));
        }
        if o != d && tree.as_ref().expect("tree").dist[d].is_finite() {
            routable.push((o, d, demand));
        } else if o != d {
            unreachable.push(UnreachableDemand {
                origin: g.node_ids[o].clone(),
                destination: g.node_ids[d].clone(),
                demand,
            });
        }
    }

    let time_at = |x: &[f64]| -> Vec<f64> { g.delay.iter().zip(x).map(|(d, &x)| d.time(x)).collect() };

    let (mut x, _) = all_or_nothing(g, &routable, &free, usable);
    let mut history = vec![beckmann(&g.delay, &x)];
    let mut gap = 0.0;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        let t = time_at(&x);
        let (y, sptt) = all_or_nothing(g, &routable, &t, usable);
        let tstt: f64 = x.iter().zip(&t).map(|(x, t)| x * t).sum();
        gap = if tstt > 0.0 { ((tstt - sptt) / tstt).max(0.0) } else { 0.0 };
        if gap <= options.relative_gap {
            break;
        }
        iterations += 1;
        let dir: Vec<f64> = y.iter().zip(&x).map(|(y, x)| y - x).collect();
        let slope = |alpha: f64| -> f64 {
            (0..n_links)
                .map(|l| g.delay[l].time(x[l] + alpha * dir[l]) * dir[l])
                .sum()
        };
        let alpha = if slope(1.0) <= 0.0 {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if slope(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        for l in 0..n_links {
            x[l] = (x[l] + alpha * dir[l]).max(0.0);
        }
        history.push(beckmann(&g.delay, &x));
    }

    TrafficState {
        link_time: time_at(&x),
        link_flow: x,
        usable: usable.to_vec(),
        relative_gap: gap,
        iterations,
        objective_history: history,
        unreachable,
    }
}

/// User-equilibrium assignment of the network's OD matrix under `statuses`.
pub fn assign_traffic(net: &IntegratedNetwork, statuses: &Statuses) -> (RoadGraph, TrafficState) {
    let g = RoadGraph::from_network(net);
    let usable = g.usable(statuses);
    let state = frank_wolfe(&g, &usable, &AssignmentOptions::default());
    (g, state)
}

/// Congested shortest travel time between two zone nodes; `None` when
/// unreachable or either id is not a node.
pub fn shortest_travel_time(g: &RoadGraph, state: &TrafficState, origin: &str, destination: &str) -> Option<f64> {
    let o = g.node_index(origin)?;
    let d = g.node_index(destination)?;
    let dist = shortest_paths(&g.graph, o, &state.link_time, &state.usable).dist[d];
    dist.is_finite().then_some(dist)
}
