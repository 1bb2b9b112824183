//! Repair sequencing and crews.
//!
//! A repair order lists, per network, the failed components in the order
//! that network's crews take them on. Heuristic strategies sort by a single
//! criterion with ties broken by id; [`mpc_sequence`] searches orders by
//! simulating them.

mod centrality;
mod mpc;

pub use centrality::{component_betweenness, edge_betweenness};
pub use mpc::{evaluate_order, mpc_sequence, MpcOptions, MAX_PERMUTATIONS};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ComponentKind, IntegratedNetwork, Network};

/// Failed component ids per network, in repair order.
pub type RepairOrder = BTreeMap<Network, Vec<String>>;

/// Repair time per component kind, s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairDurations {
    pub pipe: f64,
    pub pump: f64,
    pub line: f64,
    pub transformer: f64,
    pub road_link: f64,
}

impl Default for RepairDurations {
    fn default() -> Self {
        RepairDurations {
            pipe: 4.0 * 3600.0,
            pump: 8.0 * 3600.0,
            line: 3.0 * 3600.0,
            transformer: 6.0 * 3600.0,
            road_link: 12.0 * 3600.0,
        }
    }
}

impl RepairDurations {
    /// `None` for kinds that are never repaired.
    pub fn of(&self, kind: &ComponentKind) -> Option<f64> {
        match kind {
            ComponentKind::Pipe(_) => Some(self.pipe),
            ComponentKind::Pump(_) => Some(self.pump),
            ComponentKind::Line(_) => Some(self.line),
            ComponentKind::Transformer(_) => Some(self.transformer),
            ComponentKind::RoadLink(_) => Some(self.road_link),
            _ => None,
        }
    }
}

/// A repair unit serving one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crew {
    pub id: String,
    pub network: Network,
    /// Zone node the crew starts from.
    pub location: String,
    /// s
    pub busy_until: f64,
}

/// Zone node closest to the centroid of all zone nodes, ties by id.
pub fn central_depot(net: &IntegratedNetwork) -> Option<&str> {
    let zones: Vec<_> = net
        .traffic
        .iter()
        .filter(|c| matches!(c.kind, ComponentKind::ZoneNode(_)))
        .collect();
    if zones.is_empty() {
        return None;
    }
    let n = zones.len() as f64;
    let cx = zones.iter().map(|c| c.location.x).sum::<f64>() / n;
    let cy = zones.iter().map(|c| c.location.y).sum::<f64>() / n;
    let centre = crate::network::Point::new(cx, cy);
    zones
        .iter()
        .min_by(|a, b| {
            a.location
                .distance(centre)
                .total_cmp(&b.location.distance(centre))
                .then_with(|| a.id.cmp(&b.id))
        })
        .map(|c| c.id.as_str())
}

/// One crew per network, all starting at `depot` (default: [`central_depot`]).
pub fn default_crews(net: &IntegratedNetwork, depot: Option<&str>) -> Result<Vec<Crew>> {
    let depot = match depot {
        Some(d) => {
            match net.component(d).map(|c| &c.kind) {
                Some(ComponentKind::ZoneNode(_)) => d,
                _ => return Err(Error::InvalidInput(format!("crew depot {d} is not a zone node"))),
            }
        }
        None => central_depot(net).ok_or_else(|| Error::InvalidInput("network has no zone nodes for crews".into()))?,
    };
    Ok(Network::ALL
        .into_iter()
        .map(|n| Crew {
            id: format!("crew_{}", n.as_str()),
            network: n,
            location: depot.to_string(),
            busy_until: 0.0,
        })
        .collect())
}

/// Heuristic repair-order strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// Largest peak flow under normal operation first.
    MaxFlow,
    /// Largest edge betweenness on the undamaged graph first.
    Centrality,
    /// Shortest congested travel time from the crew's start first.
    CrewDistance,
    /// Highest zone priority first, then largest peak flow.
    Zone,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [Heuristic::MaxFlow, Heuristic::Centrality, Heuristic::CrewDistance, Heuristic::Zone];

    pub fn as_str(self) -> &'static str {
        match self {
            Heuristic::MaxFlow => "max_flow",
            Heuristic::Centrality => "centrality",
            Heuristic::CrewDistance => "crew_distance",
            Heuristic::Zone => "zone",
        }
    }
}

/// Any way of producing a repair order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Heuristic(Heuristic),
    Mpc { horizon: usize },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Heuristic(h) => f.write_str(h.as_str()),
            Strategy::Mpc { horizon } => write!(f, "mpc_k{horizon}"),
        }
    }
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!(
                "unknown strategy '{s}' (expected max_flow, centrality, crew_distance, zone or mpc)"
            )))
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// A heuristic name or `mpc_k<horizon>`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(k) = s.strip_prefix("mpc_k") {
            return k
                .parse()
                .ok()
                .filter(|&k| k >= 1)
                .map(|horizon| Strategy::Mpc { horizon })
                .ok_or_else(|| Error::InvalidInput(format!("bad prediction horizon in '{s}'")));
        }
        Ok(Strategy::Heuristic(s.parse()?))
    }
}

/// Inputs some strategies need besides the network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankingContext {
    /// Peak absolute flow per link under normal operation.
    pub peak_flow: Option<BTreeMap<String, f64>>,
    /// Congested travel time (s) from the responsible crew's start to each
    /// failed component; missing or infinite when unreachable.
    pub crew_travel: Option<BTreeMap<String, f64>>,
}

fn zone_of<'a>(net: &'a IntegratedNetwork, id: &'a str) -> Option<&'a str> {
    net.component(id).and_then(|c| net.access_node(c))
}

/// Orders `failed` per network by `strategy`.
pub fn rank_components(
    net: &IntegratedNetwork,
    failed: &[String],
    strategy: Heuristic,
    context: &RankingContext,
) -> Result<RepairOrder> {
    let mut order = RepairOrder::new();
    for id in failed {
        let c = net.require(id)?;
        if !c.kind.is_repairable() {
            return Err(Error::InvalidInput(format!("{id} ({}) is not repairable", c.kind.name())));
        }
        order.entry(c.network()).or_default().push(id.clone());
    }
    for list in order.values_mut() {
        list.sort();
        list.dedup();
    }

    let need_flow = || {
        context.peak_flow.as_ref().ok_or(Error::MissingContext {
            strategy: strategy.as_str(),
            missing: "peak flows under normal operation",
        })
    };
    let flow_of = |m: &BTreeMap<String, f64>, id: &str| m.get(id).copied().unwrap_or(0.0);
    // descending by key, then id
    let by_desc = |list: &mut Vec<String>, key: &dyn Fn(&str) -> f64| {
        list.sort_by(|a, b| key(b).total_cmp(&key(a)).then_with(|| a.cmp(b)));
    };

    match strategy {
        Heuristic::MaxFlow => {
            let flows = need_flow()?;
            for list in order.values_mut() {
                by_desc(list, &|id| flow_of(flows, id).abs());
            }
        }
        Heuristic::Centrality => {
            for (network, list) in order.iter_mut() {
                let score = component_betweenness(net, *network);
                by_desc(list, &|id| score.get(id).copied().unwrap_or(0.0));
            }
        }
        Heuristic::CrewDistance => {
            let travel = context.crew_travel.as_ref().ok_or(Error::MissingContext {
                strategy: strategy.as_str(),
                missing: "crew travel times",
            })?;
            let time = |id: &str| travel.get(id).copied().unwrap_or(f64::INFINITY);
            for list in order.values_mut() {
                list.sort_by(|a, b| time(a).total_cmp(&time(b)).then_with(|| a.cmp(b)));
            }
        }
        Heuristic::Zone => {
            let flows = need_flow()?;
            for list in order.values_mut() {
                list.sort_by(|a, b| {
                    let pa = zone_of(net, a).map_or(1, |z| net.zone_priority_of(z));
                    let pb = zone_of(net, b).map_or(1, |z| net.zone_priority_of(z));
                    pb.cmp(&pa)
                        .then_with(|| flow_of(flows, b).abs().total_cmp(&flow_of(flows, a).abs()))
                        .then_with(|| a.cmp(b))
                });
            }
        }
    }
    Ok(order)
}
