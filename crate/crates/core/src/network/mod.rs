//! Typed model of the three infrastructure networks and the dependency
//! layer that couples them.
//!
//! Every asset is a [`Component`] with a globally unique id. Ids carry a
//! network prefix (`w_`, `p_`, `t_`) so that a bare id is enough to tell
//! which solver owns it. Graph edges (pipes, pumps, lines, transformers,
//! switches and road links) name their end nodes by id.

mod io;
mod testbed;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_network, parse_network, save_network, to_canonical_json};
pub use testbed::build_simple_testbed;
pub use validate::{validate_network, Rule, Violation};

/// Current network file schema version.
pub const NETWORK_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    Water,
    Power,
    Traffic,
}

impl Network {
    pub const ALL: [Network; 3] = [Network::Water, Network::Power, Network::Traffic];

    pub fn id_prefix(self) -> &'static str {
        match self {
            Network::Water => "w_",
            Network::Power => "p_",
            Network::Traffic => "t_",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Network::Water => "water",
            Network::Power => "power",
            Network::Traffic => "traffic",
        }
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Network {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "water" => Ok(Network::Water),
            "power" => Ok(Network::Power),
            "traffic" => Ok(Network::Traffic),
            other => Err(Error::InvalidInput(format!("unknown network `{other}`"))),
        }
    }
}

/// Planar coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

/// Operational state of a component.
///
/// The only legal progression is `Operational -> Failed -> UnderRepair ->
/// Repaired`; see [`Status::can_transition_to`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    #[default]
    Operational,
    Failed,
    UnderRepair,
    Repaired,
}

impl Status {
    pub fn can_transition_to(self, next: Status) -> bool {
        matches!(
            (self, next),
            (Status::Operational, Status::Failed)
                | (Status::Failed, Status::UnderRepair)
                | (Status::UnderRepair, Status::Repaired)
        )
    }

    /// Whether the component performs its function in this state.
    pub fn in_service(self) -> bool {
        matches!(self, Status::Operational | Status::Repaired)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipe {
    pub from: String,
    pub to: String,
    /// m
    pub length: f64,
    /// m
    pub diameter: f64,
    /// Hazen-Williams C factor.
    pub roughness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandNode {
    /// m above datum
    pub elevation: f64,
    /// m³/s
    pub base_demand: f64,
}

/// Pump with head-gain curve `h = shutoff_head * (1 - (q / max_flow)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pump {
    pub from: String,
    pub to: String,
    /// m
    pub shutoff_head: f64,
    /// m³/s
    pub max_flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tank {
    /// Bottom elevation, m.
    pub elevation: f64,
    /// m²
    pub area: f64,
    /// m
    pub min_level: f64,
    /// m
    pub max_level: f64,
    /// m
    pub init_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    /// Total head, m.
    pub head: f64,
    /// Usable volume in m³; `None` for an inexhaustible source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub voltage_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: String,
    pub demand_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: String,
    pub to: String,
    /// Per-unit on a 100 MVA base.
    pub susceptance: f64,
    pub limit_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motor {
    pub bus: String,
    pub demand_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub bus: String,
    pub max_mw: f64,
    /// Linear cost per MW.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadLink {
    pub from: String,
    pub to: String,
    /// s
    pub free_flow_time: f64,
    /// veh/h
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ZoneNode {}

/// Kind-specific data of a component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentKind {
    Pipe(Pipe),
    DemandNode(DemandNode),
    Pump(Pump),
    Tank(Tank),
    Reservoir(Reservoir),
    Bus(Bus),
    Load(Load),
    Line(Branch),
    Transformer(Branch),
    Motor(Motor),
    Generator(Source),
    ExternalGrid(Source),
    Switch(Switch),
    RoadLink(RoadLink),
    ZoneNode(ZoneNode),
}

impl ComponentKind {
    pub fn network(&self) -> Network {
        use ComponentKind::*;
        match self {
            Pipe(_) | DemandNode(_) | Pump(_) | Tank(_) | Reservoir(_) => Network::Water,
            Bus(_) | Load(_) | Line(_) | Transformer(_) | Motor(_) | Generator(_)
            | ExternalGrid(_) | Switch(_) => Network::Power,
            RoadLink(_) | ZoneNode(_) => Network::Traffic,
        }
    }

    pub fn name(&self) -> &'static str {
        use ComponentKind::*;
        match self {
            Pipe(_) => "pipe",
            DemandNode(_) => "demand_node",
            Pump(_) => "pump",
            Tank(_) => "tank",
            Reservoir(_) => "reservoir",
            Bus(_) => "bus",
            Load(_) => "load",
            Line(_) => "line",
            Transformer(_) => "transformer",
            Motor(_) => "motor",
            Generator(_) => "generator",
            ExternalGrid(_) => "external_grid",
            Switch(_) => "switch",
            RoadLink(_) => "road_link",
            ZoneNode(_) => "zone_node",
        }
    }

    /// End nodes for graph edges.
    pub fn endpoints(&self) -> Option<(&str, &str)> {
        use ComponentKind::*;
        match self {
            Pipe(p) => Some((&p.from, &p.to)),
            Pump(p) => Some((&p.from, &p.to)),
            Line(b) | Transformer(b) => Some((&b.from, &b.to)),
            Switch(s) => Some((&s.from, &s.to)),
            RoadLink(r) => Some((&r.from, &r.to)),
            _ => None,
        }
    }

    /// Bus a power element is attached to.
    pub fn attached_bus(&self) -> Option<&str> {
        use ComponentKind::*;
        match self {
            Load(l) => Some(&l.bus),
            Motor(m) => Some(&m.bus),
            Generator(s) | ExternalGrid(s) => Some(&s.bus),
            _ => None,
        }
    }

    /// Whether this kind is a vertex of its network's graph.
    pub fn is_graph_node(&self) -> bool {
        matches!(
            self,
            ComponentKind::DemandNode(_)
                | ComponentKind::Tank(_)
                | ComponentKind::Reservoir(_)
                | ComponentKind::Bus(_)
                | ComponentKind::ZoneNode(_)
        )
    }

    /// Kinds that a hazard or an event table may fail directly.
    pub fn is_repairable(&self) -> bool {
        matches!(
            self,
            ComponentKind::Pipe(_)
                | ComponentKind::Pump(_)
                | ComponentKind::Line(_)
                | ComponentKind::Transformer(_)
                | ComponentKind::RoadLink(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    pub location: Point,
    #[serde(default)]
    pub status: Status,
    #[serde(flatten)]
    pub kind: ComponentKind,
}

impl Component {
    pub fn new(id: impl Into<String>, location: Point, kind: ComponentKind) -> Self {
        Component {
            id: id.into(),
            location,
            status: Status::Operational,
            kind,
        }
    }

    pub fn network(&self) -> Network {
        self.kind.network()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyKind {
    MotorDrivesPump,
    ReservoirFeedsGenerator,
    RoadProvidesAccess,
}

/// Directed coupling: `target` needs `source` to function (or to be reached).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub source_id: String,
    pub target_id: String,
    pub kind: DependencyKind,
}

/// Origin-destination travel demand in veh/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdDemand {
    pub origin: String,
    pub destination: String,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedNetwork {
    pub schema_version: u32,
    pub water: Vec<Component>,
    pub power: Vec<Component>,
    pub traffic: Vec<Component>,
    pub dependencies: Vec<Dependency>,
    pub od_matrix: Vec<OdDemand>,
    /// Zone node id -> priority in 1..=3. Missing zones default to 1.
    #[serde(default)]
    pub zone_priority: BTreeMap<String, u8>,
}

impl IntegratedNetwork {
    pub fn components(&self, network: Network) -> &[Component] {
        match network {
            Network::Water => &self.water,
            Network::Power => &self.power,
            Network::Traffic => &self.traffic,
        }
    }

    pub fn all_components(&self) -> impl Iterator<Item = &Component> {
        self.water.iter().chain(&self.power).chain(&self.traffic)
    }

    pub fn component(&self, id: &str) -> Option<&Component> {
        let network = network_of_id(id)?;
        self.components(network).iter().find(|c| c.id == id)
    }

    pub fn require(&self, id: &str) -> Result<&Component> {
        self.component(id)
            .ok_or_else(|| Error::UnknownComponent(id.to_string()))
    }

    pub fn zone_priority_of(&self, zone: &str) -> u8 {
        self.zone_priority.get(zone).copied().unwrap_or(1)
    }

    /// Traffic zone node from which a crew reaches `component`.
    ///
    /// An explicit `road_provides_access` dependency wins; otherwise the
    /// nearest zone node (Euclidean, ties by id). Road links are reached at
    /// either end and return their tail node here.
    pub fn access_node<'a>(&'a self, component: &'a Component) -> Option<&'a str> {
        if let ComponentKind::RoadLink(link) = &component.kind {
            return Some(&link.from);
        }
        for dep in &self.dependencies {
            if dep.kind == DependencyKind::RoadProvidesAccess && dep.target_id == component.id {
                match self.component(&dep.source_id).map(|c| &c.kind) {
                    Some(ComponentKind::ZoneNode(_)) => return Some(&dep.source_id),
                    Some(ComponentKind::RoadLink(link)) => return Some(&link.to),
                    _ => {}
                }
            }
        }
        self.traffic
            .iter()
            .filter(|c| matches!(c.kind, ComponentKind::ZoneNode(_)))
            .min_by(|a, b| {
                let da = a.location.distance(component.location);
                let db = b.location.distance(component.location);
                da.total_cmp(&db).then_with(|| a.id.cmp(&b.id))
            })
            .map(|c| c.id.as_str())
    }

    /// Ids of repairable components in a network, sorted.
    pub fn repairable_ids(&self, network: Network) -> Vec<String> {
        let mut ids: Vec<String> = self
            .components(network)
            .iter()
            .filter(|c| c.kind.is_repairable())
            .map(|c| c.id.clone())
            .collect();
        ids.sort();
        ids
    }
}

/// Per-run component states. Ids not present are operational.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Statuses {
    map: BTreeMap<String, Status>,
}

impl Statuses {
    pub fn new() -> Self {
        Statuses::default()
    }

    /// Statuses recorded on the components themselves.
    pub fn from_network(net: &IntegratedNetwork) -> Self {
        let map = net
            .all_components()
            .filter(|c| c.status != Status::Operational)
            .map(|c| (c.id.clone(), c.status))
            .collect();
        Statuses { map }
    }

    pub fn get(&self, id: &str) -> Status {
        self.map.get(id).copied().unwrap_or_default()
    }

    pub fn set(&mut self, id: impl Into<String>, status: Status) {
        let id = id.into();
        if status == Status::Operational {
            self.map.remove(&id);
        } else {
            self.map.insert(id, status);
        }
    }

    pub fn in_service(&self, id: &str) -> bool {
        self.get(id).in_service()
    }

    /// Components not in service.
    pub fn out_of_service(&self) -> impl Iterator<Item = &str> {
        self.map
            .iter()
            .filter(|(_, s)| !s.in_service())
            .map(|(id, _)| id.as_str())
    }
}

/// Network owning an id, read from its prefix.
pub fn network_of_id(id: &str) -> Option<Network> {
    Network::ALL
        .into_iter()
        .find(|n| id.starts_with(n.id_prefix()))
}

/// Dependencies whose provider is `component_id`, or is attached to the bus
/// `component_id`, paired with the resolved dependent component.
pub fn dependents_of<'a>(
    net: &'a IntegratedNetwork,
    component_id: &str,
) -> Result<Vec<(&'a Dependency, &'a Component)>> {
    let queried = net.require(component_id)?;
    let is_bus = matches!(queried.kind, ComponentKind::Bus(_));
    let mut out = Vec::new();
    for dep in &net.dependencies {
        let direct = dep.source_id == component_id;
        let co_located = is_bus
            && net
                .component(&dep.source_id)
                .and_then(|s| s.kind.attached_bus())
                == Some(component_id);
        if direct || co_located {
            out.push((dep, net.require(&dep.target_id)?));
        }
    }
    Ok(out)
}
