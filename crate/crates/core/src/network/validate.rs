use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Component, ComponentKind, DependencyKind, IntegratedNetwork, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    DuplicateId,
    IdPrefix,
    WrongNetwork,
    NonPositiveAttribute,
    NegativeDemand,
    TankLevels,
    DanglingReference,
    EndpointKind,
    Disconnected,
    CrossNetworkDependency,
    DependencyEndpointKind,
    OdMatrix,
    ZonePriority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub component_id: String,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{:?}]: {}", self.component_id, self.rule, self.message)
    }
}

struct Report(Vec<Violation>);

impl Report {
    fn push(&mut self, id: &str, rule: Rule, message: impl Into<String>) {
        self.0.push(Violation {
            component_id: id.to_string(),
            rule,
            message: message.into(),
        });
    }

    fn positive(&mut self, c: &Component, field: &str, value: f64) {
        if !(value > 0.0 && value.is_finite()) {
            self.push(
                &c.id,
                Rule::NonPositiveAttribute,
                format!("{field} must be strictly positive, got {value}"),
            );
        }
    }

    fn non_negative(&mut self, c: &Component, field: &str, value: f64) {
        if !(value >= 0.0 && value.is_finite()) {
            self.push(
                &c.id,
                Rule::NegativeDemand,
                format!("{field} must be non-negative, got {value}"),
            );
        }
    }
}

/// Checks every structural invariant. Returns an empty list iff the network
/// is valid.
pub fn validate_network(net: &IntegratedNetwork) -> Vec<Violation> {
    let mut report = Report(Vec::new());
    let mut by_id: BTreeMap<&str, &Component> = BTreeMap::new();

    for network in Network::ALL {
        for c in net.components(network) {
            if by_id.insert(&c.id, c).is_some() {
                report.push(&c.id, Rule::DuplicateId, "id is not unique");
            }
            if !c.id.starts_with(network.id_prefix()) {
                report.push(
                    &c.id,
                    Rule::IdPrefix,
                    format!("{network} ids must start with `{}`", network.id_prefix()),
                );
            }
            if c.network() != network {
                report.push(
                    &c.id,
                    Rule::WrongNetwork,
                    format!("{} listed under {network}", c.kind.name()),
                );
            }
            check_attributes(&mut report, c);
        }
    }

    check_references(&mut report, net, &by_id);
    if report.0.is_empty() {
        check_connectivity(&mut report, net);
    }
    check_dependencies(&mut report, net, &by_id);
    check_od(&mut report, net, &by_id);

    for (zone, &priority) in &net.zone_priority {
        if !matches!(by_id.get(zone.as_str()).map(|c| &c.kind), Some(ComponentKind::ZoneNode(_))) {
            report.push(zone, Rule::ZonePriority, "priority given for a non-zone id");
        }
        if !(1..=3).contains(&priority) {
            report.push(zone, Rule::ZonePriority, format!("priority {priority} outside 1..=3"));
        }
    }
    report.0
}

fn check_attributes(report: &mut Report, c: &Component) {
    use ComponentKind::*;
    match &c.kind {
        Pipe(p) => {
            report.positive(c, "length", p.length);
            report.positive(c, "diameter", p.diameter);
            report.positive(c, "roughness", p.roughness);
        }
        DemandNode(n) => report.non_negative(c, "base_demand", n.base_demand),
        Pump(p) => {
            report.positive(c, "shutoff_head", p.shutoff_head);
            report.positive(c, "max_flow", p.max_flow);
        }
        Tank(t) => {
            report.positive(c, "area", t.area);
            report.positive(c, "min_level", t.min_level);
            report.positive(c, "max_level", t.max_level);
            if !(t.max_level > t.min_level && (t.min_level..=t.max_level).contains(&t.init_level)) {
                report.push(
                    &c.id,
                    Rule::TankLevels,
                    "levels must satisfy min < max and min <= init <= max",
                );
            }
        }
        Reservoir(r) => {
            if let Some(v) = r.volume {
                report.positive(c, "volume", v);
            }
        }
        Bus(b) => report.positive(c, "voltage_kv", b.voltage_kv),
        Load(l) => report.non_negative(c, "demand_mw", l.demand_mw),
        Motor(m) => report.non_negative(c, "demand_mw", m.demand_mw),
        Line(b) | Transformer(b) => {
            report.positive(c, "susceptance", b.susceptance);
            report.positive(c, "limit_mw", b.limit_mw);
        }
        Generator(s) | ExternalGrid(s) => {
            report.positive(c, "max_mw", s.max_mw);
            if !(s.cost >= 0.0) {
                report.push(&c.id, Rule::NegativeDemand, "cost must be non-negative");
            }
        }
        RoadLink(r) => {
            report.positive(c, "free_flow_time", r.free_flow_time);
            report.positive(c, "capacity", r.capacity);
        }
        Switch(_) | ZoneNode(_) => {}
    }
}

fn node_kind_ok(network: Network, kind: &ComponentKind) -> bool {
    match network {
        Network::Water => matches!(
            kind,
            ComponentKind::DemandNode(_) | ComponentKind::Tank(_) | ComponentKind::Reservoir(_)
        ),
        Network::Power => matches!(kind, ComponentKind::Bus(_)),
        Network::Traffic => matches!(kind, ComponentKind::ZoneNode(_)),
    }
}

fn check_references(report: &mut Report, net: &IntegratedNetwork, by_id: &BTreeMap<&str, &Component>) {
    for c in net.all_components() {
        let mut refs: Vec<&str> = Vec::new();
        if let Some((a, b)) = c.kind.endpoints() {
            refs.extend([a, b]);
        }
        if let Some(bus) = c.kind.attached_bus() {
            refs.push(bus);
        }
        for r in refs {
            match by_id.get(r) {
                None => report.push(&c.id, Rule::DanglingReference, format!("references unknown `{r}`")),
                Some(target) if !node_kind_ok(c.network(), &target.kind) => report.push(
                    &c.id,
                    Rule::EndpointKind,
                    format!("`{r}` is a {}, not a {} graph node", target.kind.name(), c.network()),
                ),
                Some(_) => {}
            }
        }
    }
}

fn check_connectivity(report: &mut Report, net: &IntegratedNetwork) {
    for network in Network::ALL {
        let comps = net.components(network);
        let nodes: Vec<&str> = comps
            .iter()
            .filter(|c| c.kind.is_graph_node())
            .map(|c| c.id.as_str())
            .collect();
        if nodes.is_empty() {
            continue;
        }
        let edges: Vec<(&str, &str)> = comps.iter().filter_map(|c| c.kind.endpoints()).collect();
        let directed = network == Network::Traffic;
        let forward = reachable(nodes[0], &edges, false, directed);
        let backward = if directed {
            reachable(nodes[0], &edges, true, true)
        } else {
            forward.clone()
        };
        for n in &nodes {
            if !forward.contains(n) || !backward.contains(n) {
                report.push(n, Rule::Disconnected, format!("not connected to the rest of the {network} graph"));
            }
        }
    }
}

fn reachable<'a>(start: &'a str, edges: &[(&'a str, &'a str)], reverse: bool, directed: bool) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &(a, b) in edges {
            let (a, b) = if reverse { (b, a) } else { (a, b) };
            let next = if a == u {
                Some(b)
            } else if !directed && b == u {
                Some(a)
            } else {
                None
            };
            if let Some(v) = next {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
    }
    seen
}

fn check_dependencies(report: &mut Report, net: &IntegratedNetwork, by_id: &BTreeMap<&str, &Component>) {
    for dep in &net.dependencies {
        let (Some(src), Some(dst)) = (by_id.get(dep.source_id.as_str()), by_id.get(dep.target_id.as_str())) else {
            for id in [&dep.source_id, &dep.target_id] {
                if !by_id.contains_key(id.as_str()) {
                    report.push(id, Rule::DanglingReference, format!("{:?} endpoint does not exist", dep.kind));
                }
            }
            continue;
        };
        if src.network() == dst.network() {
            report.push(
                &dep.source_id,
                Rule::CrossNetworkDependency,
                format!("dependency to `{}` stays within {}", dep.target_id, src.network()),
            );
            continue;
        }
        use ComponentKind as K;
        let ok = match dep.kind {
            DependencyKind::MotorDrivesPump => {
                matches!(src.kind, K::Motor(_) | K::Bus(_)) && matches!(dst.kind, K::Pump(_))
            }
            DependencyKind::ReservoirFeedsGenerator => {
                matches!(src.kind, K::Reservoir(_)) && matches!(dst.kind, K::Generator(_))
            }
            DependencyKind::RoadProvidesAccess => {
                src.network() == Network::Traffic && dst.network() != Network::Traffic
            }
        };
        if !ok {
            report.push(
                &dep.source_id,
                Rule::DependencyEndpointKind,
                format!("{:?} cannot link a {} to a {}", dep.kind, src.kind.name(), dst.kind.name()),
            );
        }
    }
}

fn check_od(report: &mut Report, net: &IntegratedNetwork, by_id: &BTreeMap<&str, &Component>) {
    for od in &net.od_matrix {
        for id in [&od.origin, &od.destination] {
            if !matches!(by_id.get(id.as_str()).map(|c| &c.kind), Some(ComponentKind::ZoneNode(_))) {
                report.push(id, Rule::OdMatrix, "OD endpoint is not a zone node");
            }
        }
        if !(od.demand >= 0.0 && od.demand.is_finite()) {
            report.push(&od.origin, Rule::OdMatrix, format!("negative demand to `{}`", od.destination));
        }
        if od.origin == od.destination && od.demand != 0.0 {
            report.push(&od.origin, Rule::OdMatrix, "non-zero diagonal entry");
        }
    }
}
