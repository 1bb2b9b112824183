//! The built-in simple integrated testbed.
//!
//! Layout (all coordinates in meters, blocks are 1 km):
//!
//! ```text
//!   traffic        water                    power
//!   n00-n01-n02    res=pump=j00-j01-j02     grid-sw-b0 ==T1== b1
//!    |   |   |           |   |   |                    \\T2      |L1
//!   n10-n11-n12         j10-j11 j12          b2 (n12)    b3 motor (n00)
//!    |   |   |           |   |   |           |L3         |L2
//!   n20-n21-n22         j20-j21-j22-tank     b5-L4-b6-L5-b7   b4
//! ```
//!
//! Traffic: a 3×3 grid of zone nodes; ten blocks are two-way and two are
//! one-way (`n00 -> n01`, `n22 -> n21`), for 22 directed road links.
//! Water: reservoir and pump feeding a 3×3 demand grid (11 mains, the
//! `j11-j12` block omitted) plus a riser to an elevated tank at the far
//! corner. Power: external grid behind a closed switch, two transformers,
//! two radial feeders with five lines, three loads and the pump motor.

use std::collections::BTreeMap;

use super::*;

const BLOCK: f64 = 1000.0;

fn zone_id(r: usize, c: usize) -> String {
    format!("t_n{r}{c}")
}

fn junction_id(r: usize, c: usize) -> String {
    format!("w_j{r}{c}")
}

fn grid_point(r: usize, c: usize) -> Point {
    Point::new(BLOCK * c as f64, BLOCK * r as f64)
}

fn offset(p: Point, dx: f64, dy: f64) -> Point {
    Point::new(p.x + dx, p.y + dy)
}

/// Builds the simple testbed. Deterministic; validates clean.
pub fn build_simple_testbed() -> IntegratedNetwork {
    let traffic = traffic_grid();
    let water = water_grid();
    let power = power_feeders();
    let zones: Vec<String> = (0..3)
        .flat_map(|r| (0..3).map(move |c| zone_id(r, c)))
        .collect();

    let mut od_matrix = Vec::new();
    for o in &zones {
        for d in &zones {
            if o != d {
                od_matrix.push(OdDemand {
                    origin: o.clone(),
                    destination: d.clone(),
                    demand: 80.0,
                });
            }
        }
    }

    let mut zone_priority = BTreeMap::new();
    for (r, c) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
        zone_priority.insert(zone_id(r, c), 1);
    }
    for (r, c) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
        zone_priority.insert(zone_id(r, c), 2);
    }
    zone_priority.insert(zone_id(1, 1), 3);

    IntegratedNetwork {
        schema_version: NETWORK_SCHEMA_VERSION,
        water,
        power,
        traffic,
        dependencies: vec![Dependency {
            source_id: "p_motor_1".into(),
            target_id: "w_pump_1".into(),
            kind: DependencyKind::MotorDrivesPump,
        }],
        od_matrix,
        zone_priority,
    }
}

fn traffic_grid() -> Vec<Component> {
    let mut out = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            out.push(Component::new(
                zone_id(r, c),
                grid_point(r, c),
                ComponentKind::ZoneNode(ZoneNode {}),
            ));
        }
    }
    let one_way = [((0, 0), (0, 1)), ((2, 2), (2, 1))];
    let mut blocks = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            if c + 1 < 3 {
                blocks.push(((r, c), (r, c + 1)));
            }
            if r + 1 < 3 {
                blocks.push(((r, c), (r + 1, c)));
            }
        }
    }
    let mut n = 0;
    for (a, b) in blocks {
        let mut directions = vec![(a, b), (b, a)];
        if let Some(&(from, to)) = one_way.iter().find(|&&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
            directions = vec![(from, to)];
        }
        for (from, to) in directions {
            n += 1;
            out.push(Component::new(
                format!("t_link_{n:02}"),
                grid_point(from.0, from.1).midpoint(grid_point(to.0, to.1)),
                ComponentKind::RoadLink(RoadLink {
                    from: zone_id(from.0, from.1),
                    to: zone_id(to.0, to.1),
                    // 1 km at 50 km/h
                    free_flow_time: 72.0,
                    capacity: 1200.0,
                }),
            ));
        }
    }
    out
}

fn water_grid() -> Vec<Component> {
    let jpos = |r: usize, c: usize| offset(grid_point(r, c), 40.0, 40.0);
    let mut out = Vec::new();
    let reservoir = Point::new(-160.0, 40.0);
    out.push(Component::new(
        "w_res_1",
        reservoir,
        ComponentKind::Reservoir(Reservoir { head: 5.0, volume: None }),
    ));
    for r in 0..3 {
        for c in 0..3 {
            out.push(Component::new(
                junction_id(r, c),
                jpos(r, c),
                ComponentKind::DemandNode(DemandNode {
                    elevation: 0.0,
                    base_demand: 0.008,
                }),
            ));
        }
    }
    let tank = offset(jpos(2, 2), 100.0, 0.0);
    out.push(Component::new(
        "w_tank_1",
        tank,
        ComponentKind::Tank(Tank {
            elevation: 40.0,
            area: 25.0,
            min_level: 0.5,
            max_level: 8.5,
            init_level: 8.5,
        }),
    ));
    out.push(Component::new(
        "w_pump_1",
        reservoir.midpoint(jpos(0, 0)),
        ComponentKind::Pump(Pump {
            from: "w_res_1".into(),
            to: junction_id(0, 0),
            shutoff_head: 60.0,
            max_flow: 0.3,
        }),
    ));

    let mut mains = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            if c + 1 < 3 && (r, c) != (1, 1) {
                mains.push(((r, c), (r, c + 1)));
            }
            if r + 1 < 3 {
                mains.push(((r, c), (r + 1, c)));
            }
        }
    }
    for (i, (a, b)) in mains.into_iter().enumerate() {
        out.push(Component::new(
            format!("w_pipe_{:02}", i + 1),
            jpos(a.0, a.1).midpoint(jpos(b.0, b.1)),
            ComponentKind::Pipe(Pipe {
                from: junction_id(a.0, a.1),
                to: junction_id(b.0, b.1),
                length: BLOCK,
                diameter: 0.3,
                roughness: 110.0,
            }),
        ));
    }
    out.push(Component::new(
        "w_pipe_12",
        jpos(2, 2).midpoint(tank),
        ComponentKind::Pipe(Pipe {
            from: junction_id(2, 2),
            to: "w_tank_1".into(),
            length: 100.0,
            diameter: 0.3,
            roughness: 110.0,
        }),
    ));
    out
}

fn power_feeders() -> Vec<Component> {
    // (bus, grid node, offset sign, kV)
    let buses: [(usize, (usize, usize), f64, f64); 9] = [
        (0, (0, 2), 1.0, 110.0),
        (1, (0, 1), -1.0, 20.0),
        (2, (1, 2), 1.0, 20.0),
        (3, (0, 0), -1.0, 20.0),
        (4, (1, 0), -1.0, 20.0),
        (5, (2, 2), 1.0, 20.0),
        (6, (2, 1), 1.0, 20.0),
        (7, (2, 0), 1.0, 20.0),
        (8, (0, 2), -1.0, 110.0),
    ];
    let mut loc = BTreeMap::new();
    let mut out = Vec::new();
    for (i, (r, c), s, kv) in buses {
        let p = offset(grid_point(r, c), 40.0 * s, 40.0 * s);
        loc.insert(i, p);
        out.push(Component::new(
            format!("p_bus_{i}"),
            p,
            ComponentKind::Bus(Bus { voltage_kv: kv }),
        ));
    }
    let bus = |i: usize| format!("p_bus_{i}");
    out.push(Component::new(
        "p_grid_1",
        loc[&8],
        ComponentKind::ExternalGrid(Source { bus: bus(8), max_mw: 50.0, cost: 10.0 }),
    ));
    out.push(Component::new(
        "p_switch_1",
        loc[&8].midpoint(loc[&0]),
        ComponentKind::Switch(Switch { from: bus(8), to: bus(0) }),
    ));
    for (id, a, b) in [("p_trafo_1", 0, 1), ("p_trafo_2", 0, 2)] {
        out.push(Component::new(
            id,
            loc[&a].midpoint(loc[&b]),
            ComponentKind::Transformer(Branch {
                from: bus(a),
                to: bus(b),
                susceptance: 20.0,
                limit_mw: 25.0,
            }),
        ));
    }
    for (id, a, b) in [
        ("p_line_1", 1, 3),
        ("p_line_2", 3, 4),
        ("p_line_3", 2, 5),
        ("p_line_4", 5, 6),
        ("p_line_5", 6, 7),
    ] {
        out.push(Component::new(
            id,
            loc[&a].midpoint(loc[&b]),
            ComponentKind::Line(Branch {
                from: bus(a),
                to: bus(b),
                susceptance: 10.0,
                limit_mw: 10.0,
            }),
        ));
    }
    for (id, b, mw) in [("p_load_1", 4, 3.0), ("p_load_2", 6, 2.0), ("p_load_3", 7, 1.5)] {
        out.push(Component::new(
            id,
            loc[&b],
            ComponentKind::Load(Load { bus: bus(b), demand_mw: mw }),
        ));
    }
    out.push(Component::new(
        "p_motor_1",
        loc[&3],
        ComponentKind::Motor(Motor { bus: bus(3), demand_mw: 0.5 }),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(net: &IntegratedNetwork, kind: &str) -> usize {
        net.all_components().filter(|c| c.kind.name() == kind).count()
    }

    #[test]
    fn component_counts() {
        let net = build_simple_testbed();
        let expected = [
            ("bus", 9),
            ("load", 3),
            ("motor", 1),
            ("external_grid", 1),
            ("line", 5),
            ("transformer", 2),
            ("pipe", 12),
            ("demand_node", 9),
            ("pump", 1),
            ("tank", 1),
            ("reservoir", 1),
            ("road_link", 22),
            ("zone_node", 9),
        ];
        for (kind, n) in expected {
            assert_eq!(count(&net, kind), n, "{kind}");
        }
        // every zone both generates and attracts trips
        for z in net.traffic.iter().filter(|c| c.kind.name() == "zone_node") {
            assert!(net.od_matrix.iter().any(|od| od.origin == z.id && od.demand > 0.0));
            assert!(net.od_matrix.iter().any(|od| od.destination == z.id && od.demand > 0.0));
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(build_simple_testbed(), build_simple_testbed());
    }
}
