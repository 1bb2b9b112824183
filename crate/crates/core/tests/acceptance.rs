//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use itertools::Itertools;
use lifeline::hazard::{sample_scenario, DisasterScenario, HazardEvent, Intensity, FLOOD_INTENSITY_WEIGHTS};
use lifeline::metrics::{ecs, pcs, repeated_measures_anova, system_eoh, weighted_eoh, CurveMode, Mop, PerformanceSeries};
use lifeline::network::*;
use lifeline::pipeline::{batch, repair_order, BatchConfig, BatchOutcome, RunConfig, BUILTIN_SIMPLE};
use lifeline::recovery::{default_crews, evaluate_order, mpc_sequence, Crew, Heuristic, MpcOptions, RepairDurations, RepairOrder, Strategy};
use lifeline::simulation::{build_event_table, Action, EventRow, EventTable, SimParams, Simulator};
use lifeline::solvers::{frank_wolfe, pda_demand, solve_hydraulics, solve_power, AssignmentOptions, PdaParams, RoadGraph, VolumeDelay};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    check((a - b).abs() <= tol, || format!("{what}: got {a}, expected {b} (tol {tol:e})"))
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, || format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

// 1 ---------------------------------------------------------------------

fn metric_exactness() -> Outcome {
    let start = Instant::now();
    let tol = 1e-9;
    let v = |x: Option<f64>| x.unwrap_or(f64::NAN);
    close(v(ecs(&[10.0, 5.0], &[10.0, 10.0])), 0.75, tol, "ecs ratios 1, 0.5")?;
    close(v(ecs(&[4.0, 7.0], &[4.0, 7.0])), 1.0, tol, "ecs all served")?;
    close(v(ecs(&[0.0, 0.0], &[4.0, 7.0])), 0.0, tol, "ecs none served")?;
    close(v(pcs(&[5.0, 10.0], &[10.0, 10.0])), 0.75, tol, "pcs 5/10")?;
    close(v(pcs(&[30.0, 0.0], &[30.0, 10.0])), 0.75, tol, "pcs large consumer")?;
    close(v(ecs(&[30.0, 0.0], &[30.0, 10.0])), 0.5, tol, "ecs same input")?;
    close(v(pcs(&[4.0, 7.0], &[4.0, 7.0])), 1.0, tol, "pcs full")?;

    let eoh = |t: &[f64], y: &[f64], t_end: f64| {
        let y: Vec<Option<f64>> = y.iter().map(|&x| Some(x)).collect();
        system_eoh(t, &y, CurveMode::Linear, 0.0, t_end).map_err(|e| e.to_string())
    };
    close(eoh(&[0.0, 3600.0, 7200.0], &[1.0, 1.0, 1.0], 7200.0)?, 0.0, tol, "EOH of full service")?;
    close(eoh(&[0.0, 7200.0], &[0.5, 0.5], 7200.0)?, 1.0, tol, "EOH of 2 h half service")?;
    close(eoh(&[0.0, 1800.0, 3600.0], &[0.0, 0.0, 0.0], 3600.0)?, 1.0, tol, "EOH of 1 h outage")?;

    // consumer 0 unserved 1 h..3 h, consumer 1 half served for 4 h
    let mut s = PerformanceSeries::new(Network::Power, CurveMode::Step, vec!["a".into(), "b".into()]);
    s.push(0.0, vec![2.0, 1.5], vec![2.0, 3.0]);
    s.push(3600.0, vec![0.0, 1.5], vec![2.0, 3.0]);
    s.push(10800.0, vec![2.0, 1.5], vec![2.0, 3.0]);
    let c = |i| s.consumer_eoh(i, 0.0, 14400.0).map_err(|e| e.to_string()).map(v);
    close(c(0)?, 2.0, tol, "consumer unserved 2 h")?;
    close(c(1)?, 2.0, tol, "consumer half served 4 h")?;

    close(weighted_eoh(&[(2.0, 0.5), (4.0, 0.5)]), 3.0, tol, "weighted equal")?;
    close(weighted_eoh(&[(2.0, 1.0), (4.0, 0.0)]), 2.0, tol, "weighted one-hot")?;
    close(weighted_eoh(&[(0.0, 0.5), (0.0, 0.5)]), 0.0, tol, "weighted zeros")?;
    within(start.elapsed(), 1.0)?;
    Ok("all unit examples within 1e-9".into())
}

// 2 ---------------------------------------------------------------------

fn pda_conformance() -> Outcome {
    let p = PdaParams::new(0.0, 20.0, 2.0).map_err(|e| e.to_string())?;
    let desired = 10.0;
    let closed_form = |pr: f64| {
        if pr <= 0.0 {
            0.0
        } else if pr <= 20.0 {
            desired * (pr / 20.0).sqrt()
        } else {
            desired
        }
    };
    let mut worst = 0.0f64;
    for k in 0..100 {
        let pr = -5.0 + 30.0 * k as f64 / 99.0;
        worst = worst.max((pda_demand(pr, desired, &p) - closed_form(pr)).abs());
    }
    check(worst <= 1e-12, || format!("grid deviation {worst:e}"))?;
    let eps = 1e-9;
    let jump0 = (pda_demand(0.0 + eps, desired, &p) - pda_demand(0.0 - eps, desired, &p)).abs();
    // the root law rises like sqrt(eps) at p0, so compare against that scale
    check(jump0 <= desired * (2.0 * eps / 20.0).sqrt() + 1e-12, || format!("jump at p0 {jump0:e}"))?;
    let jump_f = (pda_demand(20.0 + eps, desired, &p) - pda_demand(20.0 - eps, desired, &p)).abs();
    check(jump_f <= 1e-9, || format!("jump at pf {jump_f:e}"))?;
    Ok(format!("100-point grid max deviation {worst:.1e}; continuous at p0 and pf"))
}

// 3 ---------------------------------------------------------------------

fn hw_resistance(length: f64, diameter: f64, c: f64) -> f64 {
    10.667 * length / (c.powf(1.852) * diameter.powf(4.871))
}

fn water_only(water: Vec<Component>) -> IntegratedNetwork {
    IntegratedNetwork {
        schema_version: 1,
        water,
        power: vec![],
        traffic: vec![],
        dependencies: vec![],
        od_matrix: vec![],
        zone_priority: BTreeMap::new(),
    }
}

fn solver_oracles() -> Outcome {
    let start = Instant::now();
    // reservoir r, junctions a and b; demand at b only
    let pipe = |id: &str, a: &str, b: &str, l: f64, d: f64| {
        Component::new(id, Point::default(), ComponentKind::Pipe(Pipe { from: a.into(), to: b.into(), length: l, diameter: d, roughness: 120.0 }))
    };
    let junction = |id: &str, q: f64| {
        Component::new(id, Point::default(), ComponentKind::DemandNode(DemandNode { elevation: 0.0, base_demand: q }))
    };
    let demand = 0.05;
    let net = water_only(vec![
        Component::new("w_r", Point::default(), ComponentKind::Reservoir(Reservoir { head: 80.0, volume: None })),
        junction("w_a", 0.0),
        junction("w_b", demand),
        pipe("w_ra", "w_r", "w_a", 400.0, 0.2),
        pipe("w_ab", "w_a", "w_b", 300.0, 0.15),
        pipe("w_rb", "w_r", "w_b", 900.0, 0.2),
    ]);
    let state = solve_hydraulics(&net, &Statuses::new(), 0.0, 60.0, &PdaParams::default()).map_err(|e| e.to_string())?;
    // one loop: r_ra q^n + r_ab q^n = r_rb (D - q)^n
    let k = (hw_resistance(900.0, 0.2, 120.0) / (hw_resistance(400.0, 0.2, 120.0) + hw_resistance(300.0, 0.15, 120.0))).powf(1.0 / 1.852);
    let q = demand * k / (1.0 + k);
    let f = &state[0].link_flow;
    close(f["w_ra"], q, 1e-4, "flow r-a")?;
    close(f["w_ab"], q, 1e-4, "flow a-b")?;
    close(f["w_rb"], demand - q, 1e-4, "flow r-b")?;
    close(state[0].node_actual_demand["w_b"], demand, 1e-4, "delivered at b")?;

    // two affine links, t1 = 10 + x1, t2 = 20 + x2
    let g = |d: f64| {
        RoadGraph::new(
            vec!["o".into(), "d".into()],
            vec![
                ("l1".into(), 0, 1, VolumeDelay::Affine { intercept: 10.0, slope: 1.0 }),
                ("l2".into(), 0, 1, VolumeDelay::Affine { intercept: 20.0, slope: 1.0 }),
            ],
            vec![(0, 1, d)],
        )
    };
    let opts = AssignmentOptions::default();
    let corner = frank_wolfe(&g(10.0), &[true, true], &opts);
    close(corner.link_flow[0], 10.0, 0.1, "UE demand 10, x1")?;
    close(corner.link_flow[1], 0.0, 0.1, "UE demand 10, x2")?;
    check(corner.link_time[1] >= corner.link_time[0] - 1e-9, || "unused path is cheaper".into())?;
    // interior equilibrium: 10 + x1 = 20 + x2, x1 + x2 = 30
    let interior = frank_wolfe(&g(30.0), &[true, true], &opts);
    close(interior.link_flow[0], 20.0, 0.2, "UE demand 30, x1")?;
    close(interior.link_flow[1], 10.0, 0.1, "UE demand 30, x2")?;

    let bus = |id: &str| Component::new(id, Point::default(), ComponentKind::Bus(Bus { voltage_kv: 20.0 }));
    let power = IntegratedNetwork {
        power: vec![
            bus("p_a"),
            bus("p_b"),
            Component::new("p_grid", Point::default(), ComponentKind::ExternalGrid(Source { bus: "p_a".into(), max_mw: 100.0, cost: 1.0 })),
            Component::new(
                "p_line",
                Point::default(),
                ComponentKind::Line(Branch { from: "p_a".into(), to: "p_b".into(), susceptance: 10.0, limit_mw: 50.0 }),
            ),
            Component::new("p_load", Point::default(), ComponentKind::Load(Load { bus: "p_b".into(), demand_mw: 60.0 })),
        ],
        ..water_only(vec![])
    };
    let s = solve_power(&power, &Statuses::new()).map_err(|e| e.to_string())?;
    check(s.served_load["p_load"] == 50.0 && s.shed_load["p_load"] == 10.0, || {
        format!("dispatch served {} shed {}", s.served_load["p_load"], s.shed_load["p_load"])
    })?;
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "loop flow {:.6} vs {q:.6} m3/s; UE {:.3}/{:.3}; dispatch 50/10",
        f["w_ra"], interior.link_flow[0], interior.link_flow[1]
    ))
}

// 4 ---------------------------------------------------------------------

fn failure_statistics() -> Outcome {
    let start = Instant::now();
    let radius = 100.0;
    let p_hazard = 0.8;
    let mut worst_z = 0.0f64;
    for u in [0.0, 0.25, 0.5] {
        let net = IntegratedNetwork {
            traffic: vec![
                Component::new("t_a", Point::new(u * radius, -10.0), ComponentKind::ZoneNode(ZoneNode {})),
                Component::new("t_b", Point::new(u * radius, 10.0), ComponentKind::ZoneNode(ZoneNode {})),
                Component::new(
                    "t_ab",
                    Point::new(u * radius, 0.0),
                    ComponentKind::RoadLink(RoadLink { from: "t_a".into(), to: "t_b".into(), free_flow_time: 60.0, capacity: 100.0 }),
                ),
            ],
            ..water_only(vec![])
        };
        for (intensity, conditional) in [(Intensity::Low, 0.1), (Intensity::Moderate, 0.3), (Intensity::High, 0.6)] {
            let event = HazardEvent::point(Point::new(0.0, 0.0), radius, intensity);
            let n = 100_000u64;
            let mut hits = 0u64;
            for seed in 0..n {
                let s = sample_scenario(&net, &event, p_hazard, seed).map_err(|e| e.to_string())?;
                hits += s.failures.len() as u64;
            }
            let p = p_hazard * (1.0 - u) * conditional;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let z = (hits as f64 / n as f64 - p).abs() / se;
            worst_z = worst_z.max(z);
            check(z <= 3.0, || format!("u={u} {intensity}: frequency {} vs {p}, z = {z:.2}", hits as f64 / n as f64))?;
        }
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("9 combinations x 1e5 draws, worst |z| = {worst_z:.2}"))
}

// 5 ---------------------------------------------------------------------

fn feeder_outage(repair_start: f64, duration: f64) -> EventTable {
    let row = |t, action, crew: Option<&str>| EventRow { time: t, component_id: "p_line_1".into(), action, crew_id: crew.map(String::from) };
    EventTable::new(vec![
        row(3600.0, Action::Fail, None),
        row(repair_start, Action::RepairStart, Some("crew_power")),
        row(repair_start + duration, Action::RepairEnd, Some("crew_power")),
    ])
}

fn interdependency() -> Outcome {
    let sim = Simulator::new(build_simple_testbed(), SimParams::default());
    let line = RepairDurations::default().line;
    let end = 4200.0 + line;
    let r = sim.simulate(&feeder_outage(4200.0, line), None).map_err(|e| e.to_string())?;
    let first_drop = r
        .water
        .times
        .iter()
        .zip(r.water.pcs_curve())
        .find(|(&t, v)| t > 3600.0 && v.is_some_and(|v| v < 1.0))
        .map(|(&t, _)| t);
    check(first_drop.is_some_and(|t| t <= 7200.0), || format!("water PCS first below 1 at {first_drop:?}"))?;
    check(r.power.value_at(Mop::Pcs, end - 1.0).is_some_and(|v| v < 1.0), || "power restored before repair end".into())?;
    check(r.power.value_at(Mop::Pcs, end) == Some(1.0), || "power not whole at repair end".into())?;
    let power_back = r.power.recovery_time(Mop::Pcs, 3600.0, 0.0);
    let water_back = r.water.recovery_time(Mop::Pcs, 3600.0, 1e-9);
    check(power_back == Some(end), || format!("power recovery at {power_back:?}, expected {end}"))?;
    check(matches!((water_back, power_back), (Some(w), Some(p)) if w >= p), || {
        format!("water recovery {water_back:?} before power {power_back:?}")
    })?;
    Ok(format!(
        "water PCS < 1 at {} s; power back at {} s; water back at {} s",
        first_drop.unwrap_or(f64::NAN),
        end,
        water_back.unwrap_or(f64::NAN)
    ))
}

// 6 ---------------------------------------------------------------------

fn zone(id: &str, x: f64) -> Component {
    Component::new(id, Point::new(x, 0.0), ComponentKind::ZoneNode(ZoneNode {}))
}

fn road(id: &str, a: &str, b: &str, t: f64) -> Component {
    Component::new(
        id,
        Point::default(),
        ComponentKind::RoadLink(RoadLink { from: a.into(), to: b.into(), free_flow_time: t, capacity: 1000.0 }),
    )
}

fn line(id: &str, a: &str, b: &str) -> Component {
    Component::new(
        id,
        Point::default(),
        ComponentKind::Line(Branch { from: a.into(), to: b.into(), susceptance: 10.0, limit_mw: 10.0 }),
    )
}

fn access(zone: &str, target: &str) -> Dependency {
    Dependency { source_id: zone.into(), target_id: target.into(), kind: DependencyKind::RoadProvidesAccess }
}

fn crew(id: &str, network: Network, at: &str) -> Crew {
    Crew { id: id.into(), network, location: at.into(), busy_until: 0.0 }
}

fn order(entries: &[(Network, &[&str])]) -> RepairOrder {
    entries.iter().map(|(n, ids)| (*n, ids.iter().map(|s| s.to_string()).collect())).collect()
}

fn scheduling() -> Outcome {
    let bus = |id: &str| Component::new(id, Point::default(), ComponentKind::Bus(Bus { voltage_kv: 20.0 }));
    // zones a-b 60 s, a-c and c-d 120 s, both directions; line x reached from
    // b, line y from d
    let net = IntegratedNetwork {
        power: vec![bus("p_b1"), bus("p_b2"), bus("p_b3"), line("p_line_x", "p_b1", "p_b2"), line("p_line_y", "p_b2", "p_b3")],
        traffic: vec![
            zone("t_a", 0.0),
            zone("t_b", 1.0),
            zone("t_c", 2.0),
            zone("t_d", 3.0),
            road("t_ab", "t_a", "t_b", 60.0),
            road("t_ba", "t_b", "t_a", 60.0),
            road("t_ac", "t_a", "t_c", 120.0),
            road("t_ca", "t_c", "t_a", 120.0),
            road("t_cd", "t_c", "t_d", 120.0),
            road("t_dc", "t_d", "t_c", 120.0),
        ],
        dependencies: vec![access("t_b", "p_line_x"), access("t_d", "p_line_y")],
        ..water_only(vec![])
    };
    let g = RoadGraph::from_network(&net);
    let a = AssignmentOptions::default();
    let d = RepairDurations::default();
    let err = |e: lifeline::Error| e.to_string();

    let scenario = DisasterScenario::from_failures(&net, &["p_line_x", "p_line_y", "t_ab", "t_ba"], 3600.0).map_err(err)?;
    let ord = order(&[(Network::Power, &["p_line_x", "p_line_y"]), (Network::Traffic, &["t_ab", "t_ba"])]);
    let crews = [crew("crew_power", Network::Power, "t_a"), crew("crew_road", Network::Traffic, "t_a")];
    let t = build_event_table(&net, &g, &scenario, &ord, &crews, &d, &a).map_err(err)?;
    let expect = [
        ("t_ab", Action::RepairStart, 3600.0),
        ("t_ab", Action::RepairEnd, 46800.0),
        ("t_ba", Action::RepairStart, 46800.0),
        ("p_line_y", Action::RepairStart, 3840.0),
        ("p_line_y", Action::RepairEnd, 14640.0),
        ("p_line_x", Action::RepairStart, 47100.0),
        ("p_line_x", Action::RepairEnd, 57900.0),
    ];
    for (id, action, time) in expect {
        check(t.time_of(id, action) == Some(time), || format!("{id} {action:?} at {:?}, expected {time}", t.time_of(id, action)))?;
    }

    let mut small = net.clone();
    small.traffic = vec![zone("t_a", 0.0), zone("t_b", 1.0), road("t_ab", "t_a", "t_b", 600.0), road("t_ba", "t_b", "t_a", 600.0)];
    let g = RoadGraph::from_network(&small);
    let d2 = RepairDurations { line: 7200.0, ..d };
    let scenario = DisasterScenario::from_failures(&small, &["p_line_x"], 3600.0).map_err(err)?;
    let t = build_event_table(&small, &g, &scenario, &order(&[(Network::Power, &["p_line_x"])]), &crews[..1], &d2, &a).map_err(err)?;
    let got = (t.time_of("p_line_x", Action::RepairStart), t.time_of("p_line_x", Action::RepairEnd));
    check(got == (Some(4200.0), Some(11400.0)), || format!("arithmetic example gave {got:?}"))?;
    Ok("deferred-blockage trace and 4200/11400 example exact".into())
}

// 7 ---------------------------------------------------------------------

fn mpc_dominance() -> Outcome {
    let start = Instant::now();
    let sim = Simulator::new(build_simple_testbed(), SimParams::default());
    let net = sim.network();
    let ids = ["w_pipe_01", "w_pipe_05", "w_pipe_10"];
    let scenario = DisasterScenario::from_failures(net, &ids, 3600.0).map_err(|e| e.to_string())?;
    let crews = default_crews(net, None).map_err(|e| e.to_string())?;
    let options = MpcOptions::default();
    let eval = |o: &RepairOrder| evaluate_order(&sim, &scenario, &crews, o, &options).map_err(|e| e.to_string());

    let mut exhaustive = Vec::new();
    for perm in ids.iter().permutations(3) {
        let o: RepairOrder = [(Network::Water, perm.iter().map(|s| s.to_string()).collect())].into();
        exhaustive.push(eval(&o)?);
    }
    let best = exhaustive.iter().copied().fold(f64::INFINITY, f64::min);
    let chosen = mpc_sequence(&sim, &scenario, &crews, 3, &options).map_err(|e| e.to_string())?;
    let mpc = eval(&chosen)?;
    check(mpc == best, || format!("MPC EOH {mpc} vs exhaustive minimum {best} ({exhaustive:?})"))?;
    for h in Heuristic::ALL {
        let o = repair_order(&sim, &scenario, &crews, Strategy::Heuristic(h), &options).map_err(|e| e.to_string())?;
        let e = eval(&o)?;
        check(mpc <= e, || format!("{} beats MPC: {e} < {mpc}", h.as_str()))?;
    }
    within(start.elapsed(), 120.0)?;
    let worst = exhaustive.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(format!("MPC {mpc:.6} h = exhaustive minimum (orders range {best:.6}..{worst:.6} h)"))
}

// 8, 9 ------------------------------------------------------------------

fn flood_batch() -> BatchConfig {
    let base = RunConfig::new(BUILTIN_SIMPLE, HazardEvent::track(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)], 400.0, Intensity::Moderate), Strategy::Heuristic(Heuristic::MaxFlow), 2024);
    BatchConfig {
        base,
        scenarios: 50,
        strategies: vec![
            Strategy::Heuristic(Heuristic::MaxFlow),
            Strategy::Heuristic(Heuristic::Centrality),
            Strategy::Heuristic(Heuristic::Zone),
        ],
        jobs: 0,
        intensity_weights: Some(FLOOD_INTENSITY_WEIGHTS.to_vec()),
        random_track_points: Some(4),
    }
}

fn run_batch(config: &BatchConfig) -> Result<BatchOutcome, String> {
    let sim = config.base.simulator().map_err(|e| e.to_string())?;
    batch(&sim, config).map_err(|e| e.to_string())
}

/// F of a repeated-measures design from the two-way decomposition
/// `SS_total = SS_rows + SS_cols + SS_residual`.
fn hand_f(m: &[Vec<f64>]) -> f64 {
    let (n, k) = (m.len() as f64, m[0].len() as f64);
    let all: Vec<f64> = m.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / (n * k);
    let ss_total: f64 = all.iter().map(|x| (x - grand).powi(2)).sum();
    let ss_rows: f64 = m.iter().map(|r| k * (r.iter().sum::<f64>() / k - grand).powi(2)).sum();
    let ss_cols: f64 = (0..m[0].len()).map(|j| n * (m.iter().map(|r| r[j]).sum::<f64>() / n - grand).powi(2)).sum();
    let ss_res = ss_total - ss_rows - ss_cols;
    (ss_cols / (k - 1.0)) / (ss_res / ((k - 1.0) * (n - 1.0)))
}

fn pipeline_shape() -> Outcome {
    let start = Instant::now();
    let config = flood_batch();
    let out = run_batch(&config)?;
    let elapsed = start.elapsed();
    let matrix = out.matrix("weighted");
    check(out.records.len() == 50 && matrix.iter().all(|r| r.len() == 3 && r.iter().all(|x| x.is_finite())), || {
        format!("matrix has {} complete rows; skipped {:?}", out.records.len(), out.stats.skipped.iter().map(|s| (s.seed, s.error.clone())).collect::<Vec<_>>())
    })?;
    for name in ["water", "power", "weighted"] {
        let m = &out.stats.measures[name];
        check(m.anova.is_some(), || format!("{name}: no ANOVA table"))?;
        check(m.posthoc.len() == 3 && m.posthoc.iter().all(|p| p.p_adjusted >= p.p_value), || {
            format!("{name}: post-hoc table incomplete")
        })?;
    }
    // first three scenarios where every strategy pair differs
    let distinct = |r: &&Vec<f64>| (0..3).all(|a| (a + 1..3).all(|b| (r[a] - r[b]).abs() > 1e-6));
    let sub: Vec<Vec<f64>> = matrix.iter().filter(distinct).take(3).cloned().collect();
    check(sub.len() == 3, || format!("only {} scenarios separate all strategies", sub.len()))?;
    let table = repeated_measures_anova(&sub).map_err(|e| e.to_string())?;
    let f = table.f.ok_or("ANOVA returned no F")?;
    close(f, hand_f(&sub), 1e-9, &format!("F on 3x3 submatrix {sub:?}"))?;
    within(elapsed, 600.0)?;
    let a = out.stats.measures["weighted"].anova.as_ref().expect("checked");
    Ok(format!("50x3 matrix in {:.1} s; weighted F = {:.4} (df {}, {}); 3x3 F {f:.6} matches", elapsed.as_secs_f64(), a.f.unwrap_or(f64::NAN), a.df_treatment, a.df_error))
}

fn determinism() -> Outcome {
    let config = flood_batch();
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for dir in &dirs {
        run_batch(&config)?.write(dir.path()).map_err(|e| e.to_string())?;
    }
    for file in ["batch_summary.csv", "batch_eoh.csv", "stats.json"] {
        let a = std::fs::read(dirs[0].path().join(file)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(file)).map_err(|e| e.to_string())?;
        check(a == b, || format!("{file} differs between runs"))?;
    }
    Ok("batch_summary.csv, batch_eoh.csv, stats.json byte-identical".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("metric exactness", metric_exactness),
        ("PDA conformance", pda_conformance),
        ("solver oracles", solver_oracles),
        ("failure statistics", failure_statistics),
        ("interdependency propagation", interdependency),
        ("crew scheduling", scheduling),
        ("MPC dominance", mpc_dominance),
        ("batch pipeline shape", pipeline_shape),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.2} s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
