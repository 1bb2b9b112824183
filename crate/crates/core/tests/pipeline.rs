use lifeline::hazard::{DisasterScenario, HazardEvent, Intensity};
use lifeline::network::{Network, Point};
use lifeline::pipeline::{run, run_scenario, BatchConfig, RunConfig, BUILTIN_SIMPLE};
use lifeline::recovery::{Heuristic, Strategy};

fn config(p_hazard: f64, seed: u64) -> RunConfig {
    let event = HazardEvent::point(Point::new(1000.0, 1000.0), 1400.0, Intensity::High);
    let mut c = RunConfig::new(BUILTIN_SIMPLE, event, Strategy::Heuristic(Heuristic::MaxFlow), seed);
    c.p_hazard = p_hazard;
    c
}

#[test]
fn no_hazard_costs_nothing() {
    let c = config(0.0, 7);
    let out = run(&c.simulator().unwrap(), &c).unwrap();
    assert!(out.report.failures.is_empty());
    assert_eq!(out.report.weighted_eoh, 0.0);
    for e in out.report.eoh.values() {
        assert_eq!((e.ecs, e.pcs), (0.0, 0.0));
    }
}

#[test]
fn run_writes_all_outputs() {
    let c = config(1.0, 42);
    let sim = c.simulator().unwrap();
    let scenario = DisasterScenario::from_failures(sim.network(), &["p_line_1", "w_pipe_06"], 3600.0).unwrap();
    let out = run_scenario(&sim, &scenario, &c).unwrap();
    assert!(out.report.weighted_eoh > 0.0);
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    for f in ["scenario.json", "event_table.csv", "performance.csv", "report.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let perf = std::fs::read_to_string(dir.path().join("performance.csv")).unwrap();
    assert!(perf.starts_with("time_s,network,ECS,PCS\n"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["strategy"], "max_flow");
}

#[test]
fn every_failure_is_repaired_once() {
    let c = config(1.0, 3);
    let out = run(&c.simulator().unwrap(), &c).unwrap();
    let ordered: usize = out.order.values().map(Vec::len).sum();
    assert_eq!(ordered, out.report.failures.len());
    for id in &out.report.failures {
        assert!(out.order.values().flatten().filter(|x| *x == id).count() == 1, "{id}");
    }
    assert!(out.report.eoh.contains_key(&Network::Water) && out.report.eoh.contains_key(&Network::Power));
}

#[test]
fn batch_seeds_follow_the_base_seed() {
    let b = BatchConfig {
        base: config(1.0, 100),
        scenarios: 3,
        strategies: vec![Strategy::Heuristic(Heuristic::Zone)],
        jobs: 1,
        intensity_weights: None,
        random_track_points: None,
    };
    assert_eq!((0..3).map(|i| b.seed_of(i)).collect::<Vec<_>>(), vec![100, 101, 102]);
}
