use lifeline::hazard::{
    exposure_probability, failure_probability, sample_scenario, HazardEvent, Intensity,
};
use lifeline::metrics::{benjamini_hochberg, ecs, pcs, repeated_measures_anova, system_eoh, weighted_eoh, CurveMode};
use lifeline::network::{build_simple_testbed, Point};
use lifeline::solvers::{frank_wolfe, pda_demand, AssignmentOptions, PdaParams, RoadGraph, VolumeDelay};
use proptest::prelude::*;

fn served_pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((0.01f64..100.0, 0.0f64..=1.0), 1..20)
        .prop_map(|v| v.into_iter().map(|(d, f)| (d * f, d)).unzip())
}

proptest! {
    #[test]
    fn serviceability_is_a_fraction((supplied, demanded) in served_pairs()) {
        for v in [ecs(&supplied, &demanded).unwrap(), pcs(&supplied, &demanded).unwrap()] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn full_supply_is_full_service(demanded in prop::collection::vec(0.01f64..100.0, 1..20)) {
        prop_assert!((ecs(&demanded, &demanded).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((pcs(&demanded, &demanded).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pda_is_monotone_and_bounded(p0 in 0.0f64..5.0, span in 0.1f64..40.0, desired in 0.0f64..1.0,
                                   a in -20.0f64..60.0, b in -20.0f64..60.0) {
        let params = PdaParams::new(p0, p0 + span, 2.0).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (d_lo, d_hi) = (pda_demand(lo, desired, &params), pda_demand(hi, desired, &params));
        prop_assert!(d_lo <= d_hi);
        prop_assert!(d_lo >= 0.0 && d_hi <= desired);
    }

    #[test]
    fn eoh_of_constant_curve(level in 0.0f64..=1.0, hours in 1usize..48) {
        let t_end = hours as f64 * 3600.0;
        let times: Vec<f64> = (0..=hours).map(|h| h as f64 * 3600.0).collect();
        let values = vec![Some(level); times.len()];
        for mode in [CurveMode::Linear, CurveMode::Step] {
            let e = system_eoh(&times, &values, mode, 0.0, t_end).unwrap();
            prop_assert!((e - (1.0 - level) * hours as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn eoh_is_bounded_by_duration(values in prop::collection::vec(0.0f64..=1.0, 2..40)) {
        let times: Vec<f64> = (0..values.len()).map(|k| k as f64 * 600.0).collect();
        let t_end = *times.last().unwrap();
        let curve: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
        let e = system_eoh(&times, &curve, CurveMode::Linear, 0.0, t_end).unwrap();
        prop_assert!(e >= -1e-12 && e <= t_end / 3600.0 + 1e-12);
    }

    #[test]
    fn weighted_eoh_lies_between_parts(a in 0.0f64..100.0, b in 0.0f64..100.0, w in 0.0f64..=1.0) {
        let e = weighted_eoh(&[(a, w), (b, 1.0 - w)]);
        prop_assert!(e >= a.min(b) - 1e-9 && e <= a.max(b) + 1e-9);
    }

    #[test]
    fn bh_adjustment_is_conservative(p in prop::collection::vec(0.0f64..=1.0, 1..30)) {
        let q = benjamini_hochberg(&p);
        for i in 0..p.len() {
            prop_assert!(q[i] >= p[i] && q[i] <= 1.0);
            for j in 0..p.len() {
                if p[i] <= p[j] {
                    prop_assert!(q[i] <= q[j]);
                }
            }
        }
    }

    #[test]
    fn anova_sums_of_squares_decompose(m in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 3), 2..12)) {
        let t = repeated_measures_anova(&m).unwrap();
        let parts = t.ss_treatment + t.ss_subjects + t.ss_error;
        prop_assert!((parts - t.ss_total).abs() <= 1e-9 * (1.0 + t.ss_total));
    }

    #[test]
    fn anova_ignores_scenario_offsets(m in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 3), 3..10),
                                      shift in prop::collection::vec(-50.0f64..50.0, 10)) {
        let shifted: Vec<Vec<f64>> = m.iter().zip(&shift).map(|(r, s)| r.iter().map(|x| x + s).collect()).collect();
        let (a, b) = (repeated_measures_anova(&m).unwrap(), repeated_measures_anova(&shifted).unwrap());
        prop_assert!((a.ss_treatment - b.ss_treatment).abs() <= 1e-8 * (1.0 + a.ss_treatment));
        prop_assert!((a.ss_error - b.ss_error).abs() <= 1e-8 * (1.0 + a.ss_error));
    }

    #[test]
    fn failure_probability_is_a_probability(p in 0.0f64..=1.0, e in 0.0f64..=1.0, c in 0.0f64..=1.0) {
        let f = failure_probability(p, e, c);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(f <= p && f <= e && f <= c);
    }

    #[test]
    fn exposure_falls_with_distance(d1 in 0.0f64..300.0, d2 in 0.0f64..300.0) {
        let net = build_simple_testbed();
        let c = net.all_components().next().unwrap();
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let at = |d: f64| HazardEvent::point(Point::new(c.location.x + d, c.location.y), 200.0, Intensity::High);
        prop_assert!(exposure_probability(c, &at(near)) >= exposure_probability(c, &at(far)));
    }

    #[test]
    fn equilibrium_conserves_demand(demand in 0.0f64..100.0, t1 in 1.0f64..30.0, t2 in 1.0f64..30.0) {
        let g = RoadGraph::new(
            vec!["o".into(), "d".into()],
            vec![
                ("l1".into(), 0, 1, VolumeDelay::bpr(t1, 50.0)),
                ("l2".into(), 0, 1, VolumeDelay::bpr(t2, 50.0)),
            ],
            vec![(0, 1, demand)],
        );
        let s = frank_wolfe(&g, &[true, true], &AssignmentOptions::default());
        prop_assert!((s.link_flow.iter().sum::<f64>() - demand).abs() <= 1e-6 * (1.0 + demand));
        prop_assert!(s.link_flow.iter().all(|&x| x >= -1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scenarios_are_reproducible(seed in any::<u64>(), level in 0usize..4) {
        let net = build_simple_testbed();
        let event = HazardEvent::point(Point::new(500.0, 500.0), 600.0, Intensity::CONCRETE[level]);
        let a = sample_scenario(&net, &event, 0.9, seed).unwrap();
        let b = sample_scenario(&net, &event, 0.9, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn no_hazard_means_no_failures(seed in any::<u64>()) {
        let net = build_simple_testbed();
        let event = HazardEvent::point(Point::new(500.0, 500.0), 5000.0, Intensity::Extreme);
        prop_assert!(sample_scenario(&net, &event, 0.0, seed).unwrap().failures.is_empty());
    }
}
