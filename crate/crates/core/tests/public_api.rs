use prefbo::benchmark::{self, simulated_pref, TestFunction};
use prefbo::{
    AcquisitionKind, BoundingBox, ExperimentConfig, ExperimentState, FitConfig, Outcome, Phase, Point, ProposalConfig,
};
use proptest::prelude::*;

fn quick(seed: u64, acquisition: AcquisitionKind) -> ExperimentConfig {
    ExperimentConfig {
        acquisition,
        seed,
        fit: FitConfig {
            max_steps: 100,
            report_samples: 0,
            ..FitConfig::default()
        },
        proposal: ProposalConfig {
            candidate_count: 32,
            posterior_samples: 4,
            refinement_steps: 4,
            ..ProposalConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn drive(exp: &mut ExperimentState, f: &TestFunction, steps: usize) {
    for _ in 0..steps {
        let (a, b) = exp.find_next().unwrap();
        let o = simulated_pref(f, &a, &b, 0.01);
        exp.prefer(&a, &b, o).unwrap();
    }
}

#[test]
fn export_import_mid_session_continues_identically() {
    let f = TestFunction::by_name("six-hump-camel").unwrap();
    let mut a = ExperimentState::new(f.bbox.clone(), None, quick(9, AcquisitionKind::ExpectedImprovement)).unwrap();
    // stop during initialization with the next pair outstanding, and again when active
    for stop in [2, 7] {
        let done = a.comparisons().len();
        drive(&mut a, &f, stop - done);
        a.find_next().unwrap();
        let mut b = ExperimentState::from_json(&a.to_json().unwrap()).unwrap();
        let mut c = a.clone();
        drive(&mut b, &f, 3);
        drive(&mut c, &f, 3);
        assert_eq!(b.to_json().unwrap(), c.to_json().unwrap());
    }
}

#[test]
fn every_strategy_keeps_proposals_in_box() {
    let bbox = BoundingBox::new(vec![(-1.0, 0.5), (2.0, 3.0), (0.0, 0.0)]).unwrap();
    let f = TestFunction::by_name("sphere").unwrap();
    let g = |p: &Point| f.evaluate(&Point::new(vec![p[0], p[1] - 2.5]));
    for kind in [AcquisitionKind::ExpectedImprovement, AcquisitionKind::PureExploration, AcquisitionKind::RandomSearch] {
        let mut exp = ExperimentState::new(bbox.clone(), None, quick(3, kind)).unwrap();
        for _ in 0..12 {
            let (x, y) = exp.find_next().unwrap();
            assert!(bbox.contains(&x) && bbox.contains(&y), "{kind}");
            let o = if g(&x) < g(&y) { Outcome::FirstBetter } else { Outcome::FirstWorse };
            exp.prefer(&x, &y, o).unwrap();
        }
        assert_eq!(exp.phase(), Phase::Active);
        assert_eq!(exp.params().is_some(), kind.uses_model(), "{kind}");
    }
}

#[test]
fn benchmark_rows_round_trip_through_csv() {
    let f = TestFunction::by_name("branin").unwrap();
    let rows = benchmark::run_benchmark(&f, AcquisitionKind::RandomSearch, 0.1, 5, 4, 1).unwrap();
    let mut buf = Vec::new();
    benchmark::write_trace(&rows, &mut buf).unwrap();
    assert_eq!(benchmark::read_trace(buf.as_slice()).unwrap(), rows);
    let summary = benchmark::summarize(&rows).unwrap();
    assert_eq!(summary.len(), 5 + 5);
    for s in &summary {
        assert!(s.q25 <= s.median && s.median <= s.q75);
        assert_eq!(s.repeats, 4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_is_antisymmetric(x1 in prop::collection::vec(-5.0f64..10.0, 2),
                               x2 in prop::collection::vec(0.0f64..15.0, 2),
                               eps in 0.0f64..5.0) {
        let f = TestFunction::by_name("branin").unwrap();
        let (a, b) = (Point::new(x1), Point::new(x2));
        prop_assert_eq!(simulated_pref(&f, &a, &b, eps), simulated_pref(&f, &b, &a, eps).reversed());
        prop_assert_eq!(simulated_pref(&f, &a, &a, eps), Outcome::Equivalent);
    }

    #[test]
    fn random_search_traces_are_monotone(seed in any::<u64>(), eps in 0.0f64..0.5) {
        let f = TestFunction::by_name("hartmann3").unwrap();
        let rows = benchmark::run_benchmark(&f, AcquisitionKind::RandomSearch, eps, 8, 2, seed).unwrap();
        prop_assert_eq!(rows.len(), 2 * (7 + 8));
        for w in rows.windows(2) {
            if w[0].repeat == w[1].repeat {
                prop_assert_eq!(w[1].iteration, w[0].iteration + 1);
                prop_assert!(w[1].best_value <= w[0].best_value);
            }
        }
    }

    #[test]
    fn state_json_round_trip(seed in any::<u64>(), steps in 0usize..9,
                             lo in -10.0f64..0.0, width in 0.5f64..20.0) {
        let bbox = BoundingBox::new(vec![(lo, lo + width), (0.0, 1.0)]).unwrap();
        let mut exp = ExperimentState::new(bbox, None, quick(seed, AcquisitionKind::RandomSearch)).unwrap();
        let f = |p: &Point| (p[0] - lo).sin() + p[1];
        for _ in 0..steps {
            let (a, b) = exp.find_next().unwrap();
            exp.prefer(&a, &b, if f(&a) > f(&b) { Outcome::FirstBetter } else { Outcome::FirstWorse }).unwrap();
        }
        let json = exp.to_json().unwrap();
        let back = ExperimentState::from_json(&json).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), json);
        prop_assert_eq!(back.best_index(), exp.best_index());
    }
}
