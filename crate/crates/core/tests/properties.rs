use proptest::prelude::*;
use recurmed::data::{Cohort, MediatorKind, StepFunction, Subject};
use recurmed::estimators::{effects_from_q, z_weights, SubjectWeights};
use recurmed::inference::{resample_indices, BootstrapSpec};
use recurmed::io::{
    default_confounder_names, events_csv, ingest_readers, subjects_csv, AnalysisConfig, DataSummary, Dataset,
    MethodResult, ModelTables, Provenance, Report,
};
use recurmed::simulation::{generate_cohort, Scenario};
use recurmed::{bootstrap_effects, estimate_effects, fit_models, Method};

fn subject_strategy(p: usize) -> impl Strategy<Value = (Vec<f64>, f64, bool, f64, Vec<f64>)> {
    (
        prop::collection::vec(0.0..12.0f64, 0..6),
        0.0..12.0f64,
        any::<bool>(),
        -5.0..5.0f64,
        prop::collection::vec(-3.0..3.0f64, p),
    )
}

fn cohort_strategy() -> impl Strategy<Value = Cohort> {
    (prop::collection::vec(subject_strategy(2), 1..25), 1.0..12.0f64).prop_map(|(rows, tau)| {
        let subjects = rows
            .into_iter()
            .enumerate()
            .map(|(i, (ev, c, a, m, x))| Subject::new(format!("p{i}"), ev, c, a, m, x).unwrap())
            .collect();
        Cohort::new(subjects, tau, MediatorKind::ContinuousGaussian).unwrap()
    })
}

fn roundtrip(cohort: &Cohort) -> Dataset {
    let names = default_confounder_names(cohort.confounder_dim());
    let subjects = subjects_csv(cohort, &names);
    let events = events_csv(cohort);
    ingest_readers(subjects.as_bytes(), events.as_bytes(), &AnalysisConfig::new(cohort.tau())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn risk_sums_agree_with_direct_counts(cohort in cohort_strategy(), seed in 0u64..1000) {
        let w: Vec<f64> = (0..cohort.len()).map(|i| 1.0 + ((i as u64 * 31 + seed) % 7) as f64).collect();
        let sums = cohort.grid().risk_sums(&w);
        for (k, &t) in cohort.pooled_event_grid().iter().enumerate() {
            let direct: f64 = cohort.subjects().iter().zip(&w).filter(|(s, _)| s.at_risk(t, cohort.tau())).map(|(_, w)| w).sum();
            prop_assert!((sums[k] - direct).abs() < 1e-9);
            let events: usize = cohort.subjects().iter().map(|s| s.observed_events(cohort.tau()).iter().filter(|&&e| e == t).count()).sum();
            prop_assert_eq!(cohort.grid().event_count(k), events as f64);
        }
    }

    #[test]
    fn counting_processes_are_nondecreasing(cohort in cohort_strategy()) {
        for s in cohort.subjects() {
            let n = s.counting_process(cohort.tau());
            prop_assert!(n.is_nondecreasing());
            prop_assert_eq!(n.value(f64::INFINITY), s.observed_events(cohort.tau()).len() as f64);
        }
    }

    #[test]
    fn step_functions_sum_their_jumps(jumps in prop::collection::vec((0.0..10.0f64, 0.0..2.0f64), 0..30), t in -1.0..11.0f64) {
        let f = StepFunction::from_unsorted(jumps.clone());
        let direct: f64 = jumps.iter().filter(|(u, _)| *u <= t).map(|(_, d)| d).sum();
        prop_assert!((f.value(t) - direct).abs() < 1e-9);
        prop_assert!(f.is_nondecreasing());
    }

    #[test]
    fn csv_roundtrip_preserves_the_cohort(cohort in cohort_strategy()) {
        prop_assert_eq!(roundtrip(&cohort).cohort, cohort);
    }

    #[test]
    fn resampling_preserves_size(n in 1usize..200, seed in any::<u64>(), r in 0usize..50) {
        let ix = resample_indices(seed, r, n);
        prop_assert_eq!(ix.len(), n);
        prop_assert!(ix.iter().all(|&i| i < n));
        prop_assert_eq!(ix, resample_indices(seed, r, n));
    }

    #[test]
    fn decomposition_identity(q10 in -1e3..1e3f64, q00 in -1e3..1e3f64, q11 in -1e3..1e3f64) {
        let (nde, nie, te) = effects_from_q(q10, q00, q11);
        prop_assert!((te - (nde + nie)).abs() <= 1e-12 * (1.0 + te.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn estimators_decompose_on_generated_data(seed in 0u64..10_000) {
        let cohort = generate_cohort(&Scenario::preset("exp3-pc30").unwrap().with_n(150), seed).unwrap();
        let fits = fit_models(&cohort).unwrap();
        for method in Method::ALL {
            let est = estimate_effects(method, &fits, &cohort, &[2.0, 9.6, 24.0], &Default::default()).unwrap();
            for row in &est.rows {
                prop_assert!((row.te - (row.nde + row.nie)).abs() <= 1e-12 * (1.0 + row.te.abs()));
                prop_assert!((row.te - (row.q11 - row.q00)).abs() <= 1e-12 * (1.0 + row.te.abs()));
            }
        }
    }

    #[test]
    fn normalised_weights_average_one(seed in 0u64..10_000) {
        let cohort = generate_cohort(&Scenario::standard().with_n(120), seed).unwrap();
        let fits = fit_models(&cohort).unwrap();
        let w = SubjectWeights::compute(&fits, &cohort, 0.0);
        for &u in &[0.5, 10.0, 23.9] {
            for a in [false, true] {
                let z = z_weights(&cohort, &w, u, a).unwrap();
                let mean = z.iter().sum::<f64>() / z.len() as f64;
                prop_assert!((mean - 1.0).abs() < 1e-12);
                let outside = cohort.subjects().iter().zip(&z)
                    .filter(|(s, _)| s.exposed != a || !s.at_risk(u, cohort.tau()));
                for (_, &zi) in outside {
                    prop_assert_eq!(zi, 0.0);
                }
            }
        }
    }

    #[test]
    fn report_json_roundtrip(seed in 0u64..10_000) {
        let cohort = generate_cohort(&Scenario::standard().with_n(100), seed).unwrap();
        let ds = roundtrip(&cohort);
        let fits = fit_models(&ds.cohort).unwrap();
        let cfg = AnalysisConfig::new(cohort.tau());
        let est = estimate_effects(Method::Tr, &fits, &ds.cohort, &[4.8, 19.2], &Default::default()).unwrap();
        let spec = BootstrapSpec { replicates: 5, seed, ..Default::default() };
        let iv = bootstrap_effects(&ds.cohort, &spec, &[4.8, 19.2]).unwrap();
        let report = Report {
            provenance: Provenance::new(&cfg, Some(seed)),
            data: DataSummary::new(&ds),
            models: ModelTables::new(&fits, &ds.confounder_names),
            config: cfg,
            results: vec![MethodResult::from_point(&est), MethodResult::from_intervals(&est, &iv)],
        };
        let text = report.to_json();
        prop_assert_eq!(Report::from_json(&text).unwrap(), report);
    }
}
