use fairfed_core::availability::{AvailabilityModel, EstimatorMode};
use fairfed_core::engine::{run, summarize, ExperimentConfig, SurrogateSettings, Workload};
use fairfed_core::metrics::MetricsRow;
use fairfed_core::selection::{PolicyKind, SamplingMode, SelectionPolicy};
use fairfed_core::surrogate::SurrogateConfig;
use fairfed_core::utility::{AccrualMode, NormalizationSource, UtilityModel, UtilityNoise};

fn config(seed: u64, surrogate: bool) -> ExperimentConfig {
    let n = 20;
    let pi: Vec<f64> = (0..n).map(|k| if k % 2 == 0 { 0.2 } else { 0.9 }).collect();
    ExperimentConfig {
        clients: n,
        per_round: 4,
        rounds: 200,
        seed,
        availability: AvailabilityModel::bernoulli(pi).unwrap(),
        estimator: EstimatorMode::RunningMean,
        pi_floor: 0.01,
        policy: SelectionPolicy::new(PolicyKind::ReactiveReweight, 4, SamplingMode::TopK, n)
            .unwrap()
            .with_reactive(vec![1.0; n], 0.7, 0.01)
            .unwrap(),
        weight_pi: NormalizationSource::EstimatedPi,
        workload: Workload::Synthetic(
            UtilityModel::new(
                vec![0.5; n],
                1.0,
                UtilityNoise::UniformBounded { spread: 0.3 },
            )
            .unwrap(),
        ),
        accrual: AccrualMode::SelectedAndAvailable,
        normalization: NormalizationSource::EstimatedPi,
        surrogate: surrogate.then(|| SurrogateSettings {
            config: SurrogateConfig::new(1.0, 0.5, 0.0).unwrap(),
            utility_credit: true,
        }),
        epsilon_cv: 1e-8,
        record_descent: false,
    }
}

#[test]
fn reruns_are_identical() {
    assert_eq!(
        run(&config(5, true)).unwrap(),
        run(&config(5, true)).unwrap()
    );
    assert_ne!(
        run(&config(5, true)).unwrap().records,
        run(&config(6, true)).unwrap().records
    );
}

#[test]
fn selections_are_available_and_rounds_conserved() {
    let cfg = config(9, true);
    let out = run(&cfg).unwrap();
    for r in &out.records {
        assert!(
            r.fair_selected.len() <= cfg.per_round && r.vanilla_selected.len() <= cfg.per_round
        );
        assert_eq!(r.fair.n_available, r.n_available);
    }
    for arm in [&out.fair_clients, &out.vanilla_clients] {
        for c in arm {
            assert_eq!(c.available_rounds + c.missed, cfg.rounds as u64);
        }
    }
    // both arms see the same availability realization
    for (f, v) in out.fair_clients.iter().zip(&out.vanilla_clients) {
        assert_eq!(f.missed, v.missed);
    }
}

#[test]
fn surrogates_leave_selection_and_vanilla_untouched() {
    let with = run(&config(11, true)).unwrap();
    let without = run(&config(11, false)).unwrap();
    for (a, b) in with.records.iter().zip(&without.records) {
        assert_eq!(a.fair_selected, b.fair_selected);
        assert_eq!(a.vanilla, b.vanilla);
        assert_eq!(
            (a.fair.gini, a.fair.selgap_share),
            (b.fair.gini, b.fair.selgap_share)
        );
        assert_eq!(b.fair.surrogate_contribution, 0.0);
    }
    assert!(with
        .records
        .iter()
        .any(|r| r.fair.surrogate_contribution > 0.0));
}

#[test]
fn identical_replicates_have_zero_spread() {
    let rows: Vec<MetricsRow> = (0..3)
        .flat_map(|_| {
            run(&config(2, false))
                .unwrap()
                .final_rows()
                .map(|r| r.clone())
        })
        .collect();
    for s in summarize(&rows).unwrap() {
        assert_eq!(s.replicates, 3);
        assert!(s.stats.iter().all(|st| st.std == 0.0));
    }
}

#[test]
fn empty_rounds_are_logged_without_updates() {
    let mut cfg = config(1, true);
    cfg.availability = AvailabilityModel::trace(vec![vec![false; 200]; 20]).unwrap();
    let out = run(&cfg).unwrap();
    assert_eq!(out.records.len(), 200);
    assert!(out
        .records
        .iter()
        .all(|r| r.fair_selected.is_empty() && r.n_available == 0));
    assert!(out
        .fair_clients
        .iter()
        .all(|c| c.utility == 0.0 && c.missed == 200));
}
