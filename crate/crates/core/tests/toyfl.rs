#![allow(clippy::needless_range_loop)]

use fairfed_core::availability::{AvailabilityModel, EstimatorMode};
use fairfed_core::engine::{
    self, ExperimentConfig, QuadraticWorkload, SurrogateSettings, Workload,
};
use fairfed_core::selection::{PolicyKind, SamplingMode, SelectionPolicy};
use fairfed_core::stream_rng;
use fairfed_core::surrogate::SurrogateConfig;
use fairfed_core::toyfl::{
    global_step, local_update, spread_clients, verify_descent_bounds, QuadraticClient,
    TrainerConfig, WeightedObjective,
};
use fairfed_core::utility::{AccrualMode, NormalizationSource};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn fixed_point_is_weighted_mean_of_optima() {
    let clients = vec![
        QuadraticClient::new(vec![1.0, 0.0], 1.0).unwrap(),
        QuadraticClient::new(vec![-2.0, 4.0], 3.0).unwrap(),
        QuadraticClient::new(vec![0.5, -1.0], 0.5).unwrap(),
    ];
    let beta = [0.2, 0.5, 0.3];
    let obj = WeightedObjective {
        terms: beta.iter().enumerate().map(|(k, b)| (k, *b)).collect(),
    };
    let mut w = vec![10.0, -10.0];
    for _ in 0..2000 {
        let g = obj.gradient(&clients, &w);
        w = global_step(&w, &g, 0.3).unwrap();
    }
    let denom: f64 = beta
        .iter()
        .zip(&clients)
        .map(|(b, c)| b * c.curvature)
        .sum();
    for i in 0..2 {
        let target: f64 = beta
            .iter()
            .zip(&clients)
            .map(|(b, c)| b * c.curvature * c.optimum[i])
            .sum::<f64>()
            / denom;
        assert!(
            (w[i] - target).abs() < 1e-9,
            "coord {i}: {} vs {target}",
            w[i]
        );
    }
}

fn descent_config(seed: u64, n: usize, dim: usize) -> ExperimentConfig {
    let pi: Vec<f64> = (0..n).map(|k| 0.15 + 0.8 * k as f64 / n as f64).collect();
    ExperimentConfig {
        clients: n,
        per_round: 3.min(n),
        rounds: 1000,
        seed,
        availability: AvailabilityModel::markov(pi, vec![3.0; n]).unwrap(),
        estimator: EstimatorMode::RunningMean,
        pi_floor: 0.01,
        policy: SelectionPolicy::new(
            PolicyKind::InverseAvailability,
            3.min(n),
            SamplingMode::InclusionProportional,
            n,
        )
        .unwrap(),
        weight_pi: NormalizationSource::EstimatedPi,
        workload: Workload::Quadratic(QuadraticWorkload {
            dim,
            spread: 2.0,
            curvature: (0.5, 2.0),
            trainer: TrainerConfig::new(0.2, 2, 0.5, 0.3).unwrap(),
            server_step: 0.3,
            utility_bound: 50.0,
        }),
        accrual: AccrualMode::SelectedAndAvailable,
        normalization: NormalizationSource::EstimatedPi,
        surrogate: Some(SurrogateSettings {
            config: SurrogateConfig::new(1.0, 0.3, 0.0).unwrap(),
            utility_credit: true,
        }),
        epsilon_cv: 1e-8,
        record_descent: true,
    }
}

#[test]
fn engine_rounds_satisfy_both_bounds() {
    for (seed, n, dim) in [(1, 12, 8), (2, 6, 3), (3, 10, 1)] {
        let cfg = descent_config(seed, n, dim);
        let trainer = match &cfg.workload {
            Workload::Quadratic(q) => q.trainer,
            Workload::Synthetic(_) => unreachable!(),
        };
        let out = engine::run(&cfg).unwrap();
        let trace = out.descent.unwrap();
        assert!(trace.rounds.len() >= 900);
        let r = verify_descent_bounds(&trace.clients, &trace.rounds, &trainer);
        assert_eq!(
            (r.descent_violations, r.gap_violations, r.bias_violations),
            (0, 0, 0),
            "{r:?}"
        );
        assert_eq!(r.descent_checked + r.angle_excluded, r.rounds);
        // stale surrogates must actually perturb some rounds
        assert!(trace
            .rounds
            .iter()
            .any(|d| d.true_aggregate != d.surrogate_aggregate));
    }
}

fn finite_diff(c: &QuadraticClient, w: &[f64], i: usize) -> f64 {
    let h = 1e-5 * (1.0 + w[i].abs());
    let mut a = w.to_vec();
    let mut b = w.to_vec();
    a[i] += h;
    b[i] -= h;
    (c.loss(&a) - c.loss(&b)) / (2.0 * h)
}

proptest! {
    #[test]
    fn gradient_matches_finite_differences(
        opt in prop::collection::vec(-5.0f64..5.0, 1..8),
        shift in prop::collection::vec(-5.0f64..5.0, 8),
        c in 0.1f64..5.0,
    ) {
        let client = QuadraticClient::new(opt.clone(), c).unwrap();
        let w: Vec<f64> = opt.iter().zip(&shift).map(|(o, s)| o + s).collect();
        let g = client.gradient(&w);
        for i in 0..w.len() {
            let fd = finite_diff(&client, &w, i);
            prop_assert!((g[i] - fd).abs() <= 1e-6 * (1.0 + g[i].abs()), "{} vs {}", g[i], fd);
        }
    }

    #[test]
    fn smoothness_constant_bounds_curvature(seed in any::<u64>(), n in 1usize..10, dim in 1usize..8) {
        let mut rng = stream_rng(seed, 5);
        let clients = spread_clients(n, dim, 3.0, (0.1, 4.0), &mut rng).unwrap();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let obj = WeightedObjective { terms: raw.iter().enumerate().map(|(k, b)| (k, b / total)).collect() };
        let l = obj.smoothness(&clients);
        for _ in 0..20 {
            let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let g = obj.gradient(&clients, &w);
            let lhs = obj.value(&clients, &v) - obj.value(&clients, &w)
                - g.iter().zip(v.iter().zip(&w)).map(|(g, (a, b))| g * (a - b)).sum::<f64>();
            let d2: f64 = v.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!(lhs <= 0.5 * l * d2 * (1.0 + 1e-10) + 1e-10);
        }
    }

    #[test]
    fn stable_local_descent_never_loses(
        opt in prop::collection::vec(-5.0f64..5.0, 1..6),
        start in prop::collection::vec(-5.0f64..5.0, 6),
        c in 0.1f64..4.0,
        frac in 0.01f64..0.99,
        epochs in 1usize..5,
        mixing in 0.0f64..=1.0,
    ) {
        let mut client = QuadraticClient::new(opt.clone(), c).unwrap();
        client.local = start[..opt.len()].to_vec();
        let global: Vec<f64> = opt.iter().map(|o| o + 1.0).collect();
        let cfg = TrainerConfig::new(2.0 * frac / c, epochs, mixing, 0.5).unwrap();
        let up = local_update(&mut client, &global, &cfg, f64::INFINITY).unwrap();
        prop_assert!(!up.diverging);
        prop_assert!(up.utility >= 0.0);
    }
}
