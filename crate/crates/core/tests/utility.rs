#![allow(clippy::needless_range_loop)]

use fairfed_core::availability::{AvailabilityModel, AvailabilityProcess};
use fairfed_core::stream_rng;
use fairfed_core::utility::{
    fairness_variance, inverse_availability_prediction, normalized_utilities, AccrualMode,
    ClientState, UtilityModel, UtilityNoise,
};
use proptest::prelude::*;
use rand::Rng;

/// Availability-only accrual with the true `pi`; returns `u_k / pi_k`.
fn lemma1_run(pi: &[f64], model: &UtilityModel, rounds: usize, seed: u64) -> Vec<f64> {
    let mut p = AvailabilityProcess::new(AvailabilityModel::bernoulli(pi.to_vec()).unwrap());
    let (mut ar, mut ur) = (stream_rng(seed, 0), stream_rng(seed, 3));
    let mut clients: Vec<ClientState> = (0..pi.len()).map(ClientState::new).collect();
    for t in 1..=rounds {
        let a = p.step(t, &mut ar).unwrap();
        for c in clients.iter_mut() {
            let d = model.sample(c.id, &mut ur).unwrap();
            c.accrue(t, a[c.id], false, d, AccrualMode::AvailabilityOnly)
                .unwrap();
        }
    }
    let u: Vec<f64> = clients.iter().map(|c| c.utility).collect();
    normalized_utilities(&u, pi).values
}

#[test]
fn lemma1_rate_converges_to_mean() {
    let pi = vec![0.1, 0.3, 0.6, 0.95];
    let mu = vec![0.2, 0.5, 0.4, 0.8];
    let bound = 1.0;
    let model = UtilityModel::new(mu.clone(), bound, UtilityNoise::Constant).unwrap();
    let rounds = 10_000;
    let seeds = 40;
    let ok = (0..seeds)
        .filter(|&s| {
            lemma1_run(&pi, &model, rounds, s)
                .iter()
                .zip(&mu)
                .all(|(v, m)| (v / rounds as f64 - m).abs() <= 0.05 * bound)
        })
        .count();
    assert!(ok as f64 >= 0.95 * seeds as f64, "{ok}/{seeds}");
}

#[test]
fn lemma1_rate_with_noisy_increments() {
    let pi = vec![0.2, 0.7];
    let mu = vec![0.5, 0.5];
    let model = UtilityModel::new(
        mu.clone(),
        1.0,
        UtilityNoise::UniformBounded { spread: 0.4 },
    )
    .unwrap();
    let v = lemma1_run(&pi, &model, 10_000, 8);
    for (v, m) in v.iter().zip(&mu) {
        assert!((v / 10_000.0 - m).abs() <= 0.05);
    }
}

#[test]
fn homogeneous_means_shrink_relative_variance() {
    // V_T grows like T while T^2 grows quadratically, so the ratio at
    // T = 1e4 against T = 1e2 concentrates near 1e-2; averaging seeds
    // keeps the check away from single-path noise
    let pi = vec![0.1, 0.25, 0.5, 0.75, 0.9];
    let model = UtilityModel::new(vec![0.5; 5], 1.0, UtilityNoise::Constant).unwrap();
    let seeds = 200u64;
    let mean_scaled = |t: usize| {
        (0..seeds)
            .map(|s| fairness_variance(&lemma1_run(&pi, &model, t, s)) / (t * t) as f64)
            .sum::<f64>()
            / seeds as f64
    };
    let ratio = mean_scaled(10_000) / mean_scaled(100);
    assert!(ratio < 0.015 && ratio > 0.005, "ratio {ratio}");
}

#[test]
fn appendix_a_deviation_within_uniform_bound_example() {
    let pi = [0.2, 0.5, 1.0];
    let mu = [0.3, 0.9, 0.1];
    let p = inverse_availability_prediction(&pi, &mu, 1000, 1.0).unwrap();
    let c: f64 = pi.iter().map(|p| 1.0 / p).sum();
    for k in 0..3 {
        let oracle = 1000.0 * mu[k] / (c * pi[k]);
        assert!((p.expected[k] - oracle).abs() < 1e-9);
        assert!(p.deviation[k] <= p.uniform_bound);
    }
}

#[test]
fn idealized_selection_monte_carlo_matches_prediction() {
    let pi = [0.3, 0.6, 0.9];
    let mu = [0.5, 0.2, 0.8];
    let rounds = 2_000;
    let reps = 200;
    let c: f64 = pi.iter().map(|p| 1.0 / p).sum();
    let mut acc = [0.0; 3];
    for r in 0..reps {
        let mut rng = stream_rng(r, 9);
        for _ in 0..rounds {
            for k in 0..3 {
                if rng.gen::<f64>() < pi[k] && rng.gen::<f64>() < (1.0 / pi[k]) / c {
                    acc[k] += mu[k] / pi[k];
                }
            }
        }
    }
    let pred = inverse_availability_prediction(&pi, &mu, rounds, 1.0).unwrap();
    for k in 0..3 {
        let mc = acc[k] / reps as f64;
        assert!(
            (mc - pred.expected[k]).abs() <= 0.02 * pred.expected[k],
            "client {k}: {mc} vs {}",
            pred.expected[k]
        );
    }
}

proptest! {
    #[test]
    fn deviation_never_exceeds_uniform_bound(
        pairs in prop::collection::vec((0.01f64..=1.0, 0.0f64..=1.0), 1..30),
        horizon in 1usize..100_000,
        bound in 1.0f64..5.0,
    ) {
        let pi: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mu: Vec<f64> = pairs.iter().map(|p| p.1 * bound).collect();
        let p = inverse_availability_prediction(&pi, &mu, horizon, bound).unwrap();
        for d in &p.deviation {
            prop_assert!(*d <= p.uniform_bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn accrual_conserves_rounds(seq in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let mut s = ClientState::new(0);
        for (t, &(a, sel)) in seq.iter().enumerate() {
            let r = s.accrue(t + 1, a, sel && a, 0.5, AccrualMode::SelectedAndAvailable);
            prop_assert!(r.is_ok());
        }
        prop_assert_eq!(s.rounds_seen(), seq.len() as u64);
        prop_assert_eq!(s.available_rounds, s.selections + s.unselected);
    }
}
