use fairfed_core::metrics::{gini, jain, selection_gap, utility_cv, SelectionGapVariant};
use proptest::prelude::*;

fn pairwise_gini(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let s: f64 = x
        .iter()
        .flat_map(|a| x.iter().map(move |b| (a - b).abs()))
        .sum();
    s / (2.0 * n * n * mean)
}

#[test]
fn hand_values() {
    assert!((jain(&[1.0, 2.0, 3.0]) - 0.857143).abs() < 1e-4);
    assert!((gini(&[1.0, 2.0, 3.0]).unwrap() - 0.2222).abs() < 1e-4);
    assert!((utility_cv(&[1.0, 2.0, 3.0], 0.0) - 0.40825).abs() < 1e-4);
    assert!((pairwise_gini(&[1.0, 2.0, 3.0]) - gini(&[1.0, 2.0, 3.0]).unwrap()).abs() < 1e-12);
}

#[test]
fn gap_variants_on_listed_cases() {
    use SelectionGapVariant::*;
    assert_eq!(selection_gap(&[10, 0], 1, 10, FrequencyShare), 1.0);
    assert_eq!(selection_gap(&[10, 0], 1, 10, PaperLiteral), 1.0);
    assert_eq!(selection_gap(&[5, 5], 1, 10, FrequencyShare), 0.0);
    assert_eq!(selection_gap(&[5, 5], 1, 10, PaperLiteral), 0.0);
    // m T / N = 20 per client
    assert_eq!(selection_gap(&[20; 5], 4, 25, FrequencyShare), 0.0);
    assert_eq!(selection_gap(&[20; 5], 4, 25, PaperLiteral), 0.0);
}

proptest! {
    #[test]
    fn gini_matches_pairwise_oracle(x in prop::collection::vec(0.0f64..100.0, 1..40)) {
        prop_assume!(x.iter().sum::<f64>() > 0.0);
        let g = gini(&x).unwrap();
        prop_assert!((g - pairwise_gini(&x)).abs() < 1e-9);
        let n = x.len() as f64;
        prop_assert!(g >= -1e-12 && g <= 1.0 - 1.0 / n + 1e-12);
    }

    #[test]
    fn scale_invariance(x in prop::collection::vec(0.01f64..100.0, 1..40), c in 1e-3f64..1e3) {
        let y: Vec<f64> = x.iter().map(|v| v * c).collect();
        prop_assert!((jain(&x) - jain(&y)).abs() < 1e-12);
        prop_assert!((gini(&x).unwrap() - gini(&y).unwrap()).abs() < 1e-9);
        prop_assert!((utility_cv(&x, 0.0) - utility_cv(&y, 0.0)).abs() < 1e-9);
    }

    #[test]
    fn jain_range_and_extremes(x in prop::collection::vec(0.0f64..10.0, 1..30)) {
        let n = x.len() as f64;
        let j = jain(&x);
        prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
        let nonzero = x.iter().filter(|v| **v > 0.0).count();
        if nonzero > 0 {
            prop_assert_eq!((j - 1.0 / n).abs() < 1e-12, nonzero == 1);
        }
    }

    #[test]
    fn equal_entries_have_zero_gini(v in 0.1f64..50.0, n in 1usize..30) {
        prop_assert_eq!(gini(&vec![v; n]).unwrap(), 0.0);
    }

    #[test]
    fn gap_zero_iff_uniform(counts in prop::collection::vec(0u64..8, 1..10), m in 1usize..4) {
        let n = counts.len();
        let t = 12 * n;
        // scale counts so a uniform vector is representable: m T / N = 12 m
        let fair = (12 * m) as u64;
        let scaled: Vec<u64> = counts.iter().map(|c| c * fair / 4).collect();
        for v in [SelectionGapVariant::PaperLiteral, SelectionGapVariant::FrequencyShare] {
            let g = selection_gap(&scaled, m, t, v);
            prop_assert_eq!(g.abs() < 1e-12, scaled.iter().all(|&c| c == fair));
            prop_assert_eq!(selection_gap(&vec![fair; n], m, t, v), 0.0);
        }
    }
}
