//! Per-client utility ledger, availability normalization and the
//! inverse-availability deviation prediction.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::invalid;
use crate::{Error, Result};

/// Which rounds credit a client's utility increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AccrualMode {
    /// `u += A * delta`: every available round counts.
    AvailabilityOnly,
    /// `u += A * S * delta`: only rounds where the client trained.
    #[default]
    SelectedAndAvailable,
}

/// Which availability figure divides cumulative utility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationSource {
    TruePi,
    #[default]
    EstimatedPi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    /// Cumulative utility `u_k`.
    pub utility: f64,
    /// Rounds in which the client was unavailable.
    pub missed: u64,
    pub available_rounds: u64,
    /// Available rounds in which the client was not chosen.
    pub unselected: u64,
    pub selections: u64,
    pub last_participation: Option<usize>,
    pub pi_hat: f64,
}

impl ClientState {
    pub fn new(id: usize) -> Self {
        Self {
            id,
            utility: 0.0,
            missed: 0,
            available_rounds: 0,
            unselected: 0,
            selections: 0,
            last_participation: None,
            pi_hat: 1.0,
        }
    }

    /// Books round `round` for this client.
    pub fn accrue(
        &mut self,
        round: usize,
        available: bool,
        selected: bool,
        delta: f64,
        mode: AccrualMode,
    ) -> Result<()> {
        if selected && !available {
            return Err(Error::ContractViolation(
                "client selected while unavailable",
            ));
        }
        if !available {
            self.missed += 1;
            return Ok(());
        }
        self.available_rounds += 1;
        if selected {
            self.selections += 1;
            self.last_participation = Some(round);
        } else {
            self.unselected += 1;
        }
        let credited = match mode {
            AccrualMode::AvailabilityOnly => true,
            AccrualMode::SelectedAndAvailable => selected,
        };
        if credited {
            self.utility += delta;
        }
        Ok(())
    }

    /// Adds utility outside the accrual rule (surrogate credit).
    pub fn credit(&mut self, amount: f64) {
        self.utility += amount;
    }

    pub fn rounds_seen(&self) -> u64 {
        self.missed + self.available_rounds
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilityNoise {
    /// `delta = mu_k`.
    Constant,
    /// Uniform on `[max(0, mu_k - spread), min(M, mu_k + spread)]`.
    UniformBounded { spread: f64 },
    /// Increments come from a training workload.
    LossDelta,
}

/// Synthetic per-round utility increments with means `mu_k` bounded by `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityModel {
    mean: Vec<f64>,
    bound: f64,
    noise: UtilityNoise,
}

impl UtilityModel {
    pub fn new(mean: Vec<f64>, bound: f64, noise: UtilityNoise) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(invalid("bound", "utility bound M must be positive"));
        }
        if let Some(m) = mean.iter().find(|m| !(**m >= 0.0 && **m <= bound)) {
            return Err(invalid("mean", alloc::format!("mean {m} outside [0, M]")));
        }
        if let UtilityNoise::UniformBounded { spread } = noise {
            if !(spread >= 0.0) {
                return Err(invalid("spread", "spread must be non-negative"));
            }
            // a clipped interval that is not centered on mu would bias the mean
            for &m in &mean {
                if m - spread < 0.0 || m + spread > bound {
                    return Err(invalid(
                        "spread",
                        alloc::format!("interval around {m} leaves [0, {bound}]"),
                    ));
                }
            }
        }
        Ok(Self { mean, bound, noise })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn noise(&self) -> UtilityNoise {
        self.noise
    }

    /// Draws `Delta F_k(t)`, `None` for [`UtilityNoise::LossDelta`].
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Option<f64> {
        let mu = self.mean[k];
        match self.noise {
            UtilityNoise::Constant => Some(mu),
            UtilityNoise::UniformBounded { spread } => {
                let lo = (mu - spread).max(0.0);
                let hi = (mu + spread).min(self.bound);
                Some(lo + (hi - lo) * rng.gen::<f64>())
            }
            UtilityNoise::LossDelta => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedUtilities {
    pub values: Vec<f64>,
    pub mean: f64,
}

/// `u_k / pi_k` and its across-client mean.
pub fn normalized_utilities(utilities: &[f64], pi: &[f64]) -> NormalizedUtilities {
    debug_assert_eq!(utilities.len(), pi.len());
    let values: Vec<f64> = utilities.iter().zip(pi).map(|(u, p)| u / p).collect();
    let mean = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    NormalizedUtilities { values, mean }
}

/// Population variance `V_T` of normalized utilities.
pub fn fairness_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Closed-form expectations under idealized inverse-availability selection,
/// where an available client `k` is chosen with probability `(1/pi_k) / C`
/// and `C = sum_j 1/pi_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationPrediction {
    pub normalizer: f64,
    /// `E[u_k / pi_k] = T mu_k / (C pi_k)`.
    pub expected: Vec<f64>,
    pub mean: f64,
    /// `(T / C) |mu_k / pi_k - mean_j(mu_j / pi_j)|`.
    pub deviation: Vec<f64>,
    /// `2 T M / (C pi_min)`.
    pub uniform_bound: f64,
}

pub fn inverse_availability_prediction(
    pi: &[f64],
    mu: &[f64],
    horizon: usize,
    utility_bound: f64,
) -> Result<DeviationPrediction> {
    if pi.is_empty() || pi.len() != mu.len() {
        return Err(invalid("pi", "need one positive pi and one mu per client"));
    }
    if pi.iter().any(|p| !(*p > 0.0)) {
        return Err(invalid("pi", "availability means must be positive"));
    }
    let t = horizon as f64;
    let c: f64 = pi.iter().map(|p| 1.0 / p).sum();
    let ratios: Vec<f64> = mu.iter().zip(pi).map(|(m, p)| m / p).collect();
    let ratio_mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let expected: Vec<f64> = ratios.iter().map(|r| t * r / c).collect();
    let deviation = ratios
        .iter()
        .map(|r| t / c * (r - ratio_mean).abs())
        .collect();
    let pi_min = pi.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DeviationPrediction {
        normalizer: c,
        mean: t * ratio_mean / c,
        expected,
        deviation,
        uniform_bound: 2.0 * t * utility_bound / (c * pi_min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn unavailable_round_only_counts_a_miss() {
        for mode in [
            AccrualMode::AvailabilityOnly,
            AccrualMode::SelectedAndAvailable,
        ] {
            let mut s = ClientState::new(0);
            s.utility = 5.0;
            s.accrue(1, false, false, 2.0, mode).unwrap();
            assert_eq!((s.utility, s.missed, s.selections), (5.0, 1, 0));
        }
    }

    #[test]
    fn selected_round_accrues() {
        let mut s = ClientState::new(0);
        s.utility = 5.0;
        s.accrue(3, true, true, 2.0, AccrualMode::SelectedAndAvailable)
            .unwrap();
        assert_eq!(
            (s.utility, s.selections, s.last_participation),
            (7.0, 1, Some(3))
        );
    }

    #[test]
    fn unselected_round_accrues_only_in_availability_mode() {
        let mut s = ClientState::new(0);
        s.utility = 5.0;
        s.accrue(1, true, false, 2.0, AccrualMode::SelectedAndAvailable)
            .unwrap();
        assert_eq!(s.utility, 5.0);
        s.accrue(2, true, false, 2.0, AccrualMode::AvailabilityOnly)
            .unwrap();
        assert_eq!(s.utility, 7.0);
        assert_eq!(s.unselected, 2);
    }

    #[test]
    fn selected_but_unavailable_is_rejected() {
        let mut s = ClientState::new(0);
        assert!(matches!(
            s.accrue(1, false, true, 1.0, AccrualMode::SelectedAndAvailable),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn normalization_examples() {
        let n = normalized_utilities(&[2.0, 3.0], &[1.0, 1.0]);
        assert_eq!((n.values.as_slice(), n.mean), (&[2.0, 3.0][..], 2.5));
        let n = normalized_utilities(&[1.0, 1.0], &[0.5, 1.0]);
        assert_eq!((n.values.as_slice(), n.mean), (&[2.0, 1.0][..], 1.5));
        let n = normalized_utilities(&[0.0, 0.0], &[0.3, 0.9]);
        assert_eq!((n.values.as_slice(), n.mean), (&[0.0, 0.0][..], 0.0));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(fairness_variance(&[4.0, 4.0, 4.0]), 0.0);
        assert_eq!(fairness_variance(&[0.0, 2.0]), 1.0);
        assert!((fairness_variance(&[1.0, 2.0, 3.0]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn prediction_two_clients() {
        let p = inverse_availability_prediction(&[0.5, 1.0], &[1.0, 1.0], 100, 1.0).unwrap();
        assert!((p.normalizer - 3.0).abs() < 1e-12);
        assert!((p.expected[0] - 200.0 / 3.0).abs() < 1e-9);
        assert!((p.expected[1] - 100.0 / 3.0).abs() < 1e-9);
        assert!((p.uniform_bound - 2.0 * 100.0 / (3.0 * 0.5)).abs() < 1e-9);
    }

    #[test]
    fn prediction_symmetric_and_zero_cases() {
        let p = inverse_availability_prediction(&[0.4; 3], &[0.7; 3], 50, 1.0).unwrap();
        assert!(p.deviation.iter().all(|d| d.abs() < 1e-12));
        let p = inverse_availability_prediction(&[0.2, 0.8], &[0.0, 0.0], 50, 2.0).unwrap();
        assert!(p.expected.iter().all(|e| *e == 0.0));
        assert!(p.uniform_bound > 0.0);
    }

    #[test]
    fn utility_model_validation() {
        assert!(UtilityModel::new(vec![0.5], 0.0, UtilityNoise::Constant).is_err());
        assert!(UtilityModel::new(vec![1.5], 1.0, UtilityNoise::Constant).is_err());
        assert!(
            UtilityModel::new(vec![0.5], 1.0, UtilityNoise::UniformBounded { spread: 0.6 })
                .is_err()
        );
        assert!(
            UtilityModel::new(vec![0.5], 1.0, UtilityNoise::UniformBounded { spread: 0.5 }).is_ok()
        );
    }
}
