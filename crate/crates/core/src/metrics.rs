//! Fairness metrics over per-client performance, normalized utilities and
//! selection counts.

use alloc::vec::Vec;

use crate::{Error, Result};

pub const DEFAULT_EPSILON_CV: f64 = 1e-8;

/// `(sum v)^2 / (N * sum v^2)`; an all-zero vector counts as perfectly equal.
pub fn jain(values: &[f64]) -> f64 {
    debug_assert!(values.iter().all(|v| *v >= 0.0));
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if values.is_empty() || sq == 0.0 {
        return 1.0;
    }
    sum * sum / (values.len() as f64 * sq)
}

/// Population standard deviation over `mean + epsilon_cv`.
pub fn utility_cv(values: &[f64], epsilon_cv: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    libm::sqrt(var) / (mean + epsilon_cv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionGapVariant {
    /// `(1/T) sum_k |S_k / m - T / N|`.
    PaperLiteral,
    /// `sum_k |S_k / (m T) - 1 / N|`.
    FrequencyShare,
}

pub fn selection_gap(
    counts: &[u64],
    per_round: usize,
    rounds: usize,
    variant: SelectionGapVariant,
) -> f64 {
    let (m, t, n) = (per_round as f64, rounds as f64, counts.len() as f64);
    match variant {
        SelectionGapVariant::PaperLiteral => {
            counts
                .iter()
                .map(|&s| (s as f64 / m - t / n).abs())
                .sum::<f64>()
                / t
        }
        SelectionGapVariant::FrequencyShare => counts
            .iter()
            .map(|&s| (s as f64 / (m * t) - 1.0 / n).abs())
            .sum(),
    }
}

/// Gini coefficient `sum_ij |x_i - x_j| / (2 N^2 mean)`, via the sorted form.
pub fn gini(counts: &[f64]) -> Result<f64> {
    let total: f64 = counts.iter().sum();
    if counts.is_empty() || !(total > 0.0) {
        return Err(Error::UndefinedInput("gini of an all-zero vector"));
    }
    let mut x: Vec<f64> = counts.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    // the rank coefficients sum to zero, so shifting by the minimum is exact for equal entries
    let lo = x[0];
    let weighted: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * (i as f64 + 1.0) - n - 1.0) * (v - lo))
        .sum();
    Ok(weighted / (n * total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    Fair,
    Vanilla,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Fair => "fair",
            Arm::Vanilla => "vanilla",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fair" => Some(Arm::Fair),
            "vanilla" => Some(Arm::Vanilla),
            _ => None,
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub arm: Arm,
    pub performance: f64,
    pub fairness_variance: f64,
    pub jain_perf: f64,
    pub jain_utility: f64,
    pub utility_cv: f64,
    pub selgap_paper: f64,
    pub selgap_share: f64,
    pub gini: f64,
    pub surrogate_contribution: f64,
    pub n_available: usize,
}

impl MetricsRow {
    pub const HEADER: [&'static str; 12] = [
        "round",
        "arm",
        "performance",
        "fairness_variance",
        "jain_perf",
        "jain_utility",
        "utility_cv",
        "selgap_paper",
        "selgap_share",
        "gini",
        "surrogate_contribution",
        "n_available",
    ];

    /// Float columns in header order.
    pub fn values(&self) -> [f64; 9] {
        [
            self.performance,
            self.fairness_variance,
            self.jain_perf,
            self.jain_utility,
            self.utility_cv,
            self.selgap_paper,
            self.selgap_share,
            self.gini,
            self.surrogate_contribution,
        ]
    }
}
