//! Client-selection policies and their long-run statistics.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::error::invalid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Uniform among available clients.
    Random,
    /// Weight `1 / pi_hat_k`.
    InverseAvailability,
    /// Weight `alpha_k / (pi_hat_k + eps) * (1 + lambda * missed_k)`.
    ReactiveReweight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Draw one client at a time proportional to weight, remove it, renormalize.
    Sequential,
    /// Inclusion probability `min(1, c * w_k)` with `sum = m`, realized by
    /// systematic sampling over a shuffled order.
    InclusionProportional,
    /// The `m` largest weights, ties to the lowest client id.
    TopK,
}

/// What `missed_k` counts in the reactive weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissedCounter {
    #[default]
    Unavailable,
    /// Ablation only: available rounds where the client was passed over.
    Unselected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPolicy {
    kind: PolicyKind,
    per_round: usize,
    mode: SamplingMode,
    alpha: Vec<f64>,
    lambda: f64,
    epsilon: f64,
    missed_counter: MissedCounter,
}

impl SelectionPolicy {
    pub fn new(
        kind: PolicyKind,
        per_round: usize,
        mode: SamplingMode,
        n_clients: usize,
    ) -> Result<Self> {
        if per_round == 0 || per_round > n_clients {
            return Err(invalid(
                "per_round",
                alloc::format!("need 1 <= m <= N, got m = {per_round}, N = {n_clients}"),
            ));
        }
        Ok(Self {
            kind,
            per_round,
            mode,
            alpha: vec![1.0; n_clients],
            lambda: 0.0,
            epsilon: 0.01,
            missed_counter: MissedCounter::Unavailable,
        })
    }

    pub fn random(per_round: usize, n_clients: usize) -> Result<Self> {
        Self::new(
            PolicyKind::Random,
            per_round,
            SamplingMode::Sequential,
            n_clients,
        )
    }

    /// Reactive parameters; `alpha` must hold one positive entry per client.
    pub fn with_reactive(mut self, alpha: Vec<f64>, lambda: f64, epsilon: f64) -> Result<Self> {
        if alpha.len() != self.alpha.len() {
            return Err(invalid("alpha", "one alpha per client"));
        }
        if alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(invalid("alpha", "alpha must be positive"));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda", "lambda must be non-negative"));
        }
        if !(epsilon > 0.0) {
            return Err(invalid("epsilon", "epsilon must be positive"));
        }
        self.alpha = alpha;
        self.lambda = lambda;
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_missed_counter(mut self, counter: MissedCounter) -> Self {
        self.missed_counter = counter;
        self
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn per_round(&self) -> usize {
        self.per_round
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn missed_counter(&self) -> MissedCounter {
        self.missed_counter
    }

    /// Raw, strictly positive weight per client.
    pub fn weights(&self, pi_hat: &[f64], missed: &[u64]) -> Vec<f64> {
        match self.kind {
            PolicyKind::Random => vec![1.0; pi_hat.len()],
            PolicyKind::InverseAvailability => pi_hat.iter().map(|p| 1.0 / p).collect(),
            PolicyKind::ReactiveReweight => pi_hat
                .iter()
                .zip(missed)
                .zip(&self.alpha)
                .map(|((p, &m), a)| a / (p + self.epsilon) * (1.0 + self.lambda * m as f64))
                .collect(),
        }
    }

    /// Chooses up to `m` of the `available` client ids (ascending output).
    ///
    /// `weights` is indexed by client id.
    pub fn select<R: Rng + ?Sized>(
        &self,
        available: &[usize],
        weights: &[f64],
        rng: &mut R,
    ) -> Vec<usize> {
        if available.is_empty() {
            return Vec::new();
        }
        let m = self.per_round.min(available.len());
        let mut chosen = if self.kind == PolicyKind::Random {
            uniform_sample(available, m, rng)
        } else {
            let w: Vec<f64> = available.iter().map(|&k| weights[k]).collect();
            match self.mode {
                SamplingMode::Sequential => sequential_sample(available, &w, m, rng),
                SamplingMode::InclusionProportional => systematic_sample(available, &w, m, rng),
                SamplingMode::TopK => top_k(available, &w, m),
            }
        };
        chosen.sort_unstable();
        chosen
    }
}

pub fn uniform_sample<R: Rng + ?Sized>(available: &[usize], m: usize, rng: &mut R) -> Vec<usize> {
    let m = m.min(available.len());
    index::sample(rng, available.len(), m)
        .into_iter()
        .map(|i| available[i])
        .collect()
}

fn sequential_sample<R: Rng + ?Sized>(
    available: &[usize],
    weights: &[f64],
    m: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut pool: Vec<(usize, f64)> = available
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .collect();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = pool.len() - 1;
        for (i, (_, w)) in pool.iter().enumerate() {
            acc += w;
            if target < acc {
                pick = i;
                break;
            }
        }
        out.push(pool.swap_remove(pick).0);
    }
    out
}

/// Inclusion probabilities proportional to `weights`, capped at one, summing to `m`.
pub fn inclusion_probabilities(weights: &[f64], m: usize) -> Vec<f64> {
    let n = weights.len();
    let m = m.min(n);
    let mut probs = vec![0.0; n];
    let mut capped = vec![false; n];
    loop {
        let remaining = (m - capped.iter().filter(|c| **c).count()) as f64;
        let free_mass: f64 = weights
            .iter()
            .zip(&capped)
            .filter(|(_, c)| !**c)
            .map(|(w, _)| w)
            .sum();
        let mut newly_capped = false;
        for i in 0..n {
            if capped[i] {
                probs[i] = 1.0;
                continue;
            }
            probs[i] = if free_mass > 0.0 {
                remaining * weights[i] / free_mass
            } else {
                0.0
            };
            if probs[i] >= 1.0 {
                capped[i] = true;
                newly_capped = true;
            }
        }
        if !newly_capped {
            return probs;
        }
    }
}

fn systematic_sample<R: Rng + ?Sized>(
    available: &[usize],
    weights: &[f64],
    m: usize,
    rng: &mut R,
) -> Vec<usize> {
    let probs = inclusion_probabilities(weights, m);
    let order = index::sample(rng, available.len(), available.len()).into_vec();
    let offset = rng.gen::<f64>();
    let mut out = Vec::with_capacity(m);
    let mut cum = 0.0;
    let mut next = offset;
    for &i in &order {
        cum += probs[i];
        // a probability-one client covers a full unit interval and always receives a point
        if probs[i] >= 1.0 || (next < cum && out.len() < m) {
            out.push(available[i]);
            next += 1.0;
            while next < cum {
                next += 1.0;
            }
        }
    }
    // rounding in the cumulative sum may leave the final point just past the end
    if out.len() < m {
        for &i in order.iter().rev() {
            if out.len() == m {
                break;
            }
            if !out.contains(&available[i]) && probs[i] > 0.0 {
                out.push(available[i]);
            }
        }
    }
    out
}

fn top_k(available: &[usize], weights: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..available.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .total_cmp(&weights[a])
            .then(available[a].cmp(&available[b]))
    });
    order.into_iter().take(m).map(|i| available[i]).collect()
}

/// `w_k / sum_j w_j`.
pub fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::EmptySelection);
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedInput("weights need positive mass"));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Long-run normalized reactive weights for true availability `pi`.
pub fn asymptotic_weight_limit(
    pi: &[f64],
    alpha: &[f64],
    lambda: f64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if pi.len() != alpha.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            found: alpha.len(),
        });
    }
    let raw: Vec<f64> = if lambda > 0.0 {
        pi.iter()
            .zip(alpha)
            .map(|(p, a)| a * (1.0 - p) / (p + epsilon))
            .collect()
    } else {
        pi.iter()
            .zip(alpha)
            .map(|(p, a)| a / (p + epsilon))
            .collect()
    };
    if lambda > 0.0 && !(raw.iter().sum::<f64>() > 0.0) {
        return Err(Error::DegenerateLimit);
    }
    normalize(&raw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStats {
    /// `S_k / T`.
    pub frequencies: Vec<f64>,
    /// `|S_k / T - m / N|`.
    pub deviations: Vec<f64>,
    /// Population standard deviation of the frequencies.
    pub std_dev: f64,
    pub max_deviation: f64,
}

pub fn selection_stats(
    counts: &[u64],
    rounds: usize,
    per_round: usize,
    n_clients: usize,
) -> SelectionStats {
    let t = rounds.max(1) as f64;
    let target = per_round as f64 / n_clients as f64;
    let frequencies: Vec<f64> = counts.iter().map(|&s| s as f64 / t).collect();
    let deviations: Vec<f64> = frequencies.iter().map(|f| (f - target).abs()).collect();
    let n = frequencies.len().max(1) as f64;
    let mean = frequencies.iter().sum::<f64>() / n;
    let std_dev = libm::sqrt(
        frequencies
            .iter()
            .map(|f| (f - mean) * (f - mean))
            .sum::<f64>()
            / n,
    );
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    SelectionStats {
        frequencies,
        deviations,
        std_dev,
        max_deviation,
    }
}
