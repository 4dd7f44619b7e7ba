//! Cached client signals standing in for unavailable clients, weighted by
//! an exponentially decaying reliability factor.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::vector::{axpy, check_dim, norm};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    pub eta0: f64,
    pub decay: f64,
    /// Assumed uniform bound on `||surrogate - truth||`.
    pub error_bound: f64,
}

impl SurrogateConfig {
    pub fn new(eta0: f64, decay: f64, error_bound: f64) -> Result<Self> {
        if !(eta0 > 0.0) {
            return Err(invalid("eta0", "eta0 must be positive"));
        }
        if !(decay >= 0.0) {
            return Err(invalid("decay", "decay must be non-negative"));
        }
        if !(error_bound >= 0.0) {
            return Err(invalid("error_bound", "error bound must be non-negative"));
        }
        Ok(Self {
            eta0,
            decay,
            error_bound,
        })
    }
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            eta0: 1.0,
            decay: 0.5,
            error_bound: 0.0,
        }
    }
}

/// `eta = eta0 * exp(-decay * staleness)`, kept strictly positive when the
/// exponential underflows.
pub fn reliability(staleness: u64, cfg: &SurrogateConfig) -> f64 {
    (cfg.eta0 * libm::exp(-cfg.decay * staleness as f64)).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEntry {
    pub client: usize,
    pub signal: Vec<f64>,
    pub captured_at: usize,
    /// Utility (loss reduction) observed with the signal.
    pub loss: f64,
}

impl SurrogateEntry {
    pub fn staleness(&self, round: usize) -> u64 {
        round.saturating_sub(self.captured_at) as u64
    }
}

/// Last real contribution per client.
#[derive(Debug, Clone, Default)]
pub struct SurrogateCache {
    entries: Vec<Option<SurrogateEntry>>,
}

impl SurrogateCache {
    pub fn new(n_clients: usize) -> Self {
        Self {
            entries: vec![None; n_clients],
        }
    }

    pub fn store(&mut self, client: usize, signal: Vec<f64>, round: usize, loss: f64) {
        self.entries[client] = Some(SurrogateEntry {
            client,
            signal,
            captured_at: round,
            loss,
        });
    }

    pub fn get(&self, client: usize) -> Option<&SurrogateEntry> {
        self.entries[client].as_ref()
    }

    pub fn len(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weighted signal entering an aggregate.
#[derive(Debug, Clone, Copy)]
pub struct Weighted<'a> {
    pub weight: f64,
    pub signal: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateAggregate {
    pub aggregate: Vec<f64>,
    /// Weight mass carried by surrogates.
    pub contribution: f64,
}

/// `sum_active beta_k F_k + sum_missing beta_k' F~_k'`.
pub fn aggregate_with_surrogates(
    dim: usize,
    active: &[Weighted<'_>],
    missing: &[Weighted<'_>],
) -> Result<SurrogateAggregate> {
    let mut aggregate = vec![0.0; dim];
    for w in active.iter().chain(missing) {
        check_dim(dim, w.signal.len())?;
        if !(w.weight >= 0.0) {
            return Err(invalid(
                "weight",
                "aggregation weights must be non-negative",
            ));
        }
        axpy(&mut aggregate, w.weight, w.signal);
    }
    let contribution = missing.iter().map(|w| w.weight).sum();
    Ok(SurrogateAggregate {
        aggregate,
        contribution,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasReport {
    /// `||sum beta (F~ - F)||`.
    pub bias_norm: f64,
    /// `error_bound * sum beta`.
    pub deterministic_bound: f64,
    /// `error_bound * eta0 * sum exp(-decay * staleness)`.
    pub exponential_bound: f64,
}

/// Surrogate bias against the (simulation-only) true signals.
pub fn bias_and_bound(
    truth: &[&[f64]],
    surrogates: &[&[f64]],
    weights: &[f64],
    staleness: &[u64],
    cfg: &SurrogateConfig,
) -> Result<BiasReport> {
    check_dim(truth.len(), surrogates.len())?;
    check_dim(truth.len(), weights.len())?;
    check_dim(truth.len(), staleness.len())?;
    let dim = truth.first().map_or(0, |t| t.len());
    let mut bias = vec![0.0; dim];
    for ((t, s), &b) in truth.iter().zip(surrogates).zip(weights) {
        check_dim(dim, t.len())?;
        check_dim(dim, s.len())?;
        axpy(&mut bias, b, s);
        axpy(&mut bias, -b, t);
    }
    let exp_sum: f64 = staleness
        .iter()
        .map(|&d| libm::exp(-cfg.decay * d as f64))
        .sum();
    Ok(BiasReport {
        bias_norm: norm(&bias),
        deterministic_bound: cfg.error_bound * weights.iter().sum::<f64>(),
        exponential_bound: cfg.error_bound * cfg.eta0 * exp_sum,
    })
}

/// Upper bound on `|f(w - gamma G~) - f(w - gamma G)|` for an `L`-smooth `f`.
pub fn descent_gap_bound(
    gamma: f64,
    smoothness: f64,
    grad_norm: f64,
    agg_norm: f64,
    bias_norm: f64,
) -> f64 {
    gamma * grad_norm * bias_norm
        + smoothness * gamma * gamma * agg_norm * bias_norm
        + 0.5 * smoothness * gamma * gamma * bias_norm * bias_norm
}
