//! Dual-arm simulation: a fair scheduler and a uniform vanilla scheduler
//! driven by one shared availability realization per round.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::availability::{
    AvailabilityEstimator, AvailabilityModel, AvailabilityProcess, EstimatorMode,
};
use crate::error::invalid;
use crate::metrics::{self, Arm, MetricsRow, SelectionGapVariant};
use crate::selection::{uniform_sample, MissedCounter, SelectionPolicy};
use crate::surrogate::{
    aggregate_with_surrogates, reliability, SurrogateCache, SurrogateConfig, Weighted,
};
use crate::toyfl::{self, DescentRecord, QuadraticClient, TrainerConfig, WeightedObjective};
use crate::utility::{
    self, AccrualMode, ClientState, NormalizationSource, UtilityModel, UtilityNoise,
};
use crate::{stream_rng, Result};

pub const STREAM_AVAILABILITY: u64 = 0;
pub const STREAM_FAIR_SELECTION: u64 = 1;
pub const STREAM_VANILLA_SELECTION: u64 = 2;
pub const STREAM_FAIR_UTILITY: u64 = 3;
pub const STREAM_VANILLA_UTILITY: u64 = 4;
pub const STREAM_WORKLOAD: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticWorkload {
    pub dim: usize,
    /// Half-width of the box the client optima are drawn from.
    pub spread: f64,
    pub curvature: (f64, f64),
    pub trainer: TrainerConfig,
    /// Server step `gamma` in `w <- w - gamma * G~`.
    pub server_step: f64,
    /// Clip `M` on per-round loss reductions.
    pub utility_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Synthetic(UtilityModel),
    Quadratic(QuadraticWorkload),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSettings {
    pub config: SurrogateConfig,
    /// Credit `eta * cached utility` to a missing client's ledger.
    pub utility_credit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub clients: usize,
    pub per_round: usize,
    pub rounds: usize,
    pub seed: u64,
    pub availability: AvailabilityModel,
    pub estimator: EstimatorMode,
    pub pi_floor: f64,
    /// Fair-arm policy; the vanilla arm is always uniform.
    pub policy: SelectionPolicy,
    /// Availability figure fed to the fair-arm weights.
    pub weight_pi: NormalizationSource,
    pub workload: Workload,
    pub accrual: AccrualMode,
    pub normalization: NormalizationSource,
    /// Fair arm only.
    pub surrogate: Option<SurrogateSettings>,
    pub epsilon_cv: f64,
    /// Keep the fair arm's per-round descent records (quadratic workload).
    pub record_descent: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.clients;
        if self.per_round == 0 || self.per_round > n {
            return Err(invalid(
                "per_round",
                alloc::format!("need 1 <= m <= N, got m = {}, N = {n}", self.per_round),
            ));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "need at least one round"));
        }
        if self.availability.n_clients() != n {
            return Err(invalid(
                "availability",
                "availability model size differs from N",
            ));
        }
        if let Some(h) = self.availability.horizon() {
            if h < self.rounds {
                return Err(invalid(
                    "availability",
                    alloc::format!("trace covers {h} rounds, T = {}", self.rounds),
                ));
            }
        }
        if self.policy.per_round() != self.per_round || self.policy.alpha().len() != n {
            return Err(invalid("policy", "policy was built for a different N or m"));
        }
        // checked here so a bad floor is reported as a config error
        AvailabilityEstimator::new(n, self.estimator, self.pi_floor)?;
        match &self.workload {
            Workload::Synthetic(model) => {
                if model.mean().len() != n {
                    return Err(invalid("utility", "need one utility mean per client"));
                }
                if model.noise() == UtilityNoise::LossDelta {
                    return Err(invalid(
                        "utility",
                        "loss-delta utilities need the quadratic workload",
                    ));
                }
            }
            Workload::Quadratic(q) => {
                if q.dim == 0 {
                    return Err(invalid("dim", "model dimension must be positive"));
                }
                if !(q.spread >= 0.0) {
                    return Err(invalid("spread", "spread must be non-negative"));
                }
                if !(q.curvature.0 > 0.0 && q.curvature.0 <= q.curvature.1) {
                    return Err(invalid("curvature", "need 0 < c_min <= c_max"));
                }
                if !(q.server_step > 0.0) {
                    return Err(invalid("server_step", "server step must be positive"));
                }
                if !(q.utility_bound > 0.0) {
                    return Err(invalid("utility_bound", "utility bound must be positive"));
                }
            }
        }
        if !(self.epsilon_cv >= 0.0) {
            return Err(invalid("epsilon_cv", "epsilon_cv must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub n_available: usize,
    pub fair: MetricsRow,
    pub vanilla: MetricsRow,
    pub fair_selected: Vec<usize>,
    pub vanilla_selected: Vec<usize>,
}

/// Fair-arm rounds for the descent-bound check, with the client objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentTrace {
    pub clients: Vec<QuadraticClient>,
    pub rounds: Vec<DescentRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    pub fair_clients: Vec<ClientState>,
    pub vanilla_clients: Vec<ClientState>,
    /// True availability mean averaged over the run.
    pub pi_true: Vec<f64>,
    pub pi_hat: Vec<f64>,
    /// Availability figure used to normalize utilities.
    pub pi_norm: Vec<f64>,
    pub descent: Option<DescentTrace>,
}

impl RunOutput {
    pub fn final_rows(&self) -> [&MetricsRow; 2] {
        let last = self.records.last().expect("a run has at least one round");
        [&last.fair, &last.vanilla]
    }

    pub fn clients(&self, arm: Arm) -> &[ClientState] {
        match arm {
            Arm::Fair => &self.fair_clients,
            Arm::Vanilla => &self.vanilla_clients,
        }
    }
}

struct ArmModel {
    global: Vec<f64>,
    initial: Vec<f64>,
    workers: Vec<QuadraticClient>,
}

struct ArmState {
    arm: Arm,
    clients: Vec<ClientState>,
    model: Option<ArmModel>,
    cache: Option<SurrogateCache>,
    select_rng: ChaCha8Rng,
    utility_rng: ChaCha8Rng,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let n = cfg.clients;
    let mut process = AvailabilityProcess::new(cfg.availability.clone());
    let mut estimator = AvailabilityEstimator::new(n, cfg.estimator, cfg.pi_floor)?;
    let mut avail_rng = stream_rng(cfg.seed, STREAM_AVAILABILITY);

    let workers = match &cfg.workload {
        Workload::Quadratic(q) => {
            let mut rng = stream_rng(cfg.seed, STREAM_WORKLOAD);
            Some(toyfl::spread_clients(
                n,
                q.dim,
                q.spread,
                q.curvature,
                &mut rng,
            )?)
        }
        Workload::Synthetic(_) => None,
    };
    let arm_model = |w: &Option<Vec<QuadraticClient>>| {
        w.as_ref().map(|w| {
            let zero = vec![0.0; w[0].dim()];
            ArmModel {
                global: zero.clone(),
                initial: zero,
                workers: w.clone(),
            }
        })
    };
    let mut arms = [
        ArmState {
            arm: Arm::Fair,
            clients: (0..n).map(ClientState::new).collect(),
            model: arm_model(&workers),
            cache: cfg.surrogate.map(|_| SurrogateCache::new(n)),
            select_rng: stream_rng(cfg.seed, STREAM_FAIR_SELECTION),
            utility_rng: stream_rng(cfg.seed, STREAM_FAIR_UTILITY),
        },
        ArmState {
            arm: Arm::Vanilla,
            clients: (0..n).map(ClientState::new).collect(),
            model: arm_model(&workers),
            cache: None,
            select_rng: stream_rng(cfg.seed, STREAM_VANILLA_SELECTION),
            utility_rng: stream_rng(cfg.seed, STREAM_VANILLA_UTILITY),
        },
    ];

    let mut descent = match (&workers, cfg.record_descent) {
        (Some(w), true) => Some(DescentTrace {
            clients: w.clone(),
            rounds: Vec::new(),
        }),
        _ => None,
    };
    let mut pi_true_sum = vec![0.0; n];
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut avail = vec![false; n];

    for t in 1..=cfg.rounds {
        process.step_into(t, &mut avail_rng, &mut avail)?;
        estimator.update_all(&avail, t);
        for (k, s) in pi_true_sum.iter_mut().enumerate() {
            *s += cfg.availability.mean_at(k, t);
        }
        let pi_true: Vec<f64> = pi_true_sum.iter().map(|s| s / t as f64).collect();
        let pi_hat = estimator.estimates();
        for arm in arms.iter_mut() {
            for c in arm.clients.iter_mut() {
                c.pi_hat = pi_hat[c.id];
            }
        }
        let available: Vec<usize> = (0..n).filter(|&k| avail[k]).collect();
        let pick = |src: NormalizationSource| match src {
            NormalizationSource::TruePi => pi_true.as_slice(),
            NormalizationSource::EstimatedPi => pi_hat,
        };
        let (weight_pi, norm_pi) = (pick(cfg.weight_pi), pick(cfg.normalization));

        let mut rows = Vec::with_capacity(2);
        let mut selections = Vec::with_capacity(2);
        for arm in arms.iter_mut() {
            let selected = match arm.arm {
                Arm::Fair => {
                    let missed: Vec<u64> = arm
                        .clients
                        .iter()
                        .map(|c| match cfg.policy.missed_counter() {
                            MissedCounter::Unavailable => c.missed + u64::from(!avail[c.id]),
                            MissedCounter::Unselected => c.unselected,
                        })
                        .collect();
                    let w = cfg.policy.weights(weight_pi, &missed);
                    cfg.policy.select(&available, &w, &mut arm.select_rng)
                }
                Arm::Vanilla => {
                    let mut s = uniform_sample(&available, cfg.per_round, &mut arm.select_rng);
                    s.sort_unstable();
                    s
                }
            };
            let surrogate = if arm.arm == Arm::Fair {
                cfg.surrogate
            } else {
                None
            };
            let row = step_arm(
                cfg,
                arm,
                t,
                &avail,
                &selected,
                surrogate,
                norm_pi,
                descent.as_mut(),
            )?;
            rows.push(row);
            selections.push(selected);
        }
        let vanilla = rows.pop().expect("two arms");
        let fair = rows.pop().expect("two arms");
        let vanilla_selected = selections.pop().expect("two arms");
        let fair_selected = selections.pop().expect("two arms");
        records.push(RoundRecord {
            round: t,
            n_available: available.len(),
            fair,
            vanilla,
            fair_selected,
            vanilla_selected,
        });
    }

    let pi_true: Vec<f64> = pi_true_sum.iter().map(|s| s / cfg.rounds as f64).collect();
    let pi_hat = estimator.estimates().to_vec();
    let pi_norm = match cfg.normalization {
        NormalizationSource::TruePi => pi_true.clone(),
        NormalizationSource::EstimatedPi => pi_hat.clone(),
    };
    let [fair, vanilla] = arms;
    Ok(RunOutput {
        records,
        fair_clients: fair.clients,
        vanilla_clients: vanilla.clients,
        pi_true,
        pi_hat,
        pi_norm,
        descent,
    })
}

#[allow(clippy::too_many_arguments)]
fn step_arm(
    cfg: &ExperimentConfig,
    arm: &mut ArmState,
    t: usize,
    avail: &[bool],
    selected: &[usize],
    surrogate: Option<SurrogateSettings>,
    norm_pi: &[f64],
    descent: Option<&mut DescentTrace>,
) -> Result<MetricsRow> {
    let n = cfg.clients;
    let mut is_selected = vec![false; n];
    for &k in selected {
        is_selected[k] = true;
    }

    // utilities and signals of this round's participants
    let mut delta = vec![0.0; n];
    let mut signals: Vec<(usize, Vec<f64>)> = Vec::new();
    match (&cfg.workload, arm.model.as_mut()) {
        (Workload::Synthetic(model), _) => {
            // every client draws every round so streams stay aligned across arms
            for (k, d) in delta.iter_mut().enumerate() {
                *d = model.sample(k, &mut arm.utility_rng).unwrap_or(0.0);
            }
        }
        (Workload::Quadratic(q), Some(m)) => {
            for &k in selected {
                let up =
                    toyfl::local_update(&mut m.workers[k], &m.global, &q.trainer, q.utility_bound)?;
                delta[k] = up.utility;
                signals.push((k, up.signal));
            }
        }
        (Workload::Quadratic(_), None) => unreachable!("quadratic arms carry a model"),
    }

    for c in arm.clients.iter_mut() {
        let k = c.id;
        c.accrue(t, avail[k], is_selected[k], delta[k], cfg.accrual)?;
    }

    // surrogates for unavailable clients with a cached contribution
    let mut missing: Vec<(usize, f64)> = Vec::new();
    let mut contribution = 0.0;
    if let (Some(s), Some(cache)) = (surrogate, arm.cache.as_mut()) {
        for k in (0..n).filter(|&k| !avail[k]) {
            if let Some(e) = cache.get(k) {
                let eta = reliability(e.staleness(t), &s.config);
                if s.utility_credit {
                    arm.clients[k].credit(eta * e.loss);
                }
                contribution += eta;
                missing.push((k, eta));
            }
        }
        for &k in selected {
            let sig = signals
                .iter()
                .find(|(j, _)| *j == k)
                .map(|(_, g)| g.clone())
                .unwrap_or_default();
            cache.store(k, sig, t, delta[k]);
        }
    }

    if let (Workload::Quadratic(q), Some(m)) = (&cfg.workload, arm.model.as_mut()) {
        let total = signals.len() as f64 + missing.iter().map(|(_, e)| e).sum::<f64>();
        if total > 0.0 {
            let cache = arm.cache.as_ref();
            let cached = |k: usize| {
                cache
                    .and_then(|c| c.get(k))
                    .map(|e| e.signal.as_slice())
                    .unwrap_or(&[])
            };
            let active: Vec<Weighted<'_>> = signals
                .iter()
                .map(|(_, g)| Weighted {
                    weight: 1.0 / total,
                    signal: g,
                })
                .collect();
            let stale: Vec<Weighted<'_>> = missing
                .iter()
                .map(|&(k, e)| Weighted {
                    weight: e / total,
                    signal: cached(k),
                })
                .collect();
            let agg = aggregate_with_surrogates(q.dim, &active, &stale)?;
            if let Some(trace) = descent.filter(|_| arm.arm == Arm::Fair) {
                // what the missing clients would have sent had they been reachable
                let truth: Vec<Vec<f64>> = missing
                    .iter()
                    .map(|&(k, _)| {
                        let w = &m.workers[k];
                        let a = q.trainer.mixing;
                        let mixed: Vec<f64> = w
                            .local
                            .iter()
                            .zip(&m.global)
                            .map(|(l, g)| (1.0 - a) * l + a * g)
                            .collect();
                        w.gradient(&mixed)
                    })
                    .collect();
                let true_stale: Vec<Weighted<'_>> = missing
                    .iter()
                    .zip(&truth)
                    .map(|(&(_, e), g)| Weighted {
                        weight: e / total,
                        signal: g,
                    })
                    .collect();
                let true_agg = aggregate_with_surrogates(q.dim, &active, &true_stale)?;
                let terms = signals
                    .iter()
                    .map(|(k, _)| (*k, 1.0 / total))
                    .chain(missing.iter().map(|&(k, e)| (k, e / total)))
                    .collect();
                let surrogate_error = missing
                    .iter()
                    .zip(&truth)
                    .map(|(&(k, _), g)| {
                        libm::sqrt(
                            cached(k)
                                .iter()
                                .zip(g)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>(),
                        )
                    })
                    .fold(0.0, f64::max);
                trace.rounds.push(DescentRecord {
                    round: t,
                    objective: WeightedObjective { terms },
                    model: m.global.clone(),
                    true_aggregate: true_agg.aggregate,
                    surrogate_aggregate: agg.aggregate.clone(),
                    step_size: q.server_step,
                    surrogate_weight: agg.contribution,
                    surrogate_error,
                });
            }
            m.global = toyfl::global_step(&m.global, &agg.aggregate, q.server_step)?;
        }
    }

    Ok(arm_metrics(cfg, arm, t, avail, norm_pi, contribution))
}

fn arm_metrics(
    cfg: &ExperimentConfig,
    arm: &ArmState,
    t: usize,
    avail: &[bool],
    norm_pi: &[f64],
    contribution: f64,
) -> MetricsRow {
    let u: Vec<f64> = arm.clients.iter().map(|c| c.utility).collect();
    let normalized = utility::normalized_utilities(&u, norm_pi);
    let per_client: Vec<f64> = match &arm.model {
        None => u.iter().map(|u| u / t as f64).collect(),
        Some(m) => m
            .workers
            .iter()
            .map(|w| {
                let f0 = w.loss(&m.initial);
                if f0 > 0.0 {
                    (1.0 - w.loss(&m.global) / f0).max(0.0)
                } else {
                    1.0
                }
            })
            .collect(),
    };
    let performance = match &arm.model {
        None => per_client.iter().sum::<f64>() / per_client.len() as f64,
        Some(m) => {
            let f = |w: &[f64]| m.workers.iter().map(|c| c.loss(w)).sum::<f64>();
            let f0 = f(&m.initial);
            if f0 > 0.0 {
                1.0 - f(&m.global) / f0
            } else {
                1.0
            }
        }
    };
    let counts: Vec<u64> = arm.clients.iter().map(|c| c.selections).collect();
    let counts_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    MetricsRow {
        round: t,
        arm: arm.arm,
        performance,
        fairness_variance: utility::fairness_variance(&normalized.values),
        jain_perf: metrics::jain(&per_client),
        jain_utility: metrics::jain(&normalized.values),
        utility_cv: metrics::utility_cv(&normalized.values, cfg.epsilon_cv),
        selgap_paper: metrics::selection_gap(
            &counts,
            cfg.per_round,
            t,
            SelectionGapVariant::PaperLiteral,
        ),
        selgap_share: metrics::selection_gap(
            &counts,
            cfg.per_round,
            t,
            SelectionGapVariant::FrequencyShare,
        ),
        gini: metrics::gini(&counts_f).unwrap_or(0.0),
        surrogate_contribution: contribution,
        n_available: avail.iter().filter(|a| **a).count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation, 0 for a single replicate.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        // shifted by the first value so identical replicates give exactly std 0
        let x0 = values[0];
        let shift = values.iter().map(|v| v - x0).sum::<f64>() / n;
        let mean = x0 + shift;
        let std = if values.len() < 2 {
            0.0
        } else {
            let ss: f64 = values
                .iter()
                .map(|v| (v - x0 - shift) * (v - x0 - shift))
                .sum();
            libm::sqrt(ss / (n - 1.0))
        };
        Self { mean, std }
    }
}

/// Final-round statistics of one arm across replicates, columns in
/// [`MetricsRow::values`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: Arm,
    pub replicates: usize,
    pub stats: [Stat; 9],
}

impl ArmSummary {
    pub fn get(&self, column: &str) -> Option<Stat> {
        MetricsRow::HEADER[2..11]
            .iter()
            .position(|h| *h == column)
            .map(|i| self.stats[i])
    }
}

/// Groups final rows by arm (fair first) and aggregates each column.
pub fn summarize(final_rows: &[MetricsRow]) -> Result<Vec<ArmSummary>> {
    if final_rows.is_empty() {
        return Err(invalid("replicates", "need at least one replicate"));
    }
    let mut out = Vec::new();
    for arm in [Arm::Fair, Arm::Vanilla] {
        let rows: Vec<&MetricsRow> = final_rows.iter().filter(|r| r.arm == arm).collect();
        if rows.is_empty() {
            continue;
        }
        let stats = core::array::from_fn(|i| {
            let col: Vec<f64> = rows.iter().map(|r| r.values()[i]).collect();
            Stat::of(&col)
        });
        out.push(ArmSummary {
            arm,
            replicates: rows.len(),
            stats,
        });
    }
    Ok(out)
}
