//! JSON run specification and its resolution into a core [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use fairfed_core::availability::{
    AvailabilityModel, DriftSchedule, EstimatorMode, DEFAULT_PI_FLOOR,
};
use fairfed_core::engine::{ExperimentConfig, QuadraticWorkload, SurrogateSettings, Workload};
use fairfed_core::metrics::DEFAULT_EPSILON_CV;
use fairfed_core::selection::{MissedCounter, PolicyKind, SamplingMode, SelectionPolicy};
use fairfed_core::stream_rng;
use fairfed_core::surrogate::SurrogateConfig;
use fairfed_core::toyfl::TrainerConfig;
use fairfed_core::utility::{AccrualMode, NormalizationSource, UtilityModel, UtilityNoise};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FairfedError, Result};
use crate::trace;

/// RNG streams for randomized config vectors, disjoint from the engine's.
const STREAM_PI: u64 = 16;
const STREAM_SOJOURN: u64 = 17;
const STREAM_MEAN: u64 = 18;
const STREAM_ALPHA: u64 = 19;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub clients: usize,
    pub per_round: usize,
    pub rounds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Replicate `r` runs with seed `seed + r`.
    #[serde(default = "one")]
    pub replicates: usize,
    pub availability: AvailabilitySpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default = "default_floor")]
    pub pi_floor: f64,
    pub policy: PolicySpec,
    #[serde(default)]
    pub weight_pi: PiSource,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub accrual: AccrualSpec,
    #[serde(default)]
    pub normalization: PiSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<SurrogateSpec>,
    #[serde(default = "default_epsilon_cv")]
    pub epsilon_cv: f64,
    #[serde(default)]
    pub record_descent: bool,
}

fn one() -> usize {
    1
}

fn default_floor() -> f64 {
    DEFAULT_PI_FLOOR
}

fn default_epsilon_cv() -> f64 {
    DEFAULT_EPSILON_CV
}

/// A per-client vector given literally or generated from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorSpec {
    Values(Vec<f64>),
    Constant(f64),
    /// i.i.d. uniform draws on `[low, high)`.
    Uniform {
        low: f64,
        high: f64,
    },
    /// Evenly spaced from `low` to `high` inclusive.
    Linspace {
        low: f64,
        high: f64,
    },
    /// First half of the clients at `low`, the rest at `high`.
    Split {
        low: f64,
        high: f64,
    },
}

impl VectorSpec {
    pub fn resolve(&self, n: usize, seed: u64, stream: u64, field: &str) -> Result<Vec<f64>> {
        let v = match self {
            Self::Values(v) => {
                if v.len() != n {
                    return Err(FairfedError::Config(format!(
                        "`{field}` lists {} values for {n} clients",
                        v.len()
                    )));
                }
                v.clone()
            }
            Self::Constant(c) => vec![*c; n],
            Self::Uniform { low, high } => {
                if !(low <= high) {
                    return Err(FairfedError::Config(format!(
                        "`{field}`: uniform needs low <= high"
                    )));
                }
                let mut rng = stream_rng(seed, stream);
                (0..n)
                    .map(|_| low + (high - low) * rng.gen::<f64>())
                    .collect()
            }
            Self::Linspace { low, high } => {
                if n == 1 {
                    vec![*low]
                } else {
                    (0..n)
                        .map(|k| low + (high - low) * k as f64 / (n - 1) as f64)
                        .collect()
                }
            }
            Self::Split { low, high } => (0..n)
                .map(|k| if k < n / 2 { *low } else { *high })
                .collect(),
        };
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AvailabilitySpec {
    Bernoulli {
        pi: VectorSpec,
    },
    Markov {
        pi: VectorSpec,
        sojourn: VectorSpec,
    },
    /// Linear ramp from `base` to `base +/- drift` (sign alternating by
    /// client id, even ids up) over rounds `start..=end`, clamped to `[0.01, 1]`.
    Drifting {
        base: VectorSpec,
        drift: f64,
        start: usize,
        end: usize,
    },
    /// Device event log, resolved relative to the config file.
    Trace {
        path: PathBuf,
        round_secs: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    #[default]
    RunningMean,
    SlidingWindow {
        window: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKindSpec {
    Random,
    InverseAvailability,
    ReactiveReweight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingSpec {
    Sequential,
    #[default]
    InclusionProportional,
    TopK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissedCounterSpec {
    #[default]
    Unavailable,
    Unselected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKindSpec,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default = "unit_alpha")]
    pub alpha: VectorSpec,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub missed_counter: MissedCounterSpec,
}

fn unit_alpha() -> VectorSpec {
    VectorSpec::Constant(1.0)
}

fn default_epsilon() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiSource {
    True,
    #[default]
    Estimated,
}

impl From<PiSource> for NormalizationSource {
    fn from(p: PiSource) -> Self {
        match p {
            PiSource::True => NormalizationSource::TruePi,
            PiSource::Estimated => NormalizationSource::EstimatedPi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccrualSpec {
    AvailabilityOnly,
    #[default]
    SelectedAndAvailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    Constant,
    Uniform {
        spread: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSpec {
    Synthetic {
        mean: VectorSpec,
        #[serde(default = "unit_bound")]
        bound: f64,
        #[serde(default)]
        noise: NoiseSpec,
    },
    Quadratic {
        dim: usize,
        spread: f64,
        curvature: [f64; 2],
        step_size: f64,
        local_epochs: usize,
        mixing: f64,
        angle_constant: f64,
        server_step: f64,
        utility_bound: f64,
    },
}

fn unit_bound() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "unit_bound")]
    pub eta0: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default)]
    pub error_bound: f64,
    #[serde(default = "yes")]
    pub utility_credit: bool,
}

fn yes() -> bool {
    true
}

fn default_decay() -> f64 {
    0.5
}

impl RunSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FairfedError::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text).map_err(|e| match e {
            FairfedError::Config(message) => FairfedError::ConfigFile {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FairfedError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run specs always serialize");
        s.push('\n');
        s
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        self.seed.wrapping_add(replicate as u64)
    }

    /// Builds the engine config for one replicate; relative trace paths are
    /// resolved against `base_dir`.
    pub fn resolve(&self, replicate: usize, base_dir: &Path) -> Result<ExperimentConfig> {
        if self.replicates == 0 {
            return Err(FairfedError::Config(
                "`replicates` must be at least 1".into(),
            ));
        }
        let n = self.clients;
        if n == 0 {
            return Err(FairfedError::Config("`clients` must be at least 1".into()));
        }
        let seed = self.replicate_seed(replicate);
        let availability = match &self.availability {
            AvailabilitySpec::Bernoulli { pi } => {
                AvailabilityModel::bernoulli(pi.resolve(n, seed, STREAM_PI, "pi")?)?
            }
            AvailabilitySpec::Markov { pi, sojourn } => AvailabilityModel::markov(
                pi.resolve(n, seed, STREAM_PI, "pi")?,
                sojourn.resolve(n, seed, STREAM_SOJOURN, "sojourn")?,
            )?,
            AvailabilitySpec::Drifting {
                base,
                drift,
                start,
                end,
            } => {
                let base = base.resolve(n, seed, STREAM_PI, "base")?;
                let schedules = base
                    .iter()
                    .enumerate()
                    .map(|(k, &b)| {
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        let to = (b + sign * drift).clamp(0.01, 1.0);
                        DriftSchedule::ramp(*start, b, *end, to)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                AvailabilityModel::drifting(schedules)?
            }
            AvailabilitySpec::Trace {
                path,
                round_secs,
                horizon,
            } => {
                let full = base_dir.join(path);
                let parsed = trace::load_trace(&full, *round_secs, *horizon)?;
                if parsed.devices.len() != n {
                    return Err(FairfedError::Config(format!(
                        "`clients` is {n} but the trace has {} devices",
                        parsed.devices.len()
                    )));
                }
                AvailabilityModel::trace(parsed.timelines())?
            }
        };
        let estimator = match self.estimator {
            EstimatorSpec::RunningMean => EstimatorMode::RunningMean,
            EstimatorSpec::SlidingWindow { window } => EstimatorMode::SlidingWindow(window),
        };
        let p = &self.policy;
        let kind = match p.kind {
            PolicyKindSpec::Random => PolicyKind::Random,
            PolicyKindSpec::InverseAvailability => PolicyKind::InverseAvailability,
            PolicyKindSpec::ReactiveReweight => PolicyKind::ReactiveReweight,
        };
        let mode = match p.sampling {
            SamplingSpec::Sequential => SamplingMode::Sequential,
            SamplingSpec::InclusionProportional => SamplingMode::InclusionProportional,
            SamplingSpec::TopK => SamplingMode::TopK,
        };
        let counter = match p.missed_counter {
            MissedCounterSpec::Unavailable => MissedCounter::Unavailable,
            MissedCounterSpec::Unselected => MissedCounter::Unselected,
        };
        let policy = SelectionPolicy::new(kind, self.per_round, mode, n)?
            .with_reactive(
                p.alpha.resolve(n, seed, STREAM_ALPHA, "alpha")?,
                p.lambda,
                p.epsilon,
            )?
            .with_missed_counter(counter);
        let workload = match &self.workload {
            WorkloadSpec::Synthetic { mean, bound, noise } => {
                let noise = match noise {
                    NoiseSpec::Constant => UtilityNoise::Constant,
                    NoiseSpec::Uniform { spread } => {
                        UtilityNoise::UniformBounded { spread: *spread }
                    }
                };
                Workload::Synthetic(UtilityModel::new(
                    mean.resolve(n, seed, STREAM_MEAN, "mean")?,
                    *bound,
                    noise,
                )?)
            }
            WorkloadSpec::Quadratic {
                dim,
                spread,
                curvature,
                step_size,
                local_epochs,
                mixing,
                angle_constant,
                server_step,
                utility_bound,
            } => Workload::Quadratic(QuadraticWorkload {
                dim: *dim,
                spread: *spread,
                curvature: (curvature[0], curvature[1]),
                trainer: TrainerConfig::new(*step_size, *local_epochs, *mixing, *angle_constant)?,
                server_step: *server_step,
                utility_bound: *utility_bound,
            }),
        };
        let surrogate = match self.surrogate {
            Some(s) if s.enabled => Some(SurrogateSettings {
                config: SurrogateConfig::new(s.eta0, s.decay, s.error_bound)?,
                utility_credit: s.utility_credit,
            }),
            _ => None,
        };
        let cfg = ExperimentConfig {
            clients: n,
            per_round: self.per_round,
            rounds: self.rounds,
            seed,
            availability,
            estimator,
            pi_floor: self.pi_floor,
            policy,
            weight_pi: self.weight_pi.into(),
            workload,
            accrual: match self.accrual {
                AccrualSpec::AvailabilityOnly => AccrualMode::AvailabilityOnly,
                AccrualSpec::SelectedAndAvailable => AccrualMode::SelectedAndAvailable,
            },
            normalization: self.normalization.into(),
            surrogate,
            epsilon_cv: self.epsilon_cv,
            record_descent: self.record_descent,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full schema and semantic check without running anything.
    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        self.resolve(0, base_dir).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "clients": 4, "per_round": 2, "rounds": 10,
        "availability": {"kind": "bernoulli", "pi": {"linspace": {"low": 0.2, "high": 0.8}}},
        "policy": {"kind": "inverse_availability"},
        "workload": {"kind": "synthetic", "mean": {"constant": 0.5}}
    }"#;

    #[test]
    fn minimal_config_resolves() {
        let spec = RunSpec::parse(MINIMAL).unwrap();
        assert_eq!(spec.replicates, 1);
        let cfg = spec.resolve(0, Path::new(".")).unwrap();
        assert_eq!(cfg.availability.mean_at(3, 1), 0.8);
        assert_eq!(cfg.policy.mode(), SamplingMode::InclusionProportional);
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replace("\"rounds\"", "\"roundz\"");
        let msg = RunSpec::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("roundz"), "{msg}");
    }

    #[test]
    fn missing_field_is_named() {
        let text = MINIMAL.replace("\"per_round\": 2,", "");
        let msg = RunSpec::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("per_round"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_parameter() {
        let text = MINIMAL.replace("\"per_round\": 2", "\"per_round\": 9");
        let err = RunSpec::parse(&text)
            .unwrap()
            .validate(Path::new("."))
            .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("per_round"));
    }

    #[test]
    fn uniform_vectors_follow_the_seed() {
        let v = VectorSpec::Uniform {
            low: 0.1,
            high: 1.0,
        };
        assert_eq!(
            v.resolve(5, 3, STREAM_PI, "pi").unwrap(),
            v.resolve(5, 3, STREAM_PI, "pi").unwrap()
        );
        assert_ne!(
            v.resolve(5, 3, STREAM_PI, "pi").unwrap(),
            v.resolve(5, 4, STREAM_PI, "pi").unwrap()
        );
        assert!(v
            .resolve(50, 3, STREAM_PI, "pi")
            .unwrap()
            .iter()
            .all(|p| (0.1..1.0).contains(p)));
    }

    #[test]
    fn round_trips_through_json() {
        let spec = RunSpec::parse(MINIMAL).unwrap();
        assert_eq!(RunSpec::parse(&spec.to_json()).unwrap(), spec);
    }
}
