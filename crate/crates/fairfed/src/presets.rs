//! Named scenarios. Each writes its runs under the output directory and then
//! runs the checks that belong to it.

use std::fs;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use crate::config::RunSpec;
use crate::error::{FairfedError, Result};
use crate::experiments::{self, CriterionReport};
use crate::output::METRICS_LOG;
use crate::{runner, summary};

pub const DEFAULT_SEED: u64 = 1;
pub const CHECKS_FILE: &str = "checks.txt";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Run specs behind the presets, with seed 0 and a single replicate unless
/// the preset logs several.
pub mod specs {
    use serde_json::json;

    use crate::config::RunSpec;

    fn spec(v: serde_json::Value) -> RunSpec {
        serde_json::from_value(v).expect("built-in specs are well formed")
    }

    pub fn lemma1() -> RunSpec {
        spec(json!({
            "clients": 10, "per_round": 3, "rounds": 10000,
            "availability": {"kind": "bernoulli", "pi": {"linspace": {"low": 0.1, "high": 1.0}}},
            "policy": {"kind": "inverse_availability"},
            "workload": {"kind": "synthetic", "mean": {"linspace": {"low": 0.2, "high": 0.8}}},
            "accrual": "availability_only",
            "normalization": "true"
        }))
    }

    pub fn lemma2() -> RunSpec {
        spec(json!({
            "clients": 100, "per_round": 10, "rounds": 5000,
            "availability": {"kind": "bernoulli", "pi": {"uniform": {"low": 0.1, "high": 1.0}}},
            "estimator": {"mode": "running_mean"},
            "policy": {"kind": "inverse_availability", "sampling": "inclusion_proportional"},
            "workload": {"kind": "synthetic", "mean": {"constant": 0.5}}
        }))
    }

    pub fn theorem2(lambda: f64) -> RunSpec {
        spec(json!({
            "clients": 10, "per_round": 2, "rounds": 10000,
            "availability": {"kind": "bernoulli", "pi": {"linspace": {"low": 0.02, "high": 0.1}}},
            "policy": {"kind": "reactive_reweight", "lambda": lambda, "epsilon": 0.01},
            "weight_pi": "true",
            "workload": {"kind": "synthetic", "mean": {"constant": 0.5}}
        }))
    }

    pub fn appendix_a() -> RunSpec {
        spec(json!({
            "clients": 10, "per_round": 2, "rounds": 10000,
            "availability": {"kind": "bernoulli", "pi": {"linspace": {"low": 0.2, "high": 1.0}}},
            "policy": {"kind": "inverse_availability"},
            "workload": {
                "kind": "synthetic", "mean": {"linspace": {"low": 0.2, "high": 0.8}},
                "bound": 1.0, "noise": {"kind": "uniform", "spread": 0.1}
            },
            "normalization": "true"
        }))
    }

    pub const DRIFTS: [f64; 3] = [0.0, 0.15, 0.3];
    pub const WINDOWS: [usize; 2] = [50, 200];
    /// First round and length of the evaluation window.
    pub const DRIFT_WINDOW: (usize, usize) = (401, 500);

    pub fn drift(drift: f64, window: usize) -> RunSpec {
        spec(json!({
            "clients": 10, "per_round": 3, "rounds": 1000,
            "availability": {
                "kind": "drifting", "base": {"linspace": {"low": 0.2, "high": 0.8}},
                "drift": drift, "start": 400, "end": 900
            },
            "estimator": {"mode": "sliding_window", "window": window},
            "policy": {"kind": "inverse_availability"},
            "workload": {"kind": "synthetic", "mean": {"constant": 0.5}}
        }))
    }

    pub fn drift_cells() -> Vec<(String, RunSpec)> {
        DRIFTS
            .iter()
            .flat_map(|&d| {
                WINDOWS
                    .iter()
                    .map(move |&w| (format!("drift{d}_window{w}"), drift(d, w)))
            })
            .collect()
    }

    pub fn surrogate() -> RunSpec {
        spec(json!({
            "clients": 12, "per_round": 3, "rounds": 1000,
            "availability": {
                "kind": "markov", "pi": {"linspace": {"low": 0.15, "high": 0.9}}, "sojourn": {"constant": 3.0}
            },
            "policy": {"kind": "inverse_availability"},
            "workload": {
                "kind": "quadratic", "dim": 8, "spread": 2.0, "curvature": [0.5, 2.0],
                "step_size": 0.2, "local_epochs": 2, "mixing": 0.5, "angle_constant": 0.3,
                "server_step": 0.3, "utility_bound": 50.0
            },
            "surrogate": {"eta0": 1.0, "decay": 0.3, "error_bound": 0.0},
            "record_descent": true
        }))
    }

    pub fn table2(with_surrogate: bool) -> RunSpec {
        let mut s = spec(json!({
            "clients": 100, "per_round": 10, "rounds": 50, "replicates": 20,
            "availability": {"kind": "bernoulli", "pi": {"uniform": {"low": 0.1, "high": 1.0}}},
            "policy": {"kind": "inverse_availability", "sampling": "inclusion_proportional"},
            "workload": {
                "kind": "quadratic", "dim": 5, "spread": 2.0, "curvature": [0.5, 2.0],
                "step_size": 0.1, "local_epochs": 2, "mixing": 0.5, "angle_constant": 0.5,
                "server_step": 0.5, "utility_bound": 10.0
            },
            "surrogate": {"eta0": 1.0, "decay": 0.5, "utility_credit": true}
        }));
        if !with_surrogate {
            s.surrogate = None;
        }
        s
    }

    pub fn figs34() -> RunSpec {
        spec(json!({
            "clients": 20, "per_round": 4, "rounds": 1000, "replicates": 20,
            "availability": {"kind": "bernoulli", "pi": {"split": {"low": 0.2, "high": 0.9}}},
            "policy": {"kind": "reactive_reweight", "sampling": "top_k", "lambda": 0.7},
            "workload": {"kind": "synthetic", "mean": {"constant": 0.5}}
        }))
    }
}

type Variants = fn() -> Vec<(String, RunSpec)>;
type Checks = fn(u64) -> Result<Vec<CriterionReport>>;

pub struct Preset {
    pub name: &'static str,
    pub about: &'static str,
    variants: Variants,
    checks: Checks,
}

fn single(spec: RunSpec) -> Vec<(String, RunSpec)> {
    vec![(String::new(), spec)]
}

pub const PRESETS: [Preset; 8] = [
    Preset {
        name: "lemma1_convergence",
        about: "availability-only accrual; normalized utility settles at the client mean",
        variants: || single(specs::lemma1()),
        checks: |s| Ok(vec![experiments::lemma1_convergence(s)?]),
    },
    Preset {
        name: "lemma2_parity",
        about: "inverse-availability sampling equalizes selection frequencies",
        variants: || single(specs::lemma2()),
        checks: |s| Ok(vec![experiments::lemma2_parity(s)?]),
    },
    Preset {
        name: "theorem2_limits",
        about: "reactive weights approach their long-run limit",
        variants: || single(specs::theorem2(0.7)),
        checks: |s| Ok(vec![experiments::theorem2_limit(s)?]),
    },
    Preset {
        name: "appendix_a_identity",
        about: "expected normalized utility under idealized inverse-availability selection",
        variants: || single(specs::appendix_a()),
        checks: |s| Ok(vec![experiments::appendix_a_identity(s)?]),
    },
    Preset {
        name: "appendix_c_drift",
        about: "estimator tracking under drifting availability",
        variants: specs::drift_cells,
        checks: |s| Ok(vec![experiments::appendix_c_drift(s)?]),
    },
    Preset {
        name: "surrogate_bounds",
        about: "stale-update bias and descent inequalities on quadratic clients",
        variants: || single(specs::surrogate()),
        checks: |s| Ok(vec![experiments::surrogate_bounds(s)?]),
    },
    Preset {
        name: "table2_comparison",
        about: "fair vs vanilla with and without surrogates, 20 replicates",
        variants: || {
            vec![
                ("with_surrogate".into(), specs::table2(true)),
                ("without_surrogate".into(), specs::table2(false)),
            ]
        },
        checks: |s| Ok(vec![experiments::table2_direction(s)?]),
    },
    Preset {
        name: "figs34_trend",
        about: "fairness variance over rounds, reactive fair arm vs random, 20 replicates",
        variants: || single(specs::figs34()),
        checks: |s| Ok(vec![experiments::figs34_trend(s)?]),
    },
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| FairfedError::UnknownPreset(name.to_string(), names().join(", ")))
}

impl Preset {
    /// Run specs with the seed applied, labelled by output subdirectory
    /// (empty for single-variant presets).
    pub fn variants(&self, seed: u64) -> Vec<(String, RunSpec)> {
        (self.variants)()
            .into_iter()
            .map(|(label, mut spec)| {
                spec.seed = seed;
                (label, spec)
            })
            .collect()
    }

    /// Committed config file name for a variant.
    pub fn config_name(&self, label: &str) -> String {
        if label.is_empty() {
            format!("{}.json", self.name)
        } else {
            format!("{}.{label}.json", self.name)
        }
    }

    /// Runs and writes all variants.
    pub fn write(&self, seed: u64, out: &Path) -> Result<()> {
        for (label, spec) in self.variants(seed) {
            runner::run_to_dir(&spec, Path::new("."), &out.join(&label))?;
        }
        Ok(())
    }

    pub fn checks(&self, seed: u64) -> Result<Vec<CriterionReport>> {
        (self.checks)(seed)
    }

    /// Writes the runs, `summary.txt` and `checks.txt`, and returns the checks.
    pub fn run(&self, seed: u64, out: &Path) -> Result<Vec<CriterionReport>> {
        self.write(seed, out)?;
        let table = summary::render(&summary::collect(out)?);
        write_text(&out.join(SUMMARY_FILE), &table)?;
        let reports = self.checks(seed)?;
        let text: String = reports.iter().map(|r| format!("{r}\n")).collect();
        write_text(&out.join(CHECKS_FILE), &text)?;
        Ok(reports)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| FairfedError::io(path, e))
}

fn metrics_logs(root: &Path) -> Vec<PathBuf> {
    WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name() == METRICS_LOG)
        .map(|e| {
            e.path()
                .strip_prefix(root)
                .expect("walk stays under root")
                .to_path_buf()
        })
        .collect()
}

/// Criterion 9: every preset written twice with the same seed gives
/// byte-identical metrics logs.
pub fn determinism(seed: u64, scratch: &Path) -> Result<CriterionReport> {
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for p in &PRESETS {
        let (a, b) = (
            scratch.join("a").join(p.name),
            scratch.join("b").join(p.name),
        );
        p.write(seed, &a)?;
        p.write(seed, &b)?;
        let (la, lb) = (metrics_logs(&a), metrics_logs(&b));
        if la != lb || la.is_empty() {
            mismatched.push(format!("{}: file sets differ", p.name));
            continue;
        }
        for rel in la {
            let read = |root: &Path| {
                fs::read(root.join(&rel)).map_err(|e| FairfedError::io(root.join(&rel), e))
            };
            compared += 1;
            if read(&a)? != read(&b)? {
                mismatched.push(format!("{}/{}", p.name, rel.display()));
            }
        }
    }
    Ok(CriterionReport {
        id: "criterion 9".into(),
        name: "determinism",
        pass: mismatched.is_empty(),
        detail: format!(
            "{compared} metrics logs across {} presets compared, {} mismatched{}",
            PRESETS.len(),
            mismatched.len(),
            if mismatched.is_empty() {
                String::new()
            } else {
                format!(": {}", mismatched.join(", "))
            }
        ),
    })
}
