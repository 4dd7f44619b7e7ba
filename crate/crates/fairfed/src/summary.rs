//! Final-round summaries across replicates in the comparison-table layout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fairfed_core::engine::{summarize, ArmSummary, Stat};
use fairfed_core::metrics::{Arm, MetricsRow};
use walkdir::WalkDir;

use crate::error::{FairfedError, Result};
use crate::output::{self, fmt_g, METRICS_LOG};

/// Table columns and the metric behind each.
const COLUMNS: [(&str, &str); 8] = [
    ("Performance", "performance"),
    ("Jain (Perf)", "jain_perf"),
    ("Utility CV", "utility_cv"),
    ("Jain (Utility)", "jain_utility"),
    ("Sel. Gap (literal)", "selgap_paper"),
    ("Sel. Gap (share)", "selgap_share"),
    ("Gini", "gini"),
    ("V_T", "fairness_variance"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    /// Directory relative to the summarized root; replicate folders are merged.
    pub group: String,
    pub arms: Vec<ArmSummary>,
}

fn group_of(root: &Path, log: &Path) -> String {
    let mut dir = log.parent().unwrap_or(root);
    if dir
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("replicate_"))
    {
        dir = dir.parent().unwrap_or(root);
    }
    let rel = dir.strip_prefix(root).unwrap_or(dir);
    if rel.as_os_str().is_empty() {
        ".".into()
    } else {
        rel.to_string_lossy().replace('\\', "/")
    }
}

/// Collects every `metrics_log.csv` under `root`.
pub fn collect(root: &Path) -> Result<Vec<GroupSummary>> {
    if !root.is_dir() {
        return Err(FairfedError::Config(format!(
            "`--in`: {} is not a directory",
            root.display()
        )));
    }
    let mut groups: BTreeMap<String, Vec<MetricsRow>> = BTreeMap::new();
    let logs: Vec<PathBuf> = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.file_name() == METRICS_LOG)
        .map(|e| e.into_path())
        .collect();
    if logs.is_empty() {
        return Err(FairfedError::Summary(format!(
            "no {METRICS_LOG} under {}",
            root.display()
        )));
    }
    for log in logs {
        let rows = output::read_metrics_log(&log)?;
        groups
            .entry(group_of(root, &log))
            .or_default()
            .extend(output::final_rows(&rows));
    }
    groups
        .into_iter()
        .map(|(group, rows)| {
            Ok(GroupSummary {
                group,
                arms: summarize(&rows)?,
            })
        })
        .collect()
}

fn cell(s: Stat) -> String {
    format!("{} ± {}", fmt_g(s.mean), fmt_g(s.std))
}

pub fn render(groups: &[GroupSummary]) -> String {
    let mut header = vec!["Method".to_string()];
    header.extend(COLUMNS.iter().map(|(h, _)| h.to_string()));
    header.push("Runs".into());
    let mut rows = vec![header];
    for g in groups {
        for a in &g.arms {
            let method = match (g.group.as_str(), a.arm) {
                (".", Arm::Fair) => "fair".to_string(),
                (".", Arm::Vanilla) => "vanilla".to_string(),
                (name, arm) => format!("{name} / {}", arm.as_str()),
            };
            let mut row = vec![method];
            row.extend(
                COLUMNS
                    .iter()
                    .map(|(_, c)| cell(a.get(c).expect("known column"))),
            );
            row.push(a.replicates.to_string());
            rows.push(row);
        }
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
        }
    }
    out
}
