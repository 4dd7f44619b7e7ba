//! CSV outputs: `metrics_log.csv` and the per-client final states.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fairfed_core::engine::RunOutput;
use fairfed_core::metrics::{Arm, MetricsRow};

use crate::error::{FairfedError, Result};

pub const METRICS_LOG: &str = "metrics_log.csv";
pub const CLIENTS_FINAL: &str = "clients_final.csv";
pub const CLIENTS_FINAL_VANILLA: &str = "clients_final_vanilla.csv";
/// Suffix of a log whose writing did not finish.
pub const PARTIAL_SUFFIX: &str = ".partial";

pub const CLIENTS_HEADER: &str = "id,pi_true,pi_hat,u,u_norm,selected,missed";

/// `printf("%g")` with 6 significant digits.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn metrics_line(r: &MetricsRow) -> String {
    let mut line = format!("{},{}", r.round, r.arm.as_str());
    for v in r.values() {
        line.push(',');
        line.push_str(&fmt_g(v));
    }
    line.push_str(&format!(",{}\n", r.n_available));
    line
}

pub fn render_metrics_log(out: &RunOutput) -> String {
    let mut s = MetricsRow::HEADER.join(",");
    s.push('\n');
    for rec in &out.records {
        s.push_str(&metrics_line(&rec.fair));
        s.push_str(&metrics_line(&rec.vanilla));
    }
    s
}

pub fn render_clients(out: &RunOutput, arm: Arm) -> String {
    let mut s = String::from(CLIENTS_HEADER);
    s.push('\n');
    for c in out.clients(arm) {
        let k = c.id;
        s.push_str(&format!(
            "{k},{},{},{},{},{},{}\n",
            fmt_g(out.pi_true[k]),
            fmt_g(out.pi_hat[k]),
            fmt_g(c.utility),
            fmt_g(c.utility / out.pi_norm[k]),
            c.selections,
            c.missed
        ));
    }
    s
}

/// Writes `content` through a `.partial` file that is renamed on success,
/// so an interrupted write leaves the marker behind.
fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(PARTIAL_SUFFIX);
    let partial = PathBuf::from(partial);
    let mut f = fs::File::create(&partial).map_err(|e| FairfedError::io(&partial, e))?;
    f.write_all(content.as_bytes())
        .map_err(|e| FairfedError::io(&partial, e))?;
    f.sync_all().map_err(|e| FairfedError::io(&partial, e))?;
    fs::rename(&partial, path).map_err(|e| FairfedError::io(path, e))
}

pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FairfedError::io(dir, e))?;
    write_atomic(&dir.join(METRICS_LOG), &render_metrics_log(out))?;
    write_atomic(&dir.join(CLIENTS_FINAL), &render_clients(out, Arm::Fair))?;
    write_atomic(
        &dir.join(CLIENTS_FINAL_VANILLA),
        &render_clients(out, Arm::Vanilla),
    )
}

pub fn read_metrics_log(path: &Path) -> Result<Vec<MetricsRow>> {
    let csv_err = |source| FairfedError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(MetricsRow::HEADER.iter().copied()) {
        return Err(FairfedError::Summary(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = || FairfedError::Summary(format!("{}:{line}: malformed row", path.display()));
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad());
        rows.push(MetricsRow {
            round: rec[0].parse().map_err(|_| bad())?,
            arm: Arm::parse(&rec[1]).ok_or_else(bad)?,
            performance: num(2)?,
            fairness_variance: num(3)?,
            jain_perf: num(4)?,
            jain_utility: num(5)?,
            utility_cv: num(6)?,
            selgap_paper: num(7)?,
            selgap_share: num(8)?,
            gini: num(9)?,
            surrogate_contribution: num(10)?,
            n_available: rec[11].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// Last-round rows of a log, one per arm.
pub fn final_rows(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    let last = rows.iter().map(|r| r.round).max().unwrap_or(0);
    rows.iter().filter(|r| r.round == last).cloned().collect()
}
