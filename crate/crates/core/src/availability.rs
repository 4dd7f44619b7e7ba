//! Availability processes, device-trace discretization and online
//! availability estimation.
//!
//! Rounds are 1-based throughout: the first call to
//! [`AvailabilityProcess::step`] is round `t = 1`.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::invalid;
use crate::{Error, Result};

/// Piecewise-linear schedule of a client's availability mean over rounds.
///
/// Values are held constant before the first and after the last breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSchedule {
    breakpoints: Vec<(usize, f64)>,
}

impl DriftSchedule {
    pub fn new(mut breakpoints: Vec<(usize, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(invalid(
                "breakpoints",
                "drift schedule needs at least one breakpoint",
            ));
        }
        breakpoints.sort_by_key(|&(t, _)| t);
        for w in breakpoints.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(invalid("breakpoints", "duplicate breakpoint round"));
            }
        }
        for &(_, v) in &breakpoints {
            check_mean("breakpoints", v)?;
        }
        Ok(Self { breakpoints })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![(1, value)])
    }

    /// Linear ramp from `from` at round `start` to `to` at round `end`.
    pub fn ramp(start: usize, from: f64, end: usize, to: f64) -> Result<Self> {
        if end <= start {
            return Self::constant(to);
        }
        Self::new(vec![(start, from), (end, to)])
    }

    pub fn value_at(&self, t: usize) -> f64 {
        let bp = &self.breakpoints;
        let idx = bp.partition_point(|&(r, _)| r <= t);
        if idx == 0 {
            return bp[0].1;
        }
        if idx == bp.len() {
            return bp[bp.len() - 1].1;
        }
        let (t0, v0) = bp[idx - 1];
        let (t1, v1) = bp[idx];
        let frac = (t - t0) as f64 / (t1 - t0) as f64;
        v0 + frac * (v1 - v0)
    }

    pub fn breakpoints(&self) -> &[(usize, f64)] {
        &self.breakpoints
    }
}

fn check_mean(name: &'static str, pi: f64) -> Result<()> {
    if pi > 0.0 && pi <= 1.0 {
        Ok(())
    } else {
        Err(invalid(
            name,
            alloc::format!("availability mean {pi} outside (0, 1]"),
        ))
    }
}

/// Generator family for per-round availability indicators.
#[derive(Debug, Clone, PartialEq)]
pub enum AvailabilityModel {
    /// Independent Bernoulli draws with per-client mean.
    Bernoulli { pi: Vec<f64> },
    /// On/off chain with stationary mean `pi` and correlation time `sojourn`.
    ///
    /// Transitions are `P(off -> on) = pi / s` and `P(on -> off) = (1 - pi) / s`,
    /// so the stationary mean is `pi` for every `s >= 1`, the mean ON run is
    /// `s / (1 - pi)` rounds and `s = 1` degenerates to i.i.d. Bernoulli.
    TwoStateMarkov { pi: Vec<f64>, sojourn: Vec<f64> },
    /// Bernoulli draws whose mean follows a schedule.
    Drifting { schedules: Vec<DriftSchedule> },
    /// Replays recorded timelines verbatim.
    TraceDriven { timelines: Vec<Vec<bool>> },
}

impl AvailabilityModel {
    pub fn bernoulli(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(invalid("pi", "need at least one client"));
        }
        for &p in &pi {
            check_mean("pi", p)?;
        }
        Ok(Self::Bernoulli { pi })
    }

    pub fn markov(pi: Vec<f64>, sojourn: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(invalid("pi", "need at least one client"));
        }
        if sojourn.len() != pi.len() {
            return Err(invalid("sojourn", "one sojourn length per client"));
        }
        for &p in &pi {
            check_mean("pi", p)?;
        }
        if let Some(s) = sojourn.iter().find(|s| !(**s >= 1.0) || !s.is_finite()) {
            return Err(invalid(
                "sojourn",
                alloc::format!("sojourn {s} must be >= 1"),
            ));
        }
        Ok(Self::TwoStateMarkov { pi, sojourn })
    }

    pub fn drifting(schedules: Vec<DriftSchedule>) -> Result<Self> {
        if schedules.is_empty() {
            return Err(invalid("schedules", "need at least one client"));
        }
        Ok(Self::Drifting { schedules })
    }

    pub fn trace(timelines: Vec<Vec<bool>>) -> Result<Self> {
        if timelines.is_empty() {
            return Err(invalid("timelines", "need at least one client"));
        }
        let len = timelines[0].len();
        if len == 0 {
            return Err(invalid("timelines", "timeline must be non-empty"));
        }
        if timelines.iter().any(|tl| tl.len() != len) {
            return Err(invalid(
                "timelines",
                "all timelines must have the same length",
            ));
        }
        Ok(Self::TraceDriven { timelines })
    }

    pub fn n_clients(&self) -> usize {
        match self {
            Self::Bernoulli { pi } | Self::TwoStateMarkov { pi, .. } => pi.len(),
            Self::Drifting { schedules } => schedules.len(),
            Self::TraceDriven { timelines } => timelines.len(),
        }
    }

    /// Number of rounds the model can produce, `None` when unbounded.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            Self::TraceDriven { timelines } => Some(timelines[0].len()),
            _ => None,
        }
    }

    /// True mean `pi_k(t)` of client `k` at round `t`.
    pub fn mean_at(&self, k: usize, t: usize) -> f64 {
        match self {
            Self::Bernoulli { pi } | Self::TwoStateMarkov { pi, .. } => pi[k],
            Self::Drifting { schedules } => schedules[k].value_at(t),
            Self::TraceDriven { timelines } => {
                let tl = &timelines[k];
                tl.iter().filter(|a| **a).count() as f64 / tl.len() as f64
            }
        }
    }

    pub fn is_stationary(&self) -> bool {
        match self {
            Self::Drifting { schedules } => schedules.iter().all(|s| {
                let v0 = s.breakpoints()[0].1;
                s.breakpoints().iter().all(|&(_, v)| v == v0)
            }),
            _ => true,
        }
    }
}

/// Running instance of an [`AvailabilityModel`].
///
/// Only the Markov family carries state between rounds; it is initialized
/// from the stationary distribution on round 1.
#[derive(Debug, Clone)]
pub struct AvailabilityProcess {
    model: AvailabilityModel,
    chain: Vec<bool>,
}

impl AvailabilityProcess {
    pub fn new(model: AvailabilityModel) -> Self {
        let n = model.n_clients();
        Self {
            model,
            chain: vec![false; n],
        }
    }

    pub fn model(&self) -> &AvailabilityModel {
        &self.model
    }

    pub fn n_clients(&self) -> usize {
        self.model.n_clients()
    }

    /// Availability vector `A(t)`.
    pub fn step<R: Rng + ?Sized>(&mut self, t: usize, rng: &mut R) -> Result<Vec<bool>> {
        let mut out = vec![false; self.n_clients()];
        self.step_into(t, rng, &mut out)?;
        Ok(out)
    }

    pub fn step_into<R: Rng + ?Sized>(
        &mut self,
        t: usize,
        rng: &mut R,
        out: &mut [bool],
    ) -> Result<()> {
        if t == 0 {
            return Err(Error::RoundOutOfRange {
                round: 0,
                len: self.model.horizon().unwrap_or(0),
            });
        }
        match &self.model {
            AvailabilityModel::Bernoulli { pi } => {
                for (a, &p) in out.iter_mut().zip(pi) {
                    *a = rng.gen::<f64>() < p;
                }
            }
            AvailabilityModel::TwoStateMarkov { pi, sojourn } => {
                for (k, a) in out.iter_mut().enumerate() {
                    let u = rng.gen::<f64>();
                    let on = if t == 1 {
                        u < pi[k]
                    } else if self.chain[k] {
                        u >= (1.0 - pi[k]) / sojourn[k]
                    } else {
                        u < pi[k] / sojourn[k]
                    };
                    self.chain[k] = on;
                    *a = on;
                }
            }
            AvailabilityModel::Drifting { schedules } => {
                for (a, s) in out.iter_mut().zip(schedules) {
                    *a = rng.gen::<f64>() < s.value_at(t);
                }
            }
            AvailabilityModel::TraceDriven { timelines } => {
                let len = timelines[0].len();
                if t > len {
                    return Err(Error::RoundOutOfRange { round: t, len });
                }
                for (a, tl) in out.iter_mut().zip(timelines) {
                    *a = tl[t - 1];
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Device traces

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEventKind {
    WifiOn,
    WifiOff,
    ChargeOn,
    ChargeOff,
}

impl TraceEventKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wifi_on" => Some(Self::WifiOn),
            "wifi_off" => Some(Self::WifiOff),
            "charge_on" => Some(Self::ChargeOn),
            "charge_off" => Some(Self::ChargeOff),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::WifiOn => "wifi_on",
            Self::WifiOff => "wifi_off",
            Self::ChargeOn => "charge_on",
            Self::ChargeOff => "charge_off",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub timestamp: f64,
    pub device: String,
    pub kind: TraceEventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTimeline {
    pub device: String,
    /// One entry per round of the shared grid.
    pub rounds: Vec<bool>,
    /// Share of time between first observation and the end of the trace
    /// spent charging on WiFi, in percent.
    pub availability_pct: f64,
    /// Set when the device produced a single event (percentage forced to 0).
    pub single_event: bool,
    /// Charging-and-WiFi intervals in seconds.
    pub intervals: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub start: f64,
    pub end: f64,
    pub round_secs: f64,
    /// Sorted by device id.
    pub devices: Vec<DeviceTimeline>,
}

impl ParsedTrace {
    pub fn n_rounds(&self) -> usize {
        self.devices.first().map_or(0, |d| d.rounds.len())
    }

    pub fn timelines(&self) -> Vec<Vec<bool>> {
        self.devices.iter().map(|d| d.rounds.clone()).collect()
    }
}

/// Converts WiFi/charging events into per-round availability timelines.
///
/// A device is available while it is charging and on WiFi; both conditions
/// start out off. A round counts as available when that state holds for at
/// least half of it. `horizon` fixes the end of the observation period,
/// otherwise the latest event closes it.
pub fn parse_device_trace(
    events: &[TraceEvent],
    round_secs: f64,
    horizon: Option<f64>,
) -> Result<ParsedTrace> {
    if !(round_secs > 0.0) || !round_secs.is_finite() {
        return Err(invalid("round_secs", "round length must be positive"));
    }
    if events.is_empty() {
        return Err(invalid("events", "trace contains no events"));
    }
    if let Some(e) = events.iter().find(|e| !e.timestamp.is_finite()) {
        return Err(invalid(
            "events",
            alloc::format!("non-finite timestamp for {}", e.device),
        ));
    }
    let start = events
        .iter()
        .map(|e| e.timestamp)
        .fold(f64::INFINITY, f64::min);
    let last = events
        .iter()
        .map(|e| e.timestamp)
        .fold(f64::NEG_INFINITY, f64::max);
    let end = match horizon {
        Some(h) if h < last => {
            return Err(invalid("horizon", "horizon precedes the last event"));
        }
        Some(h) => h,
        None => last,
    };
    let n_rounds = libm::ceil((end - start) / round_secs).max(1.0) as usize;

    let mut by_device: BTreeMap<&str, Vec<&TraceEvent>> = BTreeMap::new();
    for e in events {
        by_device.entry(e.device.as_str()).or_default().push(e);
    }

    let mut devices = Vec::with_capacity(by_device.len());
    for (device, mut evs) in by_device {
        evs.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let intervals = available_intervals(&evs, end);
        let first = evs[0].timestamp;
        let single_event = evs.len() == 1;
        let span = end - first;
        let availability_pct = if single_event || span <= 0.0 {
            0.0
        } else {
            100.0 * intervals.iter().map(|(s, e)| e - s).sum::<f64>() / span
        };
        let rounds = (0..n_rounds)
            .map(|r| {
                let lo = start + r as f64 * round_secs;
                let hi = lo + round_secs;
                overlap(&intervals, lo, hi) >= 0.5 * round_secs
            })
            .collect();
        devices.push(DeviceTimeline {
            device: String::from(device),
            rounds,
            availability_pct,
            single_event,
            intervals,
        });
    }
    Ok(ParsedTrace {
        start,
        end,
        round_secs,
        devices,
    })
}

fn available_intervals(events: &[&TraceEvent], end: f64) -> Vec<(f64, f64)> {
    let mut wifi = false;
    let mut charging = false;
    let mut open: Option<f64> = None;
    let mut out = Vec::new();
    for e in events {
        match e.kind {
            TraceEventKind::WifiOn => wifi = true,
            TraceEventKind::WifiOff => wifi = false,
            TraceEventKind::ChargeOn => charging = true,
            TraceEventKind::ChargeOff => charging = false,
        }
        let up = wifi && charging;
        match (open, up) {
            (None, true) => open = Some(e.timestamp),
            (Some(s), false) => {
                if e.timestamp > s {
                    out.push((s, e.timestamp));
                }
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        if end > s {
            out.push((s, end));
        }
    }
    out
}

fn overlap(intervals: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    intervals
        .iter()
        .map(|&(s, e)| (e.min(hi) - s.max(lo)).max(0.0))
        .sum()
}

// ---------------------------------------------------------------------------
// Estimation

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMode {
    RunningMean,
    SlidingWindow(usize),
}

pub const DEFAULT_PI_FLOOR: f64 = 0.01;

/// Online per-client estimate of the availability mean, floored at
/// `floor` so reciprocal weights stay finite.
#[derive(Debug, Clone)]
pub struct AvailabilityEstimator {
    mode: EstimatorMode,
    floor: f64,
    hits: Vec<u64>,
    windows: Vec<VecDeque<bool>>,
    estimates: Vec<f64>,
}

impl AvailabilityEstimator {
    pub fn new(n_clients: usize, mode: EstimatorMode, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor <= 1.0) {
            return Err(invalid("floor", "estimator floor must lie in (0, 1]"));
        }
        if let EstimatorMode::SlidingWindow(0) = mode {
            return Err(invalid(
                "window",
                "sliding window must hold at least one round",
            ));
        }
        let windows = match mode {
            EstimatorMode::SlidingWindow(w) => vec![VecDeque::with_capacity(w); n_clients],
            EstimatorMode::RunningMean => Vec::new(),
        };
        Ok(Self {
            mode,
            floor,
            hits: vec![0; n_clients],
            windows,
            estimates: vec![1.0; n_clients],
        })
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Records `A_k(t)` and returns the new estimate of `pi_k`.
    ///
    /// The running mean divides by `t`, so it assumes one update per round.
    pub fn update(&mut self, k: usize, available: bool, t: usize) -> f64 {
        debug_assert!(t >= 1);
        self.hits[k] += u64::from(available);
        let raw = match self.mode {
            EstimatorMode::RunningMean => self.hits[k] as f64 / t.max(1) as f64,
            EstimatorMode::SlidingWindow(w) => {
                let win = &mut self.windows[k];
                if win.len() == w && win.pop_front() == Some(true) {
                    self.hits[k] -= 1;
                }
                win.push_back(available);
                self.hits[k] as f64 / win.len() as f64
            }
        };
        let est = raw.max(self.floor);
        self.estimates[k] = est;
        est
    }

    pub fn update_all(&mut self, available: &[bool], t: usize) {
        for (k, &a) in available.iter().enumerate() {
            self.update(k, a, t);
        }
    }

    pub fn estimate(&self, k: usize) -> f64 {
        self.estimates[k]
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowDiagnostics {
    /// Largest estimator error over the window and all clients.
    pub epsilon: f64,
    /// Largest per-client total variation of the true mean over the window.
    pub delta: f64,
    pub start: usize,
    pub len: usize,
}

/// Tracking error and drift on rounds `[start, start + len - 1]`.
///
/// Trajectories are round-major: `true_pi[t - 1][k]`.
pub fn window_diagnostics(
    true_pi: &[Vec<f64>],
    estimates: &[Vec<f64>],
    start: usize,
    len: usize,
) -> Result<WindowDiagnostics> {
    let available = true_pi.len().min(estimates.len());
    if start == 0 || len == 0 || start + len - 1 > available {
        return Err(Error::WindowOutOfRange {
            start,
            len,
            available,
        });
    }
    let rows = start - 1..start - 1 + len;
    let mut epsilon = 0.0f64;
    for t in rows.clone() {
        if true_pi[t].len() != estimates[t].len() {
            return Err(Error::DimensionMismatch {
                expected: true_pi[t].len(),
                found: estimates[t].len(),
            });
        }
        for (p, e) in true_pi[t].iter().zip(&estimates[t]) {
            epsilon = epsilon.max((e - p).abs());
        }
    }
    let n = true_pi[start - 1].len();
    let mut delta = 0.0f64;
    for k in 0..n {
        let tv: f64 = true_pi[rows.clone()]
            .windows(2)
            .map(|w| (w[1][k] - w[0][k]).abs())
            .sum();
        delta = delta.max(tv);
    }
    Ok(WindowDiagnostics {
        epsilon,
        delta,
        start,
        len,
    })
}
