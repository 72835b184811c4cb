//! Session summaries and CSV export.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{OrchestratorError, SearchHistory};
use crate::space::{Configuration, Objective};

pub const DEFAULT_CRASH_WINDOW: usize = 25;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 10;

pub const REPORT_COLUMNS: [&str; 7] = [
    "iteration",
    "objective",
    "best_so_far",
    "crashed",
    "crash_rate_windowed",
    "propose_seconds",
    "eval_seconds",
];

/// Trailing mean of `flags` over the last `window` entries (fewer at the start).
pub fn windowed_rate(flags: &[bool], window: usize) -> Vec<f64> {
    let as_f64: Vec<f64> = flags.iter().map(|&c| f64::from(u8::from(c))).collect();
    smooth(&as_f64, window)
}

/// Trailing moving average.
pub fn smooth(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut sum = 0.0;
    series
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            sum += v;
            if i >= window {
                sum -= series[i - window];
            }
            sum / (i + 1).min(window) as f64
        })
        .collect()
}

/// Running maximum; `None` until the first value.
pub fn running_best(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut best: Option<f64> = None;
    values
        .iter()
        .map(|v| {
            if let Some(v) = v {
                best = Some(best.map_or(*v, |b| b.max(*v)));
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionReport {
    pub strategy: String,
    pub iterations: usize,
    pub best_config: Option<Configuration>,
    pub best_objective: Option<f64>,
    pub best_iteration: Option<u64>,
    /// Objective per iteration (maximization framing); `None` for crashes.
    pub objective: Vec<Option<f64>>,
    pub best_so_far: Vec<Option<f64>>,
    pub crashed: Vec<bool>,
    pub crash_rate: Vec<f64>,
    pub crash_window: usize,
    pub propose_seconds: Vec<f64>,
    pub eval_seconds: Vec<f64>,
    /// Ranked parameter importance, when the strategy has a surrogate.
    pub importance: Option<Vec<(String, f64)>>,
}

impl SessionReport {
    pub fn from_history(history: &SearchHistory, objective: &Objective, strategy: &str, crash_window: usize) -> Self {
        let values = history.objective_values(objective);
        let best_so_far = running_best(&values);
        let crashed: Vec<bool> = history.trials().iter().map(|t| t.crashed()).collect();
        let best = history.best(objective);
        Self {
            strategy: strategy.to_string(),
            iterations: history.len(),
            best_config: best.map(|(i, _)| history.trials()[i].config.clone()),
            best_objective: best.map(|(_, v)| v),
            best_iteration: best.map(|(i, _)| history.trials()[i].iteration),
            crash_rate: windowed_rate(&crashed, crash_window),
            crash_window,
            objective: values,
            best_so_far,
            crashed,
            propose_seconds: history.timings().iter().map(|t| t.propose_seconds).collect(),
            eval_seconds: history.timings().iter().map(|t| t.eval_seconds).collect(),
            importance: None,
        }
    }

    pub fn final_best(&self) -> Option<f64> {
        self.best_so_far.last().copied().flatten()
    }

    /// Fraction of crashes among 1-based iterations `first..=last`.
    pub fn crash_rate_between(&self, first: usize, last: usize) -> f64 {
        let slice = &self.crashed[first.saturating_sub(1).min(self.crashed.len())..last.min(self.crashed.len())];
        if slice.is_empty() {
            return 0.0;
        }
        slice.iter().filter(|&&c| c).count() as f64 / slice.len() as f64
    }

    /// Best-so-far series smoothed for display; iterations before the first
    /// successful trial are skipped.
    pub fn smoothed_best(&self, window: usize) -> Vec<f64> {
        let present: Vec<f64> = self.best_so_far.iter().flatten().copied().collect();
        smooth(&present, window)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OrchestratorError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| OrchestratorError::Io(e.to_string());
        w.write_record(REPORT_COLUMNS).map_err(err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for i in 0..self.iterations {
            w.write_record([
                (i + 1).to_string(),
                opt(self.objective[i]),
                opt(self.best_so_far[i]),
                u8::from(self.crashed[i]).to_string(),
                self.crash_rate[i].to_string(),
                self.propose_seconds[i].to_string(),
                self.eval_seconds[i].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| OrchestratorError::Io(e.to_string()))
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), OrchestratorError> {
        let file = std::fs::File::create(path).map_err(|e| OrchestratorError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(file)
    }
}
