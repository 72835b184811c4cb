//! The search loop: propose, evaluate, record, observe.
//!
//! Every trial is appended to a JSONL log before the next proposal, and a
//! session can be resumed from its log: the stored trials are replayed into a
//! fresh strategy, which reproduces the original state exactly because all
//! randomness is drawn from per-iteration seeded streams.

mod compare;
mod log;
mod report;

pub use self::compare::{
    compare, iterations_to, quartile_crash_rates, Comparison, ComparisonRow, ComparisonRun, StrategySummary,
    COMPARISON_COLUMNS,
};
pub use self::log::{
    canonical_lines, read_log, LogContents, LogHeader, LogWriter, Timing, TrialRecord, LOG_SCHEMA, LOG_VERSION,
    VOLATILE_FIELDS,
};
pub use self::report::{
    running_best, smooth, windowed_rate, SessionReport, DEFAULT_CRASH_WINDOW, DEFAULT_SMOOTHING_WINDOW,
    REPORT_COLUMNS,
};

use std::path::{Path, PathBuf};
use std::time::Instant;

use ::log::{info, warn};
use thiserror::Error;

use crate::deeptune::{feature_importance, DeepTuneError, DeepTuneModel};
use crate::harness::{objective_value, Evaluator, HarnessError, LandscapeBuilder, MetricStats, TrialResult};
use crate::seeding::{self, Purpose};
use crate::space::{Budget, ConfigSpace, JobSpec, Objective, SpaceError, StrategySpec};
use crate::strategies::{SearchContext, Strategy, StrategyConfig, StrategyError};
use crate::harness::EvaluatorSpec;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid job: {0}")]
    Job(#[from] SpaceError),
    #[error("strategy: {0}")]
    Strategy(StrategyError),
    #[error("evaluator: {0}")]
    Harness(#[from] HarnessError),
    #[error("model: {0}")]
    Model(#[from] DeepTuneError),
    #[error("i/o: {0}")]
    Io(String),
    #[error("log belongs to a different job: log fingerprint {log}, job fingerprint {job}")]
    FingerprintMismatch { log: String, job: String },
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("the budget allows no iterations")]
    BudgetZero,
    #[error("no results: {0}")]
    EmptyResults(String),
    #[error("jobs cannot be compared: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Config(String),
}

impl From<StrategyError> for OrchestratorError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::DeepTune(d) => OrchestratorError::Model(d),
            other => OrchestratorError::Strategy(other),
        }
    }
}

impl OrchestratorError {
    /// Process exit code: 2 when there is nothing to run or report, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            OrchestratorError::BudgetZero | OrchestratorError::EmptyResults(_) => 2,
            _ => 1,
        }
    }
}

/// Ordered trials with their timings and running metric statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchHistory {
    pub seed: u64,
    pub fingerprint: String,
    trials: Vec<TrialResult>,
    timings: Vec<Timing>,
    stats: MetricStats,
}

impl SearchHistory {
    pub fn new(seed: u64, fingerprint: impl Into<String>) -> Self {
        Self {
            seed,
            fingerprint: fingerprint.into(),
            ..Default::default()
        }
    }

    pub fn from_log(contents: &LogContents) -> Self {
        let mut h = Self::new(contents.header.seed, contents.header.fingerprint.clone());
        for r in &contents.records {
            h.push(r.result.clone(), r.timing);
        }
        h
    }

    pub fn push(&mut self, result: TrialResult, timing: Timing) {
        self.stats.observe(&result.metrics);
        self.trials.push(result);
        self.timings.push(timing);
    }

    pub fn trials(&self) -> &[TrialResult] {
        &self.trials
    }

    pub fn timings(&self) -> &[Timing] {
        &self.timings
    }

    pub fn stats(&self) -> &MetricStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Objective of every trial under the current metric statistics.
    pub fn objective_values(&self, objective: &Objective) -> Vec<Option<f64>> {
        self.trials
            .iter()
            .map(|t| objective_value(t, objective, &self.stats).ok())
            .collect()
    }

    /// Index and objective of the best trial; the earliest wins ties.
    pub fn best(&self, objective: &Objective) -> Option<(usize, f64)> {
        self.objective_values(objective)
            .into_iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .fold(None, |acc, (i, v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((i, v)),
            })
    }
}

/// Where a session keeps its files.
#[derive(Debug, Clone, Default)]
pub struct SessionOptions {
    /// JSONL log; `None` keeps the session in memory.
    pub log: Option<PathBuf>,
    /// Continue the log at `log` instead of starting a new one.
    pub resume: bool,
    /// Scratch directory for command targets (defaults next to the log, or a temp dir).
    pub workdir: Option<PathBuf>,
    pub crash_window: Option<usize>,
}

/// Load the model named by a job's `warm_start` key, checked against its space.
pub fn load_warm_start(job: &JobSpec) -> Result<Option<DeepTuneModel<f64>>, OrchestratorError> {
    let Some(path) = &job.warm_start else {
        return Ok(None);
    };
    if job.strategy.name != "deeptune" {
        return Err(OrchestratorError::Config(format!(
            "warm_start needs the deeptune strategy, job uses `{}`",
            job.strategy.name
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::Io(format!("{}: {e}", path.display())))?;
    Ok(Some(DeepTuneModel::warm_start(&text, &job.space)?))
}

/// One search session.
pub struct Session {
    job: JobSpec,
    strategy: Box<dyn Strategy>,
    evaluator: Evaluator,
    history: SearchHistory,
    log: Option<LogWriter>,
    crash_window: usize,
    started: Instant,
    /// Strategy time already spent towards the next trial (observe of the previous one).
    pending_strategy_seconds: f64,
    _scratch: Option<tempfile::TempDir>,
}

fn replay(strategy: &mut dyn Strategy, job: &JobSpec, trials: &[TrialResult]) -> Result<(), OrchestratorError> {
    let mut stats = MetricStats::default();
    for i in 0..trials.len() {
        stats.observe(&trials[i].metrics);
        let ctx = SearchContext {
            space: &job.space,
            trials: &trials[..=i],
            objective: &job.objective,
            stats: &stats,
            seed: job.seed,
        };
        strategy.observe(&ctx)?;
    }
    Ok(())
}

impl Session {
    pub fn start(job: JobSpec, opts: &SessionOptions) -> Result<Self, OrchestratorError> {
        if job.budget.iterations == Some(0) || job.budget.wall_clock_secs == Some(0.0) {
            return Err(OrchestratorError::BudgetZero);
        }
        job.validate()?;
        let warm = load_warm_start(&job)?;
        let config = StrategyConfig::from_spec(&job.strategy)?;
        let mut strategy = config.build(&job.space, job.seed, warm)?;

        let mut history = SearchHistory::new(job.seed, job.fingerprint());
        let log = match (&opts.log, opts.resume) {
            (Some(path), true) => {
                let contents = read_log(path)?;
                if contents.header.fingerprint != history.fingerprint {
                    return Err(OrchestratorError::FingerprintMismatch {
                        log: contents.header.fingerprint,
                        job: history.fingerprint,
                    });
                }
                history = SearchHistory::from_log(&contents);
                replay(strategy.as_mut(), &job, history.trials())?;
                info!("resumed {} trials from {}", history.len(), path.display());
                Some(LogWriter::append(path, contents.intact_len)?)
            }
            (Some(path), false) => Some(LogWriter::create(path, &LogHeader::new(&job))?),
            (None, true) => return Err(OrchestratorError::Config("resume needs a log path".into())),
            (None, false) => None,
        };

        let mut scratch = None;
        let workdir = match (&opts.workdir, &opts.log) {
            (Some(w), _) => w.clone(),
            (None, Some(log)) => log.with_extension("work"),
            (None, None) => {
                let dir = tempfile::tempdir().map_err(|e| OrchestratorError::Io(e.to_string()))?;
                let path = dir.path().to_path_buf();
                scratch = Some(dir);
                path
            }
        };
        let evaluator = Evaluator::new(&job.evaluator, job.seed, workdir);
        Ok(Self {
            crash_window: opts.crash_window.unwrap_or(DEFAULT_CRASH_WINDOW),
            job,
            strategy,
            evaluator,
            history,
            log,
            started: Instant::now(),
            pending_strategy_seconds: 0.0,
            _scratch: scratch,
        })
    }

    pub fn job(&self) -> &JobSpec {
        &self.job
    }

    pub fn history(&self) -> &SearchHistory {
        &self.history
    }

    pub fn strategy(&self) -> &dyn Strategy {
        self.strategy.as_ref()
    }

    fn budget_left(&self) -> bool {
        let Budget {
            iterations,
            wall_clock_secs,
        } = self.job.budget;
        iterations.is_none_or(|n| (self.history.len() as u64) < n)
            && wall_clock_secs.is_none_or(|s| self.started.elapsed().as_secs_f64() < s)
    }

    /// Run one iteration. Returns `false` when the budget is spent or the
    /// strategy has exhausted the space.
    pub fn step(&mut self) -> Result<bool, OrchestratorError> {
        if !self.budget_left() {
            return Ok(false);
        }
        let iteration = self.history.len() as u64;
        let t0 = Instant::now();
        let ctx = SearchContext {
            space: &self.job.space,
            trials: self.history.trials(),
            objective: &self.job.objective,
            stats: self.history.stats(),
            seed: self.job.seed,
        };
        let config = match self.strategy.propose(&ctx) {
            Ok(c) => c,
            Err(StrategyError::Exhausted(n)) => {
                warn!("search space exhausted after {n} configurations");
                return Ok(false);
            }
            Err(StrategyError::DeepTune(DeepTuneError::Exhausted)) => {
                warn!("search space exhausted after {iteration} configurations");
                return Ok(false);
            }
            Err(e) => return Err(e.into()),
        };
        let propose_seconds = self.pending_strategy_seconds + t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let result = self
            .evaluator
            .evaluate(&self.job.space, &config, iteration, &self.job.objective)?;
        let timing = Timing::now(propose_seconds, t1.elapsed().as_secs_f64());
        if let Some(log) = &mut self.log {
            log.write(&TrialRecord {
                result: result.clone(),
                timing,
            })?;
        }
        self.history.push(result, timing);

        let t2 = Instant::now();
        let ctx = SearchContext {
            space: &self.job.space,
            trials: self.history.trials(),
            objective: &self.job.objective,
            stats: self.history.stats(),
            seed: self.job.seed,
        };
        self.strategy.observe(&ctx)?;
        self.pending_strategy_seconds = t2.elapsed().as_secs_f64();
        Ok(true)
    }

    pub fn run(&mut self) -> Result<(), OrchestratorError> {
        while self.step()? {}
        Ok(())
    }

    /// Report including the surrogate's importance ranking when available.
    pub fn report(&self) -> SessionReport {
        let mut report = SessionReport::from_history(
            &self.history,
            &self.job.objective,
            self.strategy.name(),
            self.crash_window,
        );
        if let Some(model) = self.strategy.model().filter(|m| m.is_trained()) {
            let mut rng = seeding::stream(self.job.seed, Purpose::Importance, 0);
            report.importance = feature_importance(
                model,
                &self.job.space,
                self.history.trials(),
                &self.job.objective,
                self.history.stats(),
                &mut rng,
            )
            .ok();
        }
        report
    }
}

/// Run a job to completion.
pub fn run_session(job: &JobSpec, opts: &SessionOptions) -> Result<SessionReport, OrchestratorError> {
    let mut session = Session::start(job.clone(), opts)?;
    session.run()?;
    if session.history().is_empty() {
        return Err(OrchestratorError::EmptyResults("the session produced no trials".into()));
    }
    Ok(session.report())
}

/// Rebuild a session's history and strategy state from its log without running anything.
pub fn replay_log(path: &Path) -> Result<(JobSpec, SearchHistory, Box<dyn Strategy>), OrchestratorError> {
    let contents = read_log(path)?;
    let job = contents.header.job.clone();
    let history = SearchHistory::from_log(&contents);
    let warm = load_warm_start(&job)?;
    let mut strategy = StrategyConfig::from_spec(&job.strategy)?.build(&job.space, job.seed, warm)?;
    replay(strategy.as_mut(), &job, history.trials())?;
    Ok((job, history, strategy))
}

/// Report for a stored log. `crash_window` defaults to [`DEFAULT_CRASH_WINDOW`].
pub fn report_log(path: &Path, crash_window: Option<usize>) -> Result<SessionReport, OrchestratorError> {
    let contents = read_log(path)?;
    if contents.records.is_empty() {
        return Err(OrchestratorError::EmptyResults(format!("{} has no trials", path.display())));
    }
    let history = SearchHistory::from_log(&contents);
    let job = &contents.header.job;
    Ok(SessionReport::from_history(
        &history,
        &job.objective,
        &job.strategy.name,
        crash_window.unwrap_or(DEFAULT_CRASH_WINDOW),
    ))
}

/// A job over a freshly generated synthetic landscape.
pub fn synthetic_job(
    builder: &LandscapeBuilder,
    landscape_seed: u64,
    strategy: StrategySpec,
    iterations: u64,
    seed: u64,
) -> Result<JobSpec, OrchestratorError> {
    let mut rng = seeding::stream(landscape_seed, Purpose::Landscape, 0);
    let (space, landscape) = builder.generate(&mut rng)?;
    Ok(JobSpec {
        space,
        evaluator: EvaluatorSpec::Synthetic { landscape },
        objective: Objective::maximize("perf"),
        budget: Budget::iterations(iterations),
        strategy,
        seed,
        warm_start: None,
    })
}

/// Space of a job, for callers that only need the search domain.
pub fn job_space(job: &JobSpec) -> &ConfigSpace {
    &job.space
}
