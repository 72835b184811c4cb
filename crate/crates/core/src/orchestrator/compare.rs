//! Head-to-head runs of several strategies on the same problem.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{run_session, OrchestratorError, SessionOptions, SessionReport};
use crate::space::JobSpec;

/// One finished session inside a comparison.
#[derive(Debug, Clone)]
pub struct ComparisonRun {
    pub strategy: String,
    pub seed: u64,
    pub report: SessionReport,
}

/// Per-strategy aggregate over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: String,
    pub seeds: usize,
    pub median_final_best: Option<f64>,
    /// Median 1-based iteration at which best-so-far first reaches the shared
    /// threshold; runs that never reach it count as their length plus one.
    pub median_iterations_to_threshold: Option<f64>,
    /// Crash rate in each quarter of the run, averaged over seeds.
    pub crash_rate_quartiles: [f64; 4],
    /// Crash rate over whole runs, averaged over seeds.
    pub crash_rate: f64,
}

/// One line of the comparison CSV: either one iteration of one run
/// (`kind == "trial"`) or one summary statistic of a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub kind: &'static str,
    pub strategy: String,
    pub seed: Option<u64>,
    pub iteration: Option<usize>,
    pub objective: Option<f64>,
    pub best_so_far: Option<f64>,
    pub crashed: Option<bool>,
    pub metric: Option<String>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<ComparisonRun>,
    pub summaries: Vec<StrategySummary>,
    /// Smallest per-strategy median final best.
    pub threshold: Option<f64>,
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// First 1-based iteration whose best-so-far is at least `threshold`.
pub fn iterations_to(report: &SessionReport, threshold: f64) -> usize {
    report
        .best_so_far
        .iter()
        .position(|b| b.is_some_and(|b| b >= threshold))
        .map_or(report.iterations + 1, |i| i + 1)
}

/// Crash rate in each quarter of a run.
pub fn quartile_crash_rates(report: &SessionReport) -> [f64; 4] {
    let n = report.iterations;
    std::array::from_fn(|q| report.crash_rate_between(q * n / 4 + 1, (q + 1) * n / 4))
}

fn labels(jobs: &[JobSpec]) -> Vec<String> {
    jobs.iter()
        .enumerate()
        .map(|(i, j)| {
            let name = &j.strategy.name;
            if jobs.iter().filter(|o| &o.strategy.name == name).count() > 1 {
                format!("{name}#{}", i + 1)
            } else {
                name.clone()
            }
        })
        .collect()
}

/// Run every job under every seed, in parallel, and summarize.
///
/// The jobs must share their space, evaluator and objective.
pub fn compare(jobs: &[JobSpec], seeds: &[u64]) -> Result<Comparison, OrchestratorError> {
    let Some(first) = jobs.first() else {
        return Err(OrchestratorError::Config("compare needs at least one job".into()));
    };
    if seeds.is_empty() {
        return Err(OrchestratorError::Config("compare needs at least one seed".into()));
    }
    for (i, j) in jobs.iter().enumerate().skip(1) {
        if j.space != first.space {
            return Err(OrchestratorError::Mismatch(format!("job {} has a different space", i + 1)));
        }
        if j.evaluator != first.evaluator {
            return Err(OrchestratorError::Mismatch(format!("job {} has a different evaluator", i + 1)));
        }
        if j.objective != first.objective {
            return Err(OrchestratorError::Mismatch(format!("job {} has a different objective", i + 1)));
        }
    }
    let labels = labels(jobs);
    let tasks: Vec<(usize, u64)> = (0..jobs.len())
        .flat_map(|j| seeds.iter().map(move |&s| (j, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SessionReport, OrchestratorError>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(tasks.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(j, seed)) = tasks.get(k) else { break };
                let mut job = jobs[j].clone();
                job.seed = seed;
                let r = run_session(&job, &SessionOptions::default());
                results.lock().expect("no worker panicked")[k] = Some(r);
            });
        }
    });
    let mut runs = Vec::with_capacity(tasks.len());
    for ((j, seed), r) in tasks.iter().zip(results.into_inner().expect("no worker panicked")) {
        let report = r.expect("every task ran")?;
        runs.push(ComparisonRun {
            strategy: labels[*j].clone(),
            seed: *seed,
            report,
        });
    }
    Ok(summarize(runs, &labels))
}

fn summarize(runs: Vec<ComparisonRun>, labels: &[String]) -> Comparison {
    fn of<'a>(runs: &'a [ComparisonRun], l: &'a str) -> impl Iterator<Item = &'a ComparisonRun> {
        runs.iter().filter(move |r| r.strategy == l)
    }
    let medians: Vec<Option<f64>> = labels
        .iter()
        .map(|l| median(&mut of(&runs, l).filter_map(|r| r.report.final_best()).collect::<Vec<_>>()))
        .collect();
    let threshold = medians.iter().flatten().copied().reduce(f64::min);
    let summaries = labels
        .iter()
        .zip(&medians)
        .map(|(l, &median_final_best)| {
            let runs: Vec<&ComparisonRun> = of(&runs, l).collect();
            let n = runs.len() as f64;
            let mut quartiles = [0.0; 4];
            for r in &runs {
                for (q, v) in quartile_crash_rates(&r.report).into_iter().enumerate() {
                    quartiles[q] += v / n;
                }
            }
            StrategySummary {
                strategy: l.clone(),
                seeds: runs.len(),
                median_final_best,
                median_iterations_to_threshold: threshold.and_then(|t| {
                    median(&mut runs.iter().map(|r| iterations_to(&r.report, t) as f64).collect::<Vec<_>>())
                }),
                crash_rate_quartiles: quartiles,
                crash_rate: runs
                    .iter()
                    .map(|r| r.report.crash_rate_between(1, r.report.iterations))
                    .sum::<f64>()
                    / n,
            }
        })
        .collect();
    Comparison {
        runs,
        summaries,
        threshold,
    }
}

pub const COMPARISON_COLUMNS: [&str; 9] = [
    "kind",
    "strategy",
    "seed",
    "iteration",
    "objective",
    "best_so_far",
    "crashed",
    "metric",
    "value",
];

impl Comparison {
    /// One row per run and iteration, then the per-strategy summaries.
    pub fn rows(&self) -> Vec<ComparisonRow> {
        let mut rows = Vec::new();
        for run in &self.runs {
            let r = &run.report;
            for i in 0..r.iterations {
                rows.push(ComparisonRow {
                    kind: "trial",
                    strategy: run.strategy.clone(),
                    seed: Some(run.seed),
                    iteration: Some(i + 1),
                    objective: r.objective[i],
                    best_so_far: r.best_so_far[i],
                    crashed: Some(r.crashed[i]),
                    metric: None,
                    value: None,
                });
            }
        }
        for s in &self.summaries {
            let mut push = |metric: &str, value: Option<f64>| {
                rows.push(ComparisonRow {
                    kind: "summary",
                    strategy: s.strategy.clone(),
                    seed: None,
                    iteration: None,
                    objective: None,
                    best_so_far: None,
                    crashed: None,
                    metric: Some(metric.into()),
                    value,
                })
            };
            push("threshold", self.threshold);
            push("median_final_best", s.median_final_best);
            push("median_iterations_to_threshold", s.median_iterations_to_threshold);
            push("crash_rate", Some(s.crash_rate));
            for (q, v) in s.crash_rate_quartiles.iter().enumerate() {
                push(&format!("crash_rate_q{}", q + 1), Some(*v));
            }
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OrchestratorError> {
        let err = |e: csv::Error| OrchestratorError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COMPARISON_COLUMNS).map_err(err)?;
        fn opt<V: ToString>(v: Option<V>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        for r in self.rows() {
            w.write_record([
                r.kind.to_string(),
                r.strategy,
                opt(r.seed),
                opt(r.iteration),
                opt(r.objective),
                opt(r.best_so_far),
                opt(r.crashed.map(u8::from)),
                opt(r.metric),
                opt(r.value),
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut []), None);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
