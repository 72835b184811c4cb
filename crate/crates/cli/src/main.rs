use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crashtune::deeptune::{feature_importance, DeepTuneError, DeepTuneModel};
use crashtune::harness::{EvaluatorSpec, LandscapeBuilder};
use crashtune::orchestrator::{
    compare, read_log, replay_log, report_log, run_session, synthetic_job, OrchestratorError, SearchHistory,
    SessionOptions, SessionReport,
};
use crashtune::seeding::{self, Purpose};
use crashtune::space::{infer_space, parse_job, JobSpec, StrategySpec};

mod probe;

#[derive(Parser)]
#[command(name = "crashtune", version, about = "Crash-aware configuration search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a search job, writing one JSONL line per trial.
    Run {
        job: PathBuf,
        /// Override the job's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue an interrupted session from its log; the logged seed is reused unless `--seed` is given.
        #[arg(long, conflicts_with = "log")]
        resume: Option<PathBuf>,
        /// Log path for a new session (default: the job path with a .jsonl extension).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also write the per-iteration report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Summarize a session log.
    Report {
        log: PathBuf,
        /// Crash-rate window in iterations.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run several jobs that differ only in strategy over the same seeds.
    Compare {
        #[arg(required = true)]
        jobs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Write the comparison CSV here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rank parameters by their influence on a saved model's predictions.
    Importance {
        log: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Infer a configuration space by probing live options.
    ///
    /// The probe command is called as `<cmd> read <option>` (prints the
    /// current value) and `<cmd> write <option> <value>` (exit status 0 when
    /// the value was accepted).
    InferSpace {
        #[arg(long)]
        probe_cmd: String,
        /// File with one option name per line; `#` starts a comment.
        #[arg(long)]
        options: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Rebuild the surrogate of a deeptune session and save it as a model document.
    ExportModel {
        log: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a job over a generated synthetic landscape.
    SynthJob {
        #[arg(long, default_value = "deeptune")]
        strategy: String,
        #[arg(long, default_value_t = 200)]
        iterations: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seed of the landscape generator.
        #[arg(long, default_value_t = 0)]
        landscape_seed: u64,
        #[arg(long, default_value_t = 50)]
        dims: usize,
        #[arg(long, default_value_t = 8)]
        important: usize,
        #[arg(long, default_value_t = 0.3)]
        crash_fraction: f64,
        /// Derive the landscape from this job's, on the same space.
        #[arg(long)]
        related: Option<PathBuf>,
        /// Important parameters kept from the `--related` landscape.
        #[arg(long, default_value_t = 6)]
        shared: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn io_err(path: &Path, e: std::io::Error) -> OrchestratorError {
    OrchestratorError::Io(format!("{}: {e}", path.display()))
}

fn load_job(path: &Path) -> Result<JobSpec, OrchestratorError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut job = parse_job(&text).map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
    if let Some(ws) = &job.warm_start {
        if ws.is_relative() {
            job.warm_start = Some(path.parent().unwrap_or(Path::new(".")).join(ws));
        }
    }
    Ok(job)
}

fn write_file(path: &Path, text: &str) -> Result<(), OrchestratorError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn print_report(report: &SessionReport) {
    println!("strategy:    {}", report.strategy);
    println!("iterations:  {}", report.iterations);
    let crashes = report.crashed.iter().filter(|&&c| c).count();
    println!(
        "crashes:     {crashes} ({:.1}%)",
        100.0 * report.crash_rate_between(1, report.iterations)
    );
    match (report.best_objective, report.best_iteration, &report.best_config) {
        (Some(v), Some(i), Some(c)) => {
            println!("best:        {v} (iteration {})", i + 1);
            println!(
                "best config: {}",
                serde_json::to_string(c).expect("configurations serialize")
            );
        }
        _ => println!("best:        none (every trial crashed)"),
    }
    if let Some(importance) = &report.importance {
        println!("importance:");
        for (name, score) in importance.iter().take(10) {
            println!("  {name:<24} {score:.4}");
        }
    }
}

fn run(cli: Cli) -> Result<(), OrchestratorError> {
    match cli.command {
        Command::Run {
            job,
            seed,
            resume,
            log,
            csv,
        } => {
            let mut spec = load_job(&job)?;
            match (seed, &resume) {
                (Some(s), _) => spec.seed = s,
                (None, Some(log)) => spec.seed = read_log(log)?.header.seed,
                (None, None) => {}
            }
            let opts = SessionOptions {
                log: Some(resume.clone().or(log).unwrap_or_else(|| job.with_extension("jsonl"))),
                resume: resume.is_some(),
                ..Default::default()
            };
            let report = run_session(&spec, &opts)?;
            print_report(&report);
            println!("log:         {}", opts.log.as_ref().expect("set above").display());
            if let Some(path) = csv {
                report.save_csv(&path)?;
            }
        }
        Command::Report { log, window, csv } => {
            let report = report_log(&log, window)?;
            print_report(&report);
            if let Some(path) = csv {
                report.save_csv(&path)?;
            }
        }
        Command::Compare { jobs, seeds, csv } => {
            let specs = jobs.iter().map(|p| load_job(p)).collect::<Result<Vec<_>, _>>()?;
            let result = compare(&specs, &seeds)?;
            match csv {
                Some(path) => {
                    result.save_csv(&path)?;
                    for s in &result.summaries {
                        let opt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
                        println!(
                            "{:<12} median best {}  median iterations to {} {}  crash rate by quartile {:.2?}",
                            s.strategy,
                            opt(s.median_final_best),
                            opt(result.threshold),
                            opt(s.median_iterations_to_threshold),
                            s.crash_rate_quartiles
                        );
                    }
                }
                None => result.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::Importance { log, model } => {
            let contents = read_log(&log)?;
            let job = &contents.header.job;
            let text = std::fs::read_to_string(&model).map_err(|e| io_err(&model, e))?;
            let model = DeepTuneModel::<f64>::warm_start(&text, &job.space)?;
            let history = SearchHistory::from_log(&contents);
            let mut rng = seeding::stream(job.seed, Purpose::Importance, 0);
            let ranking = feature_importance(
                &model,
                &job.space,
                history.trials(),
                &job.objective,
                history.stats(),
                &mut rng,
            )
            .map_err(|e| match e {
                DeepTuneError::InsufficientHistory { .. } => OrchestratorError::EmptyResults(e.to_string()),
                e => e.into(),
            })?;
            for (name, score) in ranking {
                println!("{name}\t{score}");
            }
        }
        Command::InferSpace {
            probe_cmd,
            options,
            output,
        } => {
            let text = std::fs::read_to_string(&options).map_err(|e| io_err(&options, e))?;
            let names: Vec<String> = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            if names.is_empty() {
                return Err(OrchestratorError::Config(format!("{} lists no options", options.display())));
            }
            let mut probe = probe::CommandProbe::new(probe_cmd);
            let inferred = infer_space(&mut probe, &names);
            for (name, default) in &inferred.non_numeric {
                eprintln!("not numeric, left out: {name} = {default}");
            }
            for (name, reason) in &inferred.skipped {
                eprintln!("unreadable, left out: {name}: {reason}");
            }
            let json = serde_json::to_string_pretty(&inferred.space).expect("spaces serialize");
            match output {
                Some(path) => write_file(&path, &json)?,
                None => println!("{json}"),
            }
        }
        Command::ExportModel { log, output } => {
            let (job, history, strategy) = replay_log(&log)?;
            let Some(model) = strategy.model() else {
                return Err(OrchestratorError::Config(format!(
                    "{} was produced by the `{}` strategy, which has no model",
                    log.display(),
                    job.strategy.name
                )));
            };
            if history.is_empty() || !model.is_trained() {
                return Err(OrchestratorError::EmptyResults(format!(
                    "{} has no trials to train a model on",
                    log.display()
                )));
            }
            write_file(&output, &model.save())?;
        }
        Command::SynthJob {
            strategy,
            iterations,
            seed,
            landscape_seed,
            dims,
            important,
            crash_fraction,
            related,
            shared,
            output,
        } => {
            let builder = LandscapeBuilder {
                dims,
                important,
                crash_fraction,
                ..Default::default()
            };
            let mut job = synthetic_job(
                &builder,
                landscape_seed,
                StrategySpec::named(&strategy),
                iterations,
                seed,
            )?;
            if let Some(path) = related {
                let base = load_job(&path)?;
                let EvaluatorSpec::Synthetic { landscape } = &base.evaluator else {
                    return Err(OrchestratorError::Config(format!("{} is not a synthetic job", path.display())));
                };
                let mut rng = seeding::stream(landscape_seed, Purpose::Landscape, 1);
                let derived = landscape.related(&base.space, shared, builder.bump_width, &mut rng);
                job.space = base.space.clone();
                job.evaluator = EvaluatorSpec::Synthetic { landscape: derived };
            }
            job.validate()?;
            write_file(&output, &job.to_json())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
