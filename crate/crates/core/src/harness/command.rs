//! External build/test commands as evaluation targets.
//!
//! Each phase runs as `sh -c <command> sh <config.json>` in its own process
//! group, with every parameter exported as `WF_PARAM_<NAME>`. On timeout the
//! whole group receives SIGINT, then SIGKILL once the grace period is over.

use std::collections::BTreeMap;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CrashReason, HarnessError, Outcome, TrialResult};
use crate::space::{ConfigSpace, Configuration, Objective};

const ENV_PREFIX: &str = "WF_PARAM_";

fn default_grace() -> f64 {
    5.0
}

/// How metrics are read from the test command's standard output.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricRule {
    /// The last non-empty line: a bare number (the objective's metric) or a
    /// JSON object mapping metric names to numbers.
    #[default]
    LastLine,
    /// One regular expression per metric; the last match wins and the value is
    /// taken from the `value` capture group, or group 1 if there is none.
    Patterns(BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandTarget {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build: Option<String>,
    pub test: String,
    pub timeout_secs: f64,
    #[serde(default = "default_grace")]
    pub grace_secs: f64,
    #[serde(default)]
    pub metrics: MetricRule,
}

impl CommandTarget {
    pub fn new(test: impl Into<String>, timeout_secs: f64) -> Self {
        Self {
            build: None,
            test: test.into(),
            timeout_secs,
            grace_secs: default_grace(),
            metrics: MetricRule::LastLine,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.timeout_secs > 0.0) || !self.timeout_secs.is_finite() {
            return Err(HarnessError::Target(format!("timeout must be > 0, got {}", self.timeout_secs)));
        }
        if !(self.grace_secs >= 0.0) || !self.grace_secs.is_finite() {
            return Err(HarnessError::Target(format!("grace must be >= 0, got {}", self.grace_secs)));
        }
        if self.test.trim().is_empty() {
            return Err(HarnessError::Target("test command is empty".into()));
        }
        if let MetricRule::Patterns(p) = &self.metrics {
            for (name, re) in p {
                Regex::new(re).map_err(|e| HarnessError::Target(format!("pattern for `{name}`: {e}")))?;
            }
        }
        Ok(())
    }
}

/// Environment variable name for a parameter.
pub fn env_name(param: &str) -> String {
    let mut s = String::from(ENV_PREFIX);
    s.extend(param.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' }));
    s
}

enum Finish {
    Exited(ExitStatus, String),
    TimedOut,
}

/// Runs a [`CommandTarget`], remembering the last successfully built configuration.
#[derive(Debug)]
pub struct CommandEvaluator {
    target: CommandTarget,
    workdir: PathBuf,
    last_built: Option<Configuration>,
}

impl CommandEvaluator {
    pub fn new(target: CommandTarget, workdir: PathBuf) -> Self {
        Self {
            target,
            workdir,
            last_built: None,
        }
    }

    pub fn target(&self) -> &CommandTarget {
        &self.target
    }

    pub fn evaluate(
        &mut self,
        space: &ConfigSpace,
        config: &Configuration,
        iteration: u64,
        objective: &Objective,
    ) -> Result<TrialResult, HarnessError> {
        std::fs::create_dir_all(&self.workdir).map_err(|e| HarnessError::Io(e.to_string()))?;
        let json_path = self.workdir.join(format!("trial-{iteration}.json"));
        let json = serde_json::to_string_pretty(config).expect("configurations serialize");
        std::fs::write(&json_path, json).map_err(|e| HarnessError::Io(format!("{}: {e}", json_path.display())))?;
        let env: Vec<(String, String)> = config.values.iter().map(|(k, v)| (env_name(k), v.to_string())).collect();

        let mut result = TrialResult {
            iteration,
            config: config.clone(),
            outcome: Outcome::Ran,
            metrics: BTreeMap::new(),
            build_seconds: 0.0,
            test_seconds: 0.0,
        };

        if let Some(build) = &self.target.build {
            let stale = self.last_built.as_ref().is_none_or(|prev| space.needs_rebuild(prev, config));
            if stale {
                let start = Instant::now();
                let finish = self.run(build, &json_path, &env)?;
                result.build_seconds = start.elapsed().as_secs_f64();
                match finish {
                    Finish::Exited(status, _) if status.success() => self.last_built = Some(config.clone()),
                    Finish::Exited(..) => {
                        self.last_built = None;
                        result.outcome = Outcome::Crashed(CrashReason::Build);
                        return Ok(result);
                    }
                    Finish::TimedOut => {
                        self.last_built = None;
                        result.outcome = Outcome::Crashed(CrashReason::Timeout);
                        return Ok(result);
                    }
                }
            }
        }

        let start = Instant::now();
        let finish = self.run(&self.target.test, &json_path, &env)?;
        result.test_seconds = start.elapsed().as_secs_f64();
        match finish {
            Finish::TimedOut => result.outcome = Outcome::Crashed(CrashReason::Timeout),
            Finish::Exited(status, _) if !status.success() => {
                result.outcome = Outcome::Crashed(CrashReason::BootOrRun)
            }
            Finish::Exited(_, stdout) => match parse_metrics(&self.target.metrics, &stdout, objective) {
                Some(m) => result.metrics = m,
                None => result.outcome = Outcome::Crashed(CrashReason::Parse),
            },
        }
        Ok(result)
    }

    fn run(&self, cmd: &str, json: &std::path::Path, env: &[(String, String)]) -> Result<Finish, HarnessError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .arg("sh")
            .arg(json)
            .envs(env.iter().map(|(k, v)| (k, v)))
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0)
            .spawn()
            .map_err(|e| HarnessError::Io(format!("spawning sh: {e}")))?;
        let pgid = child.id() as libc::pid_t;
        let stdout = drain(child.stdout.take().expect("piped"));
        let stderr = drain(child.stderr.take().expect("piped"));

        let deadline = Instant::now() + Duration::from_secs_f64(self.target.timeout_secs);
        let status = loop {
            if let Some(status) = child.try_wait().map_err(|e| HarnessError::Io(e.to_string()))? {
                break Some(status);
            }
            if Instant::now() >= deadline {
                break None;
            }
            thread::sleep(Duration::from_millis(5));
        };

        let finish = match status {
            Some(status) => {
                signal_group(pgid, libc::SIGKILL);
                let out = collect(stdout);
                let err = collect(stderr);
                if !err.is_empty() {
                    debug!("`{cmd}` stderr: {}", err.trim_end());
                }
                if status.code() == Some(127) {
                    return Err(HarnessError::CommandNotFound(format!("{cmd}: {}", err.trim_end())));
                }
                Finish::Exited(status, out)
            }
            None => {
                warn!("`{cmd}` exceeded {} s; interrupting", self.target.timeout_secs);
                signal_group(pgid, libc::SIGINT);
                let grace_end = Instant::now() + Duration::from_secs_f64(self.target.grace_secs);
                while Instant::now() < grace_end && group_alive(pgid) {
                    let _ = child.try_wait();
                    thread::sleep(Duration::from_millis(5));
                }
                signal_group(pgid, libc::SIGKILL);
                let _ = child.wait();
                while group_alive(pgid) {
                    thread::sleep(Duration::from_millis(5));
                }
                collect(stdout);
                collect(stderr);
                Finish::TimedOut
            }
        };
        Ok(finish)
    }
}

fn drain<R: Read + Send + 'static>(mut pipe: R) -> mpsc::Receiver<String> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        let _ = tx.send(String::from_utf8_lossy(&buf).into_owned());
    });
    rx
}

/// Output of a reader thread; empty if the pipe is held open by an escaped process.
fn collect(rx: mpsc::Receiver<String>) -> String {
    rx.recv_timeout(Duration::from_secs(1)).unwrap_or_default()
}

fn signal_group(pgid: libc::pid_t, sig: libc::c_int) {
    // SAFETY: kill(2) with a negative pid only signals the process group.
    unsafe {
        libc::kill(-pgid, sig);
    }
}

fn group_alive(pgid: libc::pid_t) -> bool {
    // SAFETY: signal 0 performs only the existence/permission check.
    unsafe { libc::kill(-pgid, 0) == 0 }
}

fn parse_metrics(rule: &MetricRule, stdout: &str, objective: &Objective) -> Option<BTreeMap<String, f64>> {
    let names = objective.metric_names();
    let metrics: BTreeMap<String, f64> = match rule {
        MetricRule::LastLine => {
            let line = stdout.lines().rev().map(str::trim).find(|l| !l.is_empty())?;
            if let Ok(v) = line.parse::<f64>() {
                if names.len() != 1 {
                    return None;
                }
                [(names[0].to_string(), v)].into_iter().collect()
            } else {
                let obj: BTreeMap<String, serde_json::Value> = serde_json::from_str(line).ok()?;
                obj.into_iter().filter_map(|(k, v)| v.as_f64().map(|x| (k, x))).collect()
            }
        }
        MetricRule::Patterns(patterns) => patterns
            .iter()
            .filter_map(|(name, re)| {
                let re = Regex::new(re).ok()?;
                let caps = re.captures_iter(stdout).last()?;
                let m = caps.name("value").or_else(|| caps.get(1))?;
                Some((name.clone(), m.as_str().trim().parse::<f64>().ok()?))
            })
            .collect(),
    };
    let complete = names.iter().all(|n| metrics.get(*n).is_some_and(|v| v.is_finite()));
    complete.then_some(metrics)
}
