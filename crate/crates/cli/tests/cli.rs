use std::path::Path;
use std::process::{Command, Output};

fn crashtune(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crashtune"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn synth(dir: &Path, name: &str, strategy: &str, iterations: u64, extra: &[&str]) {
    let iterations = iterations.to_string();
    let mut args = vec![
        "synth-job",
        "--strategy",
        strategy,
        "--iterations",
        &iterations,
        "--dims",
        "12",
        "--important",
        "3",
        "-o",
        name,
    ];
    args.extend(extra);
    let out = crashtune(&args, dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_succeeds_and_usage_errors_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let help = crashtune(&["--help"], dir.path());
    assert_eq!(code(&help), 0);
    for sub in ["run", "report", "compare", "importance", "infer-space", "export-model"] {
        assert!(stdout(&help).contains(sub), "help lists {sub}");
    }
    assert_eq!(code(&crashtune(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&crashtune(&["compare", "a.json"], dir.path())), 1, "--seeds is required");
}

#[test]
fn run_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "job.json", "random", 12, &[]);
    let run = crashtune(&["run", "job.json", "--csv", "run.csv"], d);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout(&run).contains("iterations:  12"));
    let log = std::fs::read_to_string(d.join("job.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 13, "header plus one line per trial");
    let header: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(header["version"].is_u64());
    assert_eq!(std::fs::read_to_string(d.join("run.csv")).unwrap().lines().count(), 13);

    let report = crashtune(&["report", "job.jsonl", "--window", "1", "--csv", "report.csv"], d);
    assert_eq!(code(&report), 0);
    let csv = std::fs::read_to_string(d.join("report.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[3].parse::<f64>().unwrap(), f[4].parse::<f64>().unwrap(), "window 1 rate is the indicator");
    }
}

#[test]
fn resume_completes_an_interrupted_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "job.json", "random", 10, &[]);
    assert_eq!(code(&crashtune(&["run", "job.json"], d)), 0);
    let full = std::fs::read_to_string(d.join("job.jsonl")).unwrap();
    let partial: Vec<&str> = full.lines().take(5).collect();
    std::fs::write(d.join("partial.jsonl"), partial.join("\n") + "\n").unwrap();
    let out = crashtune(&["run", "job.json", "--resume", "partial.jsonl"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let strip = |text: &str| -> Vec<serde_json::Value> {
        text.lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                for k in ["build_seconds", "test_seconds", "propose_seconds", "eval_seconds", "timestamp"] {
                    v.as_object_mut().unwrap().remove(k);
                }
                v
            })
            .collect()
    };
    let resumed = std::fs::read_to_string(d.join("partial.jsonl")).unwrap();
    assert_eq!(strip(&resumed), strip(&full));

    let other_seed = crashtune(&["run", "job.json", "--seed", "99", "--resume", "partial.jsonl"], d);
    assert_eq!(code(&other_seed), 1, "fingerprint mismatch is a configuration error");
}

#[test]
fn exit_codes_for_bad_jobs_zero_budgets_and_empty_logs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("broken.json"), "{ \"space\": ").unwrap();
    assert_eq!(code(&crashtune(&["run", "broken.json"], d)), 1);
    assert_eq!(code(&crashtune(&["run", "missing.json"], d)), 1);

    synth(d, "zero.json", "random", 0, &[]);
    assert_eq!(code(&crashtune(&["run", "zero.json"], d)), 2);

    synth(d, "job.json", "random", 3, &[]);
    assert_eq!(code(&crashtune(&["run", "job.json"], d)), 0);
    let log = std::fs::read_to_string(d.join("job.jsonl")).unwrap();
    std::fs::write(d.join("empty.jsonl"), log.lines().next().unwrap().to_string() + "\n").unwrap();
    assert_eq!(code(&crashtune(&["report", "empty.jsonl"], d)), 2);
    assert_eq!(code(&crashtune(&["export-model", "job.jsonl", "-o", "m.json"], d)), 1, "random has no model");
}

#[test]
fn compare_writes_one_row_per_iteration_plus_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "a.json", "random", 6, &[]);
    synth(d, "b.json", "grid", 6, &[]);
    let out = crashtune(&["compare", "a.json", "b.json", "--seeds", "1,2,3", "--csv", "cmp.csv"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.join("cmp.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 6 + 2 * 8);

    let to_stdout = crashtune(&["compare", "a.json", "b.json", "--seeds", "1,2,3"], d);
    assert_eq!(stdout(&to_stdout), csv);
}

#[test]
fn exported_model_warm_starts_and_ranks_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "source.json", "deeptune", 30, &[]);
    assert_eq!(code(&crashtune(&["run", "source.json"], d)), 0);
    let export = crashtune(&["export-model", "source.jsonl", "-o", "model.json"], d);
    assert_eq!(code(&export), 0, "{}", String::from_utf8_lossy(&export.stderr));

    let importance = crashtune(&["importance", "source.jsonl", "--model", "model.json"], d);
    assert_eq!(code(&importance), 0, "{}", String::from_utf8_lossy(&importance.stderr));
    assert_eq!(stdout(&importance).lines().count(), 12, "one line per parameter");

    synth(d, "target.json", "deeptune", 5, &["--related", "source.json", "--landscape-seed", "1"]);
    let mut job: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("target.json")).unwrap()).unwrap();
    job["warm_start"] = "model.json".into();
    std::fs::write(d.join("target.json"), job.to_string()).unwrap();
    let warm = crashtune(&["run", "target.json"], d);
    assert_eq!(code(&warm), 0, "{}", String::from_utf8_lossy(&warm.stderr));
}

#[test]
fn infer_space_probes_through_a_command() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let script = r#"case "$1" in
  read) case "$2" in
          conns) echo 100 ;;
          ratio) echo 0.5 ;;
          name) echo eth0 ;;
          *) exit 1 ;;
        esac ;;
  write) awk -v v="$3" 'BEGIN { exit !(v >= 0 && v <= 10000) }' ;;
esac
"#;
    std::fs::write(d.join("probe.sh"), script).unwrap();
    std::fs::write(d.join("options.txt"), "conns\nratio # a fraction\nname\n\nmissing\n").unwrap();
    let out = crashtune(
        &["infer-space", "--probe-cmd", "sh probe.sh", "--options", "options.txt", "-o", "space.json"],
        d,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let space: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("space.json")).unwrap()).unwrap();
    let text = space.to_string();
    assert!(text.contains("conns") && text.contains("ratio"));
    assert!(!text.contains("eth0") && !text.contains("missing"));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("name") && stderr.contains("missing"));
}
