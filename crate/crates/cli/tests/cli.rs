use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/mass_luminosity.csv");

fn drsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drsr")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

fn minimal(dir: &Path) -> PathBuf {
    write_config(
        dir,
        r#"{"method":"drsr","loss":"mse","dataset":{"kind":"nguyen","benchmark":"1"},"budget":10000,"population":200}"#,
    )
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "jsonl"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn minimal_run_writes_traces_and_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal(tmp.path());
    let out = tmp.path().join("out");
    ok(&drsr(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let trial = out.join("trial_000");
    for f in ["best_fitness.csv", "coverage.csv", "qd_score.csv", "hypervolume.csv", "acc_best_base.csv", "archive.jsonl"] {
        assert!(trial.join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(trial.join("best_fitness.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert!(csv.lines().next().unwrap().ends_with("seed=0"));
    assert!(out.join("config.json").is_file());
}

#[test]
fn replay_is_byte_identical_across_job_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&drsr(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--trials", "2", "--jobs", "1"]));
    ok(&drsr(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--trials", "2", "--jobs", "2"]));
    for t in ["trial_000", "trial_001"] {
        assert_eq!(csv_files(&a.join(t)), csv_files(&b.join(t)), "{t}");
    }
    assert_ne!(csv_files(&a.join("trial_000")), csv_files(&a.join("trial_001")));
}

#[test]
fn validation_errors_exit_1_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"method":"drsr","loss":"huber","dataset":{"kind":"mixture"},"output_dir":"x"}"#);
    let out = drsr(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("loss:"));

    let cfg = write_config(tmp.path(), r#"{"method":"drsr","loss":"mse","dataset":{"kind":"mixture"},"budget":0,"population":1}"#);
    let out = drsr(&["run", "--config", cfg.to_str().unwrap(), "--out", "unused"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("budget:") && err.contains("population:"), "{err}");

    let cfg = minimal(tmp.path());
    let out = drsr(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "missing output directory");
    let out = drsr(&["query", "--archive", "missing.jsonl", "--rep", "3:1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"method":"drsr","loss":"mse","dataset":{"kind":"csv","path":"absent.csv","x_columns":["a"],"y_column":"b"}}"#,
    );
    let out = drsr(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn aggregate_summarises_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = minimal(tmp.path());
    let runs = tmp.path().join("runs");
    ok(&drsr(&["run", "--config", cfg.to_str().unwrap(), "--out", runs.to_str().unwrap(), "--trials", "3"]));
    let summary = tmp.path().join("summary.csv");
    ok(&drsr(&["aggregate", "--in", runs.to_str().unwrap(), "--out", summary.to_str().unwrap()]));
    let text = fs::read_to_string(&summary).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with("# config_hash=") && meta.ends_with("seeds=0,1,2"), "{meta}");
    assert_eq!(lines.next(), Some("metric,evaluations,trials,mean,ci_low,ci_high"));
    let mut metrics = std::collections::BTreeSet::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        metrics.insert(f[0].to_string());
        assert_eq!(f[2], "3");
        let (mean, lo, hi): (f64, f64, f64) = (f[3].parse().unwrap(), f[4].parse().unwrap(), f[5].parse().unwrap());
        assert!(lo <= mean && mean <= hi, "{line}");
    }
    assert!(metrics.contains("best_fitness") && metrics.contains("acc_best_noise"));

    let again = tmp.path().join("again.csv");
    ok(&drsr(&["aggregate", "--in", runs.to_str().unwrap(), "--out", again.to_str().unwrap()]));
    assert_eq!(fs::read(&summary).unwrap(), fs::read(&again).unwrap());

    let out = drsr(&["aggregate", "--in", runs.join("trial_000").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "a single trial cannot be aggregated");
}

fn rows(stdout: &[u8]) -> Vec<Vec<String>> {
    String::from_utf8_lossy(stdout)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

#[test]
fn query_respects_the_box() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"method":"drsr","loss":"medae","budget":30000,"population":300,
                "dataset":{{"kind":"csv","path":"{FIXTURE}","x_columns":["logM"],"y_column":"logL","transforms":["minmax01"]}}}}"#
        ),
    );
    let out = tmp.path().join("astro");
    ok(&drsr(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let archive = out.join("trial_000/archive.jsonl");
    let a = archive.to_str().unwrap();

    let q = drsr(&["query", "--archive", a, "--rep", "1:5", "--trans", "0:2", "--top", "6"]);
    ok(&q);
    let table = rows(&q.stdout);
    assert_eq!(table.len(), 6);
    let mut last = f64::INFINITY;
    for r in &table {
        let (fitness, nodes, trans): (f64, usize, usize) = (r[1].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap());
        assert!((1..=5).contains(&nodes) && trans <= 2, "{r:?}");
        assert!(fitness <= last);
        last = fitness;
    }

    let all = rows(&drsr(&["query", "--archive", a, "--rep", "1:20", "--trans", "0:4", "--top", "100000"]).stdout);
    let total = fs::read_to_string(&archive).unwrap().lines().count() - 1;
    assert_eq!(all.len(), total, "top_k larger than the matches returns them all");

    let clustered = rows(&drsr(&["query", "--archive", a, "--clusters", "0,1", "--top", "100000"]).stdout);
    assert!(clustered.iter().all(|r| r[3] == "0" || r[3] == "1"));
}

#[test]
fn query_with_no_matches_prints_an_empty_table() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("archive.jsonl");
    fs::write(
        &path,
        concat!(
            r#"{"meta":{"config_hash":"x","seed":0,"method":"drsr"}}"#,
            "\n",
            r#"{"out_cluster":0,"rep_power":3,"trans_count":0,"fitness":0.5,"loss":1.0,"expr":"add(var0, const1)","weights":[1.0,1.0,1.0]}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = drsr(&["query", "--archive", path.to_str().unwrap(), "--rep", "1:1", "--trans", "0:4"]);
    ok(&out);
    assert!(rows(&out.stdout).is_empty());
    let out = drsr(&["query", "--archive", path.to_str().unwrap(), "--rep", "3:3", "--top", "10"]);
    assert_eq!(rows(&out.stdout).len(), 1);
}
