use std::path::Path;
use std::process::{Command, Output};

use covert_lab::harness::config::{ExperimentConfig, Prob, CONFIG_SCHEMA_VERSION};
use covert_lab::harness::experiments::*;
use covert_lab::harness::report::{config_of_report, Report};
use covert_lab::harness::stats::*;
use covert_lab::primitives::BitVector;
use covert_lab::Error;

const SMALL_OPTIMAL: &str = r#"
schema_version = 1
experiment = "optimal-signaling"
seed = 5
trials = 2000

[params]
p = "0.1"
n = 20
fairness_runs = 8
exact_max_n = 6
"#;

fn small_optimal() -> ExperimentConfig {
    ExperimentConfig::from_toml(SMALL_OPTIMAL).unwrap()
}

fn cli(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_covert-lab"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env(WORKERS_ENV, w),
        None => cmd.env_remove(WORKERS_ENV),
    };
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn config_roundtrips_through_canonical_text() {
    let cfg = small_optimal();
    assert_eq!(cfg.schema_version, CONFIG_SCHEMA_VERSION);
    assert_eq!(cfg.trials_or(7), 2000);
    assert_eq!(ExperimentConfig::from_toml(&cfg.canonical()).unwrap(), cfg);
    let mut with_out = cfg.clone();
    with_out.output = Some("somewhere.jsonl".into());
    assert_eq!(with_out.canonical(), cfg.canonical());
    assert_eq!(ExperimentConfig::new("lspn", 3).trials_or(7), 7);
}

#[test]
fn config_rejects_bad_input() {
    let bad_field = SMALL_OPTIMAL.replace("trials = 2000", "trails = 2000");
    assert!(matches!(ExperimentConfig::from_toml(&bad_field), Err(Error::Config(_))));
    let bad_version = SMALL_OPTIMAL.replace("schema_version = 1", "schema_version = 2");
    assert!(ExperimentConfig::from_toml(&bad_version).is_err());
    let bad_param = SMALL_OPTIMAL.replace("n = 20", "n = 20\nlambda = 3");
    let cfg = ExperimentConfig::from_toml(&bad_param).unwrap();
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    let float_p = SMALL_OPTIMAL.replace("p = \"0.1\"", "p = 0.1");
    assert!(run_experiment(&ExperimentConfig::from_toml(&float_p).unwrap()).is_err());
    assert!(matches!(find_experiment("nope"), Err(Error::UnknownExperiment(_))));
}

#[test]
fn probabilities_are_decimal_strings() {
    assert_eq!(Prob::new("0.25").unwrap().value(), 0.25);
    assert_eq!(Prob::new("0").unwrap().value(), 0.0);
    assert!(Prob::new("1.5").is_err());
    assert!(Prob::new("-0.1").is_err());
    assert!(Prob::new("abc").is_err());
}

#[test]
fn registry_lists_every_criterion_once() {
    let mut crits: Vec<u8> = experiments().iter().filter_map(|e| e.criterion).collect();
    crits.sort();
    assert_eq!(crits, (1..=11).collect::<Vec<u8>>());
    let suite = default_suite(9);
    assert_eq!(suite.len(), experiments().len());
    assert!(suite.iter().all(|c| c.seed == 9 && find_experiment(&c.experiment).is_ok()));
}

#[test]
fn report_lines_and_replay() {
    let cfg = small_optimal();
    let report = run_experiment(&cfg).unwrap();
    assert!(report.passed(), "{}", report.table());
    assert_eq!(report.criterion, Some(4));
    assert!(report.metric("criterion.4").unwrap().pass);
    let text = report.to_jsonl();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), report.metrics.len() + 2);
    assert_eq!(lines[0]["kind"], "config");
    assert_eq!(lines[0]["seed"], 5);
    assert!(lines[1..lines.len() - 1].iter().all(|l| l["kind"] == "metric"));
    let last = lines.last().unwrap();
    assert_eq!(last["kind"], "summary");
    assert_eq!(last["passed"], true);
    assert_eq!(last["failed"], 0);
    assert!(!text.contains("runtime"));
    assert_eq!(config_of_report(&text).unwrap(), cfg);

    let (again, same): (Report, bool) = replay(&text).unwrap();
    assert!(same);
    assert_eq!(again.metrics, report.metrics);

    let mut other = cfg.clone();
    other.seed = 6;
    let (_, same) = replay(&run_experiment(&other).unwrap().to_jsonl().replace("\"seed\":6", "\"seed\":7")).unwrap();
    assert!(!same);
    assert!(config_of_report("").is_err());
    assert!(config_of_report(text.lines().last().unwrap()).is_err());
}

// Reference values from tests/oracles/stats_oracle.py.
#[test]
fn stats_match_oracle() {
    let ci = wilson(30, 100, Z95);
    assert!((ci.lo - 0.2189488529493276).abs() < 1e-12);
    assert!((ci.hi - 0.3958485463334666).abs() < 1e-12);
    assert!((binomial_pmf(10, 3, 0.2) - 0.2013265920000001).abs() < 1e-12);
    let bits: Vec<u8> = "1101001000111101011000101110010011010001".bytes().map(|b| b - b'0').collect();
    let bits = BitVector::from_bits(&bits);
    assert_eq!(monobit_z(&bits), 0.0);
    assert!((serial_p_value(&bits) - 0.8187307530779795).abs() < 1e-9);
    assert!((runs_z(&bits) - 0.6407232755171874).abs() < 1e-12);
    assert!(frequency_battery(&bits, 0.01).passed);
    assert!(!frequency_battery(&BitVector::zeros(64), 0.01).passed);
    assert!((normal_quantile(0.975) - Z95).abs() < 1e-9);
    assert_eq!(tv_distance(&[0.5, 0.5], &[0.25, 0.75]).unwrap(), 0.25);
    assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    let (m, sd) = mean_and_sd(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    let mut p = Proportion::new(3, 10);
    p.add(true);
    p.merge(Proportion::new(1, 10));
    assert_eq!((p.successes, p.trials), (5, 21));
}

#[test]
fn cli_lists_experiments_and_fixtures() {
    let out = cli(&["list-experiments"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for e in experiments() {
        assert!(text.contains(e.id));
    }
    let out = cli(&["fixtures"], None);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("micro"));
}

#[test]
fn cli_reports_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL_OPTIMAL);
    let mut reports = Vec::new();
    for (w, sub) in [("1", "one"), ("3", "three")] {
        let out_dir = dir.path().join(sub);
        let out = cli(&["run", &cfg, "--out", out_dir.to_str().unwrap()], Some(w));
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(std::fs::read_to_string(out_dir.join("optimal-signaling.jsonl")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);

    let report = dir.path().join("one/optimal-signaling.jsonl");
    let out = cli(&["replay", report.to_str().unwrap()], Some("2"));
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("replay byte-identical"));

    let reseeded = dir.path().join("reseeded");
    let out = cli(&["run", &cfg, "--seed", "11", "--out", reseeded.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(reseeded.join("optimal-signaling.jsonl")).unwrap();
    assert_eq!(config_of_report(&text).unwrap().seed, 11);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let failing = SMALL_OPTIMAL.replace("exact_max_n = 6", "exact_max_n = 6\nfairness_runs_typo = 1");
    let path = write(dir.path(), "bad.toml", &failing);
    assert_eq!(cli(&["run", &path], None).status.code(), Some(2));
    let unknown = SMALL_OPTIMAL.replace("optimal-signaling", "no-such-experiment");
    let path = write(dir.path(), "unknown.toml", &unknown);
    assert_eq!(cli(&["run", &path], None).status.code(), Some(2));
    assert_eq!(cli(&["run"], None).status.code(), Some(2));
    assert_eq!(cli(&["replay", "/nonexistent/report.jsonl"], None).status.code(), Some(2));

    // a threshold no run can meet makes the criterion fail
    let strict = r#"
schema_version = 1
experiment = "compiler"
seed = 2
trials = 4
output = "OUT"

[params]
min_agreement = 1.5
"#;
    let out_path = dir.path().join("strict.jsonl");
    let path = write(dir.path(), "strict.toml", &strict.replace("OUT", out_path.to_str().unwrap()));
    let out = cli(&["run", &path], None);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_path).unwrap();
    assert!(text.lines().last().unwrap().contains("\"passed\":false"));
}
