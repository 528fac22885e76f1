use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scc_core::{tradeoff_curve, SystemConfig};

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name)
}

fn scc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scc")).args(args).output().unwrap()
}

fn stdout_ok(args: &[&str]) -> String {
    let out = scc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn records(csv_text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(csv_text.as_bytes())
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn fig2_tradeoff_has_default_grid() {
    let text = stdout_ok(&["tradeoff", "--config", preset("fig2.json").to_str().unwrap()]);
    assert!(text.starts_with("M,R_scc_envelope,R_stw_envelope,R_upper_bound,best_p,best_q\n"));
    let rows = records(&text);
    assert_eq!(rows.len(), 200);
    assert_eq!(&rows[0][0], "0");
    for r in &rows {
        assert!(!r[2].is_empty() && !r[3].is_empty());
    }
}

#[test]
fn empty_grid_prints_only_the_header() {
    let text = stdout_ok(&["tradeoff", "--config", preset("fig2.json").to_str().unwrap(), "--grid", "0:10:0"]);
    assert_eq!(text, "M,R_scc_envelope,R_stw_envelope,R_upper_bound,best_p,best_q\n");
}

#[test]
fn fig4_writes_one_file_per_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig4.csv");
    stdout_ok(&[
        "tradeoff",
        "--config",
        preset("fig4.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let mut zero_memory_rate = Vec::new();
    for label in ["dw0.7", "dw0.8", "dw0.9"] {
        let text = std::fs::read_to_string(dir.path().join(format!("fig4_{label}.csv"))).unwrap();
        let rows = records(&text);
        assert_eq!(rows.len(), 200);
        // thirty receivers is past the exhaustive bound's reach
        assert!(rows.iter().all(|r| r[3].is_empty()));
        zero_memory_rate.push(rows[0][1].parse::<f64>().unwrap());
    }
    // worse weak channels lower the cache-free rate
    assert!(zero_memory_rate[0] > zero_memory_rate[1] && zero_memory_rate[1] > zero_memory_rate[2]);
}

#[test]
fn multi_curve_needs_an_output_path() {
    let out = scc(&["tradeoff", "--config", preset("fig4.json").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn simulate_at_zero_rate_is_vacuous() {
    let text = stdout_ok(&[
        "simulate",
        "--config",
        preset("fig2.json").to_str().unwrap(),
        "--rate-fraction",
        "0",
        "--n",
        "1000",
        "--trials",
        "5",
    ]);
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["p_e"], 0.0);
    assert_eq!(report["trials"], 5);
}

#[test]
fn simulate_above_capacity_fails_with_a_message() {
    let out = scc(&[
        "simulate",
        "--config",
        preset("fig2.json").to_str().unwrap(),
        "--rate-fraction",
        "1.1",
        "--trials",
        "2",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("packets"));
}

#[test]
fn simulate_writes_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.jsonl");
    stdout_ok(&[
        "simulate",
        "--config",
        preset("example1.json").to_str().unwrap(),
        "--trials",
        "1",
        "--plan-out",
        plan.to_str().unwrap(),
    ]);
    let lines = std::fs::read_to_string(plan).unwrap();
    let kinds: Vec<String> = lines
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["kind"].as_str().unwrap().to_owned())
        .collect();
    // one multicast, six plus six joint blocks, two unicasts
    assert_eq!(kinds.len(), 15);
}

fn write_study(dir: &Path, weak_counts: &str) -> PathBuf {
    let path = dir.join("study.json");
    let erasures: Vec<String> = (1..=5)
        .map(|k| format!("{}", 0.9 - 0.01 * k as f64))
        .chain((6..=15).map(|l| format!("{}", 0.2 - 0.01 * l as f64)))
        .collect();
    std::fs::write(
        &path,
        format!(
            r#"{{"allocation_study": {{"num_files": 100, "packet_bits": 10, "erasures": [{}], "weak_counts": {weak_counts}}}}}"#,
            erasures.join(",")
        ),
    )
    .unwrap();
    path
}

#[test]
fn single_weak_count_gives_one_curve() {
    let dir = tempfile::tempdir().unwrap();
    let study = write_study(dir.path(), "[5]");
    let rows = records(&stdout_ok(&["allocation-study", "--config", study.to_str().unwrap(), "--grid", "0:500:11"]));
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| &r[0] == "5"));
}

#[test]
fn all_cached_curve_is_the_all_weak_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let study = write_study(dir.path(), "[15]");
    let rows = records(&stdout_ok(&["allocation-study", "--config", study.to_str().unwrap(), "--grid", "0:3000:31"]));

    let mut erasures: Vec<f64> = (1..=5).map(|k| 0.9 - 0.01 * k as f64).collect();
    erasures.extend((6..=15).map(|l| 0.2 - 0.01 * l as f64));
    let cfg = SystemConfig::new(15, 0, 100, 10, erasures).unwrap();
    let curve = tradeoff_curve(&cfg);
    for r in rows {
        let t: f64 = r[1].parse().unwrap();
        let rate: f64 = r[2].parse().unwrap();
        let want = curve.envelope.rate_at(t / 15.0);
        assert!((rate - want).abs() <= 1e-12 * want, "T={t}: {rate} vs {want}");
    }
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, r#"{"num_weak": 2, "num_strong": 1}"#).unwrap();
    let unsorted = dir.path().join("unsorted.json");
    std::fs::write(
        &unsorted,
        r#"{"num_weak": 2, "num_strong": 1, "num_files": 3, "packet_bits": 4, "erasures": [0.5, 0.9, 0.1]}"#,
    )
    .unwrap();
    let fig2 = preset("fig2.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["tradeoff", "--config", "/no/such/file.json"],
        vec!["tradeoff", "--config", broken.to_str().unwrap()],
        vec!["tradeoff", "--config", unsorted.to_str().unwrap()],
        vec!["tradeoff", "--config", fig2.to_str().unwrap(), "--grid", "5:1:3"],
        vec!["simulate", "--config", fig2.to_str().unwrap(), "--idx", "3,1"],
        vec!["simulate", "--config", fig2.to_str().unwrap(), "--rate-fraction", "-1"],
        vec!["allocation-study", "--config", fig2.to_str().unwrap()],
    ];
    for args in cases {
        let out = scc(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty(), "{args:?} said nothing");
    }
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let config = preset("example1.json");
    let args = [
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "11",
        "--trials",
        "4",
    ];
    let a = scc(&args);
    let b = scc(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
