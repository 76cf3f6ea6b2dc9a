use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_cellbal");

/// A config whose cells wear out 100 times faster than the defaults, so a
/// lifespan takes weeks of simulated time instead of decades.
fn fast_config(n_scenarios: usize, strategies: Value, patterns: Value) -> Value {
    json!({
        "schema_version": 1,
        "master_seed": 11,
        "n_scenarios": n_scenarios,
        "output_dir": "unused",
        "sim": { "aging": { "a": 0.083, "b": 0.3789 } },
        "strategies": strategies,
        "patterns": patterns,
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn cellbal(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    for (k, _) in std::env::vars() {
        if k.starts_with("CELLBAL_") {
            cmd.env_remove(k);
        }
    }
    cmd.env("CELLBAL_LOG", "warn").args(args).envs(env.iter().copied());
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(csv: &Path) -> Vec<String> {
    std::fs::read_to_string(csv).unwrap().lines().skip(2).map(String::from).collect()
}

#[test]
fn one_scenario_gives_one_bundle_and_regenerates_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &fast_config(1, json!([{"kind": "none"}]), json!(["A"])));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&cellbal(&["generate", "--config", s(&cfg), "--out", s(&a)], &[]));
    ok(&cellbal(&["generate", "--config", s(&cfg), "--out", s(&b)], &[]));
    let files: Vec<_> = std::fs::read_dir(a.join("scenarios")).unwrap().collect();
    assert_eq!(files.len(), 1);
    let bundle = |d: &Path| std::fs::read(d.join("scenarios/scenario_000.json")).unwrap();
    assert_eq!(bundle(&a), bundle(&b));
}

#[test]
fn fifty_scenarios_have_distinct_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &fast_config(50, json!([{"kind": "none"}]), json!(["A"])));
    let out = dir.path().join("o");
    ok(&cellbal(&["generate", "--config", s(&cfg), "--out", s(&out)], &[]));
    let mut graphs = std::collections::BTreeSet::new();
    for i in 0..50 {
        let text = std::fs::read_to_string(out.join(format!("scenarios/scenario_{i:03}.json"))).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        graphs.insert(v["graph"]["edges"].to_string());
    }
    assert_eq!(graphs.len(), 50);
}

#[test]
fn single_run_grid_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &fast_config(1, json!([{"kind": "none"}]), json!(["A"])));
    let out = dir.path().join("o");
    ok(&cellbal(&["generate", "--config", s(&cfg), "--out", s(&out)], &[]));
    ok(&cellbal(&["simulate", "--out", s(&out)], &[]));
    assert_eq!(data_rows(&out.join("results.csv")).len(), 1);
    let head = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(head.starts_with("# schema: cellbal-results/1\n"));
}

#[test]
fn full_grid_gives_nine_rows_per_scenario_and_reports_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let strategies = json!([{"kind": "none"}, {"kind": "opportunistic"}, {"kind": "wla", "window_segments": null}]);
    let cfg = write_config(dir.path(), &fast_config(1, strategies, json!(["A", "B", "C"])));
    let out = dir.path().join("o");
    let stdout = ok(&cellbal(&["run", "--config", s(&cfg), "--out", s(&out), "--jobs", "2"], &[]));
    assert_eq!(data_rows(&out.join("results.csv")).len(), 9);
    assert!(out.join("soh_trace.csv").exists());
    assert!(out.join("results.json").exists());
    for pair in ["wla vs none", "wla vs opportunistic", "opportunistic vs none"] {
        assert!(stdout.contains(pair), "{stdout}");
    }
    assert!(stdout.contains("op_ratio"));

    // the report subcommand reproduces the umbrella's output
    let again = ok(&cellbal(&["report", "--out", s(&out)], &[]));
    assert_eq!(again, stdout);
}

#[test]
fn report_without_a_strategy_pair_prints_no_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &fast_config(1, json!([{"kind": "none"}]), json!(["B"])));
    let out = dir.path().join("o");
    let stdout = ok(&cellbal(&["run", "--config", s(&cfg), "--out", s(&out)], &[]));
    assert_eq!(stdout.matches("no shared runs").count(), 3, "{stdout}");
    assert!(!stdout.contains("mean_delta_days"));
}

#[test]
fn acceptance_flag_fails_without_the_needed_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &fast_config(1, json!([{"kind": "none"}]), json!(["A"])));
    let out = dir.path().join("o");
    let res = cellbal(&["run", "--config", s(&cfg), "--out", s(&out), "--assert-acceptance"], &[]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL"));
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let strategies = json!([{"kind": "none"}, {"kind": "wla", "window_segments": null}]);
    let cfg = write_config(dir.path(), &fast_config(2, strategies, json!(["A", "C"])));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&cellbal(&["run", "--config", s(&cfg), "--out", s(&a)], &[]));
    ok(&cellbal(&["run", "--config", s(&cfg), "--out", s(&b), "--jobs", "3"], &[]));
    for f in ["results.csv", "soh_trace.csv", "results.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn environment_overrides_mirror_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &fast_config(1, json!([{"kind": "none"}]), json!(["A"])));
    let out = dir.path().join("o");
    ok(&cellbal(
        &["generate"],
        &[
            ("CELLBAL_CONFIG", s(&cfg)),
            ("CELLBAL_OUT", s(&out)),
            ("CELLBAL_SEED", "99"),
            ("CELLBAL_SOLVER_BUDGET_S", "2.5"),
        ],
    ));
    let echoed: Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["master_seed"], 99);
    assert_eq!(echoed["sim"]["solver_budget_s"], 2.5);
    assert_eq!(echoed["output_dir"], s(&out));

    // a flag beats the environment
    ok(&cellbal(&["generate", "--seed", "5"], &[("CELLBAL_CONFIG", s(&cfg)), ("CELLBAL_OUT", s(&out)), ("CELLBAL_SEED", "99")]));
    let echoed: Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["master_seed"], 5);
}

#[test]
fn bundles_from_another_seed_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &fast_config(1, json!([{"kind": "none"}]), json!(["A"])));
    let out = dir.path().join("o");
    ok(&cellbal(&["generate", "--config", s(&cfg), "--out", s(&out)], &[]));
    let res = cellbal(&["simulate", "--config", s(&cfg), "--out", s(&out), "--seed", "12"], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("seed"));
}

#[test]
fn missing_inputs_and_bad_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &fast_config(1, json!([{"kind": "none"}]), json!(["A"])));
    let out = dir.path().join("o");

    let res = cellbal(&["simulate", "--config", s(&cfg), "--out", s(&out)], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("missing scenario bundle"));

    let res = cellbal(&["report", "--out", s(&out)], &[]);
    assert_eq!(res.status.code(), Some(2));

    std::fs::write(out.join("results.json"), "[{\"scenario_id\": 0}]").unwrap();
    let res = cellbal(&["report", "--out", s(&out)], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("results"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"schema_version\": 1,\n  \"master_seed\": oops\n}").unwrap();
    let res = cellbal(&["generate", "--config", s(&bad)], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));

    let mut unknown = fast_config(1, json!([{"kind": "none"}]), json!(["A"]));
    unknown["sim"]["arch"] = json!({"i_peak": 12.0});
    let path = write_config(dir.path(), &unknown);
    let res = cellbal(&["generate", "--config", s(&path)], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("i_peak"));
}

#[test]
fn lp_files_are_dumped_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &fast_config(1, json!([{"kind": "opportunistic"}]), json!(["C"])));
    let (out, lp) = (dir.path().join("o"), dir.path().join("lp"));
    ok(&cellbal(&["run", "--config", s(&cfg), "--out", s(&out), "--dump-lp", s(&lp)], &[]));
    let run_dir = lp.join("run_0000");
    let first = std::fs::read_dir(&run_dir).unwrap().next().unwrap().unwrap().path();
    let text = std::fs::read_to_string(first).unwrap();
    assert!(text.contains("Minimize") || text.contains("minimize"), "{text}");
}
