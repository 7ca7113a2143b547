use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use exchange_econ::scenario::{
    ArrivalEntry, ArrivalKindSpec, EconomySpec, ExperimentSpec, GraphSpec, OutputKind, PlanEntry,
    PolicySpec, ScenarioFile,
};
use proptest::prelude::*;

const FIG2: &str = r#"{
    "economy": {
        "n_entities": 2,
        "graph": {"kind": "complete"},
        "n_commodities": 1,
        "arrivals": [[{"kind": "bernoulli_batch", "mean": 2.2, "a_max": 3}],
                     [{"kind": "bernoulli_batch", "mean": 2.2, "a_max": 3}]],
        "plans": [[{"rates": [2]}], [{"rates": [3]}]],
        "policy": "max_weight",
        "seed": 7
    },
    "experiment": {"horizon": 500}
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exchange-econ"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

#[test]
fn run_writes_one_trace_row_per_slot() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", FIG2);
    let out = dir.path().join("out");
    assert_eq!(exit_code(bin().arg("run").arg(&s).arg("--out").arg(&out)), 0);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 501);
    assert_eq!(
        lines[0],
        "slot,total_backlog,backlog_e0,backlog_e1,period,cost_e0,cost_e1,nash_product_sample"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let avg = summary["time_avg_backlog"].as_f64().unwrap();
    let bound = summary["bounds"]["theorem1_bound"].as_f64().unwrap();
    assert!((bound - 90.0).abs() < 1e-6);
    assert!(avg <= bound);
    assert_eq!(summary["checks"]["within_backlog_bound"], true);
}

#[test]
fn seed_override_changes_the_trace_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", FIG2);
    let read = |sub: &str, seed: &str| {
        let out = dir.path().join(sub);
        assert_eq!(exit_code(bin().arg("run").arg(&s).args(["--seed", seed]).arg("--out").arg(&out)), 0);
        fs::read(out.join("trace.csv")).unwrap()
    };
    let a = read("a", "3");
    let b = read("b", "3");
    let c = read("c", "4");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn multiple_runs_get_their_own_directories() {
    let dir = tempfile::tempdir().unwrap();
    let text = FIG2.replace(r#""horizon": 500"#, r#""horizon": 200, "runs": 3"#);
    let s = write(dir.path(), "s.json", &text);
    let out = dir.path().join("out");
    let status = bin()
        .env("EXCHANGE_ECON_THREADS", "2")
        .arg("run")
        .arg(&s)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for r in 0..3 {
        let run = out.join(format!("run_{r:03}"));
        assert_eq!(fs::read_to_string(run.join("trace.csv")).unwrap().lines().count(), 201);
        assert!(run.join("summary.json").exists());
    }
    let merged: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let seeds: Vec<u64> = merged["runs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, vec![7, 8, 9]);
}

#[test]
fn validation_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{ not json");
    assert_eq!(exit_code(bin().arg("run").arg(&bad).arg("--out").arg(dir.path())), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(exit_code(bin().arg("verify").arg(&missing)), 2);
    let s = write(dir.path(), "s.json", FIG2);
    let region = dir.path().join("r.csv");
    assert_eq!(exit_code(bin().arg("region").arg(&s).args(["--directions", "0"]).arg("--out").arg(&region)), 2);
    let threads = bin()
        .env("EXCHANGE_ECON_THREADS", "zero")
        .arg("run")
        .arg(write(dir.path(), "m.json", &FIG2.replace(r#""horizon": 500"#, r#""horizon": 5, "runs": 2"#)))
        .arg("--out")
        .arg(dir.path().join("t"))
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn region_rejects_more_than_four_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let entry = r#"{"kind": "deterministic", "mean": 0, "a_max": 1}"#;
    let row = format!("[{entry}]");
    let text = format!(
        r#"{{"economy": {{"n_entities": 5, "graph": {{"kind": "complete"}}, "n_commodities": 1,
            "arrivals": [{row}, {row}, {row}, {row}, {row}],
            "plans": [[{{"rates": [1]}}], [{{"rates": [1]}}], [{{"rates": [1]}}], [{{"rates": [1]}}], [{{"rates": [1]}}]],
            "policy": "max_weight"}},
            "experiment": {{"horizon": 10}}}}"#
    );
    let s = write(dir.path(), "big.json", &text);
    let out = dir.path().join("r.csv");
    assert_eq!(exit_code(bin().arg("region").arg(&s).arg("--out").arg(&out)), 2);
}

#[test]
fn self_loop_graph_has_equal_regions() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", &FIG2.replace(r#""kind": "complete""#, r#""kind": "self_loops""#));
    let out = dir.path().join("r.csv");
    assert_eq!(exit_code(bin().arg("region").arg(&s).args(["--directions", "16"]).arg("--out").arg(&out)), 0);
    let mut reader = csv::Reader::from_path(&out).unwrap();
    for rec in reader.records() {
        let v: Vec<f64> = rec.unwrap().iter().map(|x| x.parse().unwrap()).collect();
        assert!((v[2] - v[4]).abs() < 1e-9 && (v[3] - v[5]).abs() < 1e-9);
    }
}

#[test]
fn infeasible_bargaining_requirement_exits_with_three() {
    // Identical entities gain nothing from exchange under linear costs.
    let text = r#"{
        "economy": {
            "n_entities": 2,
            "graph": {"kind": "complete"},
            "n_commodities": 2,
            "arrivals": [
                [{"kind": "bernoulli_batch", "mean": 0.5, "a_max": 1}, {"kind": "bernoulli_batch", "mean": 0.5, "a_max": 1}],
                [{"kind": "bernoulli_batch", "mean": 0.5, "a_max": 1}, {"kind": "bernoulli_batch", "mean": 0.5, "a_max": 1}]
            ],
            "plans": [
                [{"rates": [2, 0], "cost": 1}, {"rates": [0, 2], "cost": 1}],
                [{"rates": [2, 0], "cost": 1}, {"rates": [0, 2], "cost": 1}]
            ],
            "period_length": 10,
            "policy": "cost_aware",
            "v": 10
        },
        "experiment": {"horizon": 100, "nbs_benchmark": true}
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", text);
    let out = bin().arg("run").arg(&s).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("saves at least eps2"));
}

#[test]
fn stationary_policy_outside_the_region_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = FIG2
        .replace(r#""max_weight""#, r#""stationary""#)
        .replace(r#""mean": 2.2"#, r#""mean": 2.8"#);
    let s = write(dir.path(), "s.json", &text);
    assert_eq!(exit_code(bin().arg("run").arg(&s).arg("--out").arg(dir.path())), 3);
}

#[test]
fn verify_flags_a_wrong_stability_claim() {
    let dir = tempfile::tempdir().unwrap();
    let text = FIG2
        .replace(r#""mean": 2.2"#, r#""mean": 3.0"#)
        .replace(r#""horizon": 500"#, r#""horizon": 100000, "expect_stable": true"#);
    let s = write(dir.path(), "s.json", &text);
    let out = bin().arg("verify").arg(&s).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[FAIL] stability matches expectation"), "{stdout}");
}

#[test]
fn shipped_scenarios_verify_cleanly() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let out = bin().arg("verify").arg(&path).output().unwrap();
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stdout));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}

fn arrival() -> impl Strategy<Value = ArrivalEntry> {
    (
        prop_oneof![
            Just(ArrivalKindSpec::Deterministic),
            Just(ArrivalKindSpec::BernoulliBatch),
            Just(ArrivalKindSpec::TruncatedPoisson)
        ],
        0.0f64..1.0,
        1u32..4,
    )
        .prop_map(|(kind, frac, a_max)| ArrivalEntry {
            kind,
            mean: frac * a_max as f64,
            a_max: a_max as f64,
        })
}

fn scenario() -> impl Strategy<Value = ScenarioFile> {
    (1usize..4, 1usize..3).prop_flat_map(|(n, k)| {
        let plans = prop::collection::vec(
            prop::collection::vec(
                (prop::collection::vec(0.0f64..3.0, k), 0.0f64..5.0)
                    .prop_map(|(rates, cost)| PlanEntry { rates, cost }),
                1..3,
            ),
            n,
        );
        (
            prop::collection::vec(prop::collection::vec(arrival(), k), n),
            plans,
            prop::sample::subsequence((0..n * n).collect::<Vec<_>>(), 0..=n * n),
            1u64..20,
            0.1f64..50.0,
            any::<u64>(),
            1u64..1000,
            prop::option::of(any::<bool>()),
            prop::option::of("[a-z]{1,8}"),
        )
            .prop_map(move |(arrivals, plans, edges, t, v, seed, horizon, expect, name)| {
                let edges = edges.into_iter().map(|e| [e / n, e % n]).collect();
                ScenarioFile {
                    name,
                    economy: EconomySpec {
                        n_entities: n,
                        graph: GraphSpec::Edges { edges },
                        n_commodities: k,
                        arrivals,
                        plans,
                        period_length: t,
                        policy: PolicySpec::CostAware,
                        v,
                        seed,
                    },
                    experiment: ExperimentSpec {
                        runs: 1,
                        horizon,
                        report_every: 0,
                        outputs: vec![OutputKind::Summary],
                        region_directions: 8,
                        nbs_benchmark: false,
                        eps1: 1e-3,
                        eps2: 1e-3,
                        expect_stable: expect,
                    },
                }
            })
    })
}

proptest! {
    #[test]
    fn scenarios_survive_a_json_round_trip(s in scenario()) {
        let back = ScenarioFile::parse(&s.to_json()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.config(None).unwrap(), s.config(None).unwrap());
    }
}
