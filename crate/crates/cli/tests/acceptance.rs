//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p exchange-econ --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use exchange_econ::scenario::ScenarioFile;
use exchange_econ::{cmd_region, cmd_run, RunOptions};
use exchange_econ_core::engine::{
    is_unstable, run, run_stationary, theorem1_bound, theorem2_bound, theorem3_bounds,
};
use exchange_econ_core::feasibility::{
    check_sustainability_1c, check_sustainability_maxflow, stationary_policy_1c,
};
use exchange_econ_core::model::{EconomyConfig, ExchangeGraph};
use exchange_econ_core::policies::{allocation_weight, centralized_maxweight, maxweight_allocate};
use exchange_econ_oracle::{enumerate_allocations, enumerate_subsets, grid_search_nbs, MIN_RESOLUTION};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

fn load(name: &str) -> ScenarioFile {
    ScenarioFile::load(&scenario(name)).expect("shipped scenario loads")
}

/// Fig. 2 economy with both arrival means set to `a`.
fn fig2(a: f64, horizon: u64, seed: u64) -> EconomyConfig {
    let mut s = load("fig2_interior");
    for row in &mut s.economy.arrivals {
        row[0].mean = a;
    }
    s.experiment.horizon = horizon;
    s.config(Some(seed)).unwrap()
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> ExchangeGraph {
    if rng.gen_bool(0.5) {
        return ExchangeGraph::complete(n).unwrap();
    }
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| (0..n).map(move |i| (j, i)))
        .filter(|&(j, i)| j != i)
        .collect();
    let keep: Vec<_> = edges.into_iter().filter(|_| rng.gen_bool(0.5)).collect();
    ExchangeGraph::new(n, keep).unwrap()
}

fn c1_argmax_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=5);
        let k = if n <= 3 { rng.gen_range(1..=2) } else { 1 };
        let g = random_graph(&mut rng, n);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.gen_range(0..20) as f64).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.gen_range(0..5) as f64).collect())
            .collect();
        let distributed = allocation_weight(&x, &b, &maxweight_allocate(&x, &b, &g));
        let brute = enumerate_allocations(&x, &b, &g).unwrap().weight;
        let (_, central) = centralized_maxweight(&x, &b, &g).unwrap();
        if distributed != brute || central != brute {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("500 instances, {mismatches} weight mismatches"))
}

fn c2_feasibility_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut sustainable = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8);
        let g = random_graph(&mut rng, n);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let subsets = check_sustainability_1c(&g, &a, &b).unwrap();
        let flow = check_sustainability_maxflow(&g, &a, &b).unwrap();
        let brute = enumerate_subsets(&g, &a, &b).unwrap();
        if subsets.sustainable != flow.sustainable || subsets.sustainable != (brute.slack >= -1e-9) {
            mismatches += 1;
        }
        sustainable += usize::from(subsets.sustainable);
    }
    outcome(
        mismatches == 0,
        format!("1000 instances ({sustainable} sustainable), {mismatches} verdict mismatches"),
    )
}

fn c3_stability_inside() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bound = f64::NAN;
    let mut unstable = 0;
    for seed in [7, 8, 9] {
        let cfg = fig2(2.2, 1_000_000, seed);
        bound = theorem1_bound(&cfg, &cfg.arrival_means()).unwrap();
        let trace = run(cfg.clone()).unwrap();
        unstable += usize::from(is_unstable(&trace, cfg.a_max()));
        worst = worst.max(trace.summary().time_avg_backlog);
    }
    outcome(
        unstable == 0 && worst <= bound && worst <= 30.0,
        format!("worst time-average backlog {worst:.3} over 3 seeds; bound {bound:.3}, practical cap 30"),
    )
}

fn c4_instability_outside() -> Outcome {
    let cfg = fig2(2.6, 1_000_000, 7);
    let drift = 2.0 * 2.6 - 5.0;
    let target = 0.5 * drift;
    let trace = run(cfg.clone()).unwrap();
    let slope = trace.final_half_slope();
    // At least the target within 50%, and no faster than the net drift allows.
    let ok = slope >= 0.5 * target && slope <= 1.5 * drift && is_unstable(&trace, cfg.a_max());
    outcome(
        ok,
        format!("final-half slope {slope:.4}; required >= {:.3}, net drift {drift:.3}", 0.5 * target),
    )
}

fn c5_two_timescale() -> Outcome {
    let base = load("fig3a_two_timescale");
    let mut rows = Vec::new();
    let mut ok = true;
    let mut previous = 0.0;
    for t in [1u64, 10, 50] {
        let mut s = base.clone();
        s.economy.period_length = t;
        s.experiment.horizon = 1_000_000;
        let cfg = s.config(None).unwrap();
        let bound = theorem2_bound(&cfg, &cfg.arrival_means()).unwrap();
        let trace = run(cfg.clone()).unwrap();
        let avg = trace.summary().time_avg_backlog;
        ok &= !is_unstable(&trace, cfg.a_max()) && avg <= bound && avg >= previous;
        previous = avg;
        rows.push(format!("T={t}: {avg:.2} <= {bound:.0}"));
    }
    outcome(ok, rows.join(", "))
}

struct CostlyRun {
    v: f64,
    cost: Vec<f64>,
    realized: Vec<f64>,
    nash: f64,
    gap: f64,
}

fn costly_runs() -> Vec<CostlyRun> {
    let base = load("costly_ic_desk");
    [10.0, 100.0]
        .into_iter()
        .map(|v| {
            let mut s = base.clone();
            s.economy.v = v;
            s.experiment.horizon = 100_000 * s.economy.period_length;
            let cfg = s.config(None).unwrap();
            let (_, gap) = theorem3_bounds(&cfg, &cfg.arrival_means(), v).unwrap();
            let summary = run(cfg).unwrap().summary();
            CostlyRun {
                v,
                cost: summary.time_avg_cost,
                realized: summary.time_avg_realized_independent.unwrap(),
                nash: summary.empirical_nash_product.unwrap(),
                gap,
            }
        })
        .collect()
}

fn c6_incentive_compatibility(runs: &[CostlyRun]) -> Outcome {
    let mut ok = true;
    let mut rows = Vec::new();
    for r in runs {
        for (c, j) in r.cost.iter().zip(&r.realized) {
            ok &= *c <= j * 1.01;
        }
        rows.push(format!("V={}: cost {:.3?} vs independent {:.3?}", r.v, r.cost, r.realized));
    }
    outcome(ok, rows.join("; "))
}

fn c7_near_optimality(runs: &[CostlyRun]) -> Outcome {
    let s = load("costly_ic_desk");
    let cfg = s.config(None).unwrap();
    let grid = grid_search_nbs(
        &cfg.graph,
        &cfg.plans,
        &cfg.arrival_means(),
        s.experiment.eps1,
        s.experiment.eps2,
        MIN_RESOLUTION,
    )
    .unwrap();
    let h_star = grid.h;
    let mut ok = true;
    let mut rows = vec![format!("lattice H* {h_star:.4}")];
    for r in runs {
        ok &= r.nash >= h_star - r.gap - 0.05 * h_star.abs();
        rows.push(format!("V={}: H {:.4}, C/V {:.1}", r.v, r.nash, r.gap));
    }
    let shrinks = (h_star - runs[1].nash) < (h_star - runs[0].nash);
    rows.push(format!("gap shrinks: {shrinks}"));
    outcome(ok && shrinks, rows.join(", "))
}

fn c8_stationary_policy() -> Outcome {
    let cfg = fig2(2.4, 1_000_000, 7);
    let a: Vec<f64> = cfg.arrival_means().iter().map(|r| r[0]).collect();
    let policy = stationary_policy_1c(&cfg.graph, &a, &cfg.fixed_rates().unwrap()).unwrap();
    let bound = theorem1_bound(&cfg, &cfg.arrival_means()).unwrap();
    let trace = run_stationary(cfg.clone(), &policy).unwrap();
    let avg = trace.summary().final_running_average;
    outcome(
        !is_unstable(&trace, cfg.a_max()) && avg.is_finite() && avg <= bound,
        format!("final running average {avg:.3}, slope {:.2e}", trace.final_half_slope()),
    )
}

fn c9_region_geometry() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("region.csv");
    cmd_region(&scenario("fig2_interior"), Some(64), &out).unwrap();
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    let mut contained = true;
    for rec in reader.records() {
        let v: Vec<f64> = rec.unwrap().iter().map(|s| s.parse().unwrap()).collect();
        let (coop, indep) = (&v[2..4], &v[4..6]);
        worst = worst.max((coop[0] + coop[1] - 5.0).abs());
        contained &= indep[0] <= 2.0 + 1e-9 && indep[1] <= 3.0 + 1e-9;
        contained &= indep[0] <= coop[0] + 1e-9 && indep[1] <= coop[1] + 1e-9;
        rows += 1;
    }
    outcome(
        rows == 64 && worst <= 1e-5 && contained,
        format!("{rows} directions, max |a1+a2-5| {worst:.2e}, independent contained: {contained}"),
    )
}

fn c10_determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let traces: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            let opts = RunOptions {
                out_dir: d.path().to_path_buf(),
                seed: Some(7),
            };
            cmd_run(&scenario("fig2_interior"), &opts).unwrap();
            std::fs::read(d.path().join("trace.csv")).unwrap()
        })
        .collect();
    outcome(
        traces[0] == traces[1],
        format!("two runs, {} bytes each, identical: {}", traces[0].len(), traces[0] == traces[1]),
    )
}

fn timed(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            o.passed = false;
            o.detail.push_str(&format!("; over the {}s budget", limit.as_secs()));
        }
    }
    let tag = if o.passed { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {} ({:.1}s)", o.detail, took.as_secs_f64());
    o.passed
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut results = vec![
        timed("C1 max-weight argmax equivalence", Some(secs(10)), c1_argmax_equivalence),
        timed("C2 feasibility oracle agreement", Some(secs(30)), c2_feasibility_agreement),
        timed("C3 stability inside the region", Some(secs(60)), c3_stability_inside),
        timed("C4 instability outside the region", Some(secs(60)), c4_instability_outside),
        timed("C5 two-timescale stability", Some(secs(180)), c5_two_timescale),
    ];
    let start = Instant::now();
    let runs = costly_runs();
    let shared = start.elapsed();
    results.push(timed("C6 incentive compatibility", None, || c6_incentive_compatibility(&runs)));
    results.push(timed("C7 near-optimality", Some(secs(300).saturating_sub(shared)), || {
        c7_near_optimality(&runs)
    }));
    results.push(timed("C8 stationary policy stability", None, c8_stationary_policy));
    results.push(timed("C9 region geometry", None, c9_region_geometry));
    results.push(timed("C10 determinism", None, c10_determinism));

    let failed = results.iter().filter(|&&p| !p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
