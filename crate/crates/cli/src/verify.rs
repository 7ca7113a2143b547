//! `verify`: cross-check the fast routines against the brute-force oracles
//! on the scenario's instance family, then sanity-check a short run.

use std::path::Path;

use exchange_econ_core::engine::{is_unstable, run, run_stationary, MetricsTrace};
use exchange_econ_core::feasibility::{
    check_sustainability_1c, check_sustainability_maxflow, stationary_policy_1c,
};
use exchange_econ_core::model::EconomyConfig;
use exchange_econ_core::policies::{
    allocation_weight, independent_cost_lp, maxweight_allocate, nbs_solve, PolicyError,
};
use exchange_econ_oracle as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scenario::{PolicySpec, ScenarioFile};
use crate::CliError;

const TRIALS: usize = 50;
const TOL: f64 = 1e-7;
/// Short-run length used for the simulation sanity checks.
const SHORT_HORIZON: u64 = 2_000;
/// Instances larger than this skip the bargaining grid search.
const GRID_MAX_PLANS: usize = 3;
const GRID_RESOLUTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {}: {}", self.name, self.detail)
    }
}

fn check_allocations(config: &EconomyConfig, rng: &mut ChaCha8Rng) -> CheckOutcome {
    const NAME: &str = "max-weight allocation vs enumeration";
    let n = config.n_entities();
    let k = config.n_commodities;
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.gen_range(0..10) as f64).collect())
            .collect();
        let rates: Vec<Vec<f64>> = config
            .plans
            .iter()
            .map(|ps| ps[rng.gen_range(0..ps.len())].rates.clone())
            .collect();
        let fast = allocation_weight(&x, &rates, &maxweight_allocate(&x, &rates, &config.graph));
        match oracle::enumerate_allocations(&x, &rates, &config.graph) {
            Ok(search) => worst = worst.max((fast - search.weight).abs()),
            Err(e) => return CheckOutcome::new(NAME, true, format!("skipped ({e})")),
        }
    }
    CheckOutcome::new(NAME, worst <= TOL, format!("{TRIALS} states, max weight gap {worst:.3e}"))
}

fn check_sustainability(config: &EconomyConfig, rng: &mut ChaCha8Rng) -> CheckOutcome {
    const NAME: &str = "sustainability: subsets vs max-flow vs enumeration";
    let Some(b) = config.fixed_rates() else {
        return CheckOutcome::new(NAME, true, "skipped (needs one commodity and fixed production)");
    };
    let means: Vec<f64> = config.arrival_means().iter().map(|r| r[0]).collect();
    let mut disagreements = 0;
    for t in 0..TRIALS {
        // The first trial is the scenario itself; the rest perturb it.
        let a: Vec<f64> = if t == 0 {
            means.clone()
        } else {
            means.iter().map(|m| m * rng.gen_range(0.5..1.5)).collect()
        };
        let subset = check_sustainability_1c(&config.graph, &a, &b);
        let flow = check_sustainability_maxflow(&config.graph, &a, &b);
        let brute = oracle::enumerate_subsets(&config.graph, &a, &b);
        match (subset, flow, brute) {
            (Ok(s), Ok(f), Ok(o)) => {
                let o_ok = o.slack >= -1e-9;
                if s.sustainable != f.sustainable || s.sustainable != o_ok || (s.slack - o.slack).abs() > TOL {
                    disagreements += 1;
                }
            }
            (_, _, Err(e)) => return CheckOutcome::new(NAME, true, format!("skipped ({e})")),
            (s, f, _) => {
                let err = s.err().map(|e| e.to_string()).or(f.err().map(|e| e.to_string()));
                return CheckOutcome::new(NAME, false, err.unwrap_or_default());
            }
        }
    }
    CheckOutcome::new(NAME, disagreements == 0, format!("{TRIALS} demand vectors, {disagreements} disagreements"))
}

fn check_independent_costs(config: &EconomyConfig) -> CheckOutcome {
    const NAME: &str = "independent cost: simplex vs vertex enumeration";
    let a = config.arrival_means();
    let mut worst: f64 = 0.0;
    for (j, plans) in config.plans.iter().enumerate() {
        let fast = independent_cost_lp(&a[j], plans);
        let brute = oracle::independent_cost(&a[j], plans);
        match (fast, brute) {
            (Ok(f), Some(b)) => worst = worst.max((f.cost - b).abs()),
            (Err(PolicyError::NotSelfSustainable { .. }), None) => {}
            (f, b) => {
                return CheckOutcome::new(
                    NAME,
                    false,
                    format!("entity {j}: simplex {:?}, enumeration {b:?}", f.map(|c| c.cost)),
                )
            }
        }
    }
    CheckOutcome::new(NAME, worst <= TOL, format!("{} entities, max gap {worst:.3e}", a.len()))
}

fn check_bargaining(scenario: &ScenarioFile, config: &EconomyConfig) -> CheckOutcome {
    const NAME: &str = "bargaining benchmark vs lattice search";
    let small = config.n_entities() * config.n_commodities <= 4
        && config.plans.iter().all(|p| p.len() <= GRID_MAX_PLANS);
    if !scenario.experiment.nbs_benchmark || !small {
        return CheckOutcome::new(NAME, true, "skipped");
    }
    let (e1, e2) = (scenario.experiment.eps1, scenario.experiment.eps2);
    let a = config.arrival_means();
    let exact = nbs_solve(&config.graph, &config.plans, &a, e1, e2);
    let grid = oracle::grid_search_nbs(&config.graph, &config.plans, &a, e1, e2, GRID_RESOLUTION);
    match (exact, grid) {
        (Ok(s), Ok(g)) => CheckOutcome::new(
            NAME,
            g.h <= s.h_star + 1e-6,
            format!("exact H* {:.6}, lattice {:.6}", s.h_star, g.h),
        ),
        (Err(PolicyError::Region(_)), Err(oracle::OracleError::Infeasible)) => {
            CheckOutcome::new(NAME, true, "both routes report an empty region")
        }
        // The lattice may miss a thin region that the exact route finds.
        (Ok(s), Err(oracle::OracleError::Infeasible)) => {
            CheckOutcome::new(NAME, true, format!("exact H* {:.6}, lattice empty", s.h_star))
        }
        (s, g) => CheckOutcome::new(
            NAME,
            false,
            format!("exact {:?}, lattice {:?}", s.map(|s| s.h_star), g.map(|g| g.h)),
        ),
    }
}

/// Simulates under the scenario's policy, including the stationary one.
fn simulate(scenario: &ScenarioFile, config: &EconomyConfig) -> Result<MetricsTrace, String> {
    if scenario.economy.policy != PolicySpec::Stationary {
        return run(config.clone()).map_err(|e| e.to_string());
    }
    let b = config.fixed_rates().ok_or("stationary policy needs fixed production")?;
    let a: Vec<f64> = config.arrival_means().iter().map(|r| r[0]).collect();
    let policy = stationary_policy_1c(&config.graph, &a, &b).map_err(|e| e.to_string())?;
    run_stationary(config.clone(), &policy).map_err(|e| e.to_string())
}

fn check_short_run(scenario: &ScenarioFile, config: &EconomyConfig) -> Vec<CheckOutcome> {
    let mut cfg = config.clone();
    cfg.horizon = cfg.horizon.min(SHORT_HORIZON);
    let (first, second) = match (simulate(scenario, &cfg), simulate(scenario, &cfg)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return vec![CheckOutcome::new("short simulation", false, e)];
        }
    };
    let deterministic = first.total_backlog == second.total_backlog;
    let mut sum = 0.0;
    let mut worst: f64 = 0.0;
    for (t, (&x, &avg)) in first.total_backlog.iter().zip(&first.running_average).enumerate() {
        sum += x;
        worst = worst.max((sum / (t + 1) as f64 - avg).abs() / avg.abs().max(1.0));
    }
    let negative = first.total_backlog.iter().filter(|&&x| x < 0.0).count();
    vec![
        CheckOutcome::new(
            "short simulation is deterministic",
            deterministic,
            format!("{} slots", first.n_slots()),
        ),
        CheckOutcome::new(
            "running average matches backlog series",
            worst <= 1e-9,
            format!("max relative gap {worst:.3e}"),
        ),
        CheckOutcome::new("backlogs stay non-negative", negative == 0, format!("{negative} negative slots")),
    ]
}

fn check_expectation(scenario: &ScenarioFile, config: &EconomyConfig) -> Option<CheckOutcome> {
    let want = scenario.experiment.expect_stable?;
    const NAME: &str = "stability matches expectation";
    Some(match simulate(scenario, config) {
        Ok(trace) => {
            let stable = !is_unstable(&trace, config.a_max());
            CheckOutcome::new(
                NAME,
                stable == want,
                format!(
                    "expected {}, final-half slope {:.4}",
                    if want { "stable" } else { "unstable" },
                    trace.final_half_slope()
                ),
            )
        }
        Err(e) => CheckOutcome::new(NAME, false, e),
    })
}

/// Runs every applicable check. Failing checks are reported in the result,
/// not as an error; errors mean the scenario itself could not be loaded.
pub fn cmd_verify(path: &Path) -> Result<Vec<CheckOutcome>, CliError> {
    let scenario = ScenarioFile::load(path)?;
    let config = scenario.config(None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = vec![
        check_allocations(&config, &mut rng),
        check_sustainability(&config, &mut rng),
        check_independent_costs(&config),
        check_bargaining(&scenario, &config),
    ];
    out.extend(check_short_run(&scenario, &config));
    out.extend(check_expectation(&scenario, &config));
    Ok(out)
}
