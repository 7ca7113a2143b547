//! `run`: simulate a scenario and write its trace and summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use exchange_econ_core::engine::{
    demand_margin, is_unstable, theorem1_bound, theorem2_bound, theorem3_bounds, EngineError,
    MetricsTrace, Simulator,
};
use exchange_econ_core::feasibility::{stationary_policy_1c, FeasibilityError, StationaryPolicy};
use exchange_econ_core::model::EconomyConfig;
use exchange_econ_core::policies::{nbs_benchmark, NbsSolution, PolicyError};
use rayon::prelude::*;
use serde::Serialize;

use crate::scenario::{OutputKind, PolicySpec, ScenarioFile};
use crate::{format_sig, thread_pool, CliError};

/// Relative slack allowed when comparing cost against independent cost.
const IC_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundsReport {
    pub demand_margin: Option<f64>,
    pub theorem1_bound: Option<f64>,
    pub theorem2_bound: Option<f64>,
    pub theorem3_backlog_bound: Option<f64>,
    pub theorem3_gap: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NbsReport {
    pub h_star: f64,
    pub cooperative_cost: Vec<f64>,
    pub independent_cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checks {
    pub stable: bool,
    pub within_backlog_bound: Option<bool>,
    pub incentive_compatible: Option<bool>,
    pub expectation_met: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub slots: u64,
    pub periods: u64,
    pub time_avg_backlog: f64,
    pub final_running_average: f64,
    pub final_half_slope: f64,
    pub time_avg_cost: Vec<f64>,
    pub time_avg_realized_independent: Option<Vec<f64>>,
    pub empirical_nash_product: Option<f64>,
    pub mean_nash_sample: Option<f64>,
    pub flagged_periods: u64,
    pub bounds: BoundsReport,
    pub nbs: Option<NbsReport>,
    pub checks: Checks,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub name: Option<String>,
    pub runs: Vec<RunSummary>,
    pub mean_time_avg_backlog: f64,
    pub all_checks_pass: bool,
}

fn bounds(scenario: &ScenarioFile, config: &EconomyConfig) -> BoundsReport {
    let a = config.arrival_means();
    let mut report = BoundsReport::default();
    let mut notes = Vec::new();
    match demand_margin(config, &a) {
        Ok(e) => report.demand_margin = Some(e),
        Err(e) => notes.push(report_note("demand margin", e)),
    }
    match scenario.economy.policy {
        PolicySpec::MaxWeight | PolicySpec::Stationary => match theorem1_bound(config, &a) {
            Ok(b) => report.theorem1_bound = Some(b),
            Err(e) => notes.push(report_note("single-commodity bound", e)),
        },
        PolicySpec::TwoTimescale => match theorem2_bound(config, &a) {
            Ok(b) => report.theorem2_bound = Some(b),
            Err(e) => notes.push(report_note("two-timescale bound", e)),
        },
        PolicySpec::CostAware => match theorem3_bounds(config, &a, config.v_param) {
            Ok((b, g)) => {
                report.theorem3_backlog_bound = Some(b);
                report.theorem3_gap = Some(g);
            }
            Err(e) => notes.push(report_note("cost-aware bounds", e)),
        },
    }
    report.notes = notes;
    report
}

fn report_note(name: &str, e: EngineError) -> String {
    format!("{name} unavailable: {e}")
}

fn stationary_policy(config: &EconomyConfig) -> Result<StationaryPolicy, CliError> {
    let b = config.fixed_rates().ok_or_else(|| {
        CliError::Validation("the stationary policy needs one commodity and one plan per entity".into())
    })?;
    let a: Vec<f64> = config.arrival_means().iter().map(|r| r[0]).collect();
    stationary_policy_1c(&config.graph, &a, &b).map_err(|e| match e {
        FeasibilityError::Infeasible(_) => CliError::Infeasible(e.to_string()),
        other => CliError::Validation(other.to_string()),
    })
}

fn simulate(
    config: EconomyConfig,
    policy: Option<&StationaryPolicy>,
    entity_trace: bool,
    report_every: u64,
) -> Result<MetricsTrace, CliError> {
    let seed = config.seed;
    let sim = match policy {
        Some(p) => Simulator::with_stationary(config, p),
        None => Simulator::new(config),
    };
    let mut sim = sim
        .map_err(|e| CliError::Validation(e.to_string()))?
        .record_entity_backlog(entity_trace);
    while sim
        .step()
        .map_err(|e| CliError::Validation(format!("simulation failed: {e}")))?
    {
        let slot = sim.state().slot;
        if report_every > 0 && slot % report_every == 0 {
            log::info!(
                "seed {seed}: slot {slot}, backlog {}",
                format_sig(sim.state().total_backlog())
            );
        }
    }
    Ok(sim.finish())
}

/// Writes the per-slot trace in fixed column order.
pub fn write_trace(path: &Path, trace: &MetricsTrace, with_nash: bool) -> Result<(), CliError> {
    let n = trace.n_entities;
    let file = BufWriter::new(File::create(path)?);
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["slot".to_string(), "total_backlog".to_string()];
    header.extend((0..n).map(|i| format!("backlog_e{i}")));
    header.push("period".into());
    header.extend((0..n).map(|j| format!("cost_e{j}")));
    header.push("nash_product_sample".into());
    w.write_record(&header)?;

    let t = trace.period_length as usize;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for slot in 0..trace.n_slots() {
        row.clear();
        let period = slot / t;
        row.push(slot.to_string());
        row.push(format_sig(trace.total_backlog[slot]));
        for i in 0..n {
            row.push(trace.entity_backlog_at(slot, i).map(format_sig).unwrap_or_default());
        }
        row.push(period.to_string());
        for j in 0..n {
            row.push(format_sig(trace.period_cost(period, j)));
        }
        let closes = (slot + 1) % t == 0;
        row.push(match trace.nash_sample.get(period) {
            Some(&h) if with_nash && closes => format_sig(h),
            _ => String::new(),
        });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn summarize(
    scenario: &ScenarioFile,
    config: &EconomyConfig,
    trace: &MetricsTrace,
    bounds: &BoundsReport,
    nbs: Option<&NbsSolution>,
) -> RunSummary {
    let s = trace.summary();
    let stable = !is_unstable(trace, config.a_max());
    let bound = bounds
        .theorem1_bound
        .or(bounds.theorem2_bound)
        .or(bounds.theorem3_backlog_bound);
    let incentive_compatible = s.time_avg_realized_independent.as_ref().map(|r| {
        s.time_avg_cost
            .iter()
            .zip(r)
            .all(|(c, j)| *c <= j * (1.0 + IC_TOLERANCE))
    });
    RunSummary {
        seed: config.seed,
        slots: s.slots,
        periods: s.periods,
        time_avg_backlog: s.time_avg_backlog,
        final_running_average: s.final_running_average,
        final_half_slope: s.final_half_slope,
        time_avg_cost: s.time_avg_cost,
        time_avg_realized_independent: s.time_avg_realized_independent,
        empirical_nash_product: s.empirical_nash_product,
        mean_nash_sample: s.mean_nash_sample,
        flagged_periods: s.flagged_periods,
        bounds: bounds.clone(),
        nbs: nbs.map(|n| NbsReport {
            h_star: n.h_star,
            cooperative_cost: n.cooperative_cost.clone(),
            independent_cost: n.independent_cost.clone(),
        }),
        checks: Checks {
            stable,
            within_backlog_bound: bound.map(|b| s.time_avg_backlog <= b),
            incentive_compatible,
            expectation_met: scenario.experiment.expect_stable.map(|want| want == stable),
        },
    }
}

impl Checks {
    fn pass(&self) -> bool {
        [self.within_backlog_bound, self.incentive_compatible, self.expectation_met]
            .iter()
            .all(|c| c.unwrap_or(true))
    }
}

/// Runs every seed of the experiment and writes outputs under `opts.out_dir`.
pub fn cmd_run(path: &Path, opts: &RunOptions) -> Result<ExperimentSummary, CliError> {
    let scenario = ScenarioFile::load(path)?;
    let base = scenario.config(opts.seed)?;
    let x = &scenario.experiment;

    let nbs = if x.nbs_benchmark {
        match nbs_benchmark(&base, x.eps1, x.eps2) {
            Ok(s) => Some(s),
            Err(e @ PolicyError::Region(_)) => return Err(CliError::Infeasible(e.to_string())),
            Err(e) => return Err(CliError::Validation(e.to_string())),
        }
    } else {
        None
    };
    let policy = match scenario.economy.policy {
        PolicySpec::Stationary => Some(stationary_policy(&base)?),
        _ => None,
    };
    let bounds = bounds(&scenario, &base);
    for n in &bounds.notes {
        log::warn!("{n}");
    }

    fs::create_dir_all(&opts.out_dir)?;
    if x.outputs.contains(&OutputKind::Region) {
        crate::region::write_region(&base, x.region_directions, &opts.out_dir.join("region.csv"))?;
    }

    let runs = x.runs as u64;
    let with_nash = scenario.economy.policy == PolicySpec::CostAware;
    let one_run = |r: u64| -> Result<RunSummary, CliError> {
        let mut config = base.clone();
        config.seed = base.seed.wrapping_add(r);
        let dir = if runs == 1 {
            opts.out_dir.clone()
        } else {
            opts.out_dir.join(format!("run_{r:03}"))
        };
        fs::create_dir_all(&dir)?;
        let want_trace = x.outputs.contains(&OutputKind::Trace);
        let trace = simulate(config.clone(), policy.as_ref(), want_trace, x.report_every)?;
        if want_trace {
            write_trace(&dir.join("trace.csv"), &trace, with_nash)?;
        }
        let summary = summarize(&scenario, &config, &trace, &bounds, nbs.as_ref());
        if runs > 1 && x.outputs.contains(&OutputKind::Summary) {
            write_json(&dir.join("summary.json"), &summary)?;
        }
        Ok(summary)
    };
    let results: Vec<RunSummary> = if runs == 1 {
        vec![one_run(0)?]
    } else {
        thread_pool()?.install(|| (0..runs).into_par_iter().map(one_run).collect::<Result<_, _>>())?
    };

    let mean = results.iter().map(|r| r.time_avg_backlog).sum::<f64>() / results.len() as f64;
    let all_pass = results.iter().all(|r| r.checks.pass());
    let experiment = ExperimentSummary {
        name: scenario.name.clone(),
        runs: results,
        mean_time_avg_backlog: mean,
        all_checks_pass: all_pass,
    };
    if x.outputs.contains(&OutputKind::Summary) {
        let out = opts.out_dir.join("summary.json");
        if runs == 1 {
            write_json(&out, &experiment.runs[0])?;
        } else {
            write_json(&out, &experiment)?;
        }
    }
    Ok(experiment)
}
