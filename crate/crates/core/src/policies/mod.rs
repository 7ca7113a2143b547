//! Online control policies and static cost benchmarks.
//!
//! Every decision here is a pure function of observed backlogs and the
//! entity's own parameters; ties always go to the lowest index.

mod costs;
mod nbs;

use thiserror::Error;

use crate::feasibility::{FeasibilityError, LpError};
use crate::model::{Allocation, ExchangeGraph, ProductionPlan};

pub use costs::{
    independent_cost_lp, realized_independent_cost, IndependentCost, IndependentCostBenchmark,
    RealizedCost,
};
pub use nbs::{check_nbs_constraints, nbs_benchmark, nbs_solve, NbsSolution, DEFAULT_EPS};

/// Largest enumeration accepted by [`centralized_maxweight`].
pub const MAX_ENUMERATION: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("entity {0} has an empty plan set")]
    EmptyPlanSet(usize),
    #[error("demand {demand:?} cannot be covered by the entity's own plans")]
    NotSelfSustainable { demand: Vec<f64> },
    #[error("enumeration over {size} allocations exceeds the limit of {max}")]
    TooLarge { size: u64, max: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bargaining benchmark infeasible: {0}")]
    Region(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
}

/// Per-producer active rates `rates[j][k]` (all zero for idle producers).
pub fn active_rates(plans: &[Vec<ProductionPlan>], active: &[Option<usize>], k: usize) -> Vec<Vec<f64>> {
    plans
        .iter()
        .zip(active)
        .map(|(ps, z)| z.map_or_else(|| vec![0.0; k], |p| ps[p].rates.clone()))
        .collect()
}

/// Distributed max-weight: each producer sends each commodity it makes to
/// the neighbour with the largest `X_ik * B_jk`; zero weight means idle.
/// The result is ordered by (producer, commodity).
pub fn maxweight_allocate(x: &[Vec<f64>], rates: &[Vec<f64>], graph: &ExchangeGraph) -> Vec<Allocation> {
    let mut alloc = Vec::new();
    maxweight_into(&mut alloc, x, rates, graph);
    alloc
}

pub(crate) fn maxweight_into(
    alloc: &mut Vec<Allocation>,
    x: &[Vec<f64>],
    rates: &[Vec<f64>],
    graph: &ExchangeGraph,
) {
    alloc.clear();
    for (j, rj) in rates.iter().enumerate() {
        for (k, &b) in rj.iter().enumerate() {
            if b <= 0.0 {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for &i in graph.consumers_of(j) {
                let w = x[i][k] * b;
                if w > best.map_or(0.0, |(_, bw)| bw) {
                    best = Some((i, w));
                }
            }
            if let Some((i, _)) = best {
                alloc.push(Allocation::new(j, i, k));
            }
        }
    }
}

/// `sum X_ik * B_jk` over the allocation, accumulated in the given order.
pub fn allocation_weight(x: &[Vec<f64>], rates: &[Vec<f64>], alloc: &[Allocation]) -> f64 {
    alloc
        .iter()
        .map(|a| x[a.consumer][a.commodity] * rates[a.producer][a.commodity])
        .sum()
}

/// Exact maximizer of the slot weight by enumerating every producer's
/// choice (idle or one consumer) for every commodity.
pub fn centralized_maxweight(
    x: &[Vec<f64>],
    rates: &[Vec<f64>],
    graph: &ExchangeGraph,
) -> Result<(Vec<Allocation>, f64), PolicyError> {
    let k = x.first().map_or(0, |r| r.len());
    let slots: Vec<(usize, usize)> = (0..rates.len())
        .flat_map(|j| (0..k).map(move |c| (j, c)))
        .collect();
    let mut size: u64 = 1;
    for &(j, _) in &slots {
        size = size.saturating_mul(graph.consumers_of(j).len() as u64 + 1);
        if size > MAX_ENUMERATION {
            return Err(PolicyError::TooLarge {
                size,
                max: MAX_ENUMERATION,
            });
        }
    }

    struct Search<'a> {
        x: &'a [Vec<f64>],
        rates: &'a [Vec<f64>],
        graph: &'a ExchangeGraph,
        slots: &'a [(usize, usize)],
        current: Vec<Allocation>,
        best: Option<(Vec<Allocation>, f64)>,
    }
    impl Search<'_> {
        fn go(&mut self, depth: usize, weight: f64) {
            if depth == self.slots.len() {
                if self.best.as_ref().is_none_or(|(_, w)| weight > *w) {
                    self.best = Some((self.current.clone(), weight));
                }
                return;
            }
            let (j, k) = self.slots[depth];
            // Idle first, then consumers ascending: the first maximizer found
            // matches the distributed tie rule.
            self.go(depth + 1, weight);
            for &i in self.graph.consumers_of(j) {
                let w = self.x[i][k] * self.rates[j][k];
                self.current.push(Allocation::new(j, i, k));
                self.go(depth + 1, weight + w);
                self.current.pop();
            }
        }
    }
    let mut search = Search {
        x,
        rates,
        graph,
        slots: &slots,
        current: Vec::new(),
        best: None,
    };
    search.go(0, 0.0);
    Ok(search.best.unwrap_or_default())
}

/// Peaked backlogs: for each consumer keep only its largest commodity
/// (lowest index on ties). Returns `(k*, X_ik*)`.
pub fn peak_commodity(row: &[f64]) -> (usize, f64) {
    let mut best = (0, row.first().copied().unwrap_or(0.0));
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

/// `sum_{i in N_j} sum_k Xhat_ik B_jk^p` for plan `plan`.
pub fn peaked_service_weight(x: &[Vec<f64>], consumers: &[usize], plan: &ProductionPlan) -> f64 {
    consumers
        .iter()
        .map(|&i| {
            let (k, v) = peak_commodity(&x[i]);
            v * plan.rates[k]
        })
        .sum()
}

/// Two-timescale plan choice: maximize the peaked service weight.
pub fn plan_select_alg2(
    x: &[Vec<f64>],
    plans: &[ProductionPlan],
    consumers: &[usize],
) -> Result<usize, PolicyError> {
    if plans.is_empty() {
        return Err(PolicyError::EmptyPlanSet(consumers.first().copied().unwrap_or(0)));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (p, plan) in plans.iter().enumerate() {
        let w = peaked_service_weight(x, consumers, plan);
        if w > best.1 {
            best = (p, w);
        }
    }
    Ok(best.0)
}

/// Inputs to the drift-plus-penalty plan choice of one producer.
#[derive(Debug, Clone, Copy)]
pub struct CostlyPlanInputs<'a> {
    /// Backlogs frozen at the period start.
    pub x: &'a [Vec<f64>],
    pub consumers: &'a [usize],
    pub plans: &'a [ProductionPlan],
    /// Virtual cost queue.
    pub y: f64,
    /// Running mean of realized independent cost.
    pub j_bar: f64,
    pub period_length: u64,
    pub v: f64,
}

/// Score of running plan `p` (`None` = idle) for the drift-plus-penalty rule
/// `V (Jbar - c_p) - 2 (Y c_p - T sum_k sum_i Xhat_ik B_jk^p)`.
pub fn costly_plan_score(inputs: &CostlyPlanInputs<'_>, plan: Option<usize>) -> f64 {
    match plan {
        None => inputs.v * inputs.j_bar,
        Some(p) => {
            let plan = &inputs.plans[p];
            let service = peaked_service_weight(inputs.x, inputs.consumers, plan);
            inputs.v * (inputs.j_bar - plan.cost)
                - 2.0 * (inputs.y * plan.cost - inputs.period_length as f64 * service)
        }
    }
}

/// Drift-plus-penalty plan choice. Plans are scanned first in index order;
/// idle wins only when strictly better than every plan.
pub fn plan_select_alg3(inputs: &CostlyPlanInputs<'_>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for p in 0..inputs.plans.len() {
        let s = costly_plan_score(inputs, Some(p));
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((p, s));
        }
    }
    match best {
        Some((p, s)) if s >= costly_plan_score(inputs, None) => Some(p),
        _ => None,
    }
}

/// `max(y - realized, 0) + period_cost`.
pub fn virtual_queue_update(y: f64, realized: f64, period_cost: f64) -> Result<f64, PolicyError> {
    for (name, v) in [("queue", y), ("realized cost", realized), ("period cost", period_cost)] {
        if !v.is_finite() || v < 0.0 {
            return Err(PolicyError::InvalidArgument(format!(
                "{name} must be finite and >= 0, got {v}"
            )));
        }
    }
    Ok((y - realized).max(0.0) + period_cost)
}
