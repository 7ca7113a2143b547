//! Domain types and the exact queue dynamics shared by all policies.
//!
//! Indices are zero-based throughout: entity `i` as a consumer and entity `j`
//! as a producer refer to the same node set `0..n_entities`.

mod arrivals;
mod dynamics;
mod graph;

pub use arrivals::{sample_arrivals, ArrivalKind, ArrivalSampler, ArrivalSpec};
pub use dynamics::{queue_update, received_service};
pub(crate) use dynamics::accumulate_service;
pub use graph::ExchangeGraph;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// A production plan: per-commodity output per slot and a cost per period.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductionPlan {
    pub rates: Vec<f64>,
    pub cost: f64,
}

impl ProductionPlan {
    pub fn new(rates: Vec<f64>, cost: f64) -> Self {
        Self { rates, cost }
    }

    /// Single-commodity plan with zero cost.
    pub fn fixed(rate: f64) -> Self {
        Self {
            rates: vec![rate],
            cost: 0.0,
        }
    }
}

/// The online controller driving a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Single commodity, fixed production, per-slot max-weight allocation.
    MaxWeight1C,
    /// Per-period plan selection on peaked backlogs, per-slot max-weight allocation.
    TwoTimescale,
    /// Drift-plus-penalty plan selection with per-entity virtual cost queues.
    CostlyIc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EconomyConfig {
    pub graph: ExchangeGraph,
    pub n_commodities: usize,
    /// `arrivals[i][k]` drives consumer `i`'s demand for commodity `k`.
    pub arrivals: Vec<Vec<ArrivalSpec>>,
    /// `plans[j]` is producer `j`'s plan list.
    pub plans: Vec<Vec<ProductionPlan>>,
    pub period_length: u64,
    pub horizon: u64,
    pub policy: PolicyKind,
    pub v_param: f64,
    pub seed: u64,
}

impl EconomyConfig {
    pub fn n_entities(&self) -> usize {
        self.graph.n_entities()
    }

    /// Checks every structural and policy-specific invariant.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_entities();
        let k = self.n_commodities;
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if k == 0 {
            return bad("n_commodities must be at least 1".into());
        }
        if self.period_length == 0 {
            return bad("period_length must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !self.v_param.is_finite() || self.v_param < 0.0 {
            return bad(format!("v_param must be finite and >= 0, got {}", self.v_param));
        }
        if self.arrivals.len() != n {
            return bad(format!(
                "arrivals has {} rows, expected one per entity ({n})",
                self.arrivals.len()
            ));
        }
        for (i, row) in self.arrivals.iter().enumerate() {
            if row.len() != k {
                return bad(format!(
                    "arrivals[{i}] has {} entries, expected n_commodities ({k})",
                    row.len()
                ));
            }
            for (c, spec) in row.iter().enumerate() {
                spec.validate()
                    .map_err(|e| ModelError::InvalidConfig(format!("arrivals[{i}][{c}]: {e}")))?;
            }
        }
        if self.plans.len() != n {
            return bad(format!(
                "plans has {} rows, expected one per entity ({n})",
                self.plans.len()
            ));
        }
        for (j, plans) in self.plans.iter().enumerate() {
            if plans.is_empty() {
                return bad(format!("entity {j} has an empty plan set"));
            }
            for (p, plan) in plans.iter().enumerate() {
                if plan.rates.len() != k {
                    return bad(format!(
                        "plans[{j}][{p}] has {} rates, expected n_commodities ({k})",
                        plan.rates.len()
                    ));
                }
                if plan.rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
                    return bad(format!("plans[{j}][{p}] rates must be finite and >= 0"));
                }
                if !plan.cost.is_finite() || plan.cost < 0.0 {
                    return bad(format!("plans[{j}][{p}] cost must be finite and >= 0"));
                }
            }
        }
        match self.policy {
            PolicyKind::MaxWeight1C => {
                if k != 1 {
                    return bad("max-weight-1c requires exactly one commodity".into());
                }
                for (j, plans) in self.plans.iter().enumerate() {
                    if plans.len() != 1 || plans[0].cost != 0.0 {
                        return bad(format!(
                            "max-weight-1c requires a single zero-cost plan per entity (entity {j})"
                        ));
                    }
                }
            }
            PolicyKind::TwoTimescale => {}
            PolicyKind::CostlyIc => {
                if self.v_param <= 0.0 {
                    return bad("costly-ic requires v_param > 0".into());
                }
            }
        }
        Ok(())
    }

    /// Mean arrival rate matrix `a[i][k]`.
    pub fn arrival_means(&self) -> Vec<Vec<f64>> {
        self.arrivals
            .iter()
            .map(|row| row.iter().map(|s| s.mean).collect())
            .collect()
    }

    /// Largest per-slot arrival bound over all (consumer, commodity) pairs.
    pub fn a_max(&self) -> f64 {
        self.arrivals
            .iter()
            .flatten()
            .map(|s| s.a_max)
            .fold(0.0, f64::max)
    }

    /// Largest production rate over every plan and commodity.
    pub fn b_max(&self) -> f64 {
        self.plans
            .iter()
            .flatten()
            .flat_map(|p| p.rates.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Largest plan cost of entity `j`.
    pub fn c_max(&self, j: usize) -> f64 {
        self.plans[j].iter().map(|p| p.cost).fold(0.0, f64::max)
    }

    /// Fixed production rates of a single-commodity, single-plan economy.
    pub fn fixed_rates(&self) -> Option<Vec<f64>> {
        if self.n_commodities != 1 || self.plans.iter().any(|p| p.len() != 1) {
            return None;
        }
        Some(self.plans.iter().map(|p| p[0].rates[0]).collect())
    }
}

/// Dynamic state at a slot boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Pending demands `x[i][k]`.
    pub x: Vec<Vec<f64>>,
    /// Virtual cost queues, one per entity.
    pub y: Vec<f64>,
    /// Active plan per entity; `None` means idle.
    pub z: Vec<Option<usize>>,
    pub slot: u64,
}

impl SimState {
    pub fn new(n_entities: usize, n_commodities: usize) -> Self {
        Self {
            x: vec![vec![0.0; n_commodities]; n_entities],
            y: vec![0.0; n_entities],
            z: vec![None; n_entities],
            slot: 0,
        }
    }

    pub fn total_backlog(&self) -> f64 {
        self.x.iter().flatten().sum()
    }
}

/// Producer `producer` sends its whole output of `commodity` to `consumer` this slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Allocation {
    pub producer: usize,
    pub consumer: usize,
    pub commodity: usize,
}

impl Allocation {
    pub fn new(producer: usize, consumer: usize, commodity: usize) -> Self {
        Self {
            producer,
            consumer,
            commodity,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyDecision {
    pub alloc: Vec<Allocation>,
    pub plan_choice: Vec<Option<usize>>,
}

impl PolicyDecision {
    /// Rejects allocations off the graph, out of range, or serving two
    /// consumers from the same (producer, commodity) pair.
    pub fn validate(&self, graph: &ExchangeGraph, n_commodities: usize) -> Result<(), ModelError> {
        let mut used = std::collections::BTreeSet::new();
        for a in &self.alloc {
            if a.commodity >= n_commodities {
                return Err(ModelError::InvalidDecision(format!(
                    "commodity {} out of range",
                    a.commodity
                )));
            }
            if !graph.contains(a.producer, a.consumer) {
                return Err(ModelError::InvalidDecision(format!(
                    "({}, {}) is not an edge",
                    a.producer, a.consumer
                )));
            }
            if !used.insert((a.producer, a.commodity)) {
                return Err(ModelError::InvalidDecision(format!(
                    "producer {} serves more than one consumer for commodity {}",
                    a.producer, a.commodity
                )));
            }
        }
        Ok(())
    }
}
