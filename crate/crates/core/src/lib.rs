//! Cooperative exchange economies on a directed graph.
//!
//! Entities generate stochastic demands for one or more commodities, produce
//! resources under selectable production plans, and exchange those resources
//! with their graph neighbours. The crate provides:
//!
//! - [`model`]: domain types and the queue dynamics shared by every policy,
//! - [`feasibility`]: sustainability checks, stationary randomized policies,
//!   region sampling and the small dense LP solver used throughout,
//! - [`policies`]: the online max-weight, two-timescale and cost-aware
//!   (virtual queue) controllers plus the static cost benchmarks,
//! - [`engine`]: the slotted simulation loop, metrics and backlog bounds.

pub mod engine;
pub mod feasibility;
pub mod model;
pub mod policies;

pub use engine::{run, MetricsTrace, Simulator};
pub use model::{
    ArrivalKind, ArrivalSpec, EconomyConfig, ExchangeGraph, PolicyDecision, PolicyKind,
    ProductionPlan, SimState,
};
