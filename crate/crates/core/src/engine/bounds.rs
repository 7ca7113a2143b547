//! Closed-form backlog and optimality bounds.

use super::EngineError;
use crate::feasibility::{uniform_margin, uniform_margin_1c, FeasibilityError, SUSTAIN_TOL};
use crate::model::EconomyConfig;

fn check_demand(config: &EconomyConfig, a: &[Vec<f64>]) -> Result<(), EngineError> {
    if a.len() != config.n_entities() || a.iter().any(|r| r.len() != config.n_commodities) {
        return Err(EngineError::InvalidArgument(
            "demand must be an N x K matrix".into(),
        ));
    }
    Ok(())
}

fn interior(eps: Option<f64>) -> Result<f64, EngineError> {
    match eps {
        Some(e) if e > SUSTAIN_TOL && e.is_finite() => Ok(e),
        Some(e) if e.is_infinite() => Err(EngineError::UndefinedBound(
            "demand margin is unbounded".into(),
        )),
        _ => Err(EngineError::UndefinedBound(
            "demand is on or outside the region boundary".into(),
        )),
    }
}

/// Largest `eps` with `a + eps * 1` supportable by the economy.
pub fn demand_margin(config: &EconomyConfig, a: &[Vec<f64>]) -> Result<f64, EngineError> {
    check_demand(config, a)?;
    let eps = match config.fixed_rates() {
        Some(b) => {
            let flat: Vec<f64> = a.iter().map(|r| r[0]).collect();
            match uniform_margin_1c(&config.graph, &flat, &b) {
                Ok(e) => Some(e),
                Err(FeasibilityError::Infeasible(_)) => None,
                Err(e) => return Err(e.into()),
            }
        }
        None => uniform_margin(&config.graph, &config.plans, a)?,
    };
    interior(eps)
}

/// `(N A_max^2 + sum_i d_i^in B_max^2) / (2 eps(a))` for a single-commodity
/// economy with fixed production.
pub fn theorem1_bound(config: &EconomyConfig, a: &[Vec<f64>]) -> Result<f64, EngineError> {
    if config.fixed_rates().is_none() {
        return Err(EngineError::InvalidArgument(
            "requires one commodity and one plan per entity".into(),
        ));
    }
    let eps = demand_margin(config, a)?;
    let n = config.n_entities() as f64;
    let a_max = config.a_max();
    let b_max = config.b_max();
    let d_in: usize = (0..config.n_entities()).map(|i| config.graph.in_degree(i)).sum();
    Ok((n * a_max * a_max + d_in as f64 * b_max * b_max) / (2.0 * eps))
}

/// `(N K A_max^2 + sum_{i,k} sum_{j in N_i} (max_p B_jk^p)^2) / (eps / T)`.
pub fn theorem2_bound(config: &EconomyConfig, a: &[Vec<f64>]) -> Result<f64, EngineError> {
    let eps = demand_margin(config, a)?;
    let n = config.n_entities() as f64;
    let k = config.n_commodities;
    let a_max = config.a_max();
    let mut service = 0.0;
    for i in 0..config.n_entities() {
        for c in 0..k {
            for &j in config.graph.producers_of(i) {
                let b = config.plans[j].iter().map(|p| p.rates[c]).fold(0.0, f64::max);
                service += b * b;
            }
        }
    }
    let t = config.period_length as f64;
    Ok((n * k as f64 * a_max * a_max + service) / (eps / t))
}

/// Constant `C = T K N A_max^2 + T K sum_i (d_i^in B_max^2 + 2 c_i,max^2)`.
pub fn theorem3_constant(config: &EconomyConfig) -> f64 {
    let t = config.period_length as f64;
    let k = config.n_commodities as f64;
    let n = config.n_entities() as f64;
    let a_max = config.a_max();
    let b_max = config.b_max();
    let per_entity: f64 = (0..config.n_entities())
        .map(|i| {
            let c = config.c_max(i);
            config.graph.in_degree(i) as f64 * b_max * b_max + 2.0 * c * c
        })
        .sum();
    t * k * n * a_max * a_max + t * k * per_entity
}

/// `((C + V G_max) / eps(a), C / V)` with `G_max = prod_j c_j,max`.
pub fn theorem3_bounds(config: &EconomyConfig, a: &[Vec<f64>], v: f64) -> Result<(f64, f64), EngineError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(EngineError::InvalidArgument(format!("V must be positive, got {v}")));
    }
    let eps = demand_margin(config, a)?;
    let c = theorem3_constant(config);
    let g_max: f64 = (0..config.n_entities()).map(|j| config.c_max(j)).product();
    Ok(((c + v * g_max) / eps, c / v))
}
