use super::{ExchangeGraph, ModelError, PolicyDecision, ProductionPlan, SimState};

/// One slot of a demand queue: service is applied to the pre-arrival backlog
/// and any excess is wasted.
pub fn queue_update(x_prev: f64, service: f64, arrivals: f64) -> Result<f64, ModelError> {
    for (name, v) in [("backlog", x_prev), ("service", service), ("arrivals", arrivals)] {
        if !v.is_finite() || v < 0.0 {
            return Err(ModelError::InvalidArgument(format!(
                "{name} must be finite and >= 0, got {v}"
            )));
        }
    }
    Ok((x_prev - service).max(0.0) + arrivals)
}

/// Service matrix `m[i][k]` delivered by `decision` under the active plans in
/// `state.z`. Producers without an active plan deliver nothing.
pub fn received_service(
    state: &SimState,
    decision: &PolicyDecision,
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
) -> Result<Vec<Vec<f64>>, ModelError> {
    let n = graph.n_entities();
    let k = state.x.first().map_or(0, |row| row.len());
    decision.validate(graph, k)?;
    if state.z.len() != n || plans.len() != n {
        return Err(ModelError::InvalidDecision(
            "state, plans and graph disagree on the number of entities".into(),
        ));
    }
    let mut m = vec![vec![0.0; k]; n];
    accumulate_service(&mut m, decision, &state.z, plans);
    Ok(m)
}

/// Adds the service of `decision` into `m` without validation.
pub(crate) fn accumulate_service(
    m: &mut [Vec<f64>],
    decision: &PolicyDecision,
    active: &[Option<usize>],
    plans: &[Vec<ProductionPlan>],
) {
    for a in &decision.alloc {
        if let Some(p) = active[a.producer] {
            m[a.consumer][a.commodity] += plans[a.producer][p].rates[a.commodity];
        }
    }
}
