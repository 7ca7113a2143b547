//! Cost of meeting demand with an entity's own plans alone.

use super::PolicyError;
use crate::feasibility::{lp_solve, LinearProgram, LpError, Relation, Sense};
use crate::model::ProductionPlan;

#[derive(Debug, Clone, PartialEq)]
pub struct IndependentCost {
    pub cost: f64,
    /// Optimal plan shares.
    pub zeta: Vec<f64>,
}

fn check_plans(demand: &[f64], plans: &[ProductionPlan]) -> Result<(), PolicyError> {
    if plans.is_empty() {
        return Err(PolicyError::InvalidArgument("empty plan set".into()));
    }
    if plans.iter().any(|p| p.rates.len() != demand.len()) {
        return Err(PolicyError::InvalidArgument("plan rates do not match demand".into()));
    }
    if demand.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(PolicyError::InvalidArgument(format!(
            "demand must be finite and >= 0, got {demand:?}"
        )));
    }
    Ok(())
}

fn share_lp(objective: Vec<f64>, sense: Sense, plans: &[ProductionPlan]) -> LinearProgram {
    let mut lp = LinearProgram::new(sense, objective);
    lp.constrain((0..plans.len()).map(|p| (p, 1.0)), Relation::Le, 1.0);
    for p in 0..plans.len() {
        lp.bound(p, 0.0, Some(1.0));
    }
    lp
}

/// `min sum_p c_p zeta_p` subject to `sum_p zeta_p B_k^p >= demand_k`,
/// `sum_p zeta_p <= 1`, `zeta in [0, 1]`.
pub fn independent_cost_lp(
    demand: &[f64],
    plans: &[ProductionPlan],
) -> Result<IndependentCost, PolicyError> {
    check_plans(demand, plans)?;
    let mut lp = share_lp(plans.iter().map(|p| p.cost).collect(), Sense::Minimize, plans);
    for (k, &d) in demand.iter().enumerate() {
        lp.constrain(
            plans.iter().enumerate().map(|(p, plan)| (p, plan.rates[k])),
            Relation::Ge,
            d,
        );
    }
    match lp_solve(&lp) {
        Ok(sol) => Ok(IndependentCost {
            cost: sol.objective.max(0.0),
            zeta: sol.x,
        }),
        Err(LpError::Infeasible) => Err(PolicyError::NotSelfSustainable {
            demand: demand.to_vec(),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Largest `theta <= 1` such that `theta * demand` is coverable alone.
fn coverage(demand: &[f64], plans: &[ProductionPlan]) -> Result<f64, PolicyError> {
    let m = plans.len();
    let mut obj = vec![0.0; m + 1];
    obj[m] = 1.0;
    let mut lp = share_lp(obj, Sense::Maximize, plans);
    lp.bound(m, 0.0, Some(1.0));
    for (k, &d) in demand.iter().enumerate() {
        let terms = plans
            .iter()
            .enumerate()
            .map(|(p, plan)| (p, plan.rates[k]))
            .chain([(m, -d)]);
        lp.constrain(terms, Relation::Ge, 0.0);
    }
    Ok(lp_solve(&lp)?.objective.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedCost {
    pub value: f64,
    /// Set when the period's demand exceeded what the entity could cover
    /// alone and the cost of the largest coverable fraction was used.
    pub flagged: bool,
}

/// Per-slot cost the entity would have paid over one period to serve its
/// own backlog at the period start plus the period's arrivals, alone.
pub fn realized_independent_cost(
    pending: &[f64],
    arrivals: &[f64],
    plans: &[ProductionPlan],
    period_length: u64,
) -> Result<RealizedCost, PolicyError> {
    if pending.len() != arrivals.len() {
        return Err(PolicyError::InvalidArgument("pending and arrivals differ in length".into()));
    }
    if period_length == 0 {
        return Err(PolicyError::InvalidArgument("period length must be >= 1".into()));
    }
    let t = period_length as f64;
    let rate: Vec<f64> = pending.iter().zip(arrivals).map(|(x, a)| (x + a) / t).collect();
    check_plans(&rate, plans)?;
    match independent_cost_lp(&rate, plans) {
        Ok(c) => Ok(RealizedCost {
            value: c.cost,
            flagged: false,
        }),
        Err(PolicyError::NotSelfSustainable { .. }) => {
            let theta = coverage(&rate, plans)? * (1.0 - 1e-9);
            let scaled: Vec<f64> = rate.iter().map(|r| r * theta).collect();
            Ok(RealizedCost {
                value: independent_cost_lp(&scaled, plans)?.cost,
                flagged: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Running mean of realized independent cost per entity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndependentCostBenchmark {
    sums: Vec<f64>,
    periods: u64,
}

impl IndependentCostBenchmark {
    pub fn new(n_entities: usize) -> Self {
        Self {
            sums: vec![0.0; n_entities],
            periods: 0,
        }
    }

    pub fn record(&mut self, realized: &[f64]) {
        for (s, r) in self.sums.iter_mut().zip(realized) {
            *s += r;
        }
        self.periods += 1;
    }

    pub fn periods(&self) -> u64 {
        self.periods
    }

    /// Mean realized cost of entity `j` (zero before the first period).
    pub fn j_bar(&self, j: usize) -> f64 {
        if self.periods == 0 {
            0.0
        } else {
            self.sums[j] / self.periods as f64
        }
    }

    pub fn j_bars(&self) -> Vec<f64> {
        (0..self.sums.len()).map(|j| self.j_bar(j)).collect()
    }
}
