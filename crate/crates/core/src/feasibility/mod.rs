//! Static analysis of an economy: sustainability verdicts, stationary
//! randomized policies, region boundaries and the LP machinery behind them.
//!
//! Single-commodity economies with fixed production `b` are sustainable iff
//! for every consumer subset `Q` the producers able to reach `Q` out-produce
//! its demand. That condition is checked two ways: exhaustive subset
//! enumeration (small `N`) and a layered max-flow network (any `N`).

pub mod lp;
pub mod maxflow;
mod region;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::ExchangeGraph;
pub use lp::{lp_solve, Constraint, LinearProgram, LpError, LpSolution, Relation, Sense};
pub use maxflow::{build_maxflow_network, max_flow, FlowArc, FlowNetwork, MaxFlow};
pub(crate) use region::ExchangeVars;
pub use region::{
    is_supportable, region_directions, sample_region_boundary, supportable_scale, uniform_margin,
    RegionSample,
};

/// Absolute tolerance on sustainability comparisons.
pub const SUSTAIN_TOL: f64 = 1e-9;

/// Largest `N` accepted by the exhaustive subset check.
pub const MAX_SUBSET_N: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{n} entities is too many for subset enumeration (max {max}); use check_sustainability_maxflow")]
    TooLarge { n: usize, max: usize },
    #[error("demand is not sustainable (violating subset {:?}, slack {})", .0.violating_subset, .0.slack)]
    Infeasible(FeasibilityReport),
    #[error("invalid direction: {0}")]
    InvalidDirection(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub sustainable: bool,
    /// Consumers (ascending) whose joint demand exceeds what can reach them.
    pub violating_subset: Option<Vec<usize>>,
    /// Minimum over subsets of (reachable production - demand). The max-flow
    /// check reports `min(0, .)`, i.e. the flow deficit.
    pub slack: f64,
}

/// Stationary randomized policy: `rho[(j, i, k)]` is the probability that
/// producer `j` serves consumer `i` in commodity `k`; `zeta[(j, p)]` the
/// probability that `j` runs plan `p`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StationaryPolicy {
    pub rho: BTreeMap<(usize, usize, usize), f64>,
    pub zeta: BTreeMap<(usize, usize), f64>,
}

impl StationaryPolicy {
    pub fn rho(&self, j: usize, i: usize, k: usize) -> f64 {
        self.rho.get(&(j, i, k)).copied().unwrap_or(0.0)
    }

    pub fn zeta(&self, j: usize, p: usize) -> f64 {
        self.zeta.get(&(j, p)).copied().unwrap_or(0.0)
    }

    /// Checks box bounds, graph support, and both row-sum families.
    pub fn check(&self, graph: &ExchangeGraph, tol: f64) -> Result<(), String> {
        let mut row: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&(j, i, k), &r) in &self.rho {
            if !(-tol..=1.0 + tol).contains(&r) {
                return Err(format!("rho[{j},{i},{k}] = {r} outside [0, 1]"));
            }
            if r > tol && !graph.contains(j, i) {
                return Err(format!("rho[{j},{i},{k}] > 0 on a non-edge"));
            }
            *row.entry((j, k)).or_default() += r;
        }
        if let Some((&(j, k), s)) = row.iter().find(|(_, &s)| s > 1.0 + tol) {
            return Err(format!("sum_i rho[{j},i,{k}] = {s} > 1"));
        }
        let mut plan_row: BTreeMap<usize, f64> = BTreeMap::new();
        for (&(j, p), &z) in &self.zeta {
            if !(-tol..=1.0 + tol).contains(&z) {
                return Err(format!("zeta[{j},{p}] = {z} outside [0, 1]"));
            }
            *plan_row.entry(j).or_default() += z;
        }
        if let Some((j, s)) = plan_row.iter().find(|(_, &s)| s > 1.0 + tol) {
            return Err(format!("sum_p zeta[{j},p] = {s} > 1"));
        }
        Ok(())
    }

    /// Expected single-commodity service `sum_j rho_ji b_j` per consumer.
    pub fn service_1c(&self, b: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; b.len()];
        for (&(j, i, k), &r) in &self.rho {
            if k == 0 {
                s[i] += r * b[j];
            }
        }
        s
    }
}

pub(crate) fn check_inputs_1c(
    graph: &ExchangeGraph,
    a: &[f64],
    b: &[f64],
) -> Result<(), FeasibilityError> {
    let n = graph.n_entities();
    if a.len() != n || b.len() != n {
        return Err(FeasibilityError::InvalidInput(format!(
            "expected {n} demand and production rates, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(FeasibilityError::InvalidInput(
            "rates must be finite and >= 0".into(),
        ));
    }
    Ok(())
}

/// Exhaustive subset check of the single-commodity sustainability condition.
pub fn check_sustainability_1c(
    graph: &ExchangeGraph,
    a: &[f64],
    b: &[f64],
) -> Result<FeasibilityReport, FeasibilityError> {
    check_inputs_1c(graph, a, b)?;
    let n = graph.n_entities();
    if n > MAX_SUBSET_N {
        return Err(FeasibilityError::TooLarge {
            n,
            max: MAX_SUBSET_N,
        });
    }
    let producer_mask: Vec<u32> = (0..n)
        .map(|i| graph.producers_of(i).iter().fold(0u32, |m, &j| m | (1 << j)))
        .collect();
    let full = 1usize << n;
    let mut reach = vec![0u32; full];
    let mut demand = vec![0.0f64; full];
    let mut worst = (f64::INFINITY, 0usize);
    for q in 1..full {
        let low = q.trailing_zeros() as usize;
        let rest = q & (q - 1);
        reach[q] = reach[rest] | producer_mask[low];
        demand[q] = demand[rest] + a[low];
        let mut supply = 0.0;
        let mut m = reach[q];
        while m != 0 {
            supply += b[m.trailing_zeros() as usize];
            m &= m - 1;
        }
        let slack = supply - demand[q];
        if slack < worst.0 {
            worst = (slack, q);
        }
    }
    let sustainable = worst.0 >= -SUSTAIN_TOL;
    Ok(FeasibilityReport {
        sustainable,
        violating_subset: (!sustainable).then(|| (0..n).filter(|i| worst.1 >> i & 1 == 1).collect()),
        slack: worst.0,
    })
}

/// Max-flow check of the same condition; works for any `N`.
pub fn check_sustainability_maxflow(
    graph: &ExchangeGraph,
    a: &[f64],
    b: &[f64],
) -> Result<FeasibilityReport, FeasibilityError> {
    let net = build_maxflow_network(graph, a, b)?;
    let flow = max_flow(&net)?;
    let total: f64 = a.iter().sum();
    let deficit = flow.value - total;
    if deficit >= -SUSTAIN_TOL {
        return Ok(FeasibilityReport {
            sustainable: true,
            violating_subset: None,
            slack: deficit.min(0.0),
        });
    }
    // Normalize the residual cut so every kept consumer has all of its
    // producers on the source side; the cut stays minimal and the kept set
    // violates the subset condition.
    let layout = maxflow::Layout {
        n: graph.n_entities(),
    };
    let subset: Vec<usize> = (0..layout.n)
        .filter(|&i| flow.source_side[layout.consumer(i)])
        .filter(|&i| {
            graph
                .producers_of(i)
                .iter()
                .all(|&j| flow.source_side[layout.producer(j)])
        })
        .collect();
    Ok(FeasibilityReport {
        sustainable: false,
        violating_subset: Some(subset),
        slack: deficit,
    })
}

/// Largest `eps >= 0` for which `feasible(eps)` holds, assuming monotonicity.
/// Returns `None` if `feasible(0)` fails and `f64::INFINITY` if it never does.
pub(crate) fn largest_feasible<E>(
    mut feasible: impl FnMut(f64) -> Result<bool, E>,
    hint: f64,
) -> Result<Option<f64>, E> {
    if !feasible(0.0)? {
        return Ok(None);
    }
    let mut hi = hint.max(1.0);
    while feasible(hi)? {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(Some(f64::INFINITY));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Distance to the boundary along the all-ones direction: the largest `eps`
/// such that `a + eps * 1` remains sustainable.
pub fn uniform_margin_1c(
    graph: &ExchangeGraph,
    a: &[f64],
    b: &[f64],
) -> Result<f64, FeasibilityError> {
    check_inputs_1c(graph, a, b)?;
    let hint = b.iter().sum::<f64>();
    let mut shifted = a.to_vec();
    let margin = largest_feasible(
        |eps| {
            shifted.iter_mut().zip(a).for_each(|(s, v)| *s = v + eps);
            check_sustainability_maxflow(graph, &shifted, b).map(|r| r.sustainable)
        },
        hint,
    )?;
    match margin {
        Some(m) => Ok(m),
        None => Err(FeasibilityError::Infeasible(check_sustainability_maxflow(
            graph, a, b,
        )?)),
    }
}

/// Stationary randomized allocation built from a max-flow decomposition.
///
/// Demands of consumers with positive rate are first inflated by the largest
/// uniform margin that keeps them sustainable, so the resulting service rate
/// strictly exceeds demand whenever the economy is interior. Then
/// `rho_ji = f(i -> j') / b_j`.
pub fn stationary_policy_1c(
    graph: &ExchangeGraph,
    a: &[f64],
    b: &[f64],
) -> Result<StationaryPolicy, FeasibilityError> {
    let report = check_sustainability_maxflow(graph, a, b)?;
    if !report.sustainable {
        return Err(FeasibilityError::Infeasible(report));
    }
    let active: Vec<bool> = a.iter().map(|&v| v > 0.0).collect();
    let inflate = |eps: f64| -> Vec<f64> {
        a.iter()
            .zip(&active)
            .map(|(&v, &on)| if on { v + eps } else { 0.0 })
            .collect()
    };
    let margin = largest_feasible(
        |eps| check_sustainability_maxflow(graph, &inflate(eps), b).map(|r| r.sustainable),
        b.iter().sum(),
    )?
    .unwrap_or(0.0);
    let margin = if margin.is_finite() { margin } else { 0.0 };
    let target = inflate(margin);

    let net = build_maxflow_network(graph, &target, b)?;
    let flow = max_flow(&net)?;
    let layout = maxflow::Layout {
        n: graph.n_entities(),
    };
    let mut policy = StationaryPolicy::default();
    for (arc, &f) in net.arcs.iter().zip(&flow.arc_flows) {
        if arc.from == layout.source() || arc.to == layout.sink() {
            continue;
        }
        let i = arc.from - layout.consumer(0);
        let j = arc.to - layout.producer(0);
        if f > 0.0 && b[j] > 0.0 {
            policy.rho.insert((j, i, 0), (f / b[j]).min(1.0));
        }
    }
    for j in 0..graph.n_entities() {
        policy.zeta.insert((j, 0), 1.0);
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig2() -> ExchangeGraph {
        ExchangeGraph::complete(2).unwrap()
    }

    #[test]
    fn fig2_interior_is_sustainable() {
        let r = check_sustainability_1c(&fig2(), &[2.4, 2.4], &[2.0, 3.0]).unwrap();
        assert!(r.sustainable);
        assert!(r.violating_subset.is_none());
        assert!((r.slack - 0.2).abs() < 1e-12);
    }

    #[test]
    fn fig2_exterior_names_the_full_set() {
        let r = check_sustainability_1c(&fig2(), &[2.6, 2.6], &[2.0, 3.0]).unwrap();
        assert!(!r.sustainable);
        assert_eq!(r.violating_subset, Some(vec![0, 1]));
        assert!((r.slack + 0.2).abs() < 1e-12);

        let r = check_sustainability_maxflow(&fig2(), &[2.6, 2.6], &[2.0, 3.0]).unwrap();
        assert!(!r.sustainable);
        assert_eq!(r.violating_subset, Some(vec![0, 1]));
        assert!((r.slack + 0.2).abs() < 1e-9);
    }

    #[test]
    fn zero_demand_is_sustainable() {
        let g = ExchangeGraph::new(3, [(0, 1)]).unwrap();
        assert!(check_sustainability_1c(&g, &[0.0; 3], &[0.0, 1.0, 2.0]).unwrap().sustainable);
        assert!(check_sustainability_maxflow(&g, &[0.0; 3], &[0.0, 1.0, 2.0]).unwrap().sustainable);
    }

    #[test]
    fn boundary_counts_as_sustainable() {
        let r = check_sustainability_1c(&fig2(), &[2.5, 2.5], &[2.0, 3.0]).unwrap();
        assert!(r.sustainable);
        assert!(r.slack.abs() < 1e-12);
        assert!(check_sustainability_maxflow(&fig2(), &[2.5, 2.5], &[2.0, 3.0]).unwrap().sustainable);
    }

    #[test]
    fn subset_check_refuses_large_graphs() {
        let g = ExchangeGraph::self_loops_only(21).unwrap();
        let err = check_sustainability_1c(&g, &[0.0; 21], &[1.0; 21]).unwrap_err();
        assert!(matches!(err, FeasibilityError::TooLarge { n: 21, .. }));
        assert!(check_sustainability_maxflow(&g, &[0.5; 21], &[1.0; 21]).unwrap().sustainable);
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(check_sustainability_1c(&fig2(), &[1.0], &[1.0, 1.0]).is_err());
        assert!(check_sustainability_1c(&fig2(), &[-1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn fig2_margin() {
        let eps = uniform_margin_1c(&fig2(), &[2.2, 2.2], &[2.0, 3.0]).unwrap();
        assert!((eps - 0.3).abs() < 1e-9);
        assert!(uniform_margin_1c(&fig2(), &[2.6, 2.6], &[2.0, 3.0]).is_err());
    }

    fn assert_valid_policy(g: &ExchangeGraph, a: &[f64], b: &[f64], p: &StationaryPolicy) {
        p.check(g, 1e-9).unwrap();
        let service = p.service_1c(b);
        for (s, d) in service.iter().zip(a) {
            assert!(s + 1e-9 >= *d, "service {s} below demand {d}");
        }
    }

    #[test]
    fn fig2_stationary_policy() {
        let g = fig2();
        let (a, b) = ([2.4, 2.4], [2.0, 3.0]);
        let p = stationary_policy_1c(&g, &a, &b).unwrap();
        assert_valid_policy(&g, &a, &b, &p);
        // With the 0.1 margin both consumers receive 2.5 per slot.
        for s in p.service_1c(&b) {
            assert!((s - 2.5).abs() < 1e-6);
        }
    }

    #[test]
    fn self_loop_policy_covers_own_demand() {
        let g = ExchangeGraph::self_loops_only(3).unwrap();
        let (a, b) = ([0.5, 1.0, 0.2], [1.0, 2.0, 0.4]);
        let p = stationary_policy_1c(&g, &a, &b).unwrap();
        assert_valid_policy(&g, &a, &b, &p);
        for i in 0..3 {
            assert!(p.rho(i, i, 0) >= a[i] / b[i] - 1e-9);
        }
    }

    #[test]
    fn zero_demand_policy_is_empty() {
        let g = fig2();
        let p = stationary_policy_1c(&g, &[0.0, 0.0], &[2.0, 3.0]).unwrap();
        assert!(p.rho.values().all(|&r| r == 0.0));
    }

    #[test]
    fn infeasible_policy_carries_report() {
        match stationary_policy_1c(&fig2(), &[2.6, 2.6], &[2.0, 3.0]) {
            Err(FeasibilityError::Infeasible(r)) => assert!(!r.sustainable),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn random_instance() -> impl Strategy<Value = (ExchangeGraph, Vec<f64>, Vec<f64>)> {
        (1usize..=7).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n * n),
                proptest::collection::vec(0.0f64..5.0, n),
                proptest::collection::vec(0.0f64..5.0, n),
            )
                .prop_map(move |(mask, a, b)| {
                    let edges = (0..n * n).filter(|e| mask[*e]).map(|e| (e / n, e % n));
                    (ExchangeGraph::new(n, edges).unwrap(), a, b)
                })
        })
    }

    proptest! {
        #[test]
        fn flow_bounds_and_verdict((g, a, b) in random_instance()) {
            let f = max_flow(&build_maxflow_network(&g, &a, &b).unwrap()).unwrap();
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            prop_assert!(f.value <= sa.min(sb) + 1e-9);
            let by_flow = check_sustainability_maxflow(&g, &a, &b).unwrap();
            let by_subset = check_sustainability_1c(&g, &a, &b).unwrap();
            prop_assert_eq!(by_flow.sustainable, by_subset.sustainable);
            prop_assert_eq!(by_flow.sustainable, f.value >= sa - SUSTAIN_TOL);
            if let Some(q) = by_flow.violating_subset {
                let reach: std::collections::BTreeSet<usize> =
                    q.iter().flat_map(|&i| g.producers_of(i).iter().copied()).collect();
                let slack: f64 = reach.iter().map(|&j| b[j]).sum::<f64>()
                    - q.iter().map(|&i| a[i]).sum::<f64>();
                prop_assert!(slack < 0.0);
                prop_assert!((by_flow.slack - by_subset.slack).abs() < 1e-7);
            }
        }

        #[test]
        fn scaling_preserves_verdict((g, a, b) in random_instance()) {
            let a2: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
            let b2: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
            prop_assert_eq!(
                check_sustainability_1c(&g, &a, &b).unwrap().sustainable,
                check_sustainability_1c(&g, &a2, &b2).unwrap().sustainable
            );
        }

        #[test]
        fn stationary_policy_meets_constraints((g, a, b) in random_instance()) {
            if let Ok(p) = stationary_policy_1c(&g, &a, &b) {
                p.check(&g, 1e-9).unwrap();
                let service = p.service_1c(&b);
                for (s, d) in service.iter().zip(&a) {
                    prop_assert!(s + 1e-7 >= *d);
                }
            } else {
                prop_assert!(!check_sustainability_1c(&g, &a, &b).unwrap().sustainable);
            }
        }
    }
}
