//! Membership in the cooperative demand region and boundary sampling.
//!
//! With production plans, the region is the convex hull of the per-slot
//! service matrices reachable by (allocation, plan) choices. Because a
//! producer's output of a commodity can be split across consumers in any
//! proportion over time, the hull is exactly the projection of the LP
//!
//! ```text
//! zeta_jp >= 0,  sum_p zeta_jp <= 1
//! s_jik  >= 0,   sum_i s_jik <= sum_p zeta_jp B_jk^p
//! sum_j s_jik >= a_ik
//! ```
//!
//! where `s_jik` is the long-run rate at which `j` ships commodity `k` to `i`.
//! A product-form randomized policy is recovered as
//! `rho_ji^k = s_jik / sum_p zeta_jp B_jk^p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lp::{lp_solve, LinearProgram, LpError, Relation, Sense};
use super::{check_sustainability_1c, largest_feasible, FeasibilityError, MAX_SUBSET_N};
use crate::model::{ExchangeGraph, ProductionPlan};

/// Variable layout for the cooperative exchange LP.
#[derive(Debug, Clone)]
pub(crate) struct ExchangeVars {
    pub n_vars: usize,
    /// `zeta[j][p]`: variable index of plan share.
    pub zeta: Vec<Vec<usize>>,
    /// `(var, j, i, k)` for each shipping variable. Only created when `j`
    /// can produce `k` at all.
    pub ship: Vec<(usize, usize, usize, usize)>,
    pub n_commodities: usize,
}

impl ExchangeVars {
    pub fn new(graph: &ExchangeGraph, plans: &[Vec<ProductionPlan>], n_commodities: usize) -> Self {
        let mut next = 0;
        let zeta = plans
            .iter()
            .map(|ps| {
                (0..ps.len())
                    .map(|_| {
                        next += 1;
                        next - 1
                    })
                    .collect()
            })
            .collect();
        let mut ship = Vec::new();
        for (j, ps) in plans.iter().enumerate() {
            for k in 0..n_commodities {
                if ps.iter().all(|p| p.rates[k] <= 0.0) {
                    continue;
                }
                for &i in graph.consumers_of(j) {
                    ship.push((next, j, i, k));
                    next += 1;
                }
            }
        }
        Self {
            n_vars: next,
            zeta,
            ship,
            n_commodities,
        }
    }

    /// Plan-share and shipping-capacity rows.
    pub fn add_structure(&self, lp: &mut LinearProgram, plans: &[Vec<ProductionPlan>]) {
        for zj in &self.zeta {
            lp.constrain(zj.iter().map(|&v| (v, 1.0)), Relation::Le, 1.0);
        }
        for (j, ps) in plans.iter().enumerate() {
            for k in 0..self.n_commodities {
                let ships: Vec<usize> = self
                    .ship
                    .iter()
                    .filter(|s| s.1 == j && s.3 == k)
                    .map(|s| s.0)
                    .collect();
                if ships.is_empty() {
                    continue;
                }
                let terms = ships.iter().map(|&v| (v, 1.0)).chain(
                    ps.iter()
                        .enumerate()
                        .map(|(p, plan)| (self.zeta[j][p], -plan.rates[k])),
                );
                lp.constrain(terms, Relation::Le, 0.0);
            }
        }
    }

    /// Shipping variables that deliver commodity `k` to consumer `i`.
    pub fn arcs_into(&self, i: usize, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.ship
            .iter()
            .filter(move |s| s.2 == i && s.3 == k)
            .map(|s| s.0)
    }
}

fn check_demand(
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
    a: &[Vec<f64>],
) -> Result<usize, FeasibilityError> {
    let n = graph.n_entities();
    if a.len() != n || plans.len() != n {
        return Err(FeasibilityError::InvalidInput(format!(
            "expected {n} demand rows and plan lists"
        )));
    }
    let k = a.first().map_or(0, |r| r.len());
    if k == 0 || a.iter().any(|r| r.len() != k) {
        return Err(FeasibilityError::InvalidInput("ragged demand matrix".into()));
    }
    if a.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(FeasibilityError::InvalidInput("demand must be finite and >= 0".into()));
    }
    if plans.iter().flatten().any(|p| p.rates.len() != k) {
        return Err(FeasibilityError::InvalidInput("plan rates do not match commodities".into()));
    }
    Ok(k)
}

fn single_plan_rates(plans: &[Vec<ProductionPlan>], k: usize) -> Option<Vec<f64>> {
    (k == 1 && plans.iter().all(|p| p.len() == 1)).then(|| plans.iter().map(|p| p[0].rates[0]).collect())
}

/// Whether demand `a[i][k]` lies in the cooperative region.
pub fn is_supportable(
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
    a: &[Vec<f64>],
) -> Result<bool, FeasibilityError> {
    let k = check_demand(graph, plans, a)?;
    if let Some(b) = single_plan_rates(plans, k) {
        if graph.n_entities() <= MAX_SUBSET_N {
            let flat: Vec<f64> = a.iter().map(|r| r[0]).collect();
            return Ok(check_sustainability_1c(graph, &flat, &b)?.sustainable);
        }
    }
    let vars = ExchangeVars::new(graph, plans, k);
    let mut lp = LinearProgram::new(Sense::Minimize, vec![0.0; vars.n_vars]);
    vars.add_structure(&mut lp, plans);
    for (i, row) in a.iter().enumerate() {
        for (c, &demand) in row.iter().enumerate() {
            let terms: Vec<(usize, f64)> = vars.arcs_into(i, c).map(|v| (v, 1.0)).collect();
            if terms.is_empty() {
                if demand > super::SUSTAIN_TOL {
                    return Ok(false);
                }
                continue;
            }
            lp.constrain(terms, Relation::Ge, demand);
        }
    }
    match lp_solve(&lp) {
        Ok(_) => Ok(true),
        Err(LpError::Infeasible) => Ok(false),
        Err(e) => Err(e.into()),
    }
}

fn total_capacity(plans: &[Vec<ProductionPlan>]) -> f64 {
    plans
        .iter()
        .map(|ps| {
            ps.iter()
                .map(|p| p.rates.iter().sum::<f64>())
                .fold(0.0, f64::max)
        })
        .sum()
}

/// Largest `s` with `s * direction` in the region (bisection).
pub fn supportable_scale(
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
    direction: &[Vec<f64>],
) -> Result<f64, FeasibilityError> {
    check_demand(graph, plans, direction)?;
    if direction.iter().flatten().all(|v| *v == 0.0) {
        return Err(FeasibilityError::InvalidDirection("zero direction".into()));
    }
    let mut point = direction.to_vec();
    let s = largest_feasible(
        |s| {
            for (row, d) in point.iter_mut().zip(direction) {
                row.iter_mut().zip(d).for_each(|(p, v)| *p = s * v);
            }
            is_supportable(graph, plans, &point)
        },
        total_capacity(plans),
    )?;
    Ok(s.unwrap_or(0.0))
}

/// Largest `eps` such that `a + eps * 1` stays in the region.
pub fn uniform_margin(
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
    a: &[Vec<f64>],
) -> Result<Option<f64>, FeasibilityError> {
    check_demand(graph, plans, a)?;
    let mut point = a.to_vec();
    largest_feasible(
        |eps| {
            for (row, base) in point.iter_mut().zip(a) {
                row.iter_mut().zip(base).for_each(|(p, v)| *p = v + eps);
            }
            is_supportable(graph, plans, &point)
        },
        total_capacity(plans),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSample {
    /// Unit direction, flattened as `i * K + k`.
    pub direction: Vec<f64>,
    /// Boundary point with exchange along the graph.
    pub cooperative: Vec<f64>,
    /// Boundary point when every entity serves only itself.
    pub independent: Vec<f64>,
}

/// `n` unit directions in the non-negative orthant of dimension `dim`.
/// Two dimensions use evenly spaced angles including both axes; higher
/// dimensions use a fixed pseudo-random sample.
pub fn region_directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![vec![1.0]; n],
        2 => (0..n)
            .map(|m| {
                let theta = if n == 1 {
                    std::f64::consts::FRAC_PI_4
                } else {
                    std::f64::consts::FRAC_PI_2 * m as f64 / (n - 1) as f64
                };
                vec![theta.cos().max(0.0), theta.sin().max(0.0)]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..n)
                .map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() + 1e-3).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / norm).collect()
                })
                .collect()
        }
    }
}

/// Cooperative and independent boundary points along `n_directions` rays.
pub fn sample_region_boundary(
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
    n_directions: usize,
) -> Result<Vec<RegionSample>, FeasibilityError> {
    let n = graph.n_entities();
    let k = plans
        .first()
        .and_then(|p| p.first())
        .map_or(0, |p| p.rates.len());
    if k == 0 || plans.len() != n {
        return Err(FeasibilityError::InvalidInput("plans do not match the graph".into()));
    }
    if n * k > 4 {
        return Err(FeasibilityError::InvalidInput(format!(
            "region sampling supports N*K <= 4, got {}",
            n * k
        )));
    }
    if n_directions == 0 {
        return Err(FeasibilityError::InvalidInput("need at least one direction".into()));
    }
    let alone = graph.without_exchange();
    region_directions(n * k, n_directions)
        .into_iter()
        .map(|d| {
            let dir: Vec<Vec<f64>> = d.chunks(k).map(|c| c.to_vec()).collect();
            let coop = supportable_scale(graph, plans, &dir)?;
            let indep = supportable_scale(&alone, plans, &dir)?;
            Ok(RegionSample {
                cooperative: d.iter().map(|v| coop * v).collect(),
                independent: d.iter().map(|v| indep * v).collect(),
                direction: d,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2_plans() -> Vec<Vec<ProductionPlan>> {
        vec![vec![ProductionPlan::fixed(2.0)], vec![ProductionPlan::fixed(3.0)]]
    }

    fn fig3_plans(b: f64) -> Vec<Vec<ProductionPlan>> {
        let p = vec![
            ProductionPlan::new(vec![b, 0.0], 1.0),
            ProductionPlan::new(vec![0.0, b], 1.0),
        ];
        vec![p.clone(), p]
    }

    #[test]
    fn fig2_diagonal_boundary() {
        let g = ExchangeGraph::complete(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let scale = supportable_scale(&g, &fig2_plans(), &[vec![s], vec![s]]).unwrap();
        assert!((scale * s - 2.5).abs() < 1e-6);
    }

    #[test]
    fn fig2_axis_boundaries() {
        let g = ExchangeGraph::complete(2).unwrap();
        let dir = [vec![1.0], vec![0.0]];
        assert!((supportable_scale(&g, &fig2_plans(), &dir).unwrap() - 5.0).abs() < 1e-6);
        let alone = g.without_exchange();
        assert!((supportable_scale(&alone, &fig2_plans(), &dir).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_direction_rejected() {
        let g = ExchangeGraph::complete(2).unwrap();
        assert!(matches!(
            supportable_scale(&g, &fig2_plans(), &[vec![0.0], vec![0.0]]),
            Err(FeasibilityError::InvalidDirection(_))
        ));
    }

    #[test]
    fn lp_route_agrees_with_subsets_on_single_commodity() {
        // Two plans, one of which dominates, forces the LP path.
        let g = ExchangeGraph::new(3, [(0, 1), (2, 1)]).unwrap();
        let plans: Vec<Vec<ProductionPlan>> = [1.0, 2.0, 0.5]
            .iter()
            .map(|&b| vec![ProductionPlan::fixed(b), ProductionPlan::fixed(b / 2.0)])
            .collect();
        let single: Vec<Vec<ProductionPlan>> = [1.0, 2.0, 0.5]
            .iter()
            .map(|&b| vec![ProductionPlan::fixed(b)])
            .collect();
        for a in [[0.5, 2.9, 0.0], [0.5, 3.1, 0.0], [1.2, 0.0, 0.4], [0.2, 1.0, 0.6]] {
            let a: Vec<Vec<f64>> = a.iter().map(|&v| vec![v]).collect();
            assert_eq!(
                is_supportable(&g, &plans, &a).unwrap(),
                is_supportable(&g, &single, &a).unwrap(),
                "{a:?}"
            );
        }
    }

    #[test]
    fn two_commodity_region() {
        // Pooled production: four units per slot split between commodities.
        let g = ExchangeGraph::complete(2).unwrap();
        let plans = fig3_plans(2.0);
        assert!(is_supportable(&g, &plans, &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap());
        assert!(!is_supportable(&g, &plans, &[vec![1.0, 1.0], vec![1.0, 1.01]]).unwrap());
        // Alone, each entity splits its own two units.
        let alone = g.without_exchange();
        assert!(is_supportable(&alone, &plans, &[vec![1.0, 1.0], vec![0.5, 1.5]]).unwrap());
        assert!(!is_supportable(&alone, &plans, &[vec![2.0, 0.5], vec![0.0, 0.0]]).unwrap());
        assert!(is_supportable(&g, &plans, &[vec![2.0, 0.5], vec![0.0, 0.0]]).unwrap());
        let eps = uniform_margin(&g, &plans, &[vec![0.7, 0.7], vec![0.7, 0.7]])
            .unwrap()
            .unwrap();
        assert!((eps - 0.3).abs() < 1e-6, "{eps}");
    }

    #[test]
    fn region_sampling_is_nested() {
        let g = ExchangeGraph::complete(2).unwrap();
        let samples = sample_region_boundary(&g, &fig2_plans(), 9).unwrap();
        assert_eq!(samples.len(), 9);
        for s in &samples {
            let coop: f64 = s.cooperative.iter().sum();
            let dn: f64 = s.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((dn - 1.0).abs() < 1e-12);
            assert!((coop - 5.0).abs() < 1e-5, "{s:?}");
            for (c, i) in s.cooperative.iter().zip(&s.independent) {
                assert!(c + 1e-9 >= *i);
            }
        }
    }

    #[test]
    fn region_sampling_rejects_bad_requests() {
        let g = ExchangeGraph::complete(2).unwrap();
        assert!(sample_region_boundary(&g, &fig2_plans(), 0).is_err());
        let g3 = ExchangeGraph::complete(3).unwrap();
        assert!(sample_region_boundary(&g3, &vec![fig3_plans(1.0)[0].clone(); 3], 4).is_err());
    }
}
