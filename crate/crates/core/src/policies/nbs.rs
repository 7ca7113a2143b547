//! Nash bargaining benchmark: the stationary cooperative policy maximizing
//! the product of per-entity savings over independent operation.
//!
//! In shipping variables `s_jik = rho_ji^k sum_p zeta_jp B_jk^p` the problem
//!
//! ```text
//! max  sum_j log(J_j - c_j . zeta_j)
//! s.t. sum_j s_jik >= a_ik + eps1
//!      sum_i s_jik <= sum_p zeta_jp B_jk^p
//!      c_j . zeta_j + eps2 <= J_j
//!      sum_p zeta_jp <= 1,  zeta, s >= 0
//! ```
//!
//! is concave with linear constraints, so a log-barrier Newton method finds
//! the global optimum. `rho` is recovered by normalizing shipments.

use nalgebra::{DMatrix, DVector};

use super::costs::independent_cost_lp;
use super::PolicyError;
use crate::feasibility::{
    lp_solve, ExchangeVars, LinearProgram, LpError, Relation, Sense, StationaryPolicy,
};
use crate::model::{EconomyConfig, ExchangeGraph, ProductionPlan};

/// Default demand and savings margins.
pub const DEFAULT_EPS: f64 = 1e-3;

const GAP_TOL: f64 = 1e-10;
const NEWTON_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 200;
const CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct NbsSolution {
    pub policy: StationaryPolicy,
    /// Optimal Nash product `prod_j (J_j - c_j . zeta_j)`.
    pub h_star: f64,
    /// Expected per-slot cost of each entity under the policy.
    pub cooperative_cost: Vec<f64>,
    /// Optimal independent cost `J_j` at the stated demand.
    pub independent_cost: Vec<f64>,
}

/// Benchmark at the configuration's mean arrival rates.
pub fn nbs_benchmark(config: &EconomyConfig, eps1: f64, eps2: f64) -> Result<NbsSolution, PolicyError> {
    config
        .validate()
        .map_err(|e| PolicyError::InvalidArgument(e.to_string()))?;
    nbs_solve(&config.graph, &config.plans, &config.arrival_means(), eps1, eps2)
}

/// Linear inequality `g . x <= h` with a label for diagnostics.
struct Row {
    g: Vec<f64>,
    h: f64,
    label: String,
}

struct Problem {
    n_vars: usize,
    rows: Vec<Row>,
    /// `(zeta variable indices, costs, J_j)` for entities with some costly plan.
    objective: Vec<(Vec<usize>, Vec<f64>, f64)>,
}

fn check_args(
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
    a: &[Vec<f64>],
    eps1: f64,
    eps2: f64,
) -> Result<usize, PolicyError> {
    let n = graph.n_entities();
    let bad = |m: &str| Err(PolicyError::InvalidArgument(m.into()));
    if plans.len() != n || a.len() != n {
        return bad("plans and demand must have one row per entity");
    }
    let k = a[0].len();
    if k == 0 || a.iter().any(|r| r.len() != k) {
        return bad("ragged demand matrix");
    }
    if plans.iter().any(|ps| ps.is_empty()) {
        return bad("every entity needs at least one plan");
    }
    if plans.iter().flatten().any(|p| p.rates.len() != k) {
        return bad("plan rates do not match commodities");
    }
    if a.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return bad("demand must be finite and >= 0");
    }
    if !(eps1.is_finite() && eps1 >= 0.0 && eps2.is_finite() && eps2 >= 0.0) {
        return bad("margins must be finite and >= 0");
    }
    Ok(k)
}

fn build(
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
    a: &[Vec<f64>],
    eps1: f64,
    eps2: f64,
    j_ind: &[f64],
    with_cost_rows: bool,
) -> Result<Problem, PolicyError> {
    let k = a[0].len();
    let vars = ExchangeVars::new(graph, plans, k);
    let nv = vars.n_vars;
    let mut lp = LinearProgram::new(Sense::Maximize, vec![0.0; nv]);
    vars.add_structure(&mut lp, plans);
    let mut rows: Vec<Row> = lp
        .constraints
        .into_iter()
        .map(|c| Row {
            g: c.coeffs,
            h: c.rhs,
            label: "plan share or shipping capacity".into(),
        })
        .collect();

    for (i, ai) in a.iter().enumerate() {
        for (kk, &d) in ai.iter().enumerate() {
            let mut g = vec![0.0; nv];
            for v in vars.arcs_into(i, kk) {
                g[v] = -1.0;
            }
            rows.push(Row {
                g,
                h: -(d + eps1),
                label: format!("demand of entity {i} for commodity {kk} plus eps1"),
            });
        }
    }
    let mut objective = Vec::new();
    for (j, ps) in plans.iter().enumerate() {
        let idx = vars.zeta[j].clone();
        let costs: Vec<f64> = ps.iter().map(|p| p.cost).collect();
        if with_cost_rows {
            let mut g = vec![0.0; nv];
            for (&v, &c) in idx.iter().zip(&costs) {
                g[v] = c;
            }
            rows.push(Row {
                g,
                h: j_ind[j] - eps2,
                label: format!("savings of entity {j} of at least eps2"),
            });
        }
        if costs.iter().any(|&c| c != 0.0) {
            objective.push((idx, costs, j_ind[j]));
        }
    }
    for v in 0..nv {
        let mut g = vec![0.0; nv];
        g[v] = -1.0;
        rows.push(Row {
            g,
            h: 0.0,
            label: format!("non-negativity of variable {v}"),
        });
    }

    // Rows without variables are either vacuous or prove infeasibility.
    let mut kept = Vec::with_capacity(rows.len());
    for row in rows {
        if row.g.iter().all(|&c| c == 0.0) {
            if row.h < 0.0 {
                return Err(PolicyError::Region(format!("{} cannot be met", row.label)));
            }
        } else {
            kept.push(row);
        }
    }
    Ok(Problem {
        n_vars: nv,
        rows: kept,
        objective,
    })
}

/// Point maximizing the smallest normalized slack, and that slack.
fn interior_start(p: &Problem) -> Result<Option<(Vec<f64>, f64)>, PolicyError> {
    let nv = p.n_vars;
    let mut obj = vec![0.0; nv + 1];
    obj[nv] = 1.0;
    let mut lp = LinearProgram::new(Sense::Maximize, obj);
    lp.bound(nv, 0.0, Some(1.0));
    for row in &p.rows {
        let norm = row.g.iter().map(|c| c * c).sum::<f64>().sqrt();
        let terms = row
            .g
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(v, &c)| (v, c))
            .chain([(nv, norm)]);
        lp.constrain(terms, Relation::Le, row.h);
    }
    match lp_solve(&lp) {
        Ok(sol) => {
            let t = sol.x[nv];
            Ok(Some((sol.x[..nv].to_vec(), t)))
        }
        Err(LpError::Infeasible) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

struct Barrier<'a> {
    p: &'a Problem,
    tau: f64,
}

impl Barrier<'_> {
    fn slacks(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let rs: Vec<f64> = self
            .p
            .rows
            .iter()
            .map(|r| r.h - r.g.iter().zip(x).map(|(g, v)| g * v).sum::<f64>())
            .collect();
        let us: Vec<f64> = self
            .p
            .objective
            .iter()
            .map(|(idx, c, j)| j - idx.iter().zip(c).map(|(&v, c)| c * x[v]).sum::<f64>())
            .collect();
        (rs.iter().chain(&us).all(|&s| s > 0.0)).then_some((rs, us))
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        let (rs, us) = self.slacks(x)?;
        Some(-self.tau * us.iter().map(|u| u.ln()).sum::<f64>() - rs.iter().map(|r| r.ln()).sum::<f64>())
    }

    fn newton_step(&self, x: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let nv = self.p.n_vars;
        let (rs, us) = self.slacks(x).expect("iterate is strictly feasible");
        let mut grad = DVector::<f64>::zeros(nv);
        let mut hess = DMatrix::<f64>::zeros(nv, nv);
        for ((idx, c, _), u) in self.p.objective.iter().zip(&us) {
            for (a, (&va, &ca)) in idx.iter().zip(c).enumerate() {
                grad[va] += self.tau * ca / u;
                for (&vb, &cb) in idx.iter().zip(c).skip(a) {
                    let h = self.tau * ca * cb / (u * u);
                    hess[(va, vb)] += h;
                    if va != vb {
                        hess[(vb, va)] += h;
                    }
                }
            }
        }
        for (row, r) in self.p.rows.iter().zip(&rs) {
            let nz: Vec<(usize, f64)> = row
                .g
                .iter()
                .enumerate()
                .filter(|(_, &g)| g != 0.0)
                .map(|(v, &g)| (v, g))
                .collect();
            for &(va, ga) in &nz {
                grad[va] += ga / r;
                for &(vb, gb) in &nz {
                    hess[(va, vb)] += ga * gb / (r * r);
                }
            }
        }
        let rhs = -&grad;
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                let ridge = 1e-12 * hess.trace().max(1.0);
                let h = hess + DMatrix::identity(nv, nv) * ridge;
                h.lu().solve(&rhs).unwrap_or_else(|| rhs.clone())
            }
        };
        (step, grad)
    }

    fn center(&self, x: &mut Vec<f64>) {
        for _ in 0..MAX_NEWTON {
            let (step, grad) = self.newton_step(x);
            let decrement = -grad.dot(&step);
            if decrement / 2.0 <= NEWTON_TOL || !decrement.is_finite() {
                return;
            }
            let f0 = self.value(x).expect("strictly feasible");
            let mut alpha = 1.0;
            loop {
                let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(v, d)| v + alpha * d).collect();
                if let Some(f) = self.value(&cand) {
                    if f <= f0 - 0.25 * alpha * decrement {
                        *x = cand;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-16 {
                    return;
                }
            }
        }
    }
}

/// Solves the bargaining problem at demand `a[i][k]`.
pub fn nbs_solve(
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
    a: &[Vec<f64>],
    eps1: f64,
    eps2: f64,
) -> Result<NbsSolution, PolicyError> {
    let k = check_args(graph, plans, a, eps1, eps2)?;
    let mut j_ind = Vec::with_capacity(plans.len());
    for (j, (aj, ps)) in a.iter().zip(plans).enumerate() {
        match independent_cost_lp(aj, ps) {
            Ok(c) => j_ind.push(c.cost),
            Err(PolicyError::NotSelfSustainable { .. }) => {
                return Err(PolicyError::Region(format!(
                    "entity {j} cannot cover its own demand alone, so its independent cost is undefined"
                )))
            }
            Err(e) => return Err(e),
        }
    }

    let problem = build(graph, plans, a, eps1, eps2, &j_ind, true)?;
    let (mut x, slack) = match interior_start(&problem)? {
        Some(start) => start,
        None => {
            let relaxed = build(graph, plans, a, eps1, eps2, &j_ind, false)?;
            let msg = if interior_start(&relaxed)?.is_none() {
                "demand plus eps1 lies outside the cooperative region"
            } else {
                "no cooperative schedule saves at least eps2 for every entity"
            };
            return Err(PolicyError::Region(msg.into()));
        }
    };
    if slack <= 1e-10 {
        return Err(PolicyError::Region(
            "the constraints admit no strictly feasible point (savings or demand margins are tight)"
                .into(),
        ));
    }

    let m = problem.rows.len() as f64;
    let mut barrier = Barrier {
        p: &problem,
        tau: 1.0,
    };
    loop {
        barrier.center(&mut x);
        if m / barrier.tau < GAP_TOL {
            break;
        }
        barrier.tau *= 20.0;
    }

    let vars = ExchangeVars::new(graph, plans, k);
    let mut policy = StationaryPolicy::default();
    for (j, idx) in vars.zeta.iter().enumerate() {
        for (p, &v) in idx.iter().enumerate() {
            let z = x[v].max(0.0);
            if z > 0.0 {
                policy.zeta.insert((j, p), z);
            }
        }
    }
    for &(v, j, i, kk) in &vars.ship {
        let produced: f64 = plans[j]
            .iter()
            .enumerate()
            .map(|(p, plan)| policy.zeta(j, p) * plan.rates[kk])
            .sum();
        if produced > 0.0 && x[v] > 0.0 {
            policy.rho.insert((j, i, kk), (x[v] / produced).min(1.0));
        }
    }
    let cooperative_cost: Vec<f64> = plans
        .iter()
        .enumerate()
        .map(|(j, ps)| {
            ps.iter()
                .enumerate()
                .map(|(p, plan)| policy.zeta(j, p) * plan.cost)
                .sum()
        })
        .collect();
    let h_star = j_ind
        .iter()
        .zip(&cooperative_cost)
        .map(|(j, c)| j - c)
        .product();
    check_nbs_constraints(graph, plans, a, eps1, eps2, &j_ind, &policy, CHECK_TOL)
        .map_err(|e| PolicyError::Region(format!("solution failed verification: {e}")))?;
    Ok(NbsSolution {
        policy,
        h_star,
        cooperative_cost,
        independent_cost: j_ind,
    })
}

/// Checks a product-form policy against every bargaining constraint.
#[allow(clippy::too_many_arguments)]
pub fn check_nbs_constraints(
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
    a: &[Vec<f64>],
    eps1: f64,
    eps2: f64,
    independent_cost: &[f64],
    policy: &StationaryPolicy,
    tol: f64,
) -> Result<(), String> {
    policy.check(graph, tol)?;
    for (i, ai) in a.iter().enumerate() {
        for (k, &d) in ai.iter().enumerate() {
            let served: f64 = graph
                .producers_of(i)
                .iter()
                .map(|&j| {
                    let produced: f64 = plans[j]
                        .iter()
                        .enumerate()
                        .map(|(p, plan)| policy.zeta(j, p) * plan.rates[k])
                        .sum();
                    policy.rho(j, i, k) * produced
                })
                .sum();
            if served < d + eps1 - tol {
                return Err(format!(
                    "entity {i} receives {served} of commodity {k}, below demand {d} + eps1"
                ));
            }
        }
    }
    for (j, ps) in plans.iter().enumerate() {
        let cost: f64 = ps.iter().enumerate().map(|(p, plan)| policy.zeta(j, p) * plan.cost).sum();
        if cost + eps2 > independent_cost[j] + tol {
            return Err(format!(
                "entity {j} pays {cost}, not eps2 below its independent cost {}",
                independent_cost[j]
            ));
        }
    }
    Ok(())
}
