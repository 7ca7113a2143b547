//! Exhaustive reference implementations.
//!
//! Everything here is exponential in the instance size and deliberately
//! shares no code with the fast paths in `exchange-econ-core` beyond the
//! plain data types, so agreement between the two is meaningful.

use exchange_econ_core::model::{Allocation, ExchangeGraph, ProductionPlan};

/// Largest allocation set [`enumerate_allocations`] will walk.
pub const MAX_ALLOCATIONS: u64 = 1_000_000;
/// Largest entity count for [`enumerate_subsets`].
pub const MAX_SUBSET_ENTITIES: usize = 20;
/// Finest lattice step accepted by [`grid_search_nbs`].
pub const MIN_RESOLUTION: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    TooLarge(String),
    InvalidInput(String),
    /// No lattice point satisfies the constraints.
    Infeasible,
}

impl std::fmt::Display for OracleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::TooLarge(m) => write!(f, "instance too large: {m}"),
            Self::InvalidInput(m) => write!(f, "invalid input: {m}"),
            Self::Infeasible => write!(f, "no feasible lattice point"),
        }
    }
}

impl std::error::Error for OracleError {}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSearch {
    pub weight: f64,
    /// Every allocation attaining `weight`, in odometer order.
    pub argmax: Vec<Vec<Allocation>>,
}

/// Walks every allocation (each producer-commodity pair idle or serving one
/// out-neighbour) and returns the best weight with all maximizers.
pub fn enumerate_allocations(
    x: &[Vec<f64>],
    rates: &[Vec<f64>],
    graph: &ExchangeGraph,
) -> Result<AllocationSearch, OracleError> {
    let n = graph.n_entities();
    let k = x.first().map_or(0, Vec::len);
    if x.len() != n || rates.len() != n || rates.iter().any(|r| r.len() != k) {
        return Err(OracleError::InvalidInput("x and rates must be N x K".into()));
    }
    // choices[s] for slot s = (j, k): None (idle) then each consumer.
    let mut slots = Vec::new();
    let mut count: u64 = 1;
    for j in 0..n {
        let mut options = vec![None];
        options.extend(graph.edges().filter(|&(p, _)| p == j).map(|(_, i)| Some(i)));
        for c in 0..k {
            count = count.saturating_mul(options.len() as u64);
            if count > MAX_ALLOCATIONS {
                return Err(OracleError::TooLarge(format!("more than {MAX_ALLOCATIONS} allocations")));
            }
            slots.push((j, c, options.clone()));
        }
    }

    let mut digits = vec![0usize; slots.len()];
    let mut best = AllocationSearch {
        weight: f64::NEG_INFINITY,
        argmax: Vec::new(),
    };
    loop {
        let mut alloc = Vec::new();
        let mut weight = 0.0;
        for (&d, (j, c, options)) in digits.iter().zip(&slots) {
            if let Some(i) = options[d] {
                weight += x[i][*c] * rates[*j][*c];
                alloc.push(Allocation::new(*j, i, *c));
            }
        }
        if weight > best.weight {
            best.weight = weight;
            best.argmax.clear();
        }
        if weight == best.weight {
            best.argmax.push(alloc);
        }
        // Advance the odometer, least significant digit last.
        let mut pos = slots.len();
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < slots[pos].2.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSearch {
    /// Consumer subset with the smallest slack (first in mask order on ties).
    pub worst: Vec<usize>,
    /// `min_Q (sum_{j in N_Q} b_j - sum_{i in Q} a_i)`.
    pub slack: f64,
}

/// Direct evaluation of the subset condition over every nonempty subset.
pub fn enumerate_subsets(graph: &ExchangeGraph, a: &[f64], b: &[f64]) -> Result<SubsetSearch, OracleError> {
    let n = graph.n_entities();
    if n > MAX_SUBSET_ENTITIES {
        return Err(OracleError::TooLarge(format!("{n} entities")));
    }
    if a.len() != n || b.len() != n {
        return Err(OracleError::InvalidInput("a and b must have N entries".into()));
    }
    let mut best = SubsetSearch {
        worst: Vec::new(),
        slack: f64::INFINITY,
    };
    for mask in 1u32..(1u32 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let demand: f64 = members.iter().map(|&i| a[i]).sum();
        let mut producers = vec![false; n];
        for (j, i) in graph.edges() {
            if members.contains(&i) {
                producers[j] = true;
            }
        }
        let supply: f64 = (0..n).filter(|&j| producers[j]).map(|j| b[j]).sum();
        let slack = supply - demand;
        if slack < best.slack {
            best = SubsetSearch {
                worst: members,
                slack,
            };
        }
    }
    Ok(best)
}

/// Optimal value of `min/max c.x` subject to `A x <= b` by visiting every
/// basic solution. Assumes the feasible set is bounded; returns `None` when
/// it is empty.
pub fn vertex_enumeration_lp(
    c: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    maximize: bool,
) -> Option<(f64, Vec<f64>)> {
    let n = c.len();
    let m = a.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut chosen: Vec<usize> = (0..n).collect();
    if n > m {
        return None;
    }
    loop {
        if let Some(x) = solve_square(&chosen.iter().map(|&r| a[r].clone()).collect::<Vec<_>>(), &chosen.iter().map(|&r| b[r]).collect::<Vec<_>>()) {
            let feasible = a.iter().zip(b).all(|(row, &rhs)| {
                row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-9
            });
            if feasible {
                let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                let better = best.as_ref().is_none_or(|(bv, _)| if maximize { v > *bv } else { v < *bv });
                if better {
                    best = Some((v, x));
                }
            }
        }
        // Next n-combination of 0..m.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if chosen[i] < m - n + i {
                chosen[i] += 1;
                for t in i + 1..n {
                    chosen[t] = chosen[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_square(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| {
        let mut row = r.clone();
        row.push(v);
        row
    }).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Independent cost of one entity by vertex enumeration.
pub fn independent_cost(demand: &[f64], plans: &[ProductionPlan]) -> Option<f64> {
    let p = plans.len();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (k, &d) in demand.iter().enumerate() {
        rows.push(plans.iter().map(|pl| -pl.rates[k]).collect());
        rhs.push(-d);
    }
    rows.push(vec![1.0; p]);
    rhs.push(1.0);
    for v in 0..p {
        let mut r = vec![0.0; p];
        r[v] = -1.0;
        rows.push(r);
        rhs.push(0.0);
    }
    let costs: Vec<f64> = plans.iter().map(|pl| pl.cost).collect();
    vertex_enumeration_lp(&costs, &rows, &rhs, false).map(|(v, _)| v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridNbs {
    pub h: f64,
    /// Plan shares at the best lattice point, `zeta[j][p]`.
    pub zeta: Vec<Vec<f64>>,
    pub independent_cost: Vec<f64>,
}

/// Lattice points `m * step` on `{zeta >= 0, sum zeta <= 1}` in `dim` dimensions.
fn simplex_lattice(dim: usize, steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; dim];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, steps: usize, out: &mut Vec<Vec<f64>>) {
        if pos == cur.len() {
            out.push(cur.iter().map(|&m| m as f64 / steps as f64).collect());
            return;
        }
        for m in 0..=left {
            cur[pos] = m;
            rec(pos + 1, left - m, cur, steps, out);
        }
    }
    rec(0, steps, &mut cur, steps, &mut out);
    out
}

/// Whether production `r[j]` of one commodity can cover `d[i]` along graph
/// edges, by the subset (Hall) condition on the bipartite transport problem.
fn transportable(graph: &ExchangeGraph, r: &[f64], d: &[f64], tol: f64) -> bool {
    let n = r.len();
    (1u32..(1u32 << n)).all(|mask| {
        let demand: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| d[i]).sum();
        let supply: f64 = (0..n)
            .filter(|&j| (0..n).any(|i| mask >> i & 1 == 1 && graph.contains(j, i)))
            .map(|j| r[j])
            .sum();
        demand <= supply + tol
    })
}

/// Best Nash product over a lattice of plan shares with the given step. For
/// each lattice point, allocation feasibility is decided exactly per
/// commodity, so the result lower-bounds the true optimum.
pub fn grid_search_nbs(
    graph: &ExchangeGraph,
    plans: &[Vec<ProductionPlan>],
    a: &[Vec<f64>],
    eps1: f64,
    eps2: f64,
    resolution: f64,
) -> Result<GridNbs, OracleError> {
    let n = graph.n_entities();
    let k = a.first().map_or(0, Vec::len);
    if n > 2 || k > 2 || plans.iter().any(|p| p.len() > 2) {
        return Err(OracleError::TooLarge("requires N <= 2, K <= 2, at most 2 plans each".into()));
    }
    if !(MIN_RESOLUTION..=1.0).contains(&resolution) {
        return Err(OracleError::InvalidInput(format!("resolution must lie in [{MIN_RESOLUTION}, 1]")));
    }
    if plans.len() != n || a.len() != n || plans.iter().any(|p| p.is_empty()) {
        return Err(OracleError::InvalidInput("one plan list and demand row per entity".into()));
    }
    let mut j_ind = Vec::with_capacity(n);
    for (aj, ps) in a.iter().zip(plans) {
        j_ind.push(independent_cost(aj, ps).ok_or(OracleError::Infeasible)?);
    }
    let steps = (1.0 / resolution).round() as usize;
    let lattices: Vec<Vec<Vec<f64>>> = plans.iter().map(|ps| simplex_lattice(ps.len(), steps)).collect();

    let mut best: Option<GridNbs> = None;
    let mut idx = vec![0usize; n];
    let mut r = vec![0.0; n];
    let mut d = vec![0.0; n];
    loop {
        let zeta: Vec<&Vec<f64>> = idx.iter().zip(&lattices).map(|(&t, l)| &l[t]).collect();
        let costs: Vec<f64> = zeta
            .iter()
            .zip(plans)
            .map(|(z, ps)| z.iter().zip(ps).map(|(s, p)| s * p.cost).sum())
            .collect();
        let cheap = costs.iter().zip(&j_ind).all(|(c, j)| c + eps2 <= j + 1e-12);
        if cheap {
            let served = (0..k).all(|c| {
                for j in 0..n {
                    r[j] = zeta[j].iter().zip(&plans[j]).map(|(s, p)| s * p.rates[c]).sum();
                    d[j] = a[j][c] + eps1;
                }
                transportable(graph, &r, &d, 1e-12)
            });
            if served {
                let h: f64 = costs.iter().zip(&j_ind).map(|(c, j)| j - c).product();
                if best.as_ref().is_none_or(|b| h > b.h) {
                    best = Some(GridNbs {
                        h,
                        zeta: zeta.iter().map(|z| (*z).clone()).collect(),
                        independent_cost: j_ind.clone(),
                    });
                }
            }
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                return best.ok_or(OracleError::Infeasible);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < lattices[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}
