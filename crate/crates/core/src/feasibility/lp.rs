//! Dense two-phase simplex for the small LPs in this crate.
//!
//! Variables carry a finite lower bound (default 0) and an optional upper
//! bound. Pivoting follows Bland's rule, which is slow on large problems but
//! never cycles; every LP solved here has at most a few hundred columns.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex exceeded {MAX_PIVOTS} pivots")]
    IterationLimit,
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

impl LinearProgram {
    /// `n` non-negative, unbounded-above variables and the given objective.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    /// Adds `sum_v coeff_v * x_v  <rel>  rhs` from sparse terms.
    pub fn constrain(
        &mut self,
        terms: impl IntoIterator<Item = (usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> &mut Self {
        let mut coeffs = vec![0.0; self.n_vars()];
        for (v, c) in terms {
            coeffs[v] += c;
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    pub fn bound(&mut self, var: usize, lower: f64, upper: Option<f64>) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    fn check_shape(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors do not match objective".into()));
        }
        let finite = |v: f64| v.is_finite();
        if !self.objective.iter().copied().all(finite) || !self.lower.iter().copied().all(finite) {
            return Err(LpError::Malformed("objective and lower bounds must be finite".into()));
        }
        if self.upper.iter().flatten().any(|u| !u.is_finite()) {
            return Err(LpError::Malformed("upper bounds must be finite when given".into()));
        }
        for (r, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::Malformed(format!("constraint {r} has wrong width")));
            }
            if !c.rhs.is_finite() || !c.coeffs.iter().copied().all(finite) {
                return Err(LpError::Malformed(format!("constraint {r} is not finite")));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (i, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[i] - v);
            if let Some(u) = self.upper[i] {
                worst = worst.max(v - u);
            }
        }
        worst
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row; last entry holds minus the objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.width]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.rows[pr][pc];
        for v in self.rows[pr].iter_mut() {
            *v *= inv;
        }
        self.rows[pr][pc] = 1.0;
        let pivot_row = self.rows[pr].clone();
        for (r, row) in self.rows.iter_mut().enumerate() {
            if r == pr {
                continue;
            }
            let f = row[pc];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        let f = self.obj[pc];
        if f != 0.0 {
            for c in 0..=w {
                self.obj[c] -= f * pivot_row[c];
            }
            self.obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width;
        self.obj = vec![0.0; w + 1];
        self.obj[..cost.len()].copy_from_slice(cost);
        for r in 0..self.rows.len() {
            let cb = cost.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for c in 0..=w {
                    self.obj[c] -= cb * self.rows[r][c];
                }
            }
        }
    }

    /// Minimizes the current objective over columns `< allowed`.
    fn optimize(&mut self, allowed: usize) -> Result<(), LpError> {
        for _ in 0..MAX_PIVOTS {
            let Some(pc) = (0..allowed).find(|&c| self.obj[c] < -PIVOT_TOL) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][pc];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - 1e-12
                                || (ratio <= bratio + 1e-12 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = best else {
                return Err(LpError::Unbounded);
            };
            self.pivot(pr, pc);
        }
        Err(LpError::IterationLimit)
    }
}

/// Solves `lp` to optimality or reports infeasibility / unboundedness.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check_shape()?;
    let n = lp.n_vars();

    // Shift to y = x - lower >= 0 and turn upper bounds into rows.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for c in &lp.constraints {
        let shift: f64 = c.coeffs.iter().zip(&lp.lower).map(|(a, l)| a * l).sum();
        rows.push((c.coeffs.clone(), c.relation, c.rhs - shift));
    }
    for (i, u) in lp.upper.iter().enumerate() {
        if let Some(u) = *u {
            if u < lp.lower[i] - FEAS_TOL {
                return Err(LpError::Infeasible);
            }
            let mut coeffs = vec![0.0; n];
            coeffs[i] = 1.0;
            rows.push((coeffs, Relation::Le, (u - lp.lower[i]).max(0.0)));
        }
    }
    for (coeffs, rel, rhs) in rows.iter_mut() {
        if *rhs < 0.0 {
            coeffs.iter_mut().for_each(|v| *v = -*v);
            *rhs = -*rhs;
            *rel = match *rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let art_start = n + n_slack;
    let width = art_start + n_art;

    let mut t = Tableau {
        rows: Vec::with_capacity(m),
        obj: Vec::new(),
        basis: Vec::with_capacity(m),
        width,
    };
    let (mut next_slack, mut next_art) = (n, art_start);
    for (coeffs, rel, rhs) in &rows {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(coeffs);
        row[width] = *rhs;
        match rel {
            Relation::Le => {
                row[next_slack] = 1.0;
                t.basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                t.basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                row[next_art] = 1.0;
                t.basis.push(next_art);
                next_art += 1;
            }
        }
        t.rows.push(row);
    }

    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        phase1[art_start..].iter_mut().for_each(|c| *c = 1.0);
        t.set_objective(&phase1);
        t.optimize(width)?;
        let infeasibility = -t.obj[width];
        let scale = 1.0 + rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
        if infeasibility > FEAS_TOL * scale {
            return Err(LpError::Infeasible);
        }
        // Drive zero-valued artificials out of the basis where possible.
        for r in 0..m {
            if t.basis[r] >= art_start {
                if let Some(pc) = (0..art_start).find(|&c| t.rows[r][c].abs() > 1e-9) {
                    t.pivot(r, pc);
                }
            }
        }
    }

    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let cost: Vec<f64> = lp.objective.iter().map(|c| sign * c).collect();
    t.set_objective(&cost);
    t.optimize(art_start)?;

    let mut x = lp.lower.clone();
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] += t.rhs(r).max(0.0);
        }
    }
    for (v, u) in x.iter_mut().zip(&lp.upper) {
        if let Some(u) = *u {
            *v = v.min(u);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { x, objective })
}
