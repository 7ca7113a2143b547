//! Trace storage and time-average estimators.

/// Fraction of the horizon discarded before time averages are taken.
pub const BURN_IN: f64 = 0.2;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Plan index sentinel for an idle period.
const IDLE: u32 = u32::MAX;

/// Everything recorded during a run.
///
/// Period-level arrays are flattened as `period * n_entities + j`. The
/// realized-cost, running-mean, virtual-queue and Nash-product arrays are
/// only filled under the cost-aware policy.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTrace {
    pub n_entities: usize,
    pub period_length: u64,
    /// `plan_costs[j][p]`, used to report per-period cost.
    pub plan_costs: Vec<Vec<f64>>,
    /// `sum_{i,k} X_ik` after each slot.
    pub total_backlog: Vec<f64>,
    /// Incrementally maintained mean of `total_backlog[..=t]`.
    pub running_average: Vec<f64>,
    /// `sum_k X_ik` after each slot, when enabled.
    pub entity_backlog: Option<Vec<f64>>,
    period_plan: Vec<u32>,
    pub realized_independent: Vec<f64>,
    pub j_bar: Vec<f64>,
    pub virtual_queue: Vec<f64>,
    /// `prod_j (Jbar_j - cost_j)` at each period end.
    pub nash_sample: Vec<f64>,
    /// Periods whose demand exceeded what an entity could cover alone.
    pub flagged_periods: u64,
    backlog_sum: CompensatedSum,
}

impl MetricsTrace {
    pub(crate) fn new(n_entities: usize, period_length: u64, plan_costs: Vec<Vec<f64>>, horizon: u64, entity: bool) -> Self {
        let cap = horizon.min(1 << 24) as usize;
        Self {
            n_entities,
            period_length,
            plan_costs,
            total_backlog: Vec::with_capacity(cap),
            running_average: Vec::with_capacity(cap),
            entity_backlog: entity.then(|| Vec::with_capacity(cap * n_entities)),
            period_plan: Vec::new(),
            realized_independent: Vec::new(),
            j_bar: Vec::new(),
            virtual_queue: Vec::new(),
            nash_sample: Vec::new(),
            flagged_periods: 0,
            backlog_sum: CompensatedSum::default(),
        }
    }

    pub(crate) fn record_slot(&mut self, x: &[Vec<f64>]) {
        let mut total = 0.0;
        for row in x {
            let s: f64 = row.iter().sum();
            if let Some(e) = self.entity_backlog.as_mut() {
                e.push(s);
            }
            total += s;
        }
        self.total_backlog.push(total);
        self.backlog_sum.add(total);
        self.running_average
            .push(self.backlog_sum.value() / self.total_backlog.len() as f64);
    }

    pub(crate) fn record_plans(&mut self, z: &[Option<usize>]) {
        self.period_plan
            .extend(z.iter().map(|p| p.map_or(IDLE, |p| p as u32)));
    }

    pub fn n_slots(&self) -> usize {
        self.total_backlog.len()
    }

    /// Periods that started during the run (the last may be partial).
    pub fn n_periods(&self) -> usize {
        self.period_plan.len() / self.n_entities.max(1)
    }

    /// Number of periods that ran to completion.
    pub fn n_complete_periods(&self) -> usize {
        self.n_slots() / self.period_length.max(1) as usize
    }

    /// Plan run by `j` during `period`; `None` when idle or not recorded
    /// (stationary policies draw plans per slot).
    pub fn period_plan(&self, period: usize, j: usize) -> Option<usize> {
        let p = *self.period_plan.get(period * self.n_entities + j)?;
        (p != IDLE).then_some(p as usize)
    }

    /// Per-slot cost of entity `j` during `period`.
    pub fn period_cost(&self, period: usize, j: usize) -> f64 {
        self.period_plan(period, j)
            .map_or(0.0, |p| self.plan_costs[j][p])
    }

    pub fn entity_backlog_at(&self, slot: usize, i: usize) -> Option<f64> {
        self.entity_backlog
            .as_ref()
            .map(|e| e[slot * self.n_entities + i])
    }

    /// Least-squares slope of total backlog over the final half of the run.
    pub fn final_half_slope(&self) -> f64 {
        let n = self.n_slots();
        backlog_slope(&self.total_backlog[n / 2..])
    }

    pub fn summary(&self) -> Summary {
        let n = self.n_slots();
        let start = (BURN_IN * n as f64).floor() as usize;
        let tail = &self.total_backlog[start..];
        let mut acc = CompensatedSum::default();
        tail.iter().for_each(|&v| acc.add(v));
        let time_avg_backlog = if tail.is_empty() { 0.0 } else { acc.value() / tail.len() as f64 };

        let periods = self.n_complete_periods();
        let p0 = (BURN_IN * periods as f64).floor() as usize;
        let counted = (periods - p0).max(1) as f64;
        let mean_over = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            (0..self.n_entities)
                .map(|j| (p0..periods).map(|p| f(p, j)).sum::<f64>() / counted)
                .collect()
        };
        let time_avg_cost = mean_over(&|p, j| self.period_cost(p, j));
        let (time_avg_realized, nash_product, mean_nash_sample) = if self.realized_independent.is_empty() {
            (None, None, None)
        } else {
            let realized = mean_over(&|p, j| self.realized_independent[p * self.n_entities + j]);
            let product = realized
                .iter()
                .zip(&time_avg_cost)
                .map(|(r, c)| r - c)
                .product();
            let samples = &self.nash_sample[p0..periods];
            let mean = samples.iter().sum::<f64>() / counted;
            (Some(realized), Some(product), Some(mean))
        };
        Summary {
            slots: n as u64,
            periods: periods as u64,
            time_avg_backlog,
            final_running_average: self.running_average.last().copied().unwrap_or(0.0),
            time_avg_cost,
            time_avg_realized_independent: time_avg_realized,
            empirical_nash_product: nash_product,
            mean_nash_sample,
            final_half_slope: self.final_half_slope(),
            flagged_periods: self.flagged_periods,
        }
    }
}

/// Time averages after discarding the burn-in fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub slots: u64,
    pub periods: u64,
    pub time_avg_backlog: f64,
    pub final_running_average: f64,
    /// Per-slot cost of each entity averaged over complete periods.
    pub time_avg_cost: Vec<f64>,
    pub time_avg_realized_independent: Option<Vec<f64>>,
    /// `prod_j (mean realized independent cost - mean cost)`.
    pub empirical_nash_product: Option<f64>,
    /// Mean of the per-period samples `prod_j (Jbar_j - cost_j)`.
    pub mean_nash_sample: Option<f64>,
    pub final_half_slope: f64,
    pub flagged_periods: u64,
}

/// Least-squares slope of `ys` against their index.
pub fn backlog_slope(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let mean_t = (n - 1) as f64 / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, &y) in ys.iter().enumerate() {
        let dt = t as f64 - mean_t;
        sxy += dt * (y - mean_y);
        sxx += dt * dt;
    }
    sxy / sxx
}

/// Final-half slope above `0.01 * a_max` per slot.
pub fn is_unstable(trace: &MetricsTrace, a_max: f64) -> bool {
    trace.final_half_slope() > 0.01 * a_max
}
