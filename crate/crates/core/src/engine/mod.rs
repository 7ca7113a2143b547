//! Slotted simulation loop.
//!
//! Each slot runs plan selection (at period starts), allocation, service,
//! arrivals and the queue update, then records metrics. Under the cost-aware
//! policy each period end also updates the realized independent cost, its
//! running mean and the virtual cost queues.

mod bounds;
mod metrics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::feasibility::{FeasibilityError, StationaryPolicy};
use crate::model::{
    accumulate_service, ArrivalSampler, EconomyConfig, ModelError, PolicyDecision, PolicyKind,
    SimState,
};
use crate::policies::{
    active_rates, maxweight_into, plan_select_alg2, plan_select_alg3, realized_independent_cost,
    virtual_queue_update, CostlyPlanInputs, IndependentCostBenchmark, PolicyError,
};

pub use bounds::{demand_margin, theorem1_bound, theorem2_bound, theorem3_bounds, theorem3_constant};
pub use metrics::{backlog_slope, is_unstable, CompensatedSum, MetricsTrace, Summary, BURN_IN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bound undefined: {0}")]
    UndefinedBound(String),
}

/// Sub-stream id for arrivals of consumer `i`, commodity `k`.
pub fn arrival_stream(i: usize, k: usize) -> u64 {
    ((i as u64) << 32) | k as u64
}

/// Sub-stream id used by randomized stationary policies.
pub const POLICY_STREAM: u64 = u64::MAX;

/// Cumulative sampling tables for a stationary randomized policy.
struct StationaryTables {
    /// `plans[j]`: `(plan, cumulative probability)`.
    plans: Vec<Vec<(usize, f64)>>,
    /// `targets[j][k]`: `(consumer, cumulative probability)`.
    targets: Vec<Vec<Vec<(usize, f64)>>>,
    rng: ChaCha8Rng,
}

impl StationaryTables {
    fn new(config: &EconomyConfig, policy: &StationaryPolicy) -> Result<Self, EngineError> {
        policy
            .check(&config.graph, 1e-9)
            .map_err(EngineError::InvalidArgument)?;
        let n = config.n_entities();
        let k = config.n_commodities;
        for &(j, i, c) in policy.rho.keys() {
            if j >= n || i >= n || c >= k {
                return Err(EngineError::InvalidArgument(format!("rho[{j},{i},{c}] out of range")));
            }
        }
        for &(j, p) in policy.zeta.keys() {
            if j >= n || p >= config.plans[j].len() {
                return Err(EngineError::InvalidArgument(format!("zeta[{j},{p}] out of range")));
            }
        }
        let cumulate = |items: Vec<(usize, f64)>| {
            let mut acc = 0.0;
            items
                .into_iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|(x, w)| {
                    acc += w;
                    (x, acc)
                })
                .collect::<Vec<_>>()
        };
        let plans = (0..n)
            .map(|j| cumulate((0..config.plans[j].len()).map(|p| (p, policy.zeta(j, p))).collect()))
            .collect();
        let targets = (0..n)
            .map(|j| {
                (0..k)
                    .map(|c| {
                        cumulate(
                            config
                                .graph
                                .consumers_of(j)
                                .iter()
                                .map(|&i| (i, policy.rho(j, i, c)))
                                .collect(),
                        )
                    })
                    .collect()
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(POLICY_STREAM);
        Ok(Self { plans, targets, rng })
    }

    fn draw(table: &[(usize, f64)], u: f64) -> Option<usize> {
        table.iter().find(|(_, c)| u < *c).map(|(x, _)| *x)
    }
}

enum Controller {
    Online,
    Stationary(Box<StationaryTables>),
}

/// Step-by-step simulator. Construct, call [`Simulator::step`] until it
/// returns `false`, then [`Simulator::finish`].
pub struct Simulator {
    config: EconomyConfig,
    controller: Controller,
    state: SimState,
    samplers: Vec<Vec<(ArrivalSampler, ChaCha8Rng)>>,
    decision: PolicyDecision,
    rates: Vec<Vec<f64>>,
    service: Vec<Vec<f64>>,
    period_start_x: Vec<Vec<f64>>,
    period_arrivals: Vec<Vec<f64>>,
    benchmark: IndependentCostBenchmark,
    trace: MetricsTrace,
}

impl Simulator {
    pub fn new(config: EconomyConfig) -> Result<Self, EngineError> {
        Self::build(config, None)
    }

    /// Simulator driven by a stationary randomized policy instead of the
    /// configured online policy.
    pub fn with_stationary(config: EconomyConfig, policy: &StationaryPolicy) -> Result<Self, EngineError> {
        Self::build(config, Some(policy))
    }

    fn build(config: EconomyConfig, policy: Option<&StationaryPolicy>) -> Result<Self, EngineError> {
        config.validate()?;
        let n = config.n_entities();
        let k = config.n_commodities;
        let controller = match policy {
            Some(p) => Controller::Stationary(Box::new(StationaryTables::new(&config, p)?)),
            None => Controller::Online,
        };
        let mut samplers = Vec::with_capacity(n);
        for (i, row) in config.arrivals.iter().enumerate() {
            let mut out = Vec::with_capacity(k);
            for (c, spec) in row.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(arrival_stream(i, c));
                out.push((ArrivalSampler::new(spec)?, rng));
            }
            samplers.push(out);
        }
        let plan_costs = config
            .plans
            .iter()
            .map(|ps| ps.iter().map(|p| p.cost).collect())
            .collect();
        let trace = MetricsTrace::new(n, config.period_length, plan_costs, config.horizon, false);
        Ok(Self {
            controller,
            state: SimState::new(n, k),
            samplers,
            decision: PolicyDecision::default(),
            rates: vec![vec![0.0; k]; n],
            service: vec![vec![0.0; k]; n],
            period_start_x: vec![vec![0.0; k]; n],
            period_arrivals: vec![vec![0.0; k]; n],
            benchmark: IndependentCostBenchmark::new(n),
            trace,
            config,
        })
    }

    /// Also record per-entity backlog every slot.
    pub fn record_entity_backlog(mut self, on: bool) -> Self {
        let n = self.config.n_entities();
        self.trace.entity_backlog = on.then(|| Vec::with_capacity(self.config.horizon.min(1 << 24) as usize * n));
        self
    }

    pub fn config(&self) -> &EconomyConfig {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Allocation and plan choice used in the most recent slot.
    pub fn last_decision(&self) -> &PolicyDecision {
        &self.decision
    }

    /// Service matrix delivered in the most recent slot.
    pub fn last_service(&self) -> &[Vec<f64>] {
        &self.service
    }

    pub fn trace(&self) -> &MetricsTrace {
        &self.trace
    }

    fn select_plans(&mut self) {
        let cfg = &self.config;
        let n = cfg.n_entities();
        match (&self.controller, cfg.policy) {
            (Controller::Stationary(_), _) => return,
            (Controller::Online, PolicyKind::MaxWeight1C) => {
                self.state.z.iter_mut().for_each(|z| *z = Some(0));
            }
            (Controller::Online, PolicyKind::TwoTimescale) => {
                for j in 0..n {
                    let consumers = cfg.graph.consumers_of(j);
                    self.state.z[j] = Some(
                        plan_select_alg2(&self.state.x, &cfg.plans[j], consumers)
                            .expect("validated plan sets are non-empty"),
                    );
                }
            }
            (Controller::Online, PolicyKind::CostlyIc) => {
                for j in 0..n {
                    let inputs = CostlyPlanInputs {
                        x: &self.state.x,
                        consumers: cfg.graph.consumers_of(j),
                        plans: &cfg.plans[j],
                        y: self.state.y[j],
                        j_bar: self.benchmark.j_bar(j),
                        period_length: cfg.period_length,
                        v: cfg.v_param,
                    };
                    self.state.z[j] = plan_select_alg3(&inputs);
                }
            }
        }
        self.rates = active_rates(&cfg.plans, &self.state.z, cfg.n_commodities);
        self.trace.record_plans(&self.state.z);
    }

    fn stationary_decision(&mut self) {
        let Controller::Stationary(tables) = &mut self.controller else {
            return;
        };
        let n = self.config.n_entities();
        self.decision.alloc.clear();
        for j in 0..n {
            let u: f64 = tables.rng.gen();
            self.state.z[j] = StationaryTables::draw(&tables.plans[j], u);
            for (c, table) in tables.targets[j].iter().enumerate() {
                let u: f64 = tables.rng.gen();
                if let Some(i) = StationaryTables::draw(table, u) {
                    self.decision.alloc.push(crate::model::Allocation::new(j, i, c));
                }
            }
        }
    }

    fn close_period(&mut self) -> Result<(), EngineError> {
        let n = self.config.n_entities();
        if self.config.policy != PolicyKind::CostlyIc || matches!(self.controller, Controller::Stationary(_)) {
            return Ok(());
        }
        let mut realized = Vec::with_capacity(n);
        for j in 0..n {
            let r = realized_independent_cost(
                &self.period_start_x[j],
                &self.period_arrivals[j],
                &self.config.plans[j],
                self.config.period_length,
            )?;
            if r.flagged {
                self.trace.flagged_periods += 1;
            }
            realized.push(r.value);
        }
        self.benchmark.record(&realized);
        let mut nash = 1.0;
        for (j, &r) in realized.iter().enumerate() {
            let cost = self.state.z[j].map_or(0.0, |p| self.config.plans[j][p].cost);
            self.state.y[j] = virtual_queue_update(self.state.y[j], r, cost)?;
            nash *= self.benchmark.j_bar(j) - cost;
            self.trace.realized_independent.push(r);
            self.trace.j_bar.push(self.benchmark.j_bar(j));
            self.trace.virtual_queue.push(self.state.y[j]);
        }
        self.trace.nash_sample.push(nash);
        Ok(())
    }

    /// Advances one slot. Returns `false` once the horizon has been reached.
    pub fn step(&mut self) -> Result<bool, EngineError> {
        let t = self.state.slot;
        if t >= self.config.horizon {
            return Ok(false);
        }
        let period = self.config.period_length;
        if t.is_multiple_of(period) {
            self.select_plans();
            for (start, x) in self.period_start_x.iter_mut().zip(&self.state.x) {
                start.copy_from_slice(x);
            }
            self.period_arrivals.iter_mut().flatten().for_each(|a| *a = 0.0);
        }

        if matches!(self.controller, Controller::Stationary(_)) {
            self.stationary_decision();
        } else {
            maxweight_into(&mut self.decision.alloc, &self.state.x, &self.rates, &self.config.graph);
        }
        self.decision.plan_choice.clone_from(&self.state.z);

        self.service.iter_mut().flatten().for_each(|m| *m = 0.0);
        accumulate_service(&mut self.service, &self.decision, &self.state.z, &self.config.plans);

        for (i, row) in self.samplers.iter_mut().enumerate() {
            for (c, (sampler, rng)) in row.iter_mut().enumerate() {
                let a = sampler.sample(rng);
                self.period_arrivals[i][c] += a;
                let x = &mut self.state.x[i][c];
                *x = (*x - self.service[i][c]).max(0.0) + a;
            }
        }
        self.trace.record_slot(&self.state.x);
        self.state.slot += 1;

        if self.state.slot.is_multiple_of(period) {
            self.close_period()?;
        }
        Ok(true)
    }

    /// Runs to the horizon and returns the trace.
    pub fn run_to_end(mut self) -> Result<MetricsTrace, EngineError> {
        while self.step()? {}
        Ok(self.finish())
    }

    pub fn finish(self) -> MetricsTrace {
        self.trace
    }
}

/// Runs the configured online policy over the full horizon.
pub fn run(config: EconomyConfig) -> Result<MetricsTrace, EngineError> {
    Simulator::new(config)?.run_to_end()
}

/// Runs a stationary randomized policy over the full horizon.
pub fn run_stationary(config: EconomyConfig, policy: &StationaryPolicy) -> Result<MetricsTrace, EngineError> {
    Simulator::with_stationary(config, policy)?.run_to_end()
}
