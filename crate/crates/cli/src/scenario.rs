//! JSON scenario files.

use std::path::Path;

use exchange_econ_core::model::{
    ArrivalKind, ArrivalSpec, EconomyConfig, ExchangeGraph, PolicyKind, ProductionPlan,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub economy: EconomySpec,
    pub experiment: ExperimentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Complete,
    SelfLoops,
    /// Directed `[producer, consumer]` pairs; self-loops are implied.
    Edges { edges: Vec<[usize; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalKindSpec {
    Deterministic,
    BernoulliBatch,
    TruncatedPoisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalEntry {
    pub kind: ArrivalKindSpec,
    pub mean: f64,
    pub a_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub rates: Vec<f64>,
    #[serde(default)]
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    MaxWeight,
    TwoTimescale,
    CostAware,
    /// Stationary randomized allocation from the max-flow construction
    /// (single commodity, fixed production).
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomySpec {
    pub n_entities: usize,
    pub graph: GraphSpec,
    pub n_commodities: usize,
    /// `arrivals[i][k]`.
    pub arrivals: Vec<Vec<ArrivalEntry>>,
    /// `plans[j]`.
    pub plans: Vec<Vec<PlanEntry>>,
    #[serde(default = "one")]
    pub period_length: u64,
    pub policy: PolicySpec,
    #[serde(default)]
    pub v: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Trace,
    Summary,
    Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "one_u32")]
    pub runs: u32,
    pub horizon: u64,
    /// Progress is logged every this many slots (0 disables).
    #[serde(default)]
    pub report_every: u64,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
    #[serde(default = "default_directions")]
    pub region_directions: usize,
    /// Require and report the bargaining benchmark.
    #[serde(default)]
    pub nbs_benchmark: bool,
    #[serde(default = "default_eps")]
    pub eps1: f64,
    #[serde(default = "default_eps")]
    pub eps2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_stable: Option<bool>,
}

fn one() -> u64 {
    1
}
fn one_u32() -> u32 {
    1
}
fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Trace, OutputKind::Summary]
}
fn default_directions() -> usize {
    64
}
fn default_eps() -> f64 {
    exchange_econ_core::policies::DEFAULT_EPS
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let s: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("malformed scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        let x = &self.experiment;
        if x.runs == 0 {
            return bad("experiment.runs must be >= 1".into());
        }
        if x.horizon == 0 {
            return bad("experiment.horizon must be >= 1".into());
        }
        for (name, v) in [("eps1", x.eps1), ("eps2", x.eps2), ("v", self.economy.v)] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and >= 0"));
            }
        }
        self.config(None).map(|_| ())
    }

    /// The economy with the experiment horizon, optionally reseeded.
    pub fn config(&self, seed: Option<u64>) -> Result<EconomyConfig, CliError> {
        let e = &self.economy;
        let graph = match &e.graph {
            GraphSpec::Complete => ExchangeGraph::complete(e.n_entities),
            GraphSpec::SelfLoops => ExchangeGraph::self_loops_only(e.n_entities),
            GraphSpec::Edges { edges } => {
                ExchangeGraph::new(e.n_entities, edges.iter().map(|&[j, i]| (j, i)))
            }
        }
        .map_err(|err| CliError::Validation(err.to_string()))?;
        let arrivals = e
            .arrivals
            .iter()
            .map(|row| {
                row.iter()
                    .map(|a| {
                        let kind = match a.kind {
                            ArrivalKindSpec::Deterministic => ArrivalKind::Deterministic,
                            ArrivalKindSpec::BernoulliBatch => ArrivalKind::BernoulliBatch,
                            ArrivalKindSpec::TruncatedPoisson => ArrivalKind::TruncatedPoisson,
                        };
                        ArrivalSpec::new(kind, a.mean, a.a_max)
                    })
                    .collect()
            })
            .collect();
        let plans = e
            .plans
            .iter()
            .map(|ps| ps.iter().map(|p| ProductionPlan::new(p.rates.clone(), p.cost)).collect())
            .collect();
        let policy = match e.policy {
            PolicySpec::MaxWeight | PolicySpec::Stationary => PolicyKind::MaxWeight1C,
            PolicySpec::TwoTimescale => PolicyKind::TwoTimescale,
            PolicySpec::CostAware => PolicyKind::CostlyIc,
        };
        let config = EconomyConfig {
            graph,
            n_commodities: e.n_commodities,
            arrivals,
            plans,
            period_length: e.period_length,
            horizon: self.experiment.horizon,
            policy,
            v_param: e.v,
            seed: seed.unwrap_or(e.seed),
        };
        config
            .validate()
            .map_err(|err| CliError::Validation(err.to_string()))?;
        Ok(config)
    }
}
