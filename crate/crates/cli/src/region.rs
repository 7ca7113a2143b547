//! `region`: sample the supportable demand region along rays.

use std::path::Path;

use exchange_econ_core::feasibility::{sample_region_boundary, FeasibilityError, RegionSample};
use exchange_econ_core::model::EconomyConfig;

use crate::scenario::ScenarioFile;
use crate::{format_sig, CliError};

/// Samples both boundaries and writes one row per direction.
pub fn write_region(
    config: &EconomyConfig,
    directions: usize,
    path: &Path,
) -> Result<Vec<RegionSample>, CliError> {
    let samples = sample_region_boundary(&config.graph, &config.plans, directions).map_err(
        |e| match e {
            FeasibilityError::InvalidInput(m) => CliError::Validation(m),
            other => CliError::Validation(other.to_string()),
        },
    )?;
    let dim = config.n_entities() * config.n_commodities;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = Vec::with_capacity(3 * dim);
    for prefix in ["dir", "coop", "indep"] {
        header.extend((0..dim).map(|c| format!("{prefix}_{c}")));
    }
    w.write_record(&header)?;
    for s in &samples {
        let row = s
            .direction
            .iter()
            .chain(&s.cooperative)
            .chain(&s.independent)
            .map(|&v| format_sig(v));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(samples)
}

/// Loads a scenario and writes the boundary samples to `out`.
pub fn cmd_region(
    path: &Path,
    directions: Option<usize>,
    out: &Path,
) -> Result<Vec<RegionSample>, CliError> {
    let scenario = ScenarioFile::load(path)?;
    let config = scenario.config(None)?;
    let n = directions.unwrap_or(scenario.experiment.region_directions);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_region(&config, n, out)
}
