//! Run configuration: a TOML schema covering the portfolio, the TTC and beta
//! matrices, the composite-index standardisation, the macro state-space
//! model, the anchor schedule, the scenario set, and the experiment settings.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiment::{RandomizationScope, RunConfig};
use crate::filter::AnchorConfig;
use crate::macroecon::{CompositeIndexParams, MacroStateModel, ScenarioSpec};
use crate::propagation::RatingDistribution;
use crate::ratings::{
    cohort_estimate, migration_counts_from_csv, SensitivityMatrix, TransitionMatrix,
    DEFAULT_EXPONENT_CAP,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSchema {
    portfolio: PortfolioSection,
    ttc: TtcSection,
    betas: BetasSection,
    #[serde(default)]
    index: IndexSection,
    macro_model: MacroModelSection,
    anchor: AnchorSection,
    scenario: BTreeMap<String, ScenarioSection>,
    experiment: ExperimentSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PortfolioSection {
    /// Obligor counts per rating state, default state last.
    counts: Vec<u64>,
    #[serde(default)]
    labels: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TtcSection {
    /// Explicit row-stochastic matrix, or a migration-counts CSV to estimate
    /// it from (exactly one must be given).
    rows: Option<Vec<Vec<f64>>>,
    counts_csv: Option<String>,
    #[serde(default)]
    force_absorption: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BetasSection {
    rows: Vec<Vec<f64>>,
    /// `as-written` applies the overlay exactly as configured;
    /// `adverse-positive` negates every sensitivity wholesale.
    #[serde(default = "default_orientation")]
    macro_orientation: String,
    #[serde(default = "default_exponent_cap")]
    exponent_cap: f64,
}

fn default_orientation() -> String {
    "as-written".to_string()
}

fn default_exponent_cap() -> f64 {
    DEFAULT_EXPONENT_CAP
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexSection {
    gdp_mean: f64,
    gdp_std: f64,
    unemp_mean: f64,
    unemp_std: f64,
}

impl Default for IndexSection {
    fn default() -> Self {
        let d = CompositeIndexParams::default();
        Self {
            gdp_mean: d.gdp_mean,
            gdp_std: d.gdp_std,
            unemp_mean: d.unemp_mean,
            unemp_std: d.unemp_std,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MacroModelSection {
    rho: f64,
    process_var: f64,
    #[serde(default = "default_h")]
    observation_map: f64,
    forecast_var: f64,
}

fn default_h() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorSection {
    m_star: f64,
    sigma_sq_in: f64,
    sigma_sq_out: f64,
    forecast_horizon: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    /// Built-in shape: `baseline`, `stress`, or `pandemic`.
    kind: Option<String>,
    /// Or explicit paths (both required together).
    gdp_forecast: Option<Vec<f64>>,
    unemp_forecast: Option<Vec<f64>>,
    /// Rows of `[quarter, gdp_delta, unemp_delta]`.
    #[serde(default)]
    realized_overrides: Vec<(usize, f64, f64)>,
    #[serde(default)]
    noise_sigma_gdp: Option<f64>,
    #[serde(default)]
    noise_sigma_unemp: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    horizon: usize,
    replications: usize,
    master_seed: u64,
    #[serde(default = "default_randomization")]
    randomization: String,
}

fn default_randomization() -> String {
    "realized-only".to_string()
}

/// Parse a config file. `base_dir` resolves relative CSV paths.
pub fn load_config_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let schema: FileSchema = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

    let initial_distribution = RatingDistribution::from_counts(&schema.portfolio.counts)?;
    let k = schema.portfolio.counts.len();
    if let Some(labels) = &schema.portfolio.labels {
        if labels.len() != k {
            return Err(Error::Config(format!(
                "portfolio.labels has {} entries for {k} states",
                labels.len()
            )));
        }
    }

    let ttc = match (&schema.ttc.rows, &schema.ttc.counts_csv) {
        (Some(rows), None) => TransitionMatrix::new(matrix_from_rows(rows, k, "ttc.rows")?, k - 1)?,
        (None, Some(csv_path)) => {
            let path = base_dir.join(csv_path);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                Error::Config(format!(
                    "cannot read ttc.counts_csv {}: {e}",
                    path.display()
                ))
            })?;
            let (_, counts) = migration_counts_from_csv(&text)?;
            if counts.num_states() != k {
                return Err(Error::Config(format!(
                    "ttc.counts_csv has {} states but the portfolio has {k}",
                    counts.num_states()
                )));
            }
            cohort_estimate(&counts, schema.ttc.force_absorption)?
        }
        _ => {
            return Err(Error::Config(
                "exactly one of ttc.rows and ttc.counts_csv must be set".to_string(),
            ))
        }
    };

    let mut betas = SensitivityMatrix::new(matrix_from_rows(&schema.betas.rows, k, "betas.rows")?)?;
    match schema.betas.macro_orientation.as_str() {
        "as-written" => {}
        "adverse-positive" => betas = betas.negated(),
        other => {
            return Err(Error::Config(format!(
                "betas.macro_orientation must be 'as-written' or 'adverse-positive', got '{other}'"
            )))
        }
    }

    let index_params = CompositeIndexParams::new(
        schema.index.gdp_mean,
        schema.index.gdp_std,
        schema.index.unemp_mean,
        schema.index.unemp_std,
    )?;

    let model = MacroStateModel::new(
        DMatrix::from_element(1, 1, schema.macro_model.rho),
        DMatrix::from_element(1, 1, schema.macro_model.process_var),
        DMatrix::from_element(1, 1, schema.macro_model.observation_map),
        DMatrix::from_element(1, 1, schema.macro_model.forecast_var),
        DVector::from_element(1, schema.anchor.m_star),
    )?;

    let anchor = AnchorConfig::new(
        DVector::from_element(1, schema.anchor.m_star),
        schema.anchor.sigma_sq_in,
        schema.anchor.sigma_sq_out,
        schema.anchor.forecast_horizon,
    )?;

    let t_f = schema.anchor.forecast_horizon;
    let mut scenarios = Vec::new();
    for (name, section) in &schema.scenario {
        let mut spec = match (
            &section.kind,
            &section.gdp_forecast,
            &section.unemp_forecast,
        ) {
            (Some(kind), None, None) => ScenarioSpec::builtin(kind, t_f)?,
            (None, Some(gdp), Some(unemp)) => ScenarioSpec {
                name: name.clone(),
                gdp_forecast: gdp.clone(),
                unemp_forecast: unemp.clone(),
                realized_overrides: BTreeMap::new(),
                noise_sigma_gdp: 0.0,
                noise_sigma_unemp: 0.0,
            },
            _ => {
                return Err(Error::Config(format!(
                    "scenario.{name}: set either kind or both explicit forecast paths"
                )))
            }
        };
        spec.name = name.clone();
        if !section.realized_overrides.is_empty() {
            spec.realized_overrides = section
                .realized_overrides
                .iter()
                .map(|&(t, g, u)| (t, (g, u)))
                .collect();
        }
        if let Some(s) = section.noise_sigma_gdp {
            spec.noise_sigma_gdp = s;
        }
        if let Some(s) = section.noise_sigma_unemp {
            spec.noise_sigma_unemp = s;
        }
        spec.validate()?;
        scenarios.push(spec);
    }
    if scenarios.is_empty() {
        return Err(Error::Config(
            "at least one scenario is required".to_string(),
        ));
    }

    let randomization = match schema.experiment.randomization.as_str() {
        "realized-only" => RandomizationScope::RealizedOnly,
        "forecast-and-realized" => RandomizationScope::ForecastAndRealized,
        other => {
            return Err(Error::Config(format!(
                "experiment.randomization must be 'realized-only' or 'forecast-and-realized', got '{other}'"
            )))
        }
    };

    let config = RunConfig {
        initial_distribution,
        ttc,
        betas,
        index_params,
        scenarios,
        model,
        anchor,
        horizon: schema.experiment.horizon,
        replications: schema.experiment.replications,
        master_seed: schema.experiment.master_seed,
        randomization,
        exponent_cap: schema.betas.exponent_cap,
    };
    config.validate()?;
    Ok(config)
}

/// Parse a config file from disk.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    load_config_str(&text, base)
}

fn matrix_from_rows(rows: &[Vec<f64>], k: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(Error::Config(format!("{what} must be a {k}x{k} matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(k, k, &flat))
}
