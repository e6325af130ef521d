//! Monte Carlo harness comparing raw, naive, and anchored macro estimation
//! across scenarios, plus the instability demonstration and the accumulation
//! bound check.
//!
//! Per replication, one realised scenario path is generated from a derived
//! seed and all three methods consume that identical signal (common random
//! numbers). In the window the signal is the realised composite index; beyond
//! the forecast window raw and naive hold the final signal value (no
//! reversion mechanism), while the anchored filter follows its anchor
//! schedule. Macro accuracy is measured against the noise-free realised path
//! inside the window and the neutral level beyond it.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{anchored_step_traced, naive_step_traced, AnchorConfig, FilterState};
use crate::macroecon::{
    central_realized_index, generate_scenario, CompositeIndexParams, MacroStateModel,
    ScenarioPaths, ScenarioSpec,
};
use crate::numeric::{compensated_sum, derive_seed, mean_variance, KahanSum};
use crate::propagation::{
    deviation_bound, estimate_lipschitz, propagate_one, PDTermStructure, RatingDistribution,
};
use crate::ratings::{
    logit_overlay_capped, uniform_sensitivity_bound, SensitivityMatrix, TransitionMatrix,
};

/// Macro estimation method driving the PIT matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Raw,
    Naive,
    Anchored,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Raw, Method::Naive, Method::Anchored];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::Naive => "naive",
            Method::Anchored => "anchored",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which layers are redrawn per replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomizationScope {
    /// Forecast paths stay deterministic; only realised noise is redrawn.
    RealizedOnly,
    /// The forecast paths are jittered per replication as well.
    ForecastAndRealized,
}

/// Full experiment configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub initial_distribution: RatingDistribution,
    pub ttc: TransitionMatrix,
    pub betas: SensitivityMatrix,
    pub index_params: CompositeIndexParams,
    pub scenarios: Vec<ScenarioSpec>,
    pub model: MacroStateModel,
    pub anchor: AnchorConfig,
    /// Total quarters (forecast window plus post-window tail).
    pub horizon: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub randomization: RandomizationScope,
    pub exponent_cap: f64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.ttc.num_states();
        if self.initial_distribution.num_states() != k || self.betas.num_states() != k {
            return Err(Error::DimensionMismatch(
                "portfolio, TTC and betas must share K".to_string(),
            ));
        }
        if self.model.dim() != 1 {
            return Err(Error::Validation(
                "the scenario experiment drives a scalar composite index".to_string(),
            ));
        }
        if self.horizon < self.anchor.forecast_horizon {
            return Err(Error::Validation(format!(
                "horizon {} is shorter than the forecast window {}",
                self.horizon, self.anchor.forecast_horizon
            )));
        }
        if self.replications == 0 {
            return Err(Error::Validation(
                "need at least one replication".to_string(),
            ));
        }
        for spec in &self.scenarios {
            spec.validate()?;
            if spec.horizon() != self.anchor.forecast_horizon {
                return Err(Error::Validation(format!(
                    "scenario '{}' has {} quarters but the forecast window is {}",
                    spec.name,
                    spec.horizon(),
                    self.anchor.forecast_horizon
                )));
            }
        }
        Ok(())
    }

    /// Initial filter state: mean at the anchor, covariance at the stationary
    /// state covariance (identity fallback for non-contractive dynamics).
    fn initial_filter_state(&self) -> Result<FilterState> {
        let cov = self
            .model
            .stationary_covariance()
            .unwrap_or_else(|_| nalgebra::DMatrix::identity(self.model.dim(), self.model.dim()));
        FilterState::new(self.anchor.m_star.clone(), cov, 0)
    }
}

/// One filter step as written to trace CSVs.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: usize,
    pub mu: f64,
    pub sigma: f64,
    pub innovation: f64,
    pub gain: f64,
}

/// Output of one method on one replication.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub pd: PDTermStructure,
    pub macro_estimates: Vec<f64>,
    /// Per-quarter signal the method consumed.
    pub signal: Vec<f64>,
    /// Per-quarter truth used for the RMSE (noise-free realised path in the
    /// window, neutral level beyond).
    pub truth: Vec<f64>,
    pub macro_rmse: f64,
    /// Per-step filter diagnostics; empty for the raw method.
    pub trace: Vec<TraceRow>,
    pub paths: ScenarioPaths,
}

fn jittered_spec(spec: &ScenarioSpec, seed: u64) -> ScenarioSpec {
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut out = spec.clone();
    for g in &mut out.gdp_forecast {
        *g += spec.noise_sigma_gdp * rng.sample::<f64, _>(StandardNormal);
    }
    for u in &mut out.unemp_forecast {
        *u += spec.noise_sigma_unemp * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

/// Run one method on one scenario replication.
///
/// The scenario realisation is a pure function of `replication_seed`, so all
/// methods called with the same seed consume bit-identical data.
pub fn run_method(
    config: &RunConfig,
    method: Method,
    spec: &ScenarioSpec,
    replication_seed: u64,
) -> Result<MethodRun> {
    let spec_used = match config.randomization {
        RandomizationScope::RealizedOnly => spec.clone(),
        RandomizationScope::ForecastAndRealized => {
            jittered_spec(spec, derive_seed(replication_seed, 0x6a, 0))
        }
    };
    let paths = generate_scenario(&spec_used, &config.index_params, replication_seed)?;
    let truth_central = central_realized_index(&spec_used, &config.index_params)?;
    let t_f = config.anchor.forecast_horizon;
    let m_star = config.anchor.m_star[0];

    let mut signal = Vec::with_capacity(config.horizon);
    let mut truth = Vec::with_capacity(config.horizon);
    for q in 1..=config.horizon {
        if q <= t_f {
            signal.push(paths.realized_index[q - 1]);
            truth.push(truth_central[q - 1]);
        } else {
            signal.push(paths.realized_index[t_f - 1]);
            truth.push(m_star);
        }
    }

    let mut estimates = Vec::with_capacity(config.horizon);
    let mut trace = Vec::new();
    match method {
        Method::Raw => {
            estimates.extend_from_slice(&signal);
        }
        Method::Naive => {
            let mut state = config.initial_filter_state()?;
            for q in 1..=config.horizon {
                let y = DVector::from_element(1, signal[q - 1]);
                let (next, diag) = naive_step_traced(&state, &config.model, &y)?;
                state = next;
                estimates.push(state.mean_scalar());
                trace.push(TraceRow {
                    t: q,
                    mu: state.mean_scalar(),
                    sigma: state.covariance_scalar(),
                    innovation: diag.innovation,
                    gain: diag.gain,
                });
            }
        }
        Method::Anchored => {
            let mut state = config.initial_filter_state()?;
            for q in 1..=config.horizon {
                let y = DVector::from_element(1, signal[q - 1]);
                let (next, diag) =
                    anchored_step_traced(&state, &config.model, &y, &config.anchor, q - 1)?;
                state = next;
                estimates.push(state.mean_scalar());
                trace.push(TraceRow {
                    t: q,
                    mu: state.mean_scalar(),
                    sigma: state.covariance_scalar(),
                    innovation: diag.innovation,
                    gain: diag.gain,
                });
            }
        }
    }

    let mut pi = config.initial_distribution.clone();
    let mut values = Vec::with_capacity(config.horizon);
    for q in 1..=config.horizon {
        let pit = logit_overlay_capped(
            &config.ttc,
            &config.betas,
            estimates[q - 1],
            config.exponent_cap,
        )?;
        pi = propagate_one(&pi, &pit)?;
        values.push(pi.default_mass());
    }
    let pd = PDTermStructure::new(values, config.initial_distribution.default_mass())?;

    let mut sq = KahanSum::new();
    for (e, t) in estimates.iter().zip(&truth) {
        let d = e - t;
        sq.add(d * d);
    }
    let macro_rmse = (sq.value() / config.horizon as f64).sqrt();

    Ok(MethodRun {
        pd,
        macro_estimates: estimates,
        signal,
        truth,
        macro_rmse,
        trace,
        paths,
    })
}

/// Aggregates for one (scenario, method) cell.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub scenario: String,
    pub method: Method,
    /// Across-replication variance of `Y_t`, averaged over horizons.
    pub mean_var_yt: f64,
    /// Mean and standard deviation of the terminal cumulative PD.
    pub mean_y_terminal: f64,
    pub std_y_terminal: f64,
    /// Pooled RMSE of the macro estimates against the truth.
    pub macro_rmse: f64,
    /// Mean cumulative PD path across replications.
    pub mean_pd_path: Vec<f64>,
    /// Per-replication PD paths, kept only when requested.
    pub replication_pd: Option<Vec<Vec<f64>>>,
}

/// Representative (first-replication) traces for CSV output.
#[derive(Debug, Clone)]
pub struct ScenarioTraces {
    pub scenario: String,
    pub paths: ScenarioPaths,
    pub filter_traces: Vec<(Method, Vec<TraceRow>)>,
}

/// Full Monte Carlo output.
#[derive(Debug, Clone)]
pub struct MonteCarloSummary {
    pub cells: Vec<CellSummary>,
    /// Per method: mean over scenarios of `mean_var_yt` (equal weights).
    pub pooled_mean_var: Vec<(Method, f64)>,
    pub traces: Vec<ScenarioTraces>,
}

impl MonteCarloSummary {
    pub fn cell(&self, scenario: &str, method: Method) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.method == method)
    }

    pub fn pooled_var(&self, method: Method) -> f64 {
        self.pooled_mean_var
            .iter()
            .find(|(m, _)| *m == method)
            .map(|(_, v)| *v)
            .expect("method present")
    }
}

/// Run the full scenario-by-method grid.
///
/// Replication seeds are derived from `(master_seed, scenario index,
/// replication index)`, so the output is a pure function of the config and
/// independent of the parallel execution schedule. Replications run in
/// parallel; aggregation happens sequentially in replication order.
pub fn monte_carlo(
    config: &RunConfig,
    methods: &[Method],
    keep_replication_pd: bool,
) -> Result<MonteCarloSummary> {
    config.validate()?;
    let mut cells = Vec::new();
    let mut traces = Vec::new();

    for (s_idx, spec) in config.scenarios.iter().enumerate() {
        let runs: Vec<Result<Vec<MethodRun>>> = (0..config.replications)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(config.master_seed, s_idx as u64, rep as u64);
                methods
                    .iter()
                    .map(|&m| run_method(config, m, spec, seed))
                    .collect()
            })
            .collect();
        let runs: Vec<Vec<MethodRun>> = runs.into_iter().collect::<Result<_>>()?;

        let mut filter_traces = Vec::new();
        for (m_idx, &method) in methods.iter().enumerate() {
            let pd_paths: Vec<&[f64]> = runs.iter().map(|r| r[m_idx].pd.values()).collect();
            let mut var_acc = KahanSum::new();
            for t in 0..config.horizon {
                let at_t: Vec<f64> = pd_paths.iter().map(|p| p[t]).collect();
                let (_, var) = mean_variance(&at_t);
                var_acc.add(var);
            }
            let mean_var_yt = var_acc.value() / config.horizon as f64;

            let terminal: Vec<f64> = pd_paths.iter().map(|p| p[config.horizon - 1]).collect();
            let (mean_y_terminal, var_y_terminal) = mean_variance(&terminal);

            let mut mse = KahanSum::new();
            for r in &runs {
                let run = &r[m_idx];
                mse.add(run.macro_rmse * run.macro_rmse);
            }
            let macro_rmse = (mse.value() / runs.len() as f64).sqrt();

            let mut mean_pd_path = vec![0.0f64; config.horizon];
            for (t, slot) in mean_pd_path.iter_mut().enumerate() {
                let at_t: Vec<f64> = pd_paths.iter().map(|p| p[t]).collect();
                *slot = compensated_sum(&at_t) / at_t.len() as f64;
            }

            let replication_pd =
                keep_replication_pd.then(|| pd_paths.iter().map(|p| p.to_vec()).collect());

            cells.push(CellSummary {
                scenario: spec.name.clone(),
                method,
                mean_var_yt,
                mean_y_terminal,
                std_y_terminal: var_y_terminal.sqrt(),
                macro_rmse,
                mean_pd_path,
                replication_pd,
            });
            if method != Method::Raw {
                filter_traces.push((method, runs[0][m_idx].trace.clone()));
            }
        }
        traces.push(ScenarioTraces {
            scenario: spec.name.clone(),
            paths: runs[0][0].paths.clone(),
            filter_traces,
        });
    }

    let n_scen = config.scenarios.len() as f64;
    let pooled_mean_var = methods
        .iter()
        .map(|&m| {
            let total: f64 = cells
                .iter()
                .filter(|c| c.method == m)
                .map(|c| c.mean_var_yt)
                .sum();
            (m, total / n_scen)
        })
        .collect();

    Ok(MonteCarloSummary {
        cells,
        pooled_mean_var,
        traces,
    })
}

/// Parameters of the instability demonstration.
#[derive(Debug, Clone)]
pub struct InstabilityParams {
    /// Injected error magnitude.
    pub epsilon: f64,
    /// Probability that |delta_t| >= epsilon at each step.
    pub exceedance_prob: f64,
    /// Deviation threshold multiplier; defaults to half the empirical
    /// uniform-sensitivity bound when `None`.
    pub alpha_probe: Option<f64>,
    pub horizon: usize,
    pub n_paths: usize,
    pub block_len: usize,
    pub seed: u64,
}

impl Default for InstabilityParams {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            exceedance_prob: 0.3,
            alpha_probe: None,
            horizon: 60,
            n_paths: 400,
            block_len: 10,
            seed: 7,
        }
    }
}

/// Per-block exceedance frequencies for the raw propagation (deviation from
/// the error-free path) and the anchored method (one-step PD deviation from
/// the neutral-limit PD).
#[derive(Debug, Clone)]
pub struct InstabilityReport {
    pub alpha_probe: f64,
    pub block_len: usize,
    pub raw_block_freq: Vec<f64>,
    pub anchored_block_freq: Vec<f64>,
}

/// Inject i.i.d. macro errors around the neutral state and measure how often
/// the raw lifetime PD deviates from the error-free path by at least
/// `alpha_probe * epsilon`, per time block; for contrast, the same statistic
/// for the anchored filter against the neutral PD limit.
pub fn instability_demo(
    config: &RunConfig,
    params: &InstabilityParams,
) -> Result<InstabilityReport> {
    use rand::{Rng, SeedableRng};
    config.validate()?;
    if params.block_len == 0 || !params.horizon.is_multiple_of(params.block_len) {
        return Err(Error::Validation(
            "horizon must be a positive multiple of block_len".to_string(),
        ));
    }
    let alpha_probe = match params.alpha_probe {
        Some(a) => a,
        None => {
            0.5 * uniform_sensitivity_bound(
                &config.ttc,
                &config.betas,
                -params.epsilon,
                params.epsilon,
                params.epsilon / 10.0,
            )?
        }
    };
    if alpha_probe <= 0.0 {
        return Err(Error::Validation(
            "alpha probe must be positive; the calibration has no uniform sensitivity".to_string(),
        ));
    }
    let threshold = alpha_probe * params.epsilon;
    let n_blocks = params.horizon / params.block_len;
    let m_star = config.anchor.m_star[0];
    let ttc_limit = logit_overlay_capped(&config.ttc, &config.betas, m_star, config.exponent_cap)?;

    let mut raw_hits = vec![0usize; n_blocks];
    let mut anch_hits = vec![0usize; n_blocks];

    for path in 0..params.n_paths {
        let mut rng =
            rand_chacha::ChaCha12Rng::seed_from_u64(derive_seed(params.seed, 2, path as u64));
        let mut pi_perturbed = config.initial_distribution.clone();
        let mut pi_clean = config.initial_distribution.clone();
        let mut pi_anchored = config.initial_distribution.clone();
        let mut state = config.initial_filter_state()?;

        for t in 0..params.horizon {
            let delta = if rng.random::<f64>() < params.exceedance_prob {
                if rng.random::<bool>() {
                    params.epsilon
                } else {
                    -params.epsilon
                }
            } else {
                0.0
            };
            let perturbed_pit = logit_overlay_capped(
                &config.ttc,
                &config.betas,
                m_star + delta,
                config.exponent_cap,
            )?;
            pi_perturbed = propagate_one(&pi_perturbed, &perturbed_pit)?;
            pi_clean = propagate_one(&pi_clean, &ttc_limit)?;
            let block = t / params.block_len;
            if (pi_perturbed.default_mass() - pi_clean.default_mass()).abs() >= threshold {
                raw_hits[block] += 1;
            }

            // anchored filter consuming the same contaminated signal
            let y = DVector::from_element(1, m_star + delta);
            state = crate::filter::anchored_step(&state, &config.model, &y, &config.anchor, t)?;
            let anchored_pit = logit_overlay_capped(
                &config.ttc,
                &config.betas,
                state.mean_scalar(),
                config.exponent_cap,
            )?;
            let phi_est: f64 = (0..pi_anchored.num_states())
                .map(|i| pi_anchored.weight(i) * anchored_pit.entry(i, config.ttc.num_states() - 1))
                .sum();
            let phi_limit: f64 = (0..pi_anchored.num_states())
                .map(|i| pi_anchored.weight(i) * ttc_limit.entry(i, config.ttc.num_states() - 1))
                .sum();
            if (phi_est - phi_limit).abs() >= threshold {
                anch_hits[block] += 1;
            }
            pi_anchored = propagate_one(&pi_anchored, &anchored_pit)?;
        }
    }

    let denom = (params.n_paths * params.block_len) as f64;
    Ok(InstabilityReport {
        alpha_probe,
        block_len: params.block_len,
        raw_block_freq: raw_hits.iter().map(|&h| h as f64 / denom).collect(),
        anchored_block_freq: anch_hits.iter().map(|&h| h as f64 / denom).collect(),
    })
}

/// Parameters of the accumulation bound check.
#[derive(Debug, Clone)]
pub struct BoundCheckParams {
    /// Per-step errors drawn uniformly from [-delta_max, delta_max].
    pub delta_max: f64,
    pub horizon: usize,
    pub seed: u64,
    /// Macro grid half-width for the Lipschitz estimate.
    pub grid_halfwidth: f64,
    pub grid_step: f64,
}

impl Default for BoundCheckParams {
    fn default() -> Self {
        Self {
            delta_max: 0.5,
            horizon: 40,
            seed: 11,
            grid_halfwidth: 3.0,
            grid_step: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub n_paths: usize,
    /// Fraction of paths on which the bound held at every step.
    pub fraction_holding: f64,
    pub lipschitz: f64,
    /// Smallest observed (bound - deviation) across all steps and paths.
    pub min_slack: f64,
}

/// Verify the accumulation bound `||pi_t - pi0_t||_1 <= L_G sum |delta_s|`
/// on randomly sampled error paths around the neutral state.
pub fn bound_check(
    config: &RunConfig,
    n_paths: usize,
    params: &BoundCheckParams,
) -> Result<BoundReport> {
    use rand::{Rng, SeedableRng};
    config.validate()?;
    let lipschitz = estimate_lipschitz(
        &config.ttc,
        &config.betas,
        -params.grid_halfwidth,
        params.grid_halfwidth,
        params.grid_step,
    )?;
    let m_star = config.anchor.m_star[0];
    let clean_pit = logit_overlay_capped(&config.ttc, &config.betas, m_star, config.exponent_cap)?;

    let mut holding = 0usize;
    let mut min_slack = f64::INFINITY;
    for path in 0..n_paths {
        let mut rng =
            rand_chacha::ChaCha12Rng::seed_from_u64(derive_seed(params.seed, 3, path as u64));
        let deltas: Vec<f64> = (0..params.horizon)
            .map(|_| rng.random_range(-params.delta_max..=params.delta_max))
            .collect();
        if check_single_bound_path(
            config,
            &clean_pit,
            lipschitz,
            m_star,
            &deltas,
            &mut min_slack,
        )? {
            holding += 1;
        }
    }
    Ok(BoundReport {
        n_paths,
        fraction_holding: holding as f64 / n_paths as f64,
        lipschitz,
        min_slack,
    })
}

/// Check the bound on one explicit error path; used by [`bound_check`] and
/// directly for adversarial paths.
pub fn check_single_bound_path(
    config: &RunConfig,
    clean_pit: &TransitionMatrix,
    lipschitz: f64,
    m_star: f64,
    deltas: &[f64],
    min_slack: &mut f64,
) -> Result<bool> {
    let bounds = deviation_bound(0.0, lipschitz, deltas);
    let mut pi_perturbed = config.initial_distribution.clone();
    let mut pi_clean = config.initial_distribution.clone();
    let mut ok = true;
    for (t, &delta) in deltas.iter().enumerate() {
        let pit = logit_overlay_capped(
            &config.ttc,
            &config.betas,
            m_star + delta,
            config.exponent_cap,
        )?;
        pi_perturbed = propagate_one(&pi_perturbed, &pit)?;
        pi_clean = propagate_one(&pi_clean, clean_pit)?;
        let dev = crate::numeric::l1_distance(pi_perturbed.weights(), pi_clean.weights());
        let slack = bounds[t] - dev;
        *min_slack = min_slack.min(slack);
        if dev > bounds[t] + 1e-12 {
            ok = false;
        }
    }
    Ok(ok)
}

/// Re-check the variance ordering over a small grid of persistence and
/// forecast-noise settings.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub rho: f64,
    pub forecast_var: f64,
    pub var_raw: f64,
    pub var_naive: f64,
    pub var_anchored: f64,
    pub ordering_holds: bool,
}

pub fn robustness_sweep(
    config: &RunConfig,
    rhos: &[f64],
    forecast_vars: &[f64],
    replications: usize,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &rho in rhos {
        for &r in forecast_vars {
            let mut cfg = config.clone();
            cfg.model = MacroStateModel::scalar(
                rho,
                config.model.q[(0, 0)],
                config.model.h[(0, 0)],
                r,
                config.anchor.m_star[0],
            )?;
            cfg.replications = replications;
            let summary = monte_carlo(&cfg, &Method::ALL, false)?;
            let var_raw = summary.pooled_var(Method::Raw);
            let var_naive = summary.pooled_var(Method::Naive);
            let var_anchored = summary.pooled_var(Method::Anchored);
            rows.push(SweepRow {
                rho,
                forecast_var: r,
                var_raw,
                var_naive,
                var_anchored,
                ordering_holds: var_anchored < var_naive && var_naive < var_raw,
            });
        }
    }
    Ok(rows)
}
