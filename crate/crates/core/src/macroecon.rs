//! Macroeconomic scenarios and the latent macro state.
//!
//! Three stylised quarterly scenarios (baseline, stress, pandemic) are
//! generated as deterministic forecast paths for GDP growth and the
//! unemployment rate, plus realised paths that add sparse deterministic
//! overrides and seeded Gaussian noise. The composite macro index is
//! `M_t = z(g_t)/2 - z(u_t)/2` with configurable standardisation constants.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::spectral_radius;

/// Standardisation constants for the composite index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeIndexParams {
    pub gdp_mean: f64,
    pub gdp_std: f64,
    pub unemp_mean: f64,
    pub unemp_std: f64,
}

impl CompositeIndexParams {
    pub fn new(gdp_mean: f64, gdp_std: f64, unemp_mean: f64, unemp_std: f64) -> Result<Self> {
        if gdp_std <= 0.0 || unemp_std <= 0.0 {
            return Err(Error::Validation(
                "standardisation stds must be > 0".to_string(),
            ));
        }
        Ok(Self {
            gdp_mean,
            gdp_std,
            unemp_mean,
            unemp_std,
        })
    }
}

impl Default for CompositeIndexParams {
    /// Defaults chosen so the baseline scenario centres the index near zero.
    fn default() -> Self {
        Self {
            gdp_mean: 0.5,
            gdp_std: 1.0,
            unemp_mean: 5.5,
            unemp_std: 1.0,
        }
    }
}

/// `M_t = (g_t - gdp_mean)/(2 gdp_std) - (u_t - unemp_mean)/(2 unemp_std)`.
pub fn composite_index(
    gdp: &[f64],
    unemp: &[f64],
    params: &CompositeIndexParams,
) -> Result<Vec<f64>> {
    if gdp.len() != unemp.len() {
        return Err(Error::LengthMismatch(format!(
            "gdp has {} points, unemployment has {}",
            gdp.len(),
            unemp.len()
        )));
    }
    Ok(gdp
        .iter()
        .zip(unemp)
        .map(|(&g, &u)| {
            0.5 * (g - params.gdp_mean) / params.gdp_std
                - 0.5 * (u - params.unemp_mean) / params.unemp_std
        })
        .collect())
}

/// Deterministic per-quarter deviations of the realised path from the
/// forecast path (quarter index is 1-based).
pub type RealizedOverrides = BTreeMap<usize, (f64, f64)>;

/// A quarterly macro scenario: deterministic forecast paths plus the recipe
/// for realised paths (overrides and noise scales).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub gdp_forecast: Vec<f64>,
    pub unemp_forecast: Vec<f64>,
    pub realized_overrides: RealizedOverrides,
    pub noise_sigma_gdp: f64,
    pub noise_sigma_unemp: f64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gdp_forecast.is_empty() || self.gdp_forecast.len() != self.unemp_forecast.len() {
            return Err(Error::Validation(format!(
                "scenario '{}': forecast sequences must be nonempty and equal length",
                self.name
            )));
        }
        if self.noise_sigma_gdp < 0.0 || self.noise_sigma_unemp < 0.0 {
            return Err(Error::Validation(format!(
                "scenario '{}': noise sigmas must be >= 0",
                self.name
            )));
        }
        for &t in self.realized_overrides.keys() {
            if t == 0 || t > self.gdp_forecast.len() {
                return Err(Error::Validation(format!(
                    "scenario '{}': override quarter {t} outside 1..={}",
                    self.name,
                    self.gdp_forecast.len()
                )));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.gdp_forecast.len()
    }

    /// Mild cycle: GDP oscillates around 0.5% per quarter with amplitude
    /// 0.2% (8-quarter sinusoid); unemployment flat at 5.5%.
    pub fn baseline(horizon: usize) -> Self {
        let gdp = (0..horizon)
            .map(|t| 0.5 + 0.2 * (2.0 * std::f64::consts::PI * t as f64 / 8.0).sin())
            .collect();
        Self {
            name: "baseline".to_string(),
            gdp_forecast: gdp,
            unemp_forecast: vec![5.5; horizon],
            realized_overrides: RealizedOverrides::new(),
            noise_sigma_gdp: 0.2,
            noise_sigma_unemp: 0.2,
        }
    }

    /// Downturn with slow recovery: GDP falls to -2.0% at quarter 1 and
    /// recovers linearly (still below trend at the window end); unemployment
    /// rises to a 7.5% peak at quarter 4 and recedes to a persistent plateau.
    /// Realised path: deeper trough (-0.5% GDP at quarter 1) and a slightly
    /// higher unemployment peak (+0.5pp at quarter 4).
    pub fn stress(horizon: usize) -> Self {
        let span = (horizon.max(2) - 1) as f64;
        let gdp = (0..horizon).map(|t| -2.0 + 1.6 * t as f64 / span).collect();
        let unemp = (0..horizon)
            .map(|t| {
                if t < 3 {
                    6.0 + 0.5 * t as f64
                } else {
                    7.5 - 0.3 * (t as f64 - 3.0) / (span - 3.0).max(1.0)
                }
            })
            .collect();
        let mut overrides = RealizedOverrides::new();
        overrides.insert(1, (-0.5, 0.0));
        overrides.insert(4, (0.0, 0.5));
        Self {
            name: "stress".to_string(),
            gdp_forecast: gdp,
            unemp_forecast: unemp,
            realized_overrides: overrides,
            noise_sigma_gdp: 0.2,
            noise_sigma_unemp: 0.2,
        }
    }

    /// Abrupt contraction with rapid rebound: GDP -8% at quarter 2, +6% at
    /// quarter 3, then normalisation; unemployment spikes to 9.5% and falls
    /// quickly. Realised path: faster rebound (+2% GDP at quarter 3).
    pub fn pandemic(horizon: usize) -> Self {
        let mut gdp = vec![0.5; horizon];
        let mut unemp = vec![5.5; horizon];
        let setq = |v: &mut Vec<f64>, q: usize, x: f64| {
            if q - 1 < v.len() {
                v[q - 1] = x;
            }
        };
        setq(&mut gdp, 2, -8.0);
        setq(&mut gdp, 3, 6.0);
        setq(&mut gdp, 4, 1.5);
        setq(&mut gdp, 5, 1.0);
        setq(&mut unemp, 2, 9.5);
        setq(&mut unemp, 3, 8.0);
        setq(&mut unemp, 4, 6.5);
        setq(&mut unemp, 5, 5.8);
        let mut overrides = RealizedOverrides::new();
        overrides.insert(3, (2.0, 0.0));
        Self {
            name: "pandemic".to_string(),
            gdp_forecast: gdp,
            unemp_forecast: unemp,
            realized_overrides: overrides,
            noise_sigma_gdp: 0.2,
            noise_sigma_unemp: 0.2,
        }
    }

    /// Built-in scenario by kind name.
    pub fn builtin(kind: &str, horizon: usize) -> Result<Self> {
        match kind {
            "baseline" => Ok(Self::baseline(horizon)),
            "stress" => Ok(Self::stress(horizon)),
            "pandemic" => Ok(Self::pandemic(horizon)),
            other => Err(Error::Config(format!("unknown scenario kind '{other}'"))),
        }
    }
}

/// Generated scenario data for one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPaths {
    pub gdp_forecast: Vec<f64>,
    pub unemp_forecast: Vec<f64>,
    pub gdp_realized: Vec<f64>,
    pub unemp_realized: Vec<f64>,
    /// Composite index of the forecast paths.
    pub forecast_index: Vec<f64>,
    /// Composite index of the realised paths (forecast + overrides + noise).
    pub realized_index: Vec<f64>,
}

/// Generate forecast and realised index paths for one replication.
///
/// The forecast paths are deterministic; the realised paths add the scenario
/// overrides and Gaussian noise drawn from a ChaCha12 stream keyed by `seed`
/// (gdp noise first, then unemployment noise, one draw per quarter).
pub fn generate_scenario(
    spec: &ScenarioSpec,
    params: &CompositeIndexParams,
    seed: u64,
) -> Result<ScenarioPaths> {
    spec.validate()?;
    let horizon = spec.horizon();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let gdp_noise: Vec<f64> = (0..horizon)
        .map(|_| spec.noise_sigma_gdp * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let unemp_noise: Vec<f64> = (0..horizon)
        .map(|_| spec.noise_sigma_unemp * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut gdp_realized = spec.gdp_forecast.clone();
    let mut unemp_realized = spec.unemp_forecast.clone();
    for t in 0..horizon {
        if let Some(&(dg, du)) = spec.realized_overrides.get(&(t + 1)) {
            gdp_realized[t] += dg;
            unemp_realized[t] += du;
        }
        gdp_realized[t] += gdp_noise[t];
        unemp_realized[t] += unemp_noise[t];
    }

    let forecast_index = composite_index(&spec.gdp_forecast, &spec.unemp_forecast, params)?;
    let realized_index = composite_index(&gdp_realized, &unemp_realized, params)?;
    Ok(ScenarioPaths {
        gdp_forecast: spec.gdp_forecast.clone(),
        unemp_forecast: spec.unemp_forecast.clone(),
        gdp_realized,
        unemp_realized,
        forecast_index,
        realized_index,
    })
}

/// Composite index of the noise-free realised paths (forecast + overrides).
/// This is the deterministic centre the realised index fluctuates around.
pub fn central_realized_index(
    spec: &ScenarioSpec,
    params: &CompositeIndexParams,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut gdp = spec.gdp_forecast.clone();
    let mut unemp = spec.unemp_forecast.clone();
    for (&t, &(dg, du)) in &spec.realized_overrides {
        gdp[t - 1] += dg;
        unemp[t - 1] += du;
    }
    composite_index(&gdp, &unemp, params)
}

/// Linear-Gaussian state-space model for the latent macro state:
/// `M_{t+1} = A M_t + w_t`, `y_t = H M_t + v_t` with `w ~ N(0,Q)`,
/// `v ~ N(0,R)`, plus the neutral anchor level `M*`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroStateModel {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub m_star: DVector<f64>,
    warnings: Vec<String>,
}

impl MacroStateModel {
    /// Validate covariances and run numerical stabilisability/detectability
    /// checks. The rank checks warn rather than fail for near-degenerate
    /// systems; inspect [`MacroStateModel::warnings`].
    pub fn new(
        a: DMatrix<f64>,
        q: DMatrix<f64>,
        h: DMatrix<f64>,
        r: DMatrix<f64>,
        m_star: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Validation(
                "A must be square and nonempty".to_string(),
            ));
        }
        for (name, m) in [("Q", &q), ("R", &r)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!("{name} must be {n}x{n}")));
            }
            if (m - m.transpose()).amax() > 1e-12 {
                return Err(Error::Validation(format!("{name} must be symmetric")));
            }
        }
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::DimensionMismatch(format!("H must be {n}x{n}")));
        }
        if m_star.len() != n {
            return Err(Error::DimensionMismatch(format!("M* must have length {n}")));
        }
        if a.iter()
            .chain(q.iter())
            .chain(h.iter())
            .chain(r.iter())
            .any(|v| !v.is_finite())
            || m_star.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Validation(
                "model entries must be finite".to_string(),
            ));
        }
        let q_eigs = q.clone().symmetric_eigen().eigenvalues;
        if q_eigs.iter().any(|&e| e < -1e-10) {
            return Err(Error::Validation(
                "Q must be positive semidefinite".to_string(),
            ));
        }
        let r_eigs = r.clone().symmetric_eigen().eigenvalues;
        if r_eigs.iter().any(|&e| e <= 0.0) {
            return Err(Error::Validation("R must be positive definite".to_string()));
        }

        let mut warnings = Vec::new();
        let rho = spectral_radius(&a);
        let stabilizable = rho < 1.0 - 1e-10 || rank_of_staircase(&a, &q) == n;
        if !stabilizable {
            warnings.push(format!(
                "(A, Q^1/2) may not be stabilisable (spectral radius {rho:.6})"
            ));
        }
        if rank_of_staircase(&a.transpose(), &(h.transpose() * &h)) != n {
            warnings.push("(A, H) may not be detectable".to_string());
        }
        Ok(Self {
            a,
            q,
            h,
            r,
            m_star,
            warnings,
        })
    }

    /// Convenience constructor for the scalar AR(1) case.
    pub fn scalar(rho: f64, q: f64, h: f64, r: f64, m_star: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, rho),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, h),
            DMatrix::from_element(1, 1, r),
            DVector::from_element(1, m_star),
        )
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Stationary state covariance: the fixed point of `S -> A S A' + Q`,
    /// iterated to convergence (requires spectral radius of A below 1).
    pub fn stationary_covariance(&self) -> Result<DMatrix<f64>> {
        if spectral_radius(&self.a) >= 1.0 {
            return Err(Error::Validation(
                "stationary covariance needs spectral radius of A below 1".to_string(),
            ));
        }
        let n = self.dim();
        let mut s = self.q.clone();
        for _ in 0..10_000 {
            let next = &self.a * &s * self.a.transpose() + &self.q;
            let delta = (&next - &s).amax();
            s = next;
            if delta < 1e-14 {
                break;
            }
        }
        Ok(DMatrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)])))
    }
}

/// Numerical rank of the reachability staircase [B, AB, ..., A^{n-1}B]
/// where B B' = G (G symmetric PSD), with tolerance 1e-10.
fn rank_of_staircase(a: &DMatrix<f64>, g: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let eig = g.clone().symmetric_eigen();
    let mut b = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        let col = eig.eigenvectors.column(k) * lam;
        b.set_column(k, &col);
    }
    let mut blocks = Vec::with_capacity(n);
    let mut cur = b;
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = a * cur;
    }
    let mut stair = DMatrix::zeros(n, n * n);
    for (idx, blk) in blocks.iter().enumerate() {
        stair.view_mut((0, idx * n), (n, n)).copy_from(blk);
    }
    stair.rank(1e-10)
}

/// Simulate the latent state `M_{t+1} = A M_t + w_t` for `t = 0..T` from a
/// ChaCha12 stream keyed by `seed`. Returns T+1 points including the initial
/// state.
pub fn simulate_truth(
    model: &MacroStateModel,
    seed: u64,
    horizon: usize,
    init: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    if init.len() != model.dim() {
        return Err(Error::DimensionMismatch(
            "initial state has wrong dimension".to_string(),
        ));
    }
    if horizon == 0 {
        return Err(Error::Validation("horizon must be >= 1".to_string()));
    }
    let n = model.dim();
    // Q^{1/2} via symmetric eigendecomposition (Q is PSD).
    let eig = model.q.clone().symmetric_eigen();
    let mut q_sqrt = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        let col = eig.eigenvectors.column(k) * lam;
        q_sqrt.set_column(k, &col);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(horizon + 1);
    let mut state = init.clone();
    path.push(state.clone());
    for _ in 0..horizon {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        state = &model.a * &state + &q_sqrt * z;
        path.push(state.clone());
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_index_is_zero_when_centred() {
        let p = CompositeIndexParams::default();
        let m = composite_index(&[0.5, 0.5], &[5.5, 5.5], &p).unwrap();
        assert_eq!(m, vec![0.0, 0.0]);
    }

    #[test]
    fn composite_index_definition_point() {
        // z(g) = +1, z(u) = -1  =>  M = 1
        let p = CompositeIndexParams::default();
        let m = composite_index(&[1.5], &[4.5], &p).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn composite_index_rejects_length_mismatch() {
        let p = CompositeIndexParams::default();
        assert!(matches!(
            composite_index(&[1.0], &[1.0, 2.0], &p),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn zero_noise_realized_equals_forecast() {
        let mut spec = ScenarioSpec::baseline(20);
        spec.noise_sigma_gdp = 0.0;
        spec.noise_sigma_unemp = 0.0;
        let paths = generate_scenario(&spec, &CompositeIndexParams::default(), 7).unwrap();
        assert_eq!(paths.realized_index, paths.forecast_index);
    }

    #[test]
    fn stress_forecast_hits_anchor_values() {
        let spec = ScenarioSpec::stress(20);
        assert_eq!(spec.gdp_forecast[0], -2.0);
        assert_eq!(spec.unemp_forecast[3], 7.5);
        // recovery is linear and unemployment recedes after the peak
        let d1 = spec.gdp_forecast[5] - spec.gdp_forecast[4];
        let d2 = spec.gdp_forecast[15] - spec.gdp_forecast[14];
        assert!((d1 - d2).abs() < 1e-12);
        assert!(spec.unemp_forecast[19] < spec.unemp_forecast[3]);
    }

    #[test]
    fn pandemic_forecast_hits_anchor_values() {
        let spec = ScenarioSpec::pandemic(20);
        assert_eq!(spec.gdp_forecast[1], -8.0);
        assert_eq!(spec.gdp_forecast[2], 6.0);
        assert_eq!(spec.unemp_forecast[1], 9.5);
        assert_eq!(spec.realized_overrides.get(&3), Some(&(2.0, 0.0)));
    }

    #[test]
    fn baseline_oscillates_around_half_percent() {
        let spec = ScenarioSpec::baseline(20);
        let mean: f64 = spec.gdp_forecast.iter().sum::<f64>() / 20.0;
        assert!((mean - 0.5).abs() < 0.06);
        assert!(spec
            .gdp_forecast
            .iter()
            .all(|g| (g - 0.5).abs() <= 0.2 + 1e-12));
    }

    #[test]
    fn scenario_generation_is_seed_deterministic() {
        let spec = ScenarioSpec::stress(20);
        let p = CompositeIndexParams::default();
        let a = generate_scenario(&spec, &p, 123).unwrap();
        let b = generate_scenario(&spec, &p, 123).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(&spec, &p, 124).unwrap();
        assert_ne!(a.realized_index, c.realized_index);
    }

    #[test]
    fn truth_simulation_without_noise_is_geometric() {
        let model = MacroStateModel::scalar(0.9, 0.0, 1.0, 0.25, 0.0).unwrap();
        let init = DVector::from_element(1, 2.0);
        let path = simulate_truth(&model, 5, 10, &init).unwrap();
        for (t, m) in path.iter().enumerate() {
            assert!((m[0] - 2.0 * 0.9f64.powi(t as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn truth_simulation_is_seed_repeatable() {
        let model = MacroStateModel::scalar(0.9, 0.19, 1.0, 0.25, 0.0).unwrap();
        let init = DVector::zeros(1);
        let a = simulate_truth(&model, 99, 50, &init).unwrap();
        let b = simulate_truth(&model, 99, 50, &init).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn long_run_variance_matches_stationary_closed_form() {
        // Q / (1 - rho^2) = 0.19 / 0.19 = 1.0
        let model = MacroStateModel::scalar(0.9, 0.19, 1.0, 0.25, 0.0).unwrap();
        let init = DVector::zeros(1);
        let path = simulate_truth(&model, 2024, 101_000, &init).unwrap();
        let values: Vec<f64> = path.iter().skip(1000).map(|m| m[0]).collect();
        let (_, var) = crate::numeric::mean_variance(&values);
        assert!(
            (var - 1.0).abs() < 0.02,
            "sample variance {var} vs stationary 1.0"
        );
        let stat = model.stationary_covariance().unwrap();
        assert!((stat[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_warns_on_undetectable_pair() {
        let model = MacroStateModel::scalar(1.0, 0.0, 0.0, 0.25, 0.0);
        // rho = 1 with Q = 0 and H = 0: not stabilisable, not detectable
        let model = model.unwrap();
        assert!(!model.warnings().is_empty());
    }
}
