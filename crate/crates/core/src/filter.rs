//! Linear-Gaussian Kalman filtering of the macro state in three
//! configurations: naive (the forecast is the observation), anchored stacked
//! observation (forecast plus a neutral-level pseudo-observation), and the
//! anchored deviation form. Also the discrete Riccati fixed point and
//! stability diagnostics.
//!
//! All covariance updates use the Joseph form
//! `(I - KH) S (I - KH)' + K R K'` so posteriors stay symmetric PSD under
//! roundoff, and gains are computed by solving `S X = H S_pred` rather than
//! forming an explicit inverse.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::macroecon::MacroStateModel;
use crate::numeric::spectral_radius;

/// Posterior mean and covariance of the macro state at a time index.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    time_index: usize,
}

impl FilterState {
    /// Validate, symmetrise and PSD-clamp a state. Eigenvalues below -1e-10
    /// are rejected; tiny negatives from roundoff are clamped to zero.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, time_index: usize) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::DimensionMismatch(
                "covariance must be n x n".to_string(),
            ));
        }
        if mean.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("state must be finite".to_string()));
        }
        if (&covariance - covariance.transpose()).amax() > 1e-12 {
            return Err(Error::Validation(
                "covariance must be symmetric within 1e-12".to_string(),
            ));
        }
        let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (covariance[(i, j)] + covariance[(j, i)]));
        let eig = sym.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
            return Err(Error::Validation(format!(
                "covariance has eigenvalue {} below -1e-10",
                eig.eigenvalues.min()
            )));
        }
        let covariance = if eig.eigenvalues.iter().any(|&l| l < 0.0) {
            let mut clamped = DMatrix::zeros(n, n);
            for k in 0..n {
                let lam = eig.eigenvalues[k].max(0.0);
                let v = eig.eigenvectors.column(k).clone_owned();
                clamped += &v * v.transpose() * lam;
            }
            DMatrix::from_fn(n, n, |i, j| 0.5 * (clamped[(i, j)] + clamped[(j, i)]))
        } else {
            sym
        };
        Ok(Self {
            mean,
            covariance,
            time_index,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    /// Scalar accessors for the common r = 1 case.
    pub fn mean_scalar(&self) -> f64 {
        self.mean[0]
    }

    pub fn covariance_scalar(&self) -> f64 {
        self.covariance[(0, 0)]
    }
}

/// Anchor schedule: the neutral level `M*` is observed with variance
/// `sigma_star_sq_in` while `t < forecast_horizon` (0-based quarters, i.e.
/// for exactly the forecast-window quarters) and `sigma_star_sq_out`
/// afterwards. A variance of zero means the anchor is exact (hard).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorConfig {
    pub m_star: DVector<f64>,
    pub sigma_star_sq_in: f64,
    pub sigma_star_sq_out: f64,
    pub forecast_horizon: usize,
}

impl AnchorConfig {
    pub fn new(
        m_star: DVector<f64>,
        sigma_star_sq_in: f64,
        sigma_star_sq_out: f64,
        forecast_horizon: usize,
    ) -> Result<Self> {
        if sigma_star_sq_in < 0.0 || sigma_star_sq_out < 0.0 {
            return Err(Error::Validation(
                "anchor variances must be >= 0".to_string(),
            ));
        }
        if forecast_horizon == 0 {
            return Err(Error::Validation(
                "forecast horizon must be >= 1".to_string(),
            ));
        }
        Ok(Self {
            m_star,
            sigma_star_sq_in,
            sigma_star_sq_out,
            forecast_horizon,
        })
    }

    /// Anchor variance in force when updating with the observation at
    /// 0-based time `t` (the prediction step has already advanced the state
    /// to `t + 1`; the schedule is indexed by the observation quarter).
    pub fn sigma_sq_at(&self, t: usize) -> f64 {
        if t < self.forecast_horizon {
            self.sigma_star_sq_in
        } else {
            self.sigma_star_sq_out
        }
    }
}

/// Effective observation map and covariance used by an update.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl ObservationModel {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if r.nrows() != h.nrows() || r.ncols() != h.nrows() {
            return Err(Error::DimensionMismatch(
                "R must be p x p for H p x r".to_string(),
            ));
        }
        if (&r - r.transpose()).amax() > 1e-12 {
            return Err(Error::Validation("R must be symmetric".to_string()));
        }
        Ok(Self { h, r })
    }

    /// Forecast-only observation: `H_eff = H`, `R_eff = R`.
    pub fn naive(model: &MacroStateModel) -> Self {
        Self {
            h: model.h.clone(),
            r: model.r.clone(),
        }
    }

    /// Stacked anchored observation: `H_aug = [H; I]`,
    /// `R_aug = diag(R, sigma* I)`.
    pub fn anchored(model: &MacroStateModel, sigma_star_sq: f64) -> Self {
        let n = model.dim();
        let mut h = DMatrix::zeros(2 * n, n);
        h.view_mut((0, 0), (n, n)).copy_from(&model.h);
        h.view_mut((n, 0), (n, n))
            .copy_from(&DMatrix::identity(n, n));
        let mut r = DMatrix::zeros(2 * n, 2 * n);
        r.view_mut((0, 0), (n, n)).copy_from(&model.r);
        r.view_mut((n, n), (n, n))
            .copy_from(&(DMatrix::identity(n, n) * sigma_star_sq));
        Self { h, r }
    }

    /// Stack the forecast value with the anchor level into the augmented
    /// observation vector.
    pub fn stack_observation(forecast: &DVector<f64>, m_star: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(forecast.len() + m_star.len());
        y.rows_mut(0, forecast.len()).copy_from(forecast);
        y.rows_mut(forecast.len(), m_star.len()).copy_from(m_star);
        y
    }
}

/// Prediction: `mean' = A mean`, `cov' = A cov A' + Q`, time advanced.
pub fn predict(state: &FilterState, model: &MacroStateModel) -> Result<FilterState> {
    if state.mean.len() != model.dim() {
        return Err(Error::DimensionMismatch(
            "state and model dimensions differ".to_string(),
        ));
    }
    let mean = &model.a * &state.mean;
    let cov = &model.a * &state.covariance * model.a.transpose() + &model.q;
    FilterState::new(mean, cov, state.time_index + 1)
}

/// Measurement update in Joseph form. Returns the posterior state, the
/// innovation `y - H mean`, and the gain.
pub fn update(
    state: &FilterState,
    y: &DVector<f64>,
    obs: &ObservationModel,
) -> Result<(FilterState, DVector<f64>, DMatrix<f64>)> {
    let n = state.mean.len();
    let p = obs.h.nrows();
    if obs.h.ncols() != n || y.len() != p {
        return Err(Error::DimensionMismatch(
            "observation dimensions do not match the state".to_string(),
        ));
    }
    let innovation = y - &obs.h * &state.mean;
    let s = &obs.h * &state.covariance * obs.h.transpose() + &obs.r;
    let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    // K = cov H' S^{-1}, via S X = (cov H')' solved column-wise
    let cov_ht = &state.covariance * obs.h.transpose();
    let gain = chol.solve(&cov_ht.transpose()).transpose();

    let mean = &state.mean + &gain * &innovation;
    let i_kh = DMatrix::identity(n, n) - &gain * &obs.h;
    let cov = &i_kh * &state.covariance * i_kh.transpose() + &gain * &obs.r * gain.transpose();
    let posterior = FilterState::new(mean, cov, state.time_index)?;
    Ok((posterior, innovation, gain))
}

/// Diagnostics from one filter step, for trace output.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    /// First component of the innovation (the forecast channel).
    pub innovation: f64,
    /// Gain on the forecast channel (first column, first row).
    pub gain: f64,
}

/// Naive step: predict, then update with the raw forecast as observation.
pub fn naive_step(
    state: &FilterState,
    model: &MacroStateModel,
    forecast_value: &DVector<f64>,
) -> Result<FilterState> {
    Ok(naive_step_traced(state, model, forecast_value)?.0)
}

/// Naive step returning per-step diagnostics.
pub fn naive_step_traced(
    state: &FilterState,
    model: &MacroStateModel,
    forecast_value: &DVector<f64>,
) -> Result<(FilterState, StepDiagnostics)> {
    let predicted = predict(state, model)?;
    let (posterior, innovation, gain) =
        update(&predicted, forecast_value, &ObservationModel::naive(model))?;
    Ok((
        posterior,
        StepDiagnostics {
            innovation: innovation[0],
            gain: gain[(0, 0)],
        },
    ))
}

/// Anchored step: predict, then update with the stacked observation
/// `(forecast, M*)` under the anchor schedule at the observation quarter `t`
/// (0-based). With a zero anchor variance the exact-observation limit
/// applies: the mean is set to `M*` and the covariance to zero.
pub fn anchored_step(
    state: &FilterState,
    model: &MacroStateModel,
    forecast_value: &DVector<f64>,
    anchor: &AnchorConfig,
    t: usize,
) -> Result<FilterState> {
    Ok(anchored_step_traced(state, model, forecast_value, anchor, t)?.0)
}

/// Anchored step returning per-step diagnostics.
pub fn anchored_step_traced(
    state: &FilterState,
    model: &MacroStateModel,
    forecast_value: &DVector<f64>,
    anchor: &AnchorConfig,
    t: usize,
) -> Result<(FilterState, StepDiagnostics)> {
    if anchor.m_star.len() != model.dim() {
        return Err(Error::DimensionMismatch(
            "anchor level has wrong dimension".to_string(),
        ));
    }
    let predicted = predict(state, model)?;
    let sigma_sq = anchor.sigma_sq_at(t);
    if sigma_sq == 0.0 {
        // Hard anchor: the identity block is observed exactly, which pins
        // every coordinate of the state. The forecast row carries no extra
        // information about a fully determined state.
        let n = model.dim();
        let innovation = forecast_value - &model.h * &predicted.mean;
        let posterior = FilterState::new(
            anchor.m_star.clone(),
            DMatrix::zeros(n, n),
            predicted.time_index,
        )?;
        return Ok((
            posterior,
            StepDiagnostics {
                innovation: innovation[0],
                gain: 0.0,
            },
        ));
    }
    let obs = ObservationModel::anchored(model, sigma_sq);
    let y = ObservationModel::stack_observation(forecast_value, &anchor.m_star);
    let (posterior, innovation, gain) = update(&predicted, &y, &obs)?;
    Ok((
        posterior,
        StepDiagnostics {
            innovation: innovation[0],
            gain: gain[(0, 0)],
        },
    ))
}

/// Deviation-form step: the same recursion applied to `xi = M - M*` with the
/// deviation observation `y = H xi + v`; the returned state is re-expressed
/// in `M` coordinates.
pub fn deviation_step(
    state: &FilterState,
    model: &MacroStateModel,
    y_deviation: &DVector<f64>,
    anchor: &AnchorConfig,
) -> Result<FilterState> {
    if anchor.m_star.len() != model.dim() {
        return Err(Error::DimensionMismatch(
            "anchor level has wrong dimension".to_string(),
        ));
    }
    let xi_state = FilterState::new(
        &state.mean - &anchor.m_star,
        state.covariance.clone(),
        state.time_index,
    )?;
    let predicted = predict(&xi_state, model)?;
    let (posterior, _, _) = update(&predicted, y_deviation, &ObservationModel::naive(model))?;
    FilterState::new(
        posterior.mean() + &anchor.m_star,
        posterior.covariance().clone(),
        posterior.time_index(),
    )
}

/// Steady-state solution of the predictor Riccati map
/// `S -> A (S - S H' (H S H' + R)^{-1} H S) A' + Q`, iterated to a fixed
/// point. Returns the filtered steady-state covariance, the steady-state
/// gain, and the spectral radius of the closed-loop map `(I - K H) A`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    /// Filtered steady-state covariance.
    pub sigma_inf: DMatrix<f64>,
    /// Predictor steady-state covariance.
    pub sigma_pred_inf: DMatrix<f64>,
    /// Steady-state gain.
    pub gain_inf: DMatrix<f64>,
    /// Spectral radius of `(I - K H) A`.
    pub closed_loop_spectral_radius: f64,
    pub iterations: usize,
}

pub fn riccati_steady_state(
    model: &MacroStateModel,
    obs: &ObservationModel,
    tol: f64,
    max_iter: usize,
) -> Result<RiccatiSolution> {
    let n = model.dim();
    if obs.h.ncols() != n {
        return Err(Error::DimensionMismatch(
            "observation map does not match the state dimension".to_string(),
        ));
    }
    let mut sigma_pred = &model.q + DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let s = &obs.h * &sigma_pred * obs.h.transpose() + &obs.r;
        let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
        let cov_ht = &sigma_pred * obs.h.transpose();
        let gain = chol.solve(&cov_ht.transpose()).transpose();
        let i_kh = DMatrix::identity(n, n) - &gain * &obs.h;
        let filtered = &i_kh * &sigma_pred * i_kh.transpose() + &gain * &obs.r * gain.transpose();
        let next = &model.a * &filtered * model.a.transpose() + &model.q;
        let delta = (&next - &sigma_pred).amax();
        sigma_pred = next;
        if delta < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence(max_iter));
        }
    }
    let s = &obs.h * &sigma_pred * obs.h.transpose() + &obs.r;
    let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    let cov_ht = &sigma_pred * obs.h.transpose();
    let gain = chol.solve(&cov_ht.transpose()).transpose();
    let i_kh = DMatrix::identity(n, n) - &gain * &obs.h;
    let sigma_inf = &i_kh * &sigma_pred * i_kh.transpose() + &gain * &obs.r * gain.transpose();
    let radius = spectral_radius(&(&i_kh * &model.a));
    Ok(RiccatiSolution {
        sigma_inf,
        sigma_pred_inf: sigma_pred,
        gain_inf: gain,
        closed_loop_spectral_radius: radius,
        iterations,
    })
}

/// Per-step error diagnostics between an estimate sequence and the truth.
#[derive(Debug, Clone)]
pub struct ErrorTrace {
    pub errors: Vec<DVector<f64>>,
    pub squared_norms: Vec<f64>,
    /// Max of `||e_{t+1}|| / ||e_t||` over `t >= t_f + 2` where
    /// `||e_t|| > 1e-14`; 0 when no such ratio exists.
    pub post_window_decay_ratio: f64,
}

pub fn error_trace(
    truth: &[DVector<f64>],
    estimates: &[DVector<f64>],
    t_f: usize,
) -> Result<ErrorTrace> {
    if truth.len() != estimates.len() {
        return Err(Error::LengthMismatch(format!(
            "truth has {} points, estimates {}",
            truth.len(),
            estimates.len()
        )));
    }
    let errors: Vec<DVector<f64>> = truth.iter().zip(estimates).map(|(m, mu)| mu - m).collect();
    let squared_norms: Vec<f64> = errors.iter().map(|e| e.norm_squared()).collect();
    let mut ratio = 0.0f64;
    for t in (t_f + 2)..errors.len().saturating_sub(1) {
        let cur = errors[t].norm();
        if cur > 1e-14 {
            ratio = ratio.max(errors[t + 1].norm() / cur);
        }
    }
    Ok(ErrorTrace {
        errors,
        squared_norms,
        post_window_decay_ratio: ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::derive_seed;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn reference_model() -> MacroStateModel {
        MacroStateModel::scalar(0.9, 0.19, 1.0, 0.25, 0.0).unwrap()
    }

    fn scalar_state(mean: f64, var: f64, t: usize) -> FilterState {
        FilterState::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, var),
            t,
        )
        .unwrap()
    }

    #[test]
    fn predict_identity_only_advances_time() {
        let model = MacroStateModel::scalar(1.0, 0.0, 1.0, 0.25, 0.0).unwrap();
        let state = scalar_state(1.5, 0.3, 4);
        let out = predict(&state, &model).unwrap();
        assert_eq!(out.mean_scalar(), 1.5);
        assert_eq!(out.covariance_scalar(), 0.3);
        assert_eq!(out.time_index(), 5);
    }

    #[test]
    fn predict_scalar_arithmetic() {
        let out = predict(&scalar_state(0.0, 1.0, 0), &reference_model()).unwrap();
        assert!((out.covariance_scalar() - 1.0).abs() < 1e-15); // 0.81 + 0.19
    }

    #[test]
    fn predict_matches_dense_oracle_r3() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(3, 3, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
        let g = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = &g * g.transpose() * 0.1;
        let model = MacroStateModel::new(
            a.clone(),
            q.clone(),
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3) * 0.2,
            DVector::zeros(3),
        )
        .unwrap();
        let p0 = {
            let g = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            &g * g.transpose() * 0.5
        };
        let mean = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let state = FilterState::new(mean.clone(), p0.clone(), 0).unwrap();
        let out = predict(&state, &model).unwrap();
        let expect_mean = &a * &mean;
        let expect_cov = &a * &p0 * a.transpose() + &q;
        assert!((out.mean() - expect_mean).amax() < 1e-12);
        assert!((out.covariance() - expect_cov).amax() < 1e-12);
    }

    #[test]
    fn uninformative_observation_changes_nothing() {
        let model = MacroStateModel::scalar(0.9, 0.19, 1.0, 1e12, 0.0).unwrap();
        let state = scalar_state(0.7, 0.5, 0);
        let (post, _, _) = update(
            &state,
            &DVector::from_element(1, 100.0),
            &ObservationModel::naive(&model),
        )
        .unwrap();
        assert!((post.mean_scalar() - 0.7).abs() / 0.7 < 1e-6);
        assert!((post.covariance_scalar() - 0.5).abs() / 0.5 < 1e-6);
    }

    #[test]
    fn scalar_gain_half_when_variances_match() {
        let model = MacroStateModel::scalar(0.9, 0.19, 1.0, 1.0, 0.0).unwrap();
        let state = scalar_state(0.0, 1.0, 0);
        let (post, _, gain) = update(
            &state,
            &DVector::from_element(1, 1.0),
            &ObservationModel::naive(&model),
        )
        .unwrap();
        assert!((gain[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((post.covariance_scalar() - 0.5).abs() < 1e-15);
        assert!((post.mean_scalar() - 0.5).abs() < 1e-15);
    }

    /// One stacked update equals two sequential scalar updates (forecast then
    /// anchor), the standard block-diagonal factorisation.
    #[test]
    fn stacked_update_equals_sequential_updates() {
        let model = reference_model();
        let state = scalar_state(0.4, 0.300545796952, 0);
        let y_f = 1.3;
        let stacked_obs = ObservationModel::anchored(&model, 0.25);
        let y = ObservationModel::stack_observation(
            &DVector::from_element(1, y_f),
            &DVector::from_element(1, 0.0),
        );
        let (stacked, _, _) = update(&state, &y, &stacked_obs).unwrap();

        let forecast_obs = ObservationModel::naive(&model);
        let anchor_obs =
            ObservationModel::new(DMatrix::identity(1, 1), DMatrix::from_element(1, 1, 0.25))
                .unwrap();
        let (step1, _, _) = update(&state, &DVector::from_element(1, y_f), &forecast_obs).unwrap();
        let (seq, _, _) = update(&step1, &DVector::zeros(1), &anchor_obs).unwrap();

        assert!((stacked.mean_scalar() - seq.mean_scalar()).abs() < 1e-12);
        assert!((stacked.covariance_scalar() - seq.covariance_scalar()).abs() < 1e-12);

        // and in the other order
        let (step1b, _, _) = update(&state, &DVector::zeros(1), &anchor_obs).unwrap();
        let (seq_b, _, _) = update(&step1b, &DVector::from_element(1, y_f), &forecast_obs).unwrap();
        assert!((stacked.mean_scalar() - seq_b.mean_scalar()).abs() < 1e-10);
        assert!((stacked.covariance_scalar() - seq_b.covariance_scalar()).abs() < 1e-10);
    }

    #[test]
    fn naive_zero_innovation_keeps_mean() {
        let model = reference_model();
        let state = scalar_state(0.8, 0.4, 0);
        let predicted_mean = 0.9 * 0.8;
        let out = naive_step(&state, &model, &DVector::from_element(1, predicted_mean)).unwrap();
        assert!((out.mean_scalar() - predicted_mean).abs() < 1e-15);
    }

    #[test]
    fn naive_covariance_converges_to_riccati_fixed_point() {
        let model = reference_model();
        let obs = ObservationModel::naive(&model);
        let sol = riccati_steady_state(&model, &obs, 1e-14, 100_000).unwrap();
        let mut state = scalar_state(0.0, 1.0, 0);
        for _ in 0..200 {
            state = naive_step(&state, &model, &DVector::zeros(1)).unwrap();
        }
        assert!((state.covariance_scalar() - sol.sigma_inf[(0, 0)]).abs() < 1e-10);
    }

    #[test]
    fn naive_error_covariance_follows_riccati_recursion() {
        // filter-state covariance replays Sigma_{t} = (I - K_t H) Sigma_{t|t-1}
        let model = reference_model();
        let mut state = scalar_state(0.0, 1.0, 0);
        let mut sigma = 1.0f64;
        for step in 0..50 {
            state = naive_step(&state, &model, &DVector::from_element(1, 0.3)).unwrap();
            let sigma_pred = 0.81 * sigma + 0.19;
            let k = sigma_pred / (sigma_pred + 0.25);
            sigma = (1.0 - k) * sigma_pred;
            assert!(
                (state.covariance_scalar() - sigma).abs() < 1e-13,
                "step {step}"
            );
        }
    }

    #[test]
    fn anchored_with_huge_anchor_variance_is_naive() {
        let model = reference_model();
        let anchor = AnchorConfig::new(DVector::zeros(1), 1e12, 1e12, 20).unwrap();
        let state = scalar_state(0.3, 0.7, 0);
        let y = DVector::from_element(1, -0.9);
        let a = anchored_step(&state, &model, &y, &anchor, 3).unwrap();
        let b = naive_step(&state, &model, &y).unwrap();
        assert!((a.mean_scalar() - b.mean_scalar()).abs() < 1e-6);
        assert!(
            (a.covariance_scalar() - b.covariance_scalar()).abs() / b.covariance_scalar() < 1e-6
        );
    }

    #[test]
    fn hard_anchor_pins_state_exactly() {
        let model = reference_model();
        let anchor = AnchorConfig::new(DVector::from_element(1, 0.0), 0.25, 0.0, 5).unwrap();
        let state = scalar_state(1.7, 0.9, 7);
        let out =
            anchored_step(&state, &model, &DVector::from_element(1, 2.0), &anchor, 7).unwrap();
        assert_eq!(out.mean_scalar(), 0.0);
        assert_eq!(out.covariance_scalar(), 0.0);
    }

    #[test]
    fn anchored_equals_sequential_through_full_step() {
        let model = reference_model();
        let anchor = AnchorConfig::new(DVector::zeros(1), 0.25, 0.0, 20).unwrap();
        let state = scalar_state(-0.6, 0.300545796952, 0);
        let y = DVector::from_element(1, 0.8);
        let stepped = anchored_step(&state, &model, &y, &anchor, 1).unwrap();

        let predicted = predict(&state, &model).unwrap();
        let (after_forecast, _, _) =
            update(&predicted, &y, &ObservationModel::naive(&model)).unwrap();
        let anchor_obs =
            ObservationModel::new(DMatrix::identity(1, 1), DMatrix::from_element(1, 1, 0.25))
                .unwrap();
        let (after_anchor, _, _) =
            update(&after_forecast, &DVector::zeros(1), &anchor_obs).unwrap();
        assert!((stepped.mean_scalar() - after_anchor.mean_scalar()).abs() < 1e-12);
        assert!((stepped.covariance_scalar() - after_anchor.covariance_scalar()).abs() < 1e-12);
    }

    #[test]
    fn deviation_step_with_zero_anchor_is_naive() {
        let model = reference_model();
        let anchor = AnchorConfig::new(DVector::zeros(1), 0.25, 0.0, 20).unwrap();
        let state = scalar_state(0.4, 0.6, 0);
        let y = DVector::from_element(1, -0.2);
        let a = deviation_step(&state, &model, &y, &anchor).unwrap();
        let b = naive_step(&state, &model, &y).unwrap();
        assert!((a.mean_scalar() - b.mean_scalar()).abs() < 1e-15);
        assert!((a.covariance_scalar() - b.covariance_scalar()).abs() < 1e-15);
    }

    #[test]
    fn deviation_fixed_point_at_anchor() {
        let model = MacroStateModel::scalar(1.0, 0.0, 1.0, 0.25, 0.0).unwrap();
        let anchor = AnchorConfig::new(DVector::from_element(1, 2.0), 0.25, 0.0, 20).unwrap();
        let state = scalar_state(2.0, 0.0, 0);
        let out = deviation_step(&state, &model, &DVector::zeros(1), &anchor).unwrap();
        assert!((out.mean_scalar() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn deviation_step_is_affine_equivariant() {
        let model = reference_model();
        let m_star = 1.3;
        let anchor = AnchorConfig::new(DVector::from_element(1, m_star), 0.25, 0.0, 20).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(5, 0, 0));
        let mut dev_state = scalar_state(m_star + 0.4, 0.8, 0);
        let mut shifted_state = scalar_state(0.4, 0.8, 0);
        for _ in 0..30 {
            let y_raw: f64 = rng.sample::<f64, _>(StandardNormal);
            let y_dev = DVector::from_element(1, y_raw - m_star);
            dev_state = deviation_step(&dev_state, &model, &y_dev, &anchor).unwrap();
            shifted_state = naive_step(&shifted_state, &model, &y_dev).unwrap();
            assert!(
                (dev_state.mean_scalar() - (shifted_state.mean_scalar() + m_star)).abs() < 1e-12
            );
            assert!(
                (dev_state.covariance_scalar() - shifted_state.covariance_scalar()).abs() < 1e-12
            );
        }
    }

    #[test]
    fn memoryless_system_riccati_closed_form() {
        // A = 0: predictor Sigma = Q, filtered Sigma = QR/(Q+R)
        let model = MacroStateModel::scalar(0.0, 0.3, 1.0, 0.2, 0.0).unwrap();
        let obs = ObservationModel::naive(&model);
        let sol = riccati_steady_state(&model, &obs, 1e-13, 10_000).unwrap();
        assert!((sol.sigma_pred_inf[(0, 0)] - 0.3).abs() < 1e-12);
        assert!((sol.sigma_inf[(0, 0)] - 0.3 * 0.2 / 0.5).abs() < 1e-12);
    }

    #[test]
    fn riccati_fixed_point_is_stationary() {
        let model = reference_model();
        let obs = ObservationModel::naive(&model);
        let sol = riccati_steady_state(&model, &obs, 1e-13, 100_000).unwrap();
        // apply the predictor map once more
        let sp = &sol.sigma_pred_inf;
        let s = sp[(0, 0)] + 0.25;
        let filtered = sp[(0, 0)] - sp[(0, 0)] * sp[(0, 0)] / s;
        let next = 0.81 * filtered + 0.19;
        assert!((next - sp[(0, 0)]).abs() < 10.0 * 1e-13);
    }

    #[test]
    fn anchored_riccati_radius_below_one_and_below_naive() {
        let model = reference_model();
        let naive =
            riccati_steady_state(&model, &ObservationModel::naive(&model), 1e-13, 100_000).unwrap();
        let anchored = riccati_steady_state(
            &model,
            &ObservationModel::anchored(&model, 0.25),
            1e-13,
            100_000,
        )
        .unwrap();
        assert!(anchored.closed_loop_spectral_radius < 1.0);
        assert!(anchored.closed_loop_spectral_radius < naive.closed_loop_spectral_radius);
    }

    #[test]
    fn error_trace_trivial_and_length_checks() {
        let truth = vec![DVector::from_element(1, 1.0); 5];
        let trace = error_trace(&truth, &truth, 1).unwrap();
        assert!(trace.squared_norms.iter().all(|&x| x == 0.0));
        assert_eq!(trace.post_window_decay_ratio, 0.0);
        let short = vec![DVector::from_element(1, 1.0); 4];
        assert!(matches!(
            error_trace(&truth, &short, 1),
            Err(Error::LengthMismatch(_))
        ));
    }

    /// Noise-free soft-anchored recursion decays at the closed-loop rate.
    #[test]
    fn soft_anchor_error_decays_at_closed_loop_rate() {
        let model = reference_model();
        let anchored_obs = ObservationModel::anchored(&model, 0.25);
        let sol = riccati_steady_state(&model, &anchored_obs, 1e-13, 100_000).unwrap();
        let radius = sol.closed_loop_spectral_radius;

        // Truth pinned at the anchor, observations exact, no process noise in
        // the data: the estimate error contracts by (I - K H_aug) A each step.
        let noise_free = MacroStateModel::scalar(0.9, 0.19, 1.0, 0.25, 0.0).unwrap();
        let anchor = AnchorConfig::new(DVector::zeros(1), 0.25, 0.25, 1_000_000).unwrap();
        let mut state = scalar_state(2.0, sol.sigma_pred_inf[(0, 0)], 0);
        let mut estimates = Vec::new();
        let truth: Vec<DVector<f64>> = (0..60).map(|_| DVector::zeros(1)).collect();
        for _ in 0..60 {
            state = anchored_step(&state, &noise_free, &DVector::zeros(1), &anchor, 0).unwrap();
            estimates.push(DVector::from_element(1, state.mean_scalar()));
        }
        let trace = error_trace(&truth, &estimates, 10).unwrap();
        assert!(
            (trace.post_window_decay_ratio - radius).abs() < 0.05,
            "decay {} vs radius {radius}",
            trace.post_window_decay_ratio
        );
    }

    /// The degenerate self-observation scheme (feeding back H mu_{t-1} as the
    /// observation) collapses the innovation to H(I - A) mu and ignores the
    /// data entirely. Negative fixture only: never exposed as a method.
    #[test]
    fn self_observation_scheme_is_biased() {
        let model = reference_model();
        let truth = 2.0; // constant true state the filter never sees
        let mut honest = scalar_state(0.0, 1.0, 0);
        let mut degenerate = scalar_state(0.0, 1.0, 0);
        for _ in 0..100 {
            honest = naive_step(&honest, &model, &DVector::from_element(1, truth)).unwrap();
            let self_obs = DVector::from_element(1, degenerate.mean_scalar());
            degenerate = naive_step(&degenerate, &model, &self_obs).unwrap();
        }
        assert!((honest.mean_scalar() - truth).abs() < 0.2);
        // the self-observing filter decays to zero regardless of the truth
        assert!(degenerate.mean_scalar().abs() < 1e-3);
    }
}
