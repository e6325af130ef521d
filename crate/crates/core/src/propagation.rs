//! Propagation of rating distributions through sequences of transition
//! matrices and extraction of cumulative lifetime PD term structures.

use std::iter;

use crate::error::{Error, Result};
use crate::numeric::{induced_row_l1_norm, KahanSum};
use crate::ratings::{logit_overlay, SensitivityMatrix, TransitionMatrix};

/// Renormalisation kicks in when the propagated row drifts off the simplex by
/// more than this.
const DRIFT_RENORM: f64 = 1e-13;
/// Drift beyond this is treated as a real numerical failure.
const DRIFT_FAIL: f64 = 1e-9;

/// Probability row over K rating states; the last state is default.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDistribution {
    weights: Vec<f64>,
}

impl RatingDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::Validation("need at least 2 states".to_string()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Validation(
                "weights must be finite and nonnegative".to_string(),
            ));
        }
        let sum: f64 = crate::numeric::compensated_sum(&weights);
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "weights sum to {sum}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { weights })
    }

    /// Normalise raw nonnegative counts into a distribution.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Validation("counts sum to zero".to_string()));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn num_states(&self) -> usize {
        self.weights.len()
    }

    pub fn default_index(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mass currently in the absorbing default state.
    pub fn default_mass(&self) -> f64 {
        self.weights[self.default_index()]
    }
}

/// Cumulative default probabilities `Y_1..Y_T`. `Y_0` (the initial default
/// mass) is carried separately and excluded from the sequence by default.
#[derive(Debug, Clone, PartialEq)]
pub struct PDTermStructure {
    values: Vec<f64>,
    y0: f64,
}

impl PDTermStructure {
    pub fn new(values: Vec<f64>, y0: f64) -> Result<Self> {
        let mut prev = y0;
        for (t, &y) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::Validation(format!(
                    "Y_{} = {y} outside [0,1]",
                    t + 1
                )));
            }
            if y + 1e-12 < prev {
                return Err(Error::Validation(format!(
                    "Y_{} = {y} decreases below Y_{} = {prev}",
                    t + 1,
                    t
                )));
            }
            prev = y;
        }
        Ok(Self { values, y0 })
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// `Y_t` for t = 1..=T.
    pub fn value(&self, t: usize) -> f64 {
        self.values[t - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Initial default mass `Y_0`, available on request.
    pub fn initial(&self) -> f64 {
        self.y0
    }
}

/// One propagation step: `pi' = pi * P` (row vector times matrix).
///
/// The result is renormalised when floating-point drift exceeds 1e-13 so that
/// long products stay on the simplex; drift above 1e-9 is an error.
pub fn propagate_one(pi: &RatingDistribution, p: &TransitionMatrix) -> Result<RatingDistribution> {
    let k = pi.num_states();
    if p.num_states() != k {
        return Err(Error::DimensionMismatch(format!(
            "distribution has {k} states, matrix has {}",
            p.num_states()
        )));
    }
    let mut weights = vec![0.0f64; k];
    for j in 0..k {
        let mut acc = KahanSum::new();
        for i in 0..k {
            acc.add(pi.weight(i) * p.entry(i, j));
        }
        weights[j] = acc.value();
    }
    let sum = crate::numeric::compensated_sum(&weights);
    let drift = (sum - 1.0).abs();
    if drift > DRIFT_FAIL {
        return Err(Error::ExcessiveDrift { step: 0, drift });
    }
    if drift > DRIFT_RENORM {
        for w in &mut weights {
            *w /= sum;
        }
    }
    let out = RatingDistribution::new(weights)?;
    debug_assert!(out.default_mass() + 1e-12 >= pi.default_mass());
    Ok(out)
}

/// Lifetime PD term structure `Y_t = (pi_0 P_0 ... P_{t-1}) e_K` for
/// t = 1..=T, where T is the number of matrices supplied.
pub fn lifetime_pd<'a, I>(pi0: &RatingDistribution, matrices: I) -> Result<PDTermStructure>
where
    I: IntoIterator<Item = &'a TransitionMatrix>,
{
    let mut pi = pi0.clone();
    let mut values = Vec::new();
    for (step, p) in matrices.into_iter().enumerate() {
        pi = propagate_one(&pi, p).map_err(|e| match e {
            Error::ExcessiveDrift { drift, .. } => Error::ExcessiveDrift {
                step: step + 1,
                drift,
            },
            other => other,
        })?;
        values.push(pi.default_mass());
    }
    PDTermStructure::new(values, pi0.default_mass())
}

/// Propagate under a single matrix repeated `horizon` times.
pub fn lifetime_pd_constant(
    pi0: &RatingDistribution,
    p: &TransitionMatrix,
    horizon: usize,
) -> Result<PDTermStructure> {
    lifetime_pd(pi0, iter::repeat_n(p, horizon))
}

/// Running deviation bound `b_t = e_0 + L_G * sum_{s<t} |delta_s|` for
/// t = 1..=T.
pub fn deviation_bound(e0: f64, lipschitz: f64, deltas: &[f64]) -> Vec<f64> {
    let mut acc = KahanSum::new();
    let mut out = Vec::with_capacity(deltas.len());
    for &d in deltas {
        acc.add(d.abs());
        out.push(e0 + lipschitz * acc.value());
    }
    out
}

/// Empirical Lipschitz constant of the overlay in the induced 1->1 norm over
/// a macro grid: the maximum of finite-difference quotients
/// `||G(m + d) - G(m)|| / |d|` over grid points and both a grid-step secant
/// and a small centred probe, multiplied by a 1.1 safety factor.
pub fn estimate_lipschitz(
    ttc: &TransitionMatrix,
    betas: &SensitivityMatrix,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<f64> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi || !step.is_finite() || step <= 0.0 {
        return Err(Error::Validation(
            "need finite lo < hi and step > 0".to_string(),
        ));
    }
    let probe = 1e-5f64;
    let mut max_quotient = 0.0f64;
    let mut m = lo;
    let mut prev = logit_overlay(ttc, betas, m)?;
    loop {
        // small centred probe at the grid point
        let lo_mat = logit_overlay(ttc, betas, m - probe)?;
        let hi_mat = logit_overlay(ttc, betas, m + probe)?;
        let diff = hi_mat.entries() - lo_mat.entries();
        max_quotient = max_quotient.max(induced_row_l1_norm(&diff) / (2.0 * probe));

        let next_m = m + step;
        if next_m > hi + step * 0.5 {
            break;
        }
        // secant across one grid step
        let next = logit_overlay(ttc, betas, next_m)?;
        let diff = next.entries() - prev.entries();
        max_quotient = max_quotient.max(induced_row_l1_norm(&diff) / step);
        prev = next;
        m = next_m;
    }
    Ok(max_quotient * 1.1)
}
