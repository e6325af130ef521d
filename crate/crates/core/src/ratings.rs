//! Rating migration matrices: cohort estimation of the through-the-cycle
//! (TTC) matrix and the macro logit overlay producing point-in-time (PIT)
//! matrices.
//!
//! Conventions: state `K-1` (the last state) is the absorbing default state.
//! A transition matrix is row-stochastic with the default row pinned to the
//! exact unit row. The overlay tilts each non-default row as
//! `p_ij ∝ p_ij * exp(beta_ij * m)` followed by row renormalisation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Default cap on |beta_ij * m| before the overlay refuses to exponentiate.
pub const DEFAULT_EXPONENT_CAP: f64 = 50.0;

/// Row-sum tolerance accepted when validating a transition matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Integer migration counts over a sample period.
///
/// Entry `(i, j)` is the number of obligors that moved from state `i` to
/// state `j`. The last state is default.
#[derive(Debug, Clone)]
pub struct MigrationCounts {
    counts: DMatrix<u64>,
}

impl MigrationCounts {
    pub fn new(counts: DMatrix<u64>) -> Result<Self> {
        let k = counts.nrows();
        if k < 2 || counts.ncols() != k {
            return Err(Error::Validation(format!(
                "counts must be square with K >= 2, got {}x{}",
                counts.nrows(),
                counts.ncols()
            )));
        }
        for i in 0..k {
            if (0..k).map(|j| counts[(i, j)]).sum::<u64>() == 0 {
                return Err(Error::EmptyCohortRow(i));
            }
        }
        Ok(Self { counts })
    }

    pub fn num_states(&self) -> usize {
        self.counts.nrows()
    }

    pub fn counts(&self) -> &DMatrix<u64> {
        &self.counts
    }
}

/// Row-stochastic K x K transition matrix with an absorbing default state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: DMatrix<f64>,
    default_index: usize,
}

impl TransitionMatrix {
    /// Validate and wrap a matrix. The default row must be exactly the unit
    /// row on `default_index`; all rows must sum to 1 within [`ROW_SUM_TOL`].
    pub fn new(entries: DMatrix<f64>, default_index: usize) -> Result<Self> {
        let k = entries.nrows();
        if k < 2 || entries.ncols() != k {
            return Err(Error::Validation(format!(
                "transition matrix must be square with K >= 2, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if default_index != k - 1 {
            return Err(Error::Validation(
                "default state must be the last state".to_string(),
            ));
        }
        for i in 0..k {
            let mut acc = KahanSum::new();
            for j in 0..k {
                let p = entries[(i, j)];
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(format!(
                        "entry ({i},{j}) = {p} outside [0,1]"
                    )));
                }
                acc.add(p);
            }
            if (acc.value() - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Validation(format!(
                    "row {i} sums to {} (tolerance {ROW_SUM_TOL:e})",
                    acc.value()
                )));
            }
        }
        for j in 0..k {
            let expected = if j == default_index { 1.0 } else { 0.0 };
            if entries[(default_index, j)] != expected {
                return Err(Error::Validation(
                    "default row must be exactly the unit row".to_string(),
                ));
            }
        }
        Ok(Self {
            entries,
            default_index,
        })
    }

    pub fn num_states(&self) -> usize {
        self.entries.nrows()
    }

    pub fn default_index(&self) -> usize {
        self.default_index
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }
}

/// Macro sensitivities `beta_ij` per unit of the composite index. The default
/// row is identically zero: the absorbing state is unaffected by the overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    betas: DMatrix<f64>,
}

impl SensitivityMatrix {
    pub fn new(betas: DMatrix<f64>) -> Result<Self> {
        let k = betas.nrows();
        if k < 2 || betas.ncols() != k {
            return Err(Error::Validation(format!(
                "beta matrix must be square with K >= 2, got {}x{}",
                betas.nrows(),
                betas.ncols()
            )));
        }
        if betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::Validation("betas must be finite".to_string()));
        }
        for j in 0..k {
            if betas[(k - 1, j)] != 0.0 {
                return Err(Error::Validation(
                    "default row of betas must be identically zero".to_string(),
                ));
            }
        }
        Ok(Self { betas })
    }

    /// All-zero sensitivities (overlay becomes the identity).
    pub fn zeros(k: usize) -> Self {
        Self {
            betas: DMatrix::zeros(k, k),
        }
    }

    /// Negate every sensitivity. Used by the `adverse-positive` orientation,
    /// which flips the economic sign of the composite index wholesale.
    pub fn negated(&self) -> Self {
        Self {
            betas: -&self.betas,
        }
    }

    pub fn num_states(&self) -> usize {
        self.betas.nrows()
    }

    pub fn betas(&self) -> &DMatrix<f64> {
        &self.betas
    }

    pub fn beta(&self, i: usize, j: usize) -> f64 {
        self.betas[(i, j)]
    }
}

/// Cohort (counting) estimator: `p_ij = N_ij / sum_j N_ij`, with the default
/// row forced to the absorbing unit row.
///
/// If the default row of `counts` has off-default mass, the caller must pass
/// `force_absorption = true`; otherwise [`Error::NonAbsorbingDefault`] is
/// returned.
pub fn cohort_estimate(
    counts: &MigrationCounts,
    force_absorption: bool,
) -> Result<TransitionMatrix> {
    let k = counts.num_states();
    let default = k - 1;
    let has_off_default = (0..k - 1).any(|j| counts.counts()[(default, j)] > 0);
    if has_off_default && !force_absorption {
        return Err(Error::NonAbsorbingDefault);
    }

    let mut entries = DMatrix::zeros(k, k);
    for i in 0..k - 1 {
        let row_sum: u64 = (0..k).map(|j| counts.counts()[(i, j)]).sum();
        // row_sum > 0 guaranteed by MigrationCounts validation
        for j in 0..k {
            entries[(i, j)] = counts.counts()[(i, j)] as f64 / row_sum as f64;
        }
    }
    entries[(default, default)] = 1.0;
    TransitionMatrix::new(entries, default)
}

/// Apply the logit overlay with the default exponent cap.
pub fn logit_overlay(
    ttc: &TransitionMatrix,
    betas: &SensitivityMatrix,
    m: f64,
) -> Result<TransitionMatrix> {
    logit_overlay_capped(ttc, betas, m, DEFAULT_EXPONENT_CAP)
}

/// Logit overlay: for non-default rows, `p_ij ∝ p_ij^TTC * exp(beta_ij * m)`,
/// renormalised so each row sums to 1. Zero TTC entries stay zero and the
/// default row stays the unit row.
///
/// Errors with [`Error::OverflowGuard`] if any |beta_ij * m| exceeds `cap`,
/// or if an entire row underflows to zero mass.
pub fn logit_overlay_capped(
    ttc: &TransitionMatrix,
    betas: &SensitivityMatrix,
    m: f64,
    cap: f64,
) -> Result<TransitionMatrix> {
    let k = ttc.num_states();
    if betas.num_states() != k {
        return Err(Error::DimensionMismatch(format!(
            "ttc is {k}x{k} but betas is {0}x{0}",
            betas.num_states()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Validation("macro index must be finite".to_string()));
    }
    // exp(0) == 1 exactly: the overlay at m = 0 is the identity, so return the
    // TTC matrix unchanged rather than re-dividing rows by a sum within
    // rounding of 1.
    if m == 0.0 {
        return Ok(ttc.clone());
    }

    let mut entries = DMatrix::zeros(k, k);
    for i in 0..k - 1 {
        let mut unnormalized = vec![0.0f64; k];
        let mut acc = KahanSum::new();
        for j in 0..k {
            let exponent = betas.beta(i, j) * m;
            if exponent.abs() > cap {
                return Err(Error::OverflowGuard {
                    value: exponent.abs(),
                    cap,
                });
            }
            let u = ttc.entry(i, j) * exponent.exp();
            unnormalized[j] = u;
            acc.add(u);
        }
        let row_sum = acc.value();
        if row_sum <= 0.0 || !row_sum.is_finite() {
            return Err(Error::OverflowGuard {
                value: row_sum,
                cap,
            });
        }
        for j in 0..k {
            // The final rounding of u/s can land 1 ulp above 1; pin it back.
            entries[(i, j)] = (unnormalized[j] / row_sum).min(1.0);
        }
    }
    entries[(k - 1, k - 1)] = 1.0;
    TransitionMatrix::new(entries, k - 1)
}

/// Closed-form sensitivity of the one-step default probability
/// `phi(pi, m) = sum_i pi_i p_iK(m)` with respect to the macro index:
///
/// `d/dm phi = sum_i pi_i p_iK(m) (beta_iK - sum_j beta_ij p_ij(m))`.
pub fn overlay_default_sensitivity(
    ttc: &TransitionMatrix,
    betas: &SensitivityMatrix,
    pi: &crate::propagation::RatingDistribution,
    m: f64,
) -> Result<f64> {
    let k = ttc.num_states();
    if betas.num_states() != k || pi.num_states() != k {
        return Err(Error::DimensionMismatch(
            "ttc, betas and pi must share K".to_string(),
        ));
    }
    let pit = logit_overlay(ttc, betas, m)?;
    let default = k - 1;
    let mut acc = KahanSum::new();
    for i in 0..k {
        let mut weighted = KahanSum::new();
        for j in 0..k {
            weighted.add(betas.beta(i, j) * pit.entry(i, j));
        }
        acc.add(pi.weight(i) * pit.entry(i, default) * (betas.beta(i, default) - weighted.value()));
    }
    Ok(acc.value())
}

/// Diagnostic lower bound for the uniform-sensitivity hypothesis: the minimum
/// over non-default rows and over a grid on `[lo, hi]` of
/// `p_iK(m) (beta_iK - sum_j beta_ij p_ij(m))`.
///
/// When the returned value `c` is positive, one-step default probabilities of
/// default-free distributions respond to the macro index at rate at least `c`
/// on that interval.
pub fn uniform_sensitivity_bound(
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
    let k = ttc.num_states();
    let default = k - 1;
    let mut bound = f64::INFINITY;
    let mut m = lo;
    while m <= hi + step * 0.5 {
        let pit = logit_overlay(ttc, betas, m)?;
        for i in 0..k - 1 {
            let mut weighted = KahanSum::new();
            for j in 0..k {
                weighted.add(betas.beta(i, j) * pit.entry(i, j));
            }
            let rate = pit.entry(i, default) * (betas.beta(i, default) - weighted.value());
            bound = bound.min(rate);
        }
        m += step;
    }
    Ok(bound)
}

/// Parse migration counts from CSV text: a header row of K state labels
/// followed by K rows of K nonnegative integers.
pub fn migration_counts_from_csv(text: &str) -> Result<(Vec<String>, MigrationCounts)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty migration CSV".to_string()))?;
    let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let k = labels.len();
    if k < 2 {
        return Err(Error::Config(
            "migration CSV needs at least 2 states".to_string(),
        ));
    }
    let mut data = Vec::with_capacity(k * k);
    for (row_idx, line) in lines.enumerate() {
        if row_idx >= k {
            return Err(Error::Config(format!(
                "migration CSV has more than {k} data rows"
            )));
        }
        let fields: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if fields.len() != k {
            return Err(Error::Config(format!(
                "migration CSV row {} has {} fields, expected {k}",
                row_idx + 1,
                fields.len()
            )));
        }
        for f in fields {
            let v: u64 = f.parse().map_err(|_| {
                Error::Config(format!(
                    "migration CSV entry '{f}' is not a nonnegative integer"
                ))
            })?;
            data.push(v);
        }
    }
    if data.len() != k * k {
        return Err(Error::Config(format!(
            "migration CSV has {} data rows, expected {k}",
            data.len() / k
        )));
    }
    let counts = MigrationCounts::new(DMatrix::from_row_slice(k, k, &data))?;
    Ok((labels, counts))
}
