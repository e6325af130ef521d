//! Small numeric utilities: compensated summation, induced norms, spectral
//! radius, deterministic seed derivation.

use nalgebra::DMatrix;

/// Neumaier-compensated sum of a slice.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Streaming compensated accumulator (Neumaier variant of Kahan summation).
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// L1 distance between two equally sized slices.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = KahanSum::new();
    for (x, y) in a.iter().zip(b) {
        acc.add((x - y).abs());
    }
    acc.value()
}

/// Induced 1->1 norm for matrices acting on probability rows from the left:
/// max over rows of the row-wise absolute sum.
pub fn induced_row_l1_norm(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for i in 0..m.nrows() {
        let mut acc = KahanSum::new();
        for j in 0..m.ncols() {
            acc.add(m[(i, j)].abs());
        }
        best = best.max(acc.value());
    }
    best
}

/// Spectral radius of a square matrix via its complex eigenvalues.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Sample mean and (n-1)-denominator variance with compensated accumulation.
/// Returns variance 0 for fewer than two samples.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut acc = KahanSum::new();
    for &v in values {
        let d = v - mean;
        acc.add(d * d);
    }
    (mean, acc.value() / (n - 1.0))
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output step.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a substream seed from a master seed and two stream labels.
///
/// Uses chained SplitMix64 mixing so substreams are decorrelated and the
/// derivation is independent of any execution schedule.
pub fn derive_seed(master: u64, label_a: u64, label_b: u64) -> u64 {
    let mut s = master;
    let mut h = splitmix64(&mut s);
    s = h ^ label_a.wrapping_mul(GOLDEN | 1);
    h = splitmix64(&mut s);
    s = h ^ label_b.wrapping_mul(GOLDEN | 1);
    splitmix64(&mut s)
}
