//! Trimmed inverse fractional moments ⟨|f|⁻ˢ⟩_δ and the size-independent
//! bound D_δ they are measured against.

use serde::{Deserialize, Serialize};

use super::{CombinationSpec, EstimateError};

/// One batch of the trimmed-moment estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub s: f64,
    pub delta: f64,
    pub sample_count: usize,
    /// Mean of |f|⁻ˢ after discarding the ⌈δM⌉ largest values.
    pub trimmed_mean: f64,
    /// Mean over all samples, reported for contrast; may blow up.
    pub untrimmed_mean: f64,
    pub trim_count: usize,
}

/// Mean of `values` with the ⌈δM⌉ largest discarded, plus the untrimmed
/// mean. The buffer is sorted first, so the reduction is order-independent.
pub fn trimmed_mean(values: &[f64], delta: f64) -> (f64, f64, usize) {
    assert!((0.0..1.0).contains(&delta), "delta must lie in [0,1)");
    assert!(!values.is_empty());
    let m = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let trim_count = (delta * m as f64).ceil() as usize;
    let kept = &sorted[..m - trim_count];
    let trimmed = if kept.is_empty() {
        0.0
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    };
    let untrimmed = sorted.iter().sum::<f64>() / m as f64;
    (trimmed, untrimmed, trim_count)
}

/// δ-trimmed mean of |x|ˢ; the direct-power counterpart of
/// [`fractional_moment`], used for the derivative-decay estimates.
pub fn trimmed_power_moment(samples: &[f64], s: f64, delta: f64) -> (f64, usize) {
    assert!(s > 0.0 && s < 1.0);
    let powered: Vec<f64> = samples.iter().map(|&x| x.abs().powf(s)).collect();
    let (mean, _, trim_count) = trimmed_mean(&powered, delta);
    (mean, trim_count)
}

/// ⟨|f|⁻ˢ⟩_δ: per-sample |f|⁻ˢ with the ⌈δM⌉ largest values discarded —
/// the excluded-measure reading of the δ-trimmed mean.
pub fn fractional_moment(
    f_samples: &[f64],
    s: f64,
    delta: f64,
) -> Result<MomentReport, EstimateError> {
    assert!((0.0..1.0).contains(&s) && s > 0.0, "s must lie in (0,1)");
    assert!(!f_samples.is_empty(), "samples must be nonempty");

    if f_samples.iter().all(|&f| f == 0.0) {
        return Err(EstimateError::AllSamplesZero);
    }

    let inv: Vec<f64> = f_samples.iter().map(|&f| f.abs().powf(-s)).collect();
    let (trimmed_mean_value, untrimmed_mean, trim_count) = trimmed_mean(&inv, delta);

    Ok(MomentReport {
        s,
        delta,
        sample_count: f_samples.len(),
        trimmed_mean: trimmed_mean_value,
        untrimmed_mean,
        trim_count,
    })
}

/// Q = (2+Δ) Σ_k |c_k|, the deterministic bound on |f|.
pub fn q_bound(spec: &CombinationSpec, disorder_half_width: f64) -> f64 {
    (2.0 + disorder_half_width) * spec.abs_coeff_sum() as f64
}

/// D_δ = C_δ⁻¹ · Q^{1−s} / (2Δ(1−s)), the size-independent ceiling for
/// ⟨|f|⁻ˢ⟩_δ given a gradient floor C_δ.
pub fn theorem_bound(q: f64, s: f64, disorder_half_width: f64, c_delta: f64) -> f64 {
    assert!(s > 0.0 && s < 1.0);
    assert!(c_delta > 0.0);
    assert!(disorder_half_width > 0.0);
    q.powf(1.0 - s) / (c_delta * 2.0 * disorder_half_width * (1.0 - s))
}
