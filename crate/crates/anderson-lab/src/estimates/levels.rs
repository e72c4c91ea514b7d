//! Ensemble-level statistics: interval occupancy against the Wegner and
//! Minami reference bounds, γ-gap probabilities, and small-gradient floors.

use serde::{Deserialize, Serialize};

use super::{paired_gradient, CombinationSpec, EstimateError};
use crate::lyapunov::{estimate_dos, LyapunovCurve};
use crate::model::SpectralDecomposition;

/// Default DOS bin width feeding ‖ρ‖_∞ for the reference bounds.
const DOS_BIN_WIDTH: f64 = 0.02;

/// Occupancy statistics for one interval length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPoint {
    pub interval: f64,
    /// Window positions × realizations.
    pub windows: u64,
    pub at_least_one: u64,
    pub at_least_two: u64,
    pub p_ge1: f64,
    pub p_ge2: f64,
    /// π ‖ρ‖_∞ I L — the Wegner-type expected-count scale.
    pub wegner_bound: f64,
    /// (π ‖ρ‖_∞ I L)² — the Minami pair bound.
    pub minami_bound: f64,
}

/// Eigenvalues of `d` inside the half-open window [lo, hi).
pub fn count_in_window(d: &SpectralDecomposition, lo: f64, hi: f64) -> usize {
    let es = d.energies();
    let a = es.partition_point(|&e| e < lo);
    let b = es.partition_point(|&e| e < hi);
    b - a
}

/// Per-spectrum window sweep: (windows, ≥1 hits, ≥2 hits) for one interval
/// length over the fixed position grid with step I/4.
pub(crate) fn window_counts(energies: &[f64], bound: f64, interval: f64) -> (u64, u64, u64) {
    let width = 2.0 * bound;
    let step = interval / 4.0;
    let positions = (((width - interval) / step).floor() as usize) + 1;

    let mut windows = 0u64;
    let mut ge1 = 0u64;
    let mut ge2 = 0u64;
    // Both window ends slide monotonically; two pointers suffice.
    let mut lo_idx = 0usize;
    let mut hi_idx = 0usize;
    for w in 0..positions {
        let a = -bound + step * w as f64;
        let b = a + interval;
        while lo_idx < energies.len() && energies[lo_idx] < a {
            lo_idx += 1;
        }
        if hi_idx < lo_idx {
            hi_idx = lo_idx;
        }
        while hi_idx < energies.len() && energies[hi_idx] < b {
            hi_idx += 1;
        }
        let count = hi_idx - lo_idx;
        windows += 1;
        if count >= 1 {
            ge1 += 1;
        }
        if count >= 2 {
            ge2 += 1;
        }
    }
    (windows, ge1, ge2)
}

/// Pr(n_I ≥ 1) and Pr(n_I ≥ 2) for each interval length, estimated by
/// sliding the interval over a fixed energy grid (step I/4) and averaging
/// over realizations. The reference bounds use ‖ρ‖_∞ from the pooled DOS
/// histogram of the same ensemble.
pub fn level_statistics(
    ensemble: &[SpectralDecomposition],
    intervals: &[f64],
) -> Result<Vec<LevelPoint>, EstimateError> {
    if ensemble.is_empty() {
        return Err(EstimateError::EmptyEnsemble);
    }
    let params = ensemble[0].params();
    let bound = params.spectral_bound();
    let width = 2.0 * bound;
    let l = params.box_size() as f64;
    for &i in intervals {
        if !(i > 0.0 && i <= width) {
            return Err(EstimateError::InvalidInterval(i));
        }
    }
    let dos = estimate_dos(ensemble, DOS_BIN_WIDTH)?;
    let rho_sup = dos.sup_density;

    let mut out = Vec::with_capacity(intervals.len());
    for &interval in intervals {
        let mut windows = 0u64;
        let mut ge1 = 0u64;
        let mut ge2 = 0u64;
        for d in ensemble {
            let (w, g1, g2) = window_counts(d.energies(), bound, interval);
            windows += w;
            ge1 += g1;
            ge2 += g2;
        }

        let scale = std::f64::consts::PI * rho_sup * interval * l;
        out.push(LevelPoint {
            interval,
            windows,
            at_least_one: ge1,
            at_least_two: ge2,
            p_ge1: ge1 as f64 / windows as f64,
            p_ge2: ge2 as f64 / windows as f64,
            wegner_bound: scale,
            minami_bound: scale * scale,
        });
    }
    Ok(out)
}

/// Empirical Pr(|γ(E_i) − γ(E_k)| ≤ t) over the combination's center pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaGapPoint {
    pub threshold: f64,
    pub probability: f64,
    pub hits: u64,
    pub pairs: u64,
}

/// γ-gap statistics for the eigenvalue pairs addressed by `spec`: each
/// center's energy is mapped to γ(E) by interpolation on `curve` and the
/// fraction of pairs with |γ_a − γ_b| ≤ t is reported per threshold.
pub fn gamma_gap_probability(
    spec: &CombinationSpec,
    ensemble: &[SpectralDecomposition],
    curve: &LyapunovCurve,
    thresholds: &[f64],
) -> Result<Vec<GammaGapPoint>, EstimateError> {
    if ensemble.is_empty() {
        return Err(EstimateError::EmptyEnsemble);
    }
    let centers: Vec<usize> = spec.centers().collect();

    let mut gaps = Vec::new();
    for d in ensemble {
        let gammas: Result<Vec<f64>, EstimateError> = centers
            .iter()
            .map(|&site| {
                d.energy_at_center(site)
                    .map(|e| curve.gamma_at(e))
                    .ok_or(EstimateError::MissingCenter(site))
            })
            .collect();
        let gammas = gammas?;
        for a in 0..gammas.len() {
            for b in (a + 1)..gammas.len() {
                gaps.push((gammas[a] - gammas[b]).abs());
            }
        }
    }
    let pairs = gaps.len() as u64;

    Ok(thresholds
        .iter()
        .map(|&t| {
            let hits = gaps.iter().filter(|&&g| g <= t).count() as u64;
            GammaGapPoint {
                threshold: t,
                probability: if pairs == 0 {
                    0.0
                } else {
                    hits as f64 / pairs as f64
                },
                hits,
                pairs,
            }
        })
        .collect())
}

/// Threshold rule for the small-gradient probability.
#[derive(Debug, Clone, Copy)]
pub enum FloorSpec<'a> {
    /// One fixed threshold for every offset and realization.
    Fixed(f64),
    /// The reference floor C_j = e^{−2(γ̃+ε)j} with γ̃ = min_k γ(E_{i_k})
    /// interpolated on the curve, evaluated per realization.
    Reference { curve: &'a LyapunovCurve, eps: f64 },
}

/// C_j = e^{−2(γ̃+ε)j}.
pub fn reference_floor(gamma_tilde: f64, eps: f64, offset: usize) -> f64 {
    (-2.0 * (gamma_tilde + eps) * offset as f64).exp()
}

/// Small-gradient statistics at one offset beyond the rightmost center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorPoint {
    pub offset: usize,
    /// Fraction of realizations with |∂f/∂ε_j + ∂f/∂ε_{j+1}| ≤ C.
    pub probability: f64,
    pub hits: u64,
    pub count: u64,
    /// Mean threshold actually applied (equals C for a fixed floor).
    pub mean_floor: f64,
}

/// For each offset j beyond the combination's rightmost center, the
/// fraction of realizations whose paired gradient at that site falls at
/// or below the floor.
pub fn gradient_floor_probability(
    spec: &CombinationSpec,
    ensemble: &[SpectralDecomposition],
    offsets: &[usize],
    floor: FloorSpec<'_>,
) -> Result<Vec<FloorPoint>, EstimateError> {
    if ensemble.is_empty() {
        return Err(EstimateError::EmptyEnsemble);
    }
    let base = spec.rightmost_center();
    let box_size = ensemble[0].params().box_size();
    for &off in offsets {
        let site = base + off;
        if site + 1 >= box_size {
            return Err(EstimateError::SiteOutsideBox { site, box_size });
        }
    }

    let mut out = Vec::with_capacity(offsets.len());
    for &off in offsets {
        let site = base + off;
        let mut hits = 0u64;
        let mut floor_sum = 0.0;
        for d in ensemble {
            let pg = paired_gradient(spec, d, site)?;
            let c = match floor {
                FloorSpec::Fixed(c) => c,
                FloorSpec::Reference { curve, eps } => {
                    let gamma_tilde = spec
                        .centers()
                        .map(|s| {
                            d.energy_at_center(s)
                                .map(|e| curve.gamma_at(e))
                                .ok_or(EstimateError::MissingCenter(s))
                        })
                        .collect::<Result<Vec<f64>, _>>()?
                        .into_iter()
                        .fold(f64::INFINITY, f64::min);
                    reference_floor(gamma_tilde, eps, off)
                }
            };
            floor_sum += c;
            if pg.abs() <= c {
                hits += 1;
            }
        }
        let count = ensemble.len() as u64;
        out.push(FloorPoint {
            offset: off,
            probability: hits as f64 / count as f64,
            hits,
            count,
            mean_floor: floor_sum / count as f64,
        });
    }
    Ok(out)
}
