//! Inverse localization length γ(E) by two independent routes.
//!
//! Route one iterates the 2×2 transfer matrices
//!
//! ```text
//! T_x = [E − ε_x, −1]
//!       [   1,     0]
//! ```
//!
//! on a random initial direction with periodic log-norm renormalization.
//! Route two evaluates the Thouless formula γ(E) = ∫ ln|E − E′| ρ(E′) dE′
//! against a histogram estimate of the density of states. Agreement of the
//! two routes on the band interior is the module's core cross-check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelParams, SpectralDecomposition};
use crate::rng::SeededStream;

#[derive(Debug, Error)]
pub enum LyapunovError {
    #[error("iterated direction underflowed despite renormalization; shrink the renormalization interval")]
    DegenerateDirection,
    #[error("ensemble contains no spectra")]
    EmptyEnsemble,
}

/// Renormalize the transfer direction every this many steps.
pub const RENORM_INTERVAL: usize = 32;
/// Steps discarded before log-norm accumulation starts, so the direction
/// aligns with the growing solution first.
const BURN_IN: usize = 1024;
/// Batches for the standard-error estimate.
const BATCHES: usize = 32;

/// Histogram density of states with its integrated form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosEstimate {
    /// Bin edges covering [−2−Δ, 2+Δ]; length = bins + 1.
    pub bin_edges: Vec<f64>,
    /// Normalized density per bin: Σ density·width = 1.
    pub density: Vec<f64>,
    /// Integrated DOS N(E) at each right bin edge; ends at 1.
    pub cumulative: Vec<f64>,
    /// ‖ρ‖_∞ over the histogram.
    pub sup_density: f64,
    /// Number of eigenvalues pooled.
    pub sample_count: usize,
}

impl DosEstimate {
    pub fn bins(&self) -> usize {
        self.density.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    /// Integrated DOS mass strictly below `e`, linear inside a bin.
    pub fn mass_below(&self, e: f64) -> f64 {
        let lo = self.bin_edges[0];
        let hi = *self.bin_edges.last().unwrap();
        if e <= lo {
            return 0.0;
        }
        if e >= hi {
            return 1.0;
        }
        let w = self.bin_width();
        let b = (((e - lo) / w) as usize).min(self.bins() - 1);
        let left = if b == 0 { 0.0 } else { self.cumulative[b - 1] };
        left + self.density[b] * (e - self.bin_edges[b])
    }
}

/// Estimation route that produced a γ(E) curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMethod {
    Transfer,
    Thouless,
}

/// Sampled γ(E) on an energy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCurve {
    pub energies: Vec<f64>,
    pub gamma: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Extrema over the full stored grid.
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub method: GammaMethod,
}

impl LyapunovCurve {
    pub fn new(energies: Vec<f64>, gamma: Vec<f64>, stderr: Vec<f64>, method: GammaMethod) -> Self {
        assert!(!energies.is_empty());
        assert_eq!(energies.len(), gamma.len());
        assert_eq!(energies.len(), stderr.len());
        let gamma_min = gamma.iter().copied().fold(f64::INFINITY, f64::min);
        let gamma_max = gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            energies,
            gamma,
            stderr,
            gamma_min,
            gamma_max,
            method,
        }
    }

    /// Linear interpolation of γ at `e`, clamped to the grid endpoints.
    pub fn gamma_at(&self, e: f64) -> f64 {
        let es = &self.energies;
        if e <= es[0] {
            return self.gamma[0];
        }
        if e >= *es.last().unwrap() {
            return *self.gamma.last().unwrap();
        }
        let idx = match es.binary_search_by(|x| x.total_cmp(&e)) {
            Ok(i) => return self.gamma[i],
            Err(i) => i,
        };
        let (e0, e1) = (es[idx - 1], es[idx]);
        let t = (e - e0) / (e1 - e0);
        self.gamma[idx - 1] * (1.0 - t) + self.gamma[idx] * t
    }
}

/// Transfer-matrix estimate of γ(E) for one disorder stream.
///
/// Propagates a direction through `steps` random sites, accumulating
/// log-norms with renormalization every [`RENORM_INTERVAL`] steps; the
/// standard error comes from batch means. The clean chain (Δ = 0) gives the
/// closed form arccosh(|E|/2) outside the band and 0 inside.
pub fn lyapunov_transfer(
    params: ModelParams,
    energy: f64,
    steps: usize,
    seed: u64,
) -> Result<(f64, f64), LyapunovError> {
    lyapunov_transfer_k(params, energy, steps, seed, RENORM_INTERVAL)
}

/// As [`lyapunov_transfer`] with an explicit renormalization interval `k`.
pub fn lyapunov_transfer_k(
    params: ModelParams,
    energy: f64,
    steps: usize,
    seed: u64,
    k: usize,
) -> Result<(f64, f64), LyapunovError> {
    assert!(steps >= 10_000, "transfer estimate needs at least 1e4 steps");
    assert!(k >= 1);
    let delta = params.disorder_half_width();
    let mut stream = SeededStream::new(seed);

    // Initial direction from the stream: any non-degenerate start works
    // after burn-in; drawing it keeps the whole estimate seed-pure.
    let ang = stream.uniform_unit() * std::f64::consts::PI;
    let (mut u, mut v) = (ang.cos(), ang.sin());

    let mut advance = |u: &mut f64, v: &mut f64, n: usize| -> Result<f64, LyapunovError> {
        let mut log_norm = 0.0;
        let mut since_renorm = 0usize;
        for _ in 0..n {
            let eps = if delta > 0.0 {
                stream.uniform_symmetric(delta)
            } else {
                0.0
            };
            let next = (energy - eps) * *u - *v;
            *v = *u;
            *u = next;
            since_renorm += 1;
            if since_renorm == k {
                let norm = u.hypot(*v);
                if norm < f64::MIN_POSITIVE {
                    return Err(LyapunovError::DegenerateDirection);
                }
                log_norm += norm.ln();
                *u /= norm;
                *v /= norm;
                since_renorm = 0;
            }
        }
        if since_renorm > 0 {
            let norm = u.hypot(*v);
            if norm < f64::MIN_POSITIVE {
                return Err(LyapunovError::DegenerateDirection);
            }
            log_norm += norm.ln();
            *u /= norm;
            *v /= norm;
        }
        Ok(log_norm)
    };

    advance(&mut u, &mut v, BURN_IN)?;

    let batch_len = (steps / BATCHES).max(1);
    let mut rates = Vec::with_capacity(BATCHES);
    let mut total_steps = 0usize;
    let mut total_log = 0.0;
    while total_steps < steps {
        let n = batch_len.min(steps - total_steps);
        let log_norm = advance(&mut u, &mut v, n)?;
        rates.push(log_norm / n as f64);
        total_log += log_norm;
        total_steps += n;
    }

    let gamma = total_log / total_steps as f64;
    let m = rates.len() as f64;
    let stderr = if rates.len() > 1 {
        let mean: f64 = rates.iter().sum::<f64>() / m;
        let var: f64 = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok((gamma, stderr))
}

/// Streaming histogram builder for the DOS; lets large ensembles pool
/// integer bin counts without holding every spectrum in memory.
#[derive(Debug, Clone)]
pub struct DosAccumulator {
    lo: f64,
    width: f64,
    counts: Vec<u64>,
    total: u64,
}

impl DosAccumulator {
    /// Bins cover [−bound, bound] with width as close to `bin_width` as an
    /// integer bin count allows.
    pub fn new(bound: f64, bin_width: f64) -> Self {
        assert!(bin_width > 0.0);
        assert!(bound > 0.0);
        let bins = (((2.0 * bound) / bin_width).ceil() as usize).max(1);
        Self {
            lo: -bound,
            width: 2.0 * bound / bins as f64,
            counts: vec![0; bins],
            total: 0,
        }
    }

    pub fn add_energies(&mut self, energies: &[f64]) {
        let bins = self.counts.len();
        for &e in energies {
            let b = (((e - self.lo) / self.width) as usize).min(bins - 1);
            self.counts[b] += 1;
            self.total += 1;
        }
    }

    /// Add `count` entries directly to bin `bin`; used when pooling
    /// previously built histograms.
    pub fn add_count(&mut self, bin: usize, count: u64) {
        self.counts[bin] += count;
        self.total += count;
    }

    /// Add another accumulator's counts; both must share the binning.
    pub fn merge(&mut self, other: &DosAccumulator) {
        assert_eq!(self.counts.len(), other.counts.len());
        assert_eq!(self.lo, other.lo);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn finish(&self) -> Result<DosEstimate, LyapunovError> {
        if self.total == 0 {
            return Err(LyapunovError::EmptyEnsemble);
        }
        let bins = self.counts.len();
        let width = self.width;
        let bin_edges: Vec<f64> = (0..=bins).map(|i| self.lo + width * i as f64).collect();
        let density: Vec<f64> = self
            .counts
            .iter()
            .map(|&c| c as f64 / (self.total as f64 * width))
            .collect();

        // Compensated running sum keeps the integrated DOS exact to 1e-9
        // even for very fine binning.
        let mut cumulative = Vec::with_capacity(bins);
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for &rho in &density {
            let term = rho * width;
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            cumulative.push(sum);
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        let sup_density = density.iter().copied().fold(0.0, f64::max);

        Ok(DosEstimate {
            bin_edges,
            density,
            cumulative,
            sup_density,
            sample_count: self.total as usize,
        })
    }
}

/// Normalized eigenvalue histogram over [−2−Δ, 2+Δ] pooled across spectra.
pub fn estimate_dos(
    ensemble: &[SpectralDecomposition],
    bin_width: f64,
) -> Result<DosEstimate, LyapunovError> {
    if ensemble.is_empty() {
        return Err(LyapunovError::EmptyEnsemble);
    }
    let bound = ensemble[0].params().spectral_bound();
    let mut acc = DosAccumulator::new(bound, bin_width);
    for d in ensemble {
        acc.add_energies(d.energies());
    }
    acc.finish()
}

/// Thouless-formula estimate γ(E) = Σ_bins mass · ln|E − E_mid|.
///
/// The bin containing E uses the analytic integral of ln|E − x| against the
/// bin's constant density, so the integrable singularity does not poison
/// the sum. The result is clamped at 0 from below.
pub fn lyapunov_thouless(dos: &DosEstimate, energy: f64) -> f64 {
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    let mut add = |term: f64| {
        let y = term - comp;
        let t = acc + y;
        comp = (t - acc) - y;
        acc = t;
    };

    for b in 0..dos.bins() {
        let a = dos.bin_edges[b];
        let c = dos.bin_edges[b + 1];
        let rho = dos.density[b];
        if rho == 0.0 {
            continue;
        }
        if energy >= a && energy < c {
            // ∫_a^c ln|E−x| dx = φ(c−E) − φ(a−E), φ(t) = t ln|t| − t.
            let phi = |t: f64| if t == 0.0 { 0.0 } else { t * t.abs().ln() - t };
            add(rho * (phi(c - energy) - phi(a - energy)));
        } else {
            let mid = 0.5 * (a + c);
            add(rho * (c - a) * (energy - mid).abs().ln());
        }
    }
    acc.max(0.0)
}

/// γ extrema over the grid, restricted to energies whose integrated DOS
/// mass lies in [0.01, 0.99] when a DOS estimate is supplied. The exclusion
/// keeps ill-sampled spectral edges out of the extrema.
pub fn gamma_extrema(curve: &LyapunovCurve, dos: Option<&DosEstimate>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for (e, g) in curve.energies.iter().zip(curve.gamma.iter()) {
        if let Some(dos) = dos {
            let mass = dos.mass_below(*e);
            if !(0.01..=0.99).contains(&mass) {
                continue;
            }
        }
        lo = lo.min(*g);
        hi = hi.max(*g);
        any = true;
    }
    if !any {
        // Degenerate restriction; fall back to the stored full-grid extrema.
        return (curve.gamma_min, curve.gamma_max);
    }
    (lo, hi)
}

/// Closed-form clean-chain rate: arccosh(|E|/2) outside the band, 0 inside.
pub fn free_chain_gamma(energy: f64) -> f64 {
    let half = energy.abs() / 2.0;
    if half <= 1.0 {
        0.0
    } else {
        (half + (half * half - 1.0).sqrt()).ln()
    }
}
