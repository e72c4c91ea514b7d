//! Renormalized combinations f′ = f + β·c₀·V₀⁰⁰⁰ and the perturbative
//! response of the self-overlap V₀⁰⁰⁰ = Σ_x ψ⁴(x) to potential changes.
//!
//! Only the mode at the distinguished center (the box center by default)
//! is renormalized: E′_i = E_i + β δ_{i,0} V₀⁰⁰⁰.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimates::{eval_combination, CombinationSpec, EstimateError};
use crate::model::SpectralDecomposition;

/// Spectrum is treated as degenerate below this level separation; the
/// perturbative sum is not formed there.
pub const DEGENERACY_CUTOFF: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RenormError {
    #[error("no state centered at site {0}")]
    MissingCenter(usize),
    #[error("levels {n} and {k} are degenerate at the 1e-12 resolution")]
    DegenerateLevel { n: usize, k: usize },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

/// A combination with one renormalized mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenormSpec {
    pub base: CombinationSpec,
    pub beta: f64,
    /// Center site of the renormalized mode; the box center plays the role
    /// of the origin.
    pub renormalized_center: usize,
}

impl RenormSpec {
    pub fn new(base: CombinationSpec, beta: f64, renormalized_center: usize) -> Self {
        assert!(beta >= 0.0, "beta must be nonnegative");
        Self {
            base,
            beta,
            renormalized_center,
        }
    }

    /// Coefficient attached to the renormalized center, 0 when the
    /// combination does not contain it.
    pub fn renormalized_coefficient(&self) -> i64 {
        self.base
            .terms()
            .iter()
            .find(|&&(_, site)| site == self.renormalized_center)
            .map(|&(c, _)| c)
            .unwrap_or(0)
    }
}

/// Self-overlap V₀⁰⁰⁰ = Σ_x ψ⁴(x) of the state centered at `center`.
pub fn overlap_v0(d: &SpectralDecomposition, center: usize) -> Result<f64, RenormError> {
    let state = d
        .centers()
        .state_at(center)
        .ok_or(RenormError::MissingCenter(center))?;
    Ok(d.vector(state).iter().map(|&v| v * v * v * v).sum())
}

/// f′ = Σ c_k E_{i_k} + β·c₀·V₀⁰⁰⁰.
pub fn eval_renormalized(spec: &RenormSpec, d: &SpectralDecomposition) -> Result<f64, RenormError> {
    let f = eval_combination(&spec.base, d)?;
    let c0 = spec.renormalized_coefficient();
    if c0 == 0 || spec.beta == 0.0 {
        return Ok(f);
    }
    let v0 = overlap_v0(d, spec.renormalized_center)?;
    Ok(f + spec.beta * c0 as f64 * v0)
}

/// First-order eigenvector response: the vector over sites i of
///
/// ```text
/// ∂ψ_n(i)/∂ε_j = ψ_n(j) Σ_{k≠n} ψ_k(j) ψ_k(i) / (E_n − E_k).
/// ```
///
/// Fails when some level comes within 1e−12 of E_n.
pub fn perturbative_vec_derivative(
    d: &SpectralDecomposition,
    n: usize,
    j: usize,
) -> Result<Vec<f64>, RenormError> {
    let dim = d.dim();
    let e_n = d.energy(n);
    let psi_n_j = d.vector(n)[j];

    let mut out = vec![0.0; dim];
    for k in 0..dim {
        if k == n {
            continue;
        }
        let gap = e_n - d.energy(k);
        if gap.abs() < DEGENERACY_CUTOFF {
            return Err(RenormError::DegenerateLevel { n, k });
        }
        let w = psi_n_j * d.vector(k)[j] / gap;
        if w == 0.0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(d.vector(k)) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// ∂V₀⁰⁰⁰/∂ε_j = Σ_i 4 ψ³(i) ∂ψ(i)/∂ε_j for the state centered at `center`.
pub fn v_derivative(
    d: &SpectralDecomposition,
    center: usize,
    j: usize,
) -> Result<f64, RenormError> {
    let state = d
        .centers()
        .state_at(center)
        .ok_or(RenormError::MissingCenter(center))?;
    let dpsi = perturbative_vec_derivative(d, state, j)?;
    let psi = d.vector(state);
    Ok(psi
        .iter()
        .zip(dpsi.iter())
        .map(|(&p, &dp)| 4.0 * p * p * p * dp)
        .sum())
}

/// Paired form ∂V₀⁰⁰⁰/∂ε_j⁺ = (∂/∂ε_j + ∂/∂ε_{j+1})/√2.
pub fn v_derivative_paired(
    d: &SpectralDecomposition,
    center: usize,
    j: usize,
) -> Result<f64, RenormError> {
    let a = v_derivative(d, center, j)?;
    let b = v_derivative(d, center, j + 1)?;
    Ok((a + b) / std::f64::consts::SQRT_2)
}

/// β ceiling const·e^{−2(γ_max−γ_min)|x_δ|} under which the renormalization
/// stays subordinate to the bare gradient floor.
pub fn beta_threshold(gamma_min: f64, gamma_max: f64, x_delta: usize, constant: f64) -> f64 {
    assert!(
        gamma_max >= gamma_min && gamma_min > 0.0,
        "need gamma_max >= gamma_min > 0"
    );
    constant * (-2.0 * (gamma_max - gamma_min) * x_delta as f64).exp()
}
