//! Disorder realizations, the finite-box Hamiltonian, and full
//! diagonalization with localization-center indexing.
//!
//! The operator acts on a box of `|Λ|` sites with open (Dirichlet)
//! boundaries:
//!
//! ```text
//! (Hψ)(x) = ψ(x−1) + ψ(x+1) + ε_x ψ(x),   ψ ≡ 0 outside the box,
//! ```
//!
//! with ε_x i.i.d. uniform on [−Δ, Δ]. Spectra are indexed two ways: by
//! ascending energy (spectral index) and by localization center (the site
//! where the eigenfunction peaks), the labeling under which eigenvalue
//! combinations are defined.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{self, ColumnMatrix};
use crate::rng::SeededStream;

/// QL sweep budget per eigenvalue.
pub const MAX_QL_SWEEPS: usize = 50;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("eigenpair {index} failed the residual test after the iteration budget")]
    ConvergenceFailure { index: usize },
}

impl From<eigen::EigenError> for ModelError {
    fn from(e: eigen::EigenError) -> Self {
        match e {
            eigen::EigenError::Convergence { index } => ModelError::ConvergenceFailure { index },
        }
    }
}

/// Boundary condition of the finite box. Open (Dirichlet) truncation keeps
/// the operator tridiagonal and matches transfer-matrix conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Open,
}

/// Box size and disorder strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    box_size: usize,
    disorder_half_width: f64,
    #[serde(default)]
    boundary: Boundary,
}

impl ModelParams {
    /// `Δ = 0` is permitted for analytic-check mode (clean chain).
    pub fn new(box_size: usize, disorder_half_width: f64) -> Result<Self, ModelError> {
        if box_size < 2 {
            return Err(ModelError::InvalidParams(format!(
                "box_size must be >= 2, got {box_size}"
            )));
        }
        if !disorder_half_width.is_finite() || disorder_half_width < 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "disorder_half_width must be finite and >= 0, got {disorder_half_width}"
            )));
        }
        Ok(Self {
            box_size,
            disorder_half_width,
            boundary: Boundary::Open,
        })
    }

    pub fn box_size(&self) -> usize {
        self.box_size
    }

    pub fn disorder_half_width(&self) -> f64 {
        self.disorder_half_width
    }

    /// Upper bound on |E| for every eigenvalue: 2 + Δ.
    pub fn spectral_bound(&self) -> f64 {
        2.0 + self.disorder_half_width
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        Self::new(self.box_size, self.disorder_half_width).map(|_| ())
    }
}

/// One sample of the random potential on the box, regenerable bit-exactly
/// from `(params, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization {
    params: ModelParams,
    seed: u64,
    epsilon: Vec<f64>,
}

impl DisorderRealization {
    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn epsilon(&self) -> &[f64] {
        &self.epsilon
    }

    /// Copy with one site's potential replaced; used by gradient checks and
    /// parameter sweeps. Panics if `site` is outside the box.
    pub fn with_epsilon_at(&self, site: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.epsilon[site] = value;
        out
    }
}

/// Draw the `|Λ|` i.i.d. uniform potentials for one realization.
pub fn sample_disorder(params: ModelParams, seed: u64) -> DisorderRealization {
    let mut stream = SeededStream::new(seed);
    let delta = params.disorder_half_width();
    let epsilon = (0..params.box_size())
        .map(|_| stream.uniform_symmetric(delta))
        .collect();
    DisorderRealization {
        params,
        seed,
        epsilon,
    }
}

/// The tridiagonal operator: diagonal ε_x, off-diagonal 1.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    diag: Vec<f64>,
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// (Hψ)(x) = ψ(x−1) + ψ(x+1) + ε_x ψ(x) with Dirichlet truncation.
    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(psi.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut h = self.diag[i] * psi[i];
            if i > 0 {
                h += psi[i - 1];
            }
            if i + 1 < n {
                h += psi[i + 1];
            }
            out[i] = h;
        }
        out
    }

    /// Row-sum norm; for the tridiagonal operator max_x (|ε_x| + #neighbors).
    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        self.diag
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let neighbors = (i > 0) as usize + (i + 1 < n) as usize;
                d.abs() + neighbors as f64
            })
            .fold(0.0, f64::max)
    }
}

pub fn build_hamiltonian(r: &DisorderRealization) -> Hamiltonian {
    Hamiltonian {
        diag: r.epsilon.clone(),
    }
}

/// Default residual tolerance for `diagonalize`: 1e−10 · ‖H‖_∞.
pub fn default_tol(h: &Hamiltonian) -> f64 {
    1e-10 * h.norm_inf()
}

/// Site where |ψ(x)|² is maximal; ties go to the smallest site index.
pub fn localization_center(psi: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_w = f64::NEG_INFINITY;
    for (x, &v) in psi.iter().enumerate() {
        let w = v * v;
        if w > best_w {
            best_w = w;
            best = x;
        }
    }
    best
}

/// Bijection between occupied center sites and spectral indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CenterAssignment {
    site_to_state: Vec<Option<usize>>,
    state_to_site: Vec<usize>,
    /// States whose assigned center differs from their raw argmax.
    reassigned: usize,
}

impl CenterAssignment {
    /// Spectral index of the state centered at `site`, if occupied.
    pub fn state_at(&self, site: usize) -> Option<usize> {
        self.site_to_state.get(site).copied().flatten()
    }

    /// Center site of spectral index `state`.
    pub fn site_of(&self, state: usize) -> usize {
        self.state_to_site[state]
    }

    pub fn occupied_sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.site_to_state
            .iter()
            .enumerate()
            .filter_map(|(site, s)| s.map(|_| site))
    }

    pub fn reassigned(&self) -> usize {
        self.reassigned
    }

    pub fn n_states(&self) -> usize {
        self.state_to_site.len()
    }
}

/// Heap entry for the greedy matching, ordered by
/// (weight desc, spectral index asc, site asc).
#[derive(PartialEq)]
struct Candidate {
    weight: f64,
    state: usize,
    site: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then_with(|| other.state.cmp(&self.state))
            .then_with(|| other.site.cmp(&self.site))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Assign each eigenvector a distinct center site by greedy matching on the
/// weights |ψ_i(x)|² in globally decreasing order. When no argmax collision
/// occurs this reduces to the raw argmax per state.
pub fn index_by_center(vectors: &[&[f64]]) -> CenterAssignment {
    let n_states = vectors.len();
    assert!(n_states >= 1, "no eigenvectors");
    let n_sites = vectors[0].len();
    assert!(
        n_states <= n_sites,
        "more states ({n_states}) than sites ({n_sites})"
    );

    let argmax: Vec<usize> = vectors.iter().map(|v| localization_center(v)).collect();

    let mut heap: BinaryHeap<Candidate> = (0..n_states)
        .map(|s| Candidate {
            weight: vectors[s][argmax[s]].powi(2),
            state: s,
            site: argmax[s],
        })
        .collect();

    // Lazily built per-state site ranking, only materialized on collision.
    let mut rankings: Vec<Option<(Vec<u32>, usize)>> = vec![None; n_states];
    let mut site_taken = vec![false; n_sites];
    let mut site_to_state = vec![None; n_sites];
    let mut state_to_site = vec![usize::MAX; n_states];
    let mut assigned = vec![false; n_states];
    let mut reassigned = 0usize;

    while let Some(c) = heap.pop() {
        if assigned[c.state] {
            continue;
        }
        if !site_taken[c.site] {
            site_taken[c.site] = true;
            site_to_state[c.site] = Some(c.state);
            state_to_site[c.state] = c.site;
            assigned[c.state] = true;
            if c.site != argmax[c.state] {
                reassigned += 1;
            }
            continue;
        }
        // Collision: advance this state to its best still-free site.
        let (order, ptr) = rankings[c.state].get_or_insert_with(|| {
            let v = vectors[c.state];
            let mut order: Vec<u32> = (0..n_sites as u32).collect();
            order.sort_by(|&a, &b| {
                let wa = v[a as usize] * v[a as usize];
                let wb = v[b as usize] * v[b as usize];
                wb.total_cmp(&wa).then_with(|| a.cmp(&b))
            });
            (order, 0)
        });
        while *ptr < order.len() && site_taken[order[*ptr] as usize] {
            *ptr += 1;
        }
        // A free site always exists while a state is unassigned.
        let site = order[*ptr] as usize;
        let v = vectors[c.state][site];
        heap.push(Candidate {
            weight: v * v,
            state: c.state,
            site,
        });
    }

    CenterAssignment {
        site_to_state,
        state_to_site,
        reassigned,
    }
}

/// Full eigensystem of one realization, energy-sorted, with center indexing.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    params: ModelParams,
    seed: u64,
    energies: Vec<f64>,
    vectors: ColumnMatrix,
    centers: CenterAssignment,
    residual_tol: f64,
}

impl SpectralDecomposition {
    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, state: usize) -> f64 {
        self.energies[state]
    }

    pub fn vector(&self, state: usize) -> &[f64] {
        self.vectors.col(state)
    }

    pub fn centers(&self) -> &CenterAssignment {
        &self.centers
    }

    pub fn residual_tol(&self) -> f64 {
        self.residual_tol
    }

    /// Energy of the state centered at `site`, the E_i labeling.
    pub fn energy_at_center(&self, site: usize) -> Option<f64> {
        self.centers.state_at(site).map(|s| self.energies[s])
    }

    /// Assemble a synthetic decomposition; test and diagnostic use.
    pub fn from_parts(
        params: ModelParams,
        seed: u64,
        energies: Vec<f64>,
        vector_list: Vec<Vec<f64>>,
        residual_tol: f64,
    ) -> Self {
        assert_eq!(energies.len(), vector_list.len());
        let n = params.box_size();
        let refs: Vec<&[f64]> = vector_list.iter().map(|v| v.as_slice()).collect();
        let centers = index_by_center(&refs);
        let mut vectors = ColumnMatrix::identity(n);
        for (c, v) in vector_list.iter().enumerate() {
            assert_eq!(v.len(), n);
            vectors.col_mut(c).copy_from_slice(v);
        }
        // Synthetic inputs may have fewer states than sites; pad columns are
        // never addressed because `energies.len()` bounds the state index.
        Self {
            params,
            seed,
            energies,
            vectors,
            centers,
            residual_tol,
        }
    }
}

/// All |Λ| eigenpairs of the realization's Hamiltonian.
///
/// Eigenvalues ascend, each vector has unit norm and satisfies
/// ‖Hψ − Eψ‖_∞ ≤ `tol`, the sign is fixed so the entry at the localization
/// center is positive, and every state is assigned a distinct center site.
pub fn diagonalize(r: &DisorderRealization, tol: f64) -> Result<SpectralDecomposition, ModelError> {
    assert!(tol > 0.0, "tol must be positive");
    let h = build_hamiltonian(r);
    let n = h.dim();
    let off = vec![1.0; n - 1];
    let (energies, mut vectors) = eigen::tridiag_eigen(h.diag(), &off, MAX_QL_SWEEPS)?;

    // Residual test per pair.
    for (k, &e) in energies.iter().enumerate() {
        let v = vectors.col(k);
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut hv = h.diag()[i] * v[i];
            if i > 0 {
                hv += v[i - 1];
            }
            if i + 1 < n {
                hv += v[i + 1];
            }
            worst = worst.max((hv - e * v[i]).abs());
        }
        if worst > tol {
            return Err(ModelError::ConvergenceFailure { index: k });
        }
    }

    let refs: Vec<&[f64]> = (0..n).map(|k| vectors.col(k)).collect();
    let centers = index_by_center(&refs);

    // Sign convention: positive entry at the assigned center.
    for k in 0..n {
        let site = centers.site_of(k);
        if vectors.col(k)[site] < 0.0 {
            for x in vectors.col_mut(k) {
                *x = -*x;
            }
        }
    }

    Ok(SpectralDecomposition {
        params: r.params,
        seed: r.seed,
        energies,
        vectors,
        centers,
        residual_tol: tol,
    })
}

/// Diagonalize with the default tolerance 1e−10 · ‖H‖_∞.
pub fn diagonalize_default(r: &DisorderRealization) -> Result<SpectralDecomposition, ModelError> {
    let h = build_hamiltonian(r);
    diagonalize(r, default_tol(&h))
}

/// Follow one state across a re-diagonalization (finite-difference steps,
/// parameter sweeps). Tries the localization-center label first and falls
/// back to maximal eigenvector overlap when the center moved or the
/// center-matched state no longer resembles the original.
pub fn track_state(
    prev: &SpectralDecomposition,
    prev_state: usize,
    next: &SpectralDecomposition,
) -> usize {
    let site = prev.centers().site_of(prev_state);
    let pv = prev.vector(prev_state);
    if let Some(cand) = next.centers().state_at(site) {
        let overlap: f64 = pv.iter().zip(next.vector(cand)).map(|(a, b)| a * b).sum();
        if overlap.abs() >= 0.5 {
            return cand;
        }
    }
    (0..next.dim())
        .max_by(|&a, &b| {
            let oa: f64 = pv.iter().zip(next.vector(a)).map(|(x, y)| x * y).sum();
            let ob: f64 = pv.iter().zip(next.vector(b)).map(|(x, y)| x * y).sum();
            oa.abs().total_cmp(&ob.abs())
        })
        .expect("nonempty spectrum")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, delta: f64) -> ModelParams {
        ModelParams::new(n, delta).unwrap()
    }

    #[test]
    fn rejects_degenerate_params() {
        assert!(ModelParams::new(1, 1.0).is_err());
        assert!(ModelParams::new(10, -0.5).is_err());
        assert!(ModelParams::new(10, f64::NAN).is_err());
        assert!(ModelParams::new(2, 0.0).is_ok());
    }

    #[test]
    fn disorder_is_deterministic_in_seed() {
        let p = params(4, 1.0);
        let a = sample_disorder(p, 7);
        let b = sample_disorder(p, 7);
        assert_eq!(a.epsilon(), b.epsilon());
        let c = sample_disorder(p, 8);
        assert_ne!(a.epsilon(), c.epsilon());
    }

    #[test]
    fn disorder_stays_in_support() {
        let p = params(1000, 0.5);
        let r = sample_disorder(p, 99);
        assert!(r.epsilon().iter().all(|e| e.abs() <= 0.5));
    }

    #[test]
    fn disorder_moments_match_uniform_law() {
        // Uniform(−Δ, Δ): mean 0, variance Δ²/3.
        let p = params(100_000, 1.0);
        let r = sample_disorder(p, 2024);
        let n = r.epsilon().len() as f64;
        let mean: f64 = r.epsilon().iter().sum::<f64>() / n;
        let var: f64 = r.epsilon().iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "sample mean {mean}");
        assert!((var - 1.0 / 3.0).abs() < 0.02, "sample variance {var}");
    }

    #[test]
    fn hamiltonian_acts_as_adjacency_plus_potential() {
        let p = params(3, 0.0);
        let mut r = sample_disorder(p, 0);
        r.epsilon = vec![0.0, 0.0, 0.0];
        let h = build_hamiltonian(&r);
        assert_eq!(h.apply(&[1.0, 0.0, 0.0]), vec![0.0, 1.0, 0.0]);

        r.epsilon = vec![0.3, -0.7, 0.9];
        let h = build_hamiltonian(&r);
        assert_eq!(h.apply(&[0.0, 1.0, 0.0]), vec![1.0, -0.7, 1.0]);
    }

    #[test]
    fn hamiltonian_is_symmetric() {
        let p = params(64, 1.0);
        let r = sample_disorder(p, 5);
        let h = build_hamiltonian(&r);
        let mut s = SeededStream::new(17);
        let psi: Vec<f64> = (0..64).map(|_| s.uniform_symmetric(1.0)).collect();
        let phi: Vec<f64> = (0..64).map(|_| s.uniform_symmetric(1.0)).collect();
        let lhs: f64 = psi.iter().zip(h.apply(&phi)).map(|(a, b)| a * b).sum();
        let rhs: f64 = h.apply(&psi).iter().zip(&phi).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12, "asymmetry {}", lhs - rhs);
    }

    #[test]
    fn clean_three_site_spectrum() {
        let p = params(3, 0.0);
        let r = sample_disorder(p, 0);
        let d = diagonalize_default(&r).unwrap();
        let want = [-(2f64.sqrt()), 0.0, 2f64.sqrt()];
        for (got, want) in d.energies().iter().zip(want.iter()) {
            assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
        }
    }

    #[test]
    fn clean_chain_matches_cosine_formula() {
        let n = 300;
        let r = sample_disorder(params(n, 0.0), 0);
        let d = diagonalize_default(&r).unwrap();
        let mut exact: Vec<f64> = (1..=n)
            .map(|k| 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos())
            .collect();
        exact.sort_by(f64::total_cmp);
        let worst = d
            .energies()
            .iter()
            .zip(exact.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "max deviation {worst}");
    }

    #[test]
    fn spectral_bound_holds() {
        let p = params(200, 1.5);
        for seed in 0..5 {
            let d = diagonalize_default(&sample_disorder(p, seed)).unwrap();
            let bound = p.spectral_bound() + 1e-9;
            assert!(d.energies().iter().all(|e| e.abs() <= bound));
        }
    }

    #[test]
    fn vectors_are_normalized_and_complete() {
        let p = params(80, 1.0);
        let d = diagonalize_default(&sample_disorder(p, 3)).unwrap();
        let n = d.dim();
        for k in 0..n {
            let norm: f64 = d.vector(k).iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        // Completeness: Σ_k |ψ_k(j)|² = 1 per site.
        for j in 0..n {
            let total: f64 = (0..n).map(|k| d.vector(k)[j].powi(2)).sum();
            assert!((total - 1.0).abs() < 1e-10, "site {j}: {total}");
        }
    }

    #[test]
    fn diagonalize_is_reproducible() {
        let p = params(120, 1.0);
        let r = sample_disorder(p, 11);
        let a = diagonalize_default(&r).unwrap();
        let b = diagonalize_default(&r).unwrap();
        for (x, y) in a.energies().iter().zip(b.energies()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn localization_center_examples() {
        let mut delta = vec![0.0; 9];
        delta[5] = 1.0;
        assert_eq!(localization_center(&delta), 5);

        let envelope: Vec<f64> = (0..21).map(|x| (-((x as f64) - 10.0).abs()).exp()).collect();
        assert_eq!(localization_center(&envelope), 10);

        let mut tie = vec![0.0; 10];
        tie[2] = std::f64::consts::FRAC_1_SQRT_2;
        tie[7] = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(localization_center(&tie), 2);
    }

    #[test]
    fn greedy_matching_resolves_collisions_by_weight() {
        // Two states peaked at site 1 with weights 0.9 and 0.6; the heavier
        // one keeps the site, the other falls back to its next-best site.
        let a = vec![0.1f64.sqrt(), 0.9f64.sqrt(), 0.0, 0.0];
        let b = vec![0.1f64.sqrt(), 0.6f64.sqrt(), 0.3f64.sqrt(), 0.0];
        let assignment = index_by_center(&[&a, &b]);
        assert_eq!(assignment.state_at(1), Some(0));
        assert_eq!(assignment.state_at(2), Some(1));
        assert_eq!(assignment.reassigned(), 1);
    }

    #[test]
    fn greedy_matching_ignores_input_order() {
        // Weak disorder forces plenty of argmax collisions. Reversing the
        // input order must assign every vector the same center site.
        let p = params(40, 0.2);
        let d = diagonalize_default(&sample_disorder(p, 21)).unwrap();
        let fwd: Vec<&[f64]> = (0..d.dim()).map(|k| d.vector(k)).collect();
        let rev: Vec<&[f64]> = fwd.iter().rev().copied().collect();
        let a = index_by_center(&fwd);
        let b = index_by_center(&rev);
        assert!(a.reassigned() > 0, "want collisions in this regime");
        for k in 0..d.dim() {
            assert_eq!(
                a.site_of(k),
                b.site_of(d.dim() - 1 - k),
                "vector {k} changed its center under input permutation"
            );
        }
    }

    #[test]
    fn strong_disorder_assignment_is_mostly_raw_argmax() {
        let p = params(50, 5.0);
        let mut agree = 0usize;
        let mut total = 0usize;
        for seed in 0..100 {
            let d = diagonalize_default(&sample_disorder(p, seed)).unwrap();
            for k in 0..d.dim() {
                let raw = localization_center(d.vector(k));
                if d.centers().site_of(k) == raw {
                    agree += 1;
                }
                total += 1;
            }
        }
        let frac = agree as f64 / total as f64;
        assert!(frac >= 0.95, "argmax agreement {frac}");
    }

    #[test]
    fn sign_convention_fixes_center_entry_positive() {
        let p = params(60, 2.0);
        let d = diagonalize_default(&sample_disorder(p, 9)).unwrap();
        for k in 0..d.dim() {
            let site = d.centers().site_of(k);
            assert!(d.vector(k)[site] > 0.0);
        }
    }

    #[test]
    fn track_state_follows_small_perturbations() {
        let p = params(60, 1.0);
        let r = sample_disorder(p, 31);
        let d = diagonalize_default(&r).unwrap();
        let r2 = r.with_epsilon_at(30, r.epsilon()[30] + 1e-7);
        let d2 = diagonalize_default(&r2).unwrap();
        for k in 0..d.dim() {
            let j = track_state(&d, k, &d2);
            let overlap: f64 = d.vector(k).iter().zip(d2.vector(j)).map(|(a, b)| a * b).sum();
            assert!(overlap.abs() > 0.999, "state {k} drifted, overlap {overlap}");
        }
    }
}
