//! Eigenvalue combinations f = Σ c_k E_{i_k} and their probabilistic
//! estimates: Feynman–Hellmann gradients, decay profiles and floors, level
//! statistics, sign-change scans, and trimmed fractional moments.

mod decay;
mod levels;
mod moments;
mod sweep;

pub use decay::{cluster_decomposition, decay_profile, estimate_n_star, DecayProfile};
pub(crate) use levels::window_counts;
pub use levels::{
    count_in_window, gamma_gap_probability, gradient_floor_probability, level_statistics,
    reference_floor, FloorPoint, FloorSpec, GammaGapPoint, LevelPoint,
};
pub use moments::{
    fractional_moment, q_bound, theorem_bound, trimmed_mean, trimmed_power_moment, MomentReport,
};
pub use sweep::{
    admissible_plus_range, default_sweep_grid, plus_coordinates, sign_change_scan,
    sweep_grid_with_span, SignChangeEvent,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lyapunov::LyapunovError;
use crate::model::{ModelError, SpectralDecomposition};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("no state centered at site {0}")]
    MissingCenter(usize),
    #[error("ensemble contains no spectra")]
    EmptyEnsemble,
    #[error("sweep grid leaves the admissible potential range")]
    GridOutOfRange,
    #[error("every sample is exactly zero")]
    AllSamplesZero,
    #[error("interval length {0} does not fit the spectrum")]
    InvalidInterval(f64),
    #[error("site {site} and its neighbor must lie inside a box of {box_size} sites")]
    SiteOutsideBox { site: usize, box_size: usize },
    #[error("invalid combination: {0}")]
    InvalidCombination(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}

/// The integer combination f = Σ_k c_k E_{i_k}, defined by coefficients and
/// localization-center sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(i64, usize)>", into = "Vec<(i64, usize)>")]
pub struct CombinationSpec {
    terms: Vec<(i64, usize)>,
}

impl CombinationSpec {
    /// `terms` are (coefficient, center site) pairs. Coefficients are
    /// nonzero integers and center sites are distinct.
    pub fn new(terms: Vec<(i64, usize)>) -> Result<Self, EstimateError> {
        if terms.is_empty() {
            return Err(EstimateError::InvalidCombination(
                "a combination needs at least one term".into(),
            ));
        }
        for &(c, _) in &terms {
            if c == 0 {
                return Err(EstimateError::InvalidCombination(
                    "coefficients must be nonzero".into(),
                ));
            }
        }
        let mut sites: Vec<usize> = terms.iter().map(|&(_, i)| i).collect();
        sites.sort_unstable();
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(EstimateError::InvalidCombination(
                "center sites must be distinct".into(),
            ));
        }
        Ok(Self { terms })
    }

    pub fn single(center: usize) -> Self {
        Self {
            terms: vec![(1, center)],
        }
    }

    pub fn terms(&self) -> &[(i64, usize)] {
        &self.terms
    }

    pub fn order(&self) -> usize {
        self.terms.len()
    }

    pub fn centers(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.iter().map(|&(_, i)| i)
    }

    /// Σ_k |c_k|, the coefficient mass entering the Q bound.
    pub fn abs_coeff_sum(&self) -> i64 {
        self.terms.iter().map(|&(c, _)| c.abs()).sum()
    }

    pub fn rightmost_center(&self) -> usize {
        self.centers().max().expect("nonempty")
    }
}

impl TryFrom<Vec<(i64, usize)>> for CombinationSpec {
    type Error = String;
    fn try_from(terms: Vec<(i64, usize)>) -> Result<Self, String> {
        CombinationSpec::new(terms).map_err(|e| e.to_string())
    }
}

impl From<CombinationSpec> for Vec<(i64, usize)> {
    fn from(spec: CombinationSpec) -> Self {
        spec.terms
    }
}

/// f = Σ_k c_k E_{i_k} under the center indexing of `d`.
pub fn eval_combination(
    spec: &CombinationSpec,
    d: &SpectralDecomposition,
) -> Result<f64, EstimateError> {
    let mut f = 0.0;
    for &(c, site) in spec.terms() {
        let e = d
            .energy_at_center(site)
            .ok_or(EstimateError::MissingCenter(site))?;
        f += c as f64 * e;
    }
    Ok(f)
}

/// Feynman–Hellmann gradient of f: g(j) = ∂f/∂ε_j = Σ_k c_k |ψ_{i_k}(j)|².
pub fn fh_gradient(
    spec: &CombinationSpec,
    d: &SpectralDecomposition,
) -> Result<Vec<f64>, EstimateError> {
    let n = d.dim();
    let mut g = vec![0.0; n];
    for &(c, site) in spec.terms() {
        let state = d
            .centers()
            .state_at(site)
            .ok_or(EstimateError::MissingCenter(site))?;
        let coeff = c as f64;
        for (gj, &v) in g.iter_mut().zip(d.vector(state)) {
            *gj += coeff * v * v;
        }
    }
    Ok(g)
}

/// The paired gradient ∂f/∂ε_j + ∂f/∂ε_{j+1}
/// = Σ_k c_k (|ψ_{i_k}(j)|² + |ψ_{i_k}(j+1)|²); equals √2 · ∂f/∂ε_j⁺ in the
/// rotated coordinates ε_j± = (ε_j ± ε_{j+1})/√2.
pub fn paired_gradient(
    spec: &CombinationSpec,
    d: &SpectralDecomposition,
    j: usize,
) -> Result<f64, EstimateError> {
    if j + 1 >= d.dim() {
        return Err(EstimateError::SiteOutsideBox {
            site: j,
            box_size: d.dim(),
        });
    }
    let mut sum = 0.0;
    for &(c, site) in spec.terms() {
        let state = d
            .centers()
            .state_at(site)
            .ok_or(EstimateError::MissingCenter(site))?;
        let v = d.vector(state);
        sum += c as f64 * (v[j] * v[j] + v[j + 1] * v[j + 1]);
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{diagonalize_default, sample_disorder, ModelParams};

    fn decomposition(n: usize, delta: f64, seed: u64) -> SpectralDecomposition {
        let p = ModelParams::new(n, delta).unwrap();
        diagonalize_default(&sample_disorder(p, seed)).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(CombinationSpec::new(vec![]).is_err());
        assert!(CombinationSpec::new(vec![(0, 3)]).is_err());
        assert!(CombinationSpec::new(vec![(1, 3), (2, 3)]).is_err());
        assert!(CombinationSpec::new(vec![(1, 3), (-2, 5)]).is_ok());
    }

    #[test]
    fn single_term_is_the_energy_itself() {
        let d = decomposition(60, 1.0, 4);
        let site = d.centers().site_of(17);
        let spec = CombinationSpec::single(site);
        let f = eval_combination(&spec, &d).unwrap();
        assert_eq!(f, d.energy(17));
    }

    #[test]
    fn cancelling_terms_give_zero() {
        // Synthetic two-state decomposition where both terms address the
        // same energy through different centers.
        let p = ModelParams::new(4, 1.0).unwrap();
        let vecs = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
        ];
        let d = SpectralDecomposition::from_parts(p, 0, vec![0.7, 0.7], vecs, 1e-10);
        let spec = CombinationSpec::new(vec![(1, 0), (-1, 1)]).unwrap();
        assert_eq!(eval_combination(&spec, &d).unwrap(), 0.0);
    }

    #[test]
    fn missing_center_is_reported() {
        let p = ModelParams::new(4, 1.0).unwrap();
        let d = SpectralDecomposition::from_parts(
            p,
            0,
            vec![0.5],
            vec![vec![1.0, 0.0, 0.0, 0.0]],
            1e-10,
        );
        let spec = CombinationSpec::single(2);
        assert!(matches!(
            eval_combination(&spec, &d),
            Err(EstimateError::MissingCenter(2))
        ));
    }

    #[test]
    fn combination_respects_spectral_bound() {
        let d = decomposition(100, 1.0, 11);
        let spec = CombinationSpec::new(vec![(1, 30), (-2, 50), (1, 70)]).unwrap();
        let f = eval_combination(&spec, &d).unwrap();
        let q = (2.0 + 1.0) * spec.abs_coeff_sum() as f64;
        assert!(f.abs() <= q, "|f| = {} > Q = {q}", f.abs());
    }

    #[test]
    fn gradient_trace_matches_coefficient_sum() {
        let d = decomposition(80, 1.0, 5);
        let spec = CombinationSpec::new(vec![(1, 20), (-1, 40)]).unwrap();
        let g = fh_gradient(&spec, &d).unwrap();
        let trace: f64 = g.iter().sum();
        assert!(trace.abs() < 1e-10, "trace {trace}");

        let single = CombinationSpec::single(25);
        let g = fh_gradient(&single, &d).unwrap();
        let trace: f64 = g.iter().sum();
        assert!((trace - 1.0).abs() < 1e-10, "trace {trace}");
    }

    #[test]
    fn paired_gradient_is_sum_of_adjacent_gradients() {
        let d = decomposition(80, 1.0, 6);
        let spec = CombinationSpec::new(vec![(2, 10), (-1, 60)]).unwrap();
        let g = fh_gradient(&spec, &d).unwrap();
        for j in [0usize, 17, 40, 78] {
            let pg = paired_gradient(&spec, &d, j).unwrap();
            assert!(
                (pg - (g[j] + g[j + 1])).abs() < 1e-15,
                "site {j}: {pg} vs {}",
                g[j] + g[j + 1]
            );
        }
    }

    #[test]
    fn single_term_paired_gradient_in_range() {
        let d = decomposition(60, 1.0, 7);
        let spec = CombinationSpec::single(d.centers().site_of(30));
        for j in 0..59 {
            let pg = paired_gradient(&spec, &d, j).unwrap();
            assert!(pg > 0.0 && pg <= 2.0, "site {j}: {pg}");
        }
    }

    #[test]
    fn fh_matches_central_finite_differences() {
        // Oracle: re-diagonalize at ε_j ± h and difference the
        // center-indexed combination values.
        let p = ModelParams::new(40, 1.0).unwrap();
        let spec = CombinationSpec::new(vec![(1, 10), (-2, 20), (1, 30)]).unwrap();
        let h = 1e-5;
        for seed in [3u64, 14] {
            let r = sample_disorder(p, seed);
            let d = diagonalize_default(&r).unwrap();
            let g = fh_gradient(&spec, &d).unwrap();
            let mut worst = 0.0f64;
            for j in 0..40 {
                let plus = diagonalize_default(&r.with_epsilon_at(j, r.epsilon()[j] + h)).unwrap();
                let minus = diagonalize_default(&r.with_epsilon_at(j, r.epsilon()[j] - h)).unwrap();
                let fd = (eval_combination(&spec, &plus).unwrap()
                    - eval_combination(&spec, &minus).unwrap())
                    / (2.0 * h);
                let scale = g[j].abs().max(1e-3);
                worst = worst.max((g[j] - fd).abs() / scale);
            }
            assert!(worst < 1e-5, "seed {seed}: max rel error {worst}");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn eval_is_linear_in_coefficients(seed in 0u64..500, k in 1i64..5) {
                let d = decomposition(50, 1.0, seed);
                let spec = CombinationSpec::new(vec![(1, 10), (-1, 35)]).unwrap();
                let scaled = CombinationSpec::new(vec![(k, 10), (-k, 35)]).unwrap();
                let f = eval_combination(&spec, &d).unwrap();
                let fk = eval_combination(&scaled, &d).unwrap();
                prop_assert!((fk - k as f64 * f).abs() < 1e-12);
            }

            #[test]
            fn eval_is_additive_over_disjoint_specs(seed in 0u64..500) {
                let d = decomposition(50, 1.0, seed);
                let a = CombinationSpec::new(vec![(1, 5), (2, 25)]).unwrap();
                let b = CombinationSpec::new(vec![(-3, 40)]).unwrap();
                let joint = CombinationSpec::new(vec![(1, 5), (2, 25), (-3, 40)]).unwrap();
                let sum = eval_combination(&a, &d).unwrap() + eval_combination(&b, &d).unwrap();
                let f = eval_combination(&joint, &d).unwrap();
                prop_assert!((sum - f).abs() < 1e-12);
            }
        }
    }
}
