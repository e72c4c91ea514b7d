//! Eigenfunction decay envelopes, the lower-bound onset n*, and the cluster
//! decomposition of localization centers.

use serde::{Deserialize, Serialize};

use crate::model::SpectralDecomposition;

/// Two-site amplitude envelope of one eigenfunction against the reference
/// exponential e^{−(γ+ε)n}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub center: usize,
    /// envelope[n] = max over available sides of
    /// (|ψ(n)|² + |ψ(n+1)|²)^{1/2} at distance n from the center.
    pub envelope: Vec<f64>,
    pub gamma_ref: f64,
    pub epsilon_slack: f64,
    /// Least n such that the envelope clears the reference bound for every
    /// sampled m ≥ n; `None` when the bound is still violated at the edge.
    pub n_star: Option<usize>,
}

impl DecayProfile {
    pub fn max_distance(&self) -> usize {
        self.envelope.len() - 1
    }

    /// Reference lower bound e^{−(γ+ε)n} at distance n.
    pub fn bound(&self, n: usize) -> f64 {
        (-(self.gamma_ref + self.epsilon_slack) * n as f64).exp()
    }
}

/// Envelope of `state`'s eigenfunction around its localization center,
/// two-sided distances folded by max.
pub fn decay_profile(
    d: &SpectralDecomposition,
    state: usize,
    gamma_ref: f64,
    epsilon_slack: f64,
) -> DecayProfile {
    assert!(epsilon_slack > 0.0, "slack must be positive");
    let v = d.vector(state);
    let n_sites = v.len();
    let center = d.centers().site_of(state);

    let pair = |a: usize, b: usize| (v[a] * v[a] + v[b] * v[b]).sqrt();
    let mut envelope = Vec::new();
    for n in 0..n_sites {
        let right = (center + n + 1 < n_sites).then(|| pair(center + n, center + n + 1));
        let left = (center > n).then(|| pair(center - n, center - n - 1));
        let e = match (left, right) {
            (Some(l), Some(r)) => l.max(r),
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => break,
        };
        // Guard against denormal underflow so the envelope stays positive.
        envelope.push(e.max(1e-300));
    }

    let mut profile = DecayProfile {
        center,
        envelope,
        gamma_ref,
        epsilon_slack,
        n_star: None,
    };
    profile.n_star = estimate_n_star(&profile);
    profile
}

/// Least n after which envelope(m) ≥ e^{−(γ+ε)m} for all sampled m ≥ n;
/// `None` if the condition still fails at the last sampled distance.
pub fn estimate_n_star(profile: &DecayProfile) -> Option<usize> {
    let last = profile.envelope.len().checked_sub(1)?;
    let mut worst_violation = None;
    for (n, &env) in profile.envelope.iter().enumerate() {
        if env < profile.bound(n) {
            worst_violation = Some(n);
        }
    }
    match worst_violation {
        None => Some(0),
        Some(v) if v == last => None,
        Some(v) => Some(v + 1),
    }
}

/// Split center sites into maximal groups where consecutive centers are
/// closer than the gap threshold γ_min · n* / η. Clusters come back sorted
/// and cover every input center.
pub fn cluster_decomposition(
    centers: &[usize],
    n_star: usize,
    gamma_min: f64,
    eta: f64,
) -> Vec<Vec<usize>> {
    assert!(gamma_min > 0.0, "gamma_min must be positive");
    assert!(eta > 0.0, "eta must be positive");
    if centers.is_empty() {
        return Vec::new();
    }
    let threshold = gamma_min * n_star as f64 / eta;

    let mut sorted = centers.to_vec();
    sorted.sort_unstable();

    let mut clusters = vec![vec![sorted[0]]];
    for w in sorted.windows(2) {
        let gap = (w[1] - w[0]) as f64;
        if gap < threshold {
            clusters.last_mut().unwrap().push(w[1]);
        } else {
            clusters.push(vec![w[1]]);
        }
    }
    clusters
}
