//! Monte Carlo spectral laboratory for the one-dimensional Anderson model.
//!
//! The crate builds disorder realizations of the tight-binding chain
//!
//! ```text
//! (Hψ)(x) = ψ(x−1) + ψ(x+1) + ε_x ψ(x),   ε_x ~ Uniform[−Δ, Δ],
//! ```
//!
//! diagonalizes finite boxes completely, and measures the probabilistic
//! structure of eigenvalue combinations f = Σ c_k E_{i_k} indexed by
//! localization centers: eigenfunction decay floors, Feynman–Hellmann
//! gradients and their small-value probabilities, Wegner/Minami level
//! statistics, trimmed inverse fractional moments ⟨|f|⁻ˢ⟩_δ, and the
//! behavior of the self-overlap correction under renormalization of a
//! single mode.
//!
//! Modules:
//! - [`model`] — disorder, Hamiltonian, full diagonalization, center indexing
//! - [`lyapunov`] — transfer-matrix γ(E), density of states, Thouless cross-check
//! - [`estimates`] — combinations, gradients, decay profiles, level statistics,
//!   sign-change scans, fractional moments
//! - [`renorm`] — self-overlap corrections and perturbative derivatives
//! - [`ensemble`] — deterministic parallel experiment runner, reports, CLI glue

pub mod eigen;
pub mod ensemble;
pub mod estimates;
pub mod lyapunov;
pub mod model;
pub mod renorm;
pub mod rng;
