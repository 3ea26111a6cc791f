//! Numerical knobs with their defaults.
//!
//! Every threshold that an operation consults lives here so scenario
//! configs can override them in one place. Defaults are chosen for
//! double precision at the dimensions the scenarios use (morally: exact
//! algebraic identities get 1e-12-ish budgets, spectrally conditioned
//! quantities get cond^2-scaled budgets).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Minimum pairwise eigenvalue separation, as a multiple of ||H||_2.
    pub sep_min_factor: f64,
    /// Ceiling on cond_2(P); above this the spectral representation is
    /// rejected as defective.
    pub cond_max: f64,
    /// Absolute tolerance for grouping eigenvalues into the maximal-Im
    /// subset A.
    pub eta_a: f64,
    /// Coherent-label fill gate: require |lambda|^2 <= fill_max * n_levels.
    pub fill_max: f64,
    /// Maximum polynomial degree accepted by the Hamiltonian builder.
    pub deg_max: usize,
    /// Safety margin (radians) inside the pi/4 contour-tangent cone.
    pub theta_margin: f64,
    /// Relative convergence target for node-doubling quadrature.
    pub quad_tol: f64,
    /// Maximum number of node-doubling refinements.
    pub max_refine: usize,
    /// Relative floor for |<B|A>| below which expectation values are
    /// reported as degenerate.
    pub denom_floor: f64,
    /// Cap on |Im(lambda)| * dt / hbar per renormalization checkpoint.
    pub max_log_step: f64,
    /// Interior guard levels excluded from truncation-sensitive asserts.
    pub k_guard: usize,
    /// Minimum construction-scale ratio m*omega / m'*omega'.
    pub ratio_min: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            sep_min_factor: 1e-8,
            cond_max: 1e8,
            eta_a: 1e-9,
            fill_max: 0.25,
            deg_max: 6,
            theta_margin: 0.01,
            quad_tol: 1e-10,
            max_refine: 12,
            denom_floor: 1e-12,
            max_log_step: 50.0,
            k_guard: 2,
            ratio_min: 100.0,
        }
    }
}

impl Params {
    pub fn strict() -> Self {
        Params::default()
    }
}
