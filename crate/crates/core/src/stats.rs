//! Iteration statistics returned by the solvers.

use serde::Serialize;

/// Outcome of one solver run. Non-convergence is reported through
/// `converged`, never as an error; the best iterate is always returned.
#[derive(Debug, Clone, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub converged: bool,
    /// Final fixed-point residual (PSOR) or primal residual (splitting).
    pub residual: f64,
    /// Final dual residual for the splitting solver.
    pub dual_residual: Option<f64>,
    /// Discrete energy of the returned iterate, in the `1/2 |grad v|^2`
    /// convention.
    pub energy: f64,
    /// Energy after each sweep (PSOR only); nonincreasing.
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
    /// Per-iteration (primal, dual) residuals (splitting only).
    #[serde(skip)]
    pub residual_trace: Vec<(f64, f64)>,
    /// Total inner conjugate-gradient iterations (splitting only).
    pub inner_iterations: usize,
}

impl SolveStats {
    pub fn new() -> Self {
        SolveStats {
            iterations: 0,
            converged: false,
            residual: f64::INFINITY,
            dual_residual: None,
            energy: f64::NAN,
            energy_trace: Vec::new(),
            residual_trace: Vec::new(),
            inner_iterations: 0,
        }
    }
}

impl Default for SolveStats {
    fn default() -> Self {
        Self::new()
    }
}
