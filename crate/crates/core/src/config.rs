use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by the dispatch, partitioning and welfare code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// A limited branch binds when `|flow| >= limit - tol_binding * max(limit, 1)`.
    pub tol_binding: f64,
    pub tol_dual: f64,
    /// Generators above this output (MW) count as running.
    pub tol_running: f64,
    /// PTDF coefficients with magnitude at or below this are treated as zero.
    pub tol_sign: f64,
    /// Minimum improvement of the average total cost (currency/h) for a split to be accepted.
    pub tol_welfare: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_binding: 1e-6,
            tol_dual: 1e-6,
            tol_running: 1e-6,
            tol_sign: 1e-9,
            tol_welfare: 1e-6,
        }
    }
}
