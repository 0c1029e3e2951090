//! Numerical tolerances shared by the state checks.

use serde::{Deserialize, Serialize};

/// Tolerance record for density-matrix validation and truncation checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Max absolute elementwise deviation from Hermiticity.
    pub hermiticity: f64,
    /// Allowed |trace - 1| after a normalizing operation.
    pub trace: f64,
    /// Smallest admissible eigenvalue (negative: slack for round-off).
    pub psd_floor: f64,
    /// Probability mass above the cutoff at which state builders fail.
    pub truncation_error: f64,
    /// Probability mass above the cutoff accepted for production parameters.
    pub truncation_adequacy: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        hermiticity: 1e-12,
        trace: 1e-10,
        psd_floor: -1e-10,
        truncation_error: 1e-6,
        truncation_adequacy: 1e-8,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
