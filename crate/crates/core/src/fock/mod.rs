//! Truncated Fock-space linear algebra.
//!
//! Every mode carries its own cutoff. Builders start from a [`FockDim`] but
//! number-conserving maps (beam splitters) enlarge their output modes so
//! that no amplitude is discarded.

mod density;
mod states;

pub use density::{
    herald_click, partial_trace, tensor, DensityMatrix, LocalOp, Mode, PhotonStatistics,
};
pub use states::{
    annihilation, coherent_amplitudes, coherent_state, creation, number_operator,
    pair_mode_state, poisson_tail, tmsv_amplitudes, tmsv_state, SourceState,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tolerance::Tolerances;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("Fock cutoff must be at least 2, got {0}")]
    InvalidDim(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("truncation leakage {leakage:e} exceeds limit {limit:e}")]
    Truncation { leakage: f64, limit: f64 },
    #[error("mode label {0:?} appears in both operands")]
    ModeCollision(String),
    #[error("unknown mode {0:?}")]
    UnknownMode(String),
    #[error("click probability {0:e} too small to renormalize")]
    ZeroProbability(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("state invariant violated: {0}")]
    Invariant(String),
}

/// Per-mode Fock cutoff: basis states |0> .. |nmax-1>.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockDim(usize);

impl FockDim {
    /// Cutoff used for production sweeps.
    pub const PRODUCTION: FockDim = FockDim(8);
    /// Cutoff used for brute-force cross-checks.
    pub const ORACLE: FockDim = FockDim(4);

    pub fn new(nmax: usize) -> Result<Self, FockError> {
        if nmax < 2 {
            return Err(FockError::InvalidDim(nmax));
        }
        Ok(FockDim(nmax))
    }

    pub fn nmax(self) -> usize {
        self.0
    }
}

impl Default for FockDim {
    fn default() -> Self {
        Self::PRODUCTION
    }
}

impl TryFrom<usize> for FockDim {
    type Error = FockError;
    fn try_from(value: usize) -> Result<Self, Self::Error> {
        FockDim::new(value)
    }
}

impl From<FockDim> for usize {
    fn from(value: FockDim) -> Self {
        value.0
    }
}

/// Emission parameters of the two sources, both as mean photon (pair)
/// numbers per coincidence window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Mean photon number of the coherent state, |alpha|^2.
    pub mu_wcs: f64,
    /// Mean pair number of the SPDC source.
    pub nbar: f64,
    #[serde(default)]
    pub dim: FockDim,
}

impl SourceParams {
    pub fn new(mu_wcs: f64, nbar: f64, dim: FockDim) -> Result<Self, FockError> {
        let p = SourceParams { mu_wcs, nbar, dim };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FockError> {
        if !(self.mu_wcs.is_finite() && self.mu_wcs >= 0.0) {
            return Err(FockError::InvalidParameter(format!(
                "mu_wcs must be finite and >= 0, got {}",
                self.mu_wcs
            )));
        }
        if !(self.nbar.is_finite() && self.nbar >= 0.0) {
            return Err(FockError::InvalidParameter(format!(
                "nbar must be finite and >= 0, got {}",
                self.nbar
            )));
        }
        FockDim::new(self.dim.0)?;
        Ok(())
    }

    /// Largest probability mass either source puts above the cutoff.
    pub fn truncation_leakage(&self) -> f64 {
        let nmax = self.dim.nmax();
        let wcs = poisson_tail(self.mu_wcs, nmax);
        let lambda2 = self.nbar / (1.0 + self.nbar);
        let hsps = lambda2.powi(nmax as i32);
        wcs.max(hsps)
    }

    /// Checks that the cutoff is adequate at `tol.truncation_adequacy`.
    pub fn check_truncation(&self, tol: &Tolerances) -> Result<(), FockError> {
        let leakage = self.truncation_leakage();
        if leakage >= tol.truncation_adequacy {
            return Err(FockError::Truncation {
                leakage,
                limit: tol.truncation_adequacy,
            });
        }
        Ok(())
    }
}
