use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::HomError;
use crate::fock::{DensityMatrix, FockDim, FockError, LocalOp};

/// Two-mode beam splitter S = exp(i theta (a^dag b + a b^dag)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitter {
    pub theta: f64,
    pub mode_a: String,
    pub mode_b: String,
}

impl BeamSplitter {
    pub fn new(theta: f64, mode_a: impl Into<String>, mode_b: impl Into<String>) -> Self {
        BeamSplitter {
            theta,
            mode_a: mode_a.into(),
            mode_b: mode_b.into(),
        }
    }

    /// theta = pi/4.
    pub fn balanced(mode_a: impl Into<String>, mode_b: impl Into<String>) -> Self {
        Self::new(std::f64::consts::FRAC_PI_4, mode_a, mode_b)
    }

    fn validate(&self) -> Result<(), HomError> {
        if !self.theta.is_finite() {
            return Err(FockError::InvalidParameter(format!("theta = {}", self.theta)).into());
        }
        if self.mode_a == self.mode_b {
            return Err(FockError::InvalidParameter(format!(
                "beam splitter needs two distinct modes, got {:?} twice",
                self.mode_a
            ))
            .into());
        }
        Ok(())
    }
}

/// exp(i theta T) for the generator restricted to states |k, N-k> with
/// `k` in `lo..=hi`. Entries are indexed relative to `lo`.
///
/// On the basis |k, N-k> the generator is tridiagonal with off-diagonal
/// sqrt((k+1)(N-k)), so each block is exponentiated through its
/// eigendecomposition.
fn block_exponential(theta: f64, total: usize, lo: usize, hi: usize) -> DMatrix<Complex64> {
    let n = hi - lo + 1;
    let mut t = DMatrix::<f64>::zeros(n, n);
    for k in lo..hi {
        let v = (((k + 1) * (total - k)) as f64).sqrt();
        t[(k + 1 - lo, k - lo)] = v;
        t[(k - lo, k + 1 - lo)] = v;
    }
    let eig = SymmetricEigen::try_new(t, f64::EPSILON, 100_000)
        .expect("tridiagonal eigensolver converges");
    let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::from_polar(1.0, theta * l)));
    &v * phases * v.transpose()
}

/// S on two modes of cutoff `dim` each, in the basis index `n_a * dim + n_b`.
///
/// The generator conserves total photon number, so S is assembled block by
/// block. Blocks with N < dim are exact; higher blocks are the exponential
/// of the truncated generator, which keeps the matrix unitary.
pub fn bs_unitary(bs: &BeamSplitter, dim: FockDim) -> Result<DMatrix<Complex64>, HomError> {
    bs.validate()?;
    let d = dim.nmax();
    let mut s = DMatrix::<Complex64>::zeros(d * d, d * d);
    for total in 0..=2 * (d - 1) {
        let lo = total.saturating_sub(d - 1);
        let hi = total.min(d - 1);
        let block = block_exponential(bs.theta, total, lo, hi);
        for i in lo..=hi {
            for j in lo..=hi {
                s[(i * d + (total - i), j * d + (total - j))] = block[(i - lo, j - lo)];
            }
        }
    }
    let err = unitarity_error(&s);
    if err > 1e-10 {
        return Err(HomError::Numerical(format!(
            "beam-splitter unitarity error {err:e}"
        )));
    }
    Ok(s)
}

/// max |S S^dag - 1|
pub fn unitarity_error(s: &DMatrix<Complex64>) -> f64 {
    let p = s * s.adjoint();
    let mut worst: f64 = 0.0;
    for r in 0..p.nrows() {
        for c in 0..p.ncols() {
            let want = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((p[(r, c)] - Complex64::new(want, 0.0)).norm());
        }
    }
    worst
}

/// S^dag mapping cutoffs (d_a, d_b) to (d_a + d_b - 1) on both outputs.
///
/// Every input photon-number block is mapped onto its complete output block,
/// so nothing is truncated.
pub fn bs_conjugation_op(theta: f64, d_a: usize, d_b: usize) -> Result<LocalOp, FockError> {
    let d_out = d_a + d_b - 1;
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); d_out * d_out];
    for total in 0..d_out {
        // S^dag = conj(S) because the generator is real symmetric.
        let block = block_exponential(theta, total, 0, total).map(|z| z.conj());
        let in_lo = total.saturating_sub(d_b - 1);
        let in_hi = total.min(d_a - 1);
        for o in 0..=total {
            let row = &mut rows[o * d_out + (total - o)];
            for k in in_lo..=in_hi {
                let v = block[(o, k)];
                if v != Complex64::new(0.0, 0.0) {
                    row.push((k * d_b + (total - k), v));
                }
            }
        }
    }
    LocalOp::new(vec![d_a, d_b], vec![d_out, d_out], rows)
}

/// rho -> S^dag rho S on the two named modes. The output modes are enlarged
/// to hold every photon present at the input.
pub fn apply_bs(rho: &DensityMatrix, bs: &BeamSplitter) -> Result<DensityMatrix, HomError> {
    let op = conjugation_for(rho, bs)?;
    Ok(rho.transform(&[&bs.mode_a, &bs.mode_b], &op)?)
}

pub(crate) fn conjugation_for(rho: &DensityMatrix, bs: &BeamSplitter) -> Result<LocalOp, HomError> {
    bs.validate()?;
    let a = rho.mode_position(&bs.mode_a)?;
    let b = rho.mode_position(&bs.mode_b)?;
    let modes = rho.modes();
    Ok(bs_conjugation_op(bs.theta, modes[a].dim, modes[b].dim)?)
}
