use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{DensityMatrix, FockDim, FockError, Mode};
use crate::labels;
use crate::tolerance::Tolerances;

/// Lowering operator: `A[n-1, n] = sqrt(n)`.
pub fn annihilation(dim: FockDim) -> DMatrix<Complex64> {
    let n = dim.nmax();
    DMatrix::from_fn(n, n, |r, c| {
        if c == r + 1 {
            Complex64::new((c as f64).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

pub fn creation(dim: FockDim) -> DMatrix<Complex64> {
    annihilation(dim).adjoint()
}

pub fn number_operator(dim: FockDim) -> DMatrix<Complex64> {
    let n = dim.nmax();
    DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            Complex64::new(r as f64, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Poisson amplitudes e^(-mu/2) mu^(n/2) / sqrt(n!) for n < nmax, unnormalized.
pub fn coherent_amplitudes(mu: f64, nmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(nmax);
    let mut c = (-mu / 2.0).exp();
    for n in 0..nmax {
        if n > 0 {
            c *= (mu / n as f64).sqrt();
        }
        out.push(c);
    }
    out
}

/// P(N >= nmax) for N ~ Poisson(mu).
pub fn poisson_tail(mu: f64, nmax: usize) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    // Summing the tail directly keeps full relative precision when it is tiny.
    let mut term = (-mu).exp();
    for n in 1..=nmax {
        term *= mu / n as f64;
    }
    let mut tail = 0.0;
    let mut n = nmax;
    loop {
        tail += term;
        n += 1;
        term *= mu / n as f64;
        if term <= tail * 1e-17 || term == 0.0 {
            break;
        }
    }
    tail.min(1.0)
}

/// Pair amplitudes sqrt(1 - lambda^2) lambda^n for n < nmax, unnormalized.
pub fn tmsv_amplitudes(nbar: f64, nmax: usize) -> Vec<f64> {
    let lambda2 = nbar / (1.0 + nbar);
    let lambda = lambda2.sqrt();
    let mut out = Vec::with_capacity(nmax);
    let mut c = (1.0 - lambda2).sqrt();
    for _ in 0..nmax {
        out.push(c);
        c *= lambda;
    }
    out
}

/// A source state together with the probability mass lost to the cutoff.
#[derive(Debug, Clone)]
pub struct SourceState {
    pub rho: DensityMatrix,
    /// 1 - (norm before renormalization).
    pub leakage: f64,
}

fn check_param(name: &str, v: f64) -> Result<(), FockError> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(FockError::InvalidParameter(format!(
            "{name} must be finite and >= 0, got {v}"
        )));
    }
    Ok(())
}

fn check_leakage(leakage: f64) -> Result<(), FockError> {
    let limit = Tolerances::DEFAULT.truncation_error;
    if leakage > limit {
        return Err(FockError::Truncation { leakage, limit });
    }
    Ok(())
}

fn normalized(amps: &[f64]) -> Vec<Complex64> {
    let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    amps.iter().map(|a| Complex64::new(a / norm, 0.0)).collect()
}

/// Single-mode coherent state |sqrt(mu)> labelled `wcs`.
pub fn coherent_state(mu: f64, dim: FockDim) -> Result<SourceState, FockError> {
    check_param("mu_wcs", mu)?;
    let nmax = dim.nmax();
    let leakage = poisson_tail(mu, nmax);
    check_leakage(leakage)?;
    let amps = coherent_amplitudes(mu, nmax);
    let rho = DensityMatrix::from_amplitudes(vec![Mode::new(labels::WCS, nmax)], &normalized(&amps))?;
    Ok(SourceState { rho, leakage })
}

/// Two-mode squeezed vacuum over (`sig`, `idl`).
pub fn tmsv_state(nbar: f64, dim: FockDim) -> Result<SourceState, FockError> {
    check_param("nbar", nbar)?;
    let nmax = dim.nmax();
    let lambda2 = nbar / (1.0 + nbar);
    let leakage = lambda2.powi(nmax as i32);
    check_leakage(leakage)?;
    let pairs = normalized(&tmsv_amplitudes(nbar, nmax));
    let mut psi = vec![Complex64::new(0.0, 0.0); nmax * nmax];
    for (n, c) in pairs.iter().enumerate() {
        psi[n * nmax + n] = *c;
    }
    let modes = vec![Mode::new(labels::SIGNAL, nmax), Mode::new(labels::IDLER, nmax)];
    let rho = DensityMatrix::from_amplitudes(modes, &psi)?;
    Ok(SourceState { rho, leakage })
}

/// Both photons of each pair in one spatial mode (`sig`): sum_k c_k |2k>.
/// Used ahead of an explicit pair-separating splitter. The cutoff is
/// `2 * nmax - 1` so that `nmax - 1` pairs fit.
pub fn pair_mode_state(nbar: f64, dim: FockDim) -> Result<SourceState, FockError> {
    check_param("nbar", nbar)?;
    let nmax = dim.nmax();
    let lambda2 = nbar / (1.0 + nbar);
    let leakage = lambda2.powi(nmax as i32);
    check_leakage(leakage)?;
    let pairs = normalized(&tmsv_amplitudes(nbar, nmax));
    let d = 2 * nmax - 1;
    let mut psi = vec![Complex64::new(0.0, 0.0); d];
    for (k, c) in pairs.iter().enumerate() {
        psi[2 * k] = *c;
    }
    let rho = DensityMatrix::from_amplitudes(vec![Mode::new(labels::SIGNAL, d)], &psi)?;
    Ok(SourceState { rho, leakage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ladder_entries() {
        let a2 = annihilation(FockDim::new(2).unwrap());
        assert_eq!(a2[(0, 1)].re, 1.0);
        assert_eq!(a2[(1, 0)].re, 0.0);
        let a3 = annihilation(FockDim::new(3).unwrap());
        assert_abs_diff_eq!(a3[(1, 2)].re, 2f64.sqrt());
    }

    #[test]
    fn commutator_is_identity_below_top() {
        let d = FockDim::new(8).unwrap();
        let a = annihilation(d);
        let ad = creation(d);
        let comm = &a * &ad - &ad * &a;
        for r in 0..7 {
            for c in 0..7 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(comm[(r, c)].re, want, epsilon = 1e-14);
                assert_abs_diff_eq!(comm[(r, c)].im, 0.0);
            }
        }
        // n = a^dagger a
        assert!((&ad * &a - number_operator(d)).norm() < 1e-14);
    }

    #[test]
    fn poisson_tail_matches_complement() {
        let mu: f64 = 0.3;
        let head: f64 = (0..4)
            .map(|n| (-mu).exp() * mu.powi(n) / (1..=n).product::<i32>().max(1) as f64)
            .sum();
        assert_abs_diff_eq!(poisson_tail(mu, 4), 1.0 - head, epsilon = 1e-15);
        assert_eq!(poisson_tail(0.0, 3), 0.0);
    }

    #[test]
    fn coherent_vacuum() {
        let s = coherent_state(0.0, FockDim::ORACLE).unwrap();
        assert_eq!(s.rho.population(&[0]).unwrap(), 1.0);
        assert_eq!(s.leakage, 0.0);
    }

    #[test]
    fn truncation_error_raised() {
        let err = coherent_state(2.0, FockDim::new(3).unwrap()).unwrap_err();
        assert!(matches!(err, FockError::Truncation { .. }));
        let err = tmsv_state(1.0, FockDim::new(3).unwrap()).unwrap_err();
        assert!(matches!(err, FockError::Truncation { .. }));
        assert!(coherent_state(-1.0, FockDim::ORACLE).is_err());
    }

    #[test]
    fn pair_mode_has_even_support() {
        let s = pair_mode_state(0.01, FockDim::new(4).unwrap()).unwrap();
        assert_eq!(s.rho.dim(), 7);
        for n in [1, 3, 5] {
            assert_eq!(s.rho.population(&[n]).unwrap(), 0.0);
        }
        assert_abs_diff_eq!(s.rho.trace(), 1.0, epsilon = 1e-14);
    }
}
