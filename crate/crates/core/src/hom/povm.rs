use serde::{Deserialize, Serialize};

use super::HomError;
use crate::fock::{DensityMatrix, FockError, PhotonStatistics};

/// Joint photon-number distribution seen by three detectors,
/// indexed `(n1 * d2 + n2) * d3 + n3`.
#[derive(Debug, Clone)]
pub(crate) struct DetectorMarginal {
    dims: [usize; 3],
    probs: Vec<f64>,
}

impl DetectorMarginal {
    /// Marginal of `stats` on three modes. `None` marks a detector that sees
    /// no mode of this state (always zero photons).
    pub(crate) fn from_statistics(
        stats: &PhotonStatistics,
        detectors: [Option<usize>; 3],
    ) -> DetectorMarginal {
        let dims = detectors.map(|p| p.map_or(1, |p| stats.modes[p].dim));
        let mut probs = vec![0.0; dims.iter().product()];
        let mode_dims: Vec<usize> = stats.modes.iter().map(|m| m.dim).collect();
        let mut digits = vec![0usize; mode_dims.len()];
        for &p in &stats.probs {
            if p != 0.0 {
                let n = detectors.map(|d| d.map_or(0, |d| digits[d]));
                probs[(n[0] * dims[1] + n[1]) * dims[2] + n[2]] += p;
            }
            // Mixed-radix increment, last mode fastest.
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                if digits[k] < mode_dims[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
        DetectorMarginal { dims, probs }
    }

    /// Distribution of photon numbers summed over two independent layers.
    pub(crate) fn convolve(&self, other: &DetectorMarginal) -> DetectorMarginal {
        let dims = [0, 1, 2].map(|k| self.dims[k] + other.dims[k] - 1);
        let mut probs = vec![0.0; dims.iter().product()];
        let split = |d: [usize; 3], i: usize| [i / (d[1] * d[2]), (i / d[2]) % d[1], i % d[2]];
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let a = split(self.dims, i);
            for (j, &q) in other.probs.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                let b = split(other.dims, j);
                let n = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
                probs[(n[0] * dims[1] + n[1]) * dims[2] + n[2]] += p * q;
            }
        }
        DetectorMarginal { dims, probs }
    }

    pub(crate) fn clicks(&self, efficiencies: [f64; 3]) -> ClickProbabilities {
        let miss: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                (0..self.dims[k])
                    .map(|n| (1.0 - efficiencies[k]).powi(n as i32))
                    .collect()
            })
            .collect();
        let mut p = [0.0; 8];
        for (i, &w) in self.probs.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let n = [
                i / (self.dims[1] * self.dims[2]),
                (i / self.dims[2]) % self.dims[1],
                i % self.dims[2],
            ];
            let no = [miss[0][n[0]], miss[1][n[1]], miss[2][n[2]]];
            for (pattern, slot) in p.iter_mut().enumerate() {
                let mut v = w;
                for k in 0..3 {
                    v *= if pattern >> k & 1 == 1 { 1.0 - no[k] } else { no[k] };
                }
                *slot += v;
            }
        }
        ClickProbabilities { p }
    }
}

/// Probabilities of the eight click patterns of detectors (D1, D2, D3).
/// Pattern index: bit 0 = D1, bit 1 = D2, bit 2 = D3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickProbabilities {
    pub p: [f64; 8],
}

impl ClickProbabilities {
    pub fn pattern(&self, d1: bool, d2: bool, d3: bool) -> f64 {
        self.p[d1 as usize | (d2 as usize) << 1 | (d3 as usize) << 2]
    }

    /// All three detectors click.
    pub fn threefold(&self) -> f64 {
        self.p[7]
    }

    /// D3 clicks, any D1/D2 outcome.
    pub fn herald(&self) -> f64 {
        self.p[4..].iter().sum()
    }

    /// P(D1, D2 | D3 click) in the order (0,0), (0,1), (1,0), (1,1), where
    /// each pair is (D1, D2).
    pub fn conditional_on_herald(&self) -> Result<[f64; 4], HomError> {
        let h = self.herald();
        if !(h >= 1e-300) {
            return Err(FockError::ZeroProbability(h).into());
        }
        Ok([
            self.pattern(false, false, true) / h,
            self.pattern(false, true, true) / h,
            self.pattern(true, false, true) / h,
            self.pattern(true, true, true) / h,
        ])
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

pub(crate) fn check_efficiencies(eff: [f64; 3]) -> Result<(), HomError> {
    for e in eff {
        if !(0.0..=1.0).contains(&e) {
            return Err(FockError::InvalidParameter(format!(
                "detector efficiency must lie in [0, 1], got {e}"
            ))
            .into());
        }
    }
    Ok(())
}

/// Click-pattern probabilities of three threshold detectors on `modes`.
pub fn click_probabilities(
    rho: &DensityMatrix,
    modes: [&str; 3],
    efficiencies: [f64; 3],
) -> Result<ClickProbabilities, HomError> {
    check_efficiencies(efficiencies)?;
    let mut pos = [0; 3];
    for (k, m) in modes.iter().enumerate() {
        pos[k] = rho.mode_position(m)?;
    }
    if pos[0] == pos[1] || pos[1] == pos[2] || pos[0] == pos[2] {
        return Err(FockError::InvalidParameter("detector modes must be distinct".into()).into());
    }
    let marginal = DetectorMarginal::from_statistics(&rho.photon_statistics(), pos.map(Some));
    Ok(marginal.clicks(efficiencies))
}

/// Probability that all three threshold detectors click. With unit
/// efficiencies this is Tr[rho (1 - |0><0|)^{x3}] on the three modes.
pub fn threshold_povm_threefold(
    rho: &DensityMatrix,
    modes: [&str; 3],
    efficiencies: [f64; 3],
) -> Result<f64, HomError> {
    Ok(click_probabilities(rho, modes, efficiencies)?.threefold())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::tensor;
    use approx::assert_abs_diff_eq;

    fn fock3(n: [usize; 3]) -> DensityMatrix {
        let a = DensityMatrix::number_state("x", 4, n[0]).unwrap();
        let b = DensityMatrix::number_state("y", 4, n[1]).unwrap();
        let c = DensityMatrix::number_state("z", 4, n[2]).unwrap();
        tensor(&tensor(&a, &b).unwrap(), &c).unwrap()
    }

    #[test]
    fn fock_patterns() {
        let m = ["x", "y", "z"];
        assert_eq!(threshold_povm_threefold(&fock3([1, 1, 1]), m, [1.0; 3]).unwrap(), 1.0);
        assert_eq!(threshold_povm_threefold(&fock3([0, 1, 1]), m, [1.0; 3]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            threshold_povm_threefold(&fock3([2, 1, 1]), m, [0.5, 1.0, 1.0]).unwrap(),
            0.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn patterns_sum_to_trace() {
        let c = click_probabilities(&fock3([2, 0, 3]), ["z", "x", "y"], [0.3, 0.6, 0.9]).unwrap();
        assert_abs_diff_eq!(c.total(), 1.0, epsilon = 1e-15);
        // D1 on z (3 photons), D2 on x (2 photons), D3 on y (vacuum).
        let want = (1.0 - 0.7f64.powi(3)) * 0.4f64.powi(2);
        assert_abs_diff_eq!(c.pattern(true, false, false), want, epsilon = 1e-15);
    }

    #[test]
    fn bad_inputs() {
        let rho = fock3([1, 1, 1]);
        assert!(threshold_povm_threefold(&rho, ["x", "y", "q"], [1.0; 3]).is_err());
        assert!(threshold_povm_threefold(&rho, ["x", "x", "y"], [1.0; 3]).is_err());
        assert!(threshold_povm_threefold(&rho, ["x", "y", "z"], [1.0, 2.0, 1.0]).is_err());
    }
}
