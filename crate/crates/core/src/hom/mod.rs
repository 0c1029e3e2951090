//! Beam-splitter circuit, threshold detection and HOM visibility.
//!
//! The circuit: a weak coherent state on `wcs` and the signal arm of a pair
//! source on `sig` meet at a balanced splitter; D1 and D2 watch the two
//! outputs and D3 watches the idler. The distinguishable reference places
//! the two inputs in orthogonal internal modes ("layers") that detectors
//! cannot tell apart.

mod povm;
mod splitter;

pub use povm::{click_probabilities, threshold_povm_threefold, ClickProbabilities};
pub use splitter::{apply_bs, bs_conjugation_op, bs_unitary, unitarity_error, BeamSplitter};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{
    coherent_state, pair_mode_state, poisson_tail, tensor, tmsv_state, DensityMatrix, FockDim,
    FockError, SourceParams,
};
use crate::labels::{IDLER, SIGNAL, WCS};
use povm::{check_efficiencies, DetectorMarginal};
use splitter::conjugation_for;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("distinguishable coincidence probability {n_dis:e} is too small for a visibility")]
    DegenerateRegime { n_dis: f64 },
    #[error("invalid axis: {0}")]
    InvalidAxis(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// How the idler reaches the heralding detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeraldArm {
    /// Signal and idler emerge in separate modes.
    #[default]
    Ideal,
    /// Both photons of a pair share one mode and are split by a balanced
    /// splitter before the idler detector.
    SeparatingSplitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    #[serde(default)]
    pub herald_arm: HeraldArm,
    /// Efficiencies of D1 (wcs output port), D2 (sig output port), D3 (herald).
    pub efficiencies: [f64; 3],
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            herald_arm: HeraldArm::Ideal,
            efficiencies: [1.0; 3],
        }
    }
}

const DETECTOR_MODES: [&str; 3] = [WCS, SIGNAL, IDLER];

fn interference_bs() -> BeamSplitter {
    BeamSplitter::balanced(WCS, SIGNAL)
}

/// (sig, idl) state of the pair source for the chosen herald arm.
fn pair_source(nbar: f64, dim: FockDim, arm: HeraldArm) -> Result<DensityMatrix, HomError> {
    match arm {
        HeraldArm::Ideal => Ok(tmsv_state(nbar, dim)?.rho),
        HeraldArm::SeparatingSplitter => {
            let pair = pair_mode_state(nbar, dim)?.rho;
            let joint = tensor(&pair, &DensityMatrix::vacuum(IDLER, 1)?)?;
            apply_bs(&joint, &BeamSplitter::balanced(SIGNAL, IDLER))
        }
    }
}

/// Photon-number marginal on the three detectors after the interference
/// splitter. Modes missing from `rho` are vacuum for that layer.
fn detector_marginal(rho: &DensityMatrix) -> Result<DetectorMarginal, HomError> {
    let bs = interference_bs();
    let op = conjugation_for(rho, &bs)?;
    let stats = rho.transformed_statistics(&[WCS, SIGNAL], &op)?;
    let positions = DETECTOR_MODES.map(|m| stats.modes.iter().position(|x| x.label == m));
    Ok(DetectorMarginal::from_statistics(&stats, positions))
}

/// Full click-pattern distribution with both photons in the same internal mode.
pub fn clicks_indistinguishable(
    p: &SourceParams,
    opts: &ModelOptions,
) -> Result<ClickProbabilities, HomError> {
    p.validate()?;
    check_efficiencies(opts.efficiencies)?;
    let wcs = coherent_state(p.mu_wcs, p.dim)?.rho;
    let rho = tensor(&wcs, &pair_source(p.nbar, p.dim, opts.herald_arm)?)?;
    Ok(detector_marginal(&rho)?.clicks(opts.efficiencies))
}

/// Full click-pattern distribution with the two inputs in orthogonal layers.
///
/// Layer A carries the coherent state with vacuum on `sig`; layer B carries
/// the pair source with vacuum on `wcs`. Each layer passes its own copy of
/// the splitter and a detector clicks on photons from either layer. The
/// layers are independent, so the detected photon numbers add.
pub fn clicks_distinguishable(
    p: &SourceParams,
    opts: &ModelOptions,
) -> Result<ClickProbabilities, HomError> {
    p.validate()?;
    check_efficiencies(opts.efficiencies)?;
    let layer_a = tensor(
        &coherent_state(p.mu_wcs, p.dim)?.rho,
        &DensityMatrix::vacuum(SIGNAL, 1)?,
    )?;
    let layer_b = tensor(
        &DensityMatrix::vacuum(WCS, 1)?,
        &pair_source(p.nbar, p.dim, opts.herald_arm)?,
    )?;
    let joint = detector_marginal(&layer_a)?.convolve(&detector_marginal(&layer_b)?);
    Ok(joint.clicks(opts.efficiencies))
}

/// Click patterns when each state in `layers` occupies its own internal
/// mode and the detectors respond to the total photon number across layers.
/// A detector mode absent from a layer is vacuum in that layer.
pub fn layered_clicks(
    layers: &[DensityMatrix],
    detectors: [&str; 3],
    efficiencies: [f64; 3],
) -> Result<ClickProbabilities, HomError> {
    check_efficiencies(efficiencies)?;
    let mut joint: Option<DetectorMarginal> = None;
    for rho in layers {
        let stats = rho.photon_statistics();
        let positions = detectors.map(|m| stats.modes.iter().position(|x| x.label == m));
        let m = DetectorMarginal::from_statistics(&stats, positions);
        joint = Some(match joint {
            None => m,
            Some(j) => j.convolve(&m),
        });
    }
    let joint = joint.ok_or_else(|| FockError::InvalidParameter("no layers given".into()))?;
    Ok(joint.clicks(efficiencies))
}

/// Three-fold coincidence probability, indistinguishable inputs.
pub fn coincidences_indistinguishable(p: &SourceParams) -> Result<f64, HomError> {
    Ok(clicks_indistinguishable(p, &ModelOptions::default())?.threefold())
}

/// Three-fold coincidence probability, distinguishable inputs.
pub fn coincidences_distinguishable(p: &SourceParams) -> Result<f64, HomError> {
    Ok(clicks_distinguishable(p, &ModelOptions::default())?.threefold())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceResult {
    pub n_indis: f64,
    pub n_dis: f64,
    pub visibility: f64,
}

pub fn visibility(p: &SourceParams) -> Result<CoincidenceResult, HomError> {
    visibility_with(p, &ModelOptions::default())
}

/// V = 1 - N_indis / N_dis
pub fn visibility_with(p: &SourceParams, opts: &ModelOptions) -> Result<CoincidenceResult, HomError> {
    let n_dis = clicks_distinguishable(p, opts)?.threefold();
    if !(n_dis >= 1e-300) {
        return Err(HomError::DegenerateRegime { n_dis });
    }
    let n_indis = clicks_indistinguishable(p, opts)?.threefold();
    Ok(CoincidenceResult {
        n_indis,
        n_dis,
        visibility: 1.0 - n_indis / n_dis,
    })
}

/// Visibility over a (mu, nbar) grid. `values[i][j]` belongs to
/// `(mu_axis[i], nbar_axis[j])`; `None` marks a cell where the visibility
/// is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityMap {
    pub mu_axis: Vec<f64>,
    pub nbar_axis: Vec<f64>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl VisibilityMap {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    pub fn degenerate_cells(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_none()).count()
    }
}

pub fn check_axis(name: &str, axis: &[f64]) -> Result<(), HomError> {
    if axis.is_empty() {
        return Err(HomError::InvalidAxis(format!("{name} axis is empty")));
    }
    if axis.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(HomError::InvalidAxis(format!("{name} axis must be positive and finite")));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HomError::InvalidAxis(format!("{name} axis must be strictly increasing")));
    }
    Ok(())
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Cells are computed independently in parallel; the result does not depend
/// on scheduling.
pub fn visibility_map(
    mu_axis: &[f64],
    nbar_axis: &[f64],
    dim: FockDim,
    opts: &ModelOptions,
) -> Result<VisibilityMap, HomError> {
    check_axis("mu", mu_axis)?;
    check_axis("nbar", nbar_axis)?;
    let cells: Vec<(usize, usize)> = (0..mu_axis.len())
        .flat_map(|i| (0..nbar_axis.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<Option<f64>, HomError>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let p = SourceParams::new(mu_axis[i], nbar_axis[j], dim)?;
            match visibility_with(&p, opts) {
                Ok(r) => Ok(Some(r.visibility)),
                Err(HomError::DegenerateRegime { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut values = vec![vec![None; nbar_axis.len()]; mu_axis.len()];
    for (&(i, j), r) in cells.iter().zip(results) {
        values[i][j] = r?;
    }
    Ok(VisibilityMap {
        mu_axis: mu_axis.to_vec(),
        nbar_axis: nbar_axis.to_vec(),
        values,
    })
}

/// Points where the map crosses `level`, interpolated linearly in
/// log-parameter along every row and column. Returned as (mu, nbar).
pub fn level_set(map: &VisibilityMap, level: f64) -> Vec<(f64, f64)> {
    let interp = |x0: f64, x1: f64, v0: f64, v1: f64| {
        let t = (level - v0) / (v1 - v0);
        (x0.ln() + t * (x1.ln() - x0.ln())).exp()
    };
    let crosses = |v0: f64, v1: f64| (v0 - level) * (v1 - level) < 0.0 || (v1 == level && v0 != level);
    let mut out = Vec::new();
    for (i, &mu) in map.mu_axis.iter().enumerate() {
        for j in 1..map.nbar_axis.len() {
            if let (Some(v0), Some(v1)) = (map.values[i][j - 1], map.values[i][j]) {
                if crosses(v0, v1) {
                    out.push((mu, interp(map.nbar_axis[j - 1], map.nbar_axis[j], v0, v1)));
                }
            }
        }
    }
    for (j, &nbar) in map.nbar_axis.iter().enumerate() {
        for i in 1..map.mu_axis.len() {
            if let (Some(v0), Some(v1)) = (map.values[i - 1][j], map.values[i][j]) {
                if crosses(v0, v1) {
                    out.push((interp(map.mu_axis[i - 1], map.mu_axis[i], v0, v1), nbar));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Vary mu_wcs, hold nbar fixed.
    Mu,
    /// Vary nbar, hold mu_wcs fixed.
    Nbar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub n_indis: f64,
    pub n_dis: f64,
}

/// Three-fold coincidence probability along one parameter.
pub fn coincidence_sweep(
    axis: SweepAxis,
    values: &[f64],
    fixed: f64,
    dim: FockDim,
    opts: &ModelOptions,
) -> Result<Vec<SweepPoint>, HomError> {
    check_axis("sweep", values)?;
    values
        .par_iter()
        .map(|&v| {
            let p = match axis {
                SweepAxis::Mu => SourceParams::new(v, fixed, dim)?,
                SweepAxis::Nbar => SourceParams::new(fixed, v, dim)?,
            };
            Ok(SweepPoint {
                value: v,
                n_indis: clicks_indistinguishable(&p, opts)?.threefold(),
                n_dis: clicks_distinguishable(&p, opts)?.threefold(),
            })
        })
        .collect()
}

/// Emission probabilities of the first three Fock terms of each source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionStatistics {
    /// Poisson P(n) of the coherent state.
    pub wcs: [f64; 3],
    /// Geometric P(n pairs) of the pair source.
    pub hsps: [f64; 3],
}

pub fn emission_statistics(p: &SourceParams) -> EmissionStatistics {
    let mut wcs = [0.0; 3];
    let mut term = (-p.mu_wcs).exp();
    for (n, slot) in wcs.iter_mut().enumerate() {
        if n > 0 {
            term *= p.mu_wcs / n as f64;
        }
        *slot = term;
    }
    let lambda2 = p.nbar / (1.0 + p.nbar);
    let hsps = [0, 1, 2].map(|n| (1.0 - lambda2) * lambda2.powi(n));
    EmissionStatistics { wcs, hsps }
}

/// Probability mass above the cutoff for the coherent source only; exposed
/// for reports.
pub fn wcs_leakage(p: &SourceParams) -> f64 {
    poisson_tail(p.mu_wcs, p.dim.nmax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(mu: f64, nbar: f64) -> SourceParams {
        SourceParams::new(mu, nbar, FockDim::PRODUCTION).unwrap()
    }

    #[test]
    fn zero_flux_gives_zero() {
        assert_eq!(coincidences_indistinguishable(&params(0.0, 0.0)).unwrap(), 0.0);
        assert_eq!(coincidences_distinguishable(&params(0.0, 0.0)).unwrap(), 0.0);
        assert!(matches!(
            visibility(&params(0.01, 0.0)),
            Err(HomError::DegenerateRegime { .. })
        ));
    }

    #[test]
    fn increasing_in_mu() {
        let v: Vec<f64> = [1e-3, 5e-3, 1e-2]
            .iter()
            .map(|&mu| coincidences_indistinguishable(&params(mu, 1e-3)).unwrap())
            .collect();
        assert!(v[0] < v[1] && v[1] < v[2]);
    }

    #[test]
    fn dis_exceeds_indis() {
        let r = visibility(&params(0.01, 0.01)).unwrap();
        assert!(r.n_dis >= r.n_indis);
        assert!(r.visibility > 0.0 && r.visibility <= 1.0);
    }

    #[test]
    fn click_patterns_normalized() {
        let p = params(0.02, 0.03);
        let opts = ModelOptions {
            efficiencies: [0.6, 0.8, 0.3],
            ..Default::default()
        };
        for c in [
            clicks_indistinguishable(&p, &opts).unwrap(),
            clicks_distinguishable(&p, &opts).unwrap(),
        ] {
            assert_abs_diff_eq!(c.total(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn layers_agree_without_interference_partner() {
        // With no coherent light, the two constructions describe the same
        // experiment.
        let p = params(0.0, 0.05);
        let a = clicks_indistinguishable(&p, &ModelOptions::default()).unwrap();
        let b = clicks_distinguishable(&p, &ModelOptions::default()).unwrap();
        for k in 0..8 {
            assert_abs_diff_eq!(a.p[k], b.p[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn emission_probabilities() {
        let e = emission_statistics(&params(0.0, 0.0));
        assert_eq!(e.wcs, [1.0, 0.0, 0.0]);
        let e = emission_statistics(&params(0.01, 0.01));
        assert_abs_diff_eq!(e.wcs[1], 0.01 * (-0.01f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(e.wcs[2], 4.95e-5, epsilon = 1e-7);
        let l2 = 0.01 / 1.01;
        assert_abs_diff_eq!(e.hsps[1], l2 * (1.0 - l2), epsilon = 1e-15);
    }

    #[test]
    fn map_cells_match_scalar_calls() {
        let axis = [1e-3, 5e-3, 1e-2];
        let map = visibility_map(&axis, &axis, FockDim::ORACLE, &ModelOptions::default()).unwrap();
        for (i, &mu) in axis.iter().enumerate() {
            for (j, &nb) in axis.iter().enumerate() {
                let p = SourceParams::new(mu, nb, FockDim::ORACLE).unwrap();
                assert_eq!(map.get(i, j), Some(visibility(&p).unwrap().visibility));
            }
        }
    }

    #[test]
    fn single_point_map() {
        let map = visibility_map(&[0.01], &[0.01], FockDim::ORACLE, &ModelOptions::default()).unwrap();
        assert_eq!(map.values.len(), 1);
        assert_eq!(map.values[0].len(), 1);
        assert!(level_set(&map, 0.7).is_empty());
    }

    #[test]
    fn axis_validation() {
        let opts = ModelOptions::default();
        assert!(visibility_map(&[], &[0.1], FockDim::ORACLE, &opts).is_err());
        assert!(visibility_map(&[0.2, 0.1], &[0.1], FockDim::ORACLE, &opts).is_err());
        assert!(visibility_map(&[-0.1], &[0.1], FockDim::ORACLE, &opts).is_err());
    }

    #[test]
    fn level_set_interpolates() {
        let map = VisibilityMap {
            mu_axis: vec![1.0, 100.0],
            nbar_axis: vec![1.0],
            values: vec![vec![Some(1.0)], vec![Some(0.0)]],
        };
        let pts = level_set(&map, 0.5);
        assert_eq!(pts.len(), 1);
        assert_abs_diff_eq!(pts[0].0, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn log_space_endpoints() {
        let x = log_space(1e-4, 0.1, 60);
        assert_eq!(x.len(), 60);
        assert_abs_diff_eq!(x[0], 1e-4, epsilon = 1e-18);
        assert_abs_diff_eq!(x[59], 0.1, epsilon = 1e-14);
    }
}
