//! Coincidence rate versus detection delay.
//!
//! Two rectangular gates of width `gate_width` give a triangular envelope
//! of base `2 * gate_width`. Two-photon interference carves a dip whose
//! shape follows the filter's field correlation, blurred by detector
//! jitter. All times are in seconds and frequencies in hertz.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// FWHM / sigma of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// 1/filter_fwhm must exceed the jitter by this factor.
pub const JITTER_RATIO_THRESHOLD: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemporalError {
    #[error("invalid temporal configuration: {0}")]
    InvalidConfig(String),
    #[error("no dip: zero-delay depth is zero")]
    NoDip,
}

/// Field-correlation shape of the filtered photon before jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelShape {
    /// exp(-pi * filter_fwhm * |tau|), a Lorentzian filter.
    #[default]
    Exponential,
    /// exp(-(pi * filter_fwhm * tau)^2 / (4 ln 2)), a Gaussian filter.
    Gaussian,
    /// Linear interpolation of samples, zero outside their range.
    Sampled { tau: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalConfig {
    pub gate_width: f64,
    pub filter_fwhm: f64,
    pub jitter_fwhm: f64,
    pub detuning: f64,
    /// Dip depth at zero delay before jitter (0 = no interference).
    pub visibility0: f64,
    pub kernel: KernelShape,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            gate_width: 4e-9,
            filter_fwhm: 540e6,
            jitter_fwhm: 150e-12,
            detuning: 0.0,
            visibility0: 0.919,
            kernel: KernelShape::Exponential,
        }
    }
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<(), TemporalError> {
        let bad = |m: String| Err(TemporalError::InvalidConfig(m));
        if !(self.gate_width.is_finite() && self.gate_width > 0.0) {
            return bad(format!("gate_width must be > 0, got {}", self.gate_width));
        }
        if !(self.filter_fwhm.is_finite() && self.filter_fwhm > 0.0) {
            return bad(format!("filter_fwhm must be > 0, got {}", self.filter_fwhm));
        }
        if !(self.jitter_fwhm.is_finite() && self.jitter_fwhm >= 0.0) {
            return bad(format!("jitter_fwhm must be >= 0, got {}", self.jitter_fwhm));
        }
        if !self.detuning.is_finite() {
            return bad(format!("detuning must be finite, got {}", self.detuning));
        }
        if !(0.0..=1.0).contains(&self.visibility0) {
            return bad(format!("visibility0 must lie in [0, 1], got {}", self.visibility0));
        }
        if let KernelShape::Sampled { tau, values } = &self.kernel {
            if tau.len() < 2 || tau.len() != values.len() {
                return bad("sampled kernel needs >= 2 (tau, value) pairs".into());
            }
            if tau.windows(2).any(|w| w[1] <= w[0]) {
                return bad("sampled kernel tau must be strictly increasing".into());
            }
            if values.iter().any(|v| !v.is_finite()) || tau.iter().any(|t| !t.is_finite()) {
                return bad("sampled kernel contains non-finite values".into());
            }
            if shape_value(&self.kernel, self.filter_fwhm, 0.0) <= 0.0 {
                return bad("sampled kernel must be positive at tau = 0".into());
            }
        }
        Ok(())
    }

    pub fn jitter_sigma(&self) -> f64 {
        self.jitter_fwhm / FWHM_PER_SIGMA
    }

    pub fn coherence_time(&self) -> f64 {
        1.0 / self.filter_fwhm
    }

    pub fn with_detuning(&self, detuning: f64) -> Self {
        TemporalConfig {
            detuning,
            ..self.clone()
        }
    }
}

fn shape_value(shape: &KernelShape, filter_fwhm: f64, tau: f64) -> f64 {
    match shape {
        KernelShape::Exponential => (-PI * filter_fwhm * tau.abs()).exp(),
        KernelShape::Gaussian => {
            let x = PI * filter_fwhm * tau;
            (-x * x / (4.0 * LN_2)).exp()
        }
        KernelShape::Sampled { tau: ts, values } => {
            if tau < ts[0] || tau > ts[ts.len() - 1] {
                return 0.0;
            }
            let k = ts.partition_point(|&t| t <= tau).clamp(1, ts.len() - 1);
            let (t0, t1) = (ts[k - 1], ts[k]);
            let f = (tau - t0) / (t1 - t0);
            values[k - 1] * (1.0 - f) + values[k] * f
        }
    }
}

/// Triangle of unit peak and base `2 * gate_width`.
pub fn triangle_envelope(cfg: &TemporalConfig, tau: f64) -> f64 {
    (1.0 - tau.abs() / cfg.gate_width).max(0.0)
}

/// Jitter-free two-photon overlap at delay `tau`, including the detuning
/// beat: shape(tau) / shape(0) * cos(2 pi detuning tau). Lies in [-1, 1]
/// for the built-in shapes.
pub fn base_kernel(cfg: &TemporalConfig, tau: f64) -> f64 {
    let norm = shape_value(&cfg.kernel, cfg.filter_fwhm, 0.0);
    shape_value(&cfg.kernel, cfg.filter_fwhm, tau) / norm * (2.0 * PI * cfg.detuning * tau).cos()
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n.max(2) + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Half-width of the jitter quadrature in units of sigma.
const JITTER_SPAN_SIGMAS: f64 = 8.0;
const JITTER_INTERVALS: usize = 800;

/// The jittered, normalized dip kernel g(tau).
///
/// g = (base * G) / N where G is the jitter Gaussian and N is the value of
/// the zero-detuning convolution at tau = 0, so g(0) = 1 without detuning.
#[derive(Debug, Clone)]
pub struct DipKernel {
    cfg: TemporalConfig,
    sigma: f64,
    norm: f64,
}

impl DipKernel {
    pub fn new(cfg: &TemporalConfig) -> Result<Self, TemporalError> {
        cfg.validate()?;
        let sigma = cfg.jitter_sigma();
        let mut k = DipKernel {
            cfg: cfg.with_detuning(0.0),
            sigma,
            norm: 1.0,
        };
        let norm = k.convolved(0.0);
        if !(norm > 0.0) {
            return Err(TemporalError::InvalidConfig(
                "kernel vanishes at zero delay after jitter".into(),
            ));
        }
        k.cfg = cfg.clone();
        k.norm = norm;
        Ok(k)
    }

    pub fn config(&self) -> &TemporalConfig {
        &self.cfg
    }

    /// (base * G)(0) at zero detuning: the fraction of the jitter-free dip
    /// depth that survives the jitter.
    pub fn jitter_depth_factor(&self) -> f64 {
        self.norm
    }

    fn convolved(&self, tau: f64) -> f64 {
        if self.sigma == 0.0 {
            return base_kernel(&self.cfg, tau);
        }
        let s = self.sigma;
        let gauss = |x: f64| (-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * PI).sqrt());
        let f = |x: f64| base_kernel(&self.cfg, tau - x) * gauss(x);
        let (lo, hi) = (-JITTER_SPAN_SIGMAS * s, JITTER_SPAN_SIGMAS * s);
        // The exponential and sampled shapes have a kink at tau - x = 0.
        if tau > lo && tau < hi {
            let n_left = ((JITTER_INTERVALS as f64) * (tau - lo) / (hi - lo)).round() as usize;
            let n_left = n_left.clamp(2, JITTER_INTERVALS - 2);
            simpson(&f, lo, tau, n_left) + simpson(&f, tau, hi, JITTER_INTERVALS - n_left)
        } else {
            simpson(&f, lo, hi, JITTER_INTERVALS)
        }
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.convolved(tau) / self.norm
    }

    /// Distance beyond which |g| stays below 1e-12 (for tabulation).
    pub fn support(&self) -> f64 {
        let decay = match &self.cfg.kernel {
            KernelShape::Exponential => 28.0 / (PI * self.cfg.filter_fwhm),
            KernelShape::Gaussian => 6.0 * (4.0 * LN_2).sqrt() * 28f64.sqrt() / (PI * self.cfg.filter_fwhm),
            KernelShape::Sampled { tau, .. } => tau[0].abs().max(tau[tau.len() - 1].abs()),
        };
        decay + JITTER_SPAN_SIGMAS * self.sigma
    }

    /// Samples of g on a uniform grid for fast interpolation.
    pub fn table(&self, step: f64) -> KernelTable {
        let half = self.support();
        let n = (half / step).ceil() as usize;
        let values = (0..=2 * n)
            .map(|k| self.eval((k as f64 - n as f64) * step))
            .collect();
        KernelTable {
            start: -(n as f64) * step,
            step,
            values,
        }
    }
}

/// g(tau) for the given configuration.
pub fn dip_kernel(cfg: &TemporalConfig, tau: f64) -> Result<f64, TemporalError> {
    Ok(DipKernel::new(cfg)?.eval(tau))
}

/// Uniformly sampled kernel with linear interpolation; zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    start: f64,
    step: f64,
    values: Vec<f64>,
}

impl KernelTable {
    pub fn eval(&self, tau: f64) -> f64 {
        let x = (tau - self.start) / self.step;
        if !(x >= 0.0) {
            return 0.0;
        }
        let k = x.floor() as usize;
        if k + 1 >= self.values.len() {
            return if k + 1 == self.values.len() && x == k as f64 {
                self.values[k]
            } else {
                0.0
            };
        }
        let f = x - k as f64;
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }

    /// dg/dtau of the interpolant.
    pub fn derivative(&self, tau: f64) -> f64 {
        let x = (tau - self.start) / self.step;
        if !(x >= 0.0) {
            return 0.0;
        }
        let k = x.floor() as usize;
        if k + 1 >= self.values.len() {
            return 0.0;
        }
        (self.values[k + 1] - self.values[k]) / self.step
    }
}

/// Rate profile over a delay axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipProfile {
    pub tau_axis: Vec<f64>,
    /// Distinguishable reference (triangle).
    pub envelope: Vec<f64>,
    pub dip_factor: Vec<f64>,
    /// envelope * (1 - visibility0 * dip_factor)
    pub combined: Vec<f64>,
}

/// +/- 10 ns at 10 ps steps.
pub fn default_tau_axis() -> Vec<f64> {
    (-1000..=1000).map(|k| k as f64 * 10e-12).collect()
}

pub fn coincidence_profile(cfg: &TemporalConfig, tau_axis: &[f64]) -> Result<DipProfile, TemporalError> {
    if tau_axis.windows(2).any(|w| w[1] < w[0]) {
        return Err(TemporalError::InvalidConfig("tau axis must be sorted".into()));
    }
    let kernel = DipKernel::new(cfg)?;
    let envelope: Vec<f64> = tau_axis.iter().map(|&t| triangle_envelope(cfg, t)).collect();
    let dip_factor: Vec<f64> = tau_axis.iter().map(|&t| kernel.eval(t)).collect();
    let combined = envelope
        .iter()
        .zip(&dip_factor)
        .map(|(e, g)| e * (1.0 - cfg.visibility0 * g))
        .collect();
    Ok(DipProfile {
        tau_axis: tau_axis.to_vec(),
        envelope,
        dip_factor,
        combined,
    })
}

/// Full width at half depth of 1 - combined/envelope = visibility0 * g.
pub fn fwhm_of_dip(cfg: &TemporalConfig) -> Result<f64, TemporalError> {
    if cfg.visibility0 == 0.0 {
        cfg.validate()?;
        return Err(TemporalError::NoDip);
    }
    let kernel = DipKernel::new(cfg)?;
    let half = 0.5 * kernel.eval(0.0);
    if !(half > 0.0) {
        return Err(TemporalError::NoDip);
    }
    let step = 1e-12;
    let limit = cfg.gate_width;
    let crossing = |dir: f64| -> Result<f64, TemporalError> {
        let mut a = 0.0;
        loop {
            let b = a + step;
            if b > limit {
                return Err(TemporalError::NoDip);
            }
            if kernel.eval(dir * b) <= half {
                let (mut lo, mut hi) = (a, b);
                while hi - lo > 1e-16 {
                    let mid = 0.5 * (lo + hi);
                    if kernel.eval(dir * mid) > half {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(0.5 * (lo + hi));
            }
            a = b;
        }
    };
    // Coarse 1 ps walk outward, then bisection to well below 1 ps.
    Ok(crossing(1.0)? + crossing(-1.0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterReport {
    pub coherence_time: f64,
    pub jitter: f64,
    /// coherence_time / jitter (infinite for zero jitter).
    pub ratio: f64,
    pub satisfied: bool,
}

pub fn jitter_condition(cfg: &TemporalConfig) -> Result<JitterReport, TemporalError> {
    cfg.validate()?;
    let coherence_time = cfg.coherence_time();
    let ratio = if cfg.jitter_fwhm == 0.0 {
        f64::INFINITY
    } else {
        coherence_time / cfg.jitter_fwhm
    };
    Ok(JitterReport {
        coherence_time,
        jitter: cfg.jitter_fwhm,
        ratio,
        satisfied: ratio > JITTER_RATIO_THRESHOLD,
    })
}

/// visibility0 * (area under g) / (area under g at zero detuning).
///
/// This is the dip depth a detector with no time resolution would see; a
/// detuning much larger than the filter width drives it to zero.
pub fn integrated_dip_depth(cfg: &TemporalConfig) -> Result<f64, TemporalError> {
    // Jitter convolution preserves area, so the ratio only needs the base kernel.
    let k = DipKernel::new(cfg)?;
    let half = k.support();
    let area = |c: &TemporalConfig| {
        // Split at the kink of the exponential shape.
        simpson(|t| base_kernel(c, t), -half, 0.0, 100_000)
            + simpson(|t| base_kernel(c, t), 0.0, half, 100_000)
    };
    Ok(cfg.visibility0 * area(cfg) / area(&cfg.with_detuning(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn triangle_points() {
        let cfg = TemporalConfig::default();
        assert_eq!(triangle_envelope(&cfg, 0.0), 1.0);
        assert_eq!(triangle_envelope(&cfg, 4e-9), 0.0);
        assert_eq!(triangle_envelope(&cfg, -4e-9), 0.0);
        assert_abs_diff_eq!(triangle_envelope(&cfg, 2e-9), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn kernel_normalized() {
        let cfg = TemporalConfig::default();
        assert_abs_diff_eq!(dip_kernel(&cfg, 0.0).unwrap(), 1.0, epsilon = 1e-14);
        let nojit = TemporalConfig {
            jitter_fwhm: 0.0,
            ..Default::default()
        };
        assert_eq!(dip_kernel(&nojit, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn table_matches_direct() {
        let k = DipKernel::new(&TemporalConfig::default()).unwrap();
        let t = k.table(1e-12);
        for tau in [0.0, 123.4e-12, -777.7e-12, 3e-9] {
            assert_abs_diff_eq!(t.eval(tau), k.eval(tau), epsilon = 1e-6);
        }
        assert_eq!(t.eval(1.0), 0.0);
    }

    #[test]
    fn invalid_configs() {
        let c = TemporalConfig {
            gate_width: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TemporalConfig {
            jitter_fwhm: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TemporalConfig {
            kernel: KernelShape::Sampled {
                tau: vec![0.0],
                values: vec![1.0],
            },
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn no_dip_error() {
        let c = TemporalConfig {
            visibility0: 0.0,
            ..Default::default()
        };
        assert_eq!(fwhm_of_dip(&c), Err(TemporalError::NoDip));
    }

    #[test]
    fn sampled_kernel_interpolates() {
        let c = TemporalConfig {
            kernel: KernelShape::Sampled {
                tau: vec![-1e-9, 0.0, 1e-9],
                values: vec![0.0, 1.0, 0.0],
            },
            jitter_fwhm: 0.0,
            ..Default::default()
        };
        assert_abs_diff_eq!(dip_kernel(&c, 0.5e-9).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fwhm_of_dip(&c).unwrap(), 1e-9, epsilon = 1e-15);
    }
}
