//! Weighted least-squares fit of the coincidence dip.
//!
//! Model per bin (averaged over the bin width):
//! C(tau) = B * L_w(tau - t0) * (1 - V * g((tau - t0) / s)) + N0
//! with L_w the unit triangle of half-base w, rounded by the timing jitter,
//! and g the temporal dip kernel.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;
use serde::{Deserialize, Serialize};

use super::{CoincidenceError, Histogram};
use crate::temporal::{fwhm_of_dip, DipKernel, KernelTable, TemporalConfig};

/// A value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl std::fmt::Display for Estimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&format_uncertainty(self.value, self.stderr))
    }
}

/// Value with the uncertainty in the last digit, e.g. `0.919(5)`.
pub fn format_uncertainty(value: f64, stderr: f64) -> String {
    if !(stderr.is_finite() && stderr > 0.0) || !value.is_finite() {
        return format!("{value}");
    }
    let mut decimals = -stderr.log10().floor() as i32;
    let mut digit = (stderr * 10f64.powi(decimals)).round();
    if digit >= 10.0 {
        decimals -= 1;
        digit = (stderr * 10f64.powi(decimals)).round();
    }
    if decimals > 0 {
        format!("{value:.prec$}({digit})", prec = decimals as usize)
    } else {
        // Error of 10 or more: print it in full on the integer grid.
        format!("{:.0}({:.0})", value, stderr.round())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fit a scale on the dip width instead of fixing it to the model.
    pub free_dip_width: bool,
    pub free_envelope_width: bool,
    pub max_iterations: usize,
    /// Largest relative parameter change accepted as converged. A step that
    /// lowers chi2 by less than 1e-12 relative also ends the fit.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            free_dip_width: true,
            free_envelope_width: false,
            max_iterations: 200,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipFitResult {
    pub v_raw: Estimate,
    pub v_net: Estimate,
    pub fwhm: Estimate,
    /// Half-base of the fitted triangle, seconds.
    pub envelope_width: f64,
    /// Counts per bin at the envelope peak, B.
    pub amplitude: Estimate,
    pub tau0: Estimate,
    /// Flat background N0 in counts per bin.
    pub baseline_per_bin: Estimate,
    /// N0 per bin per second of acquisition.
    pub baseline_noise: f64,
    pub chi2_reduced: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccidentalEstimate {
    /// Mean counts per bin in the wings.
    pub per_bin: f64,
    pub stderr: f64,
    pub bins: usize,
}

/// Mean level of bins lying wholly beyond |tau| > gate_width + 1 ns.
pub fn accidental_estimate(h: &Histogram, gate_width: f64) -> Result<AccidentalEstimate, CoincidenceError> {
    let edge = gate_width + 1e-9;
    let eps = 1e-6 * h.bin_width;
    let mut sum = 0u64;
    let mut bins = 0usize;
    for (i, &c) in h.counts.iter().enumerate() {
        let lo = h.tau_min + i as f64 * h.bin_width;
        let hi = lo + h.bin_width;
        if lo >= edge - eps || hi <= -edge + eps {
            sum += c;
            bins += 1;
        }
    }
    if bins < 10 {
        return Err(CoincidenceError::InsufficientWings { bins });
    }
    let per_bin = sum as f64 / bins as f64;
    Ok(AccidentalEstimate {
        per_bin,
        stderr: (sum.max(1) as f64).sqrt() / bins as f64,
        bins,
    })
}

const B: usize = 0;
const T0: usize = 1;
const V: usize = 2;
const N0: usize = 3;
const S: usize = 4;
const W: usize = 5;
/// Range of the dip-width scale.
const S_MIN: f64 = 0.25;
const S_MAX: f64 = 4.0;

/// Unit triangle of half-base `w` convolved with a Gaussian of width
/// `sigma`, built from the smoothed ramp x Phi(x/sigma) + sigma phi(x/sigma).
pub fn smoothed_triangle(x: f64, w: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return (1.0 - x.abs() / w).max(0.0);
    }
    if x.abs() > w + 12.0 * sigma {
        return 0.0;
    }
    let ramp = |y: f64| {
        let z = y / sigma;
        let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        y * cdf + sigma * pdf
    };
    (ramp(x + w) - 2.0 * ramp(x) + ramp(x - w)) / w
}

struct Problem<'a> {
    h: &'a Histogram,
    g: KernelTable,
    sigma: f64,
    free: Vec<usize>,
    weights: Vec<f64>,
}

impl Problem<'_> {
    fn point(&self, p: &[f64; 6], tau: f64) -> f64 {
        let x = tau - p[T0];
        let env = smoothed_triangle(x, p[W], self.sigma);
        p[B] * env * (1.0 - p[V] * self.g.eval(x / p[S])) + p[N0]
    }

    /// Bin average by Simpson's rule on four sub-intervals.
    fn bin(&self, p: &[f64; 6], i: usize) -> f64 {
        let lo = self.h.tau_min + i as f64 * self.h.bin_width;
        let q = self.h.bin_width / 4.0;
        let f = |k: f64| self.point(p, lo + k * q);
        (f(0.0) + 4.0 * f(1.0) + 2.0 * f(2.0) + 4.0 * f(3.0) + f(4.0)) / 12.0
    }

    fn residuals(&self, p: &[f64; 6]) -> DVector<f64> {
        DVector::from_fn(self.h.counts.len(), |i, _| {
            (self.h.counts[i] as f64 - self.bin(p, i)) * self.weights[i].sqrt()
        })
    }

    fn chi2(&self, p: &[f64; 6]) -> f64 {
        self.residuals(p).norm_squared()
    }

    /// d(model * sqrt(w)) / d(free params), central differences.
    fn jacobian(&self, p: &[f64; 6], scale: &[f64; 6]) -> DMatrix<f64> {
        let n = self.h.counts.len();
        let mut j = DMatrix::zeros(n, self.free.len());
        for (c, &k) in self.free.iter().enumerate() {
            let step = 1e-6 * (p[k].abs() + scale[k]);
            let (mut up, mut dn) = (*p, *p);
            up[k] += step;
            dn[k] -= step;
            for i in 0..n {
                j[(i, c)] = (self.bin(&up, i) - self.bin(&dn, i)) / (2.0 * step) * self.weights[i].sqrt();
            }
        }
        j
    }

    /// True when `k` sits on a bound and `push` (the chi2 descent direction)
    /// points out of the allowed range.
    fn at_bound(&self, p: &[f64; 6], k: usize, push: f64) -> bool {
        match k {
            N0 => p[N0] <= 0.0 && push < 0.0,
            S => (p[S] <= S_MIN && push < 0.0) || (p[S] >= S_MAX && push > 0.0),
            W => p[W] <= self.h.bin_width && push < 0.0,
            _ => false,
        }
    }

    fn clamp(&self, p: &mut [f64; 6]) {
        p[N0] = p[N0].max(0.0);
        p[S] = p[S].clamp(S_MIN, S_MAX);
        p[W] = p[W].max(self.h.bin_width);
    }
}

pub fn fit_dip(h: &Histogram, model_cfg: &TemporalConfig) -> Result<DipFitResult, CoincidenceError> {
    fit_dip_with(h, model_cfg, &FitOptions::default())
}

pub fn fit_dip_with(
    h: &Histogram,
    model_cfg: &TemporalConfig,
    opts: &FitOptions,
) -> Result<DipFitResult, CoincidenceError> {
    if h.counts.iter().all(|&c| c == 0) {
        return Err(CoincidenceError::DegenerateHistogram);
    }
    let kernel = DipKernel::new(model_cfg)?;
    let g = kernel.table(1e-12);
    let g0 = g.eval(0.0);
    let base_fwhm = fwhm_of_dip(&TemporalConfig {
        visibility0: 1.0,
        ..model_cfg.clone()
    })?;
    let gate = model_cfg.gate_width;

    let taus: Vec<f64> = (0..h.counts.len()).map(|i| h.tau_center(i)).collect();
    let counts: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();

    // Starting values.
    let n0 = match accidental_estimate(h, gate) {
        Ok(a) => a.per_bin,
        Err(_) => {
            let mut sorted = counts.clone();
            sorted.sort_by(f64::total_cmp);
            let k = (sorted.len() / 10).max(1);
            sorted[..k].iter().sum::<f64>() / k as f64
        }
    };
    let excess: Vec<f64> = counts.iter().map(|c| (c - n0).max(0.0)).collect();
    let mass: f64 = excess.iter().sum();
    let t0 = if mass > 0.0 {
        taus.iter().zip(&excess).map(|(t, e)| t * e).sum::<f64>() / mass
    } else {
        0.0
    };
    let inside: Vec<usize> = (0..taus.len()).filter(|&i| (taus[i] - t0).abs() < gate / 2.0).collect();
    let signal: f64 = inside.iter().map(|&i| counts[i] - n0).sum();
    let noise = (inside.iter().map(|&i| counts[i]).sum::<f64>().max(1.0)
        + (inside.len() as f64).powi(2) * n0.max(1.0) / 10.0)
        .sqrt();
    if !(signal > 5.0 * noise) {
        return Err(CoincidenceError::NoEnvelope);
    }
    let mut ratios: Vec<f64> = (0..taus.len())
        .filter(|&i| {
            let x = (taus[i] - t0).abs();
            x > 2.0 * base_fwhm && x < 0.6 * gate
        })
        .map(|i| (counts[i] - n0) / (1.0 - (taus[i] - t0).abs() / gate))
        .collect();
    let b0 = if ratios.is_empty() {
        counts.iter().cloned().fold(0.0, f64::max) - n0
    } else {
        ratios.sort_by(f64::total_cmp);
        ratios[ratios.len() / 2]
    };
    let centre = taus
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t0).abs().total_cmp(&(b.1 - t0).abs()))
        .map_or(0, |(i, _)| i);
    let v0 = if b0 > 0.0 {
        ((1.0 - (counts[centre] - n0) / b0) / g0).clamp(0.0, 1.0)
    } else {
        0.5
    };

    let mut p = [b0.max(1.0), t0, v0, n0, 1.0, gate];
    let scale = [1.0, h.bin_width, 1.0, 1.0, 1.0, gate];
    let mut free = vec![B, T0, V, N0];
    if opts.free_dip_width {
        free.push(S);
    }
    if opts.free_envelope_width {
        free.push(W);
    }
    let problem = Problem {
        h,
        g,
        sigma: model_cfg.jitter_sigma(),
        free,
        weights: counts.iter().map(|&c| 1.0 / c.max(1.0)).collect(),
    };

    let mut chi2 = problem.chi2(&p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let j = problem.jacobian(&p, &scale);
        let r = problem.residuals(&p);
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * r;
        // Parameters held at a bound by a gradient pointing outward sit
        // out this step.
        let pinned: Vec<bool> = problem
            .free
            .iter()
            .enumerate()
            .map(|(c, &k)| problem.at_bound(&p, k, jtr[c]))
            .collect();
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            let mut rhs = jtr.clone();
            for d in 0..a.nrows() {
                if pinned[d] {
                    a.row_mut(d).fill(0.0);
                    a.column_mut(d).fill(0.0);
                    a[(d, d)] = 1.0;
                    rhs[d] = 0.0;
                } else {
                    a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
                }
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&rhs)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for (c, &k) in problem.free.iter().enumerate() {
                trial[k] += delta[c];
            }
            problem.clamp(&mut trial);
            let trial_chi2 = problem.chi2(&trial);
            if trial_chi2 <= chi2 {
                let change = problem
                    .free
                    .iter()
                    .map(|&k| (trial[k] - p[k]).abs() / (p[k].abs() + scale[k]))
                    .fold(0.0, f64::max);
                // An unconstrained direction (the width when V ~ 0) can keep
                // moving with no effect on chi2.
                let stalled = chi2 - trial_chi2 <= 1e-12 * chi2;
                p = trial;
                chi2 = trial_chi2;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if change < opts.tolerance || stalled {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        // No downhill step at any damping: already at the minimum.
        if converged || !accepted {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CoincidenceError::FitDivergence { iterations });
    }

    let j = problem.jacobian(&p, &scale);
    let cov = (j.transpose() * &j)
        .try_inverse()
        .ok_or(CoincidenceError::FitDivergence { iterations })?;
    let var = |k: usize| -> f64 {
        problem
            .free
            .iter()
            .position(|&x| x == k)
            .map_or(0.0, |c| cov[(c, c)].max(0.0))
    };
    let covar = |a: usize, b: usize| -> f64 {
        match (
            problem.free.iter().position(|&x| x == a),
            problem.free.iter().position(|&x| x == b),
        ) {
            (Some(i), Some(k)) => cov[(i, k)],
            _ => 0.0,
        }
    };

    let (b, v, n) = (p[B], p[V], p[N0]);
    let v_net = v * g0;
    let v_raw = b * v * g0 / (b + n);
    // Gradient of v_raw over (B, V, N0).
    let grad = [
        v * g0 * n / (b + n).powi(2),
        b * g0 / (b + n),
        -b * v * g0 / (b + n).powi(2),
    ];
    let idx = [B, V, N0];
    let mut var_raw = 0.0;
    for (x, gx) in idx.iter().zip(grad) {
        for (y, gy) in idx.iter().zip(grad) {
            var_raw += gx * gy * covar(*x, *y);
        }
    }
    let dof = (h.counts.len() as f64 - problem.free.len() as f64).max(1.0);
    Ok(DipFitResult {
        v_raw: Estimate {
            value: v_raw,
            stderr: var_raw.max(0.0).sqrt(),
        },
        v_net: Estimate {
            value: v_net,
            stderr: var(V).sqrt() * g0.abs(),
        },
        fwhm: Estimate {
            value: p[S] * base_fwhm,
            stderr: var(S).sqrt() * base_fwhm,
        },
        envelope_width: p[W],
        amplitude: Estimate {
            value: b,
            stderr: var(B).sqrt(),
        },
        tau0: Estimate {
            value: p[T0],
            stderr: var(T0).sqrt(),
        },
        baseline_per_bin: Estimate {
            value: n,
            stderr: var(N0).sqrt(),
        },
        baseline_noise: if h.acquisition_span > 0.0 {
            n / h.acquisition_span
        } else {
            0.0
        },
        chi2_reduced: chi2 / dof,
        iterations,
    })
}
