//! Exhaustive amplitude-enumeration oracle for the three-fold coincidence
//! probabilities, shared by the test targets.

use std::collections::HashMap;

use homlab::fock::{coherent_amplitudes, tmsv_amplitudes};
use homlab::Complex64;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Output amplitudes of the interference splitter for the input
/// sum_{n,k} w_n t_k |n>_wcs |k>_sig |k>_idl, by expanding
/// (a^dag - i b^dag)^n (b^dag - i a^dag)^k / sqrt(2)^(n+k) term by term.
fn enumerate(w: &[f64], t: &[f64]) -> HashMap<(usize, usize, usize), Complex64> {
    let minus_i = Complex64::new(0.0, -1.0);
    let mut out: HashMap<(usize, usize, usize), Complex64> = HashMap::new();
    for (n, &wn) in w.iter().enumerate() {
        for (k, &tk) in t.iter().enumerate() {
            let pre = wn * tk / (factorial(n) * factorial(k)).sqrt() / 2f64.powf((n + k) as f64 / 2.0);
            for j in 0..=n {
                for l in 0..=k {
                    let p = j + k - l;
                    let q = n - j + l;
                    let c = pre
                        * binomial(n, j)
                        * binomial(k, l)
                        * (factorial(p) * factorial(q)).sqrt();
                    *out.entry((p, q, k)).or_default() += minus_i.powu((n - j + k - l) as u32) * c;
                }
            }
        }
    }
    out
}

fn probabilities(amps: &HashMap<(usize, usize, usize), Complex64>) -> HashMap<(usize, usize, usize), f64> {
    amps.iter().map(|(k, v)| (*k, v.norm_sqr())).collect()
}

pub fn oracle_indis(mu: f64, nbar: f64, nmax: usize) -> f64 {
    let w = normalize(coherent_amplitudes(mu, nmax));
    let t = normalize(tmsv_amplitudes(nbar, nmax));
    probabilities(&enumerate(&w, &t))
        .iter()
        .filter(|((p, q, h), _)| *p > 0 && *q > 0 && *h > 0)
        .map(|(_, v)| v)
        .sum()
}

pub fn oracle_dis(mu: f64, nbar: f64, nmax: usize) -> f64 {
    let w = normalize(coherent_amplitudes(mu, nmax));
    let t = normalize(tmsv_amplitudes(nbar, nmax));
    let a = probabilities(&enumerate(&w, &[1.0]));
    let b = probabilities(&enumerate(&[1.0], &t));
    let mut total = 0.0;
    for ((p1, q1, _), pa) in &a {
        for ((p2, q2, h), pb) in &b {
            if p1 + p2 > 0 && q1 + q2 > 0 && *h > 0 {
                total += pa * pb;
            }
        }
    }
    total
}
