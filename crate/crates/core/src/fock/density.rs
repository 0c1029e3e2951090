use std::collections::HashSet;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::FockError;
use crate::tolerance::Tolerances;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A labelled bosonic mode with its Fock cutoff.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub label: String,
    pub dim: usize,
}

impl Mode {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Mode {
            label: label.into(),
            dim,
        }
    }
}

/// Mixed-radix layout of a multimode basis. Mode 0 is the most significant
/// digit, matching the Kronecker product order.
#[derive(Debug, Clone)]
struct Layout {
    dims: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(dims: &[usize]) -> Self {
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let total = dims.iter().product();
        Layout {
            dims: dims.to_vec(),
            strides,
            total,
        }
    }

    fn digit(&self, index: usize, mode: usize) -> usize {
        (index / self.strides[mode]) % self.dims[mode]
    }
}

/// Index bookkeeping for splitting a layout into a selected group of modes
/// and the remaining ones. `full[sel * rest_total + rest]` is the full index.
#[derive(Debug, Clone)]
struct Split {
    sel_total: usize,
    rest_total: usize,
    full: Vec<usize>,
}

impl Split {
    fn new(layout: &Layout, selected: &[usize]) -> Self {
        let rest: Vec<usize> = (0..layout.dims.len())
            .filter(|m| !selected.contains(m))
            .collect();
        let sel_layout = Layout::new(&selected.iter().map(|&m| layout.dims[m]).collect::<Vec<_>>());
        let rest_layout = Layout::new(&rest.iter().map(|&m| layout.dims[m]).collect::<Vec<_>>());
        let mut full = vec![0; layout.total];
        for idx in 0..layout.total {
            let mut s = 0;
            for (k, &m) in selected.iter().enumerate() {
                s += layout.digit(idx, m) * sel_layout.strides[k];
            }
            let mut r = 0;
            for (k, &m) in rest.iter().enumerate() {
                r += layout.digit(idx, m) * rest_layout.strides[k];
            }
            full[s * rest_layout.total + r] = idx;
        }
        Split {
            sel_total: sel_layout.total,
            rest_total: rest_layout.total,
            full,
        }
    }

    fn index(&self, sel: usize, rest: usize) -> usize {
        self.full[sel * self.rest_total + rest]
    }
}

/// Sparse linear map acting on a group of modes, possibly changing their
/// cutoffs. Row `o` lists the `(input, value)` pairs of output state `o`.
#[derive(Debug, Clone)]
pub struct LocalOp {
    in_dims: Vec<usize>,
    out_dims: Vec<usize>,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl LocalOp {
    pub fn new(
        in_dims: Vec<usize>,
        out_dims: Vec<usize>,
        rows: Vec<Vec<(usize, Complex64)>>,
    ) -> Result<Self, FockError> {
        let n_in: usize = in_dims.iter().product();
        let n_out: usize = out_dims.iter().product();
        if rows.len() != n_out {
            return Err(FockError::Shape(format!(
                "operator has {} rows, output space has {}",
                rows.len(),
                n_out
            )));
        }
        if rows.iter().flatten().any(|&(i, _)| i >= n_in) {
            return Err(FockError::Shape("operator column out of range".into()));
        }
        Ok(LocalOp {
            in_dims,
            out_dims,
            rows,
        })
    }

    /// Square operator from a dense matrix; exact zeros are dropped.
    pub fn from_dense(dims: Vec<usize>, m: &DMatrix<Complex64>) -> Result<Self, FockError> {
        let n: usize = dims.iter().product();
        if m.nrows() != n || m.ncols() != n {
            return Err(FockError::Shape(format!(
                "dense operator is {}x{}, modes need {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        let rows = (0..n)
            .map(|o| {
                (0..n)
                    .filter_map(|i| {
                        let v = m[(o, i)];
                        (v != ZERO).then_some((i, v))
                    })
                    .collect()
            })
            .collect();
        LocalOp::new(dims.clone(), dims, rows)
    }

    pub fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    pub fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    pub fn rows(&self) -> &[Vec<(usize, Complex64)>] {
        &self.rows
    }

    /// Dense matrix of the operator (outputs x inputs).
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n_in: usize = self.in_dims.iter().product();
        let mut m = DMatrix::zeros(self.rows.len(), n_in);
        for (o, row) in self.rows.iter().enumerate() {
            for &(i, v) in row {
                m[(o, i)] = v;
            }
        }
        m
    }
}

/// Joint photon-number distribution (the diagonal of a density matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonStatistics {
    pub modes: Vec<Mode>,
    pub probs: Vec<f64>,
}

impl PhotonStatistics {
    /// Photon numbers of basis state `index`, one per mode.
    pub fn numbers(&self, index: usize) -> Vec<usize> {
        let layout = Layout::new(&self.modes.iter().map(|m| m.dim).collect::<Vec<_>>());
        (0..self.modes.len()).map(|m| layout.digit(index, m)).collect()
    }

    /// Distribution of the total photon number.
    pub fn total_number_distribution(&self) -> Vec<f64> {
        let max_total: usize = self.modes.iter().map(|m| m.dim - 1).sum();
        let mut out = vec![0.0; max_total + 1];
        for (k, &p) in self.probs.iter().enumerate() {
            out[self.numbers(k).iter().sum::<usize>()] += p;
        }
        out
    }
}

/// Density matrix over an ordered list of labelled, truncated modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    modes: Vec<Mode>,
    data: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(modes: Vec<Mode>, data: DMatrix<Complex64>) -> Result<Self, FockError> {
        let mut seen = HashSet::new();
        for m in &modes {
            if m.dim == 0 {
                return Err(FockError::Shape(format!("mode {:?} has zero dimension", m.label)));
            }
            if !seen.insert(m.label.as_str()) {
                return Err(FockError::ModeCollision(m.label.clone()));
            }
        }
        let n: usize = modes.iter().map(|m| m.dim).product();
        if data.nrows() != n || data.ncols() != n {
            return Err(FockError::Shape(format!(
                "matrix is {}x{}, modes need {n}x{n}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(DensityMatrix { modes, data })
    }

    /// Pure state |psi><psi| from basis amplitudes.
    pub fn from_amplitudes(modes: Vec<Mode>, amplitudes: &[Complex64]) -> Result<Self, FockError> {
        let n = amplitudes.len();
        let data = DMatrix::from_fn(n, n, |i, j| amplitudes[i] * amplitudes[j].conj());
        DensityMatrix::new(modes, data)
    }

    pub fn vacuum(label: &str, dim: usize) -> Result<Self, FockError> {
        DensityMatrix::number_state(label, dim, 0)
    }

    pub fn number_state(label: &str, dim: usize, n: usize) -> Result<Self, FockError> {
        if n >= dim {
            return Err(FockError::InvalidParameter(format!(
                "|{n}> is outside a cutoff of {dim}"
            )));
        }
        let mut data = DMatrix::zeros(dim, dim);
        data[(n, n)] = Complex64::new(1.0, 0.0);
        DensityMatrix::new(vec![Mode::new(label, dim)], data)
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn labels(&self) -> Vec<&str> {
        self.modes.iter().map(|m| m.label.as_str()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.dim).collect()
    }

    /// Side length of the matrix.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn mode_position(&self, label: &str) -> Result<usize, FockError> {
        self.modes
            .iter()
            .position(|m| m.label == label)
            .ok_or_else(|| FockError::UnknownMode(label.to_string()))
    }

    /// Replaces the mode labels, keeping order and cutoffs.
    pub fn relabel(mut self, labels: &[&str]) -> Result<Self, FockError> {
        if labels.len() != self.modes.len() {
            return Err(FockError::Shape(format!(
                "{} labels for {} modes",
                labels.len(),
                self.modes.len()
            )));
        }
        let modes = self
            .modes
            .iter()
            .zip(labels)
            .map(|(m, l)| Mode::new(*l, m.dim))
            .collect();
        self = DensityMatrix::new(modes, self.data)?;
        Ok(self)
    }

    pub fn trace(&self) -> f64 {
        self.data.diagonal().iter().map(|z| z.re).sum()
    }

    /// Tr(rho^2); assumes Hermiticity.
    pub fn purity(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.data.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn photon_statistics(&self) -> PhotonStatistics {
        PhotonStatistics {
            modes: self.modes.clone(),
            probs: self.diagonal(),
        }
    }

    /// <n_mode>
    pub fn mean_photon_number(&self, label: &str) -> Result<f64, FockError> {
        let pos = self.mode_position(label)?;
        let layout = self.layout();
        Ok(self
            .diagonal()
            .iter()
            .enumerate()
            .map(|(k, p)| layout.digit(k, pos) as f64 * p)
            .sum())
    }

    /// <k|rho|k> for the basis state with the given photon numbers.
    pub fn population(&self, numbers: &[usize]) -> Result<f64, FockError> {
        if numbers.len() != self.modes.len() {
            return Err(FockError::Shape(format!(
                "{} photon numbers for {} modes",
                numbers.len(),
                self.modes.len()
            )));
        }
        let layout = self.layout();
        let mut idx = 0;
        for (k, (&n, m)) in numbers.iter().zip(&self.modes).enumerate() {
            if n >= m.dim {
                return Ok(0.0);
            }
            idx += n * layout.strides[k];
        }
        Ok(self.data[(idx, idx)].re)
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.data + self.data.adjoint()) * Complex64::new(0.5, 0.0);
        // The symmetric QR solver returns non-finite eigenvalues on some
        // rank-deficient states; the Schur form of a Hermitian matrix is
        // diagonal and does not have that problem.
        match h.schur().eigenvalues() {
            Some(e) => e.iter().map(|z| z.re).fold(f64::INFINITY, f64::min),
            None => f64::NAN,
        }
    }

    /// Hermiticity, unit trace and positivity.
    pub fn check(&self, tol: &Tolerances) -> Result<(), FockError> {
        let herm = self.hermiticity_error();
        if herm > tol.hermiticity {
            return Err(FockError::Invariant(format!("hermiticity error {herm:e}")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > tol.trace {
            return Err(FockError::Invariant(format!("trace {tr}")));
        }
        let ev = self.min_eigenvalue();
        if !(ev >= tol.psd_floor) {
            return Err(FockError::Invariant(format!("negative eigenvalue {ev:e}")));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.dims())
    }

    fn positions(&self, labels: &[&str]) -> Result<Vec<usize>, FockError> {
        let mut out = Vec::with_capacity(labels.len());
        for l in labels {
            let p = self.mode_position(l)?;
            if out.contains(&p) {
                return Err(FockError::InvalidParameter(format!("mode {l:?} listed twice")));
            }
            out.push(p);
        }
        Ok(out)
    }

    fn check_op(&self, positions: &[usize], op: &LocalOp) -> Result<(), FockError> {
        let dims: Vec<usize> = positions.iter().map(|&p| self.modes[p].dim).collect();
        if dims != op.in_dims {
            return Err(FockError::Shape(format!(
                "operator expects input cutoffs {:?}, modes have {:?}",
                op.in_dims, dims
            )));
        }
        Ok(())
    }

    fn transformed_modes(&self, positions: &[usize], op: &LocalOp) -> Vec<Mode> {
        let mut modes = self.modes.clone();
        for (k, &p) in positions.iter().enumerate() {
            modes[p].dim = op.out_dims[k];
        }
        modes
    }

    /// rho -> U rho U^dagger with `U` acting on the listed modes (in that
    /// order). The listed modes take the operator's output cutoffs.
    pub fn transform(&self, labels: &[&str], op: &LocalOp) -> Result<DensityMatrix, FockError> {
        let positions = self.positions(labels)?;
        self.check_op(&positions, op)?;
        let modes = self.transformed_modes(&positions, op);
        let in_split = Split::new(&self.layout(), &positions);
        let out_layout = Layout::new(&modes.iter().map(|m| m.dim).collect::<Vec<_>>());
        let out_split = Split::new(&out_layout, &positions);
        let rest = in_split.rest_total;
        let n_in = self.dim();
        let n_out = out_layout.total;

        // Left multiplication: half[o_full, c] = sum_i U[o, i] rho[(i, r), c].
        let mut half = DMatrix::<Complex64>::zeros(n_out, n_in);
        for c in 0..n_in {
            for r in 0..rest {
                for (o, row) in op.rows.iter().enumerate() {
                    let mut acc = ZERO;
                    for &(i, u) in row {
                        acc += u * self.data[(in_split.index(i, r), c)];
                    }
                    if acc != ZERO {
                        half[(out_split.index(o, r), c)] = acc;
                    }
                }
            }
        }
        // Right multiplication by U^dagger on the column index.
        let mut data = DMatrix::<Complex64>::zeros(n_out, n_out);
        for r in 0..rest {
            for (o, row) in op.rows.iter().enumerate() {
                let col_out = out_split.index(o, r);
                for &(i, u) in row {
                    let col_in = in_split.index(i, r);
                    let uc = u.conj();
                    for row_out in 0..n_out {
                        let h = half[(row_out, col_in)];
                        if h != ZERO {
                            data[(row_out, col_out)] += h * uc;
                        }
                    }
                }
            }
        }
        DensityMatrix::new(modes, data)
    }

    /// Diagonal of `U rho U^dagger` without forming the full matrix.
    pub fn transformed_statistics(
        &self,
        labels: &[&str],
        op: &LocalOp,
    ) -> Result<PhotonStatistics, FockError> {
        let positions = self.positions(labels)?;
        self.check_op(&positions, op)?;
        let modes = self.transformed_modes(&positions, op);
        let in_split = Split::new(&self.layout(), &positions);
        let out_layout = Layout::new(&modes.iter().map(|m| m.dim).collect::<Vec<_>>());
        let out_split = Split::new(&out_layout, &positions);
        let mut probs = vec![0.0; out_layout.total];
        for r in 0..in_split.rest_total {
            for (o, row) in op.rows.iter().enumerate() {
                let mut acc = ZERO;
                for &(i, u) in row {
                    let a = in_split.index(i, r);
                    for &(j, v) in row {
                        let b = in_split.index(j, r);
                        acc += u * self.data[(a, b)] * v.conj();
                    }
                }
                probs[out_split.index(o, r)] = acc.re;
            }
        }
        Ok(PhotonStatistics { modes, probs })
    }

    /// Partial trace with a diagonal weight on the traced modes:
    /// sum_t w(t) <t| rho |t>.
    fn reduce(&self, keep: &[usize], weight: impl Fn(&[usize]) -> f64) -> DensityMatrix {
        let layout = self.layout();
        let traced: Vec<usize> = (0..self.modes.len()).filter(|m| !keep.contains(m)).collect();
        let split = Split::new(&layout, keep);
        let traced_layout =
            Layout::new(&traced.iter().map(|&m| self.modes[m].dim).collect::<Vec<_>>());
        let weights: Vec<f64> = (0..split.rest_total)
            .map(|t| {
                let digits: Vec<usize> =
                    (0..traced.len()).map(|k| traced_layout.digit(t, k)).collect();
                weight(&digits)
            })
            .collect();
        let nk = split.sel_total;
        let mut data = DMatrix::<Complex64>::zeros(nk, nk);
        for (t, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for j in 0..nk {
                let cj = split.index(j, t);
                for i in 0..nk {
                    data[(i, j)] += self.data[(split.index(i, t), cj)] * w;
                }
            }
        }
        let modes = keep.iter().map(|&m| self.modes[m].clone()).collect();
        DensityMatrix { modes, data }
    }
}

/// Kronecker composition; the mode list is the concatenation.
pub fn tensor(a: &DensityMatrix, b: &DensityMatrix) -> Result<DensityMatrix, FockError> {
    for m in &b.modes {
        if a.modes.iter().any(|x| x.label == m.label) {
            return Err(FockError::ModeCollision(m.label.clone()));
        }
    }
    let modes = a.modes.iter().chain(&b.modes).cloned().collect();
    DensityMatrix::new(modes, a.data.kronecker(&b.data))
}

/// Traces out every mode not listed in `keep`. The kept modes retain their
/// original relative order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix, FockError> {
    if keep.is_empty() {
        return Err(FockError::InvalidParameter("keep must be non-empty".into()));
    }
    let mut positions = rho.positions(keep)?;
    positions.sort_unstable();
    Ok(rho.reduce(&positions, |_| 1.0))
}

/// Threshold click on `label` with per-photon efficiency `efficiency`.
///
/// The no-click element is sum_n (1 - eta)^n |n><n|. Returns the normalized
/// state of the remaining modes after a click, and the click probability.
pub fn herald_click(
    rho: &DensityMatrix,
    label: &str,
    efficiency: f64,
) -> Result<(DensityMatrix, f64), FockError> {
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(FockError::InvalidParameter(format!(
            "efficiency must lie in [0, 1], got {efficiency}"
        )));
    }
    let pos = rho.mode_position(label)?;
    let keep: Vec<usize> = (0..rho.modes.len()).filter(|&m| m != pos).collect();
    let miss = 1.0 - efficiency;
    let reduced = rho.reduce(&keep, |n| 1.0 - miss.powi(n[0] as i32));
    let p = reduced.trace();
    if !(p >= 1e-300) {
        return Err(FockError::ZeroProbability(p));
    }
    let data = reduced.data / Complex64::new(p, 0.0);
    Ok((
        DensityMatrix {
            modes: reduced.modes,
            data,
        },
        p,
    ))
}
