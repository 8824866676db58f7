//! Orthonormal measurement bases.
//!
//! A [`Basis`] is a unitary matrix whose column `k` is the state vector of
//! outcome `k`. Every column is rephased so that its first component with
//! magnitude above [`tol::PHASE_FLOOR`] is real and non-negative; this gives
//! a deterministic representative for tests that compare amplitudes.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{rng, tol, Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    vectors: DMatrix<C64>,
    labels: Vec<String>,
    values: Option<Vec<f64>>,
}

impl Basis {
    /// Builds a basis from a square matrix of column vectors.
    ///
    /// Columns within [`tol::INPUT_ORTHONORMALITY`] of orthonormal are
    /// accepted and re-orthonormalized; anything worse is rejected.
    /// Empty `labels` get the default labels `"0"`, `"1"`, ...
    pub fn new(columns: DMatrix<C64>, labels: Vec<String>, values: Option<Vec<f64>>) -> Result<Self> {
        let dim = columns.nrows();
        if columns.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "basis matrix is {}x{}, expected square",
                dim,
                columns.ncols()
            )));
        }
        if dim < 2 {
            return Err(Error::DimensionMismatch(format!("dimension {dim} < 2")));
        }
        let labels = if labels.is_empty() {
            (0..dim).map(|k| k.to_string()).collect()
        } else {
            labels
        };
        if labels.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for dimension {dim}",
                labels.len()
            )));
        }
        if let Some(v) = &values {
            if v.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "{} values for dimension {dim}",
                    v.len()
                )));
            }
        }

        let deviation = gram_deviation(&columns);
        if !(deviation <= tol::INPUT_ORTHONORMALITY) {
            return Err(Error::NotOrthonormal { deviation });
        }
        let mut vectors = columns;
        if deviation > tol::REORTHONORMALIZE_ABOVE {
            gram_schmidt(&mut vectors);
        }
        fix_phases(&mut vectors);
        Ok(Basis { vectors, labels, values })
    }

    /// Builds a basis from a list of column vectors (possibly ragged input).
    pub fn from_columns(columns: &[Vec<C64>], labels: Vec<String>, values: Option<Vec<f64>>) -> Result<Self> {
        let dim = columns.len();
        if let Some(bad) = columns.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "column of length {} in a basis of {dim} columns",
                bad.len()
            )));
        }
        let m = DMatrix::from_fn(dim, dim, |j, k| columns[k][j]);
        Basis::new(m, labels, values)
    }

    /// The standard basis `|0⟩, …, |d−1⟩`.
    pub fn computational(dim: usize) -> Result<Self> {
        Basis::new(DMatrix::identity(dim, dim), Vec::new(), None)
    }

    /// Discrete Fourier basis: column `k` has components `exp(2πi jk/d)/√d`.
    pub fn fourier(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimensionMismatch(format!("dimension {dim} < 2")));
        }
        let norm = 1.0 / (dim as f64).sqrt();
        let m = DMatrix::from_fn(dim, dim, |j, k| {
            // reduce jk mod d first so the angle stays small
            let jk = (j * k) % dim;
            C64::from_polar(norm, 2.0 * std::f64::consts::PI * jk as f64 / dim as f64)
        });
        let labels = (0..dim).map(|k| format!("f{k}")).collect();
        Basis::new(m, labels, None)
    }

    /// Haar-random basis, deterministic in `seed`.
    ///
    /// QR-decomposes a complex Ginibre matrix and multiplies each column of
    /// `Q` by the phase of the matching diagonal entry of `R`, which makes the
    /// unitary exactly Haar distributed.
    pub fn haar_random(dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimensionMismatch(format!("dimension {dim} < 2")));
        }
        let mut rng = rng::substream(seed, 0);
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        // column-major fill keeps the draw order independent of nalgebra internals
        let mut entries = Vec::with_capacity(dim * dim);
        for _ in 0..dim * dim {
            let re = draw();
            let im = draw();
            entries.push(C64::new(re * scale, im * scale));
        }
        let ginibre = DMatrix::from_vec(dim, dim, entries);
        let qr = ginibre.qr();
        let mut q = qr.q();
        let r = qr.r();
        for k in 0..dim {
            let diag = r[(k, k)];
            let phase = if diag.norm() > 0.0 { diag / diag.norm() } else { C64::new(1.0, 0.0) };
            for j in 0..dim {
                q[(j, k)] *= phase;
            }
        }
        let labels = (0..dim).map(|k| format!("u{k}")).collect();
        Basis::new(q, labels, None)
    }

    /// Qubit eigenbasis of the Pauli operator along `axis` (`'x'`, `'y'` or `'z'`).
    pub fn pauli(axis: char) -> Result<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (cols, labels): ([[C64; 2]; 2], [&str; 2]) = match axis.to_ascii_lowercase() {
            'z' => ([[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]], ["0", "1"]),
            'x' => ([[C64::new(h, 0.0), C64::new(h, 0.0)], [C64::new(h, 0.0), C64::new(-h, 0.0)]], ["+", "-"]),
            'y' => ([[C64::new(h, 0.0), C64::new(0.0, h)], [C64::new(h, 0.0), C64::new(0.0, -h)]], ["+i", "-i"]),
            other => return Err(Error::Precondition(format!("unknown Pauli axis '{other}'"))),
        };
        let columns: Vec<Vec<C64>> = cols.iter().map(|c| c.to_vec()).collect();
        Basis::from_columns(&columns, labels.iter().map(|s| s.to_string()).collect(), None)
    }

    /// Same basis with outcome values attached.
    pub fn with_values(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for dimension {}",
                values.len(),
                self.dim()
            )));
        }
        self.values = Some(values);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for dimension {}",
                labels.len(),
                self.dim()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn vectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    /// Component `j` of outcome vector `k`.
    pub fn amp(&self, j: usize, k: usize) -> C64 {
        self.vectors[(j, k)]
    }

    pub fn column(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k).iter().copied().collect()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    pub fn check_index(&self, k: usize) -> Result<()> {
        if k < self.dim() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: k, dim: self.dim() })
        }
    }

    /// `⟨x|y⟩` for outcome `x` of `self` and outcome `y` of `other`.
    pub fn overlap(&self, x: usize, other: &Basis, y: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..self.dim() {
            acc += self.vectors[(j, x)].conj() * other.vectors[(j, y)];
        }
        acc
    }

    /// Matrix of overlaps `G[x, y] = ⟨x|y⟩` between `self` and `other`.
    pub fn overlaps(&self, other: &Basis) -> DMatrix<C64> {
        self.vectors.adjoint() * &other.vectors
    }

    /// Largest component magnitude of outcome vector `k`.
    pub fn max_amplitude(&self, k: usize) -> f64 {
        self.vectors.column(k).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Same dimension and vectors within `1e-12`.
    pub fn same_as(&self, other: &Basis) -> bool {
        self.dim() == other.dim()
            && self
                .vectors
                .iter()
                .zip(other.vectors.iter())
                .all(|(a, b)| (a - b).norm() <= 1e-12)
    }

    pub fn require_same_dim(&self, other: &Basis) -> Result<()> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("dimensions {} and {}", self.dim(), other.dim())))
        }
    }

    /// Worst deviation of `V†V` and `VV†` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let v = &self.vectors;
        let left = gram_deviation(v);
        let right = gram_deviation(&v.adjoint());
        left.max(right)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&BasisJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: BasisJson = serde_json::from_str(s)?;
        raw.try_into()
    }
}

/// Serialized layout: `re[j][k]`, `im[j][k]` hold component `j` of outcome `k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisJson {
    pub dim: usize,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&Basis> for BasisJson {
    fn from(b: &Basis) -> Self {
        let d = b.dim();
        BasisJson {
            dim: d,
            labels: b.labels.clone(),
            values: b.values.clone(),
            re: (0..d).map(|j| (0..d).map(|k| b.vectors[(j, k)].re).collect()).collect(),
            im: (0..d).map(|j| (0..d).map(|k| b.vectors[(j, k)].im).collect()).collect(),
        }
    }
}

impl TryFrom<BasisJson> for Basis {
    type Error = Error;

    fn try_from(raw: BasisJson) -> Result<Self> {
        let d = raw.dim;
        let rows_ok = raw.re.len() == d
            && raw.im.len() == d
            && raw.re.iter().chain(raw.im.iter()).all(|row| row.len() == d);
        if !rows_ok {
            return Err(Error::DimensionMismatch(format!("re/im arrays are not {d}x{d}")));
        }
        let m = DMatrix::from_fn(d, d, |j, k| C64::new(raw.re[j][k], raw.im[j][k]));
        Basis::new(m, raw.labels, raw.values)
    }
}

impl Serialize for Basis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BasisJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Basis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = BasisJson::deserialize(d)?;
        Basis::try_from(raw).map_err(serde::de::Error::custom)
    }
}

/// Transition probability `|⟨x|y⟩|²`.
pub fn ergodic_prob(x_basis: &Basis, x: usize, y_basis: &Basis, y: usize) -> Result<f64> {
    x_basis.require_same_dim(y_basis)?;
    x_basis.check_index(x)?;
    y_basis.check_index(y)?;
    Ok(x_basis.overlap(x, y_basis, y).norm_sqr())
}

/// All transition probabilities between two bases; `probs[(x, y)] = |⟨x|y⟩|²`.
#[derive(Clone, Debug)]
pub struct ErgodicTable {
    pub rows: Basis,
    pub cols: Basis,
    pub probs: DMatrix<f64>,
}

impl ErgodicTable {
    pub fn new(rows: &Basis, cols: &Basis) -> Result<Self> {
        rows.require_same_dim(cols)?;
        let probs = rows.overlaps(cols).map(|c| c.norm_sqr());
        Ok(ErgodicTable { rows: rows.clone(), cols: cols.clone(), probs })
    }

    /// Largest deviation of a column sum from 1.
    pub fn completeness_deviation(&self) -> f64 {
        (0..self.probs.ncols())
            .map(|y| (self.probs.column(y).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn gram_deviation(v: &DMatrix<C64>) -> f64 {
    let g = v.adjoint() * v;
    let n = g.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for k in 0..n {
            let target = if j == k { 1.0 } else { 0.0 };
            let dev = (g[(j, k)] - C64::new(target, 0.0)).norm();
            if dev.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(dev);
        }
    }
    worst
}

fn gram_schmidt(v: &mut DMatrix<C64>) {
    let n = v.ncols();
    for k in 0..n {
        for j in 0..k {
            let proj: C64 = v.column(j).iter().zip(v.column(k).iter()).map(|(a, b)| a.conj() * b).sum();
            let col_j = v.column(j).clone_owned();
            let mut col_k = v.column_mut(k);
            col_k -= col_j * proj;
        }
        let norm = v.column(k).norm();
        v.column_mut(k).unscale_mut(norm);
    }
}

fn fix_phases(v: &mut DMatrix<C64>) {
    for k in 0..v.ncols() {
        let lead = v.column(k).iter().copied().find(|c| c.norm() > tol::PHASE_FLOOR);
        let Some(lead) = lead else { continue };
        if lead.im == 0.0 && lead.re >= 0.0 {
            continue;
        }
        let phase = lead.conj() / lead.norm();
        for j in 0..v.nrows() {
            v[(j, k)] *= phase;
        }
        // pin the leading component to exactly real
        if let Some(j0) = (0..v.nrows()).find(|&j| v[(j, k)].norm() > tol::PHASE_FLOOR) {
            v[(j0, k)] = C64::new(v[(j0, k)].norm(), 0.0);
        }
    }
}
