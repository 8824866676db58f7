//! A particle on a periodic 1D grid, carrying three bases on one
//! `d`-dimensional space: position, momentum, and energy.
//!
//! Conventions:
//! - `x_j = (j − d/2) dx`, `dx = L/d`; `p_k = 2πħ (k − d/2) / L`, so the
//!   zero-momentum index is `d/2` and the momentum zone has width `W = 2πħd/L`.
//! - Momentum vectors are the centred discrete Fourier modes
//!   `⟨x_j|p_k⟩ = e^{i x_j p_k/ħ}/√d`, up to the per-column sign the basis phase
//!   convention imposes; `|⟨x|p⟩|² = 1/d` plays the role of `1/(2πħ)`.
//! - `H = F diag(p²/2m) F† + diag(V)` is real symmetric.
//! - The box is a single grid point of height `10⁶ ħ²/(mL²)` at `j = 0`.
//! - Degenerate energy levels (free particle `±p`) are split by the momentum
//!   operator and ordered by ascending momentum.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::ops::Range;

use crate::ccp::{ccp_column, ccp_value, condition_overlap};
use crate::{tol, Basis, Error, Result, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum Potential {
    Free,
    Box,
    Harmonic { omega: f64 },
    Custom { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub d: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub mass: f64,
    pub hbar: f64,
    pub potential: Potential,
}

impl LatticeConfig {
    pub fn new(d: usize, length: f64, mass: f64, hbar: f64, potential: Potential) -> Self {
        Self { d, length, mass, hbar, potential }
    }

    /// Grid checks `build_lattice` performs before any linear algebra.
    pub fn validate(&self) -> Result<()> {
        if self.d < 8 || !self.d.is_multiple_of(2) {
            return Err(Error::BadGrid(format!("d must be even and at least 8, got {}", self.d)));
        }
        for (name, v) in [("L", self.length), ("mass", self.mass), ("hbar", self.hbar)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::BadGrid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        match &self.potential {
            Potential::Harmonic { omega } if !(omega.is_finite() && *omega > 0.0) => {
                Err(Error::BadGrid(format!("omega must be positive, got {omega}")))
            }
            Potential::Custom { values } if values.len() != self.d => {
                Err(Error::BadGrid(format!("custom potential has {} values for d = {}", values.len(), self.d)))
            }
            Potential::Custom { values } if values.iter().any(|v| !v.is_finite()) => {
                Err(Error::BadGrid("custom potential contains non-finite values".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Which part of a state the phase-gradient check reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// The full eigenfunction. Real eigenfunctions have no phase gradient,
    /// only sign flips, which unwrapping rejects as ambiguous.
    Full,
    /// The right-moving component: momenta `p > 0`, with the `p = 0` mode at half weight.
    Forward,
}

#[derive(Clone, Debug)]
pub struct LatticeSystem {
    config: LatticeConfig,
    dx: f64,
    x_grid: Vec<f64>,
    p_grid: Vec<f64>,
    potential: Vec<f64>,
    /// Raw Fourier matrix `e^{i x_j p_k/ħ}/√d`, before phase fixing.
    fourier: DMatrix<C64>,
    hamiltonian: DMatrix<f64>,
    h_norm: f64,
    x_basis: Basis,
    p_basis: Basis,
    e_basis: Basis,
}

/// Relative gap below which eigenvalues count as degenerate.
const DEGENERACY_TOL: f64 = 1e-9;

pub fn build_lattice(config: &LatticeConfig) -> Result<LatticeSystem> {
    config.validate()?;
    let d = config.d;
    let h = d / 2;
    let (len, mass, hbar) = (config.length, config.mass, config.hbar);
    let dx = len / d as f64;
    let x_grid: Vec<f64> = (0..d).map(|j| (j as f64 - h as f64) * dx).collect();
    let p_grid: Vec<f64> = (0..d).map(|k| TAU * hbar * (k as f64 - h as f64) / len).collect();

    // x_j p_k / ħ = 2π (j−h)(k−h)/d; reduce the integer product mod d first.
    let fourier = DMatrix::from_fn(d, d, |j, k| {
        let n = ((j as i64 - h as i64) * (k as i64 - h as i64)).rem_euclid(d as i64);
        C64::from_polar(1.0 / (d as f64).sqrt(), TAU * n as f64 / d as f64)
    });

    let potential: Vec<f64> = match &config.potential {
        Potential::Free => vec![0.0; d],
        Potential::Box => {
            let mut v = vec![0.0; d];
            v[0] = 1e6 * hbar * hbar / (mass * len * len);
            v
        }
        Potential::Harmonic { omega } => x_grid.iter().map(|x| 0.5 * mass * omega * omega * x * x).collect(),
        Potential::Custom { values } => values.clone(),
    };

    let kinetic_diag = DMatrix::from_diagonal(&DVector::from_iterator(d, p_grid.iter().map(|p| C64::new(p * p / (2.0 * mass), 0.0))));
    let kinetic = &fourier * kinetic_diag * fourier.adjoint();
    let k_scale = kinetic.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let herm = (&kinetic - kinetic.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    let imag = kinetic.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if herm.max(imag) > 1e-10 * k_scale {
        return Err(Error::NonHermitian(herm.max(imag) / k_scale));
    }
    let mut hamiltonian = kinetic.map(|c| c.re);
    for j in 0..d {
        hamiltonian[(j, j)] += potential[j];
    }
    // exact symmetry for the eigensolver
    let hamiltonian = (&hamiltonian + hamiltonian.transpose()) * 0.5;

    let eig = SymmetricEigen::new(hamiltonian.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let h_norm = energies.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let mut vecs = DMatrix::from_fn(d, d, |j, n| C64::new(eig.eigenvectors[(j, order[n])], 0.0));

    let momentum_op = &fourier * DMatrix::from_diagonal(&DVector::from_iterator(d, p_grid.iter().map(|&p| C64::new(p, 0.0)))) * fourier.adjoint();
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && energies[end] - energies[start] <= DEGENERACY_TOL * h_norm.max(1.0) {
            end += 1;
        }
        if end - start > 1 {
            split_by_momentum(&mut vecs, start..end, &momentum_op);
        }
        start = end;
    }

    let x_basis = Basis::computational(d)?
        .with_labels((0..d).map(|j| format!("x{j}")).collect())?
        .with_values(x_grid.clone())?;
    let p_basis = Basis::new(fourier.clone(), (0..d).map(|k| format!("p{k}")).collect(), Some(p_grid.clone()))?;
    let e_basis = Basis::new(vecs, (0..d).map(|n| format!("E{n}")).collect(), Some(energies))?;

    Ok(LatticeSystem {
        config: config.clone(),
        dx,
        x_grid,
        p_grid,
        potential,
        fourier,
        hamiltonian,
        h_norm,
        x_basis,
        p_basis,
        e_basis,
    })
}

/// Re-diagonalizes a degenerate block against the momentum operator.
fn split_by_momentum(vecs: &mut DMatrix<C64>, block: Range<usize>, momentum_op: &DMatrix<C64>) {
    let sub = vecs.columns(block.start, block.len()).into_owned();
    let restricted = sub.adjoint() * momentum_op * &sub;
    let restricted = (&restricted + restricted.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(restricted);
    let mut order: Vec<usize> = (0..block.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let rotated = &sub * &eig.eigenvectors;
    for (slot, &i) in order.iter().enumerate() {
        vecs.set_column(block.start + slot, &rotated.column(i));
    }
}

/// One row of the phase-gradient comparison.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentumRow {
    pub x_index: usize,
    pub x: f64,
    pub phase_gradient_momentum: f64,
    pub classical_momentum: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassicalMomentumReport {
    pub rows: Vec<MomentumRow>,
    pub max_relative_deviation: f64,
    /// Half-width, in grid points, of the local fit.
    pub fit_half_width: usize,
}

/// Nearest-branch unwrapping that fails on ambiguous steps and on points
/// whose phase is undefined.
fn unwrap_strict(values: &[C64], offset: usize) -> Result<Vec<f64>> {
    let scale = values.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut out = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        if v.norm() <= tol::PHASE_FLOOR * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::PhaseUnwrapFailure { index: offset + i });
        }
        let phase = v.arg();
        match out.last() {
            None => out.push(phase),
            Some(&prev) => {
                let step = wrap(phase - prev);
                if step.abs() > PI * (1.0 - 1e-6) {
                    return Err(Error::PhaseUnwrapFailure { index: offset + i });
                }
                out.push(prev + step);
            }
        }
    }
    Ok(out)
}

/// Unwrapping that always picks the nearest branch, for exports.
fn unwrap_lenient(values: &[C64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for v in values {
        let phase = v.arg();
        match out.last() {
            None => out.push(phase),
            Some(&prev) => out.push(prev + wrap(phase - prev)),
        }
    }
    out
}

/// Into `(−π, π]`.
fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

impl LatticeSystem {
    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.d
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn hbar(&self) -> f64 {
        self.config.hbar
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn p_grid(&self) -> &[f64] {
        &self.p_grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn hamiltonian(&self) -> &DMatrix<f64> {
        &self.hamiltonian
    }

    /// Spectral norm of `H`.
    pub fn h_norm(&self) -> f64 {
        self.h_norm
    }

    pub fn x_basis(&self) -> &Basis {
        &self.x_basis
    }

    pub fn p_basis(&self) -> &Basis {
        &self.p_basis
    }

    pub fn e_basis(&self) -> &Basis {
        &self.e_basis
    }

    pub fn energies(&self) -> &[f64] {
        self.e_basis.values().expect("energy basis carries eigenvalues")
    }

    pub fn zero_momentum_index(&self) -> usize {
        self.config.d / 2
    }

    pub fn nearest_x_index(&self, x: f64) -> usize {
        nearest(&self.x_grid, x)
    }

    pub fn nearest_p_index(&self, p: f64) -> usize {
        nearest(&self.p_grid, p)
    }

    /// Largest `‖H v − E v‖` over eigenpairs.
    pub fn max_eigen_residual(&self) -> f64 {
        let hc = self.hamiltonian.map(|v| C64::new(v, 0.0));
        let vecs = self.e_basis.vectors();
        self.energies()
            .iter()
            .enumerate()
            .map(|(n, &e)| {
                let v = vecs.column(n);
                (&hc * v - v * C64::new(e, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `p(x|E,p_ref)` over positions.
    pub fn ccp_x_e_p(&self, e: usize, p_ref: usize) -> Result<Vec<C64>> {
        ccp_column(&self.x_basis, &self.e_basis, e, &self.p_basis, p_ref)
    }

    /// `sqrt(p(p_ref|E)/p(x|p_ref)) p(x|E,p_ref)`: the eigenfunction in the
    /// gauge of the reference momentum.
    pub fn renormalized_profile(&self, e: usize, p_ref: usize) -> Result<Vec<C64>> {
        let col = self.ccp_x_e_p(e, p_ref)?;
        let p_e = self.p_basis.overlap(p_ref, &self.e_basis, e).norm_sqr();
        Ok(col
            .iter()
            .enumerate()
            .map(|(x, c)| c * (p_e / self.x_basis.overlap(x, &self.p_basis, p_ref).norm_sqr()).sqrt())
            .collect())
    }

    /// `p(x|E,p_to)` from `p(x|E,p_from)` by the phase factor
    /// `e^{i(p_from − p_to)x/ħ}` and renormalization over `x`.
    pub fn gauge_shift(&self, e: usize, p_from: usize, p_to: usize) -> Result<Vec<C64>> {
        self.p_basis.check_index(p_to)?;
        condition_overlap(&self.e_basis, e, &self.p_basis, p_to)?;
        let from = self.ccp_x_e_p(e, p_from)?;
        let dp = self.p_grid[p_from] - self.p_grid[p_to];
        let shifted: Vec<C64> = from
            .iter()
            .zip(&self.x_grid)
            .map(|(c, &x)| c * C64::from_polar(1.0, dp * x / self.hbar()))
            .collect();
        let norm: C64 = shifted.iter().sum();
        if norm.norm() <= tol::PHASE_FLOOR {
            return Err(Error::DegenerateDenominator { magnitude: norm.norm() });
        }
        Ok(shifted.into_iter().map(|c| c / norm).collect())
    }

    /// `(p(x|E,p) p(p|E,x), |⟨x|p⟩|²)`; the product equals `1/d`.
    pub fn conjugate_product_check(&self, e: usize, x: usize, p: usize) -> Result<(C64, f64)> {
        let fwd = ccp_value(&self.x_basis, x, &self.e_basis, e, &self.p_basis, p)?;
        let back = ccp_value(&self.p_basis, p, &self.e_basis, e, &self.x_basis, x)?;
        Ok((fwd * back, 1.0 / self.dim() as f64))
    }

    /// Largest deviation between `p(p|E,x_ref)` and its evaluation from
    /// `p(x'|E,p_ref)` by the discrete Fourier relation, over all `p`.
    ///
    /// Deviations are measured in units of `max(1, max_p |p(p|E,x_ref)|)`:
    /// where `⟨x_ref|E⟩` is tiny the conditionals grow like its inverse and
    /// only their relative error is meaningful.
    pub fn fourier_relation_check(&self, e: usize, x_ref: usize, p_ref: usize) -> Result<f64> {
        self.x_basis.check_index(x_ref)?;
        let col = self.ccp_x_e_p(e, p_ref)?;
        let d = self.dim() as f64;
        let hbar = self.hbar();
        let x0 = self.x_grid[x_ref];
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for (p, &pk) in self.p_grid.iter().enumerate() {
            let dp = self.p_grid[p_ref] - pk;
            let num: C64 = col.iter().zip(&self.x_grid).map(|(c, &x)| c * C64::from_polar(1.0, dp * x / hbar)).sum();
            let den = col[x_ref] * C64::from_polar(d, dp * x0 / hbar);
            let direct = ccp_value(&self.p_basis, p, &self.e_basis, e, &self.x_basis, x_ref)?;
            worst = worst.max((num / den - direct).norm());
            scale = scale.max(direct.norm());
        }
        Ok(worst / scale)
    }

    /// `‖(K_ref + V − E) f‖ / ‖f‖` for `f = p(x|E,p_ref)`, where `K_ref` is
    /// `(−iħ∂x + p_ref)²/2m` with the spectral derivative. Shifted momenta are
    /// folded back into the grid's zone, as the kinetic term of `H` uses them.
    pub fn schrodinger_residual(&self, e: usize, p_ref: usize) -> Result<f64> {
        let f = DVector::from_vec(self.ccp_x_e_p(e, p_ref)?);
        let d = self.dim();
        let width = TAU * self.hbar() * d as f64 / self.config.length;
        let pr = self.p_grid[p_ref];
        let mass = self.config.mass;
        let coeffs = self.fourier.adjoint() * &f;
        let scaled = DVector::from_fn(d, |k, _| {
            let q = (self.p_grid[k] + pr + width / 2.0).rem_euclid(width) - width / 2.0;
            coeffs[k] * (q * q / (2.0 * mass))
        });
        let mut out = &self.fourier * scaled;
        let energy = self.energies()[e];
        for j in 0..d {
            out[j] += f[j] * (self.potential[j] - energy);
        }
        Ok(out.norm() / f.norm())
    }

    /// Branch projection of eigenstate `e`, times `⟨p_ref|x⟩` for the
    /// zero-momentum reference. Its phase differs from that of
    /// `p(x|E,p_ref)` by an `x`-independent constant, and it stays defined
    /// when `⟨p_ref|E⟩` vanishes.
    fn reference_numerator(&self, e: usize, branch: Branch) -> Result<Vec<C64>> {
        self.e_basis.check_index(e)?;
        let psi = self.e_basis.vectors().column(e).into_owned();
        let psi = match branch {
            Branch::Full => psi,
            Branch::Forward => {
                let mut c = self.fourier.adjoint() * psi;
                for (k, &p) in self.p_grid.iter().enumerate() {
                    if p < 0.0 {
                        c[k] = C64::new(0.0, 0.0);
                    } else if p == 0.0 {
                        c[k] *= 0.5;
                    }
                }
                &self.fourier * c
            }
        };
        let p0 = self.zero_momentum_index();
        Ok((0..self.dim()).map(|x| self.p_basis.overlap(p0, &self.x_basis, x) * psi[x]).collect())
    }

    /// Momentum from the phase gradient of the conditional with the
    /// zero-momentum reference, compared with `sqrt(2m(E − V(x)))`.
    ///
    /// The unwrapped phase is fitted by a straight line over one local
    /// wavelength on either side of each point; the local wavelength comes
    /// from the mean nearest-neighbour gradient over the window.
    pub fn classical_momentum_check(&self, e: usize, window: Range<usize>, branch: Branch) -> Result<ClassicalMomentumReport> {
        let d = self.dim();
        if window.start >= window.end || window.end > d || window.len() < 3 {
            return Err(Error::Precondition(format!("window {window:?} must hold at least 3 of {d} points")));
        }
        let energy = self.energies()[e];
        let mass = self.config.mass;
        let hbar = self.hbar();
        let classical: Vec<f64> = window
            .clone()
            .map(|j| {
                let k = 2.0 * mass * (energy - self.potential[j]);
                if k > 0.0 {
                    Ok(k.sqrt())
                } else {
                    Err(Error::Precondition(format!("classical turning point inside the window at index {j}")))
                }
            })
            .collect::<Result<_>>()?;

        let numer = self.reference_numerator(e, branch)?;
        let inner = unwrap_strict(&numer[window.clone()], window.start)?;
        let mean_grad = (inner[inner.len() - 1] - inner[0]) / ((inner.len() - 1) as f64 * self.dx);
        let wavelength = TAU / mean_grad.abs();
        if !(wavelength >= 4.0 * self.dx) {
            return Err(Error::Precondition(format!("local wavelength {wavelength} is under four grid steps")));
        }
        let half = ((wavelength / self.dx).round() as usize).max(1);
        let lo = window.start.saturating_sub(half);
        let hi = (window.end + half).min(d);
        let phase = unwrap_strict(&numer[lo..hi], lo)?;
        let xs = &self.x_grid[lo..hi];

        let mut rows = Vec::with_capacity(window.len());
        let mut worst: f64 = 0.0;
        for (i, j) in window.clone().enumerate() {
            let a = j.saturating_sub(half).max(lo) - lo;
            let b = (j + half + 1).min(hi) - lo;
            let grad = hbar * slope(&xs[a..b], &phase[a..b]);
            worst = worst.max((grad - classical[i]).abs() / classical[i]);
            rows.push(MomentumRow { x_index: j, x: self.x_grid[j], phase_gradient_momentum: grad, classical_momentum: classical[i] });
        }
        Ok(ClassicalMomentumReport { rows, max_relative_deviation: worst, fit_half_width: half })
    }

    /// Weight of the energy bin containing `H(x,p)` in the coarse-grained
    /// `p(E|x,p)`: `|S_0|² / Σ_k |S_k|²`, with `S_k` the sum of conditionals
    /// over energies in bin `k` and bins of width `bin_width` centred on `H(x,p)`.
    pub fn concentration_ratio(&self, x: usize, p: usize, bin_width: f64) -> Result<f64> {
        let col = ccp_column(&self.e_basis, &self.x_basis, x, &self.p_basis, p)?;
        let classical = self.p_grid[p].powi(2) / (2.0 * self.config.mass) + self.potential[x];
        let mut bins: std::collections::BTreeMap<i64, C64> = Default::default();
        for (c, &en) in col.iter().zip(self.energies()) {
            let k = ((en - classical) / bin_width + 0.5).floor() as i64;
            *bins.entry(k).or_default() += c;
        }
        let total: f64 = bins.values().map(|s| s.norm_sqr()).sum();
        Ok(bins.get(&0).map_or(0.0, |s| s.norm_sqr()) / total)
    }

    /// CSV rows `(x, re, im, magnitude, phase_unwrapped)` for a distribution over positions.
    pub fn distribution_csv(&self, values: &[C64]) -> Result<String> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("{} values for {} grid points", values.len(), self.dim())));
        }
        let phases = unwrap_lenient(values);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x", "re", "im", "magnitude", "phase_unwrapped"])?;
        for ((x, v), ph) in self.x_grid.iter().zip(values).zip(phases) {
            w.write_record([x.to_string(), v.re.to_string(), v.im.to_string(), v.norm().to_string(), ph.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn nearest(grid: &[f64], v: f64) -> usize {
    grid.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(i, _)| i)
        .expect("grid is non-empty")
}

/// Orbit-averaged [`LatticeSystem::concentration_ratio`] for the harmonic
/// oscillator (`L = 20`, `m = ω = 1`) with `ħ = 64/d`, so the classical
/// scale grows with `d`: eight phase-space points on the orbit `H = 8`,
/// energy bins of width 4.
pub fn orbit_concentration(d: usize) -> Result<f64> {
    let sys = build_lattice(&LatticeConfig::new(d, 20.0, 1.0, 64.0 / d as f64, Potential::Harmonic { omega: 1.0 }))?;
    let radius = (2.0 * 8.0f64).sqrt();
    let mut acc = 0.0;
    for i in 0..8 {
        let theta = TAU * i as f64 / 8.0 + 0.3;
        let x = sys.nearest_x_index(radius * theta.cos());
        let p = sys.nearest_p_index(radius * theta.sin());
        acc += sys.concentration_ratio(x, p, 4.0)?;
    }
    Ok(acc / 8.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(d: usize, len: f64, pot: Potential) -> LatticeSystem {
        build_lattice(&LatticeConfig::new(d, len, 1.0, 1.0, pot)).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        for cfg in [
            LatticeConfig::new(7, 1.0, 1.0, 1.0, Potential::Free),
            LatticeConfig::new(6, 1.0, 1.0, 1.0, Potential::Free),
            LatticeConfig::new(16, -1.0, 1.0, 1.0, Potential::Free),
            LatticeConfig::new(16, 1.0, 0.0, 1.0, Potential::Free),
            LatticeConfig::new(16, 1.0, 1.0, 1.0, Potential::Custom { values: vec![0.0; 3] }),
            LatticeConfig::new(16, 1.0, 1.0, 1.0, Potential::Harmonic { omega: -1.0 }),
        ] {
            assert!(matches!(build_lattice(&cfg), Err(Error::BadGrid(_))), "{cfg:?}");
        }
    }

    #[test]
    fn config_json_shape() {
        let cfg = LatticeConfig::new(16, 20.0, 1.0, 1.0, Potential::Harmonic { omega: 2.0 });
        let v: serde_json::Value = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(v, serde_json::json!({"d": 16, "L": 20.0, "mass": 1.0, "hbar": 1.0, "potential": {"kind": "harmonic", "params": {"omega": 2.0}}}));
        let free = LatticeConfig::from_json(r#"{"d":8,"L":1,"mass":1,"hbar":1,"potential":{"kind":"free"}}"#).unwrap();
        assert_eq!(free.potential, Potential::Free);
        let boxed = LatticeConfig::from_json(r#"{"d":8,"L":1,"mass":1,"hbar":1,"potential":{"kind":"box"}}"#).unwrap();
        assert_eq!(boxed.potential, Potential::Box);
    }

    #[test]
    fn free_energies_are_kinetic_and_states_are_momenta() {
        let s = sys(16, 2.0, Potential::Free);
        let mut expect: Vec<f64> = s.p_grid().iter().map(|p| p * p / 2.0).collect();
        expect.sort_by(f64::total_cmp);
        for (e, x) in s.energies().iter().zip(&expect) {
            assert!((e - x).abs() < 1e-10);
        }
        // E2 is the +1 quantum, E1 the −1 quantum
        let k_plus = s.zero_momentum_index() + 1;
        assert!((s.e_basis().overlap(2, s.p_basis(), k_plus).norm() - 1.0).abs() < 1e-10);
        assert!((s.e_basis().overlap(1, s.p_basis(), k_plus - 2).norm() - 1.0).abs() < 1e-10);
        assert!(s.max_eigen_residual() < 1e-8 * s.h_norm());
    }

    #[test]
    fn momentum_basis_is_unbiased() {
        let s = sys(16, 3.0, Potential::Free);
        for x in 0..16 {
            for p in 0..16 {
                assert!((s.x_basis().overlap(x, s.p_basis(), p).norm_sqr() - 1.0 / 16.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn box_ground_energy() {
        let s = sys(64, 1.0, Potential::Box);
        let target = PI * PI / 2.0;
        assert!((s.energies()[0] / target - 1.0).abs() < 0.02, "{}", s.energies()[0]);
    }

    #[test]
    fn harmonic_low_levels() {
        let s = sys(64, 20.0, Potential::Harmonic { omega: 1.0 });
        for n in 0..5 {
            let e = s.energies()[n];
            assert!((e / (n as f64 + 0.5) - 1.0).abs() < 0.01, "level {n}: {e}");
        }
    }

    #[test]
    fn odd_harmonic_state_has_no_zero_momentum_overlap() {
        let s = sys(64, 20.0, Potential::Harmonic { omega: 1.0 });
        assert!(matches!(s.ccp_x_e_p(1, s.zero_momentum_index()), Err(Error::OrthogonalCondition { .. })));
    }

    #[test]
    fn box_profile_is_ground_state() {
        let s = sys(32, 1.0, Potential::Box);
        let prof = s.renormalized_profile(0, s.zero_momentum_index()).unwrap();
        let psi = s.e_basis().column(0);
        // p0 column is constant, so the gauge is global: compare up to one phase
        let phase = prof[16] / psi[16];
        assert!((phase.norm() - 1.0).abs() < 1e-9);
        for (a, b) in prof.iter().zip(&psi) {
            assert!((a - b * phase).norm() < 1e-9);
        }
    }

    #[test]
    fn free_self_conditional_is_flat() {
        let s = sys(16, 1.0, Potential::Free);
        let k = s.zero_momentum_index() + 3;
        // E6 is the +3 quantum
        let col = s.ccp_x_e_p(6, k).unwrap();
        for c in &col {
            assert!((c - C64::new(1.0 / 16.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn gauge_shift_matches_direct() {
        let s = sys(32, 1.0, Potential::Box);
        let p0 = s.zero_momentum_index();
        let same = s.gauge_shift(0, p0, p0).unwrap();
        for (a, b) in same.iter().zip(&s.ccp_x_e_p(0, p0).unwrap()) {
            assert!((a - b).norm() < 1e-12);
        }
        let shifted = s.gauge_shift(0, p0, p0 + 1).unwrap();
        for (a, b) in shifted.iter().zip(&s.ccp_x_e_p(0, p0 + 1).unwrap()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn conjugate_product_is_inverse_dimension() {
        let s = sys(32, 1.0, Potential::Box);
        let (lhs, rhs) = s.conjugate_product_check(0, 16, s.zero_momentum_index()).unwrap();
        assert!((lhs - C64::new(rhs, 0.0)).norm() < 1e-12 && rhs == 1.0 / 32.0);
    }

    #[test]
    fn fourier_relation_on_small_lattices() {
        let free = sys(16, 1.0, Potential::Free);
        assert!(free.fourier_relation_check(6, 3, free.zero_momentum_index() + 3).unwrap() < 1e-12);
        let bx = sys(32, 1.0, Potential::Box);
        assert!(bx.fourier_relation_check(0, 16, bx.zero_momentum_index()).unwrap() < 1e-10);
    }

    #[test]
    fn schrodinger_residual_small() {
        let s = sys(32, 1.0, Potential::Box);
        let p0 = s.zero_momentum_index();
        for p in [p0, p0 + 1, p0 - 2] {
            assert!(s.schrodinger_residual(0, p).unwrap() < 1e-6 * s.h_norm());
        }
        let h = sys(32, 20.0, Potential::Harmonic { omega: 1.0 });
        assert!(h.schrodinger_residual(2, p0 + 5).unwrap() < 1e-9 * h.h_norm());
    }

    #[test]
    fn free_momentum_state_has_exact_gradient() {
        let s = sys(32, 2.0, Potential::Free);
        // E4 is the +2 quantum
        let p = s.p_grid()[s.zero_momentum_index() + 2];
        for branch in [Branch::Full, Branch::Forward] {
            let r = s.classical_momentum_check(4, 4..28, branch).unwrap();
            for row in &r.rows {
                assert!((row.phase_gradient_momentum - p).abs() < 1e-9 * p);
            }
            assert!(r.max_relative_deviation < 1e-9);
        }
    }

    #[test]
    fn real_eigenstate_full_branch_fails_to_unwrap() {
        let s = sys(128, 1.0, Potential::Box);
        let err = s.classical_momentum_check(9, 40..88, Branch::Full).unwrap_err();
        assert!(matches!(err, Error::PhaseUnwrapFailure { .. }));
    }

    #[test]
    fn turning_point_inside_window_is_rejected() {
        let s = sys(64, 20.0, Potential::Harmonic { omega: 1.0 });
        assert!(matches!(s.classical_momentum_check(0, 0..64, Branch::Forward), Err(Error::Precondition(_))));
    }

    #[test]
    fn distribution_csv_shape() {
        let s = sys(8, 1.0, Potential::Free);
        let col = s.ccp_x_e_p(0, 4).unwrap();
        let csv = s.distribution_csv(&col).unwrap();
        assert!(csv.starts_with("x,re,im,magnitude,phase_unwrapped\n-0.5,"));
        assert_eq!(csv.lines().count(), 9);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap(PI), PI);
        assert_eq!(wrap(-PI), PI);
        assert!((wrap(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
