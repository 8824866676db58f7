//! Transformations that conserve the outcomes of `M` act on conditionals only
//! through one phase per outcome. This module applies such phase profiles,
//! evaluates the resulting transition probabilities, averages over random
//! profiles (dephasing), and checks the quantization of periodic generators.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::exec::Execution;
use crate::{rng, tol, Basis, CcpTable, Error, Result, C64};

/// Phases `φ_m` attached to the outcomes of a basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    pub labels: Vec<String>,
    pub phases: Vec<f64>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub generator_values: Option<Vec<f64>>,
    #[serde(rename = "t", default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
    pub hbar: f64,
}

impl PhaseProfile {
    pub fn new(m_basis: &Basis, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != m_basis.dim() {
            return Err(Error::DimensionMismatch(format!("{} phases for dimension {}", phases.len(), m_basis.dim())));
        }
        Ok(Self { labels: m_basis.labels().to_vec(), phases, generator_values: None, parameter: None, hbar: 1.0 })
    }

    /// Action phases `φ_m = E_m t / ħ` of a transformation generated by `E`.
    pub fn from_generator(m_basis: &Basis, generator_values: Vec<f64>, t: f64, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::Precondition(format!("hbar must be positive, got {hbar}")));
        }
        let phases = generator_values.iter().map(|e| e * t / hbar).collect();
        let mut p = Self::new(m_basis, phases)?;
        p.generator_values = Some(generator_values);
        p.parameter = Some(t);
        p.hbar = hbar;
        Ok(p)
    }

    /// Profile generated by the values carried by `m_basis`.
    pub fn from_basis_values(m_basis: &Basis, t: f64, hbar: f64) -> Result<Self> {
        let values = m_basis.values().ok_or(Error::MissingValues)?.to_vec();
        Self::from_generator(m_basis, values, t, hbar)
    }

    /// Uniformly random phases in `[0, 2π)`.
    pub fn random(m_basis: &Basis, rng: &mut impl Rng) -> Self {
        let phases = (0..m_basis.dim()).map(|_| rng.random::<f64>() * TAU).collect();
        Self::new(m_basis, phases).expect("length matches")
    }

    /// Phases `Arg p(m|a,b)`, which maximize the probability of reaching `b`
    /// from `a` (outcomes with vanishing conditionals get phase 0).
    pub fn aligned(table: &CcpTable, a: usize, b: usize) -> Result<Self> {
        let col = table.require_column(a, b)?;
        let phases = col.iter().map(|p| if p.norm() > tol::PHASE_FLOOR { p.arg() } else { 0.0 }).collect();
        Self::new(table.m_basis(), phases)
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    /// `φ + ψ`, the profile of applying both transformations.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.require_matches(&other.labels)?;
        let phases = self.phases.iter().zip(&other.phases).map(|(x, y)| x + y).collect();
        Ok(Self { labels: self.labels.clone(), phases, generator_values: None, parameter: None, hbar: self.hbar })
    }

    pub fn inverse(&self) -> Self {
        Self {
            labels: self.labels.clone(),
            phases: self.phases.iter().map(|x| -x).collect(),
            generator_values: self.generator_values.clone(),
            parameter: self.parameter.map(|t| -t),
            hbar: self.hbar,
        }
    }

    pub fn with_offset(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.phases.iter_mut().for_each(|x| *x += c);
        p.generator_values = None;
        p.parameter = None;
        p
    }

    fn require_matches(&self, labels: &[String]) -> Result<()> {
        if self.labels.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!("profile has {} phases, basis has {} outcomes", self.labels.len(), labels.len())));
        }
        if self.labels != labels {
            return Err(Error::BasisMismatch("profile labels differ from the intermediate basis".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        if p.labels.len() != p.phases.len() {
            return Err(Error::DimensionMismatch("labels and phases differ in length".into()));
        }
        Ok(p)
    }
}

/// `Σ_m p(m|a,b) e^{sign·iφ_m}`.
fn phase_sum(col: &[C64], phases: &[f64], sign: f64) -> C64 {
    col.iter().zip(phases).map(|(p, &phi)| p * C64::from_polar(1.0, sign * phi)).sum()
}

/// `p(m|a,b) e^{iφ_m}` for every `m`, before renormalization.
pub fn phase_shift_column(col: &[C64], profile: &PhaseProfile) -> Vec<C64> {
    col.iter().zip(&profile.phases).map(|(p, &phi)| p * C64::from_polar(1.0, phi)).collect()
}

/// Conditionals after the final condition is transformed by the profile:
/// `p(m|a,b) e^{iφ_m} / Σ_m' p(m'|a,b) e^{iφ_m'}`.
pub fn apply_phase_transform(table: &CcpTable, profile: &PhaseProfile, a: usize, b: usize) -> Result<Vec<C64>> {
    profile.require_matches(table.m_basis().labels())?;
    let col = table.require_column(a, b)?;
    let shifted = phase_shift_column(col, profile);
    let norm: C64 = shifted.iter().sum();
    if norm.norm() <= tol::PHASE_FLOOR {
        return Err(Error::DegenerateDenominator { magnitude: norm.norm() });
    }
    Ok(shifted.into_iter().map(|v| v / norm).collect())
}

/// Which condition the transformation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `U = Σ e^{−iφ_m}|m⟩⟨m|` applied to the initial state.
    OnInitial,
    /// The same `U` applied to the final state, equivalently `U†` on the initial one.
    OnFinal,
}

/// `p(b|a) |Σ_m p(m|a,b) e^{∓iφ_m}|²`, minus sign for [`Direction::OnInitial`].
pub fn transformed_prob(table: &CcpTable, profile: &PhaseProfile, a: usize, b: usize, direction: Direction) -> Result<f64> {
    profile.require_matches(table.m_basis().labels())?;
    let col = table.require_column(a, b)?;
    let sign = match direction {
        Direction::OnInitial => -1.0,
        Direction::OnFinal => 1.0,
    };
    Ok(table.ergodic_ba(a, b) * phase_sum(col, &profile.phases, sign).norm_sqr())
}

/// Uniform phase average: `p(b|a) Σ_m |p(m|a,b)|²`.
pub fn dephase(table: &CcpTable, a: usize, b: usize) -> Result<f64> {
    let col = table.require_column(a, b)?;
    Ok(table.ergodic_ba(a, b) * col.iter().map(|p| p.norm_sqr()).sum::<f64>())
}

/// `Σ_m p(b|m) p(m|a)`: the sequential-measurement side of the dephasing identity.
pub fn dephase_sequential(table: &CcpTable, a: usize, b: usize) -> Result<f64> {
    table.a_basis().check_index(a)?;
    table.b_basis().check_index(b)?;
    let (m_basis, a_basis, b_basis) = (table.m_basis(), table.a_basis(), table.b_basis());
    Ok((0..m_basis.dim())
        .map(|m| b_basis.overlap(b, m_basis, m).norm_sqr() * m_basis.overlap(m, a_basis, a).norm_sqr())
        .sum())
}

/// Mean and standard error of a sample.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SampleMean {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
}

const DRAWS_PER_CHUNK: u64 = 4096;

/// Monte Carlo mean of [`transformed_prob`] over uniformly random profiles.
/// Chunk `k` of the draws uses substream `k` of `seed`, so the result does
/// not depend on how chunks are scheduled.
pub fn dephase_monte_carlo(table: &CcpTable, a: usize, b: usize, draws: u64, seed: u64, exec: Execution) -> Result<SampleMean> {
    if draws < 2 {
        return Err(Error::Precondition("at least two draws are needed".into()));
    }
    let col = table.require_column(a, b)?.to_vec();
    let pba = table.ergodic_ba(a, b);
    let d = col.len();
    let chunks = draws.div_ceil(DRAWS_PER_CHUNK) as usize;

    let partial = exec.map(chunks, |k| {
        let mut rng = rng::substream(seed, k as u64);
        let n = DRAWS_PER_CHUNK.min(draws - k as u64 * DRAWS_PER_CHUNK);
        let mut phases = vec![0.0; d];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            phases.iter_mut().for_each(|x| *x = rng.random::<f64>() * TAU);
            let v = pba * phase_sum(&col, &phases, -1.0).norm_sqr();
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let (s, s2) = partial.into_iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let n = draws as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(SampleMean { mean, std_err: (var / n).sqrt(), samples: draws })
}

/// Default relative tolerance of [`quantized_spectrum_check`].
pub const QUANTIZATION_TOL: f64 = 1e-8;

/// Whether every pairwise difference of `generator_values` is an integer
/// multiple of `2πħ/T`. Returns the verdict and the worst fractional defect.
pub fn quantized_spectrum_check(generator_values: &[f64], period: f64, hbar: f64) -> Result<(bool, f64)> {
    quantized_spectrum_check_with(generator_values, period, hbar, QUANTIZATION_TOL)
}

/// As [`quantized_spectrum_check`] with an explicit tolerance, in units of
/// the quantum `2πħ/T`; discretized spectra need a looser one.
pub fn quantized_spectrum_check_with(generator_values: &[f64], period: f64, hbar: f64, tolerance: f64) -> Result<(bool, f64)> {
    if !(period > 0.0) || !(hbar > 0.0) {
        return Err(Error::Precondition("period and hbar must be positive".into()));
    }
    if generator_values.len() < 2 {
        return Err(Error::Precondition("need at least two generator values".into()));
    }
    let quantum = TAU * hbar / period;
    let mut worst: f64 = 0.0;
    for (i, x) in generator_values.iter().enumerate() {
        for y in &generator_values[i + 1..] {
            let r = (x - y) / quantum;
            worst = worst.max((r - r.round()).abs());
        }
    }
    Ok((worst <= tolerance, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccp_table;
    use std::f64::consts::PI;

    fn z() -> Basis {
        Basis::pauli('z').unwrap()
    }
    fn x() -> Basis {
        Basis::pauli('x').unwrap()
    }

    #[test]
    fn zero_and_constant_profiles_leave_conditionals_unchanged() {
        let t = ccp_table(&Basis::pauli('y').unwrap(), &z(), &x()).unwrap();
        let orig = t.column(0, 0).unwrap().to_vec();
        for c in [0.0, 1.3, -2.0] {
            let prof = PhaseProfile::new(t.m_basis(), vec![c, c]).unwrap();
            let out = apply_phase_transform(&t, &prof, 0, 0).unwrap();
            for (u, v) in out.iter().zip(&orig) {
                assert!((u - v).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn z_flip_of_plus_is_degenerate() {
        let t = ccp_table(&z(), &x(), &x()).unwrap();
        let prof = PhaseProfile::new(&z(), vec![0.0, PI]).unwrap();
        assert!(matches!(apply_phase_transform(&t, &prof, 0, 0), Err(Error::DegenerateDenominator { .. })));
        let p = transformed_prob(&t, &prof, 0, 0, Direction::OnInitial).unwrap();
        assert!(p.abs() < 1e-15);
        let zero = PhaseProfile::new(&z(), vec![0.0, 0.0]).unwrap();
        assert!((transformed_prob(&t, &zero, 0, 0, Direction::OnFinal).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn profile_must_match_intermediate_basis() {
        let t = ccp_table(&z(), &x(), &x()).unwrap();
        let prof = PhaseProfile::new(&x(), vec![0.0, 1.0]).unwrap();
        assert!(matches!(transformed_prob(&t, &prof, 0, 0, Direction::OnInitial), Err(Error::BasisMismatch(_))));
        assert!(PhaseProfile::new(&x(), vec![0.0]).is_err());
    }

    #[test]
    fn dephasing_examples() {
        let t = ccp_table(&z(), &x(), &x()).unwrap();
        assert!((dephase(&t, 0, 0).unwrap() - 0.5).abs() < 1e-15);
        assert!((dephase_sequential(&t, 0, 0).unwrap() - 0.5).abs() < 1e-15);
        let own = ccp_table(&x(), &x(), &z()).unwrap();
        assert!((dephase(&own, 0, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dephase_monte_carlo_is_schedule_independent() {
        let b = Basis::haar_random(3, 2).unwrap();
        let t = ccp_table(&b, &z_like(3), &Basis::fourier(3).unwrap()).unwrap();
        let s = dephase_monte_carlo(&t, 0, 1, 20_000, 9, Execution::Sequential).unwrap();
        let p = dephase_monte_carlo(&t, 0, 1, 20_000, 9, Execution::Parallel).unwrap();
        assert_eq!(s.mean.to_bits(), p.mean.to_bits());
        assert_eq!(s.std_err.to_bits(), p.std_err.to_bits());
    }

    fn z_like(d: usize) -> Basis {
        Basis::computational(d).unwrap()
    }

    #[test]
    fn generator_profile_uses_action_phase() {
        let prof = PhaseProfile::from_generator(&z(), vec![1.5, -0.5], 2.0, 0.5).unwrap();
        assert_eq!(prof.phases, vec![6.0, -2.0]);
        let back = PhaseProfile::from_json(&prof.to_json().unwrap()).unwrap();
        assert_eq!(back, prof);
        let v: serde_json::Value = serde_json::from_str(&prof.to_json().unwrap()).unwrap();
        assert_eq!(v["E"], serde_json::json!([1.5, -0.5]));
        assert_eq!(v["t"], serde_json::json!(2.0));
    }

    #[test]
    fn quantization_examples() {
        let (hbar, period) = (0.7, 3.0);
        let q = TAU * hbar / period;
        let (ok, defect) = quantized_spectrum_check(&[0.0, q, 2.0 * q], period, hbar).unwrap();
        assert!(ok && defect < 1e-12);
        let (ok, defect) = quantized_spectrum_check(&[0.0, 0.5 * q], period, hbar).unwrap();
        assert!(!ok && (defect - 0.5).abs() < 1e-12);
        assert!(quantized_spectrum_check(&[1.0], period, hbar).is_err());
        assert!(quantized_spectrum_check(&[1.0, 2.0], 0.0, hbar).is_err());
    }

    #[test]
    fn quantized_generator_returns_identity_after_one_period() {
        let (hbar, period) = (1.0, 2.0);
        let q = TAU * hbar / period;
        let m = z_like(3).with_values(vec![0.25, 0.25 + q, 0.25 + 3.0 * q]).unwrap();
        let (a, b) = (Basis::haar_random(3, 1).unwrap(), Basis::haar_random(3, 2).unwrap());
        let t = ccp_table(&m, &a, &b).unwrap();
        let prof = PhaseProfile::from_basis_values(&m, period, hbar).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let p = transformed_prob(&t, &prof, i, j, Direction::OnInitial).unwrap();
                assert!((p - t.ergodic_ba(i, j)).abs() < 1e-12);
            }
        }
    }
}
