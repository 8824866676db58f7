//! Scenario configs and their fail-fast translation into runnable jobs.
//!
//! Everything that can be checked without doing the actual computation is
//! checked here, so a rejected config never produces partial output.

use qergo_core::basis::BasisJson;
use qergo_core::weak::{MAX_COUPLING, MAX_SCAN_DIM, MIN_SHOTS};
use qergo_core::{rng, Basis, LatticeConfig, WeakConfig};
use serde::Deserialize;
use serde_json::Value;

use crate::{CliError, Result};

pub const MAX_VERIFY_DIM: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Verify,
    KdTable,
    WeakRun,
    SequentialRun,
    Lattice,
    Quantize,
}

impl Kind {
    pub fn command(self) -> &'static str {
        match self {
            Kind::Verify => "verify",
            Kind::KdTable => "kd",
            Kind::WeakRun => "weak",
            Kind::SequentialRun => "seq",
            Kind::Lattice => "lattice",
            Kind::Quantize => "quantize",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<String>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Parse { line: e.line() as u64, message: e.to_string() })
    }

    pub fn into_job(self, seed_override: Option<u64>) -> Result<Job> {
        let seed = seed_override.or(self.seed).unwrap_or(0);
        let params = if self.params.is_null() { Value::Object(Default::default()) } else { self.params };
        match self.kind {
            Kind::Verify => verify_job(parse(params)?, seed),
            Kind::KdTable => kd_job(parse(params)?, seed),
            Kind::WeakRun => weak_job(parse(params)?, seed),
            Kind::SequentialRun => seq_job(parse(params)?, seed),
            Kind::Lattice => lattice_job(parse(params)?, seed),
            Kind::Quantize => quantize_job(parse(params)?),
        }
    }
}

fn parse<T: serde::de::DeserializeOwned>(params: Value) -> Result<T> {
    serde_json::from_value(params).map_err(|e| CliError::config(format!("params: {e}")))
}

/// How a basis is specified in a config. Haar bases without an explicit
/// seed draw one from the run seed and their slot in the scenario.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisSpec {
    Computational { dim: usize },
    Fourier { dim: usize },
    Haar { dim: usize, seed: Option<u64> },
    Pauli { axis: char },
    Explicit(BasisJson),
}

impl BasisSpec {
    pub fn build(&self, run_seed: u64, slot: u64) -> Result<Basis> {
        let basis = match self {
            BasisSpec::Computational { dim } => Basis::computational(*dim),
            BasisSpec::Fourier { dim } => Basis::fourier(*dim),
            BasisSpec::Haar { dim, seed } => Basis::haar_random(*dim, seed.unwrap_or_else(|| rng::derive_seed(run_seed, slot))),
            BasisSpec::Pauli { axis } => Basis::pauli(*axis),
            BasisSpec::Explicit(raw) => raw.clone().try_into(),
        };
        Ok(basis?)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub basis: BasisSpec,
    pub index: usize,
}

impl StateSpec {
    fn build(&self, run_seed: u64, slot: u64, what: &str) -> Result<(Basis, usize)> {
        let b = self.basis.build(run_seed, slot)?;
        check_index(&b, self.index, what)?;
        Ok((b, self.index))
    }
}

fn check_index(b: &Basis, k: usize, what: &str) -> Result<()> {
    if k >= b.dim() {
        return Err(CliError::config(format!("{what} index {k} out of range for dimension {}", b.dim())));
    }
    Ok(())
}

fn same_dim(bases: &[(&str, &Basis)]) -> Result<()> {
    let d = bases[0].1.dim();
    match bases.iter().find(|(_, b)| b.dim() != d) {
        Some((name, b)) => Err(CliError::config(format!("{name} has dimension {}, expected {d}", b.dim()))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug)]
pub enum QuantizeSource {
    Values(Vec<f64>),
    Lattice { config: LatticeConfig, levels: usize },
}

#[derive(Clone, Debug)]
pub struct ScanSettings {
    pub coupling: f64,
    pub shots_per_point: u64,
}

#[derive(Clone, Debug)]
pub enum Job {
    Verify {
        dims: Vec<usize>,
        seeds_per_dim: usize,
        root_seed: u64,
    },
    Kd {
        m: Basis,
        a: Basis,
        b: Basis,
        state: Option<(Basis, usize)>,
        column: (usize, usize),
    },
    Weak {
        a: (Basis, usize),
        b: (Basis, usize),
        m_basis: Basis,
        m: usize,
        config: WeakConfig,
    },
    Sequential {
        a: (Basis, usize),
        m_basis: Basis,
        b_basis: Basis,
        shots: u64,
        seed: u64,
    },
    Lattice {
        config: LatticeConfig,
        level: usize,
        p_ref: Option<usize>,
        scan: Option<ScanSettings>,
        seed: u64,
    },
    Quantize {
        source: QuantizeSource,
        period: f64,
        hbar: f64,
        tolerance: Option<f64>,
    },
}

impl Job {
    pub fn kind(&self) -> Kind {
        match self {
            Job::Verify { .. } => Kind::Verify,
            Job::Kd { .. } => Kind::KdTable,
            Job::Weak { .. } => Kind::WeakRun,
            Job::Sequential { .. } => Kind::SequentialRun,
            Job::Lattice { .. } => Kind::Lattice,
            Job::Quantize { .. } => Kind::Quantize,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyParams {
    #[serde(default = "default_dims")]
    dims: Vec<usize>,
    #[serde(default = "one")]
    seeds_per_dim: usize,
}

fn default_dims() -> Vec<usize> {
    (2..=8).collect()
}

fn one() -> usize {
    1
}

pub fn verify_job_from(dims: Vec<usize>, seeds_per_dim: usize, root_seed: u64) -> Result<Job> {
    verify_job(VerifyParams { dims, seeds_per_dim }, root_seed)
}

fn verify_job(p: VerifyParams, seed: u64) -> Result<Job> {
    if p.dims.is_empty() {
        return Err(CliError::Usage("verify needs at least one dimension".into()));
    }
    if let Some(d) = p.dims.iter().find(|&&d| !(2..=MAX_VERIFY_DIM).contains(&d)) {
        return Err(CliError::Usage(format!("dimension {d} outside 2..{MAX_VERIFY_DIM}")));
    }
    if p.seeds_per_dim == 0 {
        return Err(CliError::Usage("seeds_per_dim must be positive".into()));
    }
    Ok(Job::Verify { dims: p.dims, seeds_per_dim: p.seeds_per_dim, root_seed: seed })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KdParams {
    #[serde(rename = "M")]
    m: BasisSpec,
    #[serde(rename = "A")]
    a: BasisSpec,
    #[serde(rename = "B")]
    b: BasisSpec,
    #[serde(default)]
    state: Option<StateSpec>,
    #[serde(default)]
    column: Option<[usize; 2]>,
}

fn kd_job(p: KdParams, seed: u64) -> Result<Job> {
    let (m, a, b) = (p.m.build(seed, 0)?, p.a.build(seed, 1)?, p.b.build(seed, 2)?);
    same_dim(&[("M", &m), ("A", &a), ("B", &b)])?;
    let state = p.state.map(|s| s.build(seed, 3, "state")).transpose()?;
    if let Some((s, _)) = &state {
        same_dim(&[("M", &m), ("state", s)])?;
    }
    let [ca, cb] = p.column.unwrap_or([0, 0]);
    check_index(&a, ca, "column a")?;
    check_index(&b, cb, "column b")?;
    Ok(Job::Kd { m, a, b, state, column: (ca, cb) })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeakParams {
    a: StateSpec,
    b: StateSpec,
    #[serde(rename = "M")]
    m_basis: BasisSpec,
    m: usize,
    #[serde(default = "default_coupling")]
    coupling: f64,
    #[serde(default = "default_shots")]
    shots: u64,
}

fn default_coupling() -> f64 {
    WeakConfig::default().coupling
}

fn default_shots() -> u64 {
    WeakConfig::default().shots
}

fn check_coupling(g: f64) -> Result<()> {
    if !(g > 0.0 && g <= MAX_COUPLING) {
        return Err(CliError::config(format!("coupling {g} outside (0, {MAX_COUPLING}]")));
    }
    Ok(())
}

fn check_shots(n: u64) -> Result<()> {
    if n < MIN_SHOTS {
        return Err(CliError::config(format!("{n} shots is below the minimum {MIN_SHOTS}")));
    }
    Ok(())
}

fn weak_job(p: WeakParams, seed: u64) -> Result<Job> {
    check_coupling(p.coupling)?;
    check_shots(p.shots)?;
    let a = p.a.build(seed, 1, "a")?;
    let b = p.b.build(seed, 2, "b")?;
    let m_basis = p.m_basis.build(seed, 0)?;
    same_dim(&[("M", &m_basis), ("a", &a.0), ("b", &b.0)])?;
    check_index(&m_basis, p.m, "m")?;
    Ok(Job::Weak { a, b, m_basis, m: p.m, config: WeakConfig { coupling: p.coupling, shots: p.shots, seed } })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SeqParams {
    a: StateSpec,
    #[serde(rename = "M")]
    m_basis: BasisSpec,
    #[serde(rename = "B")]
    b_basis: BasisSpec,
    #[serde(default = "default_shots")]
    shots: u64,
}

fn seq_job(p: SeqParams, seed: u64) -> Result<Job> {
    if p.shots == 0 {
        return Err(CliError::config("shots must be positive"));
    }
    let a = p.a.build(seed, 1, "a")?;
    let m_basis = p.m_basis.build(seed, 0)?;
    let b_basis = p.b_basis.build(seed, 2)?;
    same_dim(&[("a", &a.0), ("M", &m_basis), ("B", &b_basis)])?;
    Ok(Job::Sequential { a, m_basis, b_basis, shots: p.shots, seed })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanParams {
    #[serde(default = "default_coupling")]
    coupling: f64,
    shots_per_point: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeParams {
    grid: LatticeConfig,
    #[serde(default)]
    level: usize,
    #[serde(default)]
    p_ref: Option<usize>,
    #[serde(default)]
    scan: Option<ScanParams>,
}

fn lattice_job(p: LatticeParams, seed: u64) -> Result<Job> {
    p.grid.validate()?;
    let d = p.grid.d;
    if p.level >= d {
        return Err(CliError::config(format!("level {} out of range for d = {d}", p.level)));
    }
    if let Some(k) = p.p_ref.filter(|&k| k >= d) {
        return Err(CliError::config(format!("p_ref {k} out of range for d = {d}")));
    }
    let scan = match p.scan {
        Some(s) => {
            check_coupling(s.coupling)?;
            check_shots(s.shots_per_point)?;
            if d > MAX_SCAN_DIM {
                return Err(CliError::config(format!("scan needs d <= {MAX_SCAN_DIM}, got {d}")));
            }
            Some(ScanSettings { coupling: s.coupling, shots_per_point: s.shots_per_point })
        }
        None => None,
    };
    Ok(Job::Lattice { config: p.grid, level: p.level, p_ref: p.p_ref, scan, seed })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantizeParams {
    #[serde(default)]
    values: Option<Vec<f64>>,
    #[serde(default)]
    grid: Option<LatticeConfig>,
    #[serde(default)]
    levels: Option<usize>,
    period: f64,
    #[serde(default)]
    hbar: Option<f64>,
    #[serde(default)]
    tolerance: Option<f64>,
}

fn quantize_job(p: QuantizeParams) -> Result<Job> {
    if !(p.period.is_finite() && p.period > 0.0) {
        return Err(CliError::config(format!("period must be positive, got {}", p.period)));
    }
    if let Some(t) = p.tolerance.filter(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(CliError::config(format!("tolerance must be positive, got {t}")));
    }
    let (source, default_hbar) = match (p.values, p.grid) {
        (Some(v), None) => {
            if v.len() < 2 || v.iter().any(|x| !x.is_finite()) {
                return Err(CliError::config("values needs at least two finite entries"));
            }
            (QuantizeSource::Values(v), 1.0)
        }
        (None, Some(grid)) => {
            grid.validate()?;
            let levels = p.levels.unwrap_or(5);
            if levels < 2 || levels > grid.d {
                return Err(CliError::config(format!("levels must lie in 2..={}, got {levels}", grid.d)));
            }
            let hbar = grid.hbar;
            (QuantizeSource::Lattice { config: grid, levels }, hbar)
        }
        _ => return Err(CliError::config("quantize needs exactly one of `values` or `grid`")),
    };
    let hbar = p.hbar.unwrap_or(default_hbar);
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(CliError::config(format!("hbar must be positive, got {hbar}")));
    }
    Ok(Job::Quantize { source, period: p.period, hbar, tolerance: p.tolerance })
}
