//! The identity suite: every algebraic law of the conditional-probability
//! calculus, checked over Haar-random basis triples.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use qergo_core::ccp::*;
use qergo_core::hilbert::{born_rule_coherence, inner_product_ccp, predict_outcome_prob, pure_state_joint, reconstruct_vector};
use qergo_core::transform::{dephase, dephase_sequential, transformed_prob, Direction};
use qergo_core::{rng, tol, Basis, Execution, PhaseProfile, C64};
use serde::Serialize;

use crate::scenario::MAX_VERIFY_DIM;
use crate::{CliError, Result};

type Check = fn(&Sample) -> qergo_core::Result<f64>;

/// Name, base tolerance (scaled with dimension past 16), check.
const IDENTITIES: &[(&str, f64, Check)] = &[
    ("normalization", 1e-9, normalization),
    ("chain_rule", 1e-9, chain_rule),
    ("determinism", 1e-9, determinism),
    ("ergodicity", 1e-10, ergodicity),
    ("phase_antisymmetry", 1e-9, phase_antisymmetry),
    ("bayes_conversion", 1e-10, bayes),
    ("backaction", 1e-10, backaction),
    ("dephasing", 1e-10, dephasing),
    ("transform_oracle", 1e-10, transform_oracle),
    ("ozawa_zero_error", 1e-9, ozawa),
    ("hilbert_reconstruction", 1e-9, reconstruction),
    ("inner_product", 1e-9, inner_product),
    ("born_rule", 1e-9, born_rule),
    ("joint_prediction", 1e-9, joint_prediction),
];

struct Sample {
    d: usize,
    seed: u64,
    m: Basis,
    m2: Basis,
    a: Basis,
    b: Basis,
    f: Basis,
}

impl Sample {
    fn new(d: usize, seed: u64) -> qergo_core::Result<Self> {
        let haar = |k: u64| Basis::haar_random(d, rng::derive_seed(seed, k));
        Ok(Sample { d, seed, m: haar(0)?, a: haar(1)?, b: haar(2)?, f: haar(3)?, m2: haar(4)? })
    }

    fn table(&self) -> qergo_core::Result<CcpTable> {
        ccp_table_with(&self.m, &self.a, &self.b, Execution::Sequential)
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let d = self.d;
        (0..d).flat_map(move |i| (0..d).map(move |j| (i, j)))
    }
}

fn normalization(s: &Sample) -> qergo_core::Result<f64> {
    Ok(s.table()?.normalization_deviation())
}

fn chain_rule(s: &Sample) -> qergo_core::Result<f64> {
    chain_rule_residual(&s.f, &s.m, &s.a, &s.b)
}

fn determinism(s: &Sample) -> qergo_core::Result<f64> {
    determinism_residual(&s.m, &s.a, &s.b)
}

fn ergodicity(s: &Sample) -> qergo_core::Result<f64> {
    let r = ergodicity_residual(&s.m, &s.a, &s.b)?;
    Ok(r.max_deviation.max(r.max_imaginary).max(r.max_b_spread))
}

fn phase_antisymmetry(s: &Sample) -> qergo_core::Result<f64> {
    phase_antisymmetry_check(&s.m, &s.a, &s.b)
}

fn bayes(s: &Sample) -> qergo_core::Result<f64> {
    bayes_residual(&s.m, &s.a, &s.b)
}

fn backaction(s: &Sample) -> qergo_core::Result<f64> {
    backaction_residual(&s.m, &s.a, &s.b)
}

fn dephasing(s: &Sample) -> qergo_core::Result<f64> {
    let t = s.table()?;
    let mut worst: f64 = 0.0;
    for (a, b) in s.pairs() {
        worst = worst.max((dephase(&t, a, b)? - dephase_sequential(&t, a, b)?).abs());
    }
    Ok(worst)
}

/// `|⟨b|U|a⟩|²` by explicit matrix products.
fn unitary_prob(s: &Sample, phases: &[f64], sign: f64, a: usize, b: usize) -> f64 {
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(s.d, phases.iter().map(|&p| C64::from_polar(1.0, sign * p))));
    let u = s.m.vectors() * diag * s.m.vectors().adjoint();
    let av = s.a.vectors().column(a).into_owned();
    s.b.vectors().column(b).dotc(&(u * av)).norm_sqr()
}

fn transform_oracle(s: &Sample) -> qergo_core::Result<f64> {
    let t = s.table()?;
    let profile = PhaseProfile::random(&s.m, &mut rng::substream(s.seed, 7));
    let mut worst: f64 = 0.0;
    for (a, b) in s.pairs() {
        for (dir, sign) in [(Direction::OnInitial, -1.0), (Direction::OnFinal, 1.0)] {
            let got = transformed_prob(&t, &profile, a, b, dir)?;
            worst = worst.max((got - unitary_prob(s, &profile.phases, sign, a, b)).abs());
        }
    }
    Ok(worst)
}

fn ozawa(s: &Sample) -> qergo_core::Result<f64> {
    let a = s.a.clone().with_values((0..s.d).map(|k| k as f64).collect())?;
    let mut worst: f64 = 0.0;
    for b in 0..s.d {
        worst = worst.max(ozawa_error(&s.m, &a, (&s.b, b))?.epsilon_sq.abs());
    }
    Ok(worst)
}

fn reconstruction(s: &Sample) -> qergo_core::Result<f64> {
    let t = s.table()?;
    let mut worst: f64 = 0.0;
    for a in 0..s.d {
        let v = reconstruct_vector(&t, a, 0)?;
        // ⟨m|a⟩ in the gauge ⟨m|b_0⟩ ≥ 0, compared up to one global phase
        let oracle: Vec<C64> = (0..s.d)
            .map(|k| {
                let g = s.m.overlap(k, &s.b, 0);
                s.m.overlap(k, &s.a, a) * (g.conj() / g.norm())
            })
            .collect();
        let ov: C64 = oracle.iter().zip(&v).map(|(o, r)| o.conj() * r).sum();
        let phase = ov / ov.norm();
        for (o, r) in oracle.iter().zip(&v) {
            worst = worst.max((o * phase - r).norm());
        }
    }
    Ok(worst)
}

fn inner_product(s: &Sample) -> qergo_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for (f, a) in s.pairs() {
        let v1 = inner_product_ccp(&s.f, f, &s.a, a, &s.m, &s.b, 0)?;
        let v2 = inner_product_ccp(&s.f, f, &s.a, a, &s.m2, &s.b, 0)?;
        worst = worst.max((v1 - v2).norm()).max((v1.norm() - s.f.overlap(f, &s.a, a).norm()).abs());
    }
    Ok(worst)
}

fn born_rule(s: &Sample) -> qergo_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for (f, a) in s.pairs() {
        let p = born_rule_coherence(&s.f, f, &s.a, a, &s.m, &s.b, 0)?;
        worst = worst.max((p - s.f.overlap(f, &s.a, a).norm_sqr()).abs());
    }
    Ok(worst)
}

fn joint_prediction(s: &Sample) -> qergo_core::Result<f64> {
    let joint = pure_state_joint((&s.f, 0), &s.a, &s.b)?;
    let mut worst = (joint.total() - C64::new(1.0, 0.0)).norm();
    for m in 0..s.d {
        let p = predict_outcome_prob(&joint, &s.m, m)?;
        worst = worst.max((p - s.m.overlap(m, &s.f, 0).norm_sqr()).abs());
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityVerdict {
    pub name: &'static str,
    /// Tolerance at `d ≤ 16`; larger dimensions scale it linearly.
    pub tolerance: f64,
    /// `None` when a check raised an error instead of returning a deviation.
    pub worst_deviation: Option<f64>,
    pub worst_dim: usize,
    pub worst_seed_index: usize,
    pub checks: usize,
    pub failures: usize,
    pub errors: Vec<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerdictReport {
    pub dims: Vec<usize>,
    pub seeds_per_dim: usize,
    pub root_seed: u64,
    pub identities: Vec<IdentityVerdict>,
    pub passed: bool,
    /// Kept out of serialized output so reports stay byte-reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl VerdictReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Core(e.into()))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Core(e.into());
        w.write_record(["identity", "tolerance", "worst_deviation", "worst_dim", "checks", "failures", "passed"]).map_err(io)?;
        for v in &self.identities {
            w.write_record([
                v.name.to_string(),
                v.tolerance.to_string(),
                v.worst_deviation.map_or_else(|| "error".to_string(), |x| x.to_string()),
                v.worst_dim.to_string(),
                v.checks.to_string(),
                v.failures.to_string(),
                v.passed.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// One line per identity, for terminals.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for v in &self.identities {
            let dev = v.worst_deviation.map_or_else(|| "error".to_string(), |x| format!("{x:.3e}"));
            out += &format!(
                "{:<4} {:<24} worst {:>10} (tol {:.0e}, d={}) {} checks\n",
                if v.passed { "PASS" } else { "FAIL" },
                v.name,
                dev,
                v.tolerance,
                v.worst_dim,
                v.checks
            );
        }
        out += &format!("{} in {:.2} s\n", if self.passed { "all identities hold" } else { "identity violation" }, self.wall_time.as_secs_f64());
        out
    }
}

pub fn run_verification_suite(dims: &[usize], seeds_per_dim: usize, root_seed: u64) -> Result<VerdictReport> {
    run_verification_suite_with(dims, seeds_per_dim, root_seed, Execution::default())
}

pub fn run_verification_suite_with(dims: &[usize], seeds_per_dim: usize, root_seed: u64, exec: Execution) -> Result<VerdictReport> {
    if let Some(d) = dims.iter().find(|&&d| !(2..=MAX_VERIFY_DIM).contains(&d)) {
        return Err(CliError::Usage(format!("dimension {d} outside 2..{MAX_VERIFY_DIM}")));
    }
    if dims.is_empty() || seeds_per_dim == 0 {
        return Err(CliError::Usage("verify needs at least one dimension and one seed".into()));
    }
    let start = Instant::now();
    let jobs: Vec<(usize, usize)> = dims.iter().flat_map(|&d| (0..seeds_per_dim).map(move |s| (d, s))).collect();

    // per job: one deviation (or error) per identity, in table order
    let results: Vec<Vec<std::result::Result<f64, String>>> = exec.map(jobs.len(), |j| {
        let (d, s) = jobs[j];
        let seed = rng::derive_seed(root_seed, ((d as u64) << 32) | s as u64);
        match Sample::new(d, seed) {
            Ok(sample) => IDENTITIES.iter().map(|(_, _, check)| check(&sample).map_err(|e| e.to_string())).collect(),
            Err(e) => vec![Err(e.to_string()); IDENTITIES.len()],
        }
    });

    let mut identities = Vec::with_capacity(IDENTITIES.len());
    for (i, &(name, base, _)) in IDENTITIES.iter().enumerate() {
        let mut v = IdentityVerdict {
            name,
            tolerance: base,
            worst_deviation: Some(0.0),
            worst_dim: jobs[0].0,
            worst_seed_index: 0,
            checks: 0,
            failures: 0,
            errors: Vec::new(),
            passed: true,
        };
        // largest finite deviation relative to its tolerance; errors and NaN take precedence
        let mut worst: Option<(f64, f64, usize, usize)> = None;
        let mut first_bad: Option<(usize, usize)> = None;
        for (&(d, s), res) in jobs.iter().zip(&results) {
            v.checks += 1;
            let problem = match &res[i] {
                Ok(dev) if !dev.is_nan() => {
                    let ratio = dev / tol::scaled(base, d);
                    if worst.is_none_or(|w| ratio > w.0) {
                        worst = Some((ratio, *dev, d, s));
                    }
                    v.failures += (ratio > 1.0) as usize;
                    None
                }
                Ok(_) => Some("deviation is NaN".to_string()),
                Err(e) => Some(e.clone()),
            };
            if let Some(msg) = problem {
                v.failures += 1;
                first_bad.get_or_insert((d, s));
                if v.errors.len() < 5 {
                    v.errors.push(format!("d={d} seed#{s}: {msg}"));
                }
            }
        }
        match (first_bad, worst) {
            (Some((d, s)), _) => (v.worst_deviation, v.worst_dim, v.worst_seed_index) = (None, d, s),
            (None, Some((_, dev, d, s))) => (v.worst_deviation, v.worst_dim, v.worst_seed_index) = (Some(dev), d, s),
            (None, None) => {}
        }
        v.passed = v.failures == 0;
        identities.push(v);
    }
    let passed = identities.iter().all(|v| v.passed);
    Ok(VerdictReport { dims: dims.to_vec(), seeds_per_dim, root_seed, identities, passed, wall_time: start.elapsed() })
}
