//! Monte Carlo weak measurement with post-selection, sequential projective
//! measurements, and a direct wavefunction scan built from them.
//!
//! Pointer model: a Gaussian pointer with position variance 1 (momentum
//! standard deviation ½, ħ = 1) is displaced by `g` when the system is in
//! `|m⟩`. After post-selecting on `b`, the pointer state is proportional to
//! `(1−w) φ(q) + w φ(q−g)` with `w = p(m|a,b)`, and the post-selection
//! probability is `p(b|a) N` with
//!
//! `N = |1−w|² + |w|² + 2 Re((1−w)* w) e^{−g²/8}`.
//!
//! Both readouts are sampled exactly from that superposition, never from a
//! linearized approximation:
//! - position: a mixture of unit Gaussians centred at `0`, `g`, `g/2` with
//!   weights `|1−w|²`, `|w|²`, `2 Re((1−w)* w) e^{−g²/8}` (the last may be
//!   negative), drawn by rejection from its positive part;
//! - momentum: `N(0, ¼)` reweighted by `|1−w+w e^{−ipg}|²`, again by rejection.
//!
//! Estimator: `Re w ≈ ⟨q⟩/g`, `Im w ≈ 2⟨p⟩/g`. The exact readout means are
//! `⟨q⟩/g = [|w|² + (Re w − |w|²) e^{−g²/8}] / N` and
//! `2⟨p⟩/g = Im w e^{−g²/8} / N`; both approach `w` with an `O(g²)` bias.
//!
//! Each post-selected shot reads one quadrature, alternating position and
//! momentum. Shots are processed in fixed chunks, each with its own ChaCha8
//! substream, and reduced in chunk order, so a seed fixes the report bit for
//! bit regardless of thread count.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ccp::ccp_value;
use crate::exec::Execution;
use crate::{rng, Basis, Error, Result, C64};

pub const MAX_COUPLING: f64 = 0.2;
pub const MIN_SHOTS: u64 = 10_000;
pub const MIN_POSTSELECTION: f64 = 1e-3;
pub const STARVATION_THRESHOLD: u64 = 100;
const SHOTS_PER_CHUNK: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakConfig {
    pub coupling: f64,
    pub shots: u64,
    pub seed: u64,
}

impl Default for WeakConfig {
    fn default() -> Self {
        Self { coupling: 0.05, shots: 1_000_000, seed: 0 }
    }
}

impl WeakConfig {
    fn validate(&self) -> Result<()> {
        if !(self.coupling > 0.0 && self.coupling <= MAX_COUPLING) {
            return Err(Error::WeakRegimeViolation(self.coupling));
        }
        if self.shots < MIN_SHOTS {
            return Err(Error::Precondition(format!("need at least {MIN_SHOTS} shots, got {}", self.shots)));
        }
        Ok(())
    }
}

/// Normalization `N` of the post-selected pointer state.
pub fn pointer_norm(w: C64, g: f64) -> f64 {
    let overlap = (-g * g / 8.0).exp();
    (1.0 - w).norm_sqr() + w.norm_sqr() + 2.0 * ((1.0 - w).conj() * w).re * overlap
}

/// Expected value of the estimator at coupling `g` (infinite shots).
pub fn pointer_response(w: C64, g: f64) -> C64 {
    let overlap = (-g * g / 8.0).exp();
    let n = pointer_norm(w, g);
    let re = (w.norm_sqr() + (w.re - w.norm_sqr()) * overlap) / n;
    let im = w.im * overlap / n;
    C64::new(re, im)
}

/// Bias constant `C(w)`: the worst componentwise `|response − w| / g` over a
/// grid of couplings up to [`MAX_COUPLING`]. Bounds the estimator bias by `C·g`.
pub fn bias_constant(w: C64) -> f64 {
    (1..=40)
        .map(|k| {
            let g = MAX_COUPLING * k as f64 / 40.0;
            let d = pointer_response(w, g) - w;
            d.re.abs().max(d.im.abs()) / g
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakRunReport {
    pub estimate: C64,
    /// Standard errors of the real and imaginary parts.
    pub std_err: (f64, f64),
    pub shots_total: u64,
    pub shots_postselected: u64,
    pub position_reads: u64,
    pub momentum_reads: u64,
    pub coupling: f64,
    pub seed: u64,
    pub analytic_ref: C64,
    /// Exact estimator mean at this coupling.
    pub expected_response: C64,
    pub bias_constant: f64,
    /// `p(b|a) N`, the exact post-selection probability.
    pub postselection_prob: f64,
}

impl WeakRunReport {
    pub fn bias_bound(&self) -> f64 {
        self.bias_constant * self.coupling
    }

    /// Componentwise `|estimate − analytic_ref| / max(k·std_err, C·g)`; the
    /// gate passes when both are below 1.
    pub fn gate_ratios(&self, k: f64) -> (f64, f64) {
        let d = self.estimate - self.analytic_ref;
        let bias = self.bias_bound();
        (d.re.abs() / (k * self.std_err.0).max(bias), d.im.abs() / (k * self.std_err.1).max(bias))
    }

    pub fn within_gate(&self, k: f64) -> bool {
        let (r, i) = self.gate_ratios(k);
        r < 1.0 && i < 1.0
    }

    pub fn postselection_rate(&self) -> f64 {
        self.shots_postselected as f64 / self.shots_total as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Clone, Copy, Default)]
struct Moments {
    post: u64,
    nq: u64,
    sq: f64,
    sq2: f64,
    np: u64,
    sp: f64,
    sp2: f64,
}

impl Moments {
    fn merge(mut self, o: Moments) -> Moments {
        self.post += o.post;
        self.nq += o.nq;
        self.sq += o.sq;
        self.sq2 += o.sq2;
        self.np += o.np;
        self.sp += o.sp;
        self.sp2 += o.sp2;
        self
    }
}

/// Exact sampler for the post-selected pointer readouts.
struct Pointer {
    g: f64,
    w: C64,
    centers: [f64; 3],
    weights: [f64; 3],
    positive: [f64; 3],
    positive_total: f64,
    momentum_bound: f64,
}

impl Pointer {
    fn new(w: C64, g: f64) -> Self {
        let cross = 2.0 * ((1.0 - w).conj() * w).re * (-g * g / 8.0).exp();
        let weights = [(1.0 - w).norm_sqr(), w.norm_sqr(), cross];
        let positive = weights.map(|c| c.max(0.0));
        Self {
            g,
            w,
            centers: [0.0, g, g / 2.0],
            weights,
            positive,
            positive_total: positive.iter().sum(),
            momentum_bound: ((1.0 - w).norm() + w.norm()).powi(2),
        }
    }

    fn gauss(q: f64, c: f64) -> f64 {
        (-(q - c) * (q - c) / 2.0).exp()
    }

    fn position(&self, rng: &mut ChaCha8Rng) -> f64 {
        loop {
            let mut u = rng.random::<f64>() * self.positive_total;
            let mut k = 0;
            while k < 2 && u >= self.positive[k] {
                u -= self.positive[k];
                k += 1;
            }
            let z: f64 = StandardNormal.sample(rng);
            let q = self.centers[k] + z;
            let (mut target, mut envelope) = (0.0, 0.0);
            for i in 0..3 {
                let gi = Self::gauss(q, self.centers[i]);
                target += self.weights[i] * gi;
                envelope += self.positive[i] * gi;
            }
            if rng.random::<f64>() * envelope < target {
                return q;
            }
        }
    }

    fn momentum(&self, rng: &mut ChaCha8Rng) -> f64 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            let p = 0.5 * z;
            let amp = (1.0 - self.w) + self.w * C64::from_polar(1.0, -p * self.g);
            if rng.random::<f64>() * self.momentum_bound < amp.norm_sqr() {
                return p;
            }
        }
    }
}

fn run_chunks(pointer: &Pointer, postselection_prob: f64, shots: u64, seed: u64, exec: Execution) -> Moments {
    let chunks = shots.div_ceil(SHOTS_PER_CHUNK) as usize;
    let parts = exec.map(chunks, |k| {
        let mut rng = rng::substream(seed, k as u64);
        let n = SHOTS_PER_CHUNK.min(shots - k as u64 * SHOTS_PER_CHUNK);
        let mut m = Moments::default();
        for _ in 0..n {
            if rng.random::<f64>() >= postselection_prob {
                continue;
            }
            if m.post % 2 == 0 {
                let q = pointer.position(&mut rng);
                m.nq += 1;
                m.sq += q;
                m.sq2 += q * q;
            } else {
                let p = pointer.momentum(&mut rng);
                m.np += 1;
                m.sp += p;
                m.sp2 += p * p;
            }
            m.post += 1;
        }
        m
    });
    parts.into_iter().fold(Moments::default(), Moments::merge)
}

fn mean_and_se(n: u64, s: f64, s2: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, f64::INFINITY);
    }
    let nf = n as f64;
    let mean = s / nf;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Weak measurement of the projector onto `m`, prepared in `a`, post-selected on `b`.
pub fn simulate_weak_value(a: (&Basis, usize), b: (&Basis, usize), m_basis: &Basis, m: usize, cfg: &WeakConfig) -> Result<WeakRunReport> {
    simulate_weak_value_with(a, b, m_basis, m, cfg, Execution::default())
}

pub fn simulate_weak_value_with(
    a: (&Basis, usize),
    b: (&Basis, usize),
    m_basis: &Basis,
    m: usize,
    cfg: &WeakConfig,
    exec: Execution,
) -> Result<WeakRunReport> {
    cfg.validate()?;
    let ((a_basis, ai), (b_basis, bi)) = (a, b);
    m_basis.require_same_dim(a_basis)?;
    m_basis.require_same_dim(b_basis)?;
    a_basis.check_index(ai)?;
    b_basis.check_index(bi)?;
    m_basis.check_index(m)?;
    let p_ba = b_basis.overlap(bi, a_basis, ai).norm_sqr();
    if p_ba < MIN_POSTSELECTION {
        return Err(Error::Precondition(format!("post-selection probability {p_ba:e} is below {MIN_POSTSELECTION:e}")));
    }
    let w = ccp_value(m_basis, m, a_basis, ai, b_basis, bi)?;
    let g = cfg.coupling;
    let ps = (p_ba * pointer_norm(w, g)).min(1.0);
    let mom = run_chunks(&Pointer::new(w, g), ps, cfg.shots, cfg.seed, exec);
    if mom.post < STARVATION_THRESHOLD {
        return Err(Error::PostSelectionStarvation { postselected: mom.post });
    }
    let (mq, seq) = mean_and_se(mom.nq, mom.sq, mom.sq2);
    let (mp, sep) = mean_and_se(mom.np, mom.sp, mom.sp2);
    Ok(WeakRunReport {
        estimate: C64::new(mq / g, 2.0 * mp / g),
        std_err: (seq / g, 2.0 * sep / g),
        shots_total: cfg.shots,
        shots_postselected: mom.post,
        position_reads: mom.nq,
        momentum_reads: mom.np,
        coupling: g,
        seed: cfg.seed,
        analytic_ref: w,
        expected_response: pointer_response(w, g),
        bias_constant: bias_constant(w),
        postselection_prob: ps,
    })
}

/// Outcome frequencies of a projective `M` measurement followed by `B`.
#[derive(Clone, Debug, Serialize)]
pub struct SequentialReport {
    pub shots: u64,
    pub seed: u64,
    /// `counts[(m, b)]`
    #[serde(serialize_with = "rows")]
    pub counts: DMatrix<u64>,
    /// `p(b|m) p(m|a)`
    #[serde(serialize_with = "rows")]
    pub expected: DMatrix<f64>,
}

fn rows<T, S>(m: &DMatrix<T>, s: S) -> std::result::Result<S::Ok, S::Error>
where
    T: nalgebra::Scalar + Serialize,
    S: serde::Serializer,
{
    let nested: Vec<Vec<&T>> = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| &m[(i, j)]).collect()).collect();
    nested.serialize(s)
}

impl SequentialReport {
    pub fn frequency(&self, m: usize, b: usize) -> f64 {
        self.counts[(m, b)] as f64 / self.shots as f64
    }

    pub fn marginal_b(&self) -> Vec<f64> {
        self.counts.column_iter().map(|c| c.iter().sum::<u64>() as f64 / self.shots as f64).collect()
    }

    /// `Σ_m p(b|m) p(m|a)`
    pub fn expected_marginal_b(&self) -> Vec<f64> {
        self.expected.column_iter().map(|c| c.sum()).collect()
    }

    /// Cells (including the `b` marginal) further than `k` binomial standard
    /// errors from their expectation. A cell with zero expectation fails if hit.
    pub fn gate_exceedances(&self, k: f64) -> usize {
        let n = self.shots as f64;
        let off = |f: f64, p: f64| {
            let se = (p * (1.0 - p) / n).sqrt();
            if se == 0.0 {
                f != p
            } else {
                (f - p).abs() > k * se
            }
        };
        let (d0, d1) = self.counts.shape();
        let mut bad = 0;
        for m in 0..d0 {
            for b in 0..d1 {
                bad += off(self.frequency(m, b), self.expected[(m, b)]) as usize;
            }
        }
        for (f, p) in self.marginal_b().into_iter().zip(self.expected_marginal_b()) {
            bad += off(f, p) as usize;
        }
        bad
    }

    pub fn to_csv(&self, m_basis: &Basis, b_basis: &Basis) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["m_label", "b_label", "count", "frequency", "expected"])?;
        for m in 0..self.counts.nrows() {
            for b in 0..self.counts.ncols() {
                w.write_record([
                    m_basis.label(m).to_string(),
                    b_basis.label(b).to_string(),
                    self.counts[(m, b)].to_string(),
                    self.frequency(m, b).to_string(),
                    self.expected[(m, b)].to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn simulate_sequential(a: (&Basis, usize), m_basis: &Basis, b_basis: &Basis, shots: u64, seed: u64) -> Result<SequentialReport> {
    simulate_sequential_with(a, m_basis, b_basis, shots, seed, Execution::default())
}

pub fn simulate_sequential_with(
    a: (&Basis, usize),
    m_basis: &Basis,
    b_basis: &Basis,
    shots: u64,
    seed: u64,
    exec: Execution,
) -> Result<SequentialReport> {
    let (a_basis, ai) = a;
    m_basis.require_same_dim(a_basis)?;
    m_basis.require_same_dim(b_basis)?;
    a_basis.check_index(ai)?;
    if shots < MIN_SHOTS {
        return Err(Error::Precondition(format!("need at least {MIN_SHOTS} shots, got {shots}")));
    }
    let d = m_basis.dim();
    let p_m: Vec<f64> = (0..d).map(|m| m_basis.overlap(m, a_basis, ai).norm_sqr()).collect();
    let p_b_given_m: Vec<Vec<f64>> = (0..d).map(|m| (0..d).map(|b| b_basis.overlap(b, m_basis, m).norm_sqr()).collect()).collect();
    let first = WeightedIndex::new(&p_m).map_err(|e| Error::Precondition(e.to_string()))?;
    let second: Vec<Option<WeightedIndex<f64>>> = p_b_given_m.iter().map(|row| WeightedIndex::new(row).ok()).collect();

    let chunks = shots.div_ceil(SHOTS_PER_CHUNK) as usize;
    let parts = exec.map(chunks, |k| {
        let mut rng = rng::substream(seed, k as u64);
        let n = SHOTS_PER_CHUNK.min(shots - k as u64 * SHOTS_PER_CHUNK);
        let mut counts = vec![0u64; d * d];
        for _ in 0..n {
            let m = first.sample(&mut rng);
            let b = second[m].as_ref().expect("sampled m has a normalized row").sample(&mut rng);
            counts[m * d + b] += 1;
        }
        counts
    });
    let mut counts = DMatrix::<u64>::zeros(d, d);
    for part in parts {
        for (i, c) in part.into_iter().enumerate() {
            counts[(i / d, i % d)] += c;
        }
    }
    let expected = DMatrix::from_fn(d, d, |m, b| p_b_given_m[m][b] * p_m[m]);
    Ok(SequentialReport { shots, seed, counts, expected })
}

/// One position of a wavefunction scan.
#[derive(Clone, Debug, Serialize)]
pub struct ScanPoint {
    pub x_index: usize,
    /// Rescaled weak-value estimate.
    pub value: C64,
    pub std_err: (f64, f64),
    /// `sqrt(p(a|b)/p(x|b)) p(x|a,b)`, the eigenvector in the reference gauge.
    pub analytic: C64,
    /// Bias bound after rescaling.
    pub bias_bound: f64,
}

impl ScanPoint {
    pub fn within_gate(&self, k: f64) -> bool {
        let d = self.value - self.analytic;
        d.re.abs() < (k * self.std_err.0).max(self.bias_bound) && d.im.abs() < (k * self.std_err.1).max(self.bias_bound)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub points: Vec<ScanPoint>,
    /// Post-selection rate pooled over all positions, estimating `p(b|a)`.
    pub postselection_rate: f64,
    pub shots_per_point: u64,
    pub coupling: f64,
    pub seed: u64,
}

impl ScanReport {
    pub fn gate_failures(&self, k: f64) -> usize {
        self.points.iter().filter(|p| !p.within_gate(k)).count()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x_index", "re", "im", "se_re", "se_im", "analytic_re", "analytic_im"])?;
        for p in &self.points {
            w.write_record([
                p.x_index.to_string(),
                p.value.re.to_string(),
                p.value.im.to_string(),
                p.std_err.0.to_string(),
                p.std_err.1.to_string(),
                p.analytic.re.to_string(),
                p.analytic.im.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub const MAX_SCAN_DIM: usize = 64;

/// Direct wavefunction measurement: a weak measurement of every position
/// projector with a fixed post-selection `b`, rescaled by
/// `sqrt(p(b|a)/p(x|b))` using the measured post-selection rate.
pub fn scan_wavefunction(
    x_basis: &Basis,
    state: (&Basis, usize),
    b: (&Basis, usize),
    coupling: f64,
    shots_per_point: u64,
    seed: u64,
    exec: Execution,
) -> Result<ScanReport> {
    let d = x_basis.dim();
    if d > MAX_SCAN_DIM {
        return Err(Error::Precondition(format!("scan dimension {d} exceeds {MAX_SCAN_DIM}")));
    }
    let (a_basis, ai) = state;
    let (b_basis, bi) = b;
    let reports = exec.try_map(d, |x| {
        let cfg = WeakConfig { coupling, shots: shots_per_point, seed: rng::derive_seed(seed, x as u64) };
        simulate_weak_value_with(state, b, x_basis, x, &cfg, Execution::Sequential)
    })?;
    let post: u64 = reports.iter().map(|r| r.shots_postselected).sum();
    let rate = post as f64 / (shots_per_point as f64 * d as f64);
    let p_ab = b_basis.overlap(bi, a_basis, ai).norm_sqr();

    let points = reports
        .iter()
        .enumerate()
        .map(|(x, r)| {
            let p_xb = x_basis.overlap(x, b_basis, bi).norm_sqr();
            let measured_scale = (rate / p_xb).sqrt();
            let exact_scale = (p_ab / p_xb).sqrt();
            ScanPoint {
                x_index: x,
                value: r.estimate * measured_scale,
                std_err: (r.std_err.0 * measured_scale, r.std_err.1 * measured_scale),
                analytic: r.analytic_ref * exact_scale,
                bias_bound: r.bias_bound() * exact_scale,
            }
        })
        .collect();
    Ok(ScanReport { points, postselection_rate: rate, shots_per_point, coupling, seed })
}
