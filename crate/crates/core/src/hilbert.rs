//! Hilbert-space quantities rebuilt from conditionals and transition
//! probabilities alone: amplitudes relative to a reference outcome, inner
//! products, the Born rule, and joint quasiprobabilities of states.
//!
//! The reference outcome `b_ref` is a phase standard. Reconstructed amplitudes
//! are `⟨m|a⟩` in the gauge where every `⟨m|b_ref⟩` is real and positive, times
//! one global phase.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ccp::{chained_term, condition_overlap};
use crate::{tol, Basis, CcpTable, Error, Result, C64};

/// Below this `p(m|b_ref)` the rescaling of a conditional is undefined.
pub const REFERENCE_FLOOR: f64 = 1e-14;

fn reference_prob(basis: &Basis, k: usize, b_basis: &Basis, b: usize) -> Result<f64> {
    let p = basis.overlap(k, b_basis, b).norm_sqr();
    if p <= REFERENCE_FLOOR {
        Err(Error::ZeroReferenceOverlap { index: k, value: p })
    } else {
        Ok(p)
    }
}

/// Amplitudes `sqrt(p(a|b)/p(m|b)) p(m|a,b)` over the outcomes of the table's `M`.
pub fn reconstruct_vector(table: &CcpTable, a: usize, b_ref: usize) -> Result<Vec<C64>> {
    let col = table.require_column(a, b_ref)?;
    let (m_basis, b_basis) = (table.m_basis(), table.b_basis());
    let p_ab = table.ergodic_ba(a, b_ref);
    col.iter()
        .enumerate()
        .map(|(m, p)| Ok(p * (p_ab / reference_prob(m_basis, m, b_basis, b_ref)?).sqrt()))
        .collect()
}

/// `sqrt(p(a|b)/p(f|b)) Σ_m p(f|m,b) p(m|a,b)`: the inner product `⟨f|a⟩` in
/// the gauge fixed by `b`. Its value does not depend on `M`.
pub fn inner_product_ccp(
    f_basis: &Basis,
    f: usize,
    a_basis: &Basis,
    a: usize,
    m_basis: &Basis,
    b_basis: &Basis,
    b_ref: usize,
) -> Result<C64> {
    m_basis.require_same_dim(f_basis)?;
    m_basis.require_same_dim(a_basis)?;
    m_basis.require_same_dim(b_basis)?;
    f_basis.check_index(f)?;
    a_basis.check_index(a)?;
    b_basis.check_index(b_ref)?;
    condition_overlap(f_basis, f, b_basis, b_ref)?;
    let p_ab = a_basis.overlap(a, b_basis, b_ref).norm_sqr();
    let p_fb = reference_prob(f_basis, f, b_basis, b_ref)?;
    let mut sum = C64::new(0.0, 0.0);
    for m in 0..m_basis.dim() {
        sum += chained_term(f_basis, f, m_basis, m, a_basis, a, b_basis, b_ref)?;
    }
    Ok(sum * (p_ab / p_fb).sqrt())
}

/// `Σ_{m,m'} p(m|a,b) p(a|m',b) p(m'|f,b) p(f|m,b)`, the product trace of the
/// two projectors written with conditionals; equals `p(f|a)`.
///
/// Each summand pairs `p(f|m,b) p(m|a,b)` with `p(a|m',b) p(m'|f,b)`, and each
/// pair stays finite where `⟨b|m⟩` vanishes.
pub fn born_rule_coherence(
    f_basis: &Basis,
    f: usize,
    a_basis: &Basis,
    a: usize,
    m_basis: &Basis,
    b_basis: &Basis,
    b_ref: usize,
) -> Result<f64> {
    let z = born_rule_coherence_complex(f_basis, f, a_basis, a, m_basis, b_basis, b_ref)?;
    if z.im.abs() > 1e-10 {
        return Err(Error::ImaginaryResidue(z.im));
    }
    Ok(z.re)
}

/// The double sum of [`born_rule_coherence`] before the reality check.
pub fn born_rule_coherence_complex(
    f_basis: &Basis,
    f: usize,
    a_basis: &Basis,
    a: usize,
    m_basis: &Basis,
    b_basis: &Basis,
    b_ref: usize,
) -> Result<C64> {
    m_basis.require_same_dim(f_basis)?;
    m_basis.require_same_dim(a_basis)?;
    m_basis.require_same_dim(b_basis)?;
    f_basis.check_index(f)?;
    a_basis.check_index(a)?;
    b_basis.check_index(b_ref)?;
    let d = m_basis.dim();
    let forward: Vec<C64> = (0..d)
        .map(|m| chained_term(f_basis, f, m_basis, m, a_basis, a, b_basis, b_ref))
        .collect::<Result<_>>()?;
    let backward: Vec<C64> = (0..d)
        .map(|m| chained_term(a_basis, a, m_basis, m, f_basis, f, b_basis, b_ref))
        .collect::<Result<_>>()?;
    let mut total = C64::new(0.0, 0.0);
    for fw in &forward {
        for bw in &backward {
            total += fw * bw;
        }
    }
    Ok(total)
}

/// Joint quasiprobability `ρ(a,b)` of a state over a basis pair.
#[derive(Clone, Debug)]
pub struct JointQuasiProb {
    a_basis: Basis,
    b_basis: Basis,
    /// `vals[(a, b)]`
    vals: DMatrix<C64>,
    /// Pairs with `⟨b|a⟩` below the cutoff, filled with their finite limit.
    limit_entries: Vec<(usize, usize)>,
}

/// `ρ(a,b|m) = p*(m|a,b) p(b|a)` for the pure state `|m⟩`.
///
/// Every entry is evaluated as `⟨m|b⟩⟨b|a⟩⟨a|m⟩`, which is the same product
/// without the ratio and stays finite where `⟨b|a⟩ = 0`.
pub fn pure_state_joint(m_state: (&Basis, usize), a_basis: &Basis, b_basis: &Basis) -> Result<JointQuasiProb> {
    let (m_basis, m) = m_state;
    m_basis.check_index(m)?;
    JointQuasiProb::from_state(&m_basis.column(m), a_basis, b_basis)
}

impl JointQuasiProb {
    /// Joint of a normalized state vector given in the computational frame.
    pub fn from_state(psi: &[C64], a_basis: &Basis, b_basis: &Basis) -> Result<Self> {
        a_basis.require_same_dim(b_basis)?;
        let d = a_basis.dim();
        if psi.len() != d {
            return Err(Error::DimensionMismatch(format!("state of length {} for dimension {d}", psi.len())));
        }
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > tol::INPUT_ORTHONORMALITY {
            return Err(Error::Precondition(format!("state norm² is {norm}")));
        }
        let av = a_basis.vectors();
        let bv = b_basis.vectors();
        // ⟨a|ψ⟩ and ⟨ψ|b⟩
        let a_psi: Vec<C64> = (0..d).map(|k| (0..d).map(|j| av[(j, k)].conj() * psi[j]).sum()).collect();
        let psi_b: Vec<C64> = (0..d).map(|k| (0..d).map(|j| psi[j].conj() * bv[(j, k)]).sum()).collect();
        let ba = b_basis.overlaps(a_basis);
        let mut limit_entries = Vec::new();
        let vals = DMatrix::from_fn(d, d, |a, b| {
            let cut = tol::OVERLAP_CUTOFF * a_basis.max_amplitude(a).max(b_basis.max_amplitude(b));
            if ba[(b, a)].norm() <= cut {
                limit_entries.push((a, b));
            }
            psi_b[b] * ba[(b, a)] * a_psi[a]
        });
        limit_entries.sort_unstable();
        Ok(Self { a_basis: a_basis.clone(), b_basis: b_basis.clone(), vals, limit_entries })
    }

    /// Convex mixture of joints over the same basis pair (an extension for
    /// mixed preparations; weights must be non-negative and sum to 1).
    pub fn mix(parts: &[(f64, &JointQuasiProb)]) -> Result<Self> {
        let (_, first) = parts.first().ok_or_else(|| Error::Precondition("empty mixture".into()))?;
        let wsum: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (wsum - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition("mixture weights must be non-negative and sum to 1".into()));
        }
        let mut vals = DMatrix::zeros(first.dim(), first.dim());
        let mut limit_entries = Vec::new();
        for (w, j) in parts {
            if !j.a_basis.same_as(&first.a_basis) || !j.b_basis.same_as(&first.b_basis) {
                return Err(Error::BasisMismatch("mixture components use different bases".into()));
            }
            vals += j.vals.map(|c| c * *w);
            limit_entries.extend_from_slice(&j.limit_entries);
        }
        limit_entries.sort_unstable();
        limit_entries.dedup();
        Ok(Self { a_basis: first.a_basis.clone(), b_basis: first.b_basis.clone(), vals, limit_entries })
    }

    pub fn dim(&self) -> usize {
        self.vals.nrows()
    }

    pub fn a_basis(&self) -> &Basis {
        &self.a_basis
    }

    pub fn b_basis(&self) -> &Basis {
        &self.b_basis
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.vals[(a, b)]
    }

    pub fn values(&self) -> &DMatrix<C64> {
        &self.vals
    }

    pub fn limit_entries(&self) -> &[(usize, usize)] {
        &self.limit_entries
    }

    pub fn total(&self) -> C64 {
        self.vals.iter().sum()
    }

    /// `Σ_b ρ(a,b)` for each `a`.
    pub fn marginal_a(&self) -> Vec<C64> {
        self.vals.row_iter().map(|r| r.iter().sum()).collect()
    }

    /// `Σ_a ρ(a,b)` for each `b`.
    pub fn marginal_b(&self) -> Vec<C64> {
        self.vals.column_iter().map(|c| c.iter().sum()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&JointJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: JointJson = serde_json::from_str(s)?;
        raw.try_into()
    }

    /// CSV rows `(a_label, b_label, re, im)`, `a` major.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["a_label", "b_label", "re", "im"])?;
        for a in 0..self.dim() {
            for b in 0..self.dim() {
                let v = self.vals[(a, b)];
                w.write_record([self.a_basis.label(a), self.b_basis.label(b), &v.re.to_string(), &v.im.to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Serialize, Deserialize)]
struct JointJson {
    #[serde(rename = "A")]
    a: Basis,
    #[serde(rename = "B")]
    b: Basis,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
    #[serde(default)]
    limit_entries: Vec<(usize, usize)>,
}

impl From<&JointQuasiProb> for JointJson {
    fn from(j: &JointQuasiProb) -> Self {
        let d = j.dim();
        JointJson {
            a: j.a_basis.clone(),
            b: j.b_basis.clone(),
            re: (0..d).map(|a| (0..d).map(|b| j.vals[(a, b)].re).collect()).collect(),
            im: (0..d).map(|a| (0..d).map(|b| j.vals[(a, b)].im).collect()).collect(),
            limit_entries: j.limit_entries.clone(),
        }
    }
}

impl TryFrom<JointJson> for JointQuasiProb {
    type Error = Error;

    fn try_from(raw: JointJson) -> Result<Self> {
        raw.a.require_same_dim(&raw.b)?;
        let d = raw.a.dim();
        let ok = |m: &Vec<Vec<f64>>| m.len() == d && m.iter().all(|r| r.len() == d);
        if !ok(&raw.re) || !ok(&raw.im) {
            return Err(Error::DimensionMismatch(format!("joint arrays must be {d}x{d}")));
        }
        let vals = DMatrix::from_fn(d, d, |a, b| C64::new(raw.re[a][b], raw.im[a][b]));
        Ok(Self { a_basis: raw.a, b_basis: raw.b, vals, limit_entries: raw.limit_entries })
    }
}

/// `p(m) = Σ_{a,b} p(m|a,b) ρ(a,b)`.
///
/// A pair with `⟨b|a⟩ = 0` contributes a finite amount even though `ρ(a,b)`
/// vanishes there, and that amount cannot be recovered from `ρ` alone; such
/// joints are rejected.
pub fn predict_outcome_prob(joint: &JointQuasiProb, m_basis: &Basis, m: usize) -> Result<f64> {
    let d = joint.dim();
    if m_basis.dim() != d {
        return Err(Error::BasisMismatch(format!("joint has dimension {d}, basis {}", m_basis.dim())));
    }
    m_basis.check_index(m)?;
    let (a_basis, b_basis) = (&joint.a_basis, &joint.b_basis);
    let mut total = C64::new(0.0, 0.0);
    for a in 0..d {
        for b in 0..d {
            let rho = joint.vals[(a, b)];
            let ba = condition_overlap(a_basis, a, b_basis, b)?;
            total += b_basis.overlap(b, m_basis, m) * m_basis.overlap(m, a_basis, a) / ba * rho;
        }
    }
    if total.im.abs() > 1e-10 {
        return Err(Error::ImaginaryResidue(total.im));
    }
    Ok(total.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccp_table;
    use std::f64::consts::FRAC_1_SQRT_2 as H;

    fn z() -> Basis {
        Basis::pauli('z').unwrap()
    }
    fn x() -> Basis {
        Basis::pauli('x').unwrap()
    }
    fn y() -> Basis {
        Basis::pauli('y').unwrap()
    }
    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn reconstruct_in_own_basis() {
        let t = ccp_table(&z(), &z(), &x()).unwrap();
        let v = reconstruct_vector(&t, 0, 0).unwrap();
        assert!((v[0] - c(1.0, 0.0)).norm() < 1e-15 && v[1].norm() < 1e-15);
    }

    #[test]
    fn reconstruct_y_components() {
        let t = ccp_table(&y(), &z(), &x()).unwrap();
        let v = reconstruct_vector(&t, 0, 0).unwrap();
        // sqrt(½/½)·(1±i)/2
        assert!((v[0] - c(0.5, 0.5)).norm() < 1e-15);
        assert!((v[1] - c(0.5, -0.5)).norm() < 1e-15);
        let n: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reconstruct_rejects_zero_reference_overlap() {
        // M = Z, reference |0>: p(1|0) = 0
        let t = ccp_table(&z(), &x(), &z()).unwrap();
        assert!(matches!(reconstruct_vector(&t, 0, 0), Err(Error::ZeroReferenceOverlap { index: 1, .. })));
    }

    #[test]
    fn inner_product_examples() {
        let b = Basis::haar_random(3, 4).unwrap();
        let a = Basis::haar_random(3, 5).unwrap();
        let m = Basis::haar_random(3, 6).unwrap();
        let v = inner_product_ccp(&a, 1, &a, 1, &m, &b, 0).unwrap();
        assert!((v - c(1.0, 0.0)).norm() < 1e-12);

        // f = |+>, a = |0>, M = Y, reference |+i>; the −i intermediate term uses the limit
        let v = inner_product_ccp(&x(), 0, &z(), 0, &y(), &y(), 0).unwrap();
        assert!((v.norm() - H).abs() < 1e-15);
    }

    #[test]
    fn born_rule_examples() {
        let p = born_rule_coherence(&z(), 1, &z(), 1, &x(), &y(), 0).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
        let p = born_rule_coherence(&x(), 0, &z(), 0, &y(), &y(), 0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn joint_in_state_basis_is_diagonal_in_a() {
        let b = Basis::haar_random(3, 1).unwrap();
        let m = Basis::haar_random(3, 2).unwrap();
        let j = pure_state_joint((&m, 1), &m, &b).unwrap();
        for a in 0..3 {
            for bb in 0..3 {
                let expect = if a == 1 { m.overlap(1, &b, bb).norm_sqr() } else { 0.0 };
                assert!((j.get(a, bb) - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn qubit_joint_marginals() {
        let j = pure_state_joint((&z(), 0), &x(), &y()).unwrap();
        assert!((j.total() - c(1.0, 0.0)).norm() < 1e-15);
        for v in j.marginal_a().into_iter().chain(j.marginal_b()) {
            assert!((v - c(0.5, 0.0)).norm() < 1e-15);
        }
        assert!((predict_outcome_prob(&j, &z(), 0).unwrap() - 1.0).abs() < 1e-15);
        assert!(predict_outcome_prob(&j, &z(), 1).unwrap().abs() < 1e-15);
        let pa = predict_outcome_prob(&j, &x(), 0).unwrap();
        assert!((pa - 0.5).abs() < 1e-15);
    }

    #[test]
    fn joint_with_orthogonal_pairs_uses_limit() {
        let j = pure_state_joint((&x(), 0), &z(), &z()).unwrap();
        assert_eq!(j.limit_entries(), &[(0, 1), (1, 0)]);
        assert!((j.total() - c(1.0, 0.0)).norm() < 1e-15);
        assert!(j.get(0, 1).norm() < 1e-15);
        // p(+|a,b)ρ(a,b) → ¼ on the off-diagonal pairs, invisible in ρ
        assert!(matches!(predict_outcome_prob(&j, &x(), 0), Err(Error::OrthogonalCondition { .. })));
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let j = pure_state_joint((&z(), 0), &x(), &y()).unwrap();
        let c3 = Basis::computational(3).unwrap();
        assert!(matches!(predict_outcome_prob(&j, &c3, 0), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn mixture_of_joints() {
        let j0 = pure_state_joint((&z(), 0), &x(), &y()).unwrap();
        let j1 = pure_state_joint((&z(), 1), &x(), &y()).unwrap();
        let mixed = JointQuasiProb::mix(&[(0.25, &j0), (0.75, &j1)]).unwrap();
        assert!((predict_outcome_prob(&mixed, &z(), 1).unwrap() - 0.75).abs() < 1e-15);
        assert!(JointQuasiProb::mix(&[(0.5, &j0)]).is_err());
    }

    #[test]
    fn joint_serialization() {
        let j = pure_state_joint((&Basis::haar_random(3, 7).unwrap(), 0), &Basis::fourier(3).unwrap(), &Basis::computational(3).unwrap()).unwrap();
        let back = JointQuasiProb::from_json(&j.to_json().unwrap()).unwrap();
        assert_eq!(back.values(), j.values());
        let csv = j.to_csv().unwrap();
        assert!(csv.starts_with("a_label,b_label,re,im\nf0,0,"));
        assert_eq!(csv.lines().count(), 10);
    }
}
