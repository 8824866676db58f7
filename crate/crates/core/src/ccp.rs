//! Complex conditional probabilities `p(m|a,b) = ⟨b|m⟩⟨m|a⟩ / ⟨b|a⟩`.
//!
//! Argument order follows the notation: the target outcome `m` of basis `M`
//! comes first, then the initial condition `a` of `A`, then the final
//! condition `b` of `B`. A conditional is undefined when `|⟨b|a⟩|` is at or
//! below [`tol::OVERLAP_CUTOFF`] times the largest amplitude of the two
//! conditioning vectors; single-value calls then fail with
//! [`Error::OrthogonalCondition`], tables mask the column instead.
//!
//! Products `p(f|m,b) p(m|a,b)` stay finite even where `⟨b|m⟩ = 0` makes the
//! first factor undefined (the second factor vanishes there). Sums over
//! intermediate outcomes use that limit, `⟨b|f⟩⟨f|m⟩⟨m|a⟩ / ⟨b|a⟩`, for such
//! terms and the product of table values everywhere else.

use serde::ser::SerializeStruct;
use serde::Serialize;

use crate::exec::Execution;
use crate::{tol, Basis, Error, Result, C64};

fn cutoff(a_basis: &Basis, a: usize, b_basis: &Basis, b: usize) -> f64 {
    tol::OVERLAP_CUTOFF * a_basis.max_amplitude(a).max(b_basis.max_amplitude(b))
}

fn check_triple(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis) -> Result<()> {
    m_basis.require_same_dim(a_basis)?;
    m_basis.require_same_dim(b_basis)
}

/// `⟨b|a⟩`, or `OrthogonalCondition` when it is below the cutoff.
pub fn condition_overlap(a_basis: &Basis, a: usize, b_basis: &Basis, b: usize) -> Result<C64> {
    let ov = b_basis.overlap(b, a_basis, a);
    if ov.norm() <= cutoff(a_basis, a, b_basis, b) {
        Err(Error::OrthogonalCondition { overlap: ov.norm() })
    } else {
        Ok(ov)
    }
}

/// Single complex conditional probability `p(m|a,b)`.
pub fn ccp_value(m_basis: &Basis, m: usize, a_basis: &Basis, a: usize, b_basis: &Basis, b: usize) -> Result<C64> {
    check_triple(m_basis, a_basis, b_basis)?;
    m_basis.check_index(m)?;
    a_basis.check_index(a)?;
    b_basis.check_index(b)?;
    let ba = condition_overlap(a_basis, a, b_basis, b)?;
    Ok(b_basis.overlap(b, m_basis, m) * m_basis.overlap(m, a_basis, a) / ba)
}

/// `p(m|a,b)` for every outcome `m` of `M`.
pub fn ccp_column(m_basis: &Basis, a_basis: &Basis, a: usize, b_basis: &Basis, b: usize) -> Result<Vec<C64>> {
    check_triple(m_basis, a_basis, b_basis)?;
    a_basis.check_index(a)?;
    b_basis.check_index(b)?;
    let ba = condition_overlap(a_basis, a, b_basis, b)?;
    Ok((0..m_basis.dim())
        .map(|m| b_basis.overlap(b, m_basis, m) * m_basis.overlap(m, a_basis, a) / ba)
        .collect())
}

/// `p(f|m,b) p(m|a,b)` with the finite limit used where `⟨b|m⟩` vanishes.
pub fn chained_term(
    f_basis: &Basis,
    f: usize,
    m_basis: &Basis,
    m: usize,
    a_basis: &Basis,
    a: usize,
    b_basis: &Basis,
    b: usize,
) -> Result<C64> {
    let ba = condition_overlap(a_basis, a, b_basis, b)?;
    let inner = b_basis.overlap(b, m_basis, m) * m_basis.overlap(m, a_basis, a) / ba;
    match condition_overlap(m_basis, m, b_basis, b) {
        Ok(bm) => {
            let outer = b_basis.overlap(b, f_basis, f) * f_basis.overlap(f, m_basis, m) / bm;
            Ok(outer * inner)
        }
        Err(_) => Ok(b_basis.overlap(b, f_basis, f) * f_basis.overlap(f, m_basis, m) * m_basis.overlap(m, a_basis, a) / ba),
    }
}

/// Full table `p(m|a,b)` over a basis triple.
#[derive(Clone, Debug)]
pub struct CcpTable {
    m_basis: Basis,
    a_basis: Basis,
    b_basis: Basis,
    dim: usize,
    /// `(a * d + b) * d + m`
    vals: Vec<C64>,
    /// `a * d + b`
    defined: Vec<bool>,
}

/// Computes `p(m|a,b)` for every index triple, masking orthogonal `(a,b)`.
pub fn ccp_table(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis) -> Result<CcpTable> {
    ccp_table_with(m_basis, a_basis, b_basis, Execution::default())
}

pub fn ccp_table_with(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis, exec: Execution) -> Result<CcpTable> {
    check_triple(m_basis, a_basis, b_basis)?;
    let d = m_basis.dim();
    let bm = b_basis.overlaps(m_basis);
    let ma = m_basis.overlaps(a_basis);
    let ba = b_basis.overlaps(a_basis);
    let amax: Vec<f64> = (0..d).map(|k| a_basis.max_amplitude(k)).collect();
    let bmax: Vec<f64> = (0..d).map(|k| b_basis.max_amplitude(k)).collect();

    let columns = exec.map(d * d, |ab| {
        let (a, b) = (ab / d, ab % d);
        let ov = ba[(b, a)];
        if ov.norm() <= tol::OVERLAP_CUTOFF * amax[a].max(bmax[b]) {
            return None;
        }
        Some((0..d).map(|m| bm[(b, m)] * ma[(m, a)] / ov).collect::<Vec<_>>())
    });

    let mut vals = Vec::with_capacity(d * d * d);
    let mut defined = Vec::with_capacity(d * d);
    for col in columns {
        match col {
            Some(c) => {
                vals.extend(c);
                defined.push(true);
            }
            None => {
                vals.extend(std::iter::repeat_n(C64::new(0.0, 0.0), d));
                defined.push(false);
            }
        }
    }
    Ok(CcpTable {
        m_basis: m_basis.clone(),
        a_basis: a_basis.clone(),
        b_basis: b_basis.clone(),
        dim: d,
        vals,
        defined,
    })
}

impl CcpTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m_basis(&self) -> &Basis {
        &self.m_basis
    }

    pub fn a_basis(&self) -> &Basis {
        &self.a_basis
    }

    pub fn b_basis(&self) -> &Basis {
        &self.b_basis
    }

    pub fn is_defined(&self, a: usize, b: usize) -> bool {
        self.defined[a * self.dim + b]
    }

    /// `p(m|a,b)`, or `None` if `(a,b)` is masked.
    pub fn get(&self, m: usize, a: usize, b: usize) -> Option<C64> {
        self.column(a, b).map(|c| c[m])
    }

    /// All `p(m|a,b)` over `m`, or `None` if `(a,b)` is masked.
    pub fn column(&self, a: usize, b: usize) -> Option<&[C64]> {
        if self.is_defined(a, b) {
            let start = (a * self.dim + b) * self.dim;
            Some(&self.vals[start..start + self.dim])
        } else {
            None
        }
    }

    /// Column as a `Result`, for operations that require a defined pair.
    pub fn require_column(&self, a: usize, b: usize) -> Result<&[C64]> {
        self.a_basis.check_index(a)?;
        self.b_basis.check_index(b)?;
        self.column(a, b).ok_or_else(|| Error::OrthogonalCondition {
            overlap: self.b_basis.overlap(b, &self.a_basis, a).norm(),
        })
    }

    /// `p(b|a) = |⟨b|a⟩|²` from the table's own bases.
    pub fn ergodic_ba(&self, a: usize, b: usize) -> f64 {
        self.b_basis.overlap(b, &self.a_basis, a).norm_sqr()
    }

    pub fn defined_count(&self) -> usize {
        self.defined.iter().filter(|&&d| d).count()
    }

    /// Largest `|Σ_m p(m|a,b) − 1|` over defined columns.
    pub fn normalization_deviation(&self) -> f64 {
        let d = self.dim;
        (0..d * d)
            .filter(|&ab| self.defined[ab])
            .map(|ab| {
                let s: C64 = self.vals[ab * d..(ab + 1) * d].iter().sum();
                (s - C64::new(1.0, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// CSV rows `(m_label, re, im, magnitude, phase)` for one `(a,b)` column.
    pub fn column_csv(&self, a: usize, b: usize) -> Result<String> {
        let col = self.require_column(a, b)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["m_label", "re", "im", "magnitude", "phase"])?;
        for (m, v) in col.iter().enumerate() {
            w.write_record([
                self.m_basis.label(m).to_string(),
                v.re.to_string(),
                v.im.to_string(),
                v.norm().to_string(),
                v.arg().to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

impl Serialize for CcpTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Bases<'a> {
            #[serde(rename = "M")]
            m: &'a Basis,
            #[serde(rename = "A")]
            a: &'a Basis,
            #[serde(rename = "B")]
            b: &'a Basis,
        }
        let d = self.dim;
        let entry = |m: usize, a: usize, b: usize| self.get(m, a, b).unwrap_or(C64::new(0.0, 0.0));
        let re: Vec<Vec<Vec<f64>>> = (0..d)
            .map(|m| (0..d).map(|a| (0..d).map(|b| entry(m, a, b).re).collect()).collect())
            .collect();
        let im: Vec<Vec<Vec<f64>>> = (0..d)
            .map(|m| (0..d).map(|a| (0..d).map(|b| entry(m, a, b).im).collect()).collect())
            .collect();
        let mask: Vec<Vec<bool>> = (0..d).map(|a| (0..d).map(|b| self.is_defined(a, b)).collect()).collect();

        let mut st = s.serialize_struct("CcpTable", 4)?;
        st.serialize_field("bases", &Bases { m: &self.m_basis, a: &self.a_basis, b: &self.b_basis })?;
        st.serialize_field("re", &re)?;
        st.serialize_field("im", &im)?;
        st.serialize_field("defined_mask", &mask)?;
        st.end()
    }
}

/// Result of [`chain_compose`]: `p(f|a,b)` obtained through an intermediate basis.
#[derive(Clone, Debug)]
pub struct ComposedTable {
    dim: usize,
    vals: Vec<C64>,
    defined: Vec<bool>,
}

impl ComposedTable {
    pub fn get(&self, f: usize, a: usize, b: usize) -> Option<C64> {
        let d = self.dim;
        if self.defined[a * d + b] {
            Some(self.vals[(a * d + b) * d + f])
        } else {
            None
        }
    }

    pub fn is_defined(&self, a: usize, b: usize) -> bool {
        self.defined[a * self.dim + b]
    }
}

/// Chain rule: `Σ_m p(f|m,b) p(m|a,b)` from a table over `(F, M, B)` and one
/// over `(M, A, B)`.
pub fn chain_compose(outer: &CcpTable, inner: &CcpTable) -> Result<ComposedTable> {
    if outer.dim != inner.dim {
        return Err(Error::BasisMismatch(format!("dimensions {} and {}", outer.dim, inner.dim)));
    }
    if !outer.a_basis.same_as(&inner.m_basis) {
        return Err(Error::BasisMismatch("outer initial basis differs from inner intermediate basis".into()));
    }
    if !outer.b_basis.same_as(&inner.b_basis) {
        return Err(Error::BasisMismatch("final bases differ".into()));
    }
    let d = inner.dim;
    let f_basis = &outer.m_basis;
    let m_basis = &inner.m_basis;
    let a_basis = &inner.a_basis;
    let b_basis = &inner.b_basis;
    let bf = b_basis.overlaps(f_basis);
    let fm = f_basis.overlaps(m_basis);
    let ma = m_basis.overlaps(a_basis);
    let ba = b_basis.overlaps(a_basis);

    let mut vals = vec![C64::new(0.0, 0.0); d * d * d];
    let mut defined = vec![false; d * d];
    for a in 0..d {
        for b in 0..d {
            let Some(inner_col) = inner.column(a, b) else { continue };
            defined[a * d + b] = true;
            for f in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for (m, &p_mab) in inner_col.iter().enumerate() {
                    acc += match outer.get(f, m, b) {
                        Some(p_fmb) => p_fmb * p_mab,
                        None => bf[(b, f)] * fm[(f, m)] * ma[(m, a)] / ba[(b, a)],
                    };
                }
                vals[(a * d + b) * d + f] = acc;
            }
        }
    }
    Ok(ComposedTable { dim: d, vals, defined })
}

/// Worst deviation between the chain-rule composition through `M` and the
/// direct table `p(f|a,b)`, over pairs defined on both sides.
pub fn chain_rule_residual(f_basis: &Basis, m_basis: &Basis, a_basis: &Basis, b_basis: &Basis) -> Result<f64> {
    let composed = chain_compose(&ccp_table(f_basis, m_basis, b_basis)?, &ccp_table(m_basis, a_basis, b_basis)?)?;
    let direct = ccp_table(f_basis, a_basis, b_basis)?;
    let d = direct.dim;
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            if !(composed.is_defined(a, b) && direct.is_defined(a, b)) {
                continue;
            }
            for f in 0..d {
                let diff = composed.get(f, a, b).unwrap() - direct.get(f, a, b).unwrap();
                worst = worst.max(diff.norm());
            }
        }
    }
    Ok(worst)
}

/// `max |Σ_m p(a'|m,b) p(m|a,b) − δ_{a,a'}|` over defined `(a, a', b)`.
pub fn determinism_residual(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis) -> Result<f64> {
    let composed = chain_compose(&ccp_table(a_basis, m_basis, b_basis)?, &ccp_table(m_basis, a_basis, b_basis)?)?;
    let d = a_basis.dim();
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            if !composed.is_defined(a, b) {
                continue;
            }
            for a2 in 0..d {
                let target = if a == a2 { 1.0 } else { 0.0 };
                let dev = (composed.get(a2, a, b).unwrap() - C64::new(target, 0.0)).norm();
                worst = worst.max(dev);
            }
        }
    }
    Ok(worst)
}

/// `p(a|m,b) p(m|a,b)`; equals the transition probability `p(m|a)` for every `b`.
pub fn ergodicity_product(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis, m: usize, a: usize, b: usize) -> Result<C64> {
    let back = ccp_value(a_basis, a, m_basis, m, b_basis, b)?;
    let fwd = ccp_value(m_basis, m, a_basis, a, b_basis, b)?;
    Ok(back * fwd)
}

/// Sweep summary of the ergodicity product over all defined triples.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ErgodicityResidual {
    /// `max |p(a|m,b) p(m|a,b) − p(m|a)|`
    pub max_deviation: f64,
    /// `max |Im p(a|m,b) p(m|a,b)|`
    pub max_imaginary: f64,
    /// Largest spread of the product across `b` for fixed `(m, a)`.
    pub max_b_spread: f64,
    pub triples_checked: usize,
}

pub fn ergodicity_residual(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis) -> Result<ErgodicityResidual> {
    check_triple(m_basis, a_basis, b_basis)?;
    let d = m_basis.dim();
    let mut out = ErgodicityResidual::default();
    for m in 0..d {
        for a in 0..d {
            let target = m_basis.overlap(m, a_basis, a).norm_sqr();
            let mut seen: Vec<C64> = Vec::new();
            for b in 0..d {
                let Ok(p) = ergodicity_product(m_basis, a_basis, b_basis, m, a, b) else { continue };
                out.max_deviation = out.max_deviation.max((p - C64::new(target, 0.0)).norm());
                out.max_imaginary = out.max_imaginary.max(p.im.abs());
                for q in &seen {
                    out.max_b_spread = out.max_b_spread.max((p - q).norm());
                }
                seen.push(p);
                out.triples_checked += 1;
            }
        }
    }
    Ok(out)
}

/// Back-action form: returns `(p(b|m) p(m|a), p(b|a) |p(m|a,b)|²)`.
pub fn backaction_check(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis, m: usize, a: usize, b: usize) -> Result<(f64, f64)> {
    let p = ccp_value(m_basis, m, a_basis, a, b_basis, b)?;
    let lhs = b_basis.overlap(b, m_basis, m).norm_sqr() * m_basis.overlap(m, a_basis, a).norm_sqr();
    let rhs = b_basis.overlap(b, a_basis, a).norm_sqr() * p.norm_sqr();
    Ok((lhs, rhs))
}

/// `max |lhs − rhs|` of [`backaction_check`] over all defined triples.
pub fn backaction_residual(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis) -> Result<f64> {
    check_triple(m_basis, a_basis, b_basis)?;
    let d = m_basis.dim();
    let mut worst: f64 = 0.0;
    for m in 0..d {
        for a in 0..d {
            for b in 0..d {
                if let Ok((l, r)) = backaction_check(m_basis, a_basis, b_basis, m, a, b) {
                    worst = worst.max((l - r).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Worst circle distance from zero of `Arg p(a|m,b) + Arg p(m|a,b)` and of
/// `Arg p(m|a,b) + Arg p(m|b,a)`, skipping values whose phase is undefined.
pub fn phase_antisymmetry_check(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis) -> Result<f64> {
    check_triple(m_basis, a_basis, b_basis)?;
    let d = m_basis.dim();
    let phase_ok = |z: &C64| z.norm() >= tol::PHASE_FLOOR;
    let mut worst: f64 = 0.0;
    for m in 0..d {
        for a in 0..d {
            for b in 0..d {
                let Ok(fwd) = ccp_value(m_basis, m, a_basis, a, b_basis, b) else { continue };
                if !phase_ok(&fwd) {
                    continue;
                }
                if let Ok(back) = ccp_value(a_basis, a, m_basis, m, b_basis, b) {
                    if phase_ok(&back) {
                        worst = worst.max(tol::circle_distance(back.arg() + fwd.arg(), 0.0));
                    }
                }
                if let Ok(rev) = ccp_value(m_basis, m, b_basis, b, a_basis, a) {
                    if phase_ok(&rev) {
                        worst = worst.max(tol::circle_distance(fwd.arg() + rev.arg(), 0.0));
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// Returns `(p(m|a,b) p(a|b), p(a|b,m) p(m|b))`, where `p(a|b,m)` has initial
/// condition `b` and final condition `m`.
pub fn bayes_convert(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis, m: usize, a: usize, b: usize) -> Result<(C64, C64)> {
    let p_m_ab = ccp_value(m_basis, m, a_basis, a, b_basis, b)?;
    let p_a_bm = ccp_value(a_basis, a, b_basis, b, m_basis, m)?;
    let p_a_b = a_basis.overlap(a, b_basis, b).norm_sqr();
    let p_m_b = m_basis.overlap(m, b_basis, b).norm_sqr();
    Ok((p_m_ab * p_a_b, p_a_bm * p_m_b))
}

pub fn bayes_residual(m_basis: &Basis, a_basis: &Basis, b_basis: &Basis) -> Result<f64> {
    check_triple(m_basis, a_basis, b_basis)?;
    let d = m_basis.dim();
    let mut worst: f64 = 0.0;
    for m in 0..d {
        for a in 0..d {
            for b in 0..d {
                if let Ok((l, r)) = bayes_convert(m_basis, a_basis, b_basis, m, a, b) {
                    worst = worst.max((l - r).norm());
                }
            }
        }
    }
    Ok(worst)
}

/// Conditional estimation error of the values carried by `A`, given the
/// initial condition `b` and a final outcome in `M`.
#[derive(Clone, Debug, Serialize)]
pub struct OzawaReport {
    /// Real part of the total; the imaginary part is checked to vanish.
    pub epsilon_sq: f64,
    /// Contribution of each final outcome `m` (real parts).
    pub per_m_terms: Vec<f64>,
    pub values_used: Vec<f64>,
}

/// `ε²(A) = Σ_{a,a'} ½(A_a − A_a')² Σ_m p(a'|m,b) p(m|a,b) p(a|b)` with complex
/// conditionals; determinism makes it vanish.
pub fn ozawa_error(m_basis: &Basis, a_basis: &Basis, condition: (&Basis, usize)) -> Result<OzawaReport> {
    let (b_basis, b) = condition;
    check_triple(m_basis, a_basis, b_basis)?;
    b_basis.check_index(b)?;
    let values = a_basis.values().ok_or(Error::MissingValues)?.to_vec();
    let d = a_basis.dim();

    let mut per_m = vec![C64::new(0.0, 0.0); d];
    for (m, term) in per_m.iter_mut().enumerate() {
        for a in 0..d {
            let p_mab = ccp_value(m_basis, m, a_basis, a, b_basis, b)?;
            let p_ab = a_basis.overlap(a, b_basis, b).norm_sqr();
            for a2 in 0..d {
                if a2 == a {
                    continue;
                }
                let p_a2mb = ccp_value(a_basis, a2, m_basis, m, b_basis, b)?;
                let w = 0.5 * (values[a] - values[a2]).powi(2);
                *term += p_a2mb * p_mab * (w * p_ab);
            }
        }
    }
    let total: C64 = per_m.iter().sum();
    if total.im.abs() >= 1e-9 {
        return Err(Error::ImaginaryResidue(total.im));
    }
    Ok(OzawaReport {
        epsilon_sq: total.re,
        per_m_terms: per_m.iter().map(|z| z.re).collect(),
        values_used: values,
    })
}

/// Spread of two independent samples: `Σ_{a,a'} ½(A_a − A_a')² p(a) p(a')`.
pub fn classical_uncertainty(values: &[f64], probs: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (va, pa) in values.iter().zip(probs) {
        for (vb, pb) in values.iter().zip(probs) {
            acc += 0.5 * (va - vb).powi(2) * pa * pb;
        }
    }
    acc
}

#[cfg(test)]
/// Matrix of transition probabilities `|⟨x|y⟩|²`, convenience for sweeps.
pub(crate) fn transition_matrix(x: &Basis, y: &Basis) -> nalgebra::DMatrix<f64> {
    x.overlaps(y).map(|c| c.norm_sqr())
}
