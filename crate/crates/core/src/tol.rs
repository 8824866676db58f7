//! Numerical tolerances shared across modules.

/// Largest Gram-matrix deviation accepted from caller-supplied columns.
pub const INPUT_ORTHONORMALITY: f64 = 1e-8;
/// Orthonormality guaranteed for every constructed [`crate::Basis`].
pub const ORTHONORMALITY: f64 = 1e-10;
/// Below this Gram deviation a basis is left untouched (keeps construction idempotent).
pub const REORTHONORMALIZE_ABOVE: f64 = 1e-13;
/// Components smaller than this carry no meaningful phase.
pub const PHASE_FLOOR: f64 = 1e-12;
/// Relative cutoff on `|⟨b|a⟩|` below which a conditional is undefined.
pub const OVERLAP_CUTOFF: f64 = 1e-10;

/// Identity tolerances grow linearly with dimension beyond 16.
pub fn scaled(base: f64, dim: usize) -> f64 {
    if dim > 16 {
        base * dim as f64 / 16.0
    } else {
        base
    }
}

/// Distance between two angles on the circle, in `[0, π]`.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = (a - b).rem_euclid(two_pi);
    r.min(two_pi - r)
}
