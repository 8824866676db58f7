//! Numerical engine for complex conditional probabilities between three
//! measurement bases of a finite-dimensional quantum system.
//!
//! The conditional `p(m|a,b) = ⟨b|m⟩⟨m|a⟩ / ⟨b|a⟩` (the Kirkwood–Dirac ratio,
//! equal to the weak value of the projector onto `m`) is the central object.
//! The crate computes it for arbitrary basis triples, checks the algebraic
//! identities it satisfies (chain rule, determinism, the ergodicity product,
//! back-action, phase antisymmetry), rebuilds Hilbert-space amplitudes from
//! it, reproduces it operationally with a Monte Carlo weak measurement, and
//! realizes position/energy/momentum triples on a periodic 1D lattice.
//!
//! Modules:
//! - [`basis`]: orthonormal measurement bases and transition probabilities
//! - [`ccp`]: conditional tables and identity residuals
//! - [`transform`]: phase-shift transformations, dephasing, quantization
//! - [`hilbert`]: amplitude reconstruction, Born rule, joint quasiprobabilities
//! - [`weak`]: weak-measurement and sequential-measurement simulation
//! - [`lattice`]: discretized single-particle system
//!
//! With the default `parallel` feature, sweeps and Monte Carlo loops run on
//! rayon; every seeded result is independent of the thread count.

pub mod basis;
pub mod ccp;
mod error;
pub mod exec;
pub mod hilbert;
pub mod lattice;
pub mod rng;
pub mod tol;
pub mod transform;
pub mod weak;

pub use basis::{ergodic_prob, Basis, ErgodicTable};
pub use ccp::{ccp_table, ccp_value, CcpTable};
pub use error::{Error, Result};
pub use exec::Execution;
pub use hilbert::JointQuasiProb;
pub use lattice::{LatticeConfig, LatticeSystem, Potential};
pub use transform::PhaseProfile;
pub use weak::{WeakConfig, WeakRunReport};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
