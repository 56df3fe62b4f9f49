//! Residue-class analysis of the Collatz map.
//!
//! The third iterate `S = T∘T∘T` is affine on every class mod 8. Pulling
//! classes `B(j, 8^m)` back through `S` gives unions of classes mod
//! `8^(m+1)`, which carry an exactly S-invariant measure. That measure turns
//! `S` into a finite Markov chain on the `8^m` classes, whose stationary
//! distribution weights the per-class contraction factors of `S`.
//!
//! * [`maps`]: `T`, `S` and the branch table.
//! * [`congruence`]: classes, linear congruences, preimages.
//! * [`measure`]: the invariant measures and the invariance check.
//! * [`markov`]: transition matrices, stationarity, powers, ergodicity.
//! * [`contraction`]: contraction factors and Birkhoff averages.
//! * [`empirical`]: the brute-force trajectory sweep.

pub mod congruence;
pub mod contraction;
pub mod empirical;
pub mod error;
pub mod format;
pub mod maps;
pub mod markov;
pub mod measure;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use measure::Rational;
