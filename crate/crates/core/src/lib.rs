//! Open-system qubit dynamics through Feshbach projection in amplitude space.
//!
//! The library evolves amplitude operators κ (with ρ = κκ†) instead of density
//! operators. Projecting the evolved amplitude onto a reference environment
//! amplitude yields a contraction `Z_t` on the system space obeying a
//! memory-kernel Volterra equation; together with the leaked component it
//! reconstructs a completely positive, trace-preserving dynamical map.
//!
//! Module layout:
//! - [`qops`]: dense complex linear algebra over small Hilbert spaces,
//! - [`bath`]: spectral densities and two-time bath correlation functions,
//! - [`volterra`]: second-order solver for ∂_t Z = −i H_eff Z − ∫ M(t−s) Z_s ds,
//! - [`spinboson`]: the qubit-boson model beyond RWA in the Born-like
//!   approximation, including the white-noise closed form,
//! - [`minibath`]: exact finite-dimensional qubit + truncated-mode oracle,
//! - [`diagnostics`]: CPTP verification, trace-distance flow, divisibility,
//! - [`config`], [`output`], [`cli`]: run configuration, persistence, CLI.

pub mod bath;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod minibath;
pub mod output;
pub mod qops;
pub mod spinboson;
pub mod volterra;

pub use qops::{Amplitude, ChoiMatrix, CMat, DensityOperator, QopsError, C64};
