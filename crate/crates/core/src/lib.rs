//! Numerical kernel for Gisin–Percival quantum state diffusion of mixed states.
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. It provides:
//!
//! - [`linalg`]: dense complex matrices, density-matrix validation, a cyclic
//!   Jacobi Hermitian eigensolver, partial traces, power traces and resolvents.
//! - [`noise`]: counter-based complex Brownian increments with the Itô rule
//!   `dB_k dB_l* = 2 δ_kl dt`, `dB_k dB_l = 0`.
//! - [`trajectory`]: Euler–Maruyama integration of the pure-state equation on
//!   `S ⊗ S'` and of the mixed-state equation on `S`, plus the purification
//!   consistency check that runs both on one noise path.
//! - [`moments`]: the scalar moment processes `Tr ρ^m`, their Doob–Meyer
//!   ledger, an Itô-expansion oracle for `d ρ^m`, and ensemble martingale tests.
//! - [`lindblad`]: the GKSL generator, its column-stacked superoperator and the
//!   exact semigroup used as the unraveling oracle.
//! - [`spectrum`]: decreasing eigenvalue paths, moment measures, weak
//!   distances, spectrum reconstruction from power sums and convergence
//!   diagnostics.
//!
//! Conventions follow the diffusion equations verbatim: the dissipator carries
//! coefficient 1 on `ρ L†L + L†L ρ` and 2 on `L ρ L†`, and each complex
//! increment has total variance `2 dt`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod lindblad;
pub mod linalg;
pub mod moments;
pub mod noise;
pub mod spectrum;
pub mod stats;
pub mod trajectory;

pub use num_complex::Complex64 as C64;

pub use linalg::{ComplexMatrix, DensityMatrix, EigenSystem, LinalgError, Tolerances};
pub use noise::{ComplexIncrementBlock, IncrementSource, NoiseStream};
pub use trajectory::{InitialState, ModelOperators, RunParams, TrajectoryRecord};
