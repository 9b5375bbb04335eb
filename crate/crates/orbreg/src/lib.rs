//! Regularized integration of damped central-force motion.
//!
//! The crate implements the classical collision regularizations — Levi-Civita
//! conformal squaring in the plane, its power-law generalization, the
//! Kustaanheimo-Stiefel map in space, and the Bohlin-Sundman map for the
//! harmonic oscillator — extended to systems with linear velocity damping.
//! A damped system is first carried to an autonomous equivalent by the point
//! transform `X = x e^{λt/2}`, which restores a conserved energy; the
//! regularizing coordinate and time changes then turn the singular equations
//! into everywhere-regular oscillator equations with an inverted sextic
//! coupling proportional to `λ²`.
//!
//! Modules:
//! - [`algebra`]: quaternions, the LC and K-S coordinate matrices, signed
//!   permutation operators, and the iterated LC matrix recursion.
//! - [`transforms`]: coordinate, velocity and time maps between the damped,
//!   autonomous and regularized pictures.
//! - [`dynamics`]: right-hand sides for every system, plus a numerical
//!   Euler-Lagrange residual used as an independent consistency oracle.
//! - [`conserved`]: conserved energies, angular momenta, the regularized
//!   oscillator Hamiltonians, and the homogeneous-Hamiltonian identity.
//! - [`integrate`]: fixed-step RK4 and adaptive Dormand-Prince 5(4)
//!   integration with collision events, physical-time co-integration, and the
//!   singular-vs-regularized pair harness.
//! - [`verify`]: the executable check suite and its JSON report.

pub mod algebra;
pub mod conserved;
pub mod dynamics;
mod error;
pub mod integrate;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
pub use transforms::SystemParams;
