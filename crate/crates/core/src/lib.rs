//! Spectral kinetic toolkit for Vlasov-type systems on the torus with
//! analytic Poisson couplings (`-ΔU + βU + h(U) = ρ`).
//!
//! Submodules, bottom up:
//! - [`grid`], [`state`], [`weight`]: grids, discrete Fourier calculus,
//!   free-transport pull-back, Gevrey weights.
//! - [`equilibrium`], [`penrose`]: equilibrium profiles, decay hypotheses,
//!   and the dispersion-function stability certificate.
//! - [`coupling`], [`field`]: the nonlinear elliptic coupling and its
//!   spectral Newton solver.
//! - [`volterra`], [`resolvent`], [`linear`]: the exact Fourier-side linear
//!   evolution through a memory-kernel Volterra equation and its resolvent,
//!   computed by two independent routes.
//! - [`sim`]: nonlinear and linearized time integration by Strang splitting
//!   with exact sub-flows.
//! - [`diagnostics`]: generator functions, lemma-scale numerical checks,
//!   decay fits, scattering and weak-limit probes.

pub mod coupling;
pub mod diagnostics;
pub mod equilibrium;
pub mod error;
pub mod field;
pub mod grid;
pub mod linear;
pub mod penrose;
pub mod quad;
pub mod resolvent;
pub mod sim;
pub mod snapshot;
pub mod state;
pub mod volterra;
pub mod weight;

pub use error::{Error, Result};
pub use grid::{japanese_bracket, TorusGrid};
pub use state::{forward_transform, free_transport_pullback, Frame, PhaseSpaceState};
pub use weight::GevreyParams;
