//! Finite spectral reduction of a gradient reaction-diffusion equation,
//! with deterministic, stochastic, and path-space layers on the reduced
//! system.
//!
//! The pipeline: a Dirichlet sine basis on an interval carries the full
//! field ([`spectral`]); a contraction fixed point slaves the high modes
//! to the low ones and yields the reduced energy `W` with its gradient
//! ([`reduction`]); exponential and Runge-Kutta integrators compare the
//! full, truncated, and reduced flows with manifold-distance diagnostics
//! ([`dynamics`]); an overdamped Langevin layer with Fokker-Planck grid
//! evolution and entropy functionals sits on `W` ([`stochastic`]); and
//! the action machinery computes quasi-potentials and Hamilton-Jacobi
//! diagnostics ([`ldp`]).

pub mod dynamics;
pub mod io;
pub mod landscape;
pub mod ldp;
pub mod linalg;
pub mod potential;
pub mod reduction;
pub mod rng;
pub mod spectral;
pub mod stochastic;

pub use landscape::{Landscape, QuadraticLandscape};
pub use potential::{Potential, PotentialError, PotentialKind};
pub use reduction::{
    contraction_margin, ManifoldKind, NewtonSettings, ReducedPotential, ReductionError,
    TailSettings, TailSolution,
};
pub use spectral::{SpectralBasis, SpectralError, SpectralField};
