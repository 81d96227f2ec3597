//! Shared fixtures for the criterion benchmarks.

use std::sync::Arc;

use grad_reduce_core::potential::Potential;
use grad_reduce_core::reduction::{ReducedPotential, TailSettings};
use grad_reduce_core::spectral::SpectralBasis;

/// The default-scale reduction: 64 modes on [0, pi], cutoff 3.
pub fn default_reduction() -> ReducedPotential {
    let basis = SpectralBasis::new(std::f64::consts::PI, 64, 144).unwrap();
    let pot = Potential::clamped_double_well(0.55, 1.4, 1.6)
        .unwrap()
        .with_lipschitz_certificate(11.0)
        .unwrap();
    ReducedPotential::new(basis, Arc::new(pot), 3, TailSettings::default()).unwrap()
}

/// The small stochastic-layer reduction: one coordinate over 8 modes.
pub fn small_reduction() -> ReducedPotential {
    let basis = SpectralBasis::new(2.0 * std::f64::consts::PI, 8, 16).unwrap();
    let pot = Potential::clamped_double_well(0.36, 0.9, 1.8).unwrap();
    ReducedPotential::new(
        basis,
        Arc::new(pot),
        1,
        TailSettings {
            tol: 1e-12,
            max_iter: 400,
        },
    )
    .unwrap()
}
