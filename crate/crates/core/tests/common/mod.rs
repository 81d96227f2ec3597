#![allow(dead_code)] // shared across several test targets

//! Shared oracles for the integration tests. The Newton solvers here work
//! on the full coupled mode system with dense Jacobians, deliberately
//! avoiding the Picard tail iteration and the reduced gradient they are
//! used to check.

use std::sync::Arc;

use grad_reduce_core::linalg::solve_dense;
use grad_reduce_core::potential::Potential;
use grad_reduce_core::spectral::{SpectralBasis, SpectralField};

/// Residual of the equilibrium equation in coefficients:
/// `r_j = -lambda_j a_j - (gamma(u))_j`, assembled by direct quadrature.
fn full_residual(basis: &Arc<SpectralBasis>, potential: &Potential, coeffs: &[f64]) -> Vec<f64> {
    let u = SpectralField::from_coeffs(basis, coeffs.to_vec());
    let values = u.values();
    let gamma_vals: Vec<f64> = values.iter().map(|&v| potential.gamma(v)).collect();
    let gamma_coeffs = basis.analyze(&gamma_vals).unwrap();
    (0..basis.n_modes())
        .map(|j| -basis.eigenvalues()[j] * coeffs[j] - gamma_coeffs[j])
        .collect()
}

/// Dense Jacobian of the residual above:
/// `J_{jk} = -lambda_j delta_{jk} - quad(u_j gamma'(u) u_k)`.
fn full_jacobian(basis: &Arc<SpectralBasis>, potential: &Potential, coeffs: &[f64]) -> Vec<f64> {
    let n = basis.n_modes();
    let u = SpectralField::from_coeffs(basis, coeffs.to_vec());
    let values = u.values();
    let gp: Vec<f64> = values.iter().map(|&v| potential.gamma_prime(v)).collect();
    let w = basis.weight();
    let grid = basis.grid();
    // mode shapes on the grid
    let shapes: Vec<Vec<f64>> = (1..=n)
        .map(|j| grid.iter().map(|&x| basis.mode_value(j, x)).collect())
        .collect();
    let mut jac = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            let mut s = 0.0;
            for i in 0..grid.len() {
                s += shapes[j][i] * gp[i] * shapes[k][i];
            }
            jac[j * n + k] = -s * w;
        }
        jac[j * n + j] -= basis.eigenvalues()[j];
    }
    jac
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton on the tail block of the equilibrium equation with the
/// head coefficients frozen at `mu`. Returns the full field `mu + eta`.
pub fn newton_slaved_tail(
    basis: &Arc<SpectralBasis>,
    potential: &Potential,
    mu: &[f64],
    m: usize,
    tol: f64,
) -> SpectralField {
    let n = basis.n_modes();
    let mut coeffs = vec![0.0; n];
    coeffs[..m].copy_from_slice(mu);
    for _ in 0..60 {
        let r_full = full_residual(basis, potential, &coeffs);
        let r_tail: Vec<f64> = r_full[m..].to_vec();
        let rn = l2(&r_tail);
        if rn <= tol {
            return SpectralField::from_coeffs(basis, coeffs);
        }
        let jac_full = full_jacobian(basis, potential, &coeffs);
        let nt = n - m;
        let mut jac_tail = vec![0.0; nt * nt];
        for j in 0..nt {
            for k in 0..nt {
                jac_tail[j * nt + k] = jac_full[(j + m) * n + (k + m)];
            }
        }
        let mut rhs: Vec<f64> = r_tail.iter().map(|x| -x).collect();
        let step = solve_dense(&mut jac_tail, &mut rhs, nt).expect("tail Jacobian solvable");
        let mut lambda = 1.0;
        loop {
            let mut trial = coeffs.clone();
            for j in 0..nt {
                trial[m + j] += lambda * step[j];
            }
            let rt = full_residual(basis, potential, &trial)[m..].to_vec();
            if l2(&rt) < rn || l2(&rt) <= tol {
                coeffs = trial;
                break;
            }
            lambda *= 0.5;
            assert!(lambda > 1e-10, "tail Newton line search stalled");
        }
    }
    panic!("tail Newton did not converge");
}

/// Damped Newton on all modes of the equilibrium equation. Returns the
/// converged field, or `None` when the search stalls (e.g. near-singular
/// Jacobian between basins).
pub fn newton_full_equilibrium(
    basis: &Arc<SpectralBasis>,
    potential: &Potential,
    seed: &[f64],
    tol: f64,
) -> Option<SpectralField> {
    let n = basis.n_modes();
    let mut coeffs = seed.to_vec();
    for _ in 0..80 {
        let r = full_residual(basis, potential, &coeffs);
        let rn = l2(&r);
        if rn <= tol {
            return Some(SpectralField::from_coeffs(basis, coeffs));
        }
        let mut jac = full_jacobian(basis, potential, &coeffs);
        let mut rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let step = solve_dense(&mut jac, &mut rhs, n)?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c + lambda * step[j])
                .collect();
            let rt = full_residual(basis, potential, &trial);
            if l2(&rt) < rn || l2(&rt) <= tol {
                coeffs = trial;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                return None;
            }
        }
    }
    None
}
