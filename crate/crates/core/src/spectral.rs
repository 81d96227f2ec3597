//! Dirichlet sine basis on an interval `[0, L]` and the spectral fields
//! living on it.
//!
//! The modes are `u_j(x) = sqrt(2/L) sin(j pi x / L)` with eigenvalues
//! `lambda_j = (j pi / L)^2` of `-Laplacian`, `j = 1..N`. Quadrature uses
//! the uniform interior grid `x_i = i L / (N_q + 1)`: on that grid the
//! trapezoid rule integrates products of two resolved modes exactly, so
//! discrete orthonormality, Parseval, and the analyze/synthesize round
//! trip hold to rounding error rather than to a discretization order.
//! Nonlinear terms are formed by collocation on the same grid, which is
//! oversampled (`N_q >= 2N`) to control aliasing.

use std::sync::Arc;

use thiserror::Error;

use crate::potential::Potential;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("mode index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("cutoff m={m} must satisfy 1 <= m < {n_modes}")]
    CutoffOutOfRange { m: usize, n_modes: usize },
    #[error("value grid has {got} points, quadrature grid has {expected}")]
    GridSizeMismatch { got: usize, expected: usize },
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
}

/// Sine eigenbasis of the Dirichlet Laplacian on `[0, L]`.
#[derive(Debug)]
pub struct SpectralBasis {
    length: f64,
    n_modes: usize,
    n_quad: usize,
    eigenvalues: Vec<f64>,
    grid: Vec<f64>,
    weight: f64,
    /// Mode shapes tabulated on the grid, row `j-1` holding `u_j(x_i)`;
    /// synthesize/analyze are matrix products against this table.
    shapes: Vec<f64>,
}

impl SpectralBasis {
    /// `n_modes >= 4` resolved modes, `n_quad >= 2 * n_modes` collocation
    /// points.
    pub fn new(length: f64, n_modes: usize, n_quad: usize) -> Result<Arc<Self>, SpectralError> {
        if length.is_nan() || length <= 0.0 || !length.is_finite() {
            return Err(SpectralError::InvalidBasis(format!(
                "domain length must be positive and finite, got {length}"
            )));
        }
        if n_modes < 4 {
            return Err(SpectralError::InvalidBasis(format!(
                "need at least 4 modes, got {n_modes}"
            )));
        }
        if n_quad < 2 * n_modes {
            return Err(SpectralError::InvalidBasis(format!(
                "quadrature grid {n_quad} must be at least twice the mode count {n_modes}"
            )));
        }
        let eigenvalues = (1..=n_modes)
            .map(|j| {
                let k = j as f64 * std::f64::consts::PI / length;
                k * k
            })
            .collect();
        let h = length / (n_quad + 1) as f64;
        let grid: Vec<f64> = (1..=n_quad).map(|i| i as f64 * h).collect();
        let norm = (2.0 / length).sqrt();
        let mut shapes = vec![0.0; n_modes * n_quad];
        for j in 1..=n_modes {
            let k = j as f64 * std::f64::consts::PI / length;
            for (i, &x) in grid.iter().enumerate() {
                shapes[(j - 1) * n_quad + i] = norm * (k * x).sin();
            }
        }
        Ok(Arc::new(Self {
            length,
            n_modes,
            n_quad,
            eigenvalues,
            grid,
            weight: h,
            shapes,
        }))
    }

    pub fn domain_length(&self) -> f64 {
        self.length
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_quad(&self) -> usize {
        self.n_quad
    }

    /// Eigenvalue of `-Laplacian` for mode `j` (1-based): `(j pi / L)^2`.
    pub fn eigenvalue(&self, j: usize) -> Result<f64, SpectralError> {
        if j == 0 || j > self.n_modes {
            return Err(SpectralError::IndexOutOfRange {
                index: j,
                max: self.n_modes,
            });
        }
        Ok(self.eigenvalues[j - 1])
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Collocation points (interior uniform grid).
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Quadrature weight per grid point.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// `u_j(x)`, the normalized mode shape.
    pub fn mode_value(&self, j: usize, x: f64) -> f64 {
        let norm = (2.0 / self.length).sqrt();
        norm * (j as f64 * std::f64::consts::PI * x / self.length).sin()
    }

    /// Trapezoid quadrature over `[0, L]` of point values on the grid,
    /// assuming the integrand vanishes at both endpoints (true for every
    /// integrand formed from Dirichlet fields with `V(0) = 0`).
    pub fn integrate(&self, values: &[f64]) -> Result<f64, SpectralError> {
        if values.len() != self.n_quad {
            return Err(SpectralError::GridSizeMismatch {
                got: values.len(),
                expected: self.n_quad,
            });
        }
        Ok(self.weight * values.iter().sum::<f64>())
    }

    /// Point values of a coefficient vector on the quadrature grid.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n_modes, "coefficient length mismatch");
        let mut values = vec![0.0; self.n_quad];
        for (idx, a) in coeffs.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            let row = &self.shapes[idx * self.n_quad..(idx + 1) * self.n_quad];
            for (v, s) in values.iter_mut().zip(row) {
                *v += a * s;
            }
        }
        values
    }

    /// Coefficients of grid values against the resolved modes.
    pub fn analyze(&self, values: &[f64]) -> Result<Vec<f64>, SpectralError> {
        if values.len() != self.n_quad {
            return Err(SpectralError::GridSizeMismatch {
                got: values.len(),
                expected: self.n_quad,
            });
        }
        let mut coeffs = vec![0.0; self.n_modes];
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let row = &self.shapes[idx * self.n_quad..(idx + 1) * self.n_quad];
            let mut s = 0.0;
            for (v, sh) in values.iter().zip(row) {
                s += v * sh;
            }
            *c = s * self.weight;
        }
        Ok(coeffs)
    }

    /// Two bases are interchangeable when their defining parameters match.
    pub fn same_discretization(&self, other: &Self) -> bool {
        self.length == other.length && self.n_modes == other.n_modes && self.n_quad == other.n_quad
    }
}

/// A field expressed by its coefficients on the resolved sine modes.
#[derive(Debug, Clone)]
pub struct SpectralField {
    coeffs: Vec<f64>,
    basis: Arc<SpectralBasis>,
}

impl SpectralField {
    pub fn zero(basis: &Arc<SpectralBasis>) -> Self {
        Self {
            coeffs: vec![0.0; basis.n_modes()],
            basis: Arc::clone(basis),
        }
    }

    pub fn from_coeffs(basis: &Arc<SpectralBasis>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), basis.n_modes(), "coefficient length mismatch");
        Self {
            coeffs,
            basis: Arc::clone(basis),
        }
    }

    /// `amplitude * u_j`.
    pub fn mode(basis: &Arc<SpectralBasis>, j: usize, amplitude: f64) -> Result<Self, SpectralError> {
        if j == 0 || j > basis.n_modes() {
            return Err(SpectralError::IndexOutOfRange {
                index: j,
                max: basis.n_modes(),
            });
        }
        let mut f = Self::zero(basis);
        f.coeffs[j - 1] = amplitude;
        Ok(f)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    /// L2 norm; equals the coefficient norm by Parseval.
    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.coeffs)
    }

    pub fn values(&self) -> Vec<f64> {
        self.basis.synthesize(&self.coeffs)
    }

    fn check_same_basis(&self, other: &Self) {
        assert!(
            self.basis.same_discretization(&other.basis),
            "fields live on different bases"
        );
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_same_basis(other);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            coeffs,
            basis: Arc::clone(&self.basis),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_same_basis(other);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            coeffs,
            basis: Arc::clone(&self.basis),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|a| s * a).collect(),
            basis: Arc::clone(&self.basis),
        }
    }

    /// Keep coefficients `1..=m`, zero the rest.
    pub fn project_head(&self, m: usize) -> Result<Self, SpectralError> {
        self.check_cutoff(m)?;
        let mut f = self.clone();
        for c in f.coeffs.iter_mut().skip(m) {
            *c = 0.0;
        }
        Ok(f)
    }

    /// Keep coefficients `m+1..=N`, zero the rest.
    pub fn project_tail(&self, m: usize) -> Result<Self, SpectralError> {
        self.check_cutoff(m)?;
        let mut f = self.clone();
        for c in f.coeffs.iter_mut().take(m) {
            *c = 0.0;
        }
        Ok(f)
    }

    fn check_cutoff(&self, m: usize) -> Result<(), SpectralError> {
        if m == 0 || m >= self.basis.n_modes() {
            return Err(SpectralError::CutoffOutOfRange {
                m,
                n_modes: self.basis.n_modes(),
            });
        }
        Ok(())
    }

    /// `Laplacian u`: coefficient `j` maps to `-lambda_j a_j`.
    pub fn laplacian(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.basis.eigenvalues())
            .map(|(a, l)| -l * a)
            .collect();
        Self {
            coeffs,
            basis: Arc::clone(&self.basis),
        }
    }

    /// Solution `g(f)` of the Poisson problem `Laplacian g = f`:
    /// coefficient `j` maps to `-a_j / lambda_j`. Well defined for every
    /// resolved field since the Dirichlet spectrum is strictly positive.
    pub fn inv_laplacian(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.basis.eigenvalues())
            .map(|(a, l)| -a / l)
            .collect();
        Self {
            coeffs,
            basis: Arc::clone(&self.basis),
        }
    }
}

/// Spectral coefficients of the composition `x -> gamma(u(x))`, formed by
/// collocation on the oversampled quadrature grid.
pub fn apply_nonlinearity(u: &SpectralField, potential: &Potential) -> SpectralField {
    if potential.gamma_is_zero() {
        return SpectralField::zero(u.basis());
    }
    let mut values = u.values();
    for v in values.iter_mut() {
        *v = potential.gamma(*v);
    }
    let coeffs = u
        .basis()
        .analyze(&values)
        .expect("values came from the basis grid");
    SpectralField::from_coeffs(u.basis(), coeffs)
}

/// Energy functional: `1/2 sum lambda_j a_j^2 + integral of V(u(x))`.
/// The gradient term is evaluated spectrally (exact by Parseval), the
/// potential term by grid quadrature.
pub fn energy(u: &SpectralField, potential: &Potential) -> f64 {
    let quad: f64 = u
        .coeffs()
        .iter()
        .zip(u.basis().eigenvalues())
        .map(|(a, l)| l * a * a)
        .sum();
    let mut pot = 0.0;
    if !potential.v_is_zero() {
        let values = u.values();
        pot = u.basis().weight() * values.iter().map(|&v| potential.v(v)).sum::<f64>();
    }
    0.5 * quad + pot
}

/// Strong-form residual `Laplacian u - V'(u)`; vanishes exactly at
/// equilibria of the reaction-diffusion flow.
pub fn residual(u: &SpectralField, potential: &Potential) -> SpectralField {
    let lap = u.laplacian();
    if potential.gamma_is_zero() {
        return lap;
    }
    lap.sub(&apply_nonlinearity(u, potential))
}
