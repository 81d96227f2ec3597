//! Interface to a finite-dimensional energy landscape `W` seen by the
//! stochastic and path-space layers, which only need values, gradients,
//! and Hessian-vector products of `W`.

use crate::linalg::norm2;

/// An energy surface on `R^m` driving the gradient flow `dx/dt = -grad W`.
pub trait Landscape: Sync {
    fn dim(&self) -> usize;

    /// `W(x)`.
    fn energy(&self, x: &[f64]) -> f64;

    /// `grad W(x)`.
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Directional derivative of the gradient, `Hess W(x) . v`, by
    /// central differences of the gradient unless overridden.
    fn gradient_dir_deriv(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let vn = norm2(v);
        if vn == 0.0 {
            return vec![0.0; x.len()];
        }
        let h = 1e-6 * (1.0 + norm2(x)) / vn;
        let plus: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi + h * vi).collect();
        let minus: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi - h * vi).collect();
        let gp = self.gradient(&plus);
        let gm = self.gradient(&minus);
        gp.iter()
            .zip(&gm)
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect()
    }
}

/// Diagonal quadratic surface `W(x) = 1/2 sum k_j x_j^2`. Closed-form
/// everything; used as the Ornstein-Uhlenbeck reference case.
#[derive(Debug, Clone)]
pub struct QuadraticLandscape {
    stiffness: Vec<f64>,
}

impl QuadraticLandscape {
    pub fn new(stiffness: Vec<f64>) -> Self {
        assert!(!stiffness.is_empty());
        Self { stiffness }
    }

    pub fn isotropic(dim: usize, k: f64) -> Self {
        Self::new(vec![k; dim])
    }
}

impl Landscape for QuadraticLandscape {
    fn dim(&self) -> usize {
        self.stiffness.len()
    }

    fn energy(&self, x: &[f64]) -> f64 {
        0.5 * x
            .iter()
            .zip(&self.stiffness)
            .map(|(xi, k)| k * xi * xi)
            .sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.stiffness).map(|(xi, k)| k * xi).collect()
    }

    fn gradient_dir_deriv(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.stiffness).map(|(vi, k)| k * vi).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_closed_forms() {
        let w = QuadraticLandscape::new(vec![1.0, 4.0]);
        assert_eq!(w.dim(), 2);
        assert!((w.energy(&[1.0, 0.5]) - (0.5 + 0.5)).abs() < 1e-15);
        assert_eq!(w.gradient(&[2.0, -1.0]), vec![2.0, -4.0]);
        assert_eq!(w.gradient_dir_deriv(&[0.0, 0.0], &[1.0, 1.0]), vec![1.0, 4.0]);
    }

    #[test]
    fn default_hessian_product_matches_exact_on_quadratic() {
        struct Opaque(QuadraticLandscape);
        impl Landscape for Opaque {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn energy(&self, x: &[f64]) -> f64 {
                self.0.energy(x)
            }
            fn gradient(&self, x: &[f64]) -> Vec<f64> {
                self.0.gradient(x)
            }
            // keep the default gradient_dir_deriv
        }
        let w = Opaque(QuadraticLandscape::new(vec![2.0, 7.0]));
        let jv = w.gradient_dir_deriv(&[0.3, -0.4], &[1.0, 2.0]);
        assert!((jv[0] - 2.0).abs() < 1e-6);
        assert!((jv[1] - 14.0).abs() < 1e-5);
    }
}
