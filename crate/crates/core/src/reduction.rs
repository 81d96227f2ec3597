//! Exact finite reduction of the variational problem: the high modes are
//! slaved to the low ones through a contraction fixed point, producing a
//! reduced energy `W` on `R^m` whose critical points correspond one to
//! one with the equilibria of the full system.
//!
//! For a cutoff `m`, the tail map `eta -> Q_m g(V'(mu + eta))` contracts
//! on the tail space with Lipschitz constant `q = C / lambda_{m+1}`,
//! where `C` certifies `V'`. Plain Picard iteration from `eta = 0` is
//! used deliberately: its update ratios expose the geometric rate, which
//! downstream diagnostics check against `q`.

use std::sync::Arc;

use thiserror::Error;

use crate::landscape::Landscape;
use crate::linalg::{norm2, solve_dense};
use crate::potential::Potential;
use crate::spectral::{apply_nonlinearity, energy, residual, SpectralBasis, SpectralError, SpectralField};

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("contraction margin violated: q = {q} >= 1 (C = {lipschitz}, lambda_{{m+1}} = {lambda_next})")]
    ContractionViolated {
        q: f64,
        lipschitz: f64,
        lambda_next: f64,
    },
    #[error("tail iteration exceeded {max_iter} steps (last update {final_update_norm:e}); the Lipschitz certificate is violated")]
    MaxIterations {
        max_iter: usize,
        final_update_norm: f64,
    },
    #[error("coordinate vector has {got} entries, cutoff is {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invariance defect requires m <= 3, got m = {0}")]
    DefectDimension(usize),
    #[error("iterated manifold order must be at least 1")]
    InvalidManifoldOrder,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Lipschitz constant of the tail map on `Q_m H`: `q = C / lambda_{m+1}`.
/// The smallest eigenvalue seen by the tail space is `lambda_{m+1}`,
/// which is the sharp constant for the contraction estimate.
pub fn contraction_margin(
    potential: &Potential,
    basis: &SpectralBasis,
    m: usize,
) -> Result<f64, ReductionError> {
    if m == 0 || m >= basis.n_modes() {
        return Err(SpectralError::CutoffOutOfRange {
            m,
            n_modes: basis.n_modes(),
        }
        .into());
    }
    Ok(potential.lipschitz_bound() / basis.eigenvalue(m + 1).expect("m+1 <= N"))
}

/// Stopping rule for the Picard tail iteration.
#[derive(Debug, Clone, Copy)]
pub struct TailSettings {
    /// Tolerance on the update norm between successive iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TailSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Converged tail iterate together with iteration diagnostics.
#[derive(Debug, Clone)]
pub struct TailSolution {
    /// The slaved tail; head coefficients are identically zero.
    pub eta: SpectralField,
    pub iterations: usize,
    pub final_update_norm: f64,
    /// Largest observed ratio of successive update norms, measured only
    /// while updates are well above rounding noise.
    pub max_update_ratio: f64,
}

/// Which explicit tail parameterization to use as the approximate
/// invariant manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    /// `Phi = 0`.
    Flat,
    /// `Phi_0(mu) = g(Q_m V'(mu))`, the explicit first correction.
    Phi0,
    /// `k` Picard steps of the tail map from zero; `PhiK(1)` equals `Phi0`.
    PhiK(u32),
    /// The full slaved tail `eta(mu)` solving the static tail equation.
    StaticTail,
}

/// The reduced energy `W(mu) = J(mu + eta(mu))` with its gradient,
/// equilibria search, and manifold diagnostics. Immutable and shareable;
/// every evaluation is pure.
#[derive(Debug, Clone)]
pub struct ReducedPotential {
    basis: Arc<SpectralBasis>,
    potential: Arc<Potential>,
    m: usize,
    settings: TailSettings,
    q: f64,
    q_head_index: f64,
}

impl ReducedPotential {
    /// Refuses construction unless the contraction margin `q < 1`.
    pub fn new(
        basis: Arc<SpectralBasis>,
        potential: Arc<Potential>,
        m: usize,
        settings: TailSettings,
    ) -> Result<Self, ReductionError> {
        let q = contraction_margin(&potential, &basis, m)?;
        if q.is_nan() || q >= 1.0 {
            return Err(ReductionError::ContractionViolated {
                q,
                lipschitz: potential.lipschitz_bound(),
                lambda_next: basis.eigenvalue(m + 1).expect("m+1 <= N"),
            });
        }
        let q_head_index = potential.lipschitz_bound() / basis.eigenvalue(m).expect("m <= N");
        Ok(Self {
            basis,
            potential,
            m,
            settings,
            q,
            q_head_index,
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn potential(&self) -> &Arc<Potential> {
        &self.potential
    }

    pub fn cutoff(&self) -> usize {
        self.m
    }

    pub fn settings(&self) -> TailSettings {
        self.settings
    }

    /// Contraction margin `C / lambda_{m+1}`.
    pub fn margin(&self) -> f64 {
        self.q
    }

    /// The companion ratio `C / lambda_m`, reported alongside the sharp
    /// margin for comparison.
    pub fn margin_head_index(&self) -> f64 {
        self.q_head_index
    }

    fn check_dim(&self, mu: &[f64]) -> Result<(), ReductionError> {
        if mu.len() != self.m {
            return Err(ReductionError::DimensionMismatch {
                got: mu.len(),
                expected: self.m,
            });
        }
        Ok(())
    }

    /// Full field with head coefficients `mu` and zero tail.
    pub fn embed(&self, mu: &[f64]) -> SpectralField {
        let mut coeffs = vec![0.0; self.basis.n_modes()];
        coeffs[..mu.len()].copy_from_slice(mu);
        SpectralField::from_coeffs(&self.basis, coeffs)
    }

    /// One Picard step of the tail map: `eta -> Q_m g(V'(head + eta))`.
    fn tail_step(&self, head: &SpectralField, eta: &SpectralField) -> SpectralField {
        let u = head.add(eta);
        apply_nonlinearity(&u, &self.potential)
            .inv_laplacian()
            .project_tail(self.m)
            .expect("cutoff validated at construction")
    }

    /// Picard iteration for the slaved tail, started from zero.
    pub fn solve_tail(&self, mu: &[f64]) -> Result<TailSolution, ReductionError> {
        self.check_dim(mu)?;
        let head = self.embed(mu);
        let mut eta = SpectralField::zero(&self.basis);
        let mut prev_update = f64::NAN;
        let mut max_ratio: f64 = 0.0;
        // Updates below this are rounding noise; ratios are not meaningful.
        let ratio_floor = 1e-11;
        for iter in 1..=self.settings.max_iter {
            let next = self.tail_step(&head, &eta);
            let update = next.sub(&eta).norm();
            if prev_update.is_finite() && prev_update > ratio_floor && update > ratio_floor {
                max_ratio = max_ratio.max(update / prev_update);
            }
            eta = next;
            if update <= self.settings.tol {
                return Ok(TailSolution {
                    eta,
                    iterations: iter,
                    final_update_norm: update,
                    max_update_ratio: max_ratio,
                });
            }
            prev_update = update;
        }
        Err(ReductionError::MaxIterations {
            max_iter: self.settings.max_iter,
            final_update_norm: prev_update,
        })
    }

    /// Lifted field `mu + eta(mu)`.
    pub fn lift(&self, mu: &[f64]) -> Result<SpectralField, ReductionError> {
        let tail = self.solve_tail(mu)?;
        Ok(self.embed(mu).add(&tail.eta))
    }

    /// `W(mu) = J(mu + eta(mu))`.
    pub fn reduced_energy(&self, mu: &[f64]) -> Result<f64, ReductionError> {
        Ok(energy(&self.lift(mu)?, &self.potential))
    }

    /// `grad W(mu)`: component `j` is `lambda_j mu_j + <V'(u), u_j>` at
    /// the lifted field, i.e. minus the head of the strong-form residual.
    pub fn reduced_gradient(&self, mu: &[f64]) -> Result<Vec<f64>, ReductionError> {
        let u = self.lift(mu)?;
        let vp = apply_nonlinearity(&u, &self.potential);
        Ok((0..self.m)
            .map(|j| self.basis.eigenvalues()[j] * mu[j] + vp.coeffs()[j])
            .collect())
    }

    /// Explicit tail parameterizations used as approximate invariant
    /// manifolds. Returns the tail field `Phi(mu)`.
    pub fn manifold_map(&self, kind: ManifoldKind, mu: &[f64]) -> Result<SpectralField, ReductionError> {
        self.check_dim(mu)?;
        match kind {
            ManifoldKind::Flat => Ok(SpectralField::zero(&self.basis)),
            ManifoldKind::Phi0 => {
                let head = self.embed(mu);
                Ok(self.tail_step(&head, &SpectralField::zero(&self.basis)))
            }
            ManifoldKind::PhiK(k) => {
                if k == 0 {
                    return Err(ReductionError::InvalidManifoldOrder);
                }
                let head = self.embed(mu);
                let mut eta = SpectralField::zero(&self.basis);
                for _ in 0..k {
                    eta = self.tail_step(&head, &eta);
                }
                Ok(eta)
            }
            ManifoldKind::StaticTail => Ok(self.solve_tail(mu)?.eta),
        }
    }

    /// Residual of the exact-invariance equation for the manifold `Phi`:
    /// `|| Phi'(mu)[Lap mu - P_m V'(mu + Phi)] - Lap Phi + Q_m V'(mu + Phi) ||`.
    /// The Jacobian `Phi'` is formed by central differences, so the cost
    /// is kept trivial by restricting to `m <= 3`.
    pub fn invariance_defect(&self, kind: ManifoldKind, mu: &[f64]) -> Result<f64, ReductionError> {
        self.check_dim(mu)?;
        if self.m > 3 {
            return Err(ReductionError::DefectDimension(self.m));
        }
        let phi = self.manifold_map(kind, mu)?;
        let u = self.embed(mu).add(&phi);
        let vp = apply_nonlinearity(&u, &self.potential);

        // Head velocity: mu_dot_j = -lambda_j mu_j - (V'(u))_j, j <= m.
        let mu_dot: Vec<f64> = (0..self.m)
            .map(|j| -self.basis.eigenvalues()[j] * mu[j] - vp.coeffs()[j])
            .collect();

        // Phi'(mu) . mu_dot by central differences in each head direction.
        let fd_step = 1e-5;
        let mut transported = SpectralField::zero(&self.basis);
        for j in 0..self.m {
            if mu_dot[j] == 0.0 {
                continue;
            }
            let mut plus = mu.to_vec();
            plus[j] += fd_step;
            let mut minus = mu.to_vec();
            minus[j] -= fd_step;
            let col = self
                .manifold_map(kind, &plus)?
                .sub(&self.manifold_map(kind, &minus)?)
                .scale(1.0 / (2.0 * fd_step));
            transported = transported.add(&col.scale(mu_dot[j]));
        }

        // Tail balance: Lap Phi - Q_m V'(u).
        let tail_balance = phi
            .laplacian()
            .sub(&vp.project_tail(self.m).expect("cutoff validated"));
        Ok(transported.sub(&tail_balance).norm())
    }

    /// Damped Newton search for critical points of `W` from the given
    /// seeds. Failures are reported per seed, not fatal; duplicates are
    /// merged. Each returned equilibrium carries the lifted field and its
    /// full strong-form residual norm.
    pub fn find_equilibria(&self, seeds: &[Vec<f64>], newton: &NewtonSettings) -> FindReport {
        let mut report = FindReport::default();
        'seeds: for (seed_index, seed) in seeds.iter().enumerate() {
            match self.newton_from_seed(seed, newton) {
                Ok(mu) => {
                    for existing in &report.equilibria {
                        let d: f64 = existing
                            .mu
                            .iter()
                            .zip(&mu)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt();
                        if d <= 1e-7 * (1.0 + norm2(&mu)) {
                            continue 'seeds;
                        }
                    }
                    let grad_norm = match self.reduced_gradient(&mu) {
                        Ok(g) => norm2(&g),
                        Err(e) => {
                            report.failures.push(SeedFailure {
                                seed_index,
                                message: e.to_string(),
                            });
                            continue;
                        }
                    };
                    let field = match self.lift(&mu) {
                        Ok(f) => f,
                        Err(e) => {
                            report.failures.push(SeedFailure {
                                seed_index,
                                message: e.to_string(),
                            });
                            continue;
                        }
                    };
                    let residual_norm = residual(&field, &self.potential).norm();
                    let energy = energy(&field, &self.potential);
                    report.equilibria.push(Equilibrium {
                        mu,
                        field,
                        grad_norm,
                        residual_norm,
                        energy,
                    });
                }
                Err(msg) => report.failures.push(SeedFailure {
                    seed_index,
                    message: msg,
                }),
            }
        }
        report
    }

    fn newton_from_seed(&self, seed: &[f64], newton: &NewtonSettings) -> Result<Vec<f64>, String> {
        if seed.len() != self.m {
            return Err(format!(
                "seed has {} entries, cutoff is {}",
                seed.len(),
                self.m
            ));
        }
        let grad = |mu: &[f64]| self.reduced_gradient(mu).map_err(|e| e.to_string());
        let mut mu = seed.to_vec();
        let mut g = grad(&mu)?;
        for _ in 0..newton.max_iter {
            let gn = norm2(&g);
            if gn <= newton.grad_tol {
                return Ok(mu);
            }
            // Jacobian of grad W by central differences.
            let h = newton.fd_step * (1.0 + norm2(&mu));
            let mut jac = vec![0.0; self.m * self.m];
            for j in 0..self.m {
                let mut plus = mu.clone();
                plus[j] += h;
                let mut minus = mu.clone();
                minus[j] -= h;
                let gp = grad(&plus)?;
                let gm = grad(&minus)?;
                for i in 0..self.m {
                    jac[i * self.m + j] = (gp[i] - gm[i]) / (2.0 * h);
                }
            }
            let mut rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let step = solve_dense(&mut jac, &mut rhs, self.m)
                .ok_or_else(|| "singular Jacobian in Newton step".to_string())?;
            // Backtrack on the gradient norm.
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = mu.iter().zip(&step).map(|(x, s)| x + lambda * s).collect();
                let gt = grad(&trial)?;
                if norm2(&gt) < gn * (1.0 - 1e-4 * lambda) || norm2(&gt) <= newton.grad_tol {
                    mu = trial;
                    g = gt;
                    break;
                }
                lambda *= 0.5;
                if lambda < 1e-8 {
                    return Err(format!("line search stalled at |grad| = {gn:e}"));
                }
            }
        }
        let gn = norm2(&g);
        if gn <= newton.grad_tol {
            Ok(mu)
        } else {
            Err(format!(
                "no convergence in {} iterations, |grad| = {gn:e}",
                newton.max_iter
            ))
        }
    }
}

/// Every evaluation funnels through the converged tail solve, so the
/// trait methods are total once construction has certified `q < 1`; a
/// tail iteration overrun would mean the certificate is wrong and is a
/// panic, not a recoverable state.
impl Landscape for ReducedPotential {
    fn dim(&self) -> usize {
        self.m
    }

    fn energy(&self, x: &[f64]) -> f64 {
        self.reduced_energy(x)
            .expect("tail solve converges under a valid contraction certificate")
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.reduced_gradient(x)
            .expect("tail solve converges under a valid contraction certificate")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 80,
            fd_step: 1e-6,
        }
    }
}

/// A critical point of `W` with its lifted full field.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub mu: Vec<f64>,
    pub field: SpectralField,
    pub grad_norm: f64,
    pub residual_norm: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct SeedFailure {
    pub seed_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct FindReport {
    pub equilibria: Vec<Equilibrium>,
    pub failures: Vec<SeedFailure>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterStream;

    const PI: f64 = std::f64::consts::PI;

    fn basis(l: f64, n: usize, nq: usize) -> Arc<SpectralBasis> {
        SpectralBasis::new(l, n, nq).unwrap()
    }

    #[test]
    fn margin_examples() {
        let b = basis(PI, 8, 16);
        assert_eq!(contraction_margin(&Potential::zero(), &b, 3).unwrap(), 0.0);
        let c11 = Potential::linear(11.0);
        let q3 = contraction_margin(&c11, &b, 3).unwrap();
        assert!((q3 - 0.6875).abs() < 1e-15, "q3 = {q3}");
        let q2 = contraction_margin(&c11, &b, 2).unwrap();
        assert!((q2 - 11.0 / 9.0).abs() < 1e-15);
        assert!(q2 > 1.0);
        // and construction refuses the violated margin
        let err = ReducedPotential::new(b, Arc::new(c11), 2, TailSettings::default());
        assert!(matches!(err, Err(ReductionError::ContractionViolated { .. })));
    }

    #[test]
    fn margin_rejects_bad_cutoff() {
        let b = basis(PI, 8, 16);
        assert!(contraction_margin(&Potential::zero(), &b, 0).is_err());
        assert!(contraction_margin(&Potential::zero(), &b, 8).is_err());
    }

    #[test]
    fn tail_is_zero_for_zero_and_linear_potentials() {
        let b = basis(PI, 8, 16);
        let rp = ReducedPotential::new(
            Arc::clone(&b),
            Arc::new(Potential::zero()),
            3,
            TailSettings::default(),
        )
        .unwrap();
        let sol = rp.solve_tail(&[0.4, -0.2, 0.1]).unwrap();
        assert_eq!(sol.eta.norm(), 0.0);
        assert_eq!(sol.iterations, 1);

        // Modes decouple for linear gamma: the tail equation forces 0.
        let rp = ReducedPotential::new(
            Arc::clone(&b),
            Arc::new(Potential::linear(5.0)),
            3,
            TailSettings::default(),
        )
        .unwrap();
        let sol = rp.solve_tail(&[1.0, 2.0, 3.0]).unwrap();
        assert!(sol.eta.norm() <= 1e-13, "tail norm {}", sol.eta.norm());
    }

    #[test]
    fn tail_head_coefficients_are_zero() {
        let b = basis(PI, 16, 40);
        let pot = Potential::clamped_double_well(0.5, 1.0, 2.0).unwrap();
        let rp =
            ReducedPotential::new(Arc::clone(&b), Arc::new(pot), 3, TailSettings::default())
                .unwrap();
        let sol = rp.solve_tail(&[0.5, 0.0, 0.0]).unwrap();
        for j in 0..3 {
            assert_eq!(sol.eta.coeffs()[j], 0.0);
        }
        assert!(sol.final_update_norm <= 1e-12);
        assert!(sol.max_update_ratio <= rp.margin() + 0.05);
        // fixed-point residual well under 10x the tolerance
        let head = rp.embed(&[0.5, 0.0, 0.0]);
        let res = rp.tail_step(&head, &sol.eta).sub(&sol.eta).norm();
        assert!(res <= 1e-11, "residual {res}");
    }

    #[test]
    fn reduced_energy_quadratic_when_potential_vanishes() {
        let b = basis(PI, 8, 16);
        let rp = ReducedPotential::new(
            Arc::clone(&b),
            Arc::new(Potential::zero()),
            3,
            TailSettings::default(),
        )
        .unwrap();
        assert_eq!(rp.reduced_energy(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let mu = [0.7, -0.3, 0.2];
        let w = rp.reduced_energy(&mu).unwrap();
        let expect = 0.5 * (1.0 * 0.49 + 4.0 * 0.09 + 9.0 * 0.04);
        assert!((w - expect).abs() < 1e-14);
        let g = rp.reduced_gradient(&mu).unwrap();
        assert!((g[0] - 0.7).abs() < 1e-14);
        assert!((g[1] + 4.0 * 0.3).abs() < 1e-14);
        assert!((g[2] - 9.0 * 0.2).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences_of_energy() {
        let b = basis(PI, 16, 40);
        let pot = Potential::clamped_double_well(0.5, 1.0, 2.0).unwrap();
        let rp =
            ReducedPotential::new(Arc::clone(&b), Arc::new(pot), 3, TailSettings::default())
                .unwrap();
        let mut stream = CounterStream::new(17, 0);
        for _ in 0..5 {
            let mu: Vec<f64> = (0..3).map(|_| stream.uniform_in(-1.0, 1.0)).collect();
            let g = rp.reduced_gradient(&mu).unwrap();
            let h = 1e-5;
            for j in 0..3 {
                let mut plus = mu.clone();
                plus[j] += h;
                let mut minus = mu.clone();
                minus[j] -= h;
                let fd = (rp.reduced_energy(&plus).unwrap() - rp.reduced_energy(&minus).unwrap())
                    / (2.0 * h);
                let denom = g[j].abs().max(1e-3);
                assert!(
                    ((g[j] - fd) / denom).abs() <= 1e-6,
                    "mu {mu:?} j={j}: {} vs {fd}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn equilibria_of_convex_cases() {
        let b = basis(PI, 8, 16);
        let newton = NewtonSettings::default();
        for pot in [Potential::zero(), Potential::linear(0.5), Potential::linear(-0.5)] {
            let rp = ReducedPotential::new(
                Arc::clone(&b),
                Arc::new(pot),
                3,
                TailSettings::default(),
            )
            .unwrap();
            let seeds = vec![vec![0.0; 3], vec![1.0, 0.0, 0.0], vec![-0.5, 0.3, 0.1]];
            let report = rp.find_equilibria(&seeds, &newton);
            assert!(report.failures.is_empty(), "{:?}", report.failures);
            assert_eq!(report.equilibria.len(), 1);
            assert!(norm2(&report.equilibria[0].mu) < 1e-9);
        }
    }

    #[test]
    fn manifold_hierarchy_and_contraction_rate() {
        let b = basis(PI, 16, 40);
        let pot = Potential::clamped_double_well(0.5, 1.0, 2.0).unwrap();
        let rp =
            ReducedPotential::new(Arc::clone(&b), Arc::new(pot), 3, TailSettings::default())
                .unwrap();
        let mu = [0.8, -0.2, 0.3];

        let flat = rp.manifold_map(ManifoldKind::Flat, &mu).unwrap();
        assert_eq!(flat.norm(), 0.0);

        let phi0 = rp.manifold_map(ManifoldKind::Phi0, &mu).unwrap();
        let phi1 = rp.manifold_map(ManifoldKind::PhiK(1), &mu).unwrap();
        assert_eq!(phi0.coeffs(), phi1.coeffs());
        assert!(rp.manifold_map(ManifoldKind::PhiK(0), &mu).is_err());

        let eta = rp.manifold_map(ManifoldKind::StaticTail, &mu).unwrap();
        let q = rp.margin();
        for k in 1..=6 {
            let phik = rp.manifold_map(ManifoldKind::PhiK(k), &mu).unwrap();
            let dist = phik.sub(&eta).norm();
            let bound = q.powi(k as i32) * eta.norm() / (1.0 - q);
            assert!(dist <= bound + 1e-13, "k={k}: {dist} > {bound}");
        }
    }

    #[test]
    fn phi0_vanishes_without_nonlinearity() {
        let b = basis(PI, 8, 16);
        let rp = ReducedPotential::new(
            Arc::clone(&b),
            Arc::new(Potential::zero()),
            2,
            TailSettings::default(),
        )
        .unwrap();
        assert_eq!(rp.manifold_map(ManifoldKind::Phi0, &[1.0, 2.0]).unwrap().norm(), 0.0);
    }

    #[test]
    fn invariance_defect_degenerate_cases() {
        let b = basis(PI, 12, 28);
        // Linear flow leaves every zero-tail manifold invariant.
        let rp = ReducedPotential::new(
            Arc::clone(&b),
            Arc::new(Potential::zero()),
            2,
            TailSettings::default(),
        )
        .unwrap();
        for kind in [ManifoldKind::Flat, ManifoldKind::Phi0, ManifoldKind::StaticTail] {
            let d = rp.invariance_defect(kind, &[0.9, -0.4]).unwrap();
            assert!(d < 1e-9, "{kind:?}: {d}");
        }
        // m > 3 is refused.
        let rp4 = ReducedPotential::new(
            Arc::clone(&b),
            Arc::new(Potential::zero()),
            4,
            TailSettings::default(),
        )
        .unwrap();
        assert!(matches!(
            rp4.invariance_defect(ManifoldKind::Flat, &[0.0; 4]),
            Err(ReductionError::DefectDimension(4))
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let b = basis(PI, 8, 16);
        let rp = ReducedPotential::new(
            Arc::clone(&b),
            Arc::new(Potential::zero()),
            3,
            TailSettings::default(),
        )
        .unwrap();
        assert!(matches!(
            rp.solve_tail(&[0.0, 0.0]),
            Err(ReductionError::DimensionMismatch { got: 2, expected: 3 })
        ));
    }
}
