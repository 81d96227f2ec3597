//! Time integration of the full reaction-diffusion flow, the truncated
//! (flat Galerkin) flow, and the reduced gradient flow, plus the
//! manifold-distance scaling experiment.
//!
//! The stiff part is diagonal in the sine basis, so the full and flat
//! integrators use a two-stage exponential scheme: the linear factor
//! `exp(-lambda_j dt)` is exact and the reaction term enters explicitly
//! with second-order weights. Equilibria are fixed points of the scheme
//! itself, and pure decay is integrated to rounding error. The reduced
//! flow `d mu/dt = -grad W` uses classical fourth-order Runge-Kutta.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::io::write_row;
use crate::linalg::fit_line;
use crate::potential::Potential;
use crate::reduction::{ManifoldKind, ReducedPotential, ReductionError, TailSettings};
use crate::spectral::{apply_nonlinearity, energy, SpectralBasis, SpectralField};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("state norm {norm:e} exceeded the blow-up bound {bound:e} at t = {t}; the step size is too large")]
    BlowUp { t: f64, norm: f64, bound: f64 },
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("initial state has {got} coefficients, expected {expected}")]
    StateSize { got: usize, expected: usize },
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
}

/// A time-discrete orbit; `states[k]` is the coefficient vector at
/// `times[k]`. The state dimension is `N` for full orbits and `m` for
/// reduced or flat ones.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    pub method: &'static str,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory never empty")
    }

    /// CSV with header `t,a_1,...,a_N`.
    pub fn to_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let dim = self.states.first().map_or(0, Vec::len);
        write!(w, "t")?;
        for j in 1..=dim {
            write!(w, ",a_{j}")?;
        }
        writeln!(w)?;
        for (t, state) in self.times.iter().zip(&self.states) {
            let mut row = Vec::with_capacity(dim + 1);
            row.push(*t);
            row.extend_from_slice(state);
            write_row(w, &[], &row)?;
        }
        Ok(())
    }
}

fn check_step(dt: f64) -> Result<(), DynamicsError> {
    if dt.is_nan() || dt <= 0.0 || !dt.is_finite() {
        return Err(DynamicsError::InvalidStep(dt));
    }
    Ok(())
}

fn n_steps(t_final: f64, dt: f64) -> usize {
    ((t_final / dt).round() as usize).max(1)
}

/// phi1(z) = (e^z - 1)/z with a series branch near zero.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        (z.exp() - 1.0) / z
    }
}

/// phi2(z) = (e^z - 1 - z)/z^2 with a series branch near zero.
fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        0.5 + z / 6.0 + z * z / 24.0
    } else {
        (z.exp() - 1.0 - z) / (z * z)
    }
}

/// Two-stage exponential stepper over the first `active` modes with the
/// remaining coefficients frozen at zero. `active = N` is the full flow;
/// `active = m` is the flat Galerkin truncation. Both cases run the same
/// arithmetic, so they agree bit for bit when `m = N`.
fn exponential_run(
    basis: &Arc<SpectralBasis>,
    potential: &Potential,
    active: usize,
    a0: &[f64],
    t_final: f64,
    dt: f64,
    blowup_bound: f64,
) -> Result<Trajectory, DynamicsError> {
    check_step(dt)?;
    if a0.len() != active {
        return Err(DynamicsError::StateSize {
            got: a0.len(),
            expected: active,
        });
    }
    assert!(active >= 1 && active <= basis.n_modes(), "active mode count");

    let lams = &basis.eigenvalues()[..active];
    let decay: Vec<f64> = lams.iter().map(|l| (-l * dt).exp()).collect();
    let w1: Vec<f64> = lams.iter().map(|l| dt * phi1(-l * dt)).collect();
    let w2: Vec<f64> = lams.iter().map(|l| dt * phi2(-l * dt)).collect();

    // Reaction term restricted to the active modes: N_j(a) = -(V'(u))_j.
    let reaction = |a: &[f64]| -> Vec<f64> {
        if potential.gamma_is_zero() {
            return vec![0.0; active];
        }
        let mut coeffs = vec![0.0; basis.n_modes()];
        coeffs[..active].copy_from_slice(a);
        let u = SpectralField::from_coeffs(basis, coeffs);
        let vp = apply_nonlinearity(&u, potential);
        vp.coeffs()[..active].iter().map(|c| -c).collect()
    };

    let steps = n_steps(t_final, dt);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut a = a0.to_vec();
    times.push(0.0);
    states.push(a.clone());
    for k in 1..=steps {
        let n0 = reaction(&a);
        let mut stage = vec![0.0; active];
        for j in 0..active {
            stage[j] = decay[j] * a[j] + w1[j] * n0[j];
        }
        let n1 = reaction(&stage);
        for j in 0..active {
            a[j] = stage[j] + w2[j] * (n1[j] - n0[j]);
        }
        let t = k as f64 * dt;
        let norm = crate::linalg::norm2(&a);
        if !norm.is_finite() || norm > blowup_bound {
            return Err(DynamicsError::BlowUp {
                t,
                norm,
                bound: blowup_bound,
            });
        }
        times.push(t);
        states.push(a.clone());
    }
    Ok(Trajectory {
        times,
        states,
        dt,
        method: "exp2",
    })
}

/// Integrate the full reaction-diffusion flow `u_t = Lap u - V'(u)`.
pub fn integrate_full(
    u0: &SpectralField,
    potential: &Potential,
    t_final: f64,
    dt: f64,
    blowup_bound: f64,
) -> Result<Trajectory, DynamicsError> {
    exponential_run(
        u0.basis(),
        potential,
        u0.basis().n_modes(),
        u0.coeffs(),
        t_final,
        dt,
        blowup_bound,
    )
}

/// Integrate the flat Galerkin truncation `mu_t = Lap mu - P_m V'(mu)`
/// with the tail frozen at zero. With `m = N` this is the full flow.
pub fn integrate_flat(
    mu0: &[f64],
    basis: &Arc<SpectralBasis>,
    potential: &Potential,
    m: usize,
    t_final: f64,
    dt: f64,
    blowup_bound: f64,
) -> Result<Trajectory, DynamicsError> {
    exponential_run(basis, potential, m, mu0, t_final, dt, blowup_bound)
}

/// Integrate the reduced gradient flow `d mu/dt = -grad W(mu)` with
/// classical fourth-order Runge-Kutta.
pub fn integrate_reduced(
    mu0: &[f64],
    reduced: &ReducedPotential,
    t_final: f64,
    dt: f64,
    blowup_bound: f64,
) -> Result<Trajectory, DynamicsError> {
    check_step(dt)?;
    if mu0.len() != reduced.cutoff() {
        return Err(DynamicsError::StateSize {
            got: mu0.len(),
            expected: reduced.cutoff(),
        });
    }
    let f = |mu: &[f64]| -> Result<Vec<f64>, DynamicsError> {
        Ok(reduced.reduced_gradient(mu)?.iter().map(|g| -g).collect())
    };
    let steps = n_steps(t_final, dt);
    let dim = mu0.len();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut mu = mu0.to_vec();
    times.push(0.0);
    states.push(mu.clone());
    for step in 1..=steps {
        let k1 = f(&mu)?;
        let mut tmp: Vec<f64> = (0..dim).map(|j| mu[j] + 0.5 * dt * k1[j]).collect();
        let k2 = f(&tmp)?;
        for j in 0..dim {
            tmp[j] = mu[j] + 0.5 * dt * k2[j];
        }
        let k3 = f(&tmp)?;
        for j in 0..dim {
            tmp[j] = mu[j] + dt * k3[j];
        }
        let k4 = f(&tmp)?;
        for j in 0..dim {
            mu[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t = step as f64 * dt;
        let norm = crate::linalg::norm2(&mu);
        if !norm.is_finite() || norm > blowup_bound {
            return Err(DynamicsError::BlowUp {
                t,
                norm,
                bound: blowup_bound,
            });
        }
        times.push(t);
        states.push(mu.clone());
    }
    Ok(Trajectory {
        times,
        states,
        dt,
        method: "rk4",
    })
}

/// L2 distance from a full state to the graph of the chosen manifold:
/// `|| Q_m u - Phi(P_m u) ||`.
pub fn distance_to_manifold(
    u: &SpectralField,
    kind: ManifoldKind,
    reduced: &ReducedPotential,
) -> Result<f64, ReductionError> {
    let m = reduced.cutoff();
    let mu: Vec<f64> = u.coeffs()[..m].to_vec();
    let phi = reduced.manifold_map(kind, &mu)?;
    Ok(u.project_tail(m)?.sub(&phi).norm())
}

/// Configuration of the manifold-distance scaling experiment.
#[derive(Debug, Clone)]
pub struct AimScalingConfig {
    pub basis: Arc<SpectralBasis>,
    pub potential: Arc<Potential>,
    /// Initial coefficients of the full orbit (length `N`).
    pub u0: Vec<f64>,
    pub t_final: f64,
    pub dt: f64,
    pub cutoffs: Vec<usize>,
    pub tail_settings: TailSettings,
    pub blowup_bound: f64,
    /// Energy-decrease rate below which the burn-in is considered over.
    pub rate_threshold: f64,
}

/// One cutoff's measurements: sup over `t in [t_star, T]` of the
/// distances to each manifold and of the tail magnitude and its time
/// derivative.
#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub m: usize,
    pub delta: f64,
    pub dist_flat: f64,
    pub dist_phi0: f64,
    pub dist_static: f64,
    pub eta_sup: f64,
    pub eta_prime_sup: f64,
}

/// Fitted log-log slopes of the scaling experiment.
#[derive(Debug, Clone, Copy)]
pub struct ScalingSlopes {
    pub flat: f64,
    pub phi0: f64,
    pub static_tail: f64,
    pub eta: f64,
    pub eta_prime: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub slopes: ScalingSlopes,
    pub t_star: f64,
    /// Tightest constant with `dist_static <= kappa * delta^2` on the data.
    pub kappa_static: f64,
}

impl ScalingReport {
    /// CSV with header
    /// `m,delta,dist_flat,dist_phi0,dist_static,eta_norm,etaprime_norm`.
    pub fn to_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "m,delta,dist_flat,dist_phi0,dist_static,eta_norm,etaprime_norm")?;
        for r in &self.rows {
            write_row(
                w,
                &[&r.m.to_string()],
                &[
                    r.delta,
                    r.dist_flat,
                    r.dist_phi0,
                    r.dist_static,
                    r.eta_sup,
                    r.eta_prime_sup,
                ],
            )?;
        }
        Ok(())
    }
}

/// Integrate the full orbit once, then for each cutoff measure how far
/// the orbit stays from the flat, first-correction, and slaved-tail
/// manifolds after burn-in, and fit log-log slopes against
/// `delta = lambda_1 / lambda_{m+1}`.
pub fn aim_scaling_experiment(cfg: &AimScalingConfig) -> Result<ScalingReport, DynamicsError> {
    let u0 = SpectralField::from_coeffs(&cfg.basis, cfg.u0.clone());
    let orbit = integrate_full(&u0, &cfg.potential, cfg.t_final, cfg.dt, cfg.blowup_bound)?;

    // Burn-in: first time the energy decrease rate drops below the
    // threshold, capped at half the horizon.
    let energies: Vec<f64> = orbit
        .states
        .iter()
        .map(|a| {
            let f = SpectralField::from_coeffs(&cfg.basis, a.clone());
            energy(&f, &cfg.potential)
        })
        .collect();
    let mut t_star = cfg.t_final / 2.0;
    for k in 1..energies.len() {
        let rate = (energies[k - 1] - energies[k]) / cfg.dt;
        if rate < cfg.rate_threshold {
            t_star = t_star.min(orbit.times[k]);
            break;
        }
    }
    let k_star = orbit
        .times
        .iter()
        .position(|&t| t >= t_star - 1e-12)
        .unwrap_or(0);

    let fields: Vec<SpectralField> = orbit
        .states
        .iter()
        .map(|a| SpectralField::from_coeffs(&cfg.basis, a.clone()))
        .collect();

    let rows: Result<Vec<ScalingRow>, DynamicsError> = cfg
        .cutoffs
        .par_iter()
        .map(|&m| {
            let rp = ReducedPotential::new(
                Arc::clone(&cfg.basis),
                Arc::clone(&cfg.potential),
                m,
                cfg.tail_settings,
            )?;
            let delta = cfg.basis.eigenvalues()[0] / cfg.basis.eigenvalue(m + 1).expect("m+1 <= N");
            let mut dist_flat = 0.0_f64;
            let mut dist_phi0 = 0.0_f64;
            let mut dist_static = 0.0_f64;
            for f in &fields[k_star..] {
                dist_flat = dist_flat.max(distance_to_manifold(f, ManifoldKind::Flat, &rp)?);
                dist_phi0 = dist_phi0.max(distance_to_manifold(f, ManifoldKind::Phi0, &rp)?);
                dist_static = dist_static.max(distance_to_manifold(f, ManifoldKind::StaticTail, &rp)?);
            }
            // Tail magnitude and its discrete time derivative.
            let tail_norms: Vec<f64> = fields
                .iter()
                .map(|f| f.project_tail(m).map(|t| t.norm()))
                .collect::<Result<_, _>>()?;
            let eta_sup = tail_norms[k_star..]
                .iter()
                .fold(0.0_f64, |acc, &v| acc.max(v));
            let mut eta_prime_sup = 0.0_f64;
            for k in k_star.max(1)..fields.len() - 1 {
                let dtail = fields[k + 1]
                    .project_tail(m)?
                    .sub(&fields[k - 1].project_tail(m)?)
                    .norm()
                    / (2.0 * cfg.dt);
                eta_prime_sup = eta_prime_sup.max(dtail);
            }
            Ok(ScalingRow {
                m,
                delta,
                dist_flat,
                dist_phi0,
                dist_static,
                eta_sup,
                eta_prime_sup,
            })
        })
        .collect();
    let rows = rows?;

    let ln_delta: Vec<f64> = rows.iter().map(|r| r.delta.max(1e-300).ln()).collect();
    let slope_of = |pick: fn(&ScalingRow) -> f64| -> f64 {
        let ys: Vec<f64> = rows.iter().map(|r| pick(r).max(1e-300).ln()).collect();
        fit_line(&ln_delta, &ys).0
    };
    let slopes = ScalingSlopes {
        flat: slope_of(|r| r.dist_flat),
        phi0: slope_of(|r| r.dist_phi0),
        static_tail: slope_of(|r| r.dist_static),
        eta: slope_of(|r| r.eta_sup),
        eta_prime: slope_of(|r| r.eta_prime_sup),
    };
    let kappa_static = rows
        .iter()
        .map(|r| r.dist_static / (r.delta * r.delta))
        .fold(0.0_f64, f64::max);
    Ok(ScalingReport {
        rows,
        slopes,
        t_star,
        kappa_static,
    })
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
    fn pure_decay_is_exact() {
        let b = basis(PI, 8, 16);
        let u0 = SpectralField::mode(&b, 1, 1.0).unwrap();
        let traj = integrate_full(&u0, &Potential::zero(), 2.0, 0.01, 1e6).unwrap();
        let a1 = traj.final_state()[0];
        assert!((a1 - (-2.0f64).exp()).abs() <= 1e-12, "a1 = {a1}");
        for c in &traj.final_state()[1..] {
            assert_eq!(*c, 0.0);
        }
    }

    #[test]
    fn flat_with_all_modes_matches_full_bitwise() {
        let b = basis(PI, 10, 24);
        let pot = Potential::clamped_double_well(0.5, 1.0, 2.0).unwrap();
        let mut stream = CounterStream::new(2, 0);
        let coeffs: Vec<f64> = (0..10).map(|_| stream.uniform_in(-0.5, 0.5)).collect();
        let u0 = SpectralField::from_coeffs(&b, coeffs.clone());
        let full = integrate_full(&u0, &pot, 0.5, 0.005, 1e6).unwrap();
        let flat = integrate_flat(&coeffs, &b, &pot, 10, 0.5, 0.005, 1e6).unwrap();
        for (a, c) in full.final_state().iter().zip(flat.final_state()) {
            assert_eq!(a.to_bits(), c.to_bits());
        }
    }

    #[test]
    fn flat_and_reduced_agree_without_nonlinearity() {
        let b = basis(PI, 8, 16);
        let rp = ReducedPotential::new(
            Arc::clone(&b),
            Arc::new(Potential::zero()),
            3,
            TailSettings::default(),
        )
        .unwrap();
        let mu0 = [0.5, -0.3, 0.2];
        let flat = integrate_flat(&mu0, &b, &Potential::zero(), 3, 1.0, 1e-3, 1e6).unwrap();
        let red = integrate_reduced(&mu0, &rp, 1.0, 1e-3, 1e6).unwrap();
        for (a, c) in flat.final_state().iter().zip(red.final_state()) {
            assert!((a - c).abs() < 1e-10, "{a} vs {c}");
        }
    }

    #[test]
    fn reduced_stays_at_critical_point() {
        let b = basis(PI, 8, 16);
        let rp = ReducedPotential::new(
            Arc::clone(&b),
            Arc::new(Potential::zero()),
            3,
            TailSettings::default(),
        )
        .unwrap();
        let traj = integrate_reduced(&[0.0, 0.0, 0.0], &rp, 1.0, 0.01, 1e6).unwrap();
        assert_eq!(crate::linalg::norm2(traj.final_state()), 0.0);
    }

    #[test]
    fn unstable_linear_mode_blows_up() {
        let b = basis(PI, 8, 16);
        let u0 = SpectralField::mode(&b, 1, 1.0).unwrap();
        let pot = Potential::linear(-3.0);
        let err = integrate_full(&u0, &pot, 10.0, 0.01, 10.0);
        assert!(matches!(err, Err(DynamicsError::BlowUp { .. })));
    }

    #[test]
    fn invalid_step_rejected() {
        let b = basis(PI, 8, 16);
        let u0 = SpectralField::zero(&b);
        assert!(matches!(
            integrate_full(&u0, &Potential::zero(), 1.0, 0.0, 1e6),
            Err(DynamicsError::InvalidStep(_))
        ));
    }

    #[test]
    fn trajectory_csv_layout() {
        let b = basis(PI, 4, 8);
        let u0 = SpectralField::mode(&b, 1, 1.0).unwrap();
        let traj = integrate_full(&u0, &Potential::zero(), 0.02, 0.01, 1e6).unwrap();
        let mut buf = Vec::new();
        traj.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,a_1,a_2,a_3,a_4");
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn manifold_distance_of_on_manifold_point() {
        let b = basis(PI, 12, 28);
        let pot = Potential::clamped_double_well(0.5, 1.0, 2.0).unwrap();
        let rp =
            ReducedPotential::new(Arc::clone(&b), Arc::new(pot), 3, TailSettings::default())
                .unwrap();
        let mu = [0.6, -0.1, 0.2];
        let u = rp.lift(&mu).unwrap();
        let d = distance_to_manifold(&u, ManifoldKind::StaticTail, &rp).unwrap();
        assert!(d < 1e-11, "d = {d}");
        // flat distance is exactly the tail norm
        let df = distance_to_manifold(&u, ManifoldKind::Flat, &rp).unwrap();
        assert!((df - u.project_tail(3).unwrap().norm()).abs() < 1e-15);
    }

    #[test]
    fn scaling_experiment_smoke() {
        let b = basis(PI, 24, 56);
        let pot = Arc::new(Potential::clamped_double_well(0.5, 1.0, 2.0).unwrap());
        let mut u0 = vec![0.0; 24];
        u0[0] = 1.6;
        u0[2] = 0.5;
        u0[4] = 0.2;
        let cfg = AimScalingConfig {
            basis: Arc::clone(&b),
            potential: pot,
            u0,
            t_final: 1.0,
            dt: 0.01,
            cutoffs: vec![3, 5, 7],
            tail_settings: TailSettings::default(),
            blowup_bound: 1e6,
            rate_threshold: 1e-6,
        };
        let report = aim_scaling_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.t_star <= 0.5 + 1e-12);
        for w in report.rows.windows(2) {
            assert!(w[1].delta < w[0].delta, "delta must decrease in m");
        }
        for r in &report.rows {
            assert!(r.dist_flat >= 0.0 && r.dist_phi0 >= 0.0 && r.dist_static >= 0.0);
            assert!(r.dist_static <= report.kappa_static * r.delta * r.delta + 1e-15);
        }
        let mut buf = Vec::new();
        report.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("m,delta,dist_flat,dist_phi0,dist_static,eta_norm,etaprime_norm\n"));
    }
}
