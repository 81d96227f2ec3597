//! Path-space layer driven by the actual reduced energy: the
//! infinite-horizon quasi-potential identity against the reduced energy
//! oracle, and the Cole-Hopf comparison between the log-density and the
//! minimized finite-horizon action.

use std::sync::Arc;

use grad_reduce_core::landscape::Landscape;
use grad_reduce_core::ldp::{
    action_and_gradient, action, cole_hopf_rate, minimize_action, quasi_potential_infty,
    ActionSettings, DiscretePath, HorizonSettings, OptimizerKind,
};
use grad_reduce_core::potential::Potential;
use grad_reduce_core::reduction::{NewtonSettings, ReducedPotential, TailSettings};
use grad_reduce_core::rng::CounterStream;
use grad_reduce_core::spectral::SpectralBasis;
use grad_reduce_core::stochastic::{fokker_planck_evolve, DensityGrid, GridAxis, GridSpec};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn reduced_m1() -> ReducedPotential {
    let basis = SpectralBasis::new(TWO_PI, 8, 16).unwrap();
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

fn reduced_m2() -> ReducedPotential {
    let basis = SpectralBasis::new(TWO_PI, 10, 24).unwrap();
    let pot = Potential::clamped_double_well(0.5, 1.0, 2.0).unwrap();
    ReducedPotential::new(basis, Arc::new(pot), 2, TailSettings::default()).unwrap()
}

#[test]
fn action_gradient_consistent_on_reduced_landscape() {
    let rp = reduced_m1();
    let settings = ActionSettings::default();
    let mut stream = CounterStream::new(13, 0);
    let k = 10;
    let points: Vec<Vec<f64>> = (0..=k).map(|_| vec![stream.uniform_in(-1.5, 1.5)]).collect();
    let path = DiscretePath { dt: 0.05, points };
    let (_, grads) = action_and_gradient(&path, &rp, &settings);
    let h = 1e-6;
    for (i, g) in grads.iter().enumerate() {
        let mut plus = path.clone();
        plus.points[i + 1][0] += h;
        let mut minus = path.clone();
        minus.points[i + 1][0] -= h;
        let fd = (action(&plus, &rp, &settings) - action(&minus, &rp, &settings)) / (2.0 * h);
        let denom = fd.abs().max(1e-3);
        assert!(((g[0] - fd) / denom).abs() < 1e-5, "i={i}: {} vs {fd}", g[0]);
    }
}

#[test]
fn quasi_potential_matches_reduced_energy_in_two_dims() {
    let rp = reduced_m2();
    let report = rp.find_equilibria(&[vec![1.5, 0.0]], &NewtonSettings::default());
    let well = &report.equilibria[0];
    assert!(well.mu[0] > 1.0, "well expected at positive mu_1");

    let settings = ActionSettings {
        alpha: 0.25,
        optimizer: OptimizerKind::QuasiNewton,
        tol: 2e-5,
        max_iter: 4000,
    };
    let horizon = HorizonSettings {
        t0: 3.0,
        k0: 48,
        rel_tol: 1e-3,
        max_doublings: 6,
    };
    // A point in the well basin, uphill from the bottom.
    let target = vec![0.7 * well.mu[0], 0.15];
    let res = quasi_potential_infty(&target, &well.mu, &rp, &settings, &horizon).unwrap();
    let expect = rp.energy(&target) - rp.energy(&well.mu);
    let rel = (res.value - expect).abs() / expect;
    assert!(
        rel < 0.01,
        "quasi-potential {} vs energy gap {expect} (rel {rel})",
        res.value
    );
    assert!(res.value >= -1e-12);
    // The stored path attains the reported value.
    let replay = action(&res.path, &rp, &settings);
    assert!((replay - res.value).abs() <= 1e-10);
}

#[test]
fn log_density_approaches_minimized_action_as_noise_vanishes() {
    // Evolve a near-point density for a short horizon at three noise
    // levels; the sup gap between -nu ln p and the minimized action over
    // a fixed comparison window must shrink monotonically with nu.
    let rp = reduced_m1();
    let t = 1.0;
    let x0 = -1.1411; // well bottom
    let spec = GridSpec::new(vec![GridAxis {
        min: -2.6,
        max: 2.6,
        n_cells: 208,
    }])
    .unwrap();
    let p0 = DensityGrid::gaussian(spec.clone(), &[x0], 0.025).unwrap();

    let settings = ActionSettings {
        alpha: 0.25,
        optimizer: OptimizerKind::QuasiNewton,
        tol: 1e-6,
        max_iter: 4000,
    };
    // Finite-horizon action scan over the comparison window (does not
    // depend on nu).
    let targets: Vec<f64> = (0..=14).map(|i| -2.0 + 2.3 * i as f64 / 14.0).collect();
    let mut s_scan = Vec::new();
    for &x in &targets {
        let res = minimize_action(&[x0], &[x], t, 100, &rp, &settings).unwrap();
        s_scan.push(res.value);
    }
    let s_min = s_scan.iter().cloned().fold(f64::INFINITY, f64::min);
    for v in s_scan.iter_mut() {
        *v -= s_min;
    }

    let mut gaps = Vec::new();
    for &nu in &[0.2, 0.1, 0.05] {
        let snaps = fokker_planck_evolve(&p0, &rp, nu, t, 1.0e-4, usize::MAX).unwrap();
        let rate = cole_hopf_rate(&snaps.last().unwrap().1, nu).unwrap();
        // Shift both sides to zero at their window minimum, then take the
        // sup gap over the window.
        let window_rate: Vec<f64> = targets
            .iter()
            .map(|&x| {
                let i = rate.spec.locate(&[x]).unwrap();
                rate.values[i]
            })
            .collect();
        let rate_min = window_rate.iter().cloned().fold(f64::INFINITY, f64::min);
        let gap = window_rate
            .iter()
            .zip(&s_scan)
            .map(|(r, s)| ((r - rate_min) - s).abs())
            .fold(0.0_f64, f64::max);
        gaps.push((nu, gap));
    }
    for w in gaps.windows(2) {
        assert!(
            w[1].1 < w[0].1,
            "gap must shrink with nu: {:?} then {:?}",
            w[0],
            w[1]
        );
    }
}
