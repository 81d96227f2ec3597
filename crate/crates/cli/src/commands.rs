//! The experiment commands. Each one builds its objects from the config,
//! runs the computation, writes fixed-format CSV outputs, and records a
//! run manifest with checksums.

use std::path::Path;

use grad_reduce_core::dynamics::{aim_scaling_experiment, AimScalingConfig};
use grad_reduce_core::io::{fmt_g17, write_row};
use grad_reduce_core::landscape::Landscape;
use grad_reduce_core::ldp::{
    cole_hopf_rate, mane_upper_bound, quasi_potential_infty, ActionSettings, FourierTestFunction,
    HorizonSettings, OptimizerKind,
};
use grad_reduce_core::linalg::norm2;
use grad_reduce_core::reduction::{NewtonSettings, ReducedPotential, TailSettings};
use grad_reduce_core::rng::CounterStream;
use grad_reduce_core::stochastic::{
    equilibrium_free_energy, fokker_planck_evolve, free_energy, relative_entropy, simulate_sde,
    stationary_density, DensityGrid, SdeConfig,
};

use crate::config::{ExperimentConfig, FpInitial, OptimizerConfig};
use crate::manifest::RunManifest;
use crate::CliError;

fn section<'a, T>(opt: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    opt.as_ref()
        .ok_or_else(|| CliError::Config(format!("config is missing the `{name}` section")))
}

fn csv_string<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(f: F) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Contraction margin, equilibria, and a one-dimensional energy scan.
pub fn cmd_reduce(
    cfg: &ExperimentConfig,
    config_bytes: &[u8],
    out_dir: &Path,
) -> Result<(), CliError> {
    let reduced = cfg.build_reduced()?;
    let m = reduced.cutoff();
    println!(
        "contraction margin: q = C/lambda_{{m+1}} = {:.6} (companion C/lambda_m = {:.6})",
        reduced.margin(),
        reduced.margin_head_index()
    );

    let seeds = cfg.equilibria_seeds();
    let report = reduced.find_equilibria(&seeds, &NewtonSettings::default());
    for failure in &report.failures {
        eprintln!(
            "seed {} did not converge: {}",
            failure.seed_index, failure.message
        );
    }
    println!("equilibria found: {}", report.equilibria.len());
    for eq in &report.equilibria {
        println!(
            "  mu = [{}]  W = {:.6e}  |grad W| = {:.2e}  |residual| = {:.2e}",
            eq.mu.iter().map(|v| format!("{v:+.5}")).collect::<Vec<_>>().join(", "),
            eq.energy,
            eq.grad_norm,
            eq.residual_norm
        );
    }

    let mut manifest = RunManifest::new(out_dir, "reduce", config_bytes, None);
    let equilibria_csv = csv_string(|buf| {
        use std::io::Write;
        for d in 1..=m {
            write!(buf, "{}mu_{d}", if d == 1 { "" } else { "," })?;
        }
        writeln!(buf, ",W,grad_norm,residual_norm")?;
        for eq in &report.equilibria {
            let mut row = eq.mu.clone();
            row.push(eq.energy);
            row.push(eq.grad_norm);
            row.push(eq.residual_norm);
            write_row(buf, &[], &row)?;
        }
        Ok(())
    })?;
    manifest.write_file("equilibria.csv", &equilibria_csv)?;

    // Energy scan along the first reduced coordinate, other entries zero.
    if let Some(scan) = &cfg.reduction.scan {
        let scan_csv = csv_string(|buf| {
            use std::io::Write;
            for d in 1..=m {
                write!(buf, "{}mu_{d}", if d == 1 { "" } else { "," })?;
            }
            writeln!(buf, ",W")?;
            for i in 0..scan.n_points {
                let x = scan.min + (scan.max - scan.min) * i as f64 / (scan.n_points - 1) as f64;
                let mut mu = vec![0.0; m];
                mu[0] = x;
                let w = reduced
                    .reduced_energy(&mu)
                    .map_err(CliError::from)
                    .unwrap_or(f64::NAN);
                let mut row = mu;
                row.push(w);
                write_row(buf, &[], &row)?;
            }
            Ok(())
        })?;
        manifest.write_file("w_scan.csv", &scan_csv)?;
    }
    manifest.finish()?;
    Ok(())
}

/// Manifold-distance scaling over the configured cutoffs, with optional
/// window assertions.
pub fn cmd_aim_scaling(
    cfg: &ExperimentConfig,
    config_bytes: &[u8],
    out_dir: &Path,
    assert_windows: bool,
) -> Result<(), CliError> {
    let aim = section(&cfg.aim, "aim")?;
    let dynamics = section(&cfg.dynamics, "dynamics")?;
    let basis = cfg.build_basis()?;
    let potential = cfg.build_potential()?;
    let mut u0 = dynamics.u0.clone();
    u0.resize(basis.n_modes(), 0.0);

    let exp_cfg = AimScalingConfig {
        basis,
        potential,
        u0,
        t_final: dynamics.t_final,
        dt: dynamics.dt,
        cutoffs: aim.cutoffs.clone(),
        tail_settings: TailSettings {
            tol: cfg.reduction.tol,
            max_iter: cfg.reduction.max_iter,
        },
        blowup_bound: dynamics.blowup_bound,
        rate_threshold: aim.rate_threshold,
    };
    let report = aim_scaling_experiment(&exp_cfg)?;

    println!("burn-in t* = {}", report.t_star);
    println!(
        "slopes: flat = {:.4}, phi0 = {:.4}, static = {:.4}, eta = {:.4}, eta' = {:.4}",
        report.slopes.flat,
        report.slopes.phi0,
        report.slopes.static_tail,
        report.slopes.eta,
        report.slopes.eta_prime
    );
    println!("kappa (static tail, tightest delta^2 constant) = {:.6}", report.kappa_static);

    let mut manifest = RunManifest::new(out_dir, "aim-scaling", config_bytes, None);
    let report_csv = csv_string(|buf| report.to_csv(buf))?;
    manifest.write_file("aim_report.csv", &report_csv)?;
    let slopes_csv = csv_string(|buf| {
        use std::io::Write;
        writeln!(buf, "series,slope")?;
        writeln!(buf, "flat,{}", fmt_g17(report.slopes.flat))?;
        writeln!(buf, "phi0,{}", fmt_g17(report.slopes.phi0))?;
        writeln!(buf, "static_tail,{}", fmt_g17(report.slopes.static_tail))?;
        writeln!(buf, "eta,{}", fmt_g17(report.slopes.eta))?;
        writeln!(buf, "eta_prime,{}", fmt_g17(report.slopes.eta_prime))?;
        writeln!(buf, "t_star,{}", fmt_g17(report.t_star))?;
        writeln!(buf, "kappa_static,{}", fmt_g17(report.kappa_static))?;
        Ok(())
    })?;
    manifest.write_file("aim_slopes.csv", &slopes_csv)?;
    manifest.finish()?;

    if assert_windows {
        let w = &aim.windows;
        let inside = |v: f64, lo: f64, hi: f64| v >= lo && v <= hi;
        let mut violations = Vec::new();
        if !inside(report.slopes.flat, w.flat[0], w.flat[1]) {
            violations.push(format!("flat slope {:.4} outside {:?}", report.slopes.flat, w.flat));
        }
        if !inside(report.slopes.phi0, w.phi0[0], w.phi0[1]) {
            violations.push(format!("phi0 slope {:.4} outside {:?}", report.slopes.phi0, w.phi0));
        }
        if !inside(report.slopes.static_tail, w.static_tail[0], w.static_tail[1]) {
            violations.push(format!(
                "static slope {:.4} outside {:?}",
                report.slopes.static_tail, w.static_tail
            ));
        }
        if report.slopes.eta < w.eta_min {
            violations.push(format!("eta slope {:.4} below {}", report.slopes.eta, w.eta_min));
        }
        if report.slopes.eta_prime < w.eta_prime_min {
            violations.push(format!(
                "eta' slope {:.4} below {}",
                report.slopes.eta_prime, w.eta_prime_min
            ));
        }
        if !violations.is_empty() {
            return Err(CliError::AssertionFailed(violations.join("; ")));
        }
        println!("all slope windows satisfied");
    }
    Ok(())
}

/// Langevin ensemble over the reduced energy.
pub fn cmd_sde(
    cfg: &ExperimentConfig,
    config_bytes: &[u8],
    out_dir: &Path,
) -> Result<(), CliError> {
    let sde = section(&cfg.sde, "sde")?;
    let reduced = cfg.build_reduced()?;
    let mut sim_cfg = SdeConfig::new(sde.nu, sde.dt, sde.n_paths, sde.seed);
    sim_cfg.blowup_bound = sde.blowup_bound;
    let ensemble = simulate_sde(&sde.mu0, &reduced, &sim_cfg, sde.t_final)?;
    println!(
        "paths: {} finished, {} blew up",
        ensemble.endpoints.len(),
        ensemble.blowup_count
    );

    let mut manifest = RunManifest::new(out_dir, "sde", config_bytes, Some(sde.seed));
    let csv = csv_string(|buf| ensemble.to_csv(buf, reduced.cutoff()))?;
    manifest.write_file("ensemble.csv", &csv)?;
    manifest.finish()?;
    Ok(())
}

/// Fokker-Planck evolution with the Gibbs reference and the entropy
/// descent record.
pub fn cmd_fokker_planck(
    cfg: &ExperimentConfig,
    config_bytes: &[u8],
    out_dir: &Path,
) -> Result<(), CliError> {
    let fp = section(&cfg.fp, "fp")?;
    let reduced = cfg.build_reduced()?;
    let spec = crate::config::grid_spec_from(&fp.box_axes)?;
    let peq = stationary_density(&reduced, fp.nu, &spec)?;
    let p0 = match &fp.initial {
        FpInitial::Gaussian { mean, sigma } => DensityGrid::gaussian(spec.clone(), mean, *sigma)?,
        FpInitial::Point { at } => DensityGrid::point_mass(spec.clone(), at)?,
        FpInitial::Stationary => peq.clone(),
    };
    let snaps = fokker_planck_evolve(&p0, &reduced, fp.nu, fp.t_final, fp.dt, fp.record_every)?;

    let psi_eq = equilibrium_free_energy(&reduced, fp.nu, &spec)?;
    println!("equilibrium free energy -nu ln Z = {psi_eq:.8}");
    let final_entropy = relative_entropy(&snaps.last().unwrap().1, &peq)?;
    println!(
        "relative entropy to the Gibbs state after t = {}: {final_entropy:.6e}",
        fp.t_final
    );

    let mut manifest = RunManifest::new(out_dir, "fokker-planck", config_bytes, None);
    let final_csv = csv_string(|buf| snaps.last().unwrap().1.to_csv(buf))?;
    manifest.write_file("fp_final.csv", &final_csv)?;
    let stat_csv = csv_string(|buf| peq.to_csv(buf))?;
    manifest.write_file("fp_stationary.csv", &stat_csv)?;
    let entropy_csv = csv_string(|buf| {
        use std::io::Write;
        writeln!(buf, "t,relative_entropy,free_energy,mass")?;
        for (t, p) in &snaps {
            let h = relative_entropy(p, &peq).map_err(std::io::Error::other)?;
            let psi = free_energy(p, &reduced, fp.nu).map_err(std::io::Error::other)?;
            write_row(buf, &[], &[*t, h, psi, p.mass()])?;
        }
        Ok(())
    })?;
    manifest.write_file("fp_entropy.csv", &entropy_csv)?;

    // Cole-Hopf transform of the final density, plot-ready.
    if snaps.last().unwrap().1.min_value() > 0.0 {
        let rate = cole_hopf_rate(&snaps.last().unwrap().1, fp.nu)
            .expect("positivity checked above");
        let rate_csv = csv_string(|buf| {
            use std::io::Write;
            write!(buf, "cell_index")?;
            for d in 1..=rate.spec.dim() {
                write!(buf, ",mu_{d}")?;
            }
            writeln!(buf, ",s")?;
            for i in 0..rate.values.len() {
                let mut row = rate.spec.center(i);
                row.push(rate.values[i]);
                write_row(buf, &[&i.to_string()], &row)?;
            }
            Ok(())
        })?;
        manifest.write_file("fp_cole_hopf.csv", &rate_csv)?;
    }
    manifest.finish()?;
    Ok(())
}

fn find_reference_equilibrium(
    cfg: &ExperimentConfig,
    reduced: &ReducedPotential,
) -> Result<Vec<f64>, CliError> {
    if let Some(x_hat) = cfg.ldp.as_ref().and_then(|l| l.x_hat.clone()) {
        return Ok(x_hat);
    }
    let report = reduced.find_equilibria(&cfg.equilibria_seeds(), &NewtonSettings::default());
    report
        .equilibria
        .iter()
        .min_by(|a, b| a.energy.total_cmp(&b.energy))
        .map(|e| e.mu.clone())
        .ok_or_else(|| CliError::Config("no equilibrium found for the quasi-potential reference".into()))
}

/// Infinite-horizon quasi-potential from the reference equilibrium to the
/// configured targets.
pub fn cmd_quasipotential(
    cfg: &ExperimentConfig,
    config_bytes: &[u8],
    out_dir: &Path,
) -> Result<(), CliError> {
    let ldp = section(&cfg.ldp, "ldp")?;
    let reduced = cfg.build_reduced()?;
    let m = reduced.cutoff();
    let x_hat = find_reference_equilibrium(cfg, &reduced)?;
    let grad_norm = norm2(&reduced.gradient(&x_hat));
    println!(
        "reference equilibrium x_hat = [{}], |grad W| = {grad_norm:.2e}",
        x_hat.iter().map(|v| format!("{v:+.6}")).collect::<Vec<_>>().join(", ")
    );

    let settings = ActionSettings {
        alpha: ldp.alpha,
        optimizer: match ldp.optimizer {
            OptimizerConfig::GradientDescentMomentum => OptimizerKind::GradientDescentMomentum,
            OptimizerConfig::QuasiNewton => OptimizerKind::QuasiNewton,
        },
        tol: ldp.tol,
        max_iter: ldp.max_iter,
    };
    let horizon = HorizonSettings {
        t0: ldp.t0,
        k0: ldp.k_segments,
        rel_tol: ldp.rel_tol,
        max_doublings: ldp.max_doublings,
    };

    let mut targets: Vec<Vec<f64>> = ldp.targets.clone().unwrap_or_default();
    if let Some(scan) = &ldp.scan {
        for i in 0..scan.n_points {
            let x = scan.min + (scan.max - scan.min) * i as f64 / (scan.n_points - 1) as f64;
            targets.push(vec![x]);
        }
    }
    if targets.is_empty() {
        return Err(CliError::Config("ldp.targets or ldp.scan must name at least one point".into()));
    }

    let mut manifest = RunManifest::new(out_dir, "quasipotential", config_bytes, None);
    let write_paths = ldp.targets.as_ref().is_some_and(|t| !t.is_empty());
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, target) in targets.iter().enumerate() {
        let res = quasi_potential_infty(target, &x_hat, &reduced, &settings, &horizon)?;
        println!(
            "V_inf([{}]) = {:.8}  (horizon {}, {} iterations)",
            target.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(", "),
            res.value,
            res.horizon,
            res.iterations
        );
        if write_paths && i < ldp.targets.as_ref().map_or(0, Vec::len) {
            let path_csv = csv_string(|buf| res.path.to_csv(buf))?;
            manifest.write_file(&format!("qp_path_{i:03}.csv"), &path_csv)?;
        }
        rows.push((target.clone(), res.value));
    }

    let scan_csv = csv_string(|buf| {
        use std::io::Write;
        for d in 1..=m {
            write!(buf, "{}mu_{d}", if d == 1 { "" } else { "," })?;
        }
        writeln!(buf, ",V")?;
        for (target, value) in &rows {
            let mut row = target.clone();
            row.push(*value);
            write_row(buf, &[], &row)?;
        }
        Ok(())
    })?;
    manifest.write_file("quasipotential.csv", &scan_csv)?;
    manifest.finish()?;
    Ok(())
}

/// Critical-value bracket: sup of the Hamiltonian along candidate
/// gradients over the grid, for the zero function and a family of random
/// smooth test functions.
pub fn cmd_mane(
    cfg: &ExperimentConfig,
    config_bytes: &[u8],
    out_dir: &Path,
) -> Result<(), CliError> {
    let mane = section(&cfg.mane, "mane")?;
    let ldp = section(&cfg.ldp, "ldp")?;
    let reduced = cfg.build_reduced()?;
    let settings = ActionSettings {
        alpha: ldp.alpha,
        optimizer: OptimizerKind::QuasiNewton,
        tol: ldp.tol,
        max_iter: ldp.max_iter,
    };

    let mut samples = lattice_points(&mane.grid);
    // The bracket argument needs at least one critical point of W among
    // the samples.
    let report = reduced.find_equilibria(&cfg.equilibria_seeds(), &NewtonSettings::default());
    if report.equilibria.is_empty() {
        return Err(CliError::Config("no critical point of W found for the mane grid".into()));
    }
    for eq in &report.equilibria {
        samples.push(eq.mu.clone());
    }

    let zero = |x: &[f64]| vec![0.0; x.len()];
    let mut values = vec![mane_upper_bound(&zero, &reduced, &settings, &samples)];
    let mut stream = CounterStream::new(mane.seed, 0);
    for _ in 0..mane.n_test_functions {
        let f = FourierTestFunction::random(reduced.cutoff(), mane.n_terms, mane.max_freq, &mut stream);
        let grad = move |x: &[f64]| f.grad(x);
        values.push(mane_upper_bound(&grad, &reduced, &settings, &samples));
    }
    let c_estimate = values.iter().cloned().fold(f64::INFINITY, f64::min);
    println!(
        "critical value estimate c = {c_estimate:.3e} over {} test functions (zero function gives {:.3e})",
        values.len(),
        values[0]
    );

    let mut manifest = RunManifest::new(out_dir, "mane", config_bytes, Some(mane.seed));
    let csv = csv_string(|buf| {
        use std::io::Write;
        writeln!(buf, "u_index,sup_h")?;
        for (i, v) in values.iter().enumerate() {
            write_row(buf, &[&i.to_string()], &[*v])?;
        }
        Ok(())
    })?;
    manifest.write_file("mane.csv", &csv)?;
    let summary = csv_string(|buf| {
        use std::io::Write;
        writeln!(buf, "c_estimate")?;
        writeln!(buf, "{}", fmt_g17(c_estimate))?;
        Ok(())
    })?;
    manifest.write_file("mane_summary.csv", &summary)?;
    manifest.finish()?;
    Ok(())
}

/// Cartesian lattice of cell centers over the given axes, any dimension.
fn lattice_points(axes: &[crate::config::BoxAxis]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for ax in axes {
        let h = (ax.max - ax.min) / ax.n_cells as f64;
        let mut next = Vec::with_capacity(points.len() * ax.n_cells);
        for p in &points {
            for i in 0..ax.n_cells {
                let mut q = p.clone();
                q.push(ax.min + (i as f64 + 0.5) * h);
                next.push(q);
            }
        }
        points = next;
    }
    points
}
