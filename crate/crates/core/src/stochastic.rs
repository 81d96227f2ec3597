//! Stochastic layer on the reduced gradient flow: Langevin ensembles,
//! grid densities, Fokker-Planck evolution, and the entropy/free-energy
//! functionals tying them together.
//!
//! Noise convention: the SDE is `d mu = -grad W dt + sqrt(2 nu) dB`, so
//! increments have variance `2 nu dt` per coordinate. With this scaling
//! the Fokker-Planck equation is `dp/dt = div(p grad W) + nu Lap p` and
//! its stationary solution is exactly `exp(-W/nu)/Z`. The finite-volume
//! fluxes are exponentially fitted (Scharfetter-Gummel weights), which
//! makes the discrete Gibbs density an exact fixed point of the scheme,
//! conserves mass to rounding, and preserves positivity under the CFL
//! guard.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::io::write_row;
use crate::landscape::Landscape;
use crate::linalg::norm2;
use crate::rng::CounterStream;

#[derive(Debug, Error)]
pub enum StochasticError {
    #[error("stability guard violated: dt * L = {product} >= 0.5 (local gradient Lipschitz estimate L = {lipschitz:e})")]
    StabilityGuard { product: f64, lipschitz: f64 },
    #[error("grid dimension {0} unsupported; densities are limited to 1 or 2 coordinates")]
    DimensionUnsupported(usize),
    #[error("grid axis {axis} invalid: need min < max and at least 4 cells")]
    InvalidAxis { axis: usize },
    #[error("box too small: boundary density is {boundary_ratio:e} of the peak, above the 1e-12 threshold")]
    BoxTooSmall { boundary_ratio: f64 },
    #[error("CFL guard violated: dt = {dt} exceeds the bound {dt_max}")]
    CflViolation { dt: f64, dt_max: f64 },
    #[error("grids do not match or the reference density vanishes where the argument does not")]
    SupportMismatch,
    #[error("density must be strictly positive on the grid")]
    NonPositiveDensity,
    #[error("state dimension {got} does not match landscape dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// One axis of a regular box grid; cells are centered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub n_cells: usize,
}

impl GridAxis {
    pub fn width(&self) -> f64 {
        (self.max - self.min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.width()
    }
}

/// Regular box grid in one or two coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self, StochasticError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(StochasticError::DimensionUnsupported(axes.len()));
        }
        for (i, ax) in axes.iter().enumerate() {
            if ax.min.is_nan() || ax.max.is_nan() || ax.min >= ax.max || ax.n_cells < 4 {
                return Err(StochasticError::InvalidAxis { axis: i });
            }
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.axes.iter().map(|a| a.n_cells).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(GridAxis::width).product()
    }

    /// Center coordinates of the flat-indexed cell (row-major over axes).
    pub fn center(&self, flat: usize) -> Vec<f64> {
        match self.axes.len() {
            1 => vec![self.axes[0].center(flat)],
            2 => {
                let ny = self.axes[1].n_cells;
                vec![self.axes[0].center(flat / ny), self.axes[1].center(flat % ny)]
            }
            _ => unreachable!("dimension validated"),
        }
    }

    /// Flat index of the cell containing `x`, or `None` outside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for (ax, &xi) in self.axes.iter().zip(x) {
            if xi < ax.min || xi >= ax.max {
                return None;
            }
            let i = ((xi - ax.min) / ax.width()) as usize;
            let i = i.min(ax.n_cells - 1);
            flat = flat * ax.n_cells + i;
        }
        Some(flat)
    }
}

/// Scalar values on a [`GridSpec`] without any density normalization.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

/// Non-negative, unit-mass density on a box grid.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    spec: GridSpec,
    values: Vec<f64>,
    cell_volume: f64,
}

impl DensityGrid {
    /// Normalizes the given non-negative cell values to unit mass.
    pub fn from_values(spec: GridSpec, mut values: Vec<f64>) -> Result<Self, StochasticError> {
        assert_eq!(values.len(), spec.n_cells(), "cell count mismatch");
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(StochasticError::NonPositiveDensity);
        }
        let vol = spec.cell_volume();
        let mass: f64 = values.iter().sum::<f64>() * vol;
        if mass.is_nan() || mass <= 0.0 {
            return Err(StochasticError::NonPositiveDensity);
        }
        for v in values.iter_mut() {
            *v /= mass;
        }
        Ok(Self {
            spec,
            values,
            cell_volume: vol,
        })
    }

    /// Gaussian bump centered at `mean` with standard deviation `sigma`,
    /// normalized on the grid.
    pub fn gaussian(spec: GridSpec, mean: &[f64], sigma: f64) -> Result<Self, StochasticError> {
        let values: Vec<f64> = (0..spec.n_cells())
            .map(|i| {
                let c = spec.center(i);
                let d2: f64 = c.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
                (-0.5 * d2 / (sigma * sigma)).exp()
            })
            .collect();
        Self::from_values(spec, values)
    }

    /// All mass in the cell containing `x` (the grid-level point source).
    pub fn point_mass(spec: GridSpec, x: &[f64]) -> Result<Self, StochasticError> {
        let idx = spec.locate(x).ok_or(StochasticError::NonPositiveDensity)?;
        let mut values = vec![0.0; spec.n_cells()];
        values[idx] = 1.0;
        Self::from_values(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// `integral |p - q|`; grids must match.
    pub fn l1_distance(&self, other: &Self) -> Result<f64, StochasticError> {
        if self.spec != other.spec {
            return Err(StochasticError::SupportMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.cell_volume)
    }

    /// Second moment about the origin, per coordinate summed.
    pub fn second_moment(&self) -> f64 {
        (0..self.values.len())
            .map(|i| {
                let c = self.spec.center(i);
                self.values[i] * c.iter().map(|x| x * x).sum::<f64>()
            })
            .sum::<f64>()
            * self.cell_volume
    }

    pub fn mean(&self) -> Vec<f64> {
        let dim = self.spec.dim();
        let mut mean = vec![0.0; dim];
        for i in 0..self.values.len() {
            let c = self.spec.center(i);
            for d in 0..dim {
                mean[d] += self.values[i] * c[d];
            }
        }
        for m in mean.iter_mut() {
            *m *= self.cell_volume;
        }
        mean
    }

    /// CSV with header `cell_index,mu_1,...,mu_m,p`.
    pub fn to_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write!(w, "cell_index")?;
        for d in 1..=self.spec.dim() {
            write!(w, ",mu_{d}")?;
        }
        writeln!(w, ",p")?;
        for i in 0..self.values.len() {
            let mut row = self.spec.center(i);
            row.push(self.values[i]);
            write_row(w, &[&i.to_string()], &row)?;
        }
        Ok(())
    }
}

/// Euler-Maruyama ensemble configuration. Increments have variance
/// `2 nu dt` per coordinate; reproducibility is guaranteed by per-path
/// counter-based streams keyed off `master_seed`.
#[derive(Debug, Clone, Copy)]
pub struct SdeConfig {
    pub nu: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub blowup_bound: f64,
}

impl SdeConfig {
    pub fn new(nu: f64, dt: f64, n_paths: usize, master_seed: u64) -> Self {
        Self {
            nu,
            dt,
            n_paths,
            master_seed,
            blowup_bound: 1e6,
        }
    }
}

/// Endpoints of the surviving paths; `endpoints[i]` belongs to `path_ids[i]`.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub path_ids: Vec<u64>,
    pub endpoints: Vec<Vec<f64>>,
    pub blowup_count: usize,
}

impl Ensemble {
    /// CSV with header `path_id,mu_1,...,mu_m`.
    pub fn to_csv<W: Write>(&self, w: &mut W, dim: usize) -> io::Result<()> {
        write!(w, "path_id")?;
        for d in 1..=dim {
            write!(w, ",mu_{d}")?;
        }
        writeln!(w)?;
        for (id, x) in self.path_ids.iter().zip(&self.endpoints) {
            write_row(w, &[&id.to_string()], x)?;
        }
        Ok(())
    }
}

/// Euler-Maruyama over `[0, T]`:
/// `mu_{k+1} = mu_k - grad W(mu_k) dt + sqrt(2 nu dt) xi_k`.
/// Paths are independent jobs with decorrelated streams; the result is
/// identical for any worker count.
pub fn simulate_sde(
    mu0: &[f64],
    landscape: &dyn Landscape,
    cfg: &SdeConfig,
    t_final: f64,
) -> Result<Ensemble, StochasticError> {
    let dim = landscape.dim();
    if mu0.len() != dim {
        return Err(StochasticError::DimensionMismatch {
            got: mu0.len(),
            expected: dim,
        });
    }
    if cfg.n_paths == 0 {
        return Ok(Ensemble {
            path_ids: Vec::new(),
            endpoints: Vec::new(),
            blowup_count: 0,
        });
    }
    // Stability guard: probe the local Lipschitz constant of grad W
    // around the start point and require dt * L < 0.5.
    let mut probe = CounterStream::new(cfg.master_seed ^ 0x5157_ab1e, u64::MAX);
    let mut lipschitz = 0.0_f64;
    for _ in 0..8 {
        let dir: Vec<f64> = (0..dim).map(|_| probe.standard_normal()).collect();
        let dn = norm2(&dir);
        if dn == 0.0 {
            continue;
        }
        let jv = landscape.gradient_dir_deriv(mu0, &dir);
        lipschitz = lipschitz.max(norm2(&jv) / dn);
    }
    let product = cfg.dt * lipschitz;
    if product >= 0.5 {
        return Err(StochasticError::StabilityGuard { product, lipschitz });
    }

    let steps = ((t_final / cfg.dt).round() as usize).max(1);
    let amp = (2.0 * cfg.nu * cfg.dt).sqrt();
    let results: Vec<Option<Vec<f64>>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut stream = CounterStream::new(cfg.master_seed, path);
            let mut x = mu0.to_vec();
            for _ in 0..steps {
                let g = landscape.gradient(&x);
                for d in 0..dim {
                    x[d] += -g[d] * cfg.dt + amp * stream.standard_normal();
                }
                let n = norm2(&x);
                if !n.is_finite() || n > cfg.blowup_bound {
                    return None;
                }
            }
            Some(x)
        })
        .collect();

    let mut ensemble = Ensemble {
        path_ids: Vec::with_capacity(cfg.n_paths),
        endpoints: Vec::with_capacity(cfg.n_paths),
        blowup_count: 0,
    };
    for (path, endpoint) in results.into_iter().enumerate() {
        match endpoint {
            Some(x) => {
                ensemble.path_ids.push(path as u64);
                ensemble.endpoints.push(x);
            }
            None => ensemble.blowup_count += 1,
        }
    }
    Ok(ensemble)
}

/// Boltzmann-Gibbs density `exp(-W/nu)/Z` with `Z` by grid quadrature.
/// Fails when the box cuts off visible mass (boundary cells above
/// `1e-12` of the peak).
pub fn stationary_density(
    landscape: &dyn Landscape,
    nu: f64,
    spec: &GridSpec,
) -> Result<DensityGrid, StochasticError> {
    check_dims(landscape, spec)?;
    let unnorm: Vec<f64> = (0..spec.n_cells())
        .map(|i| (-landscape.energy(&spec.center(i)) / nu).exp())
        .collect();
    let peak = unnorm.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mut boundary_max = 0.0_f64;
    for (i, &v) in unnorm.iter().enumerate() {
        if is_boundary_cell(spec, i) {
            boundary_max = boundary_max.max(v);
        }
    }
    let ratio = boundary_max / peak;
    if ratio > 1e-12 {
        return Err(StochasticError::BoxTooSmall {
            boundary_ratio: ratio,
        });
    }
    DensityGrid::from_values(spec.clone(), unnorm)
}

fn is_boundary_cell(spec: &GridSpec, flat: usize) -> bool {
    match spec.axes.len() {
        1 => flat == 0 || flat == spec.axes[0].n_cells - 1,
        2 => {
            let ny = spec.axes[1].n_cells;
            let (i, j) = (flat / ny, flat % ny);
            i == 0 || i == spec.axes[0].n_cells - 1 || j == 0 || j == ny - 1
        }
        _ => unreachable!(),
    }
}

fn check_dims(landscape: &dyn Landscape, spec: &GridSpec) -> Result<(), StochasticError> {
    if landscape.dim() != spec.dim() {
        return Err(StochasticError::DimensionMismatch {
            got: spec.dim(),
            expected: landscape.dim(),
        });
    }
    Ok(())
}

/// Exponentially fitted face weights for the flux between two cells with
/// energies `w_lo`, `w_hi` (Bernoulli function pair).
fn face_weights(w_lo: f64, w_hi: f64, nu: f64) -> (f64, f64) {
    let z = (w_hi - w_lo) / nu;
    (bernoulli(z), bernoulli(-z))
}

/// B(z) = z / (e^z - 1), continuous through zero.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z / 2.0 + z * z / 12.0
    } else {
        z / (z.exp() - 1.0)
    }
}

/// Precomputed scheme for one landscape/grid/nu triple.
struct FvScheme {
    spec: GridSpec,
    /// For each axis, per-face (B(z), B(-z)) with faces between cell i
    /// and i+1 along that axis; flattened row-major like the cells.
    face_b: Vec<Vec<(f64, f64)>>,
    energies: Vec<f64>,
    nu: f64,
}

impl FvScheme {
    fn new(landscape: &dyn Landscape, nu: f64, spec: &GridSpec) -> Result<Self, StochasticError> {
        check_dims(landscape, spec)?;
        let energies: Vec<f64> = (0..spec.n_cells())
            .map(|i| landscape.energy(&spec.center(i)))
            .collect();
        let mut face_b = Vec::new();
        match spec.axes.len() {
            1 => {
                let n = spec.axes[0].n_cells;
                let mut faces = Vec::with_capacity(n - 1);
                for i in 0..n - 1 {
                    faces.push(face_weights(energies[i], energies[i + 1], nu));
                }
                face_b.push(faces);
            }
            2 => {
                let (nx, ny) = (spec.axes[0].n_cells, spec.axes[1].n_cells);
                let mut fx = Vec::with_capacity((nx - 1) * ny);
                for i in 0..nx - 1 {
                    for j in 0..ny {
                        fx.push(face_weights(energies[i * ny + j], energies[(i + 1) * ny + j], nu));
                    }
                }
                let mut fy = Vec::with_capacity(nx * (ny - 1));
                for i in 0..nx {
                    for j in 0..ny - 1 {
                        fy.push(face_weights(energies[i * ny + j], energies[i * ny + j + 1], nu));
                    }
                }
                face_b.push(fx);
                face_b.push(fy);
            }
            _ => unreachable!(),
        }
        Ok(Self {
            spec: spec.clone(),
            face_b,
            energies,
            nu,
        })
    }

    /// Largest face-gradient magnitude of W, for the CFL bound.
    fn max_grad(&self) -> f64 {
        let mut m = 0.0_f64;
        match self.spec.axes.len() {
            1 => {
                let h = self.spec.axes[0].width();
                for w in self.energies.windows(2) {
                    m = m.max(((w[1] - w[0]) / h).abs());
                }
            }
            2 => {
                let (nx, ny) = (self.spec.axes[0].n_cells, self.spec.axes[1].n_cells);
                let hx = self.spec.axes[0].width();
                let hy = self.spec.axes[1].width();
                for i in 0..nx - 1 {
                    for j in 0..ny {
                        m = m.max(((self.energies[(i + 1) * ny + j] - self.energies[i * ny + j]) / hx).abs());
                    }
                }
                for i in 0..nx {
                    for j in 0..ny - 1 {
                        m = m.max(((self.energies[i * ny + j + 1] - self.energies[i * ny + j]) / hy).abs());
                    }
                }
            }
            _ => unreachable!(),
        }
        m
    }

    /// One explicit step with zero-flux boundaries. The face flux toward
    /// increasing index is `(nu/h) [B(-z) p_hi - B(z) p_lo]`.
    fn step(&self, p: &mut [f64], dt: f64) {
        match self.spec.axes.len() {
            1 => {
                let n = self.spec.axes[0].n_cells;
                let h = self.spec.axes[0].width();
                let c = self.nu / (h * h) * dt;
                let faces = &self.face_b[0];
                let old = p.to_vec();
                for i in 0..n {
                    let mut flux = 0.0;
                    if i + 1 < n {
                        let (bz, bmz) = faces[i];
                        flux += bmz * old[i + 1] - bz * old[i];
                    }
                    if i > 0 {
                        let (bz, bmz) = faces[i - 1];
                        flux -= bmz * old[i] - bz * old[i - 1];
                    }
                    p[i] = old[i] + c * flux;
                }
            }
            2 => {
                let (nx, ny) = (self.spec.axes[0].n_cells, self.spec.axes[1].n_cells);
                let hx = self.spec.axes[0].width();
                let hy = self.spec.axes[1].width();
                let cx = self.nu / (hx * hx) * dt;
                let cy = self.nu / (hy * hy) * dt;
                let fx = &self.face_b[0];
                let fy = &self.face_b[1];
                let old = p.to_vec();
                for i in 0..nx {
                    for j in 0..ny {
                        let idx = i * ny + j;
                        let mut flux = 0.0;
                        if i + 1 < nx {
                            let (bz, bmz) = fx[i * ny + j];
                            flux += cx * (bmz * old[(i + 1) * ny + j] - bz * old[idx]);
                        }
                        if i > 0 {
                            let (bz, bmz) = fx[(i - 1) * ny + j];
                            flux -= cx * (bmz * old[idx] - bz * old[(i - 1) * ny + j]);
                        }
                        if j + 1 < ny {
                            let (bz, bmz) = fy[i * (ny - 1) + j];
                            flux += cy * (bmz * old[idx + 1] - bz * old[idx]);
                        }
                        if j > 0 {
                            let (bz, bmz) = fy[i * (ny - 1) + j - 1];
                            flux -= cy * (bmz * old[idx] - bz * old[idx - 1]);
                        }
                        p[idx] = old[idx] + flux;
                    }
                }
            }
            _ => unreachable!(),
        }
    }
}

/// Conservative finite-volume evolution of the Fokker-Planck equation
/// `dp/dt = div(p grad W) + nu Lap p` with zero-flux boundaries.
/// Returns snapshots every `record_every` steps (always including the
/// initial and final states).
pub fn fokker_planck_evolve(
    p0: &DensityGrid,
    landscape: &dyn Landscape,
    nu: f64,
    t_final: f64,
    dt: f64,
    record_every: usize,
) -> Result<Vec<(f64, DensityGrid)>, StochasticError> {
    let scheme = FvScheme::new(landscape, nu, p0.spec())?;
    let h = p0
        .spec()
        .axes
        .iter()
        .map(GridAxis::width)
        .fold(f64::INFINITY, f64::min);
    let dt_max = 0.4 * h * h / (2.0 * nu + h * scheme.max_grad());
    if dt > dt_max {
        return Err(StochasticError::CflViolation { dt, dt_max });
    }

    let steps = ((t_final / dt).round() as usize).max(1);
    let every = record_every.max(1);
    let mut p = p0.values().to_vec();
    let mut out = vec![(0.0, p0.clone())];
    for k in 1..=steps {
        scheme.step(&mut p, dt);
        if k % every == 0 || k == steps {
            let snap = DensityGrid {
                spec: p0.spec().clone(),
                values: p.clone(),
                cell_volume: p0.cell_volume(),
            };
            out.push((k as f64 * dt, snap));
        }
    }
    Ok(out)
}

/// Relative entropy `integral p ln(p/q)`, with `0 ln 0 = 0`. Requires
/// matching grids and `q > 0` wherever `p > 0`.
pub fn relative_entropy(p: &DensityGrid, q: &DensityGrid) -> Result<f64, StochasticError> {
    if p.spec != q.spec {
        return Err(StochasticError::SupportMismatch);
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.values.iter().zip(&q.values) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(StochasticError::SupportMismatch);
            }
            acc += pi * (pi / qi).ln();
        }
    }
    Ok(acc * p.cell_volume)
}

/// Non-equilibrium free energy `Psi_nu(p) = E_p(W) - nu H(p)` with the
/// Shannon entropy `H(p) = -integral p ln p`.
pub fn free_energy(
    p: &DensityGrid,
    landscape: &dyn Landscape,
    nu: f64,
) -> Result<f64, StochasticError> {
    check_dims(landscape, p.spec())?;
    let mut mean_w = 0.0;
    let mut neg_entropy = 0.0;
    for i in 0..p.values.len() {
        let pi = p.values[i];
        if pi > 0.0 {
            mean_w += pi * landscape.energy(&p.spec.center(i));
            neg_entropy += pi * pi.ln();
        }
    }
    Ok((mean_w + nu * neg_entropy) * p.cell_volume)
}

/// Equilibrium free energy `-nu ln Z` with `Z` by the same grid
/// quadrature as [`stationary_density`].
pub fn equilibrium_free_energy(
    landscape: &dyn Landscape,
    nu: f64,
    spec: &GridSpec,
) -> Result<f64, StochasticError> {
    check_dims(landscape, spec)?;
    let z: f64 = (0..spec.n_cells())
        .map(|i| (-landscape.energy(&spec.center(i)) / nu).exp())
        .sum::<f64>()
        * spec.cell_volume();
    Ok(-nu * z.ln())
}

/// Normalized histogram of sample points; points outside the box are
/// counted separately and excluded from the mass.
pub fn empirical_density(
    points: &[Vec<f64>],
    spec: &GridSpec,
) -> Result<(DensityGrid, usize), StochasticError> {
    let mut counts = vec![0.0_f64; spec.n_cells()];
    let mut outside = 0;
    for x in points {
        match spec.locate(x) {
            Some(i) => counts[i] += 1.0,
            None => outside += 1,
        }
    }
    let grid = DensityGrid::from_values(spec.clone(), counts)?;
    Ok((grid, outside))
}
