//! Experiment configuration: strict JSON with schema validation at load.
//! Unknown keys are rejected everywhere, and every numeric guard owned by
//! the core layers is re-checked here so a bad file fails before any
//! computation starts.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use grad_reduce_core::potential::Potential;
use grad_reduce_core::reduction::{ReducedPotential, TailSettings};
use grad_reduce_core::spectral::SpectralBasis;
use grad_reduce_core::stochastic::{GridAxis, GridSpec};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub domain: DomainConfig,
    pub basis: BasisConfig,
    pub potential: PotentialConfig,
    pub reduction: ReductionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aim: Option<AimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde: Option<SdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp: Option<FpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ldp: Option<LdpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mane: Option<ManeConfig>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub n_modes: usize,
    pub n_quad: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum PotentialConfig {
    Zero,
    Linear {
        c: f64,
    },
    ClampedDoubleWell {
        epsilon: f64,
        r_core: f64,
        r_cut: f64,
        /// Optional declared Lipschitz certificate; must dominate the
        /// dense-sampled derivative bound.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz_bound: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    pub m: usize,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Initial coefficients; padded with zeros up to `n_modes`.
    pub u0: Vec<f64>,
    #[serde(default = "default_blowup")]
    pub blowup_bound: f64,
}

fn default_blowup() -> f64 {
    1e6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AimConfig {
    pub cutoffs: Vec<usize>,
    #[serde(default = "default_rate_threshold")]
    pub rate_threshold: f64,
    pub windows: AimWindows,
}

fn default_rate_threshold() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AimWindows {
    pub flat: [f64; 2],
    pub phi0: [f64; 2],
    pub static_tail: [f64; 2],
    pub eta_min: f64,
    pub eta_prime_min: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    pub nu: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub t_final: f64,
    pub mu0: Vec<f64>,
    #[serde(default = "default_blowup")]
    pub blowup_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    #[serde(rename = "box")]
    pub box_axes: Vec<BoxAxis>,
    pub initial: FpInitial,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_record_every() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxAxis {
    pub min: f64,
    pub max: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum FpInitial {
    Gaussian { mean: Vec<f64>, sigma: f64 },
    Point { at: Vec<f64> },
    Stationary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpConfig {
    pub alpha: f64,
    pub k_segments: usize,
    pub t0: f64,
    pub tol: f64,
    #[serde(default = "default_ldp_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_doublings")]
    pub max_doublings: usize,
    /// Reference equilibrium; found from the reduction seeds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_hat: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<Vec<f64>>>,
    /// One-dimensional target scan along the first coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
}

fn default_ldp_max_iter() -> usize {
    5000
}

fn default_rel_tol() -> f64 {
    1e-3
}

fn default_max_doublings() -> usize {
    8
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerConfig {
    GradientDescentMomentum,
    QuasiNewton,
}

fn default_optimizer() -> OptimizerConfig {
    OptimizerConfig::QuasiNewton
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeConfig {
    pub grid: Vec<BoxAxis>,
    pub n_test_functions: usize,
    pub seed: u64,
    #[serde(default = "default_n_terms")]
    pub n_terms: usize,
    #[serde(default = "default_max_freq")]
    pub max_freq: f64,
}

fn default_n_terms() -> usize {
    4
}

fn default_max_freq() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.domain.length.is_nan() || self.domain.length <= 0.0 {
            return Err(CliError::Config("domain.length must be positive".into()));
        }
        if self.reduction.m == 0 || self.reduction.m >= self.basis.n_modes {
            return Err(CliError::Config(format!(
                "reduction.m = {} must satisfy 1 <= m < n_modes = {}",
                self.reduction.m, self.basis.n_modes
            )));
        }
        if self.reduction.tol.is_nan() || self.reduction.tol <= 0.0 || self.reduction.max_iter == 0 {
            return Err(CliError::Config("reduction tolerance/iterations invalid".into()));
        }
        if let Some(dyn_cfg) = &self.dynamics {
            if positive(dyn_cfg.dt).is_none() || positive(dyn_cfg.t_final).is_none() {
                return Err(CliError::Config("dynamics dt and t_final must be positive".into()));
            }
            if dyn_cfg.u0.len() > self.basis.n_modes {
                return Err(CliError::Config(format!(
                    "dynamics.u0 has {} coefficients, basis resolves {}",
                    dyn_cfg.u0.len(),
                    self.basis.n_modes
                )));
            }
        }
        if let Some(aim) = &self.aim {
            if aim.cutoffs.is_empty() {
                return Err(CliError::Config("aim.cutoffs must not be empty".into()));
            }
            for &m in &aim.cutoffs {
                if m == 0 || m >= self.basis.n_modes {
                    return Err(CliError::Config(format!(
                        "aim cutoff {m} out of range 1..{}",
                        self.basis.n_modes
                    )));
                }
            }
        }
        if let Some(sde) = &self.sde {
            if sde.nu.is_nan() || sde.nu < 0.0 || positive(sde.dt).is_none() || positive(sde.t_final).is_none() {
                return Err(CliError::Config("sde nu/dt/t_final invalid".into()));
            }
            if sde.mu0.len() != self.reduction.m {
                return Err(CliError::Config(format!(
                    "sde.mu0 has {} entries, reduction.m = {}",
                    sde.mu0.len(),
                    self.reduction.m
                )));
            }
        }
        if let Some(fp) = &self.fp {
            if self.reduction.m > 2 {
                return Err(CliError::Config(
                    "fokker-planck work requires reduction.m <= 2".into(),
                ));
            }
            if fp.box_axes.len() != self.reduction.m {
                return Err(CliError::Config(format!(
                    "fp.box has {} axes, reduction.m = {}",
                    fp.box_axes.len(),
                    self.reduction.m
                )));
            }
            if positive(fp.nu).is_none() || positive(fp.dt).is_none() || positive(fp.t_final).is_none() {
                return Err(CliError::Config("fp nu/dt/t_final invalid".into()));
            }
        }
        if let Some(ldp) = &self.ldp {
            if ldp.alpha != 0.25 && ldp.alpha != 0.5 {
                return Err(CliError::Config(format!(
                    "ldp.alpha must be 0.25 or 0.5 in shipped configurations, got {}",
                    ldp.alpha
                )));
            }
            if ldp.k_segments < 8 {
                return Err(CliError::Config("ldp.k_segments must be at least 8".into()));
            }
            if positive(ldp.t0).is_none() || positive(ldp.tol).is_none() {
                return Err(CliError::Config("ldp.t0 and ldp.tol must be positive".into()));
            }
            if let Some(scan) = &ldp.scan {
                if self.reduction.m != 1 {
                    return Err(CliError::Config("ldp.scan requires reduction.m = 1".into()));
                }
                validate_scan(scan)?;
            }
        }
        if let Some(mane) = &self.mane {
            if mane.grid.len() != self.reduction.m {
                return Err(CliError::Config(format!(
                    "mane.grid has {} axes, reduction.m = {}",
                    mane.grid.len(),
                    self.reduction.m
                )));
            }
        }
        if let Some(scan) = &self.reduction.scan {
            validate_scan(scan)?;
        }
        if self.output.directory.is_empty() {
            return Err(CliError::Config("output.directory must not be empty".into()));
        }
        for f in &self.output.formats {
            if f != "csv" {
                return Err(CliError::Config(format!("unsupported output format {f:?}")));
            }
        }
        Ok(())
    }

    pub fn build_basis(&self) -> Result<Arc<SpectralBasis>, CliError> {
        SpectralBasis::new(self.domain.length, self.basis.n_modes, self.basis.n_quad)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn build_potential(&self) -> Result<Arc<Potential>, CliError> {
        let pot = match &self.potential {
            PotentialConfig::Zero => Potential::zero(),
            PotentialConfig::Linear { c } => Potential::linear(*c),
            PotentialConfig::ClampedDoubleWell {
                epsilon,
                r_core,
                r_cut,
                lipschitz_bound,
            } => {
                let base = Potential::clamped_double_well(*epsilon, *r_core, *r_cut)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                match lipschitz_bound {
                    Some(c) => base
                        .with_lipschitz_certificate(*c)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                    None => base,
                }
            }
        };
        Ok(Arc::new(pot))
    }

    pub fn build_reduced(&self) -> Result<ReducedPotential, CliError> {
        let basis = self.build_basis()?;
        let potential = self.build_potential()?;
        ReducedPotential::new(
            basis,
            potential,
            self.reduction.m,
            TailSettings {
                tol: self.reduction.tol,
                max_iter: self.reduction.max_iter,
            },
        )
        .map_err(CliError::from)
    }

    /// Equilibria search seeds: configured, or the origin plus the first
    /// coordinate directions.
    pub fn equilibria_seeds(&self) -> Vec<Vec<f64>> {
        if let Some(seeds) = &self.reduction.seeds {
            return seeds.clone();
        }
        let m = self.reduction.m;
        let mut seeds = vec![vec![0.0; m]];
        let mut plus = vec![0.0; m];
        plus[0] = 1.0;
        let mut minus = vec![0.0; m];
        minus[0] = -1.0;
        seeds.push(plus);
        seeds.push(minus);
        seeds
    }
}

fn positive(x: f64) -> Option<f64> {
    (x.is_finite() && x > 0.0).then_some(x)
}

fn validate_scan(scan: &ScanConfig) -> Result<(), CliError> {
    if scan.min.is_nan() || scan.max.is_nan() || scan.min >= scan.max || scan.n_points < 2 {
        return Err(CliError::Config("scan needs min < max and n_points >= 2".into()));
    }
    Ok(())
}

pub fn grid_spec_from(axes: &[BoxAxis]) -> Result<GridSpec, CliError> {
    GridSpec::new(
        axes.iter()
            .map(|a| GridAxis {
                min: a.min,
                max: a.max,
                n_cells: a.n_cells,
            })
            .collect(),
    )
    .map_err(|e| CliError::Config(e.to_string()))
}
