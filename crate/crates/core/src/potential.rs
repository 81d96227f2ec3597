//! Scalar reaction potentials `V` and their derivatives `gamma = V'`.
//!
//! The workhorse is the clamped double well: `gamma(u) = eps * psi(u) *
//! (u^3 - u)` where `psi` is an even quintic-smoothstep cutoff equal to 1
//! on `[-r_core, r_core]` and 0 outside `[-r_cut, r_cut]`. The clamp makes
//! `gamma` compactly supported and globally Lipschitz, which is what the
//! tail contraction needs, while the physical double well survives intact
//! inside the core. `V` is recovered from `gamma` exactly: `gamma` is
//! piecewise polynomial, so its antiderivative is cached as polynomial
//! pieces rather than quadrature.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("invalid clamp radii: need 0 < r_core < r_cut, got r_core={r_core}, r_cut={r_cut}")]
    InvalidClampRadii { r_core: f64, r_cut: f64 },
    #[error("coupling must be non-negative and finite, got {0}")]
    InvalidCoupling(f64),
    #[error(
        "declared Lipschitz certificate {declared} is below the sampled derivative bound {sampled}"
    )]
    CertificateBelowSampled { declared: f64, sampled: f64 },
}

/// Shape of the nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `gamma = 0`, `V = 0`.
    Zero,
    /// `gamma(u) = c u`, `V(u) = c u^2 / 2`.
    Linear { slope: f64 },
    /// `gamma(u) = eps * psi(u) * (u^3 - u)` with the smoothstep clamp.
    ClampedDoubleWell { epsilon: f64, r_core: f64, r_cut: f64 },
    /// `gamma(u) = sum c_k u^k`, unclamped. Intended for experiments and
    /// oracles; its Lipschitz bound is only valid on the stated range.
    Polynomial { gamma_coeffs: Vec<f64>, range: f64 },
}

#[derive(Debug, Clone)]
struct ClampPieces {
    epsilon: f64,
    r_core: f64,
    r_cut: f64,
    inv_band: f64,
    /// Antiderivative of the band polynomial, pinned so the value at
    /// `r_core` continues the core closed form.
    v_band: Vec<f64>,
    v_cut: f64,
}

/// A potential with certified derivative (Lipschitz) and lower bounds.
#[derive(Debug, Clone)]
pub struct Potential {
    kind: PotentialKind,
    lipschitz_bound: f64,
    sampled_lipschitz: f64,
    lower_bound: f64,
    clamp: Option<ClampPieces>,
}

const DERIVATIVE_SAMPLES: usize = 200_001;

impl Potential {
    pub fn zero() -> Self {
        Self {
            kind: PotentialKind::Zero,
            lipschitz_bound: 0.0,
            sampled_lipschitz: 0.0,
            lower_bound: 0.0,
            clamp: None,
        }
    }

    pub fn linear(slope: f64) -> Self {
        Self {
            kind: PotentialKind::Linear { slope },
            lipschitz_bound: slope.abs(),
            sampled_lipschitz: slope.abs(),
            lower_bound: if slope >= 0.0 { 0.0 } else { f64::NEG_INFINITY },
            clamp: None,
        }
    }

    pub fn clamped_double_well(epsilon: f64, r_core: f64, r_cut: f64) -> Result<Self, PotentialError> {
        if epsilon.is_nan() || epsilon < 0.0 || !epsilon.is_finite() {
            return Err(PotentialError::InvalidCoupling(epsilon));
        }
        if !r_core.is_finite() || !r_cut.is_finite() || r_core <= 0.0 || r_cut <= r_core {
            return Err(PotentialError::InvalidClampRadii { r_core, r_cut });
        }
        let h = r_cut - r_core;
        // Band polynomial: eps * (1 - sigma((s - r_core)/h)) * (s^3 - s)
        // as monomial coefficients in s, then its exact antiderivative.
        let sigma_t = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
        let sigma_s = poly_affine_arg(&sigma_t, r_core, h);
        let mut psi_s = sigma_s.iter().map(|c| -c).collect::<Vec<f64>>();
        psi_s[0] += 1.0;
        let cubic = [0.0, -epsilon, 0.0, epsilon];
        let band = poly_mul(&psi_s, &cubic);
        let v_core_end = epsilon * (r_core.powi(4) / 4.0 - r_core * r_core / 2.0);
        let v_band = poly_antiderivative(&band, r_core, v_core_end);
        let v_cut = poly_eval(&v_band, r_cut);
        let mut pot = Self {
            kind: PotentialKind::ClampedDoubleWell { epsilon, r_core, r_cut },
            lipschitz_bound: 0.0,
            sampled_lipschitz: 0.0,
            lower_bound: 0.0,
            clamp: Some(ClampPieces {
                epsilon,
                r_core,
                r_cut,
                inv_band: 1.0 / h,
                v_band,
                v_cut,
            }),
        };
        let sampled = pot.sample_derivative_bound(0.0, r_cut);
        pot.sampled_lipschitz = sampled;
        pot.lipschitz_bound = sampled;
        pot.lower_bound = if r_core >= 1.0 {
            // Wells sit at u = +-1 inside the core and V is nondecreasing
            // in |u| past them, so the infimum is the closed-form well depth.
            -epsilon / 4.0
        } else {
            pot.sample_lower_bound(0.0, r_cut)
        };
        Ok(pot)
    }

    /// Unclamped polynomial `gamma`; bounds are sampled on `[-range, range]`
    /// and `V` is taken as unbounded below.
    pub fn polynomial(gamma_coeffs: &[f64], range: f64) -> Self {
        let mut pot = Self {
            kind: PotentialKind::Polynomial {
                gamma_coeffs: gamma_coeffs.to_vec(),
                range,
            },
            lipschitz_bound: 0.0,
            sampled_lipschitz: 0.0,
            lower_bound: f64::NEG_INFINITY,
            clamp: None,
        };
        let sampled = pot.sample_derivative_bound(-range, range);
        pot.sampled_lipschitz = sampled;
        pot.lipschitz_bound = sampled;
        pot
    }

    /// Replace the Lipschitz bound by a declared certificate. Any upper
    /// bound is a valid certificate; values below the sampled derivative
    /// bound are rejected.
    pub fn with_lipschitz_certificate(mut self, declared: f64) -> Result<Self, PotentialError> {
        if declared < self.sampled_lipschitz {
            return Err(PotentialError::CertificateBelowSampled {
                declared,
                sampled: self.sampled_lipschitz,
            });
        }
        self.lipschitz_bound = declared;
        Ok(self)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    /// Certified Lipschitz constant of `gamma`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// Dense-sampled maximum of `|gamma'|` before any declared certificate.
    pub fn sampled_lipschitz(&self) -> f64 {
        self.sampled_lipschitz
    }

    /// Certified infimum of `V` (may be `-inf` when `V` is unbounded below).
    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn gamma_is_zero(&self) -> bool {
        matches!(self.kind, PotentialKind::Zero)
    }

    pub fn v_is_zero(&self) -> bool {
        matches!(self.kind, PotentialKind::Zero)
    }

    /// `gamma(u) = V'(u)`.
    pub fn gamma(&self, u: f64) -> f64 {
        match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Linear { slope } => slope * u,
            PotentialKind::ClampedDoubleWell { .. } => {
                let c = self.clamp.as_ref().expect("clamp pieces present");
                let s = u.abs();
                if s >= c.r_cut {
                    0.0
                } else if s <= c.r_core {
                    c.epsilon * (u * u * u - u)
                } else {
                    let t = (s - c.r_core) * c.inv_band;
                    c.epsilon * (1.0 - smoothstep(t)) * (u * u * u - u)
                }
            }
            PotentialKind::Polynomial { gamma_coeffs, .. } => poly_eval(gamma_coeffs, u),
        }
    }

    /// `gamma'(u)`, used for the sampled derivative bound.
    pub fn gamma_prime(&self, u: f64) -> f64 {
        match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Linear { slope } => *slope,
            PotentialKind::ClampedDoubleWell { .. } => {
                let c = self.clamp.as_ref().expect("clamp pieces present");
                let s = u.abs();
                if s >= c.r_cut {
                    0.0
                } else if s <= c.r_core {
                    c.epsilon * (3.0 * u * u - 1.0)
                } else {
                    let t = (s - c.r_core) * c.inv_band;
                    let psi = 1.0 - smoothstep(t);
                    let dpsi = -smoothstep_prime(t) * c.inv_band * u.signum();
                    c.epsilon * (dpsi * (u * u * u - u) + psi * (3.0 * u * u - 1.0))
                }
            }
            PotentialKind::Polynomial { gamma_coeffs, .. } => {
                let mut acc = 0.0;
                for (k, ck) in gamma_coeffs.iter().enumerate().skip(1) {
                    acc += k as f64 * ck * u.powi(k as i32 - 1);
                }
                acc
            }
        }
    }

    /// `V(u) = integral of gamma from 0 to u`, evaluated from cached
    /// polynomial pieces (exact up to rounding).
    pub fn v(&self, u: f64) -> f64 {
        match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Linear { slope } => 0.5 * slope * u * u,
            PotentialKind::ClampedDoubleWell { .. } => {
                let c = self.clamp.as_ref().expect("clamp pieces present");
                let s = u.abs();
                if s <= c.r_core {
                    c.epsilon * (s * s * s * s / 4.0 - s * s / 2.0)
                } else if s < c.r_cut {
                    poly_eval(&c.v_band, s)
                } else {
                    c.v_cut
                }
            }
            PotentialKind::Polynomial { gamma_coeffs, .. } => {
                let mut acc = 0.0;
                for (k, ck) in gamma_coeffs.iter().enumerate() {
                    acc += ck * u.powi(k as i32 + 1) / (k as f64 + 1.0);
                }
                acc
            }
        }
    }

    fn sample_derivative_bound(&self, lo: f64, hi: f64) -> f64 {
        let mut max = 0.0_f64;
        let step = (hi - lo) / (DERIVATIVE_SAMPLES - 1) as f64;
        for i in 0..DERIVATIVE_SAMPLES {
            let u = lo + i as f64 * step;
            max = max.max(self.gamma_prime(u).abs());
        }
        // Headroom for the sampling resolution.
        max * (1.0 + 1e-6) + 1e-12
    }

    fn sample_lower_bound(&self, lo: f64, hi: f64) -> f64 {
        let mut min = 0.0_f64;
        let step = (hi - lo) / (DERIVATIVE_SAMPLES - 1) as f64;
        for i in 0..DERIVATIVE_SAMPLES {
            let u = lo + i as f64 * step;
            min = min.min(self.v(u));
        }
        min - 1e-9 * (1.0 + min.abs())
    }
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

#[inline]
fn smoothstep_prime(t: f64) -> f64 {
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Coefficients in `s` of `p((s - a) / h)`.
fn poly_affine_arg(p: &[f64], a: f64, h: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    // ((s - a)/h)^k expanded binomially.
    for (k, pk) in p.iter().enumerate() {
        if *pk == 0.0 {
            continue;
        }
        let scale = pk / h.powi(k as i32);
        let mut binom = 1.0_f64;
        for (i, o) in out.iter_mut().enumerate().take(k + 1) {
            // C(k, i) * s^i * (-a)^(k-i)
            *o += scale * binom * (-a).powi((k - i) as i32);
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
    }
    out
}

/// Antiderivative `P` of `p` with `P(x0) = value`.
fn poly_antiderivative(p: &[f64], x0: f64, value: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    for (k, pk) in p.iter().enumerate() {
        out[k + 1] = pk / (k + 1) as f64;
    }
    let at_x0 = poly_eval(&out, x0);
    out[0] = value - at_x0;
    out
}
