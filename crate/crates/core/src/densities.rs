//! Distribution primitives for the hierarchical models.
//!
//! The checked functions (`*_logpdf`) validate their parameters and return an
//! [`Error`]. The `ln_*` variants used inside the sampler skip validation and
//! return `-inf` at or beyond domain boundaries so that a trajectory is
//! rejected rather than aborted.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};

/// `0.5 * ln(2 pi)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const LN_2PI: f64 = 2.0 * HALF_LN_2PI;
const LN_2_OVER_PI: f64 = -0.451_582_705_289_454_9;

fn check_scale(sd: f64) -> Result<()> {
    if sd.is_finite() && sd > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidScale(sd))
    }
}

fn check_corr(rho: f64) -> Result<()> {
    if rho.is_finite() && rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidCorrelation(rho))
    }
}

#[inline]
pub fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
    if !(sd > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * z * z
}

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> Result<f64> {
    check_scale(sd)?;
    Ok(ln_normal(x, mean, sd))
}

#[inline]
pub fn ln_bivariate_normal(v: [f64; 2], mean: [f64; 2], sds: [f64; 2], rho: f64) -> f64 {
    if !(sds[0] > 0.0 && sds[1] > 0.0 && rho.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    let e1 = (v[0] - mean[0]) / sds[0];
    let e2 = (v[1] - mean[1]) / sds[1];
    let one_m = 1.0 - rho * rho;
    let q = e1 * e1 - 2.0 * rho * e1 * e2 + e2 * e2;
    -LN_2PI - sds[0].ln() - sds[1].ln() - 0.5 * one_m.ln() - 0.5 * q / one_m
}

pub fn bivariate_normal_logpdf(v: [f64; 2], mean: [f64; 2], sds: [f64; 2], rho: f64) -> Result<f64> {
    check_scale(sds[0])?;
    check_scale(sds[1])?;
    check_corr(rho)?;
    Ok(ln_bivariate_normal(v, mean, sds, rho))
}

#[inline]
pub fn ln_half_cauchy(x: f64, scale: f64) -> f64 {
    if x < 0.0 || !(scale > 0.0) {
        return f64::NEG_INFINITY;
    }
    let t = x / scale;
    LN_2_OVER_PI - scale.ln() - (t * t).ln_1p()
}

/// Half-Cauchy density `2 / (pi * scale * (1 + (x/scale)^2))` on `[0, inf)`.
pub fn half_cauchy_logpdf(x: f64, scale: f64) -> Result<f64> {
    check_scale(scale)?;
    if x < 0.0 || x.is_nan() {
        return Err(Error::NegativeArgument(x));
    }
    Ok(ln_half_cauchy(x, scale))
}

/// Cholesky factor of a 2x2 correlation matrix,
/// `L = [[1, 0], [rho, sqrt(1 - rho^2)]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CholeskyCorr2 {
    rho: f64,
}

impl CholeskyCorr2 {
    pub fn new(rho: f64) -> Result<Self> {
        check_corr(rho)?;
        Ok(Self { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn factor(&self) -> [[f64; 2]; 2] {
        [[1.0, 0.0], [self.rho, (1.0 - self.rho * self.rho).sqrt()]]
    }

    /// `L L^T`.
    pub fn correlation(&self) -> [[f64; 2]; 2] {
        let l = self.factor();
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = l[i][0] * l[j][0] + l[i][1] * l[j][1];
            }
        }
        out
    }
}

/// Log normalizing constant of the 2x2 LKJ density expressed over `rho`:
/// `-(2 eta - 1) ln 2 - ln B(eta, eta)`.
fn lkj2_log_norm(eta: f64) -> f64 {
    -(2.0 * eta - 1.0) * std::f64::consts::LN_2 - ln_beta(eta, eta)
}

#[inline]
pub fn ln_lkj_corr2(rho: f64, eta: f64) -> f64 {
    if !(rho.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    (eta - 1.0) * (1.0 - rho * rho).ln() + lkj2_log_norm(eta)
}

/// LKJ(eta) density of a 2x2 correlation Cholesky factor, written as a density
/// over the free entry `rho`. The implied law of `(rho + 1) / 2` is
/// Beta(eta, eta).
pub fn lkj_cholesky_logpdf(chol: &CholeskyCorr2, eta: f64) -> Result<f64> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidShape(eta));
    }
    check_corr(chol.rho)?;
    Ok(ln_lkj_corr2(chol.rho, eta))
}

/// Precomputed LKJ normalizer for repeated evaluation inside the sampler.
#[derive(Debug, Clone, Copy)]
pub struct Lkj2 {
    eta: f64,
    log_norm: f64,
}

impl Lkj2 {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidShape(eta));
        }
        Ok(Self {
            eta,
            log_norm: lkj2_log_norm(eta),
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    #[inline]
    pub fn ln_pdf(&self, rho: f64) -> f64 {
        if !(rho.abs() < 1.0) {
            return f64::NEG_INFINITY;
        }
        (self.eta - 1.0) * (1.0 - rho * rho).ln() + self.log_norm
    }
}

/// Constrained-to-unconstrained map for a single parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamTransform {
    /// Unbounded real.
    Identity,
    /// `(0, inf)` via `x = exp(z)`.
    LogPositive,
    /// `(-1, 1)` via `x = tanh(z)`.
    TanhInterval,
}

impl ParamTransform {
    pub fn to_unconstrained(self, x: f64) -> Result<f64> {
        match self {
            Self::Identity if x.is_finite() => Ok(x),
            Self::LogPositive if x.is_finite() && x > 0.0 => Ok(x.ln()),
            Self::TanhInterval if x.is_finite() && x.abs() < 1.0 => Ok(x.atanh()),
            _ => Err(Error::DomainViolation(format!("{x} outside the {self:?} domain"))),
        }
    }

    #[inline]
    pub fn to_constrained(self, z: f64) -> f64 {
        match self {
            Self::Identity => z,
            Self::LogPositive => z.exp(),
            Self::TanhInterval => z.tanh(),
        }
    }

    /// `ln |d x / d z|` for the inverse map.
    #[inline]
    pub fn log_jacobian(self, z: f64) -> f64 {
        match self {
            Self::Identity => 0.0,
            Self::LogPositive => z,
            Self::TanhInterval => ln_sech2(z),
        }
    }

    /// Derivative of [`Self::log_jacobian`] with respect to `z`.
    #[inline]
    pub fn log_jacobian_grad(self, z: f64) -> f64 {
        match self {
            Self::Identity => 0.0,
            Self::LogPositive => 1.0,
            Self::TanhInterval => -2.0 * z.tanh(),
        }
    }
}

/// `ln(1 - tanh(z)^2)` without cancellation for large `|z|`.
#[inline]
pub fn ln_sech2(z: f64) -> f64 {
    let a = z.abs();
    2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p())
}

pub fn to_unconstrained(kinds: &[ParamTransform], values: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(kinds.len(), values.len());
    kinds.iter().zip(values).map(|(k, &v)| k.to_unconstrained(v)).collect()
}

pub fn to_constrained(kinds: &[ParamTransform], z: &[f64]) -> Vec<f64> {
    assert_eq!(kinds.len(), z.len());
    kinds.iter().zip(z).map(|(k, &v)| k.to_constrained(v)).collect()
}

/// Summed log Jacobian of the inverse (unconstrained-to-constrained) map.
pub fn log_jacobian(kinds: &[ParamTransform], z: &[f64]) -> f64 {
    kinds.iter().zip(z).map(|(k, &v)| k.log_jacobian(v)).sum()
}

/// Draws from a bivariate normal with the given standard deviations and
/// correlation.
pub fn sample_bivariate_normal<R: Rng + ?Sized>(rng: &mut R, mean: [f64; 2], sds: [f64; 2], rho: f64) -> [f64; 2] {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let w2 = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
    [mean[0] + sds[0] * z1, mean[1] + sds[1] * w2]
}
