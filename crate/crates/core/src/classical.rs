//! Non-Bayesian comparison estimators: raw, inverse-variance weighted and
//! trimmed-weight means, and the matching unweighted / weighted / trimmed
//! linear regressions.
//!
//! Normal-theory intervals use `point +- 1.96 se`. Trimmed estimators use
//! percentile intervals from a nonparametric bootstrap over sources, with the
//! trimmed weights re-derived inside every resample.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{design_matrix, weighted_least_squares};
use crate::rng;
use crate::stats::{interval, mean, sample_sd, Z_975};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Raw,
    Weighted,
    Trimmed,
    Lr,
    Wlr,
    Twlr,
    Ubm,
    Bbm,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::Weighted => "weighted",
            Method::Trimmed => "trimmed",
            Method::Lr => "lr",
            Method::Wlr => "wlr",
            Method::Twlr => "twlr",
            Method::Ubm => "ubm",
            Method::Bbm => "bbm",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Method::Raw,
            Method::Weighted,
            Method::Trimmed,
            Method::Lr,
            Method::Wlr,
            Method::Twlr,
            Method::Ubm,
            Method::Bbm,
        ];
        all.into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A point estimate with its 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: Method,
    pub se: Option<f64>,
}

impl Estimate {
    fn normal(point: f64, se: f64, method: Method) -> Self {
        Self {
            point,
            ci_low: point - Z_975 * se,
            ci_high: point + Z_975 * se,
            method,
            se: Some(se),
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }
}

/// Raw weights and their normalized counterparts `lambda_i = w_i / sum w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub standardized: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        let standardized = weights.iter().map(|w| w / total).collect();
        Self { weights, standardized }
    }
}

/// Bootstrap and trimming settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimOptions {
    /// Weights are capped at `trim_factor` times the mean untrimmed weight.
    pub trim_factor: f64,
    pub bootstrap_b: usize,
    pub seed: u64,
}

impl Default for TrimOptions {
    fn default() -> Self {
        Self {
            trim_factor: 3.0,
            bootstrap_b: 1000,
            seed: rng::DEFAULT_SEED,
        }
    }
}

impl TrimOptions {
    fn check(&self) -> Result<()> {
        if self.bootstrap_b < 100 {
            return Err(Error::InvalidConfig(format!(
                "bootstrap_b must be >= 100, got {}",
                self.bootstrap_b
            )));
        }
        if !(self.trim_factor > 0.0) {
            return Err(Error::InvalidConfig("trim_factor must be > 0".into()));
        }
        Ok(())
    }
}

pub fn inverse_variance_weights(s: &[f64]) -> Vec<f64> {
    s.iter().map(|s| 1.0 / (s * s)).collect()
}

/// Single-pass trimming: `w_i = min(1/s_i^2, factor * mean(1/s^2))`.
pub fn trimmed_weights(s: &[f64], trim_factor: f64) -> Vec<f64> {
    let w = inverse_variance_weights(s);
    let cap = trim_factor * mean(&w);
    w.into_iter().map(|v| v.min(cap)).collect()
}

fn weighted_point(y: &[f64], w: &[f64]) -> f64 {
    let num: f64 = y.iter().zip(w).map(|(y, w)| y * w).sum();
    num / w.iter().sum::<f64>()
}

fn non_empty(dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        Err(Error::EmptyDataset)
    } else {
        Ok(())
    }
}

/// Arithmetic mean with interval `mean +- 1.96 sd(y) / sqrt(n)`.
pub fn raw_mean(dataset: &Dataset) -> Result<Estimate> {
    non_empty(dataset)?;
    let y = dataset.y();
    if y.len() < 2 {
        return Err(Error::NoVariance);
    }
    let se = sample_sd(&y) / (y.len() as f64).sqrt();
    Ok(Estimate::normal(mean(&y), se, Method::Raw))
}

/// Inverse-variance weighted mean with `se = (sum 1/s^2)^{-1/2}`.
pub fn weighted_mean(dataset: &Dataset) -> Result<(Estimate, WeightVector)> {
    non_empty(dataset)?;
    let w = inverse_variance_weights(&dataset.s());
    let point = weighted_point(&dataset.y(), &w);
    let se = w.iter().sum::<f64>().powf(-0.5);
    Ok((Estimate::normal(point, se, Method::Weighted), WeightVector::new(w)))
}

fn bootstrap_indices<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Trimmed-weight mean with a bootstrap percentile interval.
pub fn trimmed_weighted_mean(dataset: &Dataset, options: &TrimOptions) -> Result<(Estimate, WeightVector)> {
    non_empty(dataset)?;
    options.check()?;
    let y = dataset.y();
    let s = dataset.s();
    let w = trimmed_weights(&s, options.trim_factor);
    let point = weighted_point(&y, &w);

    let n = y.len();
    let reps: Vec<f64> = (0..options.bootstrap_b)
        .map(|b| {
            let mut rng = rng::stream(options.seed, &[b as u64]);
            let idx = bootstrap_indices(&mut rng, n);
            let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let sb: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
            weighted_point(&yb, &trimmed_weights(&sb, options.trim_factor))
        })
        .collect();
    let (ci_low, ci_high) = interval(&reps, 0.025, 0.975);
    let estimate = Estimate {
        point,
        ci_low,
        ci_high,
        method: Method::Trimmed,
        se: Some(sample_sd(&reps)),
    };
    Ok((estimate, WeightVector::new(w)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Unweighted,
    InverseVariance,
    Trimmed,
}

impl WeightMode {
    pub fn method(self) -> Method {
        match self {
            WeightMode::Unweighted => Method::Lr,
            WeightMode::InverseVariance => Method::Wlr,
            WeightMode::Trimmed => Method::Twlr,
        }
    }
}

/// Linear regression of `y` on the dataset's design rows.
///
/// * `Unweighted` (LR): ordinary least squares with `sigma_hat^2 (X^T X)^{-1}`
///   standard errors, `sigma_hat^2 = RSS / (n - p)`.
/// * `InverseVariance` (WLR): weights `1/s^2`, covariance `(X^T W X)^{-1}`.
/// * `Trimmed` (TWLR): trimmed weights, bootstrap percentile intervals.
pub fn linear_fit(dataset: &Dataset, mode: WeightMode, options: &TrimOptions) -> Result<(Vec<Estimate>, WeightVector)> {
    if !dataset.has_covariates() {
        return Err(Error::MissingCovariates);
    }
    non_empty(dataset)?;
    let rows = dataset.design_rows();
    let x = design_matrix(&rows);
    let y = dataset.y();
    let s = dataset.s();
    let (n, p) = x.shape();
    let method = mode.method();

    let w = match mode {
        WeightMode::Unweighted => vec![1.0; n],
        WeightMode::InverseVariance => inverse_variance_weights(&s),
        WeightMode::Trimmed => {
            options.check()?;
            trimmed_weights(&s, options.trim_factor)
        }
    };
    let fit = weighted_least_squares(&x, &y, &w)?;

    let estimates = match mode {
        WeightMode::Unweighted | WeightMode::InverseVariance => {
            let scale = if mode == WeightMode::Unweighted {
                if n <= p {
                    return Err(Error::NoVariance);
                }
                fit.rss / (n - p) as f64
            } else {
                1.0
            };
            fit.coefficients
                .iter()
                .enumerate()
                .map(|(j, &b)| Estimate::normal(b, (scale * fit.xtwx_inv[(j, j)]).sqrt(), method))
                .collect()
        }
        WeightMode::Trimmed => {
            let mut reps: Vec<Vec<f64>> = vec![Vec::with_capacity(options.bootstrap_b); p];
            for b in 0..options.bootstrap_b {
                let mut rng = rng::stream(options.seed, &[b as u64]);
                let idx = bootstrap_indices(&mut rng, n);
                let xb = design_matrix(&idx.iter().map(|&i| rows[i]).collect::<Vec<_>>());
                let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                let sb: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
                // Resamples whose design loses rank are skipped.
                if let Ok(f) = weighted_least_squares(&xb, &yb, &trimmed_weights(&sb, options.trim_factor)) {
                    for (r, c) in reps.iter_mut().zip(f.coefficients) {
                        r.push(c);
                    }
                }
            }
            let valid = reps[0].len();
            if valid * 2 < options.bootstrap_b {
                return Err(Error::Bootstrap(format!(
                    "only {valid} of {} resamples had a full-rank design",
                    options.bootstrap_b
                )));
            }
            fit.coefficients
                .iter()
                .zip(&reps)
                .map(|(&b, r)| {
                    let (lo, hi) = interval(r, 0.025, 0.975);
                    Estimate {
                        point: b,
                        ci_low: lo,
                        ci_high: hi,
                        method,
                        se: Some(sample_sd(r)),
                    }
                })
                .collect()
        }
    };
    Ok((estimates, WeightVector::new(w)))
}
