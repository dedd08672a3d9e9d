//! Univariate hierarchical model.
//!
//! `y_i ~ N(theta_i, sigma_i^2)`, `theta_i ~ N(x_i^T beta, tau^2)`, with
//! `sigma_i` taken to be the reported `s_i`. A flat prior is placed on the
//! population mean (or `Normal(0, beta_sd)` on each regression coefficient)
//! and a Half-Cauchy prior on `tau`.

use nalgebra::DMatrix;

use crate::classical::{Estimate, Method, WeightVector};
use crate::data::{Dataset, SourceObservation};
use crate::error::{Error, Result};
use crate::linalg::{design_matrix, weighted_least_squares};
use crate::mcmc::{sample, FitConfig, LogDensity, PosteriorDraws, PriorConfig};
use crate::reparam::Blend;
use crate::stats::interval;

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidScale(tau))
    }
}

fn check_sigma(sigma: &[f64]) -> Result<()> {
    match sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        Some(&s) => Err(Error::InvalidScale(s)),
        None => Ok(()),
    }
}

fn precisions(tau: f64, sigma: &[f64]) -> Vec<f64> {
    sigma.iter().map(|s| 1.0 / (s * s + tau * tau)).collect()
}

/// Conditional posterior of the population mean given `tau` and `sigma`:
/// precision-weighted mean with weights `1 / (sigma_i^2 + tau^2)`.
pub fn ubm_mu_closed(dataset: &Dataset, tau: f64, sigma: &[f64]) -> Result<(f64, f64)> {
    check_tau(tau)?;
    check_sigma(sigma)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let w = precisions(tau, sigma);
    let total: f64 = w.iter().sum();
    let num: f64 = w.iter().zip(dataset.observations()).map(|(w, o)| w * o.y).sum();
    Ok((num / total, total.powf(-0.5)))
}

/// Conditional posterior of the regression coefficients: the generalized
/// least-squares solution and its covariance.
pub fn ubm_beta_closed(dataset: &Dataset, tau: f64, sigma: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_tau(tau)?;
    check_sigma(sigma)?;
    let x = design_matrix(&dataset.design_rows());
    let fit = weighted_least_squares(&x, &dataset.y(), &precisions(tau, sigma))?;
    Ok((fit.coefficients, fit.xtwx_inv))
}

/// Conditional posterior of one source mean: `gamma y + (1 - gamma) x^T beta`
/// with shrinkage weight `gamma = tau^2 / (tau^2 + sigma^2)`.
pub fn ubm_theta_closed(obs: &SourceObservation, beta: &[f64], tau: f64, sigma: f64) -> Result<(f64, f64)> {
    check_tau(tau)?;
    check_sigma(&[sigma])?;
    let xb: f64 = obs.design_row().iter().zip(beta).map(|(x, b)| x * b).sum();
    let gamma = shrinkage(tau, sigma);
    Ok((gamma * obs.y + (1.0 - gamma) * xb, sigma * gamma.sqrt()))
}

pub fn shrinkage(tau: f64, sigma: f64) -> f64 {
    let t2 = tau * tau;
    t2 / (t2 + sigma * sigma)
}

/// Options specific to the univariate fit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UbmOptions {
    /// Hold `tau` at this value instead of sampling it.
    pub fixed_tau: Option<f64>,
}

/// Posterior of the univariate model on the unconstrained layout `(beta, log
/// tau, u_1..u_n)`. Each `theta_i` is a blend of its prior `N(x_i^T beta,
/// tau^2)` and its data term `N(y_i; theta_i, s_i^2)`: `theta_i = m_i + u_i /
/// sqrt(p_i)` with `p_i = 1/tau^2 + 1/s_i^2`.
pub struct UbmPosterior<'a> {
    dataset: &'a Dataset,
    rows: Vec<&'a [f64]>,
    y: Vec<f64>,
    sigma: Vec<f64>,
    priors: PriorConfig,
    fixed_tau: Option<f64>,
    k: usize,
}

impl<'a> UbmPosterior<'a> {
    pub fn new(dataset: &'a Dataset, priors: &PriorConfig, options: UbmOptions) -> Result<Self> {
        if let Some(t) = options.fixed_tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidScale(t));
            }
        }
        priors.check()?;
        dataset.require_fit_size()?;
        Ok(Self {
            dataset,
            rows: dataset.design_rows(),
            y: dataset.y(),
            sigma: dataset.s(),
            priors: priors.clone(),
            fixed_tau: options.fixed_tau,
            k: dataset.n_coefficients(),
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn z_offset(&self) -> usize {
        self.k + usize::from(self.fixed_tau.is_none())
    }

    fn coefficient_names(&self) -> Vec<String> {
        if self.dataset.has_covariates() {
            (0..self.k).map(|j| format!("beta[{j}]")).collect()
        } else {
            vec!["mu".to_string()]
        }
    }
}

impl LogDensity for UbmPosterior<'_> {
    fn dim(&self) -> usize {
        self.z_offset() + self.n()
    }

    fn log_density_grad(&self, q: &[f64], g: &mut [f64]) -> f64 {
        let k = self.k;
        let zo = self.z_offset();
        g.iter_mut().for_each(|v| *v = 0.0);
        let beta = &q[..k];
        let (tau, mut lp) = match self.fixed_tau {
            Some(t) => (t, 0.0),
            None => {
                let a = q[k];
                let tau = a.exp();
                let t = tau / self.priors.tau_scale;
                let t2 = t * t;
                // Half-Cauchy on tau plus the log-Jacobian of tau = exp(a).
                g[k] += 1.0 - 2.0 * t2 / (1.0 + t2);
                (tau, a - t2.ln_1p())
            }
        };
        let use_beta_prior = self.dataset.has_covariates() || !self.priors.flat_mean;
        if use_beta_prior {
            let v = self.priors.beta_sd * self.priors.beta_sd;
            for j in 0..k {
                lp -= 0.5 * beta[j] * beta[j] / v;
                g[j] -= beta[j] / v;
            }
        }
        let mut dtau = 0.0;
        for i in 0..self.n() {
            let u = q[zo + i];
            let xb: f64 = self.rows[i].iter().zip(beta).map(|(x, b)| x * b).sum();
            let (y, s) = (self.y[i], self.sigma[i]);
            let bl = Blend::new(xb, tau, y, s);
            let zp = bl.prior_z(u);
            let e = bl.data_z(u);
            lp += -0.5 * (e * e + zp * zp) - tau.ln() + bl.log_jacobian();
            let gb = bl.backward(-zp / tau + e / s, u);
            let dxb = gb.c + zp / tau;
            for (gj, x) in g[..k].iter_mut().zip(self.rows[i]) {
                *gj += dxb * x;
            }
            dtau += gb.v + (zp * zp - 1.0) / tau;
            g[zo + i] = gb.u;
        }
        if self.fixed_tau.is_none() {
            g[k] += dtau * tau;
        }
        lp
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = self.coefficient_names();
        if self.fixed_tau.is_none() {
            names.push("tau".into());
        }
        names.extend((1..=self.n()).map(|i| format!("theta[{i}]")));
        names
    }

    fn constrain(&self, q: &[f64]) -> Vec<f64> {
        let k = self.k;
        let zo = self.z_offset();
        let tau = self.fixed_tau.unwrap_or_else(|| q[k].exp());
        let mut out = q[..k].to_vec();
        if self.fixed_tau.is_none() {
            out.push(tau);
        }
        for i in 0..self.n() {
            let xb: f64 = self.rows[i].iter().zip(&q[..k]).map(|(x, b)| x * b).sum();
            out.push(Blend::new(xb, tau, self.y[i], self.sigma[i]).value(q[zo + i]));
        }
        out
    }

    fn fixed_values(&self) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = self.fixed_tau.map(|t| ("tau".to_string(), t)).into_iter().collect();
        v.extend(self.sigma.iter().enumerate().map(|(i, s)| (format!("sigma[{}]", i + 1), *s)));
        v
    }
}

/// Samples the univariate model with `sigma_i = s_i`.
pub fn fit_ubm(dataset: &Dataset, config: &FitConfig) -> Result<PosteriorDraws> {
    fit_ubm_with(dataset, config, UbmOptions::default())
}

pub fn fit_ubm_with(dataset: &Dataset, config: &FitConfig, options: UbmOptions) -> Result<PosteriorDraws> {
    let post = UbmPosterior::new(dataset, &config.priors, options)?;
    Ok(sample(&post, config)?.with_model("ubm"))
}

/// Posterior mean with an equal-tailed 95% interval.
pub fn posterior_estimate(draws: &PosteriorDraws, name: &str, method: Method) -> Result<Estimate> {
    let xs = draws.get(name)?;
    let s = draws.summarize(name)?;
    let (lo, hi) = interval(&xs, 0.025, 0.975);
    Ok(Estimate {
        point: s.mean,
        ci_low: lo,
        ci_high: hi,
        method,
        se: Some(s.sd),
    })
}

/// Name of the population-level coefficient `j` in univariate draws.
pub fn coefficient_name(dataset: &Dataset, j: usize) -> String {
    if dataset.has_covariates() {
        format!("beta[{j}]")
    } else {
        "mu".to_string()
    }
}

/// Standardized weights `1 / (sigma_i^2 + tau^2)` at the posterior mean of
/// `tau^2`.
pub fn ubm_weights(dataset: &Dataset, draws: &PosteriorDraws) -> Result<WeightVector> {
    let tau2 = crate::stats::mean(&draws.get("tau")?.iter().map(|t| t * t).collect::<Vec<_>>());
    Ok(WeightVector::new(dataset.s().iter().map(|s| 1.0 / (s * s + tau2)).collect()))
}
