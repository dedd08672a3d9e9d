//! Bivariate hierarchical model for a summary measure and its log standard
//! error.
//!
//! Level 1: `(y_i, log s_i) ~ N2((theta_i, log sigma_i), diag(sigma_i,
//! sigma_s_i) R(rho1) diag(sigma_i, sigma_s_i))`.
//!
//! Level 2: `(theta_i, log sigma_i) ~ N2((x_i^T beta_theta, x_i^T
//! beta_sigma), diag(r_theta, r_sigma) R(rho2) diag(r_theta, r_sigma))`.
//!
//! The sampler works on a reparameterized space. The unconstrained coordinate
//! layout is, in order:
//!
//! | block | length | meaning |
//! |-------|--------|---------|
//! | `beta_theta` | k | population mean of `theta` (k = 1) or coefficients |
//! | `beta_sigma` | k | population mean of `log sigma` or coefficients |
//! | `log r_theta`, `log r_sigma` | 2 | level-2 scales |
//! | `atanh rho1`, `atanh rho2` | 2 | correlations |
//! | `log sigma_s` | n | omitted when `sigma_s` is fixed |
//! | `u_theta` | n | standardized coordinate of `theta_i` |
//! | `w_sigma` | n | standardized coordinate of `log sigma_i` |
//!
//! Each latent is written as `m + u / sqrt(p)`, where `N(m, 1/p)` is the
//! product of its prior and the Gaussian data term for it:
//!
//! * `log sigma_i` blends the level-2 marginal `N(x_i^T beta_sigma, r_sigma^2)`
//!   with `log s_i ~ N(log sigma_i, sigma_s_i^2)`;
//! * `theta_i` blends the level-2 conditional given `log sigma_i`, with mean
//!   `x_i^T beta_theta + rho2 (r_theta / r_sigma)(log sigma_i - x_i^T
//!   beta_sigma)` and sd `r_theta sqrt(1 - rho2^2)`, with the conditional
//!   law of `y_i` given `log s_i`, whose mean is `theta_i + rho1 (sigma_i /
//!   sigma_s_i)(log s_i - log sigma_i)` and sd `sigma_i sqrt(1 - rho1^2)`.
//!
//! A coordinate behaves as non-centered when its data term is weak and as
//! centered on the data when the data term dominates.

use nalgebra::DMatrix;

use crate::classical::WeightVector;
use crate::data::{Dataset, SourceObservation};
use crate::densities::{Lkj2, HALF_LN_2PI};
use crate::error::{Error, Result};
use crate::linalg::{design_matrix, weighted_least_squares};
use crate::mcmc::{sample, FitConfig, LogDensity, PosteriorDraws, PriorConfig};
use crate::reparam::Blend;
use crate::stats;

const LN_2PI: f64 = 2.0 * HALF_LN_2PI;
const LN_2_OVER_PI: f64 = -0.451_582_705_289_454_9;

/// Constrained parameters of the bivariate model.
#[derive(Debug, Clone, PartialEq)]
pub struct BbmParams {
    /// `[mu_theta]` without covariates, otherwise the coefficient vector.
    pub beta_theta: Vec<f64>,
    pub beta_sigma: Vec<f64>,
    pub r_theta: f64,
    pub r_sigma: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub sigma_s: Vec<f64>,
    pub theta: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

fn check_scale(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidScale(v))
    }
}

fn check_corr(r: f64) -> Result<()> {
    if r.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidCorrelation(r))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BbmParams {
    pub fn check(&self, n: usize) -> Result<()> {
        check_scale(self.r_theta)?;
        check_scale(self.r_sigma)?;
        check_corr(self.rho1)?;
        check_corr(self.rho2)?;
        for &s in &self.sigma_s {
            check_scale(s)?;
        }
        if self.sigma_s.len() != n || self.theta.len() != n || self.log_sigma.len() != n {
            return Err(Error::DomainViolation(format!(
                "per-source parameter vectors must have length {n}"
            )));
        }
        if self.beta_theta.len() != self.beta_sigma.len() {
            return Err(Error::DomainViolation("beta_theta and beta_sigma differ in length".into()));
        }
        Ok(())
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.log_sigma[i].exp()
    }
}

/// Per-source precisions `xi_i`, shrinkage weights `zeta_i` and the adjusted
/// outcomes `y_tilde_i` of the conditional posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageWeights {
    pub xi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub y_tilde: Vec<f64>,
}

/// Conditional distribution of `y` given `log s` under the level-1 law.
pub fn bbm_conditional_y(obs: &SourceObservation, theta: f64, log_sigma: f64, sigma_s: f64, rho1: f64) -> Result<(f64, f64)> {
    check_corr(rho1)?;
    check_scale(sigma_s)?;
    let sigma = log_sigma.exp();
    check_scale(sigma)?;
    let mean = theta + rho1 * (sigma / sigma_s) * (obs.log_s() - log_sigma);
    Ok((mean, sigma * (1.0 - rho1 * rho1).sqrt()))
}

fn level1_correction(obs: &SourceObservation, params: &BbmParams, i: usize) -> f64 {
    let ls = params.log_sigma[i];
    params.rho1 * (ls.exp() / params.sigma_s[i]) * (obs.log_s() - ls)
}

fn level2_correction(obs: &SourceObservation, params: &BbmParams, i: usize) -> f64 {
    let xs = dot(obs.design_row(), &params.beta_sigma);
    params.rho2 * (params.r_theta / params.r_sigma) * (params.log_sigma[i] - xs)
}

pub fn shrinkage_weights(dataset: &Dataset, params: &BbmParams) -> Result<ShrinkageWeights> {
    params.check(dataset.len())?;
    let a = params.r_theta * params.r_theta * (1.0 - params.rho2 * params.rho2);
    let v1 = 1.0 - params.rho1 * params.rho1;
    let mut w = ShrinkageWeights {
        xi: Vec::with_capacity(dataset.len()),
        zeta: Vec::with_capacity(dataset.len()),
        y_tilde: Vec::with_capacity(dataset.len()),
    };
    for (i, obs) in dataset.observations().iter().enumerate() {
        let b = params.sigma(i).powi(2) * v1;
        w.xi.push(1.0 / (b + a));
        w.zeta.push(a / (a + b));
        w.y_tilde.push(obs.y - level2_correction(obs, params, i) - level1_correction(obs, params, i));
    }
    Ok(w)
}

/// Conditional posterior of `mu_theta`: `sum xi y_tilde / sum xi` with sd
/// `(sum xi)^(-1/2)`.
pub fn bbm_mu_theta_closed(dataset: &Dataset, params: &BbmParams) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let w = shrinkage_weights(dataset, params)?;
    let total: f64 = w.xi.iter().sum();
    Ok((dot(&w.xi, &w.y_tilde) / total, total.powf(-0.5)))
}

/// Conditional posterior of `beta_theta`: weighted least squares of the
/// adjusted outcomes with weights `xi`.
pub fn bbm_beta_theta_closed(dataset: &Dataset, params: &BbmParams) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let w = shrinkage_weights(dataset, params)?;
    let x = design_matrix(&dataset.design_rows());
    let fit = weighted_least_squares(&x, &w.y_tilde, &w.xi)?;
    Ok((fit.coefficients, fit.xtwx_inv))
}

/// Conditional posterior of `theta_i`.
pub fn bbm_theta_closed(obs: &SourceObservation, params: &BbmParams, i: usize) -> Result<(f64, f64)> {
    check_scale(params.r_theta)?;
    check_scale(params.r_sigma)?;
    check_corr(params.rho1)?;
    check_corr(params.rho2)?;
    check_scale(params.sigma_s[i])?;
    let sigma2 = params.sigma(i).powi(2);
    let a = params.r_theta * params.r_theta * (1.0 - params.rho2 * params.rho2);
    let b = sigma2 * (1.0 - params.rho1 * params.rho1);
    let zeta = a / (a + b);
    let direct = obs.y - level1_correction(obs, params, i);
    let synthetic = dot(obs.design_row(), &params.beta_theta) + level2_correction(obs, params, i);
    Ok((zeta * direct + (1.0 - zeta) * synthetic, (zeta * b).sqrt()))
}

/// How `sigma_s` is handled in the fit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SigmaSMode {
    /// One free `sigma_s_i` per source with a Half-Cauchy prior.
    #[default]
    Sampled,
    /// All `sigma_s_i` fixed to the sample sd of `log s`.
    Empirical,
    /// All `sigma_s_i` fixed to the given value.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BbmOptions {
    pub sigma_s: SigmaSMode,
}

/// Empirical-Bayes value for `sigma_s`: the sample sd of `log s` repeated for
/// every source.
pub fn set_sigma_s_empirical(dataset: &Dataset) -> Result<Vec<f64>> {
    if dataset.len() < 2 {
        return Err(Error::TooFewSources {
            required: 2,
            found: dataset.len(),
        });
    }
    let sd = stats::sample_sd(&dataset.log_s());
    if !(sd > 0.0) {
        return Err(Error::DegenerateUncertainty);
    }
    Ok(vec![sd; dataset.len()])
}

/// Joint log posterior of the bivariate model with its exact gradient.
pub struct BbmPosterior<'a> {
    dataset: &'a Dataset,
    rows: Vec<&'a [f64]>,
    y: Vec<f64>,
    log_s: Vec<f64>,
    fixed_sigma_s: Option<Vec<f64>>,
    priors: PriorConfig,
    k: usize,
    beta_prior: bool,
    lkj: Lkj2,
}

impl<'a> BbmPosterior<'a> {
    pub fn new(dataset: &'a Dataset, priors: &PriorConfig, options: BbmOptions) -> Result<Self> {
        priors.check()?;
        dataset.require_fit_size()?;
        let fixed_sigma_s = match options.sigma_s {
            SigmaSMode::Sampled => None,
            SigmaSMode::Empirical => Some(set_sigma_s_empirical(dataset)?),
            SigmaSMode::Fixed(v) => {
                check_scale(v)?;
                Some(vec![v; dataset.len()])
            }
        };
        Ok(Self {
            dataset,
            rows: dataset.design_rows(),
            y: dataset.y(),
            log_s: dataset.log_s(),
            fixed_sigma_s,
            priors: priors.clone(),
            k: dataset.n_coefficients(),
            beta_prior: dataset.has_covariates() || !priors.flat_mean,
            lkj: Lkj2::new(priors.lkj_eta)?,
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn u_offset(&self) -> usize {
        2 * self.k + 4
    }

    fn z1_offset(&self) -> usize {
        self.u_offset() + if self.fixed_sigma_s.is_some() { 0 } else { self.n() }
    }

    /// Maps constrained parameters to the unconstrained layout.
    pub fn unconstrain(&self, p: &BbmParams) -> Result<Vec<f64>> {
        p.check(self.n())?;
        if p.beta_theta.len() != self.k || p.beta_sigma.len() != self.k {
            return Err(Error::DomainViolation(format!("expected {} coefficients per level-2 mean", self.k)));
        }
        let mut q = Vec::with_capacity(self.dim());
        q.extend_from_slice(&p.beta_theta);
        q.extend_from_slice(&p.beta_sigma);
        q.extend([p.r_theta.ln(), p.r_sigma.ln(), p.rho1.atanh(), p.rho2.atanh()]);
        if self.fixed_sigma_s.is_none() {
            q.extend(p.sigma_s.iter().map(|s| s.ln()));
        }
        let mut u = Vec::with_capacity(self.n());
        let mut w = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            let (bl, bt) = self.blends(i, p, p.log_sigma[i]);
            w.push(bl.coordinate(p.log_sigma[i]));
            u.push(bt.coordinate(p.theta[i]));
        }
        q.extend(u);
        q.extend(w);
        Ok(q)
    }

    /// Blends for `log sigma_i` and, given its value `ell`, for `theta_i`.
    /// Only the population-level fields and `sigma_s` of `p` are read.
    fn blends(&self, i: usize, p: &BbmParams, ell: f64) -> (Blend, Blend) {
        let row = self.rows[i];
        let mu_s = dot(row, &p.beta_sigma);
        let mu_t = dot(row, &p.beta_theta);
        let ls = self.log_s[i];
        let ss = p.sigma_s[i];
        let bl = Blend::new(mu_s, p.r_sigma, ls, ss);
        let c_t = mu_t + p.rho2 * (p.r_theta / p.r_sigma) * (ell - mu_s);
        let v_t = p.r_theta * (1.0 - p.rho2 * p.rho2).sqrt();
        let sigma = ell.exp();
        let y_t = self.y[i] - p.rho1 * sigma / ss * (ls - ell);
        let sd1 = sigma * (1.0 - p.rho1 * p.rho1).sqrt();
        (bl, Blend::new(c_t, v_t, y_t, sd1))
    }

    /// Inverse of [`BbmPosterior::unconstrain`].
    pub fn params(&self, q: &[f64]) -> BbmParams {
        let k = self.k;
        let n = self.n();
        let bt = q[..k].to_vec();
        let bs = q[k..2 * k].to_vec();
        let r_theta = q[2 * k].exp();
        let r_sigma = q[2 * k + 1].exp();
        let rho1 = q[2 * k + 2].tanh();
        let rho2 = q[2 * k + 3].tanh();
        let sigma_s = match &self.fixed_sigma_s {
            Some(v) => v.clone(),
            None => q[self.u_offset()..self.u_offset() + n].iter().map(|u| u.exp()).collect(),
        };
        let u = &q[self.z1_offset()..self.z1_offset() + n];
        let w = &q[self.z1_offset() + n..self.z1_offset() + 2 * n];
        let mut p = BbmParams {
            beta_theta: bt,
            beta_sigma: bs,
            r_theta,
            r_sigma,
            rho1,
            rho2,
            sigma_s,
            theta: vec![0.0; n],
            log_sigma: vec![0.0; n],
        };
        for i in 0..n {
            let ell = Blend::new(dot(self.rows[i], &p.beta_sigma), r_sigma, self.log_s[i], p.sigma_s[i]).value(w[i]);
            let (_, bt) = self.blends(i, &p, ell);
            p.log_sigma[i] = ell;
            p.theta[i] = bt.value(u[i]);
        }
        p
    }

    /// Log posterior and gradient; fails with the index of the first
    /// offending coordinate when either is not finite.
    pub fn log_posterior(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        if q.len() != self.dim() {
            return Err(Error::DomainViolation(format!(
                "expected {} coordinates, got {}",
                self.dim(),
                q.len()
            )));
        }
        let mut g = vec![0.0; q.len()];
        let lp = self.log_density_grad(q, &mut g);
        if let Some(j) = q.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDensity(j));
        }
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDensity(j));
        }
        if !lp.is_finite() {
            return Err(Error::NonFiniteDensity(0));
        }
        Ok((lp, g))
    }

    fn coefficient_names(&self, which: &str) -> Vec<String> {
        if self.dataset.has_covariates() {
            (0..self.k).map(|j| format!("beta_{which}[{j}]")).collect()
        } else {
            vec![format!("mu_{which}")]
        }
    }

    /// Half-Cauchy prior on `exp(x)` plus the log-Jacobian `x`, and its
    /// derivative in `x`.
    fn log_scale_prior(x: f64, scale: f64) -> (f64, f64) {
        let t = x.exp() / scale;
        let t2 = t * t;
        (LN_2_OVER_PI - scale.ln() - t2.ln_1p() + x, 1.0 - 2.0 * t2 / (1.0 + t2))
    }
}

impl LogDensity for BbmPosterior<'_> {
    fn dim(&self) -> usize {
        self.z1_offset() + 2 * self.n()
    }

    fn log_density_grad(&self, q: &[f64], g: &mut [f64]) -> f64 {
        let k = self.k;
        let n = self.n();
        let pr = &self.priors;
        g.iter_mut().for_each(|v| *v = 0.0);

        let (ia, ib, ic, id) = (2 * k, 2 * k + 1, 2 * k + 2, 2 * k + 3);
        let uo = self.u_offset();
        let z1o = self.z1_offset();
        let z2o = z1o + n;

        let mut lp = 0.0;
        if self.beta_prior {
            let v = pr.beta_sd * pr.beta_sd;
            let c = -HALF_LN_2PI - pr.beta_sd.ln();
            for j in 0..2 * k {
                lp += c - 0.5 * q[j] * q[j] / v;
                g[j] -= q[j] / v;
            }
        }

        let (l, d) = Self::log_scale_prior(q[ia], pr.r_theta_scale);
        lp += l;
        g[ia] += d;
        let (l, d) = Self::log_scale_prior(q[ib], pr.r_sigma_scale);
        lp += l;
        g[ib] += d;

        let r_theta = q[ia].exp();
        let r_sigma = q[ib].exp();
        let rho1 = q[ic].tanh();
        let rho2 = q[id].tanh();
        let v1 = 1.0 - rho1 * rho1;
        let v2 = 1.0 - rho2 * rho2;
        if !(v1 > 0.0 && v2 > 0.0 && r_theta > 0.0 && r_sigma > 0.0 && r_theta.is_finite() && r_sigma.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let s2 = v2.sqrt();

        // rho1 ~ Uniform(-1, 1) and rho2 ~ LKJ(eta), each with the tanh Jacobian.
        lp += 0.5f64.ln() + v1.ln();
        g[ic] += -2.0 * rho1;
        lp += self.lkj.ln_pdf(rho2) + v2.ln();
        g[id] += -2.0 * pr.lkj_eta * rho2;

        let sd_ratio = v1.sqrt();
        let ratio = r_theta / r_sigma;
        let v_t = r_theta * s2;
        let mut d_rho1 = 0.0;
        let mut d_a = 0.0;
        let mut d_b = 0.0;
        let mut d_d = 0.0;
        for i in 0..n {
            let (ln_ss, ss) = match &self.fixed_sigma_s {
                Some(v) => (v[i].ln(), v[i]),
                None => {
                    let u = q[uo + i];
                    let (l, d) = Self::log_scale_prior(u, pr.sigma_s_scale);
                    lp += l;
                    g[uo + i] += d;
                    (u, u.exp())
                }
            };
            let u = q[z1o + i];
            let w = q[z2o + i];
            let row = self.rows[i];
            let ls = self.log_s[i];
            let mu_t = dot(row, &q[..k]);
            let mu_s = dot(row, &q[k..2 * k]);

            // Forward pass: log sigma first, then theta given log sigma.
            let bl = Blend::new(mu_s, r_sigma, ls, ss);
            let ell = bl.value(w);
            let sigma = ell.exp();
            let za = bl.prior_z(w);
            let zc = bl.data_z(w);
            let dl = za * r_sigma;
            let gap = zc * ss;
            let c_t = mu_t + rho2 * ratio * dl;
            let k1 = rho1 / ss;
            let y_t = self.y[i] - k1 * sigma * gap;
            let sd1 = sigma * sd_ratio;
            let bt = Blend::new(c_t, v_t, y_t, sd1);
            let zb = bt.prior_z(u);
            let zd = bt.data_z(u);

            // Level 2 as marginal(log sigma) x conditional(theta), level 1 as
            // marginal(log s) x conditional(y).
            lp += -2.0 * LN_2PI - r_sigma.ln() - v_t.ln() - ln_ss - sd1.ln()
                - 0.5 * (za * za + zb * zb + zc * zc + zd * zd)
                + bl.log_jacobian()
                + bt.log_jacobian();

            // Backward pass through the theta blend.
            let gt = bt.backward(-zb / v_t + zd / sd1, u);
            let adj_c = gt.c + zb / v_t;
            let adj_v = gt.v + (zb * zb - 1.0) / v_t;
            let adj_y = gt.d - zd / sd1;
            let adj_sd = gt.s + (zd * zd - 1.0) / sd1;

            // Backward pass through the log sigma blend.
            let d_ell = -za / r_sigma + zc / ss + adj_c * rho2 * ratio - adj_y * k1 * sigma * (gap - 1.0) + adj_sd * sd1;
            let gl = bl.backward(d_ell, w);
            let adj_mu_s = gl.c + za / r_sigma - adj_c * rho2 * ratio;
            let adj_r_sigma = gl.v + (za * za - 1.0) / r_sigma - adj_c * rho2 * ratio * dl / r_sigma;

            if self.fixed_sigma_s.is_none() {
                g[uo + i] += (gl.s + (zc * zc - 1.0) / ss + adj_y * k1 * sigma * gap / ss) * ss;
            }
            d_rho1 += -adj_y * sigma * gap / ss - adj_sd * sigma * rho1 / sd_ratio;
            for (j, x) in row.iter().enumerate() {
                g[j] += adj_c * x;
                g[k + j] += adj_mu_s * x;
            }
            d_a += adj_c * rho2 * ratio * dl + adj_v * v_t;
            d_b += adj_r_sigma * r_sigma;
            d_d += (adj_c * ratio * dl - adj_v * r_theta * rho2 / s2) * v2;
            g[z1o + i] = gt.u;
            g[z2o + i] = gl.u;
        }
        g[ia] += d_a;
        g[ib] += d_b;
        g[ic] += d_rho1 * v1;
        g[id] += d_d;
        lp
    }

    fn param_names(&self) -> Vec<String> {
        let n = self.n();
        let mut names = self.coefficient_names("theta");
        names.extend(self.coefficient_names("sigma"));
        names.extend(["r_theta", "r_sigma", "rho1", "rho2"].map(String::from));
        if self.fixed_sigma_s.is_none() {
            names.extend((1..=n).map(|i| format!("sigma_s[{i}]")));
        }
        names.extend((1..=n).map(|i| format!("theta[{i}]")));
        names.extend((1..=n).map(|i| format!("sigma[{i}]")));
        names
    }

    fn constrain(&self, q: &[f64]) -> Vec<f64> {
        let p = self.params(q);
        let mut out = p.beta_theta;
        out.extend(p.beta_sigma);
        out.extend([p.r_theta, p.r_sigma, p.rho1, p.rho2]);
        if self.fixed_sigma_s.is_none() {
            out.extend(p.sigma_s);
        }
        out.extend(p.theta);
        out.extend(p.log_sigma.iter().map(|l| l.exp()));
        out
    }

    fn fixed_values(&self) -> Vec<(String, f64)> {
        match &self.fixed_sigma_s {
            Some(v) => v.iter().enumerate().map(|(i, s)| (format!("sigma_s[{}]", i + 1), *s)).collect(),
            None => Vec::new(),
        }
    }
}

/// Log posterior and gradient at an unconstrained point of the documented
/// layout.
pub fn bbm_log_posterior(dataset: &Dataset, q: &[f64], priors: &PriorConfig, options: BbmOptions) -> Result<(f64, Vec<f64>)> {
    BbmPosterior::new(dataset, priors, options)?.log_posterior(q)
}

pub fn fit_bbm(dataset: &Dataset, config: &FitConfig) -> Result<PosteriorDraws> {
    fit_bbm_with(dataset, config, BbmOptions::default())
}

pub fn fit_bbm_with(dataset: &Dataset, config: &FitConfig, options: BbmOptions) -> Result<PosteriorDraws> {
    if dataset.len() < 3 {
        return Err(Error::TooFewSources {
            required: 3,
            found: dataset.len(),
        });
    }
    let post = BbmPosterior::new(dataset, &config.priors, options)?;
    Ok(sample(&post, config)?.with_model("bbm"))
}

/// Name of the population-level coefficient `j` for `theta` in draws.
pub fn coefficient_name(dataset: &Dataset, j: usize) -> String {
    if dataset.has_covariates() {
        format!("beta_theta[{j}]")
    } else {
        "mu_theta".to_string()
    }
}

/// Standardized weights `xi_i` evaluated at posterior means of `sigma_i^2`,
/// `r_theta^2`, `rho1` and `rho2`.
pub fn bbm_weights(dataset: &Dataset, draws: &PosteriorDraws) -> Result<WeightVector> {
    let mean_sq = |name: &str| -> Result<f64> {
        Ok(stats::mean(&draws.get(name)?.iter().map(|v| v * v).collect::<Vec<_>>()))
    };
    let rt2 = mean_sq("r_theta")?;
    let rho1 = draws.mean("rho1")?;
    let rho2 = draws.mean("rho2")?;
    let mut w = Vec::with_capacity(dataset.len());
    for i in 1..=dataset.len() {
        let s2 = mean_sq(&format!("sigma[{i}]"))?;
        w.push(1.0 / (s2 * (1.0 - rho1 * rho1) + rt2 * (1.0 - rho2 * rho2)));
    }
    Ok(WeightVector::new(w))
}
