//! Posterior predictive checks for the bivariate model.
//!
//! For each retained draw the level-1 pair `(y, log s)` is replicated with the
//! source latents held at their drawn values. The discrepancy of the observed
//! data conditions on the observed `log s`; the discrepancy of a replicate
//! conditions on its own replicated `log s`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbm::BbmParams;
use crate::data::Dataset;
use crate::densities::sample_bivariate_normal;
use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;
use crate::rng::{label_tag, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcResult {
    pub p_value: f64,
    pub t_obs: Vec<f64>,
    pub t_rep: Vec<f64>,
    pub n_draws: usize,
}

fn t_stat(y: &[f64], log_s: &[f64], p: &BbmParams) -> f64 {
    let v1 = 1.0 - p.rho1 * p.rho1;
    y.iter()
        .zip(log_s)
        .enumerate()
        .map(|(i, (&yi, &li))| {
            let ls = p.log_sigma[i];
            let sigma = ls.exp();
            let m = p.theta[i] + p.rho1 * (sigma / p.sigma_s[i]) * (li - ls);
            let r = yi - m;
            r * r / (sigma * sigma * v1)
        })
        .sum()
}

/// Sum over sources of squared standardized residuals of `y` given `log s`.
pub fn discrepancy_t(dataset: &Dataset, params: &BbmParams) -> Result<f64> {
    params.check(dataset.len())?;
    Ok(t_stat(&dataset.y(), &dataset.log_s(), params))
}

/// Reassembles the parameter vector of every retained draw.
pub fn bbm_params_from_draws(dataset: &Dataset, draws: &PosteriorDraws) -> Result<Vec<BbmParams>> {
    let n = dataset.len();
    let coef = |which: &str| -> Result<Vec<Vec<f64>>> {
        if dataset.has_covariates() {
            (0..dataset.n_coefficients())
                .map(|j| draws.get(&format!("beta_{which}[{j}]")))
                .collect()
        } else {
            Ok(vec![draws.get(&format!("mu_{which}"))?])
        }
    };
    let per_source = |prefix: &str| -> Result<Vec<Vec<f64>>> {
        (1..=n).map(|i| draws.get(&format!("{prefix}[{i}]"))).collect()
    };
    let bt = coef("theta")?;
    let bs = coef("sigma")?;
    let r_theta = draws.get("r_theta")?;
    let r_sigma = draws.get("r_sigma")?;
    let rho1 = draws.get("rho1")?;
    let rho2 = draws.get("rho2")?;
    let sigma_s = per_source("sigma_s")?;
    let theta = per_source("theta")?;
    let sigma = per_source("sigma")?;
    let column = |cols: &[Vec<f64>], k: usize| cols.iter().map(|c| c[k]).collect::<Vec<_>>();
    Ok((0..draws.total_draws())
        .map(|k| BbmParams {
            beta_theta: column(&bt, k),
            beta_sigma: column(&bs, k),
            r_theta: r_theta[k],
            r_sigma: r_sigma[k],
            rho1: rho1[k],
            rho2: rho2[k],
            sigma_s: column(&sigma_s, k),
            theta: column(&theta, k),
            log_sigma: column(&sigma, k).iter().map(|s| s.ln()).collect(),
        })
        .collect())
}

/// Posterior predictive p-value `Pr(T(rep) >= T(obs) | data)`.
///
/// Replicate `k` draws from the substream `(seed, "ppc", k)`, so the result
/// does not depend on scheduling and adding draws leaves earlier replicates
/// unchanged.
pub fn ppc_pvalue(dataset: &Dataset, draws: &PosteriorDraws, seed: u64) -> Result<PpcResult> {
    let params = bbm_params_from_draws(dataset, draws)?;
    if params.is_empty() {
        return Err(Error::InsufficientDraws("no retained draws".into()));
    }
    let y = dataset.y();
    let log_s = dataset.log_s();
    let tag = label_tag("ppc");
    let pairs: Vec<Result<(f64, f64)>> = params
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            p.check(dataset.len())?;
            let mut rng = stream(seed, &[tag, k as u64]);
            let mut y_rep = Vec::with_capacity(y.len());
            let mut ls_rep = Vec::with_capacity(y.len());
            for i in 0..y.len() {
                let [a, b] = sample_bivariate_normal(
                    &mut rng,
                    [p.theta[i], p.log_sigma[i]],
                    [p.sigma(i), p.sigma_s[i]],
                    p.rho1,
                );
                y_rep.push(a);
                ls_rep.push(b);
            }
            Ok((t_stat(&y, &log_s, p), t_stat(&y_rep, &ls_rep, p)))
        })
        .collect();
    let mut t_obs = Vec::with_capacity(params.len());
    let mut t_rep = Vec::with_capacity(params.len());
    for pr in pairs {
        let (o, r) = pr?;
        t_obs.push(o);
        t_rep.push(r);
    }
    let hits = t_obs.iter().zip(&t_rep).filter(|(o, r)| r >= o).count();
    Ok(PpcResult {
        p_value: hits as f64 / t_obs.len() as f64,
        n_draws: t_obs.len(),
        t_obs,
        t_rep,
    })
}

impl PpcResult {
    /// Per-draw `(t_obs, t_rep)` pairs as CSV.
    pub fn write_pairs_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["draw", "t_obs", "t_rep"]).map_err(err)?;
        for (k, (o, r)) in self.t_obs.iter().zip(&self.t_rep).enumerate() {
            w.write_record([(k + 1).to_string(), o.to_string(), r.to_string()]).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}
