#![allow(dead_code)]

use hbcombine::bbm::BbmParams;
use hbcombine::data::{Dataset, SourceObservation};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    hbcombine::rng::stream(seed, &[])
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random dataset with `k - 1` covariates plus an intercept (`k = 1` gives a
/// covariate-free dataset).
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Dataset {
    let obs = (0..n)
        .map(|i| {
            let o = SourceObservation::new(
                format!("src{i}"),
                3.0 * normal(rng) + 1.0,
                (0.8 * normal(rng)).exp(),
            );
            if k > 1 {
                let mut x = vec![1.0];
                x.extend((1..k).map(|_| normal(rng)));
                o.with_covariates(x)
            } else {
                o
            }
        })
        .collect();
    Dataset::new(obs).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, n: usize, k: usize, rho1: Option<f64>, rho2: Option<f64>) -> BbmParams {
    let mut corr = |fixed: Option<f64>| fixed.unwrap_or_else(|| rng.random_range(-0.95..0.95));
    let rho1 = corr(rho1);
    let rho2 = corr(rho2);
    BbmParams {
        beta_theta: (0..k).map(|_| 2.0 * normal(rng)).collect(),
        beta_sigma: (0..k).map(|_| 0.5 * normal(rng)).collect(),
        r_theta: rng.random_range(0.1..4.0),
        r_sigma: rng.random_range(0.1..2.0),
        rho1,
        rho2,
        sigma_s: (0..n).map(|_| rng.random_range(0.1..2.0)).collect(),
        theta: (0..n).map(|_| 2.0 * normal(rng)).collect(),
        log_sigma: (0..n).map(|_| 0.7 * normal(rng)).collect(),
    }
}

/// Two-sided Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
