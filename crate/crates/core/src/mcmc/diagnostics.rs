//! Convergence diagnostics: split R-hat and effective sample size.

use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Classic (non rank-normalized) split R-hat.
///
/// Each chain is split in half, giving `2M` sequences of length `m`. With `W`
/// the mean within-sequence variance and `B` equal to `m` times the variance of
/// the sequence means,
/// `R = sqrt(((m - 1) / m * W + B / m) / W)`.
pub fn rhat(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InsufficientDraws("R-hat needs at least two chains".into()));
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::InsufficientDraws("R-hat needs at least four draws per chain".into()));
    }
    let half = n / 2;
    let mut splits: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        // An odd middle draw is dropped so both halves have equal length.
        splits.push(&c[..half]);
        splits.push(&c[n - half..n]);
    }
    let m = half as f64;
    let means: Vec<f64> = splits.iter().map(|s| mean(s)).collect();
    let w = splits.iter().map(|s| var(s)).sum::<f64>() / splits.len() as f64;
    let b = m * var(&means);
    let var_plus = (m - 1.0) / m * w + b / m;
    Ok((var_plus / w).sqrt())
}

/// Biased autocovariance at `lag` (divisor `n`).
fn autocov(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size with Geyer's initial positive sequence
/// truncation and monotone smoothing. The result is capped at `1.5 N` for `N`
/// total draws.
pub fn ess(chains: &[&[f64]]) -> Result<f64> {
    if chains.is_empty() {
        return Err(Error::InsufficientDraws("ESS needs at least one chain".into()));
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 8 {
        return Err(Error::InsufficientDraws("ESS needs at least eight draws per chain".into()));
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let m = chains.len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, lag))
            .sum::<f64>()
            / m as f64
    };
    let mean_var = acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += var(&means);
    }
    if !(var_plus > 0.0) || !var_plus.is_finite() {
        return Ok(f64::NAN);
    }
    let rho = |lag: usize| 1.0 - (mean_var - acov(lag)) / var_plus;

    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = rho(1);
    rho_hat[1] = rho_odd;
    let mut t = 1usize;
    while t + 5 < n && rho_even + rho_odd > 0.0 {
        rho_even = rho(t + 1);
        rho_odd = rho(t + 2);
        if rho_even + rho_odd >= 0.0 {
            rho_hat[t + 1] = rho_even;
            rho_hat[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho_even > 0.0 && max_t + 1 < n {
        rho_hat[max_t + 1] = rho_even;
    }
    let mut t = 1usize;
    while t + 2 <= max_t {
        let next = rho_hat[t + 1] + rho_hat[t + 2];
        let prev = rho_hat[t - 1] + rho_hat[t];
        if next > prev {
            rho_hat[t + 1] = prev / 2.0;
            rho_hat[t + 2] = prev / 2.0;
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tail = if max_t + 1 < n { rho_hat[max_t + 1] } else { 0.0 };
    let tau = -1.0 + 2.0 * rho_hat[..=max_t.min(n - 1)].iter().sum::<f64>() + tail;
    let tau = tau.max(1.0 / 1.5);
    Ok(total / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identical_chains_give_sub_unit_rhat() {
        // Period-4 sequence: both halves of each chain share the same mean.
        let base: Vec<f64> = (0..40).map(|i| [0.0, 1.0, -1.0, 0.5][i % 4]).collect();
        let r = rhat(&[&base, &base]).unwrap();
        let m = 20.0f64;
        assert!((r - ((m - 1.0) / m).sqrt()).abs() < 1e-12);
        assert!(r < 1.0);
    }

    #[test]
    fn iid_normal_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..250).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let r = rhat(&refs).unwrap();
        let e = ess(&refs).unwrap();
        assert!((0.99..=1.02).contains(&r), "rhat {r}");
        assert!((700.0..=1300.0).contains(&e), "ess {e}");
    }

    #[test]
    fn disjoint_chains_explode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..100).map(|_| 1e-3 * rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..100).map(|_| 100.0 + 1e-3 * rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(rhat(&[&a, &b]).unwrap() > 10.0);
    }

    #[test]
    fn autocorrelated_chain_has_low_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = 0.0;
        let chain: Vec<f64> = (0..2000)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = 0.9 * x + e;
                x
            })
            .collect();
        // AR(1) with phi = 0.9 has tau = 19.
        let e = ess(&[&chain]).unwrap();
        assert!(e > 50.0 && e < 200.0, "{e}");
    }

    #[test]
    fn input_checks() {
        let a = [1.0, 2.0, 3.0];
        assert!(rhat(&[&a]).is_err());
        assert!(rhat(&[&a, &a]).is_err());
        assert!(ess(&[&a]).is_err());
    }
}
