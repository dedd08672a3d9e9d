use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DEFAULT_SEED;

/// Prior hyper-parameters shared by the hierarchical models.
///
/// Scale parameters get Half-Cauchy priors; the population mean gets an
/// improper flat prior and regression coefficients get `Normal(0, beta_sd)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub tau_scale: f64,
    pub r_theta_scale: f64,
    pub r_sigma_scale: f64,
    pub sigma_s_scale: f64,
    /// LKJ shape for the level-2 correlation.
    pub lkj_eta: f64,
    /// Standard deviation of the normal prior on regression coefficients.
    pub beta_sd: f64,
    /// Flat prior on the population means of covariate-free models. When
    /// false the `Normal(0, beta_sd)` prior is used there too.
    pub flat_mean: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            tau_scale: 2.5,
            r_theta_scale: 2.5,
            r_sigma_scale: 2.5,
            sigma_s_scale: 2.5,
            lkj_eta: 4.0,
            beta_sd: 1e6,
            flat_mean: true,
        }
    }
}

impl PriorConfig {
    /// Overrides one named prior setting (`tau_scale`, `r_theta_scale`,
    /// `r_sigma_scale`, `sigma_s_scale`, `lkj_eta`, `beta_sd`).
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidConfig(format!("prior `{name}` must be finite and > 0")));
        }
        let slot = match name {
            "tau_scale" => &mut self.tau_scale,
            "r_theta_scale" => &mut self.r_theta_scale,
            "r_sigma_scale" => &mut self.r_sigma_scale,
            "sigma_s_scale" => &mut self.sigma_s_scale,
            "lkj_eta" => &mut self.lkj_eta,
            "beta_sd" => &mut self.beta_sd,
            other => return Err(Error::InvalidConfig(format!("unknown prior `{other}`"))),
        };
        *slot = value;
        Ok(())
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("tau_scale", self.tau_scale),
            ("r_theta_scale", self.r_theta_scale),
            ("r_sigma_scale", self.r_sigma_scale),
            ("sigma_s_scale", self.sigma_s_scale),
            ("lkj_eta", self.lkj_eta),
            ("beta_sd", self.beta_sd),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("prior `{name}` must be finite and > 0")));
            }
        }
        Ok(())
    }
}

/// Sampler settings. `iterations` counts warm-up iterations too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub priors: PriorConfig,
}

impl Default for FitConfig {
    /// Three chains of 5000 iterations, 2000 warm-up, thinning 10: 900
    /// retained draws per parameter.
    fn default() -> Self {
        Self {
            chains: 3,
            iterations: 5000,
            warmup: 2000,
            thin: 10,
            seed: DEFAULT_SEED,
            target_accept: 0.8,
            max_tree_depth: 10,
            priors: PriorConfig::default(),
        }
    }
}

impl FitConfig {
    /// Desk-scale profile: 2 chains x 1500 iterations, 500 warm-up, no thinning.
    pub fn fast() -> Self {
        Self {
            chains: 2,
            iterations: 1500,
            warmup: 500,
            thin: 1,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn retained_per_chain(&self) -> usize {
        self.iterations.saturating_sub(self.warmup) / self.thin.max(1)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.chains == 0 {
            return bad("chains must be >= 1".into());
        }
        if self.thin == 0 {
            return bad("thin must be >= 1".into());
        }
        if self.warmup >= self.iterations {
            return bad(format!("warmup ({}) must be < iterations ({})", self.warmup, self.iterations));
        }
        if self.retained_per_chain() < 30 {
            return bad(format!(
                "only {} retained draws per chain; at least 30 required",
                self.retained_per_chain()
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)".into());
        }
        if self.max_tree_depth == 0 {
            return bad("max_tree_depth must be >= 1".into());
        }
        self.priors.check()
    }
}
