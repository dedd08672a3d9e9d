//! No-U-Turn Hamiltonian Monte Carlo with warm-up adaptation, convergence
//! diagnostics and draw persistence.

mod adapt;
pub mod config;
pub mod diagnostics;
pub mod draws;
pub mod hamiltonian;
mod nuts;
mod sampler;

pub use config::{FitConfig, PriorConfig};
pub use diagnostics::{ess, rhat};
pub use draws::{ChainStats, ParamSummary, PosteriorDraws};
pub use hamiltonian::leapfrog;
pub use sampler::sample;

/// Target density on an unconstrained space, with its gradient.
///
/// Implementations return the log density up to an additive constant and
/// write the gradient into `grad`. A non-finite return value marks the point
/// as outside the support; the sampler treats it as a divergence.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density_grad(&self, position: &[f64], grad: &mut [f64]) -> f64;

    /// Names of the constrained quantities produced by [`LogDensity::constrain`].
    fn param_names(&self) -> Vec<String>;

    /// Maps an unconstrained position to the reported constrained quantities.
    fn constrain(&self, position: &[f64]) -> Vec<f64>;

    /// Quantities held fixed during sampling, reported alongside the draws.
    fn fixed_values(&self) -> Vec<(String, f64)> {
        Vec::new()
    }
}
