//! Multi-chain driver: initialization, warm-up adaptation and retention.

use rand::Rng;
use rayon::prelude::*;

use super::adapt::{DualAveraging, WindowedVariance};
use super::config::FitConfig;
use super::draws::{ChainStats, PosteriorDraws};
use super::hamiltonian::PhasePoint;
use super::nuts::{sample_momentum, transition};
use super::LogDensity;
use crate::error::{Error, Result};
use crate::rng::{label_tag, stream};

const MAX_INIT_ATTEMPTS: usize = 100;
const INIT_RADIUS: f64 = 2.0;

struct ChainOutput {
    /// `[param][draw]`
    values: Vec<Vec<f64>>,
    stats: ChainStats,
    all_divergent: bool,
}

fn initialize<T: LogDensity + ?Sized, R: Rng>(target: &T, rng: &mut R) -> Result<PhasePoint> {
    let d = target.dim();
    for _ in 0..MAX_INIT_ATTEMPTS {
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-INIT_RADIUS..INIT_RADIUS)).collect();
        let z = PhasePoint::new(target, q);
        if z.logp.is_finite() && z.grad.iter().all(|g| g.is_finite()) {
            return Ok(z);
        }
    }
    Err(Error::InitializationFailure(MAX_INIT_ATTEMPTS))
}

/// Heuristic initial step size: doubles or halves until the one-step
/// acceptance probability crosses 0.8.
fn init_stepsize<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    rng: &mut R,
    z0: &PhasePoint,
    inv_mass: &[f64],
    mut eps: f64,
) -> Result<f64> {
    if eps == 0.0 || eps > 1e7 || !eps.is_finite() {
        return Ok(eps);
    }
    let threshold = 0.8f64.ln();
    let try_step = |rng: &mut R, eps: f64| {
        let mut z = z0.clone();
        sample_momentum(rng, inv_mass, &mut z.p);
        let h0 = z.hamiltonian(inv_mass);
        z.step(target, eps, inv_mass);
        h0 - z.hamiltonian(inv_mass)
    };
    let delta = try_step(rng, eps);
    let up = delta > threshold;
    loop {
        let delta = try_step(rng, eps);
        if up && !(delta > threshold) {
            break;
        }
        if !up && !(delta < threshold) {
            break;
        }
        eps = if up { eps * 2.0 } else { eps * 0.5 };
        if eps > 1e7 {
            return Err(Error::SamplerDiverged(
                "step size search diverged; the posterior may be improper".into(),
            ));
        }
        if eps == 0.0 {
            return Err(Error::SamplerDiverged("step size underflowed to zero".into()));
        }
    }
    Ok(eps)
}

fn run_chain<T: LogDensity + ?Sized>(target: &T, config: &FitConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = stream(config.seed, &[label_tag("chain"), chain as u64]);
    let d = target.dim();
    let mut z = initialize(target, &mut rng)?;
    let mut inv_mass = vec![1.0; d];

    let mut eps = init_stepsize(target, &mut rng, &z, &inv_mass, 1.0)?;
    let mut da = DualAveraging::new(config.target_accept);
    da.set_mu((10.0 * eps).ln());
    let mut windows = WindowedVariance::new(d, config.warmup);

    for _ in 0..config.warmup {
        let (next, info) = transition(target, &mut rng, &z, &inv_mass, eps, config.max_tree_depth);
        z = next;
        eps = da.learn(info.accept_stat);
        if windows.learn(&mut inv_mass, &z.q) {
            eps = init_stepsize(target, &mut rng, &z, &inv_mass, eps)?;
            da.set_mu((10.0 * eps).ln());
            da.restart();
        }
    }
    if config.warmup > 0 {
        eps = da.final_step_size();
    }

    let names_len = target.param_names().len();
    let retained = config.retained_per_chain();
    let mut values = vec![Vec::with_capacity(retained); names_len];
    let sampling = config.iterations - config.warmup;
    let mut divergences = 0;
    let mut accept = 0.0;
    let mut depth = 0.0;
    let mut max_hits = 0;
    for it in 0..sampling {
        let (next, info) = transition(target, &mut rng, &z, &inv_mass, eps, config.max_tree_depth);
        z = next;
        divergences += usize::from(info.divergent);
        accept += info.accept_stat;
        depth += info.depth as f64;
        max_hits += usize::from(info.depth >= config.max_tree_depth);
        if it % config.thin == config.thin - 1 && values.first().map_or(0, Vec::len) < retained {
            for (col, v) in values.iter_mut().zip(target.constrain(&z.q)) {
                col.push(v);
            }
        }
    }
    let n = sampling as f64;
    Ok(ChainOutput {
        values,
        stats: ChainStats {
            step_size: eps,
            inv_metric: inv_mass,
            divergences,
            mean_accept_stat: accept / n,
            mean_tree_depth: depth / n,
            max_depth_hits: max_hits,
        },
        all_divergent: divergences == sampling,
    })
}

/// Runs `config.chains` independent NUTS chains in parallel.
///
/// Chain `c` draws from the substream `(seed, "chain", c)`, so results do not
/// depend on thread scheduling. Every retained draw is mapped through
/// [`LogDensity::constrain`].
pub fn sample<T: LogDensity + ?Sized>(target: &T, config: &FitConfig) -> Result<PosteriorDraws> {
    config.check()?;
    if target.dim() == 0 {
        return Err(Error::InvalidConfig("target has no free parameters".into()));
    }
    let outputs: Vec<Result<ChainOutput>> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(target, config, c))
        .collect();
    let mut values = Vec::with_capacity(config.chains);
    let mut stats = Vec::with_capacity(config.chains);
    for (c, out) in outputs.into_iter().enumerate() {
        let out = out?;
        if out.all_divergent {
            return Err(Error::SamplerDiverged(format!(
                "every post-warm-up transition of chain {} diverged",
                c + 1
            )));
        }
        values.push(out.values);
        stats.push(out.stats);
    }
    Ok(PosteriorDraws::new(
        target.param_names(),
        values,
        target.fixed_values(),
        config.clone(),
        stats,
    ))
}
