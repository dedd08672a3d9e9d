//! One NUTS transition: multinomial trajectory sampling with the generalized
//! no-U-turn criterion, including the checks across merged subtrees.

use rand::Rng;
use rand_distr::StandardNormal;

use super::hamiltonian::PhasePoint;
use super::LogDensity;

const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone, Copy)]
pub(crate) struct TransitionInfo {
    pub accept_stat: f64,
    pub depth: usize,
    pub divergent: bool,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

pub(crate) fn sample_momentum<R: Rng>(rng: &mut R, inv_mass: &[f64], p: &mut [f64]) {
    for (pi, m) in p.iter_mut().zip(inv_mass) {
        let n: f64 = rng.sample(StandardNormal);
        *pi = n / m.sqrt();
    }
}

struct Tree<'a, T: ?Sized, R> {
    target: &'a T,
    rng: &'a mut R,
    inv_mass: &'a [f64],
    eps: f64,
    h0: f64,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

/// Output slots of a subtree build, mirroring the in/out arguments of the
/// recursive builder.
struct Edge {
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
}

impl Edge {
    fn zeros(d: usize) -> Self {
        Self {
            p_sharp_beg: vec![0.0; d],
            p_sharp_end: vec![0.0; d],
            p_beg: vec![0.0; d],
            p_end: vec![0.0; d],
        }
    }
}

impl<T: LogDensity + ?Sized, R: Rng> Tree<'_, T, R> {
    /// Extends the trajectory from `z` by `2^depth` steps in direction `sign`.
    /// Returns false when the subtree diverged or turned back on itself.
    #[allow(clippy::too_many_arguments)]
    fn build(
        &mut self,
        depth: usize,
        z: &mut PhasePoint,
        z_propose: &mut PhasePoint,
        edge: &mut Edge,
        rho: &mut [f64],
        sign: f64,
        log_sum_weight: &mut f64,
    ) -> bool {
        if depth == 0 {
            z.step(self.target, sign * self.eps, self.inv_mass);
            self.n_leapfrog += 1;
            let h = z.hamiltonian(self.inv_mass);
            if h - self.h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, self.h0 - h);
            self.sum_metro_prob += if self.h0 - h > 0.0 { 1.0 } else { (self.h0 - h).exp() };
            z_propose.clone_from(z);
            edge.p_sharp_beg = z.p_sharp(self.inv_mass);
            edge.p_sharp_end.clone_from(&edge.p_sharp_beg);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            edge.p_beg.clone_from(&z.p);
            edge.p_end.clone_from(&z.p);
            return !self.divergent;
        }

        let d = rho.len();
        let mut init = Edge::zeros(d);
        init.p_sharp_beg = std::mem::take(&mut edge.p_sharp_beg);
        init.p_beg = std::mem::take(&mut edge.p_beg);
        let mut rho_init = vec![0.0; d];
        let mut lsw_init = f64::NEG_INFINITY;
        let valid_init = self.build(depth - 1, z, z_propose, &mut init, &mut rho_init, sign, &mut lsw_init);
        edge.p_sharp_beg = init.p_sharp_beg;
        edge.p_beg = init.p_beg;
        if !valid_init {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut fin = Edge::zeros(d);
        fin.p_sharp_end = std::mem::take(&mut edge.p_sharp_end);
        fin.p_end = std::mem::take(&mut edge.p_end);
        let mut rho_final = vec![0.0; d];
        let mut lsw_final = f64::NEG_INFINITY;
        let valid_final =
            self.build(depth - 1, z, &mut z_propose_final, &mut fin, &mut rho_final, sign, &mut lsw_final);
        edge.p_sharp_end = fin.p_sharp_end;
        edge.p_end = fin.p_end;
        if !valid_final {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if self.rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = criterion(&edge.p_sharp_beg, &edge.p_sharp_end, &rho_subtree);
        let rho_ext = add(&rho_init, &fin.p_beg);
        persist &= criterion(&edge.p_sharp_beg, &fin.p_sharp_beg, &rho_ext);
        let rho_ext = add(&rho_final, &init.p_end);
        persist &= criterion(&init.p_sharp_end, &edge.p_sharp_end, &rho_ext);
        persist
    }
}

/// Performs one transition from `current`, returning the new state.
pub(crate) fn transition<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    rng: &mut R,
    current: &PhasePoint,
    inv_mass: &[f64],
    eps: f64,
    max_depth: usize,
) -> (PhasePoint, TransitionInfo) {
    let d = current.q.len();
    let mut z = current.clone();
    sample_momentum(rng, inv_mass, &mut z.p);

    let mut z_fwd = z.clone();
    let mut z_bck = z.clone();
    let mut z_sample = z.clone();
    let mut z_propose = z.clone();

    let p_sharp = z.p_sharp(inv_mass);
    let mut p_fwd_fwd = z.p.clone();
    let mut p_sharp_fwd_fwd = p_sharp.clone();
    let mut p_fwd_bck = z.p.clone();
    let mut p_sharp_fwd_bck = p_sharp.clone();
    let mut p_bck_fwd = z.p.clone();
    let mut p_sharp_bck_fwd = p_sharp.clone();
    let mut p_bck_bck = z.p.clone();
    let mut p_sharp_bck_bck = p_sharp;

    let mut rho = z.p.clone();
    let mut log_sum_weight = 0.0;
    let h0 = z.hamiltonian(inv_mass);

    let mut tree = Tree {
        target,
        rng,
        inv_mass,
        eps,
        h0,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };
    let mut depth = 0;

    while depth < max_depth {
        let mut rho_fwd = vec![0.0; d];
        let mut rho_bck = vec![0.0; d];
        let mut lsw_subtree = f64::NEG_INFINITY;
        let valid;

        if tree.rng.random::<f64>() > 0.5 {
            rho_bck.clone_from(&rho);
            p_bck_fwd.clone_from(&p_fwd_bck);
            p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
            let mut edge = Edge {
                p_sharp_beg: std::mem::take(&mut p_sharp_fwd_bck),
                p_sharp_end: std::mem::take(&mut p_sharp_fwd_fwd),
                p_beg: std::mem::take(&mut p_fwd_bck),
                p_end: std::mem::take(&mut p_fwd_fwd),
            };
            let mut zc = z_fwd.clone();
            valid = tree.build(depth, &mut zc, &mut z_propose, &mut edge, &mut rho_fwd, 1.0, &mut lsw_subtree);
            z_fwd = zc;
            p_sharp_fwd_bck = edge.p_sharp_beg;
            p_sharp_fwd_fwd = edge.p_sharp_end;
            p_fwd_bck = edge.p_beg;
            p_fwd_fwd = edge.p_end;
        } else {
            rho_fwd.clone_from(&rho);
            p_fwd_bck.clone_from(&p_bck_fwd);
            p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
            let mut edge = Edge {
                p_sharp_beg: std::mem::take(&mut p_sharp_bck_fwd),
                p_sharp_end: std::mem::take(&mut p_sharp_bck_bck),
                p_beg: std::mem::take(&mut p_bck_fwd),
                p_end: std::mem::take(&mut p_bck_bck),
            };
            let mut zc = z_bck.clone();
            valid = tree.build(depth, &mut zc, &mut z_propose, &mut edge, &mut rho_bck, -1.0, &mut lsw_subtree);
            z_bck = zc;
            p_sharp_bck_fwd = edge.p_sharp_beg;
            p_sharp_bck_bck = edge.p_sharp_end;
            p_bck_fwd = edge.p_beg;
            p_bck_bck = edge.p_end;
        }

        if !valid {
            break;
        }
        depth += 1;

        if lsw_subtree > log_sum_weight {
            z_sample.clone_from(&z_propose);
        } else {
            let accept = (lsw_subtree - log_sum_weight).exp();
            if tree.rng.random::<f64>() < accept {
                z_sample.clone_from(&z_propose);
            }
        }
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

        rho = add(&rho_bck, &rho_fwd);
        let mut persist = criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
        let rho_ext = add(&rho_bck, &p_fwd_bck);
        persist &= criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_ext);
        let rho_ext = add(&rho_fwd, &p_bck_fwd);
        persist &= criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_ext);
        if !persist {
            break;
        }
    }

    let n_leapfrog = tree.n_leapfrog.max(1);
    let info = TransitionInfo {
        accept_stat: tree.sum_metro_prob / n_leapfrog as f64,
        depth,
        divergent: tree.divergent,
    };
    (z_sample, info)
}
