//! Phase-space points, the diagonal Euclidean kinetic energy and the leapfrog
//! integrator.

use super::LogDensity;

/// Position, momentum and cached density/gradient at the position.
#[derive(Debug, Clone)]
pub(crate) struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl PhasePoint {
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let logp = target.log_density_grad(&q, &mut grad);
        let p = vec![0.0; q.len()];
        Self { q, p, grad, logp }
    }

    pub fn kinetic(&self, inv_mass: &[f64]) -> f64 {
        0.5 * self.p.iter().zip(inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
    }

    /// Total energy; NaN is mapped to +inf so it always counts as divergent.
    pub fn hamiltonian(&self, inv_mass: &[f64]) -> f64 {
        let h = -self.logp + self.kinetic(inv_mass);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    /// Velocity `M^{-1} p`.
    pub fn p_sharp(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
    }

    pub fn step<T: LogDensity + ?Sized>(&mut self, target: &T, eps: f64, inv_mass: &[f64]) {
        for (p, g) in self.p.iter_mut().zip(&self.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in self.q.iter_mut().zip(&self.p).zip(inv_mass) {
            *q += eps * m * p;
        }
        self.logp = target.log_density_grad(&self.q, &mut self.grad);
        if !self.logp.is_finite() {
            self.logp = f64::NEG_INFINITY;
            return;
        }
        for (p, g) in self.p.iter_mut().zip(&self.grad) {
            *p += 0.5 * eps * g;
        }
    }
}

/// Runs `n_steps` leapfrog steps with unit mass matrix and returns the final
/// `(position, momentum)`.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    position: &[f64],
    momentum: &[f64],
    step_size: f64,
    n_steps: usize,
) -> (Vec<f64>, Vec<f64>) {
    let ones = vec![1.0; position.len()];
    let mut z = PhasePoint::new(target, position.to_vec());
    z.p = momentum.to_vec();
    for _ in 0..n_steps {
        z.step(target, step_size, &ones);
    }
    (z.q, z.p)
}
