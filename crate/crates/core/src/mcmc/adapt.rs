//! Warm-up adaptation: dual averaging for the step size and windowed
//! estimation of a diagonal inverse metric.

pub(crate) struct DualAveraging {
    counter: f64,
    s_bar: f64,
    x_bar: f64,
    mu: f64,
    delta: f64,
    gamma: f64,
    kappa: f64,
    t0: f64,
}

impl DualAveraging {
    pub fn new(delta: f64) -> Self {
        Self {
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
            mu: 0.5f64.ln(),
            delta,
            gamma: 0.05,
            kappa: 0.75,
            t0: 10.0,
        }
    }

    pub fn set_mu(&mut self, mu: f64) {
        self.mu = mu;
    }

    pub fn restart(&mut self) {
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Updates the running statistics and returns the next step size.
    pub fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator for per-coordinate variances.
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn add(&mut self, q: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for i in 0..q.len() {
            let d = q[i] - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (q[i] - self.mean[i]);
        }
    }

    fn restart(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Metric adaptation over an expanding sequence of windows, framed by an
/// initial fast buffer and a terminal fast buffer in which only the step size
/// adapts.
pub(crate) struct WindowedVariance {
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    counter: usize,
    window_size: usize,
    next_window: usize,
    enabled: bool,
    est: Welford,
}

impl WindowedVariance {
    pub fn new(dim: usize, num_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base_window) = (75, 50, 25);
        let enabled = num_warmup >= 20;
        if enabled && init_buffer + base_window + term_buffer > num_warmup {
            init_buffer = (0.15 * num_warmup as f64) as usize;
            term_buffer = (0.1 * num_warmup as f64) as usize;
            base_window = num_warmup - (init_buffer + term_buffer);
        }
        Self {
            num_warmup,
            init_buffer,
            term_buffer,
            counter: 0,
            window_size: base_window,
            next_window: init_buffer + base_window - 1,
            enabled,
            est: Welford::new(dim),
        }
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter < self.num_warmup - self.term_buffer
            && self.counter != self.num_warmup
    }

    fn end_of_window(&self) -> bool {
        self.counter == self.next_window && self.counter != self.num_warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last {
            let boundary = self.next_window + 2 * self.window_size;
            if boundary >= self.num_warmup - self.term_buffer {
                self.next_window = last;
            }
        }
    }

    /// Feeds one warm-up position. Returns true when a window closed and
    /// `inv_metric` was updated.
    pub fn learn(&mut self, inv_metric: &mut [f64], q: &[f64]) -> bool {
        if !self.enabled {
            return false;
        }
        if self.in_window() {
            self.est.add(q);
        }
        if self.end_of_window() {
            self.compute_next_window();
            let n = self.est.n as f64;
            if self.est.n > 1 {
                for (v, m2) in inv_metric.iter_mut().zip(&self.est.m2) {
                    let var = m2 / (n - 1.0);
                    *v = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                }
            }
            self.est.restart();
            self.counter += 1;
            return true;
        }
        self.counter += 1;
        false
    }
}
