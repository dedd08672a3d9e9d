//! Data-adaptive reparameterization of Gaussian latents.
//!
//! A latent `x` with prior `N(c, v^2)` and a Gaussian data term `N(d; x, s^2)`
//! is sampled through `u = (x - m) sqrt(p)`, where `p = 1/v^2 + 1/s^2` and `m =
//! (c/v^2 + d/s^2) / p`. When the data term is weak this is the usual
//! non-centered form; when it dominates, `x` is centered on the data.

/// Gaussian blend of a prior `N(c, v^2)` and a data term `N(d; x, s^2)` for a
/// latent `x`, parameterized as `x = m + h u` with `h = p^(-1/2)`.
pub struct Blend {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub m: f64,
    pub h: f64,
    v: f64,
    s: f64,
    /// `d - c`, kept so that residuals never subtract nearly equal numbers.
    gap: f64,
}

/// Adjoints of a blend's inputs, including its log-Jacobian `-ln(p) / 2`.
pub struct BlendGrad {
    pub c: f64,
    pub v: f64,
    pub d: f64,
    pub s: f64,
    pub u: f64,
}

impl Blend {
    pub fn new(c: f64, v: f64, d: f64, s: f64) -> Self {
        let a = 1.0 / (v * v);
        let b = 1.0 / (s * s);
        let p = a + b;
        let gap = d - c;
        Blend {
            a,
            b,
            p,
            m: c + gap * (b / p),
            h: p.sqrt().recip(),
            v,
            s,
            gap,
        }
    }

    /// `(x - c) / v` at `x = value(u)`.
    pub fn prior_z(&self, u: f64) -> f64 {
        (self.gap * (self.b / self.p) + self.h * u) / self.v
    }

    /// `(d - x) / s` at `x = value(u)`.
    pub fn data_z(&self, u: f64) -> f64 {
        (self.gap * (self.a / self.p) - self.h * u) / self.s
    }

    pub fn value(&self, u: f64) -> f64 {
        self.m + self.h * u
    }

    pub fn coordinate(&self, x: f64) -> f64 {
        (x - self.m) / self.h
    }

    pub fn log_jacobian(&self) -> f64 {
        -0.5 * self.p.ln()
    }

    /// `dx` is the derivative of the log density in the latent with the
    /// blend inputs held fixed.
    pub fn backward(&self, dx: f64, u: f64) -> BlendGrad {
        let half_p = 0.5 / self.p;
        let spread = u * self.h * half_p;
        let dx_da = -self.gap * (self.b / self.p) / self.p - spread;
        let dx_db = self.gap * (self.a / self.p) / self.p - spread;
        BlendGrad {
            c: dx * self.a / self.p,
            d: dx * self.b / self.p,
            v: (dx * dx_da - half_p) * (-2.0 * self.a / self.v),
            s: (dx * dx_db - half_p) * (-2.0 * self.b / self.s),
            u: dx * self.h,
        }
    }
}
