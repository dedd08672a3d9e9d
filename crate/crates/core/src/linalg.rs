//! Weighted least squares on small dense designs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on the pivoted-QR diagonal below which the design is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct WlsFit {
    pub coefficients: Vec<f64>,
    /// `(X^T W X)^{-1}`.
    pub xtwx_inv: DMatrix<f64>,
    /// Weighted residual sum of squares.
    pub rss: f64,
}

pub fn design_matrix(rows: &[&[f64]]) -> DMatrix<f64> {
    let p = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j])
}

/// Solves `(X^T W X) b = X^T W y` after a column-pivoted QR rank check on
/// `W^{1/2} X`.
pub fn weighted_least_squares(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<WlsFit> {
    let (n, p) = x.shape();
    assert_eq!(y.len(), n);
    assert_eq!(w.len(), n);
    if n < p || p == 0 {
        return Err(Error::RankDeficientDesign);
    }
    let sw = DVector::from_iterator(n, w.iter().map(|v| v.sqrt()));
    let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * sw[i]);
    let r = xw.clone().col_piv_qr().r();
    let r00 = r[(0, 0)].abs();
    if !(r00 > 0.0) || (0..p).any(|k| !(r[(k, k)].abs() > RANK_TOL * r00)) {
        return Err(Error::RankDeficientDesign);
    }

    let yw = DVector::from_iterator(n, y.iter().zip(sw.iter()).map(|(a, b)| a * b));
    let xtwx = xw.transpose() * &xw;
    let xtwy = xw.transpose() * &yw;
    let chol = xtwx.cholesky().ok_or(Error::RankDeficientDesign)?;
    let coef = chol.solve(&xtwy);
    let xtwx_inv = chol.inverse();
    let resid = &yw - &xw * &coef;
    Ok(WlsFit {
        coefficients: coef.iter().copied().collect(),
        xtwx_inv,
        rss: resid.norm_squared(),
    })
}
