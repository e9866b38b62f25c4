//! Small numeric helpers that work without `std`.

use crate::Vec4;

pub use libm::{atan2, cos, exp, fabs, floor, log, sin, sqrt};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// 4x4 row-major matrix.
pub type Mat4 = [[f64; 4]; 4];

pub fn sq(x: f64) -> f64 {
    x * x
}

pub fn sub4(a: &Vec4, b: &Vec4) -> Vec4 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| sq(x - y)).sum()
}

/// Log density of a univariate normal.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + log(var) + sq(x - mean) / var)
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Returns `None` if a pivot is not strictly positive.
pub fn cholesky4(m: &Mat4) -> Option<Mat4> {
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i][j] = sqrt(d);
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Multivariate normal in four dimensions with a cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian4 {
    mean: Vec4,
    chol: Mat4,
    log_norm: f64,
}

impl Gaussian4 {
    pub fn new(mean: Vec4, cov: &Mat4) -> Option<Self> {
        let chol = cholesky4(cov)?;
        let log_det: f64 = (0..4).map(|i| 2.0 * log(chol[i][i])).sum();
        Some(Self {
            mean,
            chol,
            log_norm: -0.5 * (4.0 * LN_2PI + log_det),
        })
    }

    /// Squared Mahalanobis distance from the mean.
    pub fn mahalanobis_sq(&self, x: &Vec4) -> f64 {
        // forward substitution L y = (x - mu)
        let d = sub4(x, &self.mean);
        let mut y = [0.0; 4];
        for i in 0..4 {
            let s: f64 = (0..i).map(|k| self.chol[i][k] * y[k]).sum();
            y[i] = (d[i] - s) / self.chol[i][i];
        }
        dot(&y, &y)
    }

    pub fn log_pdf(&self, x: &Vec4) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x)
    }

    /// Log density at the mean.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }
}
