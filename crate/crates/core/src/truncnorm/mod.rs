//! Truncated-normal moments and the conditional latent moments used by the
//! E-step and by imputation.

mod estep;
mod oracle;

pub use estep::{row_estep, row_estep_with, EStepOptions};
pub use oracle::truncmvn_oracle;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::marginals::LatentRegion;
use crate::normal;

/// Probability mass below which a truncation is treated as degenerate.
pub const MASS_FLOOR: f64 = 1e-12;

/// Latent preimage of one data row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowObservation {
    regions: Vec<LatentRegion>,
}

impl RowObservation {
    pub fn new(regions: Vec<LatentRegion>) -> Self {
        Self { regions }
    }

    pub fn regions(&self) -> &[LatentRegion] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn observed(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| !self.regions[j].is_missing()).collect()
    }

    pub fn missing(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.regions[j].is_missing()).collect()
    }

    pub fn is_fully_missing(&self) -> bool {
        self.regions.iter().all(LatentRegion::is_missing)
    }
}

/// Conditional moments `E[z | x_O]` and `E[z z^T | x_O]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EStepResult {
    pub ez: DVector<f64>,
    pub ezz: DMatrix<f64>,
}

impl EStepResult {
    /// `E[z z^T] - E[z] E[z]^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.ezz - &self.ez * self.ez.transpose()
    }
}

/// `Φ(b) - Φ(a)`, evaluated in the lower tail for precision.
pub(crate) fn standard_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        normal::cdf(-a) - normal::cdf(-b)
    } else {
        normal::cdf(b) - normal::cdf(a)
    }
}

/// Mean and variance of a standard normal truncated to `[a, b]`, `a < b`.
fn standard_moments(a: f64, b: f64) -> (f64, f64) {
    if a > 0.0 {
        // work in the lower tail where Φ keeps relative precision
        let (m, v) = standard_moments(-b, -a);
        return (-m, v);
    }
    let mass = standard_mass(a, b);
    if mass < MASS_FLOOR {
        let nearest = if b <= 0.0 { b } else { a };
        return (nearest, 0.0);
    }
    let (pa, pb) = (normal::pdf(a), normal::pdf(b));
    let apa = if a.is_finite() { a * pa } else { 0.0 };
    let bpb = if b.is_finite() { b * pb } else { 0.0 };
    let mean = (pa - pb) / mass;
    let var = 1.0 + (apa - bpb) / mass - mean * mean;
    (mean.clamp(a, b), var.max(0.0))
}

/// Mean and variance of `N(mu, sigma2)` truncated to `[lower, upper]`.
///
/// A point region returns `(lower, 0)`. When the truncation mass falls below
/// [`MASS_FLOOR`] the boundary nearest `mu` is returned with zero variance.
pub fn truncnorm_moments(mu: f64, sigma2: f64, lower: f64, upper: f64) -> Result<(f64, f64)> {
    if lower.is_nan() || upper.is_nan() || mu.is_nan() {
        return Err(Error::Domain("NaN truncation argument".into()));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("variance {sigma2} is not positive")));
    }
    if lower > upper {
        return Err(Error::Domain(format!("lower {lower} exceeds upper {upper}")));
    }
    if lower == upper {
        return Ok((lower, 0.0));
    }
    let s = sigma2.sqrt();
    let (m, v) = standard_moments((lower - mu) / s, (upper - mu) / s);
    Ok((mu + s * m, sigma2 * v))
}
