//! Rejection-sampling estimate of the conditional latent moments. Used as an
//! independent check on [`super::row_estep`]; far too slow for production.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EStepResult, RowObservation};
use crate::error::{Error, Result};
use crate::linalg::submatrix;

const MIN_ACCEPT_RATE: f64 = 1e-6;
const RATE_CHECK_EVERY: u64 = 1_000_000;

/// Draws `z ~ N(0, Σ)` conditioned exactly on the point coordinates and keeps
/// the draws that land in every interval region, until `draws` are accepted.
pub fn truncmvn_oracle(
    row: &RowObservation,
    sigma: &DMatrix<f64>,
    draws: usize,
    seed: u64,
) -> Result<EStepResult> {
    let p = row.len();
    if sigma.nrows() != p || draws == 0 {
        return Err(Error::Domain("oracle needs matching Σ and positive draws".into()));
    }
    let regions = row.regions();
    let points: Vec<usize> = (0..p).filter(|&j| regions[j].is_point()).collect();
    let free: Vec<usize> = (0..p).filter(|&j| !regions[j].is_point()).collect();
    let z_points = DVector::from_iterator(points.len(), points.iter().map(|&j| regions[j].lower));

    let s_ff = submatrix(sigma, &free, &free);
    let (mean_f, cov_f) = if points.is_empty() {
        (DVector::zeros(free.len()), s_ff)
    } else {
        let s_pp = submatrix(sigma, &points, &points);
        let s_pf = submatrix(sigma, &points, &free);
        let inv = s_pp
            .try_inverse()
            .ok_or_else(|| Error::Numerical("oracle: singular point block".into()))?;
        let w = &inv * &s_pf;
        (w.transpose() * &z_points, s_ff - s_pf.transpose() * w)
    };
    let chol = nalgebra::Cholesky::new(cov_f.clone())
        .or_else(|| {
            let mut c = cov_f.clone();
            for i in 0..c.nrows() {
                c[(i, i)] += 1e-12;
            }
            nalgebra::Cholesky::new(c)
        })
        .ok_or_else(|| Error::Numerical("oracle: conditional covariance not PD".into()))?;
    let l = chol.l();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DVector::zeros(p);
    for (a, &j) in points.iter().enumerate() {
        z[j] = z_points[a];
    }
    let mut sum = DVector::zeros(p);
    let mut sum_sq = DMatrix::zeros(p, p);
    let mut eps = DVector::zeros(free.len());
    let (mut accepted, mut attempts) = (0usize, 0u64);
    while accepted < draws {
        attempts += 1;
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        let zf = &mean_f + &l * &eps;
        let inside = free.iter().enumerate().all(|(a, &j)| regions[j].contains(zf[a]));
        if inside {
            for (a, &j) in free.iter().enumerate() {
                z[j] = zf[a];
            }
            sum += &z;
            sum_sq.ger(1.0, &z, &z, 1.0);
            accepted += 1;
        }
        if attempts % RATE_CHECK_EVERY == 0 {
            let rate = accepted as f64 / attempts as f64;
            if rate < MIN_ACCEPT_RATE {
                return Err(Error::OracleInfeasible { rate });
            }
        }
    }
    let n = accepted as f64;
    Ok(EStepResult {
        ez: sum / n,
        ezz: sum_sq / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::LatentRegion;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unconstrained_identity() {
        let row = RowObservation::new(vec![LatentRegion::MISSING; 2]);
        let r = truncmvn_oracle(&row, &DMatrix::identity(2, 2), 200_000, 1).unwrap();
        assert!(r.ez.amax() < 0.01);
        assert!((&r.ezz - DMatrix::<f64>::identity(2, 2)).amax() < 0.015);
    }

    #[test]
    fn half_normal_mean() {
        let row = RowObservation::new(vec![LatentRegion::interval(0.0, f64::INFINITY)]);
        let r = truncmvn_oracle(&row, &DMatrix::identity(1, 1), 400_000, 2).unwrap();
        assert_abs_diff_eq!(r.ez[0], 0.797_884_560_802_865_4, epsilon = 0.005);
    }

    #[test]
    fn deterministic_per_seed() {
        let row = RowObservation::new(vec![LatentRegion::interval(-0.5, 1.0), LatentRegion::MISSING]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let a = truncmvn_oracle(&row, &s, 5_000, 7).unwrap();
        let b = truncmvn_oracle(&row, &s, 5_000, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_region_errors() {
        let row = RowObservation::new(vec![LatentRegion::interval(8.0, 9.0)]);
        let r = truncmvn_oracle(&row, &DMatrix::identity(1, 1), 10, 3);
        assert!(matches!(r, Err(Error::OracleInfeasible { .. })));
    }
}
