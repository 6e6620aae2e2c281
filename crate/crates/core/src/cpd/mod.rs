//! Change-point detection on the copula correlation: the deviation
//! statistic, a Monte Carlo test against the fitted model, and a sequential
//! loop that controls the false discovery rate across batches.

mod fdr;
mod mc;
mod online;
mod sample;

pub use fdr::{lord_gamma, FdrState};
pub use mc::{mc_cpd_test, p_value, CpdResult, McOptions};
pub use online::{online_cpd_loop, BatchStatus, CpdLoopConfig, CpdLoopReport, DetectionRecord};
pub use sample::{sample_gc_row, GcSampler};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{frobenius, inv_sqrt_sym};

/// Eigenvalue floor for `Σ_old^{-1/2}`.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// `‖Σ_old^{-1/2} Σ_new Σ_old^{-1/2} − I‖_F`.
pub fn correlation_deviation(sigma_old: &DMatrix<f64>, sigma_new: &DMatrix<f64>) -> Result<f64> {
    let p = sigma_old.nrows();
    if sigma_old.ncols() != p || sigma_new.nrows() != p || sigma_new.ncols() != p {
        return Err(Error::Domain(format!(
            "deviation of {}x{} against {}x{}",
            sigma_old.nrows(),
            sigma_old.ncols(),
            sigma_new.nrows(),
            sigma_new.ncols()
        )));
    }
    let r = inv_sqrt_sym(sigma_old, EIGEN_FLOOR).map_err(|e| match e {
        Error::NotPositiveDefinite { min_eigenvalue } => Error::Numerical(format!(
            "reference correlation has eigenvalue {min_eigenvalue:e} below {EIGEN_FLOOR:e}"
        )),
        other => other,
    })?;
    let m = &r * sigma_new * &r - DMatrix::<f64>::identity(p, p);
    Ok(frobenius(&m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_correlation;
    use approx::assert_abs_diff_eq;

    #[test]
    fn deviation_examples() {
        let s = random_correlation(5, 3);
        assert_abs_diff_eq!(correlation_deviation(&s, &s).unwrap(), 0.0, epsilon = 1e-12);

        let eye = DMatrix::<f64>::identity(5, 5);
        let t = random_correlation(5, 4);
        assert_abs_diff_eq!(
            correlation_deviation(&eye, &t).unwrap(),
            frobenius(&(&t - &eye)),
            epsilon = 1e-12
        );

        let rho = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_abs_diff_eq!(
            correlation_deviation(&DMatrix::identity(2, 2), &rho).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn permutation_invariant() {
        let a = random_correlation(4, 10);
        let b = random_correlation(4, 11);
        let perm = [2, 0, 3, 1];
        let pa = DMatrix::from_fn(4, 4, |i, j| a[(perm[i], perm[j])]);
        let pb = DMatrix::from_fn(4, 4, |i, j| b[(perm[i], perm[j])]);
        assert_abs_diff_eq!(
            correlation_deviation(&a, &b).unwrap(),
            correlation_deviation(&pa, &pb).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn errors() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(
            correlation_deviation(&eye, &DMatrix::identity(2, 2)),
            Err(Error::Domain(_))
        ));
        let singular = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(
            correlation_deviation(&singular, &DMatrix::identity(2, 2)),
            Err(Error::Numerical(_))
        ));
    }
}
