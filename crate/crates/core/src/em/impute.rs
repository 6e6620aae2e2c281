use super::CopulaModel;
use crate::data::{DataMatrix, DataView};
use crate::error::Result;
use crate::truncnorm::row_estep;

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedRow {
    pub values: Vec<f64>,
    /// Every cell was missing; imputations are the marginal medians `f(0)`.
    pub fully_missing: bool,
}

impl CopulaModel {
    /// Fills the missing cells of `raw` with `f_M(E[z_M | x_O])`, where the
    /// latent conditional mean is `Σ_MO Σ_OO^{-1} E[z_O | x_O]`.
    pub fn impute_row(&self, raw: &[f64]) -> Result<ImputedRow> {
        let obs = self.row_observation(raw)?;
        let missing = obs.missing();
        if missing.is_empty() {
            return Ok(ImputedRow {
                values: raw.to_vec(),
                fully_missing: false,
            });
        }
        let fully_missing = obs.is_fully_missing();
        let moments = row_estep(&obs, &self.sigma)?;
        let mut values = raw.to_vec();
        for j in missing {
            let z = if fully_missing { 0.0 } else { moments.ez[j] };
            values[j] = self.marginals[j].from_latent(z)?;
        }
        Ok(ImputedRow {
            values,
            fully_missing,
        })
    }

    /// Imputes every row of `batch`; also returns the indices of rows that
    /// were entirely missing.
    pub fn impute_batch(&self, batch: DataView<'_>) -> Result<(DataMatrix, Vec<usize>)> {
        let rows: Vec<Result<ImputedRow>> = crate::par::map_indexed(batch.nrows(), |i| {
            self.impute_row(batch.row(i)).map_err(|e| e.at_row(i))
        });
        let mut out = DataMatrix::empty(self.p());
        let mut fully = Vec::new();
        for (i, r) in rows.into_iter().enumerate() {
            let r = r?;
            if r.fully_missing {
                fully.push(i);
            }
            out.push_row(&r.values);
        }
        Ok((out, fully))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::{ColumnKind, MarginalModel};
    use crate::normal;
    use nalgebra::DMatrix;

    fn model_with_windows(sigma: DMatrix<f64>, n: usize) -> CopulaModel {
        // standard-normal-like windows: Φ^{-1}(i / (n + 1))
        let values: Vec<f64> = (1..=n).map(|i| normal::ppf(i as f64 / (n as f64 + 1.0))).collect();
        let p = sigma.nrows();
        let marginals = (0..p)
            .map(|j| MarginalModel::from_values(j, ColumnKind::Continuous, &values).unwrap())
            .collect();
        CopulaModel { sigma, marginals }
    }

    #[test]
    fn identity_sigma_imputes_median() {
        let m = model_with_windows(DMatrix::identity(3, 3), 101);
        let r = m.impute_row(&[1.0, f64::NAN, f64::NAN]).unwrap();
        assert_eq!(r.values[1], m.marginals[1].median().unwrap());
        assert_eq!(r.values[2], m.marginals[2].median().unwrap());
        assert!(!r.fully_missing);
    }

    #[test]
    fn fully_observed_unchanged() {
        let m = model_with_windows(DMatrix::identity(2, 2), 11);
        let row = [0.3, -0.2];
        assert_eq!(m.impute_row(&row).unwrap().values, row.to_vec());
    }

    #[test]
    fn conditional_mean_pushed_through_marginal() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let n = 999;
        let m = model_with_windows(sigma, n);
        // window value whose latent point is exactly 1.0 is not stored, so
        // take the one closest to it and use its latent point
        let x1 = m.marginals[0].from_latent(1.0).unwrap();
        let z1 = m.marginals[0].to_latent_region(x1).unwrap().lower;
        let r = m.impute_row(&[x1, f64::NAN]).unwrap();
        assert_eq!(r.values[1], m.marginals[1].from_latent(0.9 * z1).unwrap());
        assert!((z1 - 1.0).abs() < 0.01);
    }

    #[test]
    fn fully_missing_row_flagged() {
        let m = model_with_windows(DMatrix::identity(2, 2), 21);
        let r = m.impute_row(&[f64::NAN, f64::NAN]).unwrap();
        assert!(r.fully_missing);
        assert_eq!(r.values[0], m.marginals[0].median().unwrap());
    }
}
