use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::em::CopulaModel;
use crate::error::Result;
use crate::linalg::cholesky_with_ridge;
use crate::marginals::ColumnKind;

/// Draws rows from `GC(Σ, f)` of a fitted model. Factorization and ordinal
/// cutpoints are computed once.
#[derive(Debug, Clone)]
pub struct GcSampler<'a> {
    model: &'a CopulaModel,
    factor: DMatrix<f64>,
    cutpoints: Vec<Vec<f64>>,
}

impl<'a> GcSampler<'a> {
    pub fn new(model: &'a CopulaModel) -> Result<Self> {
        let factor = cholesky_with_ridge(&model.sigma)?.l();
        let cutpoints = model
            .marginals
            .iter()
            .map(|m| match m.kind() {
                ColumnKind::Continuous => {
                    m.median().ok_or(crate::Error::NotFitted { column: m.column() })?;
                    Ok(Vec::new())
                }
                ColumnKind::Ordinal { .. } => m.ordinal_cutpoints(),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            factor,
            cutpoints,
        })
    }

    /// Latent draw `z ~ N(0, Σ)`.
    pub fn latent<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let p = self.factor.nrows();
        let eps = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        &self.factor * eps
    }

    /// Observed row with `NaN` wherever `missing[j]` is set.
    pub fn row<R: Rng + ?Sized>(&self, missing: &[bool], rng: &mut R) -> Result<Vec<f64>> {
        let z = self.latent(rng);
        self.model
            .marginals
            .iter()
            .enumerate()
            .map(|(j, m)| {
                if missing.get(j).copied().unwrap_or(false) {
                    return Ok(f64::NAN);
                }
                match m.kind() {
                    ColumnKind::Continuous => m.from_latent(z[j]),
                    ColumnKind::Ordinal { .. } => Ok(m.level_for_latent(z[j], &self.cutpoints[j])),
                }
            })
            .collect()
    }
}

/// One row from the fitted model, masked at `missing`.
pub fn sample_gc_row<R: Rng + ?Sized>(
    model: &CopulaModel,
    missing: &[bool],
    rng: &mut R,
) -> Result<Vec<f64>> {
    GcSampler::new(model)?.row(missing, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::MarginalModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(sigma: DMatrix<f64>, marginals: Vec<MarginalModel>) -> CopulaModel {
        CopulaModel { sigma, marginals }
    }

    #[test]
    fn identity_latents_uncorrelated() {
        let vals: Vec<f64> = (0..50).map(f64::from).collect();
        let ms = (0..3)
            .map(|j| MarginalModel::from_values(j, ColumnKind::Continuous, &vals).unwrap())
            .collect();
        let m = model(DMatrix::identity(3, 3), ms);
        let s = GcSampler::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let draws: Vec<DVector<f64>> = (0..n).map(|_| s.latent(&mut rng)).collect();
        for a in 0..3 {
            for b in 0..a {
                let c = draws.iter().map(|z| z[a] * z[b]).sum::<f64>() / n as f64;
                assert!(c.abs() < 0.03, "{c}");
            }
        }
        let row = s.row(&[false; 3], &mut rng).unwrap();
        assert!(row.iter().all(|v| !v.is_nan()));
        let row = s.row(&[true, false, true], &mut rng).unwrap();
        assert!(row[0].is_nan() && !row[1].is_nan() && row[2].is_nan());
    }

    #[test]
    fn ordinal_frequencies_match_window() {
        let window: Vec<f64> = [1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 4.0, 5.0, 5.0, 2.0]
            .iter()
            .cycle()
            .take(200)
            .copied()
            .collect();
        let mm = MarginalModel::from_values(0, ColumnKind::ordinal(5), &window).unwrap();
        let m = model(DMatrix::identity(1, 1), vec![mm]);
        let s = GcSampler::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let v = s.row(&[false], &mut rng).unwrap()[0];
            counts[v as usize - 1] += 1;
        }
        for (k, c) in counts.iter().enumerate() {
            let want = window.iter().filter(|&&v| v == (k + 1) as f64).count() as f64 / 200.0;
            let got = *c as f64 / n as f64;
            assert!((got - want).abs() < 0.02, "level {}: {got} vs {want}", k + 1);
        }
    }

    #[test]
    fn unfitted_model_errors() {
        let m = CopulaModel::new(&[ColumnKind::Continuous], 10).unwrap();
        assert!(GcSampler::new(&m).is_err());
    }
}
