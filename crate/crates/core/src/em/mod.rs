//! Copula correlation estimation: offline EM, minibatch EM and fully online
//! EM, plus conditional-mean imputation.

mod impute;
mod offline;
mod online;
mod snapshot;

pub use impute::ImputedRow;
pub use offline::{
    batch_bounds, fit_minibatch, fit_offline, mstep_offline, MinibatchConfig, OfflineFit,
    OFFLINE_MAX_ITER, OFFLINE_TOL,
};
pub use online::{BatchOutcome, OnlineEmState, UpdateReport};
pub use snapshot::{ModelSnapshot, SNAPSHOT_VERSION};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DataView;
use crate::error::{Error, Result};
use crate::linalg::tree_sum;
use crate::marginals::{ColumnKind, MarginalModel};
use crate::par;
use crate::truncnorm::{row_estep_with, EStepOptions, EStepResult, RowObservation};

/// Step-size rule for online EM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSize {
    /// Fixed `γ ∈ (0, 1)`; tracks a drifting correlation.
    Constant(f64),
    /// `γ_t = c / (t + c)` for update `t = 1, 2, ...`; satisfies
    /// `Σ γ_t² < Σ γ_t = ∞`.
    Decaying { c: f64 },
}

impl StepSize {
    pub const ONLINE_DEFAULT: StepSize = StepSize::Constant(0.5);
    pub const OFFLINE_DEFAULT: StepSize = StepSize::Decaying { c: 5.0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSize::Constant(g) if g > 0.0 && g < 1.0 => Ok(()),
            StepSize::Constant(g) => Err(Error::Precondition(format!(
                "constant step size {g} outside (0, 1)"
            ))),
            StepSize::Decaying { c } if c > 0.0 && c.is_finite() => Ok(()),
            StepSize::Decaying { c } => Err(Error::Precondition(format!(
                "decaying step constant {c} must be positive"
            ))),
        }
    }

    /// Step used for the `t`-th update, `t >= 1`.
    pub fn gamma(&self, t: usize) -> f64 {
        match *self {
            StepSize::Constant(g) => g,
            StepSize::Decaying { c } => c / (t as f64 + c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub step: StepSize,
    /// Use `γ = 1` for the very first update, discarding the initial Σ.
    pub first_step_full: bool,
    /// Rescale every iterate to unit diagonal. Only disabled to check the
    /// raw weighted-average recursion.
    pub project: bool,
    pub estep: EStepOptions,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            step: StepSize::ONLINE_DEFAULT,
            first_step_full: false,
            project: true,
            estep: EStepOptions::default(),
        }
    }
}

/// Gaussian copula state: correlation plus per-column marginals.
#[derive(Debug, Clone)]
pub struct CopulaModel {
    pub sigma: DMatrix<f64>,
    pub marginals: Vec<MarginalModel>,
}

impl CopulaModel {
    /// Identity correlation and empty running windows of length `window`.
    pub fn new(kinds: &[ColumnKind], window: usize) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::Schema("no columns".into()));
        }
        let marginals = kinds
            .iter()
            .enumerate()
            .map(|(j, &k)| MarginalModel::new(j, k, window))
            .collect::<Result<Vec<_>>>()?;
        let p = kinds.len();
        Ok(Self {
            sigma: DMatrix::identity(p, p),
            marginals,
        })
    }

    /// Identity correlation with marginals fitted once on all of `data`.
    pub fn with_offline_marginals(kinds: &[ColumnKind], data: DataView<'_>) -> Result<Self> {
        check_width(kinds.len(), data)?;
        let p = kinds.len();
        let marginals = kinds
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let col: Vec<f64> = data.rows().map(|r| r[j]).collect();
                if col.iter().all(|v| v.is_nan()) {
                    return Err(Error::Schema(format!("column {j} has no observed values")));
                }
                MarginalModel::from_values(j, k, &col)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sigma: DMatrix::identity(p, p),
            marginals,
        })
    }

    pub fn p(&self) -> usize {
        self.marginals.len()
    }

    pub fn kinds(&self) -> Vec<ColumnKind> {
        self.marginals.iter().map(MarginalModel::kind).collect()
    }

    /// Pushes every observed cell of `batch` into its column window.
    pub fn observe(&mut self, batch: DataView<'_>) -> Result<()> {
        check_width(self.p(), batch)?;
        for (i, row) in batch.rows().enumerate() {
            for (m, &v) in self.marginals.iter_mut().zip(row) {
                if !v.is_nan() {
                    m.update_window(v).map_err(|e| e.at_row(i))?;
                }
            }
        }
        Ok(())
    }

    pub fn row_observation(&self, raw: &[f64]) -> Result<RowObservation> {
        if raw.len() != self.p() {
            return Err(Error::Domain(format!(
                "row has {} values, model has {} columns",
                raw.len(),
                self.p()
            )));
        }
        raw.iter()
            .zip(&self.marginals)
            .map(|(&v, m)| m.to_latent_region(v))
            .collect::<Result<Vec<_>>>()
            .map(RowObservation::new)
    }

    pub fn row_observations(&self, batch: DataView<'_>) -> Result<Vec<RowObservation>> {
        batch
            .rows()
            .enumerate()
            .map(|(i, r)| self.row_observation(r).map_err(|e| e.at_row(i)))
            .collect()
    }
}

fn check_width(p: usize, data: DataView<'_>) -> Result<()> {
    if data.ncols() != p {
        return Err(Error::Domain(format!(
            "data has {} columns, model has {p}",
            data.ncols()
        )));
    }
    Ok(())
}

/// Row-parallel E-step under `sigma`; results keep row order.
pub fn estep_rows(
    rows: &[RowObservation],
    sigma: &DMatrix<f64>,
    opts: &EStepOptions,
) -> Result<Vec<EStepResult>> {
    par::map_indexed(rows.len(), |i| {
        row_estep_with(&rows[i], sigma, opts).map_err(|e| e.at_row(i))
    })
    .into_iter()
    .collect()
}

/// Mean of the `ezz` matrices, summed in a fixed tree order.
pub fn mean_second_moment(moments: &[EStepResult]) -> Result<DMatrix<f64>> {
    let n = moments.len();
    let sum = tree_sum(moments.iter().map(|m| m.ezz.clone()).collect())
        .ok_or_else(|| Error::Precondition("no rows to average".into()))?;
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_sizes() {
        let s = StepSize::Decaying { c: 5.0 };
        assert_eq!(s.gamma(1), 5.0 / 6.0);
        assert_eq!(s.gamma(5), 0.5);
        for t in 1..10_000 {
            let g = s.gamma(t);
            assert!(g > 0.0 && g < 1.0);
        }
        // partial sums: Σγ grows like log t while Σγ² stays bounded
        let sum: f64 = (1..100_000).map(|t| s.gamma(t)).sum();
        let sum_sq: f64 = (1..100_000).map(|t| s.gamma(t).powi(2)).sum();
        assert!(sum > 40.0 && sum_sq < 25.0);
        assert!(StepSize::Constant(1.0).validate().is_err());
        assert!(StepSize::Constant(0.5).validate().is_ok());
        assert!(StepSize::Decaying { c: 0.0 }.validate().is_err());
    }
}
