use nalgebra::DMatrix;

use super::{estep_rows, mean_second_moment, CopulaModel, EmConfig};
use crate::data::{DataMatrix, DataView};
use crate::error::{Error, Result};
use crate::linalg::{repair_pd, scale_to_correlation};

/// Online EM state: the current model, the number of updates applied so far
/// and the update rule.
#[derive(Debug, Clone)]
pub struct OnlineEmState {
    pub model: CopulaModel,
    pub t: usize,
    pub config: EmConfig,
    /// When false the marginals stay as given (minibatch EM).
    pub update_marginals: bool,
}

#[derive(Debug, Clone)]
pub struct UpdateReport {
    /// Index of this update, starting at 1.
    pub t: usize,
    pub gamma: f64,
    /// Batch mean of `E[z z^T | x_O]` under the pre-update Σ.
    pub batch_moment: DMatrix<f64>,
    /// `(1 - γ) Σ^t + γ E_{t+1}` before rescaling.
    pub unprojected: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// `None` when the batch was too small to update the model.
    pub update: Option<UpdateReport>,
    pub imputed: DataMatrix,
    pub fully_missing_rows: Vec<usize>,
}

impl OnlineEmState {
    pub fn new(model: CopulaModel, config: EmConfig) -> Result<Self> {
        config.step.validate()?;
        Ok(Self {
            model,
            t: 0,
            config,
            update_marginals: true,
        })
    }

    pub fn with_fixed_marginals(mut self) -> Self {
        self.update_marginals = false;
        self
    }

    pub fn next_gamma(&self) -> f64 {
        if self.t == 0 && self.config.first_step_full {
            1.0
        } else {
            self.config.step.gamma(self.t + 1)
        }
    }

    /// One online EM step on `batch`, which must have more rows than columns.
    ///
    /// Marginal windows absorb the batch first, then the batch's expected
    /// latent second moment is blended into Σ with weight `γ_t`. The state is
    /// left untouched on error.
    pub fn online_update(&mut self, batch: DataView<'_>) -> Result<UpdateReport> {
        let p = self.model.p();
        if batch.nrows() <= p {
            return Err(Error::Precondition(format!(
                "batch of {} rows cannot update a {p}-column model (need more than {p})",
                batch.nrows()
            )));
        }
        let mut model = self.model.clone();
        if self.update_marginals {
            model.observe(batch)?;
        }
        let rows = model.row_observations(batch)?;
        let moments = estep_rows(&rows, &model.sigma, &self.config.estep)?;
        let batch_moment = mean_second_moment(&moments)?;
        let gamma = self.next_gamma();
        let unprojected = &model.sigma * (1.0 - gamma) + &batch_moment * gamma;
        model.sigma = if self.config.project {
            repair_pd(scale_to_correlation(&unprojected)?)?
        } else {
            unprojected.clone()
        };
        self.model = model;
        self.t += 1;
        Ok(UpdateReport {
            t: self.t,
            gamma,
            batch_moment,
            unprojected,
        })
    }

    /// Updates on the batch (when it is large enough) and then imputes its
    /// missing cells with the refreshed model.
    pub fn process_batch(&mut self, batch: DataView<'_>) -> Result<BatchOutcome> {
        let update = if batch.nrows() > self.model.p() {
            Some(self.online_update(batch)?)
        } else {
            if self.update_marginals {
                self.model.observe(batch)?;
            }
            None
        };
        let (imputed, fully_missing_rows) = self.model.impute_batch(batch)?;
        Ok(BatchOutcome {
            update,
            imputed,
            fully_missing_rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::StepSize;
    use crate::marginals::ColumnKind;
    use crate::synth;
    use approx::assert_abs_diff_eq;

    fn stream(seed: u64, n: usize) -> (Vec<ColumnKind>, DataMatrix) {
        let cfg = synth::SynthConfig {
            p_cont: 2,
            p_ord: 2,
            p_bin: 1,
            n_per_segment: n,
            change_points: vec![],
            seed,
            ..synth::SynthConfig::default()
        };
        let s = synth::generate_stream(&cfg).unwrap();
        (s.kinds.clone(), s.observed())
    }

    #[test]
    fn tiny_step_is_noop() {
        let (kinds, data) = stream(1, 200);
        let model = CopulaModel::with_offline_marginals(&kinds, data.view()).unwrap();
        let mut st = OnlineEmState::new(model, EmConfig::default())
            .unwrap()
            .with_fixed_marginals();
        st.online_update(data.slice(0, 40)).unwrap();
        let before = st.model.sigma.clone();
        st.config.step = StepSize::Constant(1e-12);
        st.online_update(data.slice(40, 80)).unwrap();
        assert!((&st.model.sigma - &before).amax() < 1e-9);
    }

    #[test]
    fn small_batch_rejected_and_state_kept() {
        let (kinds, data) = stream(2, 50);
        let mut st = OnlineEmState::new(CopulaModel::new(&kinds, 200).unwrap(), EmConfig::default()).unwrap();
        assert!(matches!(
            st.online_update(data.slice(0, 5)),
            Err(Error::Precondition(_))
        ));
        assert_eq!(st.t, 0);
        assert!(st.model.marginals.iter().all(|m| m.is_empty()));
    }

    #[test]
    fn row_order_within_batch_is_irrelevant() {
        let (kinds, data) = stream(3, 120);
        let model = CopulaModel::with_offline_marginals(&kinds, data.view()).unwrap();
        let mut a = OnlineEmState::new(model.clone(), EmConfig::default())
            .unwrap()
            .with_fixed_marginals();
        let mut b = a.clone();
        let batch = data.slice(0, 40).to_owned();
        let mut rev = DataMatrix::empty(batch.ncols());
        for i in (0..batch.nrows()).rev() {
            rev.push_row(batch.row(i));
        }
        a.online_update(batch.view()).unwrap();
        b.online_update(rev.view()).unwrap();
        assert!((&a.model.sigma - &b.model.sigma).amax() < 1e-12);
    }

    #[test]
    fn unit_diagonal_after_updates() {
        let (kinds, data) = stream(4, 400);
        let mut st = OnlineEmState::new(CopulaModel::new(&kinds, 200).unwrap(), EmConfig::default()).unwrap();
        for b in 0..10 {
            let out = st.process_batch(data.slice(b * 40, b * 40 + 40)).unwrap();
            assert!(out.update.is_some());
            assert!(crate::linalg::is_correlation(&st.model.sigma, 1e-10));
            assert_eq!(out.imputed.nrows(), 40);
            assert!(out.imputed.values().iter().all(|v| v.is_finite()));
        }
        assert_eq!(st.t, 10);
        for i in 0..kinds.len() {
            assert_abs_diff_eq!(st.model.sigma[(i, i)], 1.0, epsilon = 1e-12);
        }
    }
}
