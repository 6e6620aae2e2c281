use nalgebra::DMatrix;

use super::{estep_rows, mean_second_moment, CopulaModel, EmConfig, OnlineEmState, StepSize};
use crate::data::DataView;
use crate::error::{Error, Result};
use crate::linalg::{frobenius, min_eigenvalue, scale_to_correlation, PD_FLOOR};
use crate::marginals::ColumnKind;
use crate::truncnorm::{EStepOptions, EStepResult};

/// Offline M-step: the rescaled mean of the rows' `E[z z^T | x_O]`.
pub fn mstep_offline(moments: &[EStepResult]) -> Result<DMatrix<f64>> {
    let sigma = scale_to_correlation(&mean_second_moment(moments)?)?;
    let min = min_eigenvalue(&sigma);
    if min < PD_FLOOR {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(sigma)
}

#[derive(Debug, Clone)]
pub struct OfflineFit {
    pub model: CopulaModel,
    pub iterations: usize,
    pub converged: bool,
}

/// Relative Frobenius change below which offline EM stops.
pub const OFFLINE_TOL: f64 = 1e-3;
pub const OFFLINE_MAX_ITER: usize = 50;

/// Full-data EM: marginals fitted once, then Σ iterated until the relative
/// Frobenius change drops below `tol` or `max_iter` iterations ran.
pub fn fit_offline(
    kinds: &[ColumnKind],
    data: DataView<'_>,
    max_iter: usize,
    tol: f64,
) -> Result<OfflineFit> {
    let p = kinds.len();
    if data.nrows() <= p {
        return Err(Error::Precondition(format!(
            "{} rows cannot fit a {p}-column model",
            data.nrows()
        )));
    }
    let mut model = CopulaModel::with_offline_marginals(kinds, data)?;
    let rows = model.row_observations(data)?;
    let opts = EStepOptions::default();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let moments = estep_rows(&rows, &model.sigma, &opts)?;
        let next = mstep_offline(&moments)?;
        let change = frobenius(&(&next - &model.sigma)) / frobenius(&model.sigma);
        model.sigma = next;
        iterations += 1;
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(OfflineFit {
        model,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinibatchConfig {
    pub batch_size: usize,
    pub step: StepSize,
    /// Sweeps over the data.
    pub passes: usize,
    pub first_step_full: bool,
}

impl Default for MinibatchConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            step: StepSize::OFFLINE_DEFAULT,
            passes: 1,
            first_step_full: false,
        }
    }
}

/// Online EM run over consecutive minibatches of the full data with
/// marginals fitted once on all of it.
pub fn fit_minibatch(
    kinds: &[ColumnKind],
    data: DataView<'_>,
    cfg: &MinibatchConfig,
) -> Result<CopulaModel> {
    let p = kinds.len();
    let n = data.nrows();
    if cfg.batch_size <= p {
        return Err(Error::Precondition(format!(
            "batch size {} must exceed the {p} columns",
            cfg.batch_size
        )));
    }
    if n < cfg.batch_size {
        return Err(Error::Precondition(format!(
            "batch size {} exceeds the {n} rows",
            cfg.batch_size
        )));
    }
    if cfg.passes == 0 {
        return Err(Error::Precondition("at least one pass required".into()));
    }
    let model = CopulaModel::with_offline_marginals(kinds, data)?;
    let config = EmConfig {
        step: cfg.step,
        first_step_full: cfg.first_step_full,
        ..EmConfig::default()
    };
    let mut state = OnlineEmState::new(model, config)?.with_fixed_marginals();
    let bounds = batch_bounds(n, cfg.batch_size, p);
    for _ in 0..cfg.passes {
        for &(s, e) in &bounds {
            state.online_update(data.slice_rows(s, e))?;
        }
    }
    Ok(state.model)
}

/// Consecutive chunks; a trailing chunk too small to update is folded into
/// the one before it.
pub fn batch_bounds(n: usize, size: usize, p: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n)
        .step_by(size)
        .map(|s| (s, (s + size).min(n)))
        .collect();
    if out.len() > 1 {
        let (s, e) = *out.last().unwrap();
        if e - s <= p {
            out.pop();
            out.last_mut().unwrap().1 = e;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataMatrix;
    use crate::linalg::{is_correlation, scale_to_correlation};
    use crate::normal;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_pair(n: usize, rho: f64, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DataMatrix::empty(2);
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            m.push_row(&[a, rho * a + (1.0 - rho * rho).sqrt() * b]);
        }
        m
    }

    #[test]
    fn rank_one_mstep_is_flagged() {
        let z = DVector::from_column_slice(&[0.5, -1.0, 0.2]);
        let r = EStepResult {
            ezz: &z * z.transpose(),
            ez: z,
        };
        assert!(matches!(
            mstep_offline(&[r]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn identity_moments() {
        let r = EStepResult {
            ez: DVector::zeros(3),
            ezz: DMatrix::identity(3, 3),
        };
        assert_eq!(mstep_offline(&[r.clone(), r]).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn fully_observed_matches_latent_correlation() {
        let data = gaussian_pair(500, 0.4, 5);
        let kinds = [ColumnKind::Continuous; 2];
        let fit = fit_offline(&kinds, data.view(), 10, 1e-3).unwrap();
        // oracle: rank-transform the columns and take the scaled second moment
        let n = data.nrows();
        let mut latent = DMatrix::zeros(n, 2);
        for j in 0..2 {
            let col: Vec<f64> = data.column(j).collect();
            for i in 0..n {
                let count = col.iter().filter(|&&v| v <= col[i]).count() as f64;
                latent[(i, j)] = normal::ppf(count / (n as f64 + 1.0));
            }
        }
        let expect = scale_to_correlation(&(latent.transpose() * &latent / n as f64)).unwrap();
        assert_abs_diff_eq!(fit.model.sigma, expect, epsilon = 1e-12);
        assert!(fit.converged);
        assert_eq!(fit.iterations, 2);
    }

    #[test]
    fn bivariate_recovers_correlation() {
        let data = gaussian_pair(5000, 0.6, 9);
        let fit = fit_offline(&[ColumnKind::Continuous; 2], data.view(), 50, 1e-3).unwrap();
        assert!((fit.model.sigma[(0, 1)] - 0.6).abs() < 0.05);
    }

    #[test]
    fn zero_iterations_returns_identity() {
        let data = gaussian_pair(50, 0.6, 1);
        let fit = fit_offline(&[ColumnKind::Continuous; 2], data.view(), 0, 1e-3).unwrap();
        assert_eq!(fit.model.sigma, DMatrix::identity(2, 2));
        assert_eq!(fit.iterations, 0);
    }

    #[test]
    fn empty_column_is_schema_error() {
        let mut data = gaussian_pair(20, 0.1, 1);
        for i in 0..20 {
            data.row_mut(i)[1] = f64::NAN;
        }
        let r = fit_offline(&[ColumnKind::Continuous; 2], data.view(), 5, 1e-3);
        assert!(matches!(r, Err(Error::Schema(_))));
    }

    #[test]
    fn single_full_batch_equals_one_offline_iteration() {
        let s = crate::synth::generate_stream(&crate::synth::SynthConfig {
            p_cont: 2,
            p_ord: 2,
            p_bin: 2,
            n_per_segment: 300,
            change_points: vec![],
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let data = s.observed();
        let cfg = MinibatchConfig {
            batch_size: 300,
            first_step_full: true,
            ..Default::default()
        };
        let mb = fit_minibatch(&s.kinds, data.view(), &cfg).unwrap();
        let off = fit_offline(&s.kinds, data.view(), 1, 1e-3).unwrap();
        assert!((&mb.sigma - &off.model.sigma).amax() < 1e-12);
        assert!(is_correlation(&mb.sigma, 1e-10));
    }

    #[test]
    fn minibatch_preconditions() {
        let data = gaussian_pair(50, 0.1, 1);
        let kinds = [ColumnKind::Continuous; 2];
        let too_big = MinibatchConfig {
            batch_size: 60,
            ..Default::default()
        };
        assert!(matches!(
            fit_minibatch(&kinds, data.view(), &too_big),
            Err(Error::Precondition(_))
        ));
        let too_small = MinibatchConfig {
            batch_size: 2,
            ..Default::default()
        };
        assert!(fit_minibatch(&kinds, data.view(), &too_small).is_err());
    }

    #[test]
    fn bounds_fold_tail() {
        assert_eq!(batch_bounds(10, 4, 2), vec![(0, 4), (4, 10)]);
        assert_eq!(batch_bounds(11, 4, 2), vec![(0, 4), (4, 8), (8, 11)]);
        assert_eq!(batch_bounds(4, 4, 2), vec![(0, 4)]);
    }
}
