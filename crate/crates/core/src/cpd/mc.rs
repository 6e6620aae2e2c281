use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::correlation_deviation;
use super::sample::GcSampler;
use crate::data::{DataMatrix, DataView};
use crate::em::OnlineEmState;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct CpdResult {
    pub statistic: f64,
    /// Null replicate statistics, in replicate order.
    pub mc_statistics: Vec<f64>,
    pub p_value: f64,
    /// `p_value < alpha_t`.
    pub decision: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    /// Number of null replicates `B`.
    pub replicates: usize,
    pub seed: u64,
    /// Use `#{s <= s_j} / (B + 1)`, which can be zero. Off by default.
    pub biased: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            replicates: 99,
            seed: 0,
            biased: false,
        }
    }
}

/// `(#{j : s <= s_j} + 1) / (B + 1)`, or without the `+ 1` in the numerator
/// when `biased`.
pub fn p_value(statistic: f64, mc_statistics: &[f64], biased: bool) -> f64 {
    let exceed = mc_statistics.iter().filter(|&&s| statistic <= s).count();
    let num = if biased { exceed } else { exceed + 1 };
    num as f64 / (mc_statistics.len() + 1) as f64
}

/// Tests whether `new_data` moved the correlation further than data drawn
/// from the pre-batch model would.
///
/// The observed statistic compares `Σ^{t0}` with the iterate after one
/// production update on `new_data`. Each replicate draws a dataset of the
/// same shape from `GC(Σ^{t0}, f^{t0})`, masks it where `new_data` is
/// missing and applies the same update from the same starting state.
/// Returns the result and the state updated on `new_data`.
pub fn mc_cpd_test(
    state_t0: &OnlineEmState,
    new_data: DataView<'_>,
    alpha_t: f64,
    opts: &McOptions,
) -> Result<(CpdResult, OnlineEmState)> {
    if opts.replicates == 0 {
        return Err(Error::Precondition("at least one Monte Carlo replicate required".into()));
    }
    let sigma_t0 = &state_t0.model.sigma;
    let mut updated = state_t0.clone();
    updated.online_update(new_data)?;
    let statistic = correlation_deviation(sigma_t0, &updated.model.sigma)?;

    let sampler = GcSampler::new(&state_t0.model)?;
    let patterns: Vec<Vec<bool>> = new_data
        .rows()
        .map(|r| r.iter().map(|v| v.is_nan()).collect())
        .collect();
    let p = new_data.ncols();
    let mc_statistics = par::map_indexed(opts.replicates, |j| {
        let run = || -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(j as u64 + 1);
            let mut synth = DataMatrix::empty(p);
            for pattern in &patterns {
                synth.push_row(&sampler.row(pattern, &mut rng)?);
            }
            let mut replicate = state_t0.clone();
            replicate.online_update(synth.view())?;
            correlation_deviation(sigma_t0, &replicate.model.sigma)
        };
        run().map_err(|e| Error::Replicate {
            replicate: j,
            source: Box::new(e),
        })
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;

    let p_value = p_value(statistic, &mc_statistics, opts.biased);
    Ok((
        CpdResult {
            statistic,
            mc_statistics,
            p_value,
            decision: p_value < alpha_t,
        },
        updated,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{CopulaModel, EmConfig};
    use crate::synth::{generate_stream, SynthConfig};

    #[test]
    fn formula() {
        let mc: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(p_value(10.0, &mc, false), 0.1);
        assert_eq!(p_value(10.0, &mc, true), 0.0);
        assert_eq!(p_value(0.0, &mc, false), 1.0);
        assert_eq!(p_value(5.0, &mc, false), 0.6);
    }

    fn warmed_state(seed: u64) -> (OnlineEmState, DataMatrix) {
        let cfg = SynthConfig {
            p_cont: 2,
            p_ord: 2,
            p_bin: 1,
            ..SynthConfig::stationary(200, seed)
        };
        let s = generate_stream(&cfg).unwrap();
        let data = s.observed();
        let model = CopulaModel::new(&s.kinds, 200).unwrap();
        let mut st = OnlineEmState::new(model, EmConfig::default()).unwrap();
        for k in 0..4 {
            st.online_update(data.slice(k * 40, (k + 1) * 40)).unwrap();
        }
        (st, data)
    }

    #[test]
    fn deterministic_and_exact() {
        let (st, data) = warmed_state(3);
        let opts = McOptions {
            replicates: 19,
            seed: 5,
            biased: false,
        };
        let batch = data.slice(160, 200);
        let (a, next) = mc_cpd_test(&st, batch, 0.05, &opts).unwrap();
        let (b, _) = mc_cpd_test(&st, batch, 0.05, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mc_statistics.len(), 19);
        assert_eq!(a.p_value, p_value(a.statistic, &a.mc_statistics, false));
        assert!(a.p_value >= 1.0 / 20.0);
        assert_eq!(next.t, st.t + 1);
        assert!(a.mc_statistics.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn small_batch_rejected() {
        let (st, data) = warmed_state(4);
        let r = mc_cpd_test(&st, data.slice(0, 3), 0.05, &McOptions::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
