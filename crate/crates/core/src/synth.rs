//! Synthetic Gaussian copula streams with planted correlation changes.
//!
//! Latent rows are drawn segment by segment from `N(0, Σ_k)`. Continuous
//! columns pass through the Exp(rate 1/3) quantile of `Φ(z)`; ordinal and
//! binary columns are binned at cutpoints drawn once per stream, so the
//! marginals stay fixed while the correlation changes.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::scale_to_correlation;
use crate::marginals::ColumnKind;
use crate::normal;

/// Rate of the exponential continuous marginals.
pub const EXP_RATE: f64 = 1.0 / 3.0;
/// Ordinal cutpoints are drawn uniformly from `[-CUT_RANGE, CUT_RANGE]`.
pub const CUT_RANGE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    /// Missing completely at random, at the configured ratio.
    Mcar,
    /// Missingness depends on the cell's own value (fixed probability table).
    Mnar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub p_cont: usize,
    pub p_ord: usize,
    pub p_bin: usize,
    pub ordinal_levels: u32,
    pub n_per_segment: usize,
    /// First row of each new segment.
    pub change_points: Vec<usize>,
    pub missing_ratio: f64,
    pub mechanism: Mechanism,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            p_cont: 5,
            p_ord: 5,
            p_bin: 5,
            ordinal_levels: 5,
            n_per_segment: 2000,
            change_points: vec![2000, 4000],
            missing_ratio: 0.4,
            mechanism: Mechanism::Mcar,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Equal segments of `n_per_segment` rows with `changes` change points.
    pub fn segmented(n_per_segment: usize, changes: usize, seed: u64) -> Self {
        Self {
            n_per_segment,
            change_points: (1..=changes).map(|k| k * n_per_segment).collect(),
            seed,
            ..Self::default()
        }
    }

    /// A single stationary segment of `n` rows.
    pub fn stationary(n: usize, seed: u64) -> Self {
        Self {
            n_per_segment: n,
            change_points: Vec::new(),
            seed,
            ..Self::default()
        }
    }

    pub fn p(&self) -> usize {
        self.p_cont + self.p_ord + self.p_bin
    }

    pub fn n_rows(&self) -> usize {
        self.n_per_segment * (self.change_points.len() + 1)
    }

    pub fn kinds(&self) -> Vec<ColumnKind> {
        std::iter::repeat_n(ColumnKind::Continuous, self.p_cont)
            .chain(std::iter::repeat_n(ColumnKind::ordinal(self.ordinal_levels), self.p_ord))
            .chain(std::iter::repeat_n(ColumnKind::binary(), self.p_bin))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p() == 0 || self.n_per_segment == 0 {
            return Err(Error::Precondition("empty synthetic configuration".into()));
        }
        if self.p_ord > 0 && self.ordinal_levels < 2 {
            return Err(Error::Precondition("ordinal columns need at least 2 levels".into()));
        }
        if !(0.0..1.0).contains(&self.missing_ratio) {
            return Err(Error::Precondition(format!(
                "missing ratio {} outside [0, 1)",
                self.missing_ratio
            )));
        }
        let n = self.n_rows();
        let mut prev = 0;
        for &c in &self.change_points {
            if c <= prev || c >= n {
                return Err(Error::Precondition(format!(
                    "change points must increase strictly inside (0, {n})"
                )));
            }
            prev = c;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthStream {
    pub kinds: Vec<ColumnKind>,
    pub truth: DataMatrix,
    /// Row-major; `true` marks a masked cell.
    pub mask: Vec<bool>,
    /// Segment index of each row.
    pub labels: Vec<usize>,
    pub sigmas: Vec<DMatrix<f64>>,
    /// Latent cutpoints per column (empty for continuous columns).
    pub cutpoints: Vec<Vec<f64>>,
}

impl SynthStream {
    /// Ground truth with masked cells set to missing.
    pub fn observed(&self) -> DataMatrix {
        self.truth.masked(&self.mask)
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `P_E(G G^T + 0.1 I)` for a standard normal `p x p` matrix `G`.
pub fn random_correlation(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
    let a = &g * g.transpose() + DMatrix::identity(p, p) * 0.1;
    scale_to_correlation(&a).expect("G G^T + 0.1 I has a positive diagonal")
}

/// Exp(rate) quantile of `Φ(z)`, written to keep precision in the upper tail.
fn exp_quantile_of_latent(z: f64) -> f64 {
    -normal::cdf(-z).ln() / EXP_RATE
}

pub fn generate_stream(cfg: &SynthConfig) -> Result<SynthStream> {
    cfg.validate()?;
    let p = cfg.p();
    let n = cfg.n_rows();
    let kinds = cfg.kinds();

    let n_segments = cfg.change_points.len() + 1;
    let sigmas: Vec<DMatrix<f64>> = (0..n_segments)
        .map(|k| random_correlation(p, derive_seed(cfg.seed, 100 + k as u64)))
        .collect();
    let factors: Vec<DMatrix<f64>> = sigmas
        .iter()
        .map(|s| {
            nalgebra::Cholesky::new(s.clone())
                .expect("random correlation is positive definite")
                .l()
        })
        .collect();

    let mut cut_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let cutpoints: Vec<Vec<f64>> = kinds
        .iter()
        .map(|k| match *k {
            ColumnKind::Continuous => Vec::new(),
            ColumnKind::Ordinal { levels, .. } => {
                let mut c: Vec<f64> = (0..levels - 1)
                    .map(|_| cut_rng.random_range(-CUT_RANGE..CUT_RANGE))
                    .collect();
                c.sort_by(f64::total_cmp);
                c
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let mut labels = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * p);
    let mut eps = nalgebra::DVector::zeros(p);
    for i in 0..n {
        let seg = cfg.change_points.partition_point(|&c| c <= i);
        labels.push(seg);
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        let z = &factors[seg] * &eps;
        for j in 0..p {
            values.push(match kinds[j] {
                ColumnKind::Continuous => exp_quantile_of_latent(z[j]),
                ColumnKind::Ordinal { first, .. } => {
                    first as f64 + cutpoints[j].partition_point(|&c| c < z[j]) as f64
                }
            });
        }
    }
    let truth = DataMatrix::new(p, values)?;
    let mask_seed = derive_seed(cfg.seed, 3);
    let mask = match cfg.mechanism {
        Mechanism::Mcar => mask_mcar(&kinds, n, cfg.missing_ratio, mask_seed),
        Mechanism::Mnar => mask_mnar(&truth, &kinds, mask_seed),
    };
    Ok(SynthStream {
        kinds,
        truth,
        mask,
        labels,
        sigmas,
        cutpoints,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum KindGroup {
    Continuous,
    Ordinal,
    Binary,
}

fn group(k: &ColumnKind) -> KindGroup {
    if k.is_continuous() {
        KindGroup::Continuous
    } else if k.is_binary() {
        KindGroup::Binary
    } else {
        KindGroup::Ordinal
    }
}

/// Masks, in every row and for each column type separately, a uniformly
/// chosen subset of `ratio` of that type's columns (a fractional remainder
/// adds one more column with matching probability).
pub fn mask_mcar(kinds: &[ColumnKind], n: usize, ratio: f64, seed: u64) -> Vec<bool> {
    let p = kinds.len();
    let groups: Vec<Vec<usize>> = [KindGroup::Continuous, KindGroup::Ordinal, KindGroup::Binary]
        .iter()
        .map(|g| (0..p).filter(|&j| group(&kinds[j]) == *g).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; n * p];
    for i in 0..n {
        for cols in groups.iter().filter(|c| !c.is_empty()) {
            let target = ratio * cols.len() as f64;
            let mut k = target.floor() as usize;
            if rng.random::<f64>() < target - target.floor() {
                k += 1;
            }
            for idx in sample(&mut rng, cols.len(), k.min(cols.len())) {
                mask[i * p + cols[idx]] = true;
            }
        }
    }
    mask
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Missing probability for one cell under the value-dependent table:
/// larger values are masked less often.
pub fn mnar_probability(kind: ColumnKind, value: f64, q25: f64, q75: f64) -> f64 {
    match kind {
        ColumnKind::Continuous => {
            if value > q75 {
                0.2
            } else if value < q25 {
                0.6
            } else {
                0.4
            }
        }
        ColumnKind::Ordinal { levels, first } => {
            let rel = (value - first as f64) / (levels - 1) as f64;
            if rel > 0.5 {
                0.2
            } else if rel < 0.5 {
                0.6
            } else {
                0.4
            }
        }
    }
}

/// Entrywise independent masking with value-dependent probabilities:
/// continuous cells above the column's 75% quantile 0.2, between the
/// quartiles 0.4, below the 25% quantile 0.6; ordinal levels {5, 4} 0.2,
/// {3} 0.4, {2, 1} 0.6 (upper/middle/lower of the level range in general);
/// binary 1 → 0.2, 0 → 0.6. A constant column falls in the middle band.
pub fn mask_mnar(data: &DataMatrix, kinds: &[ColumnKind], seed: u64) -> Vec<bool> {
    let p = data.ncols();
    let quartiles: Vec<(f64, f64)> = (0..p)
        .map(|j| {
            let mut col: Vec<f64> = data.column(j).filter(|v| !v.is_nan()).collect();
            if col.is_empty() {
                return (0.0, 0.0);
            }
            col.sort_by(f64::total_cmp);
            (quantile_sorted(&col, 0.25), quantile_sorted(&col, 0.75))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    data.values()
        .iter()
        .enumerate()
        .map(|(idx, &v)| {
            let j = idx % p;
            let (q25, q75) = quartiles[j];
            let prob = mnar_probability(kinds[j], v, q25, q75);
            rng.random::<f64>() < prob
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, is_correlation};

    #[test]
    fn correlation_recipe() {
        assert_eq!(random_correlation(1, 3), DMatrix::identity(1, 1));
        for seed in 0..20 {
            let s = random_correlation(6, seed);
            assert!(is_correlation(&s, 1e-12));
        }
        let d = frobenius(&(random_correlation(5, 1) - random_correlation(5, 2)));
        assert!(d > 0.0);
        assert_eq!(random_correlation(5, 7), random_correlation(5, 7));
    }

    #[test]
    fn mcar_fraction_exact() {
        let s = generate_stream(&SynthConfig::default()).unwrap();
        assert_eq!(s.truth.nrows(), 6000);
        assert_eq!(s.truth.ncols(), 15);
        let frac = s.mask.iter().filter(|&&m| m).count() as f64 / s.mask.len() as f64;
        assert!((frac - 0.4).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn labels_change_at_boundaries() {
        let s = generate_stream(&SynthConfig::default()).unwrap();
        assert_eq!(s.labels[1999], 0);
        assert_eq!(s.labels[2000], 1);
        assert_eq!(s.labels[3999], 1);
        assert_eq!(s.labels[4000], 2);
        assert_eq!(s.sigmas.len(), 3);
    }

    #[test]
    fn continuous_mean_is_three() {
        let s = generate_stream(&SynthConfig {
            p_ord: 0,
            p_bin: 0,
            p_cont: 2,
            ..SynthConfig::stationary(10_000, 8)
        })
        .unwrap();
        let mean = s.truth.column(0).sum::<f64>() / 10_000.0;
        assert!((mean - 3.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn levels_are_valid() {
        let s = generate_stream(&SynthConfig::stationary(500, 2)).unwrap();
        for i in 0..500 {
            for (j, k) in s.kinds.iter().enumerate() {
                assert!(k.is_valid_level(s.truth.get(i, j)));
            }
        }
    }

    #[test]
    fn reproducible() {
        let cfg = SynthConfig::segmented(100, 2, 42);
        let a = generate_stream(&cfg).unwrap();
        let b = generate_stream(&cfg).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.mask, b.mask);
        let c = generate_stream(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn mnar_table_rates() {
        let n = 10_000;
        let ones = DataMatrix::new(1, vec![1.0; n]).unwrap();
        let m = mask_mnar(&ones, &[ColumnKind::binary()], 5);
        let rate = m.iter().filter(|&&x| x).count() as f64 / n as f64;
        assert!((rate - 0.2).abs() < 0.02, "{rate}");

        let threes = DataMatrix::new(1, vec![3.0; n]).unwrap();
        let m = mask_mnar(&threes, &[ColumnKind::ordinal(5)], 6);
        let rate = m.iter().filter(|&&x| x).count() as f64 / n as f64;
        assert!((rate - 0.4).abs() < 0.02, "{rate}");

        let constant = DataMatrix::new(1, vec![2.5; n]).unwrap();
        let m = mask_mnar(&constant, &[ColumnKind::Continuous], 7);
        let rate = m.iter().filter(|&&x| x).count() as f64 / n as f64;
        assert!((rate - 0.4).abs() < 0.02, "{rate}");

        assert_eq!(mnar_probability(ColumnKind::ordinal(5), 5.0, 0.0, 0.0), 0.2);
        assert_eq!(mnar_probability(ColumnKind::ordinal(5), 4.0, 0.0, 0.0), 0.2);
        assert_eq!(mnar_probability(ColumnKind::ordinal(5), 2.0, 0.0, 0.0), 0.6);
        assert_eq!(mnar_probability(ColumnKind::ordinal(5), 1.0, 0.0, 0.0), 0.6);
        assert_eq!(mnar_probability(ColumnKind::binary(), 0.0, 0.0, 0.0), 0.6);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_stream(&SynthConfig {
            missing_ratio: 1.0,
            ..SynthConfig::stationary(10, 0)
        })
        .is_err());
        assert!(generate_stream(&SynthConfig {
            change_points: vec![5, 5],
            ..SynthConfig::stationary(10, 0)
        })
        .is_err());
    }
}
