//! Per-column running-window marginals.
//!
//! Each column keeps the `k` most recent observed values. The scaled empirical
//! CDF `F(v) = #{window <= v} / (n + 1)` gives the latent transform
//! `Φ^{-1} ∘ F`, and the window quantile function gives its inverse.
//! Ordinal levels map to latent intervals whose outermost boundaries are
//! clamped to `Φ^{-1}(0.5 / (n + 1))` and its mirror, so the only unbounded
//! regions belong to missing cells.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Default running-window length.
pub const DEFAULT_WINDOW: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Continuous,
    /// Integer levels `first, first + 1, ..., first + levels - 1`.
    Ordinal { levels: u32, first: i32 },
}

impl ColumnKind {
    /// Ordinal column with levels `1..=levels`.
    pub fn ordinal(levels: u32) -> Self {
        ColumnKind::Ordinal { levels, first: 1 }
    }

    /// Binary column with levels `{0, 1}`.
    pub fn binary() -> Self {
        ColumnKind::Ordinal {
            levels: 2,
            first: 0,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, ColumnKind::Continuous)
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, ColumnKind::Ordinal { levels: 2, .. })
    }

    pub fn is_valid_level(&self, v: f64) -> bool {
        match *self {
            ColumnKind::Continuous => v.is_finite(),
            ColumnKind::Ordinal { levels, first } => {
                v.fract() == 0.0 && v >= first as f64 && v < first as f64 + levels as f64
            }
        }
    }

    /// Parses a comma separated schema such as `cont,ord5,bin`.
    pub fn parse_schema(s: &str) -> Result<Vec<ColumnKind>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }

    pub fn format_schema(kinds: &[ColumnKind]) -> String {
        kinds
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ColumnKind::Continuous => write!(f, "cont"),
            ColumnKind::Ordinal {
                levels: 2,
                first: 0,
            } => write!(f, "bin"),
            ColumnKind::Ordinal { levels, first: 1 } => write!(f, "ord{levels}"),
            ColumnKind::Ordinal { levels, first } => write!(f, "ord{levels}@{first}"),
        }
    }
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Schema(format!("unknown column kind `{s}`"));
        match s {
            "cont" | "continuous" => return Ok(ColumnKind::Continuous),
            "bin" | "binary" => return Ok(ColumnKind::binary()),
            _ => {}
        }
        let rest = s.strip_prefix("ord").ok_or_else(bad)?;
        let (levels, first) = match rest.split_once('@') {
            Some((l, f)) => (l, f.parse::<i32>().map_err(|_| bad())?),
            None => (rest, 1),
        };
        let levels: u32 = levels.parse().map_err(|_| bad())?;
        if levels < 2 {
            return Err(Error::Schema(format!(
                "ordinal column needs at least 2 levels, got `{s}`"
            )));
        }
        Ok(ColumnKind::Ordinal { levels, first })
    }
}

/// Preimage of an observation under the marginal transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentRegion {
    pub lower: f64,
    pub upper: f64,
}

impl LatentRegion {
    pub const MISSING: LatentRegion = LatentRegion {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn point(z: f64) -> Self {
        Self { lower: z, upper: z }
    }

    pub fn interval(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn is_missing(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, z: f64) -> bool {
        if self.is_point() {
            z == self.lower
        } else {
            z > self.lower && z <= self.upper
        }
    }
}

#[derive(Debug, Clone)]
pub struct MarginalModel {
    column: usize,
    kind: ColumnKind,
    capacity: usize,
    window: VecDeque<f64>,
    sorted: Vec<f64>,
    observed_count: u64,
}

impl MarginalModel {
    pub fn new(column: usize, kind: ColumnKind, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Precondition("window capacity must be positive".into()));
        }
        if let ColumnKind::Ordinal { levels, .. } = kind {
            if levels < 2 {
                return Err(Error::Schema(format!(
                    "column {column}: ordinal column needs at least 2 levels"
                )));
            }
        }
        Ok(Self {
            column,
            kind,
            capacity,
            window: VecDeque::with_capacity(capacity),
            sorted: Vec::with_capacity(capacity),
            observed_count: 0,
        })
    }

    /// Marginal over all non-missing `values`, with the window sized to hold
    /// them (offline marginals).
    pub fn from_values(column: usize, kind: ColumnKind, values: &[f64]) -> Result<Self> {
        let observed: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
        let mut m = Self::new(column, kind, observed.len().max(1))?;
        for v in &observed {
            m.check_value(*v)?;
        }
        m.sorted = observed.clone();
        m.sorted.sort_by(f64::total_cmp);
        m.observed_count = observed.len() as u64;
        m.window = observed.into();
        Ok(m)
    }

    /// Rebuilds a marginal from a stored window (oldest first).
    pub fn from_window(
        column: usize,
        kind: ColumnKind,
        capacity: usize,
        window: Vec<f64>,
        observed_count: u64,
    ) -> Result<Self> {
        if window.len() > capacity {
            return Err(Error::Snapshot(format!(
                "column {column}: window holds {} values but capacity is {capacity}",
                window.len()
            )));
        }
        let mut m = Self::new(column, kind, capacity)?;
        for v in &window {
            m.check_value(*v)?;
        }
        m.sorted = window.clone();
        m.sorted.sort_by(f64::total_cmp);
        m.window = window.into();
        m.observed_count = observed_count;
        Ok(m)
    }

    pub fn column(&self) -> usize {
        self.column
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Window occupancy `n`.
    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn observed_count(&self) -> u64 {
        self.observed_count
    }

    /// Window contents, oldest first.
    pub fn window(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    pub fn sorted_window(&self) -> &[f64] {
        &self.sorted
    }

    fn check_value(&self, value: f64) -> Result<()> {
        if !self.kind.is_valid_level(value) {
            return Err(Error::Domain(format!(
                "column {}: value {value} is not valid for kind {}",
                self.column, self.kind
            )));
        }
        Ok(())
    }

    /// Appends an observed value, evicting the oldest when full.
    pub fn update_window(&mut self, value: f64) -> Result<()> {
        self.check_value(value)?;
        if self.window.len() == self.capacity {
            let old = self.window.pop_front().expect("full window is non-empty");
            // Any copy of an equal value will do.
            let pos = self.sorted.partition_point(|&x| x < old);
            self.sorted.remove(pos);
        }
        self.window.push_back(value);
        let pos = self.sorted.partition_point(|&x| x <= value);
        self.sorted.insert(pos, value);
        self.observed_count += 1;
        Ok(())
    }

    fn count_le(&self, v: f64) -> usize {
        self.sorted.partition_point(|&x| x <= v)
    }

    fn count_lt(&self, v: f64) -> usize {
        self.sorted.partition_point(|&x| x < v)
    }

    /// `Φ^{-1}(0.5 / (n + 1))`, the lower boundary of the lowest ordinal level.
    pub fn lower_clamp(&self) -> f64 {
        normal::ppf(0.5 / (self.len() as f64 + 1.0))
    }

    pub fn upper_clamp(&self) -> f64 {
        -self.lower_clamp()
    }

    /// Latent boundary for an ECDF count.
    fn boundary(&self, count: usize) -> f64 {
        let n = self.len();
        if count == 0 {
            self.lower_clamp()
        } else if count >= n {
            self.upper_clamp()
        } else {
            normal::ppf(count as f64 / (n as f64 + 1.0))
        }
    }

    /// `f_j^{-1}(value)`; `NaN` is missing and maps to the whole line.
    pub fn to_latent_region(&self, value: f64) -> Result<LatentRegion> {
        if value.is_nan() {
            return Ok(LatentRegion::MISSING);
        }
        if self.is_empty() {
            return Err(Error::NotFitted {
                column: self.column,
            });
        }
        self.check_value(value)?;
        let n = self.len() as f64;
        match self.kind {
            ColumnKind::Continuous => {
                let count = (self.count_le(value) as f64).max(0.5);
                Ok(LatentRegion::point(normal::ppf(count / (n + 1.0))))
            }
            ColumnKind::Ordinal { .. } => {
                let lower = self.boundary(self.count_lt(value));
                let upper = self.boundary(self.count_le(value));
                Ok(LatentRegion::interval(lower, upper))
            }
        }
    }

    /// `f_j(z)`: window quantile at `Φ(z)`, lower order statistic.
    pub fn from_latent(&self, z: f64) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::NotFitted {
                column: self.column,
            });
        }
        let n = self.len();
        let q = normal::cdf(z);
        let idx = ((q * n as f64).ceil() as usize).clamp(1, n);
        Ok(self.sorted[idx - 1])
    }

    /// Latent thresholds between consecutive declared levels.
    pub fn ordinal_cutpoints(&self) -> Result<Vec<f64>> {
        let ColumnKind::Ordinal { levels, first } = self.kind else {
            return Err(Error::Misuse(format!(
                "column {} is continuous and has no cutpoints",
                self.column
            )));
        };
        if self.is_empty() {
            return Err(Error::NotFitted {
                column: self.column,
            });
        }
        Ok((0..levels - 1)
            .map(|i| self.boundary(self.count_le(first as f64 + i as f64)))
            .collect())
    }

    /// Bins a latent value through the cutpoints; results stay within the
    /// range of levels present in the window.
    pub fn level_for_latent(&self, z: f64, cutpoints: &[f64]) -> f64 {
        let ColumnKind::Ordinal { first, .. } = self.kind else {
            unreachable!("level_for_latent on continuous column")
        };
        let k = cutpoints.partition_point(|&c| c < z);
        let level = first as f64 + k as f64;
        level.clamp(self.sorted[0], self.sorted[self.len() - 1])
    }

    /// Median of the window values (mean of the middle pair for even sizes).
    pub fn median(&self) -> Option<f64> {
        median_sorted(&self.sorted)
    }
}

pub(crate) fn median_sorted(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        None
    } else if n % 2 == 1 {
        Some(sorted[n / 2])
    } else {
        Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2]))
    }
}
