use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Spend sequence `γ_k = 6 / (π² k²)`, `k >= 1`; sums to one.
pub fn lord_gamma(k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        6.0 / (PI * PI * (k * k) as f64)
    }
}

/// LORD++ online FDR state. Levels depend only on the recorded decisions:
///
/// `α_t = γ_t W0 + (α − W0) γ_{t−τ_1} + α Σ_{j≥2} γ_{t−τ_j}`
///
/// where `τ_j` are the test indices of past rejections. Every emitted level
/// is positive; there is no zero-wealth state.
#[derive(Debug, Clone, PartialEq)]
pub struct FdrState {
    pub alpha: f64,
    /// Initial wealth `W0 ∈ (0, α]`.
    pub w0: f64,
    decisions: Vec<bool>,
    rejections: Vec<usize>,
}

impl FdrState {
    /// `W0 = α / 2`.
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_wealth(alpha, alpha / 2.0)
    }

    pub fn with_wealth(alpha: f64, w0: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Precondition(format!("FDR level {alpha} outside (0, 1)")));
        }
        if !(w0 > 0.0 && w0 <= alpha) {
            return Err(Error::Precondition(format!(
                "initial wealth {w0} outside (0, {alpha}]"
            )));
        }
        Ok(Self {
            alpha,
            w0,
            decisions: Vec::new(),
            rejections: Vec::new(),
        })
    }

    /// Decisions `R_1, ..., R_{t-1}` recorded so far.
    pub fn decisions(&self) -> &[bool] {
        &self.decisions
    }

    /// Index `t` of the next test.
    pub fn next_test(&self) -> usize {
        self.decisions.len() + 1
    }

    /// Level for the next test.
    pub fn alpha_t(&self) -> f64 {
        let t = self.next_test();
        let mut a = lord_gamma(t) * self.w0;
        for (j, &tau) in self.rejections.iter().enumerate() {
            let weight = if j == 0 { self.alpha - self.w0 } else { self.alpha };
            a += weight * lord_gamma(t - tau);
        }
        a
    }

    pub fn record(&mut self, decision: bool) {
        let t = self.next_test();
        self.decisions.push(decision);
        if decision {
            self.rejections.push(t);
        }
    }
}
