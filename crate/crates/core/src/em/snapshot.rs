//! Versioned JSON snapshot of a [`CopulaModel`]. Floats are written in
//! shortest round-trip form, so loading a snapshot reproduces the model
//! exactly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::CopulaModel;
use crate::error::{Error, Result};
use crate::marginals::{ColumnKind, MarginalModel};

pub const SNAPSHOT_VERSION: u32 = 1;
const FORMAT: &str = "copula-stream-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub format: String,
    pub version: u32,
    pub p: usize,
    pub kinds: Vec<String>,
    /// Row-major Σ.
    pub sigma: Vec<f64>,
    pub marginals: Vec<WindowSnapshot>,
    /// Online updates applied so far, when saved from an online run.
    #[serde(default)]
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSnapshot {
    pub capacity: usize,
    pub observed_count: u64,
    /// Oldest first.
    pub window: Vec<f64>,
}

impl ModelSnapshot {
    pub fn capture(model: &CopulaModel, updates: usize) -> Self {
        let p = model.p();
        let sigma = (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .map(|(i, j)| model.sigma[(i, j)])
            .collect();
        Self {
            format: FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            p,
            kinds: model.kinds().iter().map(ToString::to_string).collect(),
            sigma,
            marginals: model
                .marginals
                .iter()
                .map(|m| WindowSnapshot {
                    capacity: m.capacity(),
                    observed_count: m.observed_count(),
                    window: m.window().collect(),
                })
                .collect(),
            updates,
        }
    }

    pub fn restore(&self) -> Result<CopulaModel> {
        if self.format != FORMAT {
            return Err(Error::Snapshot(format!("unknown format `{}`", self.format)));
        }
        if self.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported version {} (expected {SNAPSHOT_VERSION})",
                self.version
            )));
        }
        let p = self.p;
        if self.kinds.len() != p || self.marginals.len() != p || self.sigma.len() != p * p {
            return Err(Error::Snapshot("inconsistent dimensions".into()));
        }
        let marginals = self
            .kinds
            .iter()
            .zip(&self.marginals)
            .enumerate()
            .map(|(j, (k, w))| {
                let kind: ColumnKind = k.parse()?;
                MarginalModel::from_window(j, kind, w.capacity, w.window.clone(), w.observed_count)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CopulaModel {
            sigma: DMatrix::from_row_slice(p, p, &self.sigma),
            marginals,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Snapshot(e.to_string()))
    }
}
