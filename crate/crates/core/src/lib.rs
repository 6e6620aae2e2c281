//! Online Gaussian copula imputation for streaming mixed-type tables, with
//! change-point detection on the latent correlation.
//!
//! The model posits a latent `z ~ N(0, Σ)` pushed through per-column monotone
//! maps to produce continuous, ordinal and binary observations. Marginals are
//! tracked with running windows ([`marginals`]), the correlation is fitted by
//! offline, minibatch or online EM ([`em`]) using approximate truncated-normal
//! conditional moments ([`truncnorm`]), and shifts in Σ are tested with a
//! Monte Carlo test under online FDR control ([`cpd`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cpd;
pub mod data;
pub mod em;
mod error;
pub mod linalg;
pub mod marginals;
pub mod metrics;
pub mod normal;
mod par;
pub mod synth;
pub mod truncnorm;

pub use data::{DataMatrix, DataView};
pub use em::{CopulaModel, EmConfig, OnlineEmState, StepSize};
pub use error::{Error, Result};
pub use marginals::{ColumnKind, LatentRegion, MarginalModel};
pub use truncnorm::{EStepResult, RowObservation};
