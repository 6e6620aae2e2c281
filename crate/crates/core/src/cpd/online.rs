use super::fdr::FdrState;
use super::mc::{mc_cpd_test, McOptions};
use crate::data::DataView;
use crate::em::{batch_bounds, OnlineEmState};
use crate::error::{Error, Result};
use crate::synth::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpdLoopConfig {
    pub batch_size: usize,
    /// Monte Carlo replicates `B`.
    pub replicates: usize,
    pub alpha: f64,
    /// Batches left untested after each detection.
    pub burn_in: usize,
    /// Untested batches at the start of the stream, after the warm-up batch.
    pub initial_burn_in: usize,
    pub seed: u64,
    pub biased_p: bool,
}

impl Default for CpdLoopConfig {
    fn default() -> Self {
        Self {
            batch_size: 40,
            replicates: 99,
            alpha: 0.05,
            burn_in: 3,
            initial_burn_in: 3,
            seed: 0,
            biased_p: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchStatus {
    /// First batch; the marginal windows were empty, so nothing to test against.
    WarmUp,
    /// Suppressed by a burn-in period.
    BurnIn,
    Tested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    /// Batch index, starting at 1.
    pub t: usize,
    pub start_row: usize,
    pub end_row: usize,
    pub status: BatchStatus,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub alpha_t: Option<f64>,
    pub decision: bool,
}

#[derive(Debug, Clone)]
pub struct CpdLoopReport {
    pub records: Vec<DetectionRecord>,
    pub warnings: Vec<String>,
    pub state: OnlineEmState,
}

impl CpdLoopReport {
    /// Batch indices with a detection.
    pub fn detections(&self) -> Vec<usize> {
        self.records.iter().filter(|r| r.decision).map(|r| r.t).collect()
    }

    /// Tab-separated `t, statistic, p_value, alpha_t, decision`.
    pub fn to_delimited(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        let mut s = String::from("t\tstart_row\tend_row\tstatistic\tp_value\talpha_t\tdecision\tstatus\n");
        for r in &self.records {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.t,
                r.start_row,
                r.end_row,
                fmt(r.statistic),
                fmt(r.p_value),
                r.alpha_t.map_or_else(|| "NA".to_string(), |x| format!("{x:.6e}")),
                u8::from(r.decision),
                match r.status {
                    BatchStatus::WarmUp => "warmup",
                    BatchStatus::BurnIn => "burnin",
                    BatchStatus::Tested => "tested",
                }
            ));
        }
        s
    }
}

/// Runs the model over consecutive batches of `data`, testing each batch
/// against the model fitted on everything before it.
///
/// Batch `t` is rejected when its p-value is below the level handed out by
/// the FDR rule. Batches inside a burn-in window still update the model but
/// are not tested and do not consume a test index.
pub fn online_cpd_loop(
    mut state: OnlineEmState,
    data: DataView<'_>,
    cfg: &CpdLoopConfig,
) -> Result<CpdLoopReport> {
    let p = state.model.p();
    if cfg.batch_size <= p {
        return Err(Error::Precondition(format!(
            "batch size {} must exceed the {p} columns",
            cfg.batch_size
        )));
    }
    if cfg.replicates == 0 {
        return Err(Error::Precondition("at least one Monte Carlo replicate required".into()));
    }
    let mut fdr = FdrState::new(cfg.alpha)?;
    let min_p = 1.0 / (cfg.replicates + 1) as f64;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut burn = cfg.initial_burn_in;
    let mut warmed = state.model.marginals.iter().all(|m| !m.is_empty());

    for (k, (s, e)) in batch_bounds(data.nrows(), cfg.batch_size, p).into_iter().enumerate() {
        let t = k + 1;
        let batch = data.slice_rows(s, e);
        let mut rec = DetectionRecord {
            t,
            start_row: s,
            end_row: e,
            status: BatchStatus::Tested,
            statistic: None,
            p_value: None,
            alpha_t: None,
            decision: false,
        };
        if !warmed || burn > 0 {
            rec.status = if warmed { BatchStatus::BurnIn } else { BatchStatus::WarmUp };
            if warmed {
                burn -= 1;
            }
            state.online_update(batch).map_err(|e| e.at_row(s))?;
            warmed = state.model.marginals.iter().all(|m| !m.is_empty());
            records.push(rec);
            continue;
        }
        let alpha_t = fdr.alpha_t();
        if alpha_t < min_p {
            warnings.push(format!(
                "batch {t}: level {alpha_t:.3e} is below the smallest attainable p-value {min_p:.3e}; \
                 raise the number of replicates to make detection possible"
            ));
        }
        let opts = McOptions {
            replicates: cfg.replicates,
            seed: derive_seed(cfg.seed, t as u64),
            biased: cfg.biased_p,
        };
        let (res, next) = mc_cpd_test(&state, batch, alpha_t, &opts).map_err(|e| e.at_row(s))?;
        state = next;
        fdr.record(res.decision);
        if res.decision {
            burn = cfg.burn_in;
        }
        rec.statistic = Some(res.statistic);
        rec.p_value = Some(res.p_value);
        rec.alpha_t = Some(alpha_t);
        rec.decision = res.decision;
        records.push(rec);
    }
    Ok(CpdLoopReport {
        records,
        warnings,
        state,
    })
}
