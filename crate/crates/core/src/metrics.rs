//! Imputation error measures over masked cells: MAE, RMSE and the scaled
//! MAE (method MAE over the MAE of per-column median imputation).

use std::fmt::Write as _;

use crate::data::{DataMatrix, DataView};
use crate::error::{Error, Result};
use crate::marginals::{median_sorted, ColumnKind};

/// Column groups scored separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KindGroup {
    Continuous,
    Ordinal,
    Binary,
}

impl KindGroup {
    pub const ALL: [KindGroup; 3] = [KindGroup::Continuous, KindGroup::Ordinal, KindGroup::Binary];

    pub fn of(kind: ColumnKind) -> Self {
        if kind.is_continuous() {
            KindGroup::Continuous
        } else if kind.is_binary() {
            KindGroup::Binary
        } else {
            KindGroup::Ordinal
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KindGroup::Continuous => "continuous",
            KindGroup::Ordinal => "ordinal",
            KindGroup::Binary => "binary",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Per-kind SMAE. `None` means the kind had no scored cells.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmaeReport {
    pub values: [Option<f64>; 3],
    /// Columns with scored cells left out because median imputation was exact.
    pub excluded_columns: [usize; 3],
}

impl SmaeReport {
    pub fn get(&self, g: KindGroup) -> Option<f64> {
        self.values[g.index()]
    }

    /// Mean over the kinds that are present.
    pub fn mean_present(&self) -> Option<f64> {
        let present: Vec<f64> = self.values.iter().flatten().copied().collect();
        if present.is_empty() {
            None
        } else {
            Some(present.iter().sum::<f64>() / present.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub smae: SmaeReport,
    pub mae: f64,
    pub rmse: f64,
    pub scored: usize,
    pub scored_per_kind: [usize; 3],
}

/// Median of the observed (non-missing) entries of each reference column.
pub fn column_medians(reference: DataView<'_>) -> Vec<Option<f64>> {
    (0..reference.ncols())
        .map(|j| {
            let mut col: Vec<f64> = reference.rows().map(|r| r[j]).filter(|v| !v.is_nan()).collect();
            col.sort_by(f64::total_cmp);
            median_sorted(&col)
        })
        .collect()
}

fn check_shapes(imputed: &DataMatrix, truth: &DataMatrix, mask: &[bool]) -> Result<()> {
    if imputed.ncols() != truth.ncols() || imputed.nrows() != truth.nrows() {
        return Err(Error::Domain(format!(
            "imputed is {}x{}, truth is {}x{}",
            imputed.nrows(),
            imputed.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    if mask.len() != truth.values().len() {
        return Err(Error::Domain(format!(
            "mask has {} cells, data has {}",
            mask.len(),
            truth.values().len()
        )));
    }
    Ok(())
}

/// Indices of masked cells whose ground truth is known.
fn scored_cells<'a>(truth: &'a DataMatrix, mask: &'a [bool]) -> impl Iterator<Item = usize> + 'a {
    mask.iter()
        .enumerate()
        .filter(move |&(idx, &m)| m && !truth.values()[idx].is_nan())
        .map(|(idx, _)| idx)
}

/// MAE and RMSE over the masked cells.
pub fn mae_rmse(imputed: &DataMatrix, truth: &DataMatrix, mask: &[bool]) -> Result<(f64, f64)> {
    check_shapes(imputed, truth, mask)?;
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for idx in scored_cells(truth, mask) {
        let e = imputed.values()[idx] - truth.values()[idx];
        abs += e.abs();
        sq += e * e;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Domain("no masked entries to score".into()));
    }
    Ok((abs / n as f64, (sq / n as f64).sqrt()))
}

/// Per-kind mean over columns of `MAE(method) / MAE(median)`, both on the
/// masked cells of that column.
pub fn smae(
    imputed: &DataMatrix,
    truth: &DataMatrix,
    mask: &[bool],
    kinds: &[ColumnKind],
    medians: &[Option<f64>],
) -> Result<SmaeReport> {
    check_shapes(imputed, truth, mask)?;
    let p = truth.ncols();
    if kinds.len() != p || medians.len() != p {
        return Err(Error::Domain(format!(
            "{} kinds and {} medians for {p} columns",
            kinds.len(),
            medians.len()
        )));
    }
    let mut method = vec![0.0; p];
    let mut baseline = vec![0.0; p];
    let mut count = vec![0usize; p];
    for idx in scored_cells(truth, mask) {
        let j = idx % p;
        let t = truth.values()[idx];
        let med = medians[j]
            .ok_or_else(|| Error::Domain(format!("column {j} has no reference median")))?;
        method[j] += (imputed.values()[idx] - t).abs();
        baseline[j] += (med - t).abs();
        count[j] += 1;
    }
    let mut sums = [0.0; 3];
    let mut used = [0usize; 3];
    let mut report = SmaeReport::default();
    for j in (0..p).filter(|&j| count[j] > 0) {
        let g = KindGroup::of(kinds[j]).index();
        if baseline[j] == 0.0 {
            report.excluded_columns[g] += 1;
            continue;
        }
        sums[g] += method[j] / baseline[j];
        used[g] += 1;
    }
    for g in 0..3 {
        if used[g] > 0 {
            report.values[g] = Some(sums[g] / used[g] as f64);
        }
    }
    Ok(report)
}

/// Full report: per-kind SMAE, overall MAE/RMSE and scored-cell counts.
pub fn score(
    imputed: &DataMatrix,
    truth: &DataMatrix,
    mask: &[bool],
    kinds: &[ColumnKind],
    reference: DataView<'_>,
) -> Result<ScoreReport> {
    let medians = column_medians(reference);
    let smae = smae(imputed, truth, mask, kinds, &medians)?;
    let (mae, rmse) = mae_rmse(imputed, truth, mask)?;
    let p = truth.ncols();
    let mut scored_per_kind = [0usize; 3];
    let mut scored = 0;
    for idx in scored_cells(truth, mask) {
        scored_per_kind[KindGroup::of(kinds[idx % p]).index()] += 1;
        scored += 1;
    }
    Ok(ScoreReport {
        smae,
        mae,
        rmse,
        scored,
        scored_per_kind,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl ScoreReport {
    /// Tab-separated table, one row per kind plus an overall row.
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("kind\tsmae\tscored\texcluded_columns\n");
        for g in KindGroup::ALL {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                g.name(),
                fmt_opt(self.smae.get(g)),
                self.scored_per_kind[g.index()],
                self.smae.excluded_columns[g.index()]
            );
        }
        let _ = writeln!(s, "overall_mae\t{:.6}\t{}\t", self.mae, self.scored);
        let _ = writeln!(s, "overall_rmse\t{:.6}\t{}\t", self.rmse, self.scored);
        s
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for g in KindGroup::ALL {
            let _ = writeln!(s, "smae_{}={}", g.name(), fmt_opt(self.smae.get(g)));
            let _ = writeln!(s, "scored_{}={}", g.name(), self.scored_per_kind[g.index()]);
            let _ = writeln!(
                s,
                "excluded_columns_{}={}",
                g.name(),
                self.smae.excluded_columns[g.index()]
            );
        }
        let _ = writeln!(s, "mae={:.6}", self.mae);
        let _ = writeln!(s, "rmse={:.6}", self.rmse);
        let _ = writeln!(s, "scored={}", self.scored);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_col(v: &[f64]) -> DataMatrix {
        DataMatrix::new(1, v.to_vec()).unwrap()
    }

    #[test]
    fn hand_arithmetic() {
        let truth = one_col(&[0.0, 0.0, 0.0, 9.0]);
        let imp = one_col(&[1.0, -1.0, 3.0, 9.0]);
        let (mae, rmse) = mae_rmse(&imp, &truth, &[true, true, true, false]).unwrap();
        assert_abs_diff_eq!(mae, 5.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rmse, (11.0f64 / 3.0).sqrt(), epsilon = 1e-15);

        let (mae, rmse) = mae_rmse(&one_col(&[3.0]), &one_col(&[1.0]), &[true]).unwrap();
        assert_eq!((mae, rmse), (2.0, 2.0));
        assert_eq!(mae_rmse(&truth, &truth, &[true; 4]).unwrap(), (0.0, 0.0));
        assert!(matches!(mae_rmse(&truth, &truth, &[false; 4]), Err(Error::Domain(_))));
    }

    #[test]
    fn median_and_truth_references() {
        let kinds = [ColumnKind::Continuous, ColumnKind::ordinal(5), ColumnKind::binary()];
        let truth = DataMatrix::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![2.0, 3.0, 1.0],
            vec![7.0, 5.0, 1.0],
            vec![4.0, 2.0, 0.0],
        ])
        .unwrap();
        let mask = vec![true, false, true, false, true, true, true, true, false, false, true, false];
        let observed = truth.masked(&mask);
        let medians = column_medians(observed.view());
        let mut imputed = truth.clone();
        for (idx, &m) in mask.iter().enumerate() {
            if m {
                imputed.row_mut(idx / 3)[idx % 3] = medians[idx % 3].unwrap();
            }
        }
        let r = smae(&imputed, &truth, &mask, &kinds, &medians).unwrap();
        for g in KindGroup::ALL {
            assert_eq!(r.get(g), Some(1.0), "{g:?}");
        }
        let r = smae(&truth, &truth, &mask, &kinds, &medians).unwrap();
        assert_eq!(r.values, [Some(0.0); 3]);
    }

    #[test]
    fn absent_kind_and_excluded_column() {
        let kinds = [ColumnKind::Continuous, ColumnKind::binary()];
        let truth = DataMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 1.0], vec![3.0, 1.0]]).unwrap();
        let mask = vec![true, true, false, false, false, false];
        let medians = vec![Some(2.0), Some(1.0)];
        let r = smae(&truth, &truth, &mask, &kinds, &medians).unwrap();
        assert_eq!(r.get(KindGroup::Continuous), Some(0.0));
        assert_eq!(r.get(KindGroup::Binary), None);
        assert_eq!(r.excluded_columns[KindGroup::Binary as usize], 1);
        assert_eq!(r.get(KindGroup::Ordinal), None);
    }

    #[test]
    fn affine_invariance() {
        let kinds = [ColumnKind::Continuous];
        let truth = one_col(&[1.0, 4.0, 2.0, 8.0, 5.0]);
        let imp = one_col(&[1.5, 3.0, 2.0, 6.0, 5.0]);
        let mask = [true, true, false, true, false];
        let observed = truth.masked(&mask);
        let a = score(&imp, &truth, &mask, &kinds, observed.view()).unwrap();
        let scale = |m: &DataMatrix| one_col(&m.values().iter().map(|v| 3.0 * v - 7.0).collect::<Vec<_>>());
        let (ts, is) = (scale(&truth), scale(&imp));
        let b = score(&is, &ts, &mask, &kinds, ts.masked(&mask).view()).unwrap();
        assert_abs_diff_eq!(
            a.smae.get(KindGroup::Continuous).unwrap(),
            b.smae.get(KindGroup::Continuous).unwrap(),
            epsilon = 1e-12
        );
        assert!(a.rmse >= a.mae);
        assert_eq!(a.scored, 3);
    }

    #[test]
    fn report_formats() {
        let truth = one_col(&[1.0, 2.0, 3.0]);
        let r = score(&truth, &truth, &[true, false, false], &[ColumnKind::Continuous], truth.view())
            .unwrap();
        let kv = r.to_key_value();
        assert!(kv.contains("smae_continuous=0.000000"));
        assert!(kv.contains("smae_binary=NA"));
        assert!(r.to_delimited().starts_with("kind\tsmae"));
    }

    #[test]
    fn shape_mismatch() {
        let a = one_col(&[1.0, 2.0]);
        let b = one_col(&[1.0]);
        assert!(mae_rmse(&a, &b, &[true]).is_err());
        assert!(mae_rmse(&a, &a, &[true]).is_err());
    }
}
