//! Row-major numeric tables with `NaN` marking missing cells.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    ncols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(ncols: usize, values: Vec<f64>) -> Result<Self> {
        if ncols == 0 {
            return Err(Error::Domain("table must have at least one column".into()));
        }
        if !values.len().is_multiple_of(ncols) {
            return Err(Error::Domain(format!(
                "{} values do not fill rows of {ncols} columns",
                values.len()
            )));
        }
        Ok(Self { ncols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Domain(format!(
                    "row {i} has {} columns, expected {ncols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(ncols, values)
    }

    pub fn empty(ncols: usize) -> Self {
        Self {
            ncols,
            values: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.ncols, "row width mismatch");
        self.values.extend_from_slice(row);
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.values.len() / self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ncols + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn view(&self) -> DataView<'_> {
        DataView {
            ncols: self.ncols,
            values: &self.values,
        }
    }

    /// Rows `start..end` as a borrowed batch.
    pub fn slice(&self, start: usize, end: usize) -> DataView<'_> {
        DataView {
            ncols: self.ncols,
            values: &self.values[start * self.ncols..end * self.ncols],
        }
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.ncols).copied()
    }

    /// Copy with the cells flagged in `mask` set to missing.
    pub fn masked(&self, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), self.values.len());
        let values = self
            .values
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { f64::NAN } else { v })
            .collect();
        Self {
            ncols: self.ncols,
            values,
        }
    }
}

/// Borrowed contiguous block of rows.
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    ncols: usize,
    values: &'a [f64],
}

impl<'a> DataView<'a> {
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.values.len() / self.ncols
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &'a [f64]> + 'a {
        self.values.chunks_exact(self.ncols)
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> DataView<'a> {
        DataView {
            ncols: self.ncols,
            values: &self.values[start * self.ncols..end * self.ncols],
        }
    }

    pub fn to_owned(&self) -> DataMatrix {
        DataMatrix {
            ncols: self.ncols,
            values: self.values.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slicing_and_masking() {
        let m = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.nrows(), 3);
        let v = m.slice(1, 3);
        assert_eq!(v.nrows(), 2);
        assert_eq!(v.row(0), &[3.0, 4.0]);
        assert_eq!(m.column(1).collect::<Vec<_>>(), vec![2.0, 4.0, 6.0]);
        let masked = m.masked(&[false, true, false, false, true, false]);
        assert!(masked.get(0, 1).is_nan());
        assert!(masked.get(2, 0).is_nan());
        assert_eq!(masked.get(1, 1), 4.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(DataMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
