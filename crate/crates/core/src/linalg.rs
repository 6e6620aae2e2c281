//! Small dense linear-algebra helpers over `nalgebra::DMatrix`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Ridge added to the diagonal when a Cholesky factorization fails.
pub const RIDGE: f64 = 1e-6;

/// Smallest eigenvalue tolerated in a correlation estimate before shrinkage.
pub const PD_FLOOR: f64 = 1e-8;

const SHRINK_STEPS: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

/// `D^{-1/2} A D^{-1/2}` with `D = diag(A)`.
pub fn scale_to_correlation(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::Domain(format!("matrix is {}x{}, not square", p, a.ncols())));
    }
    let mut scale = Vec::with_capacity(p);
    for i in 0..p {
        let d = a[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!("diagonal entry {i} is {d}, not positive")));
        }
        scale.push(1.0 / d.sqrt());
    }
    let mut out = DMatrix::from_fn(p, p, |i, j| a[(i, j)] * scale[i] * scale[j]);
    for i in 0..p {
        out[(i, i)] = 1.0;
        for j in 0..i {
            let s = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    Ok(out)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factor of an SPD matrix, retrying once with a small ridge.
pub fn cholesky_with_ridge(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    let mut ridged = a.clone();
    for i in 0..ridged.nrows() {
        ridged[(i, i)] += RIDGE;
    }
    Cholesky::new(ridged).ok_or_else(|| {
        Error::Numerical(format!(
            "matrix singular even after ridge (condition estimate {:e})",
            condition_estimate(a)
        ))
    })
}

/// Shrinks toward the identity until the smallest eigenvalue clears
/// [`PD_FLOOR`]. Unit diagonals are preserved.
pub fn repair_pd(sigma: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let min = min_eigenvalue(&sigma);
    if min >= PD_FLOOR {
        return Ok(sigma);
    }
    let p = sigma.nrows();
    let eye = DMatrix::<f64>::identity(p, p);
    for lambda in SHRINK_STEPS {
        let shrunk = &sigma * (1.0 - lambda) + &eye * lambda;
        if min_eigenvalue(&shrunk) >= PD_FLOOR {
            return Ok(shrunk);
        }
    }
    Err(Error::NotPositiveDefinite { min_eigenvalue: min })
}

pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// `A^{-1/2}` for symmetric `A` via eigendecomposition.
pub fn inv_sqrt_sym(a: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < floor {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(floor).sqrt()));
    let q = &eig.eigenvectors;
    Ok(q * d * q.transpose())
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Checks symmetry, unit diagonal and positive definiteness.
pub fn is_correlation(a: &DMatrix<f64>, tol: f64) -> bool {
    let p = a.nrows();
    if a.ncols() != p {
        return false;
    }
    for i in 0..p {
        if (a[(i, i)] - 1.0).abs() > tol {
            return false;
        }
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    min_eigenvalue(a) > 0.0
}

/// Pairwise sum in a fixed tree order, so results do not depend on how the
/// summands were produced.
pub fn tree_sum(mut items: Vec<DMatrix<f64>>) -> Option<DMatrix<f64>> {
    if items.is_empty() {
        return None;
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a + b),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}
