//! Approximate conditional latent moments for one row.
//!
//! Observed continuous coordinates are fixed points. Conditioning on them
//! leaves a Gaussian over the observed ordinal coordinates, each restricted
//! to an interval. That box-truncated Gaussian is approximated by sweeping
//! over the ordinal coordinates: each coordinate's cavity distribution (the
//! Gaussian with its own truncation removed) is truncated to its interval in
//! closed form and the resulting mean/variance is written back as a
//! Gaussian site. Missing coordinates then follow from the Gaussian
//! regression on the observed block, with the ordinal uncertainty propagated.

use nalgebra::{DMatrix, DVector};

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use super::{standard_mass, truncnorm_moments, EStepResult, RowObservation};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_ridge, submatrix};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EStepOptions {
    /// Stop once no ordinal mean moves by more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Integrate rows with exactly two ordinal coordinates by quadrature
    /// instead of sweeping.
    pub pair_quadrature: bool,
}

impl Default for EStepOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_sweeps: 50,
            pair_quadrature: true,
        }
    }
}

pub fn row_estep(row: &RowObservation, sigma: &DMatrix<f64>) -> Result<EStepResult> {
    row_estep_with(row, sigma, &EStepOptions::default())
}

pub fn row_estep_with(
    row: &RowObservation,
    sigma: &DMatrix<f64>,
    opts: &EStepOptions,
) -> Result<EStepResult> {
    let p = row.len();
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::Domain(format!(
            "row has {p} coordinates but Σ is {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }

    let mut points = Vec::new();
    let mut boxes = Vec::new();
    let mut missing = Vec::new();
    for (j, r) in row.regions().iter().enumerate() {
        if r.lower.is_nan() || r.upper.is_nan() || r.lower > r.upper {
            return Err(Error::Domain(format!(
                "coordinate {j}: invalid region ({}, {})",
                r.lower, r.upper
            )));
        }
        if r.is_missing() {
            missing.push(j);
        } else if r.is_point() {
            if !r.lower.is_finite() {
                return Err(Error::Domain(format!("coordinate {j}: non-finite point")));
            }
            points.push(j);
        } else {
            boxes.push(j);
        }
    }

    let z_points = DVector::from_iterator(points.len(), points.iter().map(|&j| row.regions()[j].lower));

    // Gaussian over the ordinal block given the continuous points.
    let s_bb = submatrix(sigma, &boxes, &boxes);
    let (prior_mean, prior_cov) = if points.is_empty() || boxes.is_empty() {
        (DVector::zeros(boxes.len()), s_bb)
    } else {
        let chol = cholesky_with_ridge(&submatrix(sigma, &points, &points))?;
        let s_pb = submatrix(sigma, &points, &boxes);
        let w = chol.solve(&s_pb);
        (w.transpose() * &z_points, s_bb - s_pb.transpose() * w)
    };
    let lower: Vec<f64> = boxes.iter().map(|&j| row.regions()[j].lower).collect();
    let upper: Vec<f64> = boxes.iter().map(|&j| row.regions()[j].upper).collect();
    let (m_box, v_box) = box_moments(&prior_mean, &prior_cov, &lower, &upper, opts)?;

    let mut ez = DVector::zeros(p);
    let mut cov = DMatrix::zeros(p, p);
    for (a, &j) in points.iter().enumerate() {
        ez[j] = z_points[a];
    }
    for (a, &j) in boxes.iter().enumerate() {
        ez[j] = m_box[a];
        for (b, &k) in boxes.iter().enumerate() {
            cov[(j, k)] = v_box[(a, b)];
        }
    }

    if !missing.is_empty() {
        let observed: Vec<usize> = points.iter().chain(&boxes).copied().collect();
        let s_mm = submatrix(sigma, &missing, &missing);
        if observed.is_empty() {
            for (a, &j) in missing.iter().enumerate() {
                for (b, &k) in missing.iter().enumerate() {
                    cov[(j, k)] = s_mm[(a, b)];
                }
            }
        } else {
            let chol = cholesky_with_ridge(&submatrix(sigma, &observed, &observed))?;
            let s_om = submatrix(sigma, &observed, &missing);
            // regression coefficients, |O| x |M|
            let coef_t = chol.solve(&s_om);
            let z_obs = DVector::from_iterator(
                observed.len(),
                points.iter().map(|&j| ez[j]).chain(m_box.iter().copied()),
            );
            let mean_m = coef_t.transpose() * &z_obs;
            // only the ordinal rows of the observed block carry uncertainty
            let np = points.len();
            let coef_box_t = coef_t.rows(np, boxes.len()).into_owned();
            let cross = coef_box_t.transpose() * &v_box; // |M| x |boxes|
            let cov_mm = s_mm - s_om.transpose() * &coef_t + &cross * &coef_box_t;
            for (a, &j) in missing.iter().enumerate() {
                ez[j] = mean_m[a];
                for (b, &k) in missing.iter().enumerate() {
                    cov[(j, k)] = cov_mm[(a, b)];
                }
                for (b, &k) in boxes.iter().enumerate() {
                    cov[(j, k)] = cross[(a, b)];
                    cov[(k, j)] = cross[(a, b)];
                }
            }
        }
    }

    let mut ezz = cov + &ez * ez.transpose();
    for i in 0..p {
        for j in 0..i {
            let s = 0.5 * (ezz[(i, j)] + ezz[(j, i)]);
            ezz[(i, j)] = s;
            ezz[(j, i)] = s;
        }
    }
    // exact on fixed points
    for &j in &points {
        for &k in &points {
            ezz[(j, k)] = ez[j] * ez[k];
        }
    }
    Ok(EStepResult { ez, ezz })
}

/// Moment-matching sweep for `N(mean, cov)` restricted to the box
/// `[lower, upper]`. Returns the approximate truncated mean and covariance.
fn box_moments(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    lower: &[f64],
    upper: &[f64],
    opts: &EStepOptions,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = mean.len();
    if d == 2 && opts.pair_quadrature {
        if let Some(r) = pair_moments(mean, cov, lower, upper)? {
            return Ok(r);
        }
    }
    let mut m = mean.clone();
    let mut v = cov.clone();
    if d == 0 {
        return Ok((m, v));
    }
    let mut site_tau = vec![0.0; d];
    let mut site_nu = vec![0.0; d];
    for _ in 0..opts.max_sweeps {
        let before = m.clone();
        for i in 0..d {
            let vii = v[(i, i)];
            if !(vii > 0.0) {
                continue;
            }
            let cav_tau = 1.0 / vii - site_tau[i];
            if !(cav_tau > 1e-300) {
                continue;
            }
            let cav_nu = m[i] / vii - site_nu[i];
            let cav_var = 1.0 / cav_tau;
            let (mt, vt) = truncnorm_moments(cav_nu * cav_var, cav_var, lower[i], upper[i])?;
            let vt = vt.max(1e-12 * cav_var);
            let tau_new = (1.0 / vt - cav_tau).max(0.0);
            let nu_new = mt / vt - cav_nu;
            let d_tau = tau_new - site_tau[i];
            let d_nu = nu_new - site_nu[i];
            if d_tau == 0.0 && d_nu == 0.0 {
                continue;
            }
            let col = v.column(i).clone_owned();
            let c = d_tau / (1.0 + d_tau * vii);
            let shift = d_nu * (1.0 - c * vii) - c * m[i];
            m.axpy(shift, &col, 1.0);
            v.ger(-c, &col, &col, 1.0);
            site_tau[i] = tau_new;
            site_nu[i] = nu_new;
        }
        let moved = (&m - &before).amax();
        if !moved.is_finite() {
            return Err(Error::Numerical("ordinal moment sweep diverged".into()));
        }
        if moved < opts.tol {
            break;
        }
    }
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (v[(i, j)] + v[(j, i)]);
            v[(i, j)] = s;
            v[(j, i)] = s;
        }
        v[(i, i)] = v[(i, i)].max(0.0);
    }
    Ok((m, v))
}

const PANELS: usize = 8;
const PANEL_DEGREE: usize = 16;
/// Standardized half-width beyond which normal mass is ignored.
const TAIL: f64 = 8.5;

fn legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(PANEL_DEGREE).unwrap()))
}

/// Exact moments of a bivariate normal restricted to a rectangle: the first
/// coordinate is integrated numerically and the second in closed form given
/// the first. `None` when the rectangle carries no usable mass or the pair is
/// degenerate; the caller then sweeps instead.
fn pair_moments(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    lower: &[f64],
    upper: &[f64],
) -> Result<Option<(DVector<f64>, DMatrix<f64>)>> {
    let (c11, c12, c22) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    if !(c11 > 0.0 && c22 > 0.0) {
        return Ok(None);
    }
    let s1 = c11.sqrt();
    let k = c12 / c11;
    let cond_var = c22 - c12 * k;
    if !(cond_var > 1e-10 * c22) {
        return Ok(None);
    }
    let cond_sd = cond_var.sqrt();
    // z1 = mean0 + s1 u, E[z2 | z1] = mean1 + slope u
    let slope = k * s1;
    let mut lo = ((lower[0] - mean[0]) / s1).max(-TAIL);
    let mut hi = ((upper[0] - mean[0]) / s1).min(TAIL);
    if slope.abs() > 0.0 {
        let ua = (lower[1] - TAIL * cond_sd - mean[1]) / slope;
        let ub = (upper[1] + TAIL * cond_sd - mean[1]) / slope;
        lo = lo.max(ua.min(ub));
        hi = hi.min(ua.max(ub));
    }
    if !(hi > lo) {
        return Ok(None);
    }
    let (mut z, mut s_1, mut s_11, mut s_2, mut s_22, mut s_12) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let width = (hi - lo) / PANELS as f64;
    for panel in 0..PANELS {
        let a = lo + width * panel as f64;
        for &(x, w) in legendre().as_node_weight_pairs() {
            let u = a + 0.5 * width * (x + 1.0);
            let m2 = mean[1] + slope * u;
            let mass = standard_mass((lower[1] - m2) / cond_sd, (upper[1] - m2) / cond_sd);
            let f = 0.5 * width * w * normal::pdf(u) * mass;
            if f == 0.0 {
                continue;
            }
            let (t2, v2) = truncnorm_moments(m2, cond_var, lower[1], upper[1])?;
            let z1 = mean[0] + s1 * u;
            z += f;
            s_1 += f * z1;
            s_11 += f * z1 * z1;
            s_2 += f * t2;
            s_22 += f * (v2 + t2 * t2);
            s_12 += f * z1 * t2;
        }
    }
    if !(z > 1e-300) || !z.is_finite() {
        return Ok(None);
    }
    let m = DVector::from_vec(vec![s_1 / z, s_2 / z]);
    let cross = s_12 / z - m[0] * m[1];
    let v = DMatrix::from_row_slice(
        2,
        2,
        &[(s_11 / z - m[0] * m[0]).max(0.0), cross, cross, (s_22 / z - m[1] * m[1]).max(0.0)],
    );
    Ok(Some((m, v)))
}
