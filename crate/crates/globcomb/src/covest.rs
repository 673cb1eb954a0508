//! Per-task forecast-error covariance estimation.
//!
//! Covariances are uncentered second-moment matrices throughout (the errors
//! are assumed zero-mean). The pairwise estimator handles missing data by
//! averaging over complete pairs of observations; since the result need not
//! be positive definite, [`nearest_pd`] repairs it by eigenvalue clipping.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::panel::ErrorMatrix;

/// Relative eigenvalue floor used by pipelines when repairing estimated
/// covariances: the absolute floor passed to [`nearest_pd`] is
/// `PD_FLOOR_REL * max(1, largest eigenvalue)`.
pub const PD_FLOOR_REL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CovError {
    #[error("sample_cov requires complete data; use pairwise_cov for missing entries")]
    MissingEntries,
    #[error("sample_cov requires at least one period")]
    NoPeriods,
    #[error("forecasters {0} and {1} have no overlapping observations")]
    EmptyOverlap(usize, usize),
    #[error("matrix is not symmetric within tolerance (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("rho must lie in (-1, 1), got {0}")]
    RhoOutOfRange(f64),
    #[error("standard deviations must be positive (entry {0} is {1})")]
    NonPositiveSd(usize, f64),
    #[error("matrix is not positive definite (Cholesky failed)")]
    NotPositiveDefinite,
}

/// A `p × p` symmetric forecast-error second-moment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    values: DMatrix<f64>,
    pd_repaired: bool,
}

impl CovMatrix {
    /// Wraps a symmetric matrix; errors if asymmetric beyond 1e-10 relative tolerance.
    pub fn new(values: DMatrix<f64>) -> Result<Self, CovError> {
        check_symmetric(&values)?;
        Ok(Self { values, pd_repaired: false })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn pd_repaired(&self) -> bool {
        self.pd_repaired
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Smallest eigenvalue of the (symmetrised) matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.values)
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        let sym = symmetrise(&self.values);
        sym.symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), CovError> {
    let scale = m.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > 1e-10 * scale {
        Err(CovError::NotSymmetric(worst))
    } else {
        Ok(())
    }
}

fn symmetrise(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrise(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Full-sample uncentered covariance `Σ̂_ij = T⁻¹ Σ_t e_it e_jt`.
pub fn sample_cov(errs: &ErrorMatrix) -> Result<CovMatrix, CovError> {
    if errs.periods() == 0 {
        return Err(CovError::NoPeriods);
    }
    if !errs.is_complete() {
        return Err(CovError::MissingEntries);
    }
    let (t_len, p) = (errs.periods(), errs.forecasters());
    let mut values = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let s: f64 = (0..t_len)
                .map(|t| errs.get(t, i).unwrap() * errs.get(t, j).unwrap())
                .sum();
            let v = s / t_len as f64;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(CovMatrix { values, pd_repaired: false })
}

/// Pairwise-complete covariance: each entry averaged over the periods where
/// both forecasters responded. Symmetric by construction; errors naming the
/// first pair with empty overlap.
pub fn pairwise_cov(errs: &ErrorMatrix) -> Result<CovMatrix, CovError> {
    let (t_len, p) = (errs.periods(), errs.forecasters());
    let mut values = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let mut s = 0.0;
            let mut n = 0usize;
            for t in 0..t_len {
                if let (Some(ei), Some(ej)) = (errs.get(t, i), errs.get(t, j)) {
                    s += ei * ej;
                    n += 1;
                }
            }
            if n == 0 {
                return Err(CovError::EmptyOverlap(i, j));
            }
            let v = s / n as f64;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(CovMatrix { values, pd_repaired: false })
}

/// Nearest positive-definite repair by symmetric eigenvalue clipping at
/// `pd_floor`. Returns the input unchanged (with `pd_repaired == false`)
/// when its minimum eigenvalue already meets the floor.
pub fn nearest_pd(m: &CovMatrix, pd_floor: f64) -> Result<CovMatrix, CovError> {
    check_symmetric(&m.values)?;
    let sym = symmetrise(&m.values);
    let eig = sym.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    // rounding slack so a just-repaired matrix is accepted as-is
    let tol = 1e-12 * eig.eigenvalues.iter().fold(pd_floor.abs(), |a, &l| a.max(l.abs()));
    if min_eig >= pd_floor - tol {
        return Ok(CovMatrix { values: m.values.clone(), pd_repaired: false });
    }
    let clipped = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(pd_floor)),
    );
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok(CovMatrix { values: symmetrise(&rebuilt), pd_repaired: true })
}

/// AR(1)-structured covariance `Σ_ij = σ_i σ_j ρ^{|i−j|}`.
pub fn ar1_cov(sds: &[f64], rho: f64) -> Result<CovMatrix, CovError> {
    if rho.abs() >= 1.0 {
        return Err(CovError::RhoOutOfRange(rho));
    }
    for (i, &sd) in sds.iter().enumerate() {
        if !(sd > 0.0) {
            return Err(CovError::NonPositiveSd(i, sd));
        }
    }
    let p = sds.len();
    let mut values = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            values[(i, j)] = sds[i] * sds[j] * rho.powi((i as i32 - j as i32).abs());
        }
    }
    Ok(CovMatrix { values, pd_repaired: false })
}
