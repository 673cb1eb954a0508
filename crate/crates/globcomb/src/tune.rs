//! Hyperparameter grids and selection: validation-set tuning and
//! leave-one-out cross-validation over training periods.

use nalgebra::DVector;
use thiserror::Error;

use crate::combine::{
    combine_forecast, hard_global_weights, local_weights, soft_global_weights, CombineError,
    GlobalisationSpec, WeightScheme, WeightSet,
};
use crate::covest::{nearest_pd, pairwise_cov, sample_cov, CovError, CovMatrix, PD_FLOOR_REL};
use crate::panel::{ErrorMatrix, ForecastPanel, TaskGrouping};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("grid must be non-empty with nonnegative values")]
    EmptyGrid,
    #[error("log grid requires hi > lo > 0, got hi = {0}, lo = {1}")]
    BadBounds(f64, f64),
    #[error("log grid requires n >= 2, got {0}")]
    TooFewPoints(usize),
    #[error("all grid points failed to solve")]
    AllPointsFailed,
    #[error("covariance estimation failed: {0}")]
    Cov(#[from] CovError),
    #[error("combination failed: {0}")]
    Combine(#[from] CombineError),
    #[error("more than half of the CV folds were skipped ({skipped} of {total})")]
    TooManyFoldsSkipped { skipped: usize, total: usize },
    #[error("LOOCV needs at least 2 usable training periods, found {0}")]
    TooFewPeriods(usize),
    #[error("panel error: {0}")]
    Panel(#[from] crate::panel::PanelError),
}

/// Which globalisation mode a fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinationMode {
    Local,
    Hard,
    Soft,
}

impl CombinationMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "local" => Some(Self::Local),
            "hard" => Some(Self::Hard),
            "soft" => Some(Self::Soft),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Local => "local",
            Self::Hard => "hard",
            Self::Soft => "soft",
        }
    }
}

/// Hyperparameter grid. Lambda values descending; gamma values may include
/// `+inf` (hard-global limit).
#[derive(Debug, Clone)]
pub struct TuningGrid {
    pub lambda_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
}

impl TuningGrid {
    pub fn new(mut lambda_values: Vec<f64>, mut gamma_values: Vec<f64>) -> Result<Self, TuneError> {
        if lambda_values.is_empty() || gamma_values.is_empty() {
            return Err(TuneError::EmptyGrid);
        }
        if lambda_values.iter().chain(&gamma_values).any(|&v| v < 0.0 || v.is_nan()) {
            return Err(TuneError::EmptyGrid);
        }
        lambda_values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        gamma_values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(Self { lambda_values, gamma_values })
    }

    /// The paper-style default: both parameters on a 10-point log grid
    /// between 1e3 and 1e-3.
    pub fn default_log() -> Self {
        let g = log_grid(1e3, 1e-3, 10).unwrap();
        Self { lambda_values: g.clone(), gamma_values: g }
    }
}

/// `n` values in geometric progression from `hi` down to `lo`, inclusive.
pub fn log_grid(hi: f64, lo: f64, n: usize) -> Result<Vec<f64>, TuneError> {
    if !(hi > lo && lo > 0.0) {
        return Err(TuneError::BadBounds(hi, lo));
    }
    if n < 2 {
        return Err(TuneError::TooFewPoints(n));
    }
    let log_hi = hi.ln();
    let log_lo = lo.ln();
    Ok((0..n)
        .map(|i| {
            if i == 0 {
                hi
            } else if i == n - 1 {
                lo
            } else {
                (log_hi + (log_lo - log_hi) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}

/// Estimate one covariance per task: full-sample when complete, otherwise
/// pairwise-complete with nearest-PD repair at the relative floor.
pub fn estimate_covariances(errors: &[ErrorMatrix]) -> Result<Vec<CovMatrix>, CovError> {
    errors
        .iter()
        .map(|e| {
            let raw = if e.is_complete() { sample_cov(e)? } else { pairwise_cov(e)? };
            let floor = PD_FLOOR_REL * raw.largest_eigenvalue().max(1.0);
            nearest_pd(&raw, floor)
        })
        .collect()
}

/// Realised mean squared combined error of `w` over the (possibly
/// incomplete) validation errors, with renormalisation over available
/// forecasters. Periods with no available weighted forecaster are skipped.
fn mean_sq_combined_error(errs: &ErrorMatrix, w: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for t in 0..errs.periods() {
        if let Ok(ce) = combine_forecast(w, errs.row(t)) {
            total += ce * ce;
            n += 1;
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        total / n as f64
    }
}

/// Outcome of validation tuning: the chosen configuration and the weights
/// fitted at it. For local mode, lambda is tuned per task.
#[derive(Debug, Clone)]
pub struct TuneResult {
    pub lambdas: Vec<f64>,
    pub gamma: f64,
    pub weights: WeightSet,
    pub validation_loss: f64,
}

/// Fits on the training covariances for every grid point and picks the
/// configuration minimising realised validation loss. Ties break toward
/// larger lambda then larger gamma (more regularisation).
pub fn validation_tune(
    train_errors: &[ErrorMatrix],
    val_errors: &[ErrorMatrix],
    grid: &TuningGrid,
    scheme: WeightScheme,
    grouping: &TaskGrouping,
    mode: CombinationMode,
) -> Result<TuneResult, TuneError> {
    let m = train_errors.len();
    assert_eq!(m, val_errors.len());
    let covs = estimate_covariances(train_errors)?;

    match mode {
        CombinationMode::Local => {
            // lambda tuned per task: tasks are uncoupled
            let mut lambdas = vec![f64::NAN; m];
            let mut per_task: Vec<Option<DVector<f64>>> = vec![None; m];
            let mut total_loss = 0.0;
            for k in 0..m {
                let mut best: Option<(f64, f64, DVector<f64>)> = None;
                for &lambda in &grid.lambda_values {
                    let fit = match local_weights(&covs[k..k + 1], lambda, scheme) {
                        Ok(ws) => ws,
                        Err(e) => {
                            log::warn!("task {k}, lambda {lambda}: {e}; grid point skipped");
                            continue;
                        }
                    };
                    let loss = mean_sq_combined_error(&val_errors[k], &fit.per_task[0]);
                    if best.as_ref().map_or(true, |(bl, _, _)| loss < *bl) {
                        best = Some((loss, lambda, fit.per_task[0].clone()));
                    }
                }
                let (loss, lambda, w) = best.ok_or(TuneError::AllPointsFailed)?;
                lambdas[k] = lambda;
                per_task[k] = Some(w);
                total_loss += loss;
            }
            let per_task: Vec<DVector<f64>> = per_task.into_iter().map(Option::unwrap).collect();
            let per_group = vec![{
                let mut mean = DVector::zeros(per_task[0].len());
                for w in &per_task {
                    mean += w;
                }
                mean / m as f64
            }];
            let weights = WeightSet {
                per_task,
                per_group,
                objective_value: f64::NAN,
                converged: true,
                iterations: 1,
            };
            Ok(TuneResult { lambdas, gamma: 0.0, weights, validation_loss: total_loss })
        }
        CombinationMode::Hard => {
            let mut best: Option<(f64, f64, WeightSet)> = None;
            for &lambda in &grid.lambda_values {
                let fit = match hard_global_weights(&covs, lambda, scheme, grouping, false) {
                    Ok(ws) => ws,
                    Err(e) => {
                        log::warn!("lambda {lambda}: {e}; grid point skipped");
                        continue;
                    }
                };
                let loss: f64 = (0..m)
                    .map(|k| mean_sq_combined_error(&val_errors[k], &fit.per_task[k]))
                    .sum();
                if best.as_ref().map_or(true, |(bl, _, _)| loss < *bl) {
                    best = Some((loss, lambda, fit));
                }
            }
            let (loss, lambda, weights) = best.ok_or(TuneError::AllPointsFailed)?;
            Ok(TuneResult {
                lambdas: vec![lambda; m],
                gamma: f64::INFINITY,
                weights,
                validation_loss: loss,
            })
        }
        CombinationMode::Soft => {
            let mut best: Option<(f64, f64, f64, WeightSet)> = None;
            for &lambda in &grid.lambda_values {
                for &gamma in &grid.gamma_values {
                    let spec = GlobalisationSpec {
                        lambda,
                        gamma,
                        grouping: grouping.clone(),
                        scaled: false,
                    };
                    let fit = match soft_global_weights(&covs, &spec, scheme) {
                        Ok(ws) => ws,
                        Err(e) => {
                            log::warn!("lambda {lambda}, gamma {gamma}: {e}; grid point skipped");
                            continue;
                        }
                    };
                    let loss: f64 = (0..m)
                        .map(|k| mean_sq_combined_error(&val_errors[k], &fit.per_task[k]))
                        .sum();
                    if best.as_ref().map_or(true, |(bl, _, _, _)| loss < *bl) {
                        best = Some((loss, lambda, gamma, fit));
                    }
                }
            }
            let (loss, lambda, gamma, weights) = best.ok_or(TuneError::AllPointsFailed)?;
            Ok(TuneResult { lambdas: vec![lambda; m], gamma, weights, validation_loss: loss })
        }
    }
}

/// Leave-one-out cross-validation over training periods, selecting the
/// globalisation parameter for one task. Each fold deletes a single period
/// across all tasks, re-estimates the pairwise covariances, refits the
/// soft-global weights, and scores the held-out combined forecast.
pub fn loocv_tune(
    panel: &ForecastPanel,
    task: usize,
    lambda: f64,
    gamma_grid: &[f64],
    scheme: WeightScheme,
    grouping: &TaskGrouping,
) -> Result<f64, TuneError> {
    let m = panel.n_tasks();
    let errors: Vec<ErrorMatrix> =
        (0..m).map(|k| panel.errors(k)).collect::<Result<_, _>>()?;

    // folds: periods where the target task has an actual and >= 1 forecast
    let folds: Vec<usize> = (0..panel.n_periods())
        .filter(|&t| {
            panel.actual(task, t).is_some()
                && panel.forecast_row(task, t).iter().any(|f| f.is_some())
        })
        .collect();
    if folds.len() < 2 {
        return Err(TuneError::TooFewPeriods(folds.len()));
    }

    // per-fold covariances are gamma-independent: estimate once per fold,
    // skipping folds where a pair loses all overlap
    let mut fold_covs: Vec<(usize, Vec<CovMatrix>)> = Vec::new();
    let mut skipped = 0usize;
    for &t in &folds {
        let keep: Vec<usize> = (0..panel.n_periods()).filter(|&u| u != t).collect();
        let reduced: Vec<ErrorMatrix> = errors.iter().map(|e| e.select_periods(&keep)).collect();
        match estimate_covariances(&reduced) {
            Ok(covs) => fold_covs.push((t, covs)),
            Err(e) => {
                log::warn!("fold {t}: {e}; fold skipped");
                skipped += 1;
            }
        }
    }
    if skipped * 2 > folds.len() {
        return Err(TuneError::TooManyFoldsSkipped { skipped, total: folds.len() });
    }

    // descending order so equal CV errors break toward larger gamma
    let mut gammas: Vec<f64> = gamma_grid.to_vec();
    gammas.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut best: Option<(f64, f64)> = None;
    for &gamma in &gammas {
        let mut cv_error = 0.0;
        for (t, covs) in &fold_covs {
            let spec = GlobalisationSpec { lambda, gamma, grouping: grouping.clone(), scaled: false };
            let ws = soft_global_weights(covs, &spec, scheme)?;
            let y = panel.actual(task, *t).unwrap();
            match combine_forecast(&ws.per_task[task], panel.forecast_row(task, *t)) {
                Ok(f) => cv_error += (y - f) * (y - f),
                Err(_) => {} // no available weighted forecaster this fold
            }
        }
        if best.as_ref().map_or(true, |(bl, _)| cv_error < *bl) {
            best = Some((cv_error, gamma));
        }
    }
    Ok(best.ok_or(TuneError::AllPointsFailed)?.1)
}
