//! Survey-data pipeline: long-format CSV ingestion, rolling-origin
//! evaluation, globalisation paths, and the relative MSFE metrics.
//!
//! The expected export schema is two CSVs: forecasts with columns
//! `{task, period, forecaster, forecast}` and actuals with
//! `{task, period, actual}`. Periods are ISO quarters `YYYY-Qn`.

pub mod fixture;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::DVector;
use thiserror::Error;

use crate::combine::{
    combine_forecast, hard_global_weights, local_weights, soft_global_weights, CombineError,
    GlobalisationSpec, WeightScheme,
};
use crate::covest::CovError;
use crate::panel::{ForecastPanel, PanelError, TaskGrouping};
use crate::tune::{estimate_covariances, loocv_tune, CombinationMode, TuneError};

#[derive(Debug, Error)]
pub enum SpfError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: String, column: String },
    #[error("duplicate forecast row for (task={task}, period={period}, forecaster={forecaster})")]
    DuplicateForecast { task: String, period: String, forecaster: String },
    #[error("duplicate actual row for (task={task}, period={period})")]
    DuplicateActual { task: String, period: String },
    #[error("period '{0}' is not an ISO quarter of the form YYYY-Qn")]
    BadPeriod(String),
    #[error("period label '{0}' not present in the panel")]
    UnknownPeriod(String),
    #[error("evaluation window requires train_end < test_start <= test_end < {n_periods}, got {train_end}, {test_start}, {test_end}")]
    BadWindow { train_end: usize, test_start: usize, test_end: usize, n_periods: usize },
    #[error("unknown grouping preset '{0}' (expected variables, horizons, all, or custom:<spec>)")]
    UnknownGrouping(String),
    #[error("grouping preset '{preset}' requires task names of the form <variable>_<horizon>, got '{task}'")]
    UnsuitableTaskName { preset: String, task: String },
    #[error("task grouping invalid: {0}")]
    Grouping(crate::panel::GroupingViolation),
    #[error("squared-error series have mismatched lengths ({0} vs {1})")]
    SeriesMismatch(usize, usize),
    #[error("relative MSFE denominator is zero")]
    ZeroDenominator,
    #[error("no test origin produced any record")]
    NoRecords,
    #[error("origin {origin}: task '{task}' has insufficient training data")]
    InsufficientTraining { origin: String, task: String },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Sim(#[from] crate::simlab::SimError),
    #[error(transparent)]
    Cov(#[from] CovError),
    #[error(transparent)]
    Combine(#[from] CombineError),
    #[error(transparent)]
    Tune(#[from] TuneError),
}

/// Parses an ISO quarter label `YYYY-Qn` into `(year, quarter)`.
pub fn parse_quarter(s: &str) -> Result<(i32, u8), SpfError> {
    let bad = || SpfError::BadPeriod(s.to_string());
    let (year, q) = s.split_once("-Q").ok_or_else(bad)?;
    let year: i32 = year.parse().map_err(|_| bad())?;
    let q: u8 = q.parse().map_err(|_| bad())?;
    if !(1..=4).contains(&q) {
        return Err(bad());
    }
    Ok((year, q))
}

/// `n` consecutive quarter labels starting at `(year, quarter)`.
pub fn quarter_seq(mut year: i32, mut quarter: u8, n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(format!("{year}-Q{quarter}"));
        quarter += 1;
        if quarter > 4 {
            quarter = 1;
            year += 1;
        }
    }
    out
}

/// Forecast horizon in quarters inferred from a task-name suffix: `_1y` is
/// four quarters ahead, `_2y` eight; anything else defaults to one quarter.
pub fn infer_horizon(task: &str) -> usize {
    if task.ends_with("_1y") {
        4
    } else if task.ends_with("_2y") {
        8
    } else {
        1
    }
}

/// Column-name map for the two input CSVs.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub task: String,
    pub period: String,
    pub forecaster: String,
    pub forecast: String,
    pub actual: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            task: "task".into(),
            period: "period".into(),
            forecaster: "forecaster".into(),
            forecast: "forecast".into(),
            actual: "actual".into(),
        }
    }
}

fn column_index(
    headers: &csv::StringRecord,
    name: &str,
    path: &str,
) -> Result<usize, SpfError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| SpfError::MissingColumn { path: path.to_string(), column: name.to_string() })
}

/// Loads a forecast panel from a forecasts CSV and an actuals CSV. Tasks and
/// forecasters are ordered lexicographically, periods chronologically; an
/// empty forecast field records a missing response.
pub fn load_panel(
    forecasts_path: &Path,
    actuals_path: &Path,
    schema: &CsvSchema,
) -> Result<ForecastPanel, SpfError> {
    let fpath = forecasts_path.display().to_string();
    let apath = actuals_path.display().to_string();

    let mut forecast_rows: BTreeMap<(String, String, String), Option<f64>> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(forecasts_path)
        .map_err(|source| SpfError::Csv { path: fpath.clone(), source })?;
    let headers = reader
        .headers()
        .map_err(|source| SpfError::Csv { path: fpath.clone(), source })?
        .clone();
    let (c_task, c_period, c_forecaster, c_forecast) = (
        column_index(&headers, &schema.task, &fpath)?,
        column_index(&headers, &schema.period, &fpath)?,
        column_index(&headers, &schema.forecaster, &fpath)?,
        column_index(&headers, &schema.forecast, &fpath)?,
    );
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2; // 1-based, after the header row
        let record = record.map_err(|source| SpfError::Csv { path: fpath.clone(), source })?;
        let field = |c: usize| -> Result<&str, SpfError> {
            record.get(c).ok_or_else(|| SpfError::Parse {
                path: fpath.clone(),
                line,
                message: format!("expected at least {} fields", c + 1),
            })
        };
        let task = field(c_task)?.to_string();
        let period = field(c_period)?.to_string();
        parse_quarter(&period)?;
        let forecaster = field(c_forecaster)?.to_string();
        let raw = field(c_forecast)?.trim();
        let value = if raw.is_empty() {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|_| SpfError::Parse {
                path: fpath.clone(),
                line,
                message: format!("forecast value '{raw}' is not a number"),
            })?)
        };
        let key = (task, period, forecaster);
        if forecast_rows.contains_key(&key) {
            return Err(SpfError::DuplicateForecast {
                task: key.0,
                period: key.1,
                forecaster: key.2,
            });
        }
        forecast_rows.insert(key, value);
    }

    let mut actual_rows: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(actuals_path)
        .map_err(|source| SpfError::Csv { path: apath.clone(), source })?;
    let headers = reader
        .headers()
        .map_err(|source| SpfError::Csv { path: apath.clone(), source })?
        .clone();
    let (a_task, a_period, a_actual) = (
        column_index(&headers, &schema.task, &apath)?,
        column_index(&headers, &schema.period, &apath)?,
        column_index(&headers, &schema.actual, &apath)?,
    );
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|source| SpfError::Csv { path: apath.clone(), source })?;
        let field = |c: usize| -> Result<&str, SpfError> {
            record.get(c).ok_or_else(|| SpfError::Parse {
                path: apath.clone(),
                line,
                message: format!("expected at least {} fields", c + 1),
            })
        };
        let task = field(a_task)?.to_string();
        let period = field(a_period)?.to_string();
        parse_quarter(&period)?;
        let raw = field(a_actual)?.trim();
        let value = raw.parse::<f64>().map_err(|_| SpfError::Parse {
            path: apath.clone(),
            line,
            message: format!("actual value '{raw}' is not a number"),
        })?;
        let key = (task, period);
        if actual_rows.contains_key(&key) {
            return Err(SpfError::DuplicateActual { task: key.0, period: key.1 });
        }
        actual_rows.insert(key, value);
    }

    // axes: tasks/forecasters lexicographic, periods chronological
    let mut tasks: Vec<String> = forecast_rows.keys().map(|(t, _, _)| t.clone()).collect();
    tasks.sort();
    tasks.dedup();
    let mut forecasters: Vec<String> = forecast_rows.keys().map(|(_, _, f)| f.clone()).collect();
    forecasters.sort();
    forecasters.dedup();
    let mut periods: Vec<String> = forecast_rows
        .keys()
        .map(|(_, p, _)| p.clone())
        .chain(actual_rows.keys().map(|(_, p)| p.clone()))
        .collect();
    periods.sort_by_key(|p| parse_quarter(p).expect("validated during parsing"));
    periods.dedup();

    let task_idx: HashMap<&str, usize> =
        tasks.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let fc_idx: HashMap<&str, usize> =
        forecasters.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
    let period_idx: HashMap<&str, usize> =
        periods.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();

    let (m, p, t_len) = (tasks.len(), forecasters.len(), periods.len());
    let mut forecasts = vec![vec![None; t_len * p]; m];
    for ((task, period, forecaster), value) in &forecast_rows {
        let k = task_idx[task.as_str()];
        let t = period_idx[period.as_str()];
        let j = fc_idx[forecaster.as_str()];
        forecasts[k][t * p + j] = *value;
    }
    let mut actuals = vec![vec![None; t_len]; m];
    for ((task, period), value) in &actual_rows {
        let Some(&k) = task_idx.get(task.as_str()) else {
            log::warn!("actuals file mentions task '{task}' with no forecasts; ignored");
            continue;
        };
        actuals[k][period_idx[period.as_str()]] = Some(*value);
    }

    let horizons = tasks.iter().map(|t| infer_horizon(t)).collect();
    Ok(ForecastPanel::new(tasks, forecasters, periods, horizons, forecasts, actuals)?)
}

/// Evaluation window as period indices: training covers `..=train_end`,
/// forecasts are scored on `test_start..=test_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalWindow {
    pub train_end: usize,
    pub test_start: usize,
    pub test_end: usize,
}

impl EvalWindow {
    pub fn new(
        train_end: usize,
        test_start: usize,
        test_end: usize,
        n_periods: usize,
    ) -> Result<Self, SpfError> {
        if train_end < test_start && test_start <= test_end && test_end < n_periods {
            Ok(Self { train_end, test_start, test_end })
        } else {
            Err(SpfError::BadWindow { train_end, test_start, test_end, n_periods })
        }
    }

    pub fn from_labels(
        panel: &ForecastPanel,
        train_end: &str,
        test_start: &str,
        test_end: &str,
    ) -> Result<Self, SpfError> {
        let lookup = |label: &str| {
            panel
                .periods()
                .iter()
                .position(|p| p == label)
                .ok_or_else(|| SpfError::UnknownPeriod(label.to_string()))
        };
        Self::new(lookup(train_end)?, lookup(test_start)?, lookup(test_end)?, panel.n_periods())
    }
}

/// Hyperparameter tuning applied inside each origin's training slice.
#[derive(Debug, Clone)]
pub enum Tuner {
    None,
    /// Leave-one-out cross-validation over training periods, selecting the
    /// globalisation strength per task from this grid.
    Loocv { gamma_grid: Vec<f64> },
}

/// One scored test forecast.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub task: usize,
    /// Period index of the forecast target.
    pub origin: usize,
    pub gamma: f64,
    pub forecast: f64,
    pub actual: f64,
    pub sq_error: f64,
    pub weights: Vec<f64>,
}

struct OriginFit {
    per_task: Vec<DVector<f64>>,
    gammas: Vec<f64>,
}

/// Standardised training errors and the per-task target standard deviations,
/// from each task's training slice only.
fn standardised_training(
    panel: &ForecastPanel,
    cutoffs: &[usize],
) -> Result<(Vec<crate::panel::ErrorMatrix>, Vec<f64>), SpfError> {
    let mut errs = Vec::with_capacity(cutoffs.len());
    let mut sds = Vec::with_capacity(cutoffs.len());
    for (k, &cut) in cutoffs.iter().enumerate() {
        let train_idx: Vec<usize> = (0..=cut).collect();
        let sd = panel.target_sd(k, &train_idx).ok_or_else(|| SpfError::InsufficientTraining {
            origin: panel.periods()[cut].clone(),
            task: panel.tasks()[k].clone(),
        })?;
        let e = panel.errors(k)?.select_periods(&train_idx).standardise(sd)?;
        errs.push(e);
        sds.push(sd);
    }
    Ok((errs, sds))
}

/// Sub-panel over the first `keep + 1` periods with each task's forecasts and
/// actuals divided by its training-window target standard deviation, so
/// cross-task couplings during tuning see comparably scaled errors.
fn tuning_subpanel(
    panel: &ForecastPanel,
    last_period: usize,
    sds: &[f64],
) -> Result<ForecastPanel, SpfError> {
    let (m, p) = (panel.n_tasks(), panel.n_forecasters());
    let t_len = last_period + 1;
    let mut forecasts = Vec::with_capacity(m);
    let mut actuals = Vec::with_capacity(m);
    for k in 0..m {
        let mut fk = Vec::with_capacity(t_len * p);
        let mut ak = Vec::with_capacity(t_len);
        for t in 0..t_len {
            ak.push(panel.actual(k, t).map(|y| y / sds[k]));
            for j in 0..p {
                fk.push(panel.forecast(k, t, j).map(|f| f / sds[k]));
            }
        }
        forecasts.push(fk);
        actuals.push(ak);
    }
    Ok(ForecastPanel::new(
        panel.tasks().to_vec(),
        panel.forecasters().to_vec(),
        panel.periods()[..t_len].to_vec(),
        (0..m).map(|k| panel.horizon(k)).collect(),
        forecasts,
        actuals,
    )?)
}

fn fit_origin(
    panel: &ForecastPanel,
    cutoffs: &[usize],
    scheme: WeightScheme,
    mode: CombinationMode,
    spec: &GlobalisationSpec,
    tuner: &Tuner,
) -> Result<OriginFit, SpfError> {
    let m = panel.n_tasks();
    let (errs, sds) = standardised_training(panel, cutoffs)?;
    let covs = estimate_covariances(&errs)?;

    match mode {
        CombinationMode::Local => {
            let ws = local_weights(&covs, spec.lambda, scheme)?;
            Ok(OriginFit { per_task: ws.per_task, gammas: vec![0.0; m] })
        }
        CombinationMode::Hard => {
            let ws = hard_global_weights(&covs, spec.lambda, scheme, &spec.grouping, spec.scaled)?;
            Ok(OriginFit { per_task: ws.per_task, gammas: vec![f64::INFINITY; m] })
        }
        CombinationMode::Soft => match tuner {
            Tuner::None => {
                let ws = soft_global_weights(&covs, spec, scheme)?;
                Ok(OriginFit { per_task: ws.per_task, gammas: vec![spec.gamma; m] })
            }
            Tuner::Loocv { gamma_grid } => {
                // tune on the common training slice so no task sees periods
                // beyond another task's cutoff
                let common = *cutoffs.iter().min().expect("at least one task");
                let sub = tuning_subpanel(panel, common, &sds)?;
                let mut gammas = vec![0.0; m];
                for k in 0..m {
                    gammas[k] =
                        loocv_tune(&sub, k, spec.lambda, gamma_grid, scheme, &spec.grouping)?;
                }
                // one joint fit per distinct selected gamma; each task takes
                // its weights from the fit at its own gamma
                let mut per_task: Vec<Option<DVector<f64>>> = vec![None; m];
                let mut distinct: Vec<f64> = gammas.clone();
                distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
                distinct.dedup();
                for g in distinct {
                    let spec_g = GlobalisationSpec { gamma: g, ..spec.clone() };
                    let ws = soft_global_weights(&covs, &spec_g, scheme)?;
                    for k in 0..m {
                        if gammas[k] == g {
                            per_task[k] = Some(ws.per_task[k].clone());
                        }
                    }
                }
                let per_task = per_task.into_iter().map(Option::unwrap).collect();
                Ok(OriginFit { per_task, gammas })
            }
        },
    }
}

/// One-shot fit over the entire panel: every task trains on all periods.
/// Returns the per-task weight vectors and the globalisation strength each
/// task was fitted at.
pub fn fit_panel_weights(
    panel: &ForecastPanel,
    scheme: WeightScheme,
    mode: CombinationMode,
    spec: &GlobalisationSpec,
    tuner: &Tuner,
) -> Result<(Vec<DVector<f64>>, Vec<f64>), SpfError> {
    let m = panel.n_tasks();
    spec.grouping.validate(m).map_err(SpfError::Grouping)?;
    let cutoffs = vec![panel.n_periods() - 1; m];
    let fit = fit_origin(panel, &cutoffs, scheme, mode, spec, tuner)?;
    Ok((fit.per_task, fit.gammas))
}

/// Expanding-window rolling-origin evaluation. For each test origin `t`, each
/// task trains on the periods whose errors are observable when the forecast
/// is made (`t` minus the task horizon), capped at `window.train_end` when
/// `frozen_training` is set; weights are fitted on PD-repaired pairwise
/// covariances of standardised errors and scored on the origin's forecasts.
///
/// Origins whose fit fails are skipped with a warning. Records are ordered by
/// (task, origin).
pub fn rolling_eval(
    panel: &ForecastPanel,
    window: EvalWindow,
    scheme: WeightScheme,
    mode: CombinationMode,
    spec: &GlobalisationSpec,
    tuner: &Tuner,
    frozen_training: bool,
) -> Result<Vec<EvalRecord>, SpfError> {
    EvalWindow::new(window.train_end, window.test_start, window.test_end, panel.n_periods())?;
    let m = panel.n_tasks();
    spec.grouping.validate(m).map_err(SpfError::Grouping)?;

    // identical cutoff vectors give identical fits; in frozen mode every
    // origin past train_end + horizon shares one
    let mut cache: HashMap<Vec<usize>, OriginFit> = HashMap::new();
    let mut records = Vec::new();
    for origin in window.test_start..=window.test_end {
        let mut cutoffs = Vec::with_capacity(m);
        let mut feasible = true;
        for k in 0..m {
            let h = panel.horizon(k);
            if origin < h + 1 {
                feasible = false;
                break;
            }
            let mut cut = origin - h;
            if frozen_training {
                cut = cut.min(window.train_end);
            }
            cutoffs.push(cut);
        }
        if !feasible {
            log::warn!("origin {}: precedes some task horizon; skipped", panel.periods()[origin]);
            continue;
        }
        if !cache.contains_key(&cutoffs) {
            match fit_origin(panel, &cutoffs, scheme, mode, spec, tuner) {
                Ok(fit) => {
                    cache.insert(cutoffs.clone(), fit);
                }
                Err(e) => {
                    log::warn!("origin {}: {e}; skipped", panel.periods()[origin]);
                    continue;
                }
            }
        }
        let fit = &cache[&cutoffs];
        for k in 0..m {
            let Some(actual) = panel.actual(k, origin) else {
                log::warn!(
                    "origin {}: task '{}' has no actual; skipped",
                    panel.periods()[origin],
                    panel.tasks()[k]
                );
                continue;
            };
            let forecast = match combine_forecast(&fit.per_task[k], panel.forecast_row(k, origin)) {
                Ok(f) => f,
                Err(e) => {
                    log::warn!(
                        "origin {}: task '{}': {e}; skipped",
                        panel.periods()[origin],
                        panel.tasks()[k]
                    );
                    continue;
                }
            };
            records.push(EvalRecord {
                task: k,
                origin,
                gamma: fit.gammas[k],
                forecast,
                actual,
                sq_error: (actual - forecast) * (actual - forecast),
                weights: fit.per_task[k].iter().copied().collect(),
            });
        }
    }
    if records.is_empty() {
        return Err(SpfError::NoRecords);
    }
    records.sort_by(|a, b| (a.task, a.origin).cmp(&(b.task, b.origin)));
    Ok(records)
}

fn msfe_ratio(numerator: &[f64], denominator: &[f64]) -> Result<f64, SpfError> {
    if numerator.len() != denominator.len() {
        return Err(SpfError::SeriesMismatch(numerator.len(), denominator.len()));
    }
    let den: f64 = denominator.iter().sum();
    if den == 0.0 {
        return Err(SpfError::ZeroDenominator);
    }
    Ok(numerator.iter().sum::<f64>() / den)
}

/// Ratio of summed squared errors against the local-combination series.
pub fn msfe_rel_local(sq_errors: &[f64], sq_errors_local: &[f64]) -> Result<f64, SpfError> {
    msfe_ratio(sq_errors, sq_errors_local)
}

/// Ratio of summed squared errors against the equal-weights series; values
/// below one beat equal weighting.
pub fn msfe_rel_equal(sq_errors: &[f64], sq_errors_equal: &[f64]) -> Result<f64, SpfError> {
    msfe_ratio(sq_errors, sq_errors_equal)
}

/// Out-of-sample error relative to local combination, per task, as the
/// globalisation strength is swept over `gammas`.
#[derive(Debug, Clone)]
pub struct PathResult {
    /// Always starts at 0 and ends at infinity.
    pub gammas: Vec<f64>,
    /// `ratios[k][i]` is task k's relative MSFE at `gammas[i]`.
    pub ratios: Vec<Vec<f64>>,
}

/// Sweeps the soft-global pipeline over `0, gamma_grid…, ∞` and reports each
/// task's summed squared error relative to the γ=0 (local) baseline. The
/// baseline uses the same code path as every other grid point, so the γ=0
/// ratio is exactly one.
pub fn globalisation_path(
    panel: &ForecastPanel,
    window: EvalWindow,
    scheme: WeightScheme,
    grouping: &TaskGrouping,
    gamma_grid: &[f64],
    lambda: f64,
    frozen_training: bool,
) -> Result<PathResult, SpfError> {
    let m = panel.n_tasks();
    let mut gammas = vec![0.0];
    gammas.extend(gamma_grid.iter().copied().filter(|&g| g > 0.0 && g.is_finite()));
    gammas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gammas.dedup();
    gammas.push(f64::INFINITY);

    let spec_for = |gamma: f64| GlobalisationSpec {
        lambda,
        gamma,
        grouping: grouping.clone(),
        scaled: false,
    };
    let all_records: Vec<Vec<EvalRecord>> = gammas
        .iter()
        .map(|&g| {
            rolling_eval(
                panel,
                window,
                scheme,
                CombinationMode::Soft,
                &spec_for(g),
                &Tuner::None,
                frozen_training,
            )
        })
        .collect::<Result<_, _>>()?;
    let baseline = &all_records[0];

    // align on (task, origin) pairs present at every gamma
    let mut ratios = vec![Vec::with_capacity(gammas.len()); m];
    for records in &all_records {
        let by_key: HashMap<(usize, usize), f64> =
            records.iter().map(|r| ((r.task, r.origin), r.sq_error)).collect();
        for k in 0..m {
            let mut num = Vec::new();
            let mut den = Vec::new();
            for r in baseline.iter().filter(|r| r.task == k) {
                if let Some(&sq) = by_key.get(&(r.task, r.origin)) {
                    num.push(sq);
                    den.push(r.sq_error);
                }
            }
            ratios[k].push(msfe_ratio(&num, &den)?);
        }
    }
    Ok(PathResult { gammas, ratios })
}

/// Task-grouping presets for panels named by the `<variable>_<horizon>`
/// convention: `variables` groups tasks sharing a variable prefix, `horizons`
/// groups tasks sharing a horizon suffix, `all` is one group, and
/// `custom:0,1|2,3` lists explicit index groups.
pub fn grouping_preset(name: &str, tasks: &[String]) -> Result<TaskGrouping, SpfError> {
    let m = tasks.len();
    let by_key = |preset: &str, key: fn(&str) -> Option<&str>| -> Result<TaskGrouping, SpfError> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (k, task) in tasks.iter().enumerate() {
            let key = key(task)
                .ok_or_else(|| SpfError::UnsuitableTaskName {
                    preset: preset.to_string(),
                    task: task.clone(),
                })?
                .to_string();
            match groups.iter_mut().find(|(g, _)| *g == key) {
                Some((_, idx)) => idx.push(k),
                None => groups.push((key, vec![k])),
            }
        }
        Ok(TaskGrouping::new(groups.into_iter().map(|(_, idx)| idx).collect()))
    };
    let grouping = match name {
        "all" => TaskGrouping::all(m),
        "variables" => by_key("variables", |t| t.rsplit_once('_').map(|(v, _)| v))?,
        "horizons" => by_key("horizons", |t| t.rsplit_once('_').map(|(_, h)| h))?,
        _ => match name.strip_prefix("custom:") {
            Some(body) => {
                let mut groups = Vec::new();
                for part in body.split('|') {
                    let idx: Result<Vec<usize>, _> =
                        part.split(',').map(|s| s.trim().parse::<usize>()).collect();
                    groups.push(idx.map_err(|_| SpfError::UnknownGrouping(name.to_string()))?);
                }
                TaskGrouping::new(groups)
            }
            None => return Err(SpfError::UnknownGrouping(name.to_string())),
        },
    };
    grouping.validate(m).map_err(SpfError::Grouping)?;
    Ok(grouping)
}
