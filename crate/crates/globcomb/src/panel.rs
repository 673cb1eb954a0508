//! Data model for multi-task forecast panels with missing observations.
//!
//! A [`ForecastPanel`] holds forecasts from `p` forecasters for `m` tasks over
//! `T` periods, together with the realised target values. Missingness is an
//! explicit mask (`Option<f64>`), never a sentinel; every downstream estimator
//! consults the mask.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("task index {0} out of range (panel has {1} tasks)")]
    TaskIndex(usize, usize),
    #[error("window [{0}, {1}] outside panel period range (T = {2})")]
    InvalidWindow(usize, usize, usize),
    #[error("target standard deviation must be positive, got {0}")]
    NonPositiveSd(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("horizon for task '{0}' must be strictly positive")]
    NonPositiveHorizon(String),
    #[error("grouping violation: {0}")]
    Grouping(GroupingViolation),
}

/// Why a candidate grouping is not a partition of `{0,…,m-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupingViolation {
    /// Task indices appearing in more than one group.
    pub duplicated: Vec<usize>,
    /// Task indices appearing in no group.
    pub uncovered: Vec<usize>,
    /// Task indices outside `0..m`.
    pub out_of_range: Vec<usize>,
}

impl std::fmt::Display for GroupingViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "duplicated tasks {:?}, uncovered tasks {:?}, out-of-range tasks {:?}",
            self.duplicated, self.uncovered, self.out_of_range
        )
    }
}

/// Forecast errors for one task: a `T × p` matrix of `y − f` with missing
/// entries wherever either the forecast or the actual is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix {
    periods: usize,
    forecasters: usize,
    values: Vec<Option<f64>>, // row-major [t * p + j]
}

impl ErrorMatrix {
    pub fn new(periods: usize, forecasters: usize, values: Vec<Option<f64>>) -> Result<Self, PanelError> {
        if values.len() != periods * forecasters {
            return Err(PanelError::Dimension(format!(
                "expected {} entries, got {}",
                periods * forecasters,
                values.len()
            )));
        }
        Ok(Self { periods, forecasters, values })
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn forecasters(&self) -> usize {
        self.forecasters
    }

    pub fn get(&self, t: usize, j: usize) -> Option<f64> {
        self.values[t * self.forecasters + j]
    }

    /// Periods where forecaster `j` has a non-missing error (realises 𝒯ⱼ).
    pub fn observed(&self, j: usize) -> Vec<usize> {
        (0..self.periods).filter(|&t| self.get(t, j).is_some()).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_some())
    }

    /// Row `t` as a slice of optional errors.
    pub fn row(&self, t: usize) -> &[Option<f64>] {
        &self.values[t * self.forecasters..(t + 1) * self.forecasters]
    }

    /// Every non-missing error divided by `target_sd`; missingness unchanged.
    pub fn standardise(&self, target_sd: f64) -> Result<ErrorMatrix, PanelError> {
        if !(target_sd > 0.0) {
            return Err(PanelError::NonPositiveSd(target_sd));
        }
        Ok(ErrorMatrix {
            periods: self.periods,
            forecasters: self.forecasters,
            values: self.values.iter().map(|v| v.map(|x| x / target_sd)).collect(),
        })
    }

    /// New matrix restricted to the given period indices (in order).
    pub fn select_periods(&self, keep: &[usize]) -> ErrorMatrix {
        let mut values = Vec::with_capacity(keep.len() * self.forecasters);
        for &t in keep {
            values.extend_from_slice(self.row(t));
        }
        ErrorMatrix { periods: keep.len(), forecasters: self.forecasters, values }
    }
}

/// A partition of the task indices `{0,…,m-1}` into disjoint groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskGrouping {
    groups: Vec<Vec<usize>>,
}

impl TaskGrouping {
    pub fn new(groups: Vec<Vec<usize>>) -> Self {
        Self { groups }
    }

    /// One group containing all `m` tasks.
    pub fn all(m: usize) -> Self {
        Self { groups: vec![(0..m).collect()] }
    }

    /// `m` singleton groups (no information sharing).
    pub fn singletons(m: usize) -> Self {
        Self { groups: (0..m).map(|k| vec![k]).collect() }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn is_all_singletons(&self) -> bool {
        self.groups.iter().all(|g| g.len() == 1)
    }

    /// Group index for each task; assumes the grouping validated for `m`.
    pub fn group_of(&self, m: usize) -> Vec<usize> {
        let mut out = vec![0usize; m];
        for (l, g) in self.groups.iter().enumerate() {
            for &k in g {
                out[k] = l;
            }
        }
        out
    }

    /// Accepts iff the groups partition `{0,…,m-1}`.
    pub fn validate(&self, m: usize) -> Result<(), GroupingViolation> {
        let mut count = vec![0usize; m];
        let mut out_of_range = Vec::new();
        for g in &self.groups {
            for &k in g {
                if k >= m {
                    out_of_range.push(k);
                } else {
                    count[k] += 1;
                }
            }
        }
        let duplicated: Vec<usize> = (0..m).filter(|&k| count[k] > 1).collect();
        let uncovered: Vec<usize> = (0..m).filter(|&k| count[k] == 0).collect();
        if duplicated.is_empty() && uncovered.is_empty() && out_of_range.is_empty() {
            Ok(())
        } else {
            Err(GroupingViolation { duplicated, uncovered, out_of_range })
        }
    }
}

/// Forecasts, actuals, and missingness for `p` forecasters × `m` tasks × `T` periods.
///
/// Tasks may have different first/last available periods; alignment is encoded
/// in the missingness mask over a shared ordered period axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPanel {
    tasks: Vec<String>,
    forecasters: Vec<String>,
    periods: Vec<String>,
    horizons: Vec<usize>,
    forecasts: Vec<Vec<Option<f64>>>, // per task, row-major T × p
    actuals: Vec<Vec<Option<f64>>>,   // per task, length T
}

impl ForecastPanel {
    pub fn new(
        tasks: Vec<String>,
        forecasters: Vec<String>,
        periods: Vec<String>,
        horizons: Vec<usize>,
        forecasts: Vec<Vec<Option<f64>>>,
        actuals: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, PanelError> {
        let (m, p, t) = (tasks.len(), forecasters.len(), periods.len());
        if horizons.len() != m || forecasts.len() != m || actuals.len() != m {
            return Err(PanelError::Dimension(format!(
                "expected per-task arrays of length {m}, got horizons={}, forecasts={}, actuals={}",
                horizons.len(),
                forecasts.len(),
                actuals.len()
            )));
        }
        for (k, task) in tasks.iter().enumerate() {
            if horizons[k] == 0 {
                return Err(PanelError::NonPositiveHorizon(task.clone()));
            }
            if forecasts[k].len() != t * p {
                return Err(PanelError::Dimension(format!(
                    "task '{task}': expected {} forecast entries, got {}",
                    t * p,
                    forecasts[k].len()
                )));
            }
            if actuals[k].len() != t {
                return Err(PanelError::Dimension(format!(
                    "task '{task}': expected {t} actuals, got {}",
                    actuals[k].len()
                )));
            }
        }
        Ok(Self { tasks, forecasters, periods, horizons, forecasts, actuals })
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_forecasters(&self) -> usize {
        self.forecasters.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn forecasters(&self) -> &[String] {
        &self.forecasters
    }

    pub fn periods(&self) -> &[String] {
        &self.periods
    }

    pub fn horizon(&self, k: usize) -> usize {
        self.horizons[k]
    }

    pub fn forecast(&self, k: usize, t: usize, j: usize) -> Option<f64> {
        self.forecasts[k][t * self.forecasters.len() + j]
    }

    pub fn actual(&self, k: usize, t: usize) -> Option<f64> {
        self.actuals[k][t]
    }

    /// Forecast row for task `k` at period `t` across all forecasters.
    pub fn forecast_row(&self, k: usize, t: usize) -> &[Option<f64>] {
        let p = self.forecasters.len();
        &self.forecasts[k][t * p..(t + 1) * p]
    }

    /// Forecast errors `e = y − f` for task `k`, with missing propagation.
    pub fn errors(&self, k: usize) -> Result<ErrorMatrix, PanelError> {
        if k >= self.tasks.len() {
            return Err(PanelError::TaskIndex(k, self.tasks.len()));
        }
        let (t_len, p) = (self.periods.len(), self.forecasters.len());
        let mut values = Vec::with_capacity(t_len * p);
        for t in 0..t_len {
            let y = self.actuals[k][t];
            for j in 0..p {
                let f = self.forecasts[k][t * p + j];
                values.push(match (y, f) {
                    (Some(y), Some(f)) => Some(y - f),
                    _ => None,
                });
            }
        }
        ErrorMatrix::new(t_len, p, values)
    }

    /// Retains exactly the forecasters with at least `min_responses` non-missing
    /// forecasts for every task within the window (inclusive period indices).
    /// Forecaster ordering is preserved; an empty result is allowed.
    pub fn filter_forecasters(
        &self,
        min_responses: usize,
        window: (usize, usize),
    ) -> Result<ForecastPanel, PanelError> {
        let (lo, hi) = window;
        if lo > hi || hi >= self.periods.len() {
            return Err(PanelError::InvalidWindow(lo, hi, self.periods.len()));
        }
        let p = self.forecasters.len();
        let keep: Vec<usize> = (0..p)
            .filter(|&j| {
                self.tasks.iter().enumerate().all(|(k, _)| {
                    let n = (lo..=hi)
                        .filter(|&t| self.forecasts[k][t * p + j].is_some())
                        .count();
                    n >= min_responses
                })
            })
            .collect();
        let forecasters = keep.iter().map(|&j| self.forecasters[j].clone()).collect();
        let forecasts = self
            .forecasts
            .iter()
            .map(|fk| {
                let mut out = Vec::with_capacity(self.periods.len() * keep.len());
                for t in 0..self.periods.len() {
                    for &j in &keep {
                        out.push(fk[t * p + j]);
                    }
                }
                out
            })
            .collect();
        ForecastPanel::new(
            self.tasks.clone(),
            forecasters,
            self.periods.clone(),
            self.horizons.clone(),
            forecasts,
            self.actuals.clone(),
        )
    }

    /// Sample standard deviation of task `k`'s actuals over the given period
    /// indices (divisor T−1 about the sample mean). Returns `None` with fewer
    /// than two non-missing actuals.
    pub fn target_sd(&self, k: usize, period_indices: &[usize]) -> Option<f64> {
        let ys: Vec<f64> = period_indices.iter().filter_map(|&t| self.actuals[k][t]).collect();
        if ys.len() < 2 {
            return None;
        }
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if var > 0.0 {
            Some(var.sqrt())
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_panel() -> ForecastPanel {
        // 1 task, 2 forecasters, 3 periods
        ForecastPanel::new(
            vec!["t1".into()],
            vec!["a".into(), "b".into()],
            vec!["p1".into(), "p2".into(), "p3".into()],
            vec![1],
            vec![vec![
                Some(1.5),
                Some(1.0),
                Some(2.0),
                None,
                Some(3.0),
                Some(3.0),
            ]],
            vec![vec![Some(2.0), Some(2.0), Some(3.0)]],
        )
        .unwrap()
    }

    #[test]
    fn errors_direct_subtraction() {
        let panel = small_panel();
        let e = panel.errors(0).unwrap();
        assert_eq!(e.get(0, 0), Some(0.5));
        assert_eq!(e.get(0, 1), Some(1.0));
    }

    #[test]
    fn errors_missing_propagation() {
        let panel = small_panel();
        let e = panel.errors(0).unwrap();
        assert_eq!(e.get(1, 1), None);
        assert_eq!(e.observed(1), vec![0, 2]);
    }

    #[test]
    fn errors_perfect_forecasts_all_zero() {
        let panel = ForecastPanel::new(
            vec!["t".into()],
            vec!["a".into()],
            vec!["p1".into(), "p2".into()],
            vec![1],
            vec![vec![Some(1.0), Some(-2.0)]],
            vec![vec![Some(1.0), Some(-2.0)]],
        )
        .unwrap();
        let e = panel.errors(0).unwrap();
        assert_eq!(e.get(0, 0), Some(0.0));
        assert_eq!(e.get(1, 0), Some(0.0));
    }

    #[test]
    fn errors_constant_offset_recovered() {
        // f := y − c returns c exactly
        let c = 0.375;
        let ys = [1.0, -1.0];
        let panel = ForecastPanel::new(
            vec!["t".into()],
            vec!["a".into(), "b".into()],
            vec!["p1".into(), "p2".into()],
            vec![1],
            vec![vec![Some(ys[0] - c), Some(ys[0] - c), Some(ys[1] - c), Some(ys[1] - c)]],
            vec![vec![Some(ys[0]), Some(ys[1])]],
        )
        .unwrap();
        let e = panel.errors(0).unwrap();
        for t in 0..2 {
            for j in 0..2 {
                assert_eq!(e.get(t, j), Some(c));
            }
        }
    }

    #[test]
    fn errors_invalid_task_index() {
        assert!(matches!(small_panel().errors(5), Err(PanelError::TaskIndex(5, 1))));
    }

    #[test]
    fn filter_zero_is_vacuous() {
        let panel = small_panel();
        let filtered = panel.filter_forecasters(0, (0, 2)).unwrap();
        assert_eq!(filtered, panel);
    }

    #[test]
    fn filter_every_task_is_conjunctive() {
        // forecaster b: 2 responses on task 1, 0 on task 2 -> dropped at min=1
        let panel = ForecastPanel::new(
            vec!["t1".into(), "t2".into()],
            vec!["a".into(), "b".into()],
            vec!["p1".into(), "p2".into()],
            vec![1, 1],
            vec![
                vec![Some(1.0), Some(1.0), Some(1.0), Some(1.0)],
                vec![Some(1.0), None, Some(1.0), None],
            ],
            vec![vec![Some(1.0), Some(1.0)], vec![Some(1.0), Some(1.0)]],
        )
        .unwrap();
        let filtered = panel.filter_forecasters(1, (0, 1)).unwrap();
        assert_eq!(filtered.forecasters(), &["a".to_string()]);
    }

    #[test]
    fn filter_is_idempotent() {
        let panel = small_panel();
        let once = panel.filter_forecasters(3, (0, 2)).unwrap();
        let twice = once.filter_forecasters(3, (0, 2)).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn filter_invalid_window() {
        assert!(small_panel().filter_forecasters(1, (0, 9)).is_err());
    }

    #[test]
    fn standardise_scalar_division() {
        let e = ErrorMatrix::new(2, 1, vec![Some(1.0), Some(-2.0)]).unwrap();
        let s = e.standardise(2.0).unwrap();
        assert_eq!(s.get(0, 0), Some(0.5));
        assert_eq!(s.get(1, 0), Some(-1.0));
    }

    #[test]
    fn standardise_identity_and_missing() {
        let e = ErrorMatrix::new(2, 2, vec![Some(1.0), None, Some(3.0), None]).unwrap();
        let s = e.standardise(1.0).unwrap();
        assert_eq!(s, e);
        assert_eq!(s.observed(1), Vec::<usize>::new());
    }

    #[test]
    fn standardise_rejects_nonpositive() {
        let e = ErrorMatrix::new(1, 1, vec![Some(1.0)]).unwrap();
        assert!(e.standardise(0.0).is_err());
        assert!(e.standardise(-1.0).is_err());
    }

    #[test]
    fn standardise_composes() {
        let e = ErrorMatrix::new(2, 2, vec![Some(1.0), Some(-4.0), None, Some(0.25)]).unwrap();
        let ab = e.standardise(2.0).unwrap().standardise(3.0).unwrap();
        let joint = e.standardise(6.0).unwrap();
        for t in 0..2 {
            for j in 0..2 {
                match (ab.get(t, j), joint.get(t, j)) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                    (None, None) => {}
                    _ => panic!("mask changed"),
                }
            }
        }
    }

    #[test]
    fn grouping_valid_partition() {
        let g = TaskGrouping::new(vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert!(g.validate(6).is_ok());
    }

    #[test]
    fn grouping_duplicate_task() {
        let g = TaskGrouping::new(vec![vec![0, 1], vec![1, 2]]);
        let v = g.validate(3).unwrap_err();
        assert_eq!(v.duplicated, vec![1]);
        assert!(v.uncovered.is_empty());
    }

    #[test]
    fn grouping_uncovered_task() {
        let g = TaskGrouping::new(vec![vec![0]]);
        let v = g.validate(2).unwrap_err();
        assert_eq!(v.uncovered, vec![1]);
    }
}
