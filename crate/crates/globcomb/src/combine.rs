//! Local, hard-global, and soft-global combination problems for each
//! weighting scheme, with task grouping and scaling.
//!
//! Soft-global weights are computed by two-block coordinate descent: the
//! auxiliary group vectors have the closed-form group-mean update, and the
//! per-task subproblems reduce to the canonical `solver` kernels with a
//! linear term pulling each task towards its group mean. Large values of the
//! globalisation parameter make the penalty stiff, so the descent is then
//! warm-started at the hard-global solution instead of the local one.

use nalgebra::{DMatrix, DVector};
use std::time::Duration;
use thiserror::Error;

use crate::covest::CovMatrix;
use crate::panel::TaskGrouping;
use crate::solver::{
    solve_eq_qp, solve_equal_subset, solve_simplex_qp, QuadraticObjective, SolverError, SubsetMode,
    SIMPLEX_QP_MAX_ITER, SIMPLEX_QP_TOL,
};

/// Convergence tolerance on the max task-weight change per BCD sweep.
pub const BCD_TOL: f64 = 1e-8;
/// Sweep cap per gamma level.
pub const BCD_MAX_ITER: usize = 1000;
/// Per-task time limit for the discrete subset kernel inside BCD.
pub const SUBSET_TIME_LIMIT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum CombineError {
    #[error("task {task}: {source}")]
    Kernel {
        task: usize,
        #[source]
        source: SolverError,
    },
    #[error("covariance dimensions differ across tasks")]
    DimensionMismatch,
    #[error("no tasks provided")]
    NoTasks,
    #[error("invalid grouping: {0}")]
    Grouping(crate::panel::GroupingViolation),
    #[error("all weighted forecasters are missing")]
    NothingToCombine,
    #[error("gamma must be nonnegative, got {0}")]
    NegativeGamma(f64),
}

/// Which constraint set defines admissible weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    /// The singleton `{1/p}`.
    Equal,
    /// Sum-to-one weights (Bates–Granger).
    Optimal,
    /// Sum-to-one nonnegative weights.
    OptimalConvex,
    /// Equal weights on a best subset, `w ∈ {0, 1/s}^p`.
    OptimalEqual,
}

impl WeightScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "equal" => Some(Self::Equal),
            "optimal" => Some(Self::Optimal),
            "optimal-convex" | "optimal_convex" => Some(Self::OptimalConvex),
            "optimal-equal" | "optimal_equal" => Some(Self::OptimalEqual),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Equal => "equal",
            Self::Optimal => "optimal",
            Self::OptimalConvex => "optimal-convex",
            Self::OptimalEqual => "optimal-equal",
        }
    }
}

/// Full configuration of a globalised combination problem.
#[derive(Debug, Clone)]
pub struct GlobalisationSpec {
    pub lambda: f64,
    /// Globalisation strength; `f64::INFINITY` dispatches to hard global.
    pub gamma: f64,
    pub grouping: TaskGrouping,
    /// Apply per-task scaling by the local optimal objective value.
    pub scaled: bool,
}

/// Fitted per-task weight vectors plus per-group auxiliary vectors.
#[derive(Debug, Clone)]
pub struct WeightSet {
    pub per_task: Vec<DVector<f64>>,
    pub per_group: Vec<DVector<f64>>,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn check_covs(covs: &[CovMatrix]) -> Result<usize, CombineError> {
    let first = covs.first().ok_or(CombineError::NoTasks)?;
    let p = first.dim();
    if covs.iter().any(|c| c.dim() != p) {
        return Err(CombineError::DimensionMismatch);
    }
    Ok(p)
}

/// One kernel dispatch: minimise `w'(Q+ridge·I)w − 2c'w` over the scheme's
/// constraint set.
fn scheme_solve(
    scheme: WeightScheme,
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    ridge: f64,
    task: usize,
) -> Result<DVector<f64>, CombineError> {
    let p = q.nrows();
    let wrap = |source| CombineError::Kernel { task, source };
    match scheme {
        WeightScheme::Equal => Ok(DVector::from_element(p, 1.0 / p as f64)),
        WeightScheme::Optimal => {
            let obj = QuadraticObjective::new(q.clone(), c.clone()).map_err(wrap)?;
            solve_eq_qp(&obj, ridge).map_err(wrap)
        }
        WeightScheme::OptimalConvex => {
            let obj = QuadraticObjective::new(q.clone(), c.clone()).map_err(wrap)?;
            solve_simplex_qp(&obj, ridge, SIMPLEX_QP_TOL, SIMPLEX_QP_MAX_ITER).map_err(wrap)
        }
        WeightScheme::OptimalEqual => {
            let obj = QuadraticObjective::new(q.clone(), c.clone()).map_err(wrap)?;
            let sol = solve_equal_subset(&obj, ridge, SubsetMode::BranchBound, SUBSET_TIME_LIMIT)
                .map_err(wrap)?;
            Ok(sol.w)
        }
    }
}

fn group_means(per_task: &[DVector<f64>], grouping: &TaskGrouping) -> Vec<DVector<f64>> {
    grouping
        .groups()
        .iter()
        .map(|g| {
            let mut mean = DVector::zeros(per_task[g[0]].len());
            for &k in g {
                mean += &per_task[k];
            }
            mean / g.len() as f64
        })
        .collect()
}

/// Per-task independent solves of the ridge problem; group vectors set to the
/// (single, all-task) mean.
pub fn local_weights(
    covs: &[CovMatrix],
    lambda: f64,
    scheme: WeightScheme,
) -> Result<WeightSet, CombineError> {
    check_covs(covs)?;
    let m = covs.len();
    let zero_c = DVector::zeros(covs[0].dim());
    let per_task: Vec<DVector<f64>> = covs
        .iter()
        .enumerate()
        .map(|(k, cov)| scheme_solve(scheme, cov.values(), &zero_c, lambda, k))
        .collect::<Result<_, _>>()?;
    let objective_value: f64 = covs
        .iter()
        .zip(&per_task)
        .map(|(cov, w)| w.dot(&(cov.values() * w)) + lambda * w.dot(w))
        .sum();
    let per_group = group_means(&per_task, &TaskGrouping::all(m));
    Ok(WeightSet { per_task, per_group, objective_value, converged: true, iterations: 1 })
}

/// Per-task scaling factors: the optimal local objective value for each task,
/// floored at 1e-12.
pub fn task_scales(
    covs: &[CovMatrix],
    lambda: f64,
    scheme: WeightScheme,
) -> Result<Vec<f64>, CombineError> {
    check_covs(covs)?;
    let zero_c = DVector::zeros(covs[0].dim());
    covs.iter()
        .enumerate()
        .map(|(k, cov)| {
            let w = scheme_solve(scheme, cov.values(), &zero_c, lambda, k)?;
            let tau = w.dot(&(cov.values() * &w)) + lambda * w.dot(&w);
            if tau <= 0.0 {
                log::warn!("task {k}: nonpositive local objective {tau:.3e}, flooring at 1e-12");
                Ok(1e-12)
            } else {
                Ok(tau)
            }
        })
        .collect()
}

fn scales_or_ones(
    covs: &[CovMatrix],
    lambda: f64,
    scheme: WeightScheme,
    scaled: bool,
) -> Result<Vec<f64>, CombineError> {
    if scaled {
        task_scales(covs, lambda, scheme)
    } else {
        Ok(vec![1.0; covs.len()])
    }
}

/// One weight vector per group minimising the summed (possibly scaled) loss
/// across the group's tasks, assigned to every task in the group.
pub fn hard_global_weights(
    covs: &[CovMatrix],
    lambda: f64,
    scheme: WeightScheme,
    grouping: &TaskGrouping,
    scaled: bool,
) -> Result<WeightSet, CombineError> {
    let p = check_covs(covs)?;
    let m = covs.len();
    grouping.validate(m).map_err(CombineError::Grouping)?;
    let d = scales_or_ones(covs, lambda, scheme, scaled)?;
    let zero_c = DVector::zeros(p);
    let mut per_task: Vec<Option<DVector<f64>>> = vec![None; m];
    let mut per_group = Vec::with_capacity(grouping.n_groups());
    for g in grouping.groups() {
        let mut q = DMatrix::zeros(p, p);
        let mut ridge = 0.0;
        for &k in g {
            q += covs[k].values() / d[k];
            ridge += lambda / d[k];
        }
        let w = scheme_solve(scheme, &q, &zero_c, ridge, g[0])?;
        for &k in g {
            per_task[k] = Some(w.clone());
        }
        per_group.push(w);
    }
    let per_task: Vec<DVector<f64>> = per_task.into_iter().map(Option::unwrap).collect();
    let objective_value: f64 = (0..m)
        .map(|k| {
            let w = &per_task[k];
            (w.dot(&(covs[k].values() * w)) + lambda * w.dot(w)) / d[k]
        })
        .sum();
    Ok(WeightSet { per_task, per_group, objective_value, converged: true, iterations: 1 })
}

/// Full soft-global objective: scaled per-task losses plus the grouped penalty.
fn soft_objective(
    covs: &[CovMatrix],
    lambda: f64,
    gamma: f64,
    d: &[f64],
    grouping: &TaskGrouping,
    per_task: &[DVector<f64>],
    per_group: &[DVector<f64>],
) -> f64 {
    let mut total = 0.0;
    for (l, g) in grouping.groups().iter().enumerate() {
        for &k in g {
            let w = &per_task[k];
            total += (w.dot(&(covs[k].values() * w)) + lambda * w.dot(w)) / d[k];
            total += gamma * (&per_group[l] - w).norm_squared();
        }
    }
    total
}

/// The grouped regulariser value `γ Σ_l Σ_{k∈G_l} ‖w̄^(l) − w^(k)‖²` with the
/// group vectors set to the group means of `ws`.
pub fn regulariser_value(ws: &WeightSet, gamma: f64, grouping: &TaskGrouping) -> f64 {
    let means = group_means(&ws.per_task, grouping);
    let mut total = 0.0;
    for (l, g) in grouping.groups().iter().enumerate() {
        for &k in g {
            total += gamma * (&means[l] - &ws.per_task[k]).norm_squared();
        }
    }
    total
}

/// Soft-global weights by block-coordinate descent, initialised at the local
/// solution (or at the hard-global one when `gamma` dwarfs the covariance
/// scale). `gamma == 0` and all-singleton groupings return the local fit
/// directly (they coincide exactly); `gamma == +inf` dispatches to hard global.
pub fn soft_global_weights(
    covs: &[CovMatrix],
    spec: &GlobalisationSpec,
    scheme: WeightScheme,
) -> Result<WeightSet, CombineError> {
    let p = check_covs(covs)?;
    let m = covs.len();
    spec.grouping.validate(m).map_err(CombineError::Grouping)?;
    if spec.gamma < 0.0 {
        return Err(CombineError::NegativeGamma(spec.gamma));
    }
    if spec.gamma.is_infinite() {
        return hard_global_weights(covs, spec.lambda, scheme, &spec.grouping, spec.scaled);
    }
    let d = scales_or_ones(covs, spec.lambda, scheme, spec.scaled)?;
    let local = local_weights(covs, spec.lambda, scheme)?;
    if spec.gamma == 0.0 || spec.grouping.is_all_singletons() {
        let per_group = group_means(&local.per_task, &spec.grouping);
        let objective_value =
            soft_objective(covs, spec.lambda, spec.gamma, &d, &spec.grouping, &local.per_task, &per_group);
        return Ok(WeightSet {
            per_task: local.per_task,
            per_group,
            objective_value,
            converged: true,
            iterations: 1,
        });
    }

    // The penalty Hessian scales with gamma, so BCD's consensus component
    // moves only O(1/gamma) per sweep and a cold start at stiff gamma stalls
    // near the mean-of-local solution. For stiff gamma, start from the hard
    // global solution instead: there the per-task gradients average to zero,
    // so the consensus mean is already within O(1/gamma) of the soft optimum
    // and the remaining per-task corrections converge in a few sweeps.
    let scale = covs
        .iter()
        .map(|c| c.values().iter().fold(0.0f64, |a, &x| a.max(x.abs())))
        .fold(0.0f64, f64::max)
        .max(spec.lambda)
        .max(1e-12);
    let gamma = spec.gamma;
    let group_of = spec.grouping.group_of(m);
    let mut per_task = if gamma > 10.0 * scale {
        hard_global_weights(covs, spec.lambda, scheme, &spec.grouping, spec.scaled)?.per_task
    } else {
        local.per_task
    };
    let mut per_group;
    let mut iterations = 0usize;
    let mut converged = false;
    let discrete = scheme == WeightScheme::OptimalEqual;
    let mut seen_supports: Vec<Vec<u64>> = Vec::new();
    let mut best_discrete: Option<(f64, Vec<DVector<f64>>, Vec<DVector<f64>>)> = None;

    'sweeps: for _ in 0..BCD_MAX_ITER {
        iterations += 1;
        per_group = group_means(&per_task, &spec.grouping);
        let mut max_change = 0.0f64;
        let mut next = Vec::with_capacity(m);
        for k in 0..m {
            let q = covs[k].values() / d[k];
            let ridge = spec.lambda / d[k] + gamma;
            let c = &per_group[group_of[k]] * gamma;
            let w = scheme_solve(scheme, &q, &c, ridge, k)?;
            max_change = max_change.max((&w - &per_task[k]).amax());
            next.push(w);
        }
        per_task = next;
        if discrete {
            let support: Vec<u64> = per_task
                .iter()
                .map(|w| {
                    let mut mask = 0u64;
                    for i in 0..p {
                        if w[i] > 1e-12 {
                            mask |= 1 << i;
                        }
                    }
                    mask
                })
                .collect();
            let means = group_means(&per_task, &spec.grouping);
            let obj = soft_objective(
                covs,
                spec.lambda,
                spec.gamma,
                &d,
                &spec.grouping,
                &per_task,
                &means,
            );
            if best_discrete.as_ref().map_or(true, |(b, _, _)| obj < *b) {
                best_discrete = Some((obj, per_task.clone(), means.clone()));
            }
            if seen_supports.contains(&support) {
                // subset assignment repeats: BCD on a discrete set may
                // cycle, return the best iterate seen
                converged = true;
                break 'sweeps;
            }
            seen_supports.push(support);
        }
        if max_change < BCD_TOL {
            converged = true;
            break 'sweeps;
        }
    }

    if let Some((obj, best_task, best_group)) = best_discrete {
        return Ok(WeightSet {
            per_task: best_task,
            per_group: best_group,
            objective_value: obj,
            converged,
            iterations,
        });
    }
    per_group = group_means(&per_task, &spec.grouping);
    let objective_value =
        soft_objective(covs, spec.lambda, spec.gamma, &d, &spec.grouping, &per_task, &per_group);
    Ok(WeightSet { per_task, per_group, objective_value, converged, iterations })
}

/// Combine a cross-section of forecasts with the given weights. Missing
/// forecasts are handled by restricting to the available forecasters and
/// renormalising their weights to sum to one.
pub fn combine_forecast(
    weights: &DVector<f64>,
    forecasts: &[Option<f64>],
) -> Result<f64, CombineError> {
    debug_assert_eq!(weights.len(), forecasts.len());
    if forecasts.iter().all(|f| f.is_some()) {
        return Ok(forecasts
            .iter()
            .zip(weights.iter())
            .map(|(f, &w)| f.unwrap() * w)
            .sum());
    }
    let avail: f64 = forecasts
        .iter()
        .zip(weights.iter())
        .filter_map(|(f, &w)| f.map(|_| w))
        .sum();
    if avail.abs() < 1e-12 {
        return Err(CombineError::NothingToCombine);
    }
    Ok(forecasts
        .iter()
        .zip(weights.iter())
        .filter_map(|(f, &w)| f.map(|v| v * w / avail))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covest::ar1_cov;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cov_from(diag: &[f64]) -> CovMatrix {
        CovMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(diag.to_vec()))).unwrap()
    }

    fn random_cov(p: usize, rng: &mut impl Rng) -> CovMatrix {
        let g = DMatrix::from_fn(p, p, |_, _| rng.r#gen::<f64>() - 0.5);
        CovMatrix::new(&g * g.transpose() / p as f64 + DMatrix::identity(p, p) * 0.2).unwrap()
    }

    #[test]
    fn local_identical_covs_identical_weights() {
        let covs = vec![cov_from(&[1.0, 2.0]), cov_from(&[1.0, 2.0])];
        let ws = local_weights(&covs, 0.0, WeightScheme::Optimal).unwrap();
        assert_eq!(ws.per_task[0], ws.per_task[1]);
    }

    #[test]
    fn local_equal_scheme_ignores_covs() {
        let covs = vec![cov_from(&[1.0, 5.0, 9.0])];
        let ws = local_weights(&covs, 0.0, WeightScheme::Equal).unwrap();
        for i in 0..3 {
            assert!((ws.per_task[0][i] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn local_per_task_closed_forms() {
        let covs = vec![cov_from(&[1.0, 1.0]), cov_from(&[1.0, 2.0])];
        let ws = local_weights(&covs, 0.0, WeightScheme::Optimal).unwrap();
        assert!((ws.per_task[0][0] - 0.5).abs() < 1e-10);
        assert!((ws.per_task[1][0] - 2.0 / 3.0).abs() < 1e-10);
        assert!((ws.per_task[1][1] - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn hard_single_task_equals_local() {
        let covs = vec![cov_from(&[1.0, 3.0])];
        let local = local_weights(&covs, 0.1, WeightScheme::Optimal).unwrap();
        let hard =
            hard_global_weights(&covs, 0.1, WeightScheme::Optimal, &TaskGrouping::all(1), false)
                .unwrap();
        assert!((&local.per_task[0] - &hard.per_task[0]).norm() < 1e-12);
    }

    #[test]
    fn hard_identical_covs_equals_local() {
        let covs = vec![cov_from(&[1.0, 2.0, 4.0]); 3];
        let local = local_weights(&covs, 0.0, WeightScheme::Optimal).unwrap();
        let hard =
            hard_global_weights(&covs, 0.0, WeightScheme::Optimal, &TaskGrouping::all(3), false)
                .unwrap();
        assert!((&local.per_task[0] - &hard.per_task[0]).norm() < 1e-9);
    }

    #[test]
    fn hard_hand_summed_covariance() {
        let covs = vec![cov_from(&[1.0, 2.0]), cov_from(&[2.0, 1.0])];
        let hard =
            hard_global_weights(&covs, 0.0, WeightScheme::Optimal, &TaskGrouping::all(2), false)
                .unwrap();
        assert!((hard.per_task[0][0] - 0.5).abs() < 1e-10);
        assert!((hard.per_task[1][1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn soft_gamma_zero_equals_local_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let covs: Vec<CovMatrix> = (0..3).map(|_| random_cov(4, &mut rng)).collect();
        let local = local_weights(&covs, 0.05, WeightScheme::Optimal).unwrap();
        let spec = GlobalisationSpec {
            lambda: 0.05,
            gamma: 0.0,
            grouping: TaskGrouping::all(3),
            scaled: false,
        };
        let soft = soft_global_weights(&covs, &spec, WeightScheme::Optimal).unwrap();
        for k in 0..3 {
            assert_eq!(soft.per_task[k], local.per_task[k]);
        }
    }

    #[test]
    fn soft_large_gamma_approaches_hard() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let covs: Vec<CovMatrix> = (0..4).map(|_| random_cov(6, &mut rng)).collect();
        let grouping = TaskGrouping::all(4);
        let hard = hard_global_weights(&covs, 0.1, WeightScheme::Optimal, &grouping, false).unwrap();
        let spec = GlobalisationSpec { lambda: 0.1, gamma: 1e8, grouping, scaled: false };
        let soft = soft_global_weights(&covs, &spec, WeightScheme::Optimal).unwrap();
        for k in 0..4 {
            assert!(
                (&soft.per_task[k] - &hard.per_task[k]).amax() < 1e-4,
                "task {k}: gap {}",
                (&soft.per_task[k] - &hard.per_task[k]).amax()
            );
        }
    }

    #[test]
    fn soft_identical_covs_fixed_point() {
        let covs = vec![cov_from(&[1.0, 2.0]); 3];
        let local_one = local_weights(&covs[..1], 0.0, WeightScheme::Optimal).unwrap();
        let spec = GlobalisationSpec {
            lambda: 0.0,
            gamma: 5.0,
            grouping: TaskGrouping::all(3),
            scaled: false,
        };
        let soft = soft_global_weights(&covs, &spec, WeightScheme::Optimal).unwrap();
        for k in 0..3 {
            assert!((&soft.per_task[k] - &local_one.per_task[0]).norm() < 1e-8);
        }
    }

    #[test]
    fn soft_singleton_grouping_equals_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let covs: Vec<CovMatrix> = (0..3).map(|_| random_cov(4, &mut rng)).collect();
        let local = local_weights(&covs, 0.05, WeightScheme::Optimal).unwrap();
        let spec = GlobalisationSpec {
            lambda: 0.05,
            gamma: 7.3,
            grouping: TaskGrouping::singletons(3),
            scaled: false,
        };
        let soft = soft_global_weights(&covs, &spec, WeightScheme::Optimal).unwrap();
        for k in 0..3 {
            assert_eq!(soft.per_task[k], local.per_task[k]);
        }
    }

    #[test]
    fn soft_objective_monotone_in_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let covs: Vec<CovMatrix> = (0..3).map(|_| random_cov(5, &mut rng)).collect();
        let grouping = TaskGrouping::all(3);
        let mut prev = f64::NEG_INFINITY;
        for gamma in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0] {
            let spec = GlobalisationSpec { lambda: 0.1, gamma, grouping: grouping.clone(), scaled: false };
            let ws = soft_global_weights(&covs, &spec, WeightScheme::Optimal).unwrap();
            assert!(
                ws.objective_value >= prev - 1e-9,
                "objective decreased at gamma {gamma}: {} < {prev}",
                ws.objective_value
            );
            prev = ws.objective_value;
        }
    }

    #[test]
    fn soft_sandwich_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let covs: Vec<CovMatrix> = (0..3).map(|_| random_cov(5, &mut rng)).collect();
        let grouping = TaskGrouping::all(3);
        let loss = |per_task: &[DVector<f64>]| -> f64 {
            per_task
                .iter()
                .zip(&covs)
                .map(|(w, c)| w.dot(&(c.values() * w)) + 0.1 * w.dot(w))
                .sum()
        };
        let local = local_weights(&covs, 0.1, WeightScheme::Optimal).unwrap();
        let hard = hard_global_weights(&covs, 0.1, WeightScheme::Optimal, &grouping, false).unwrap();
        for gamma in [0.1, 1.0, 10.0] {
            let spec = GlobalisationSpec { lambda: 0.1, gamma, grouping: grouping.clone(), scaled: false };
            let soft = soft_global_weights(&covs, &spec, WeightScheme::Optimal).unwrap();
            let l = loss(&soft.per_task);
            assert!(l >= loss(&local.per_task) - 1e-8);
            assert!(l <= loss(&hard.per_task) + 1e-8);
        }
    }

    #[test]
    fn soft_group_vectors_are_group_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let covs: Vec<CovMatrix> = (0..4).map(|_| random_cov(3, &mut rng)).collect();
        let grouping = TaskGrouping::new(vec![vec![0, 1], vec![2, 3]]);
        let spec = GlobalisationSpec { lambda: 0.1, gamma: 2.0, grouping: grouping.clone(), scaled: false };
        let ws = soft_global_weights(&covs, &spec, WeightScheme::Optimal).unwrap();
        for (l, g) in grouping.groups().iter().enumerate() {
            let mut mean = DVector::zeros(3);
            for &k in g {
                mean += &ws.per_task[k];
            }
            mean /= g.len() as f64;
            assert!((&ws.per_group[l] - mean).amax() < 1e-8);
        }
    }

    #[test]
    fn scaled_weights_invariant_to_task_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let covs: Vec<CovMatrix> = (0..3).map(|_| random_cov(4, &mut rng)).collect();
        let rescaled: Vec<CovMatrix> = covs
            .iter()
            .zip([3.0, 0.2, 11.0])
            .map(|(c, s)| CovMatrix::new(c.values() * s).unwrap())
            .collect();
        let grouping = TaskGrouping::all(3);
        // lambda 0 so the ridge does not break homogeneity of the scaled loss
        let spec = GlobalisationSpec { lambda: 0.0, gamma: 1.5, grouping, scaled: true };
        let a = soft_global_weights(&covs, &spec, WeightScheme::Optimal).unwrap();
        let b = soft_global_weights(&rescaled, &spec, WeightScheme::Optimal).unwrap();
        for k in 0..3 {
            assert!(
                (&a.per_task[k] - &b.per_task[k]).amax() < 1e-8,
                "task {k} gap {}",
                (&a.per_task[k] - &b.per_task[k]).amax()
            );
        }
    }

    #[test]
    fn task_scales_identity() {
        let covs = vec![CovMatrix::new(DMatrix::identity(4, 4)).unwrap()];
        let tau = task_scales(&covs, 0.0, WeightScheme::Optimal).unwrap();
        assert!((tau[0] - 0.25).abs() < 1e-10);
    }

    #[test]
    fn task_scales_closed_form() {
        let covs = vec![cov_from(&[1.0, 2.0])];
        let tau = task_scales(&covs, 0.0, WeightScheme::Optimal).unwrap();
        assert!((tau[0] - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn task_scales_self_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let covs: Vec<CovMatrix> = (0..2).map(|_| random_cov(5, &mut rng)).collect();
        let tau = task_scales(&covs, 0.1, WeightScheme::Optimal).unwrap();
        let local = local_weights(&covs, 0.1, WeightScheme::Optimal).unwrap();
        for k in 0..2 {
            let w = &local.per_task[k];
            let v = w.dot(&(covs[k].values() * w)) + 0.1 * w.dot(w);
            assert!((v - tau[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn regulariser_identical_weights_zero() {
        let ws = WeightSet {
            per_task: vec![DVector::from_vec(vec![0.5, 0.5]); 3],
            per_group: vec![],
            objective_value: 0.0,
            converged: true,
            iterations: 0,
        };
        assert_eq!(regulariser_value(&ws, 2.0, &TaskGrouping::all(3)), 0.0);
        assert_eq!(regulariser_value(&ws, 0.0, &TaskGrouping::all(3)), 0.0);
    }

    #[test]
    fn regulariser_both_closed_forms() {
        let ws = WeightSet {
            per_task: vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])],
            per_group: vec![],
            objective_value: 0.0,
            converged: true,
            iterations: 0,
        };
        let v = regulariser_value(&ws, 1.0, &TaskGrouping::all(2));
        assert!((v - 1.0).abs() < 1e-12);
        // pairwise form (γ/m) Σ_{k} Σ_{l<=k} ‖w_l − w_k‖²
        let pairwise = 0.5 * (&ws.per_task[0] - &ws.per_task[1]).norm_squared();
        assert!((v - pairwise).abs() < 1e-12);
    }

    #[test]
    fn regulariser_forms_agree_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..50 {
            let m = rng.gen_range(2..6);
            let p = rng.gen_range(2..5);
            let per_task: Vec<DVector<f64>> =
                (0..m).map(|_| DVector::from_fn(p, |_, _| rng.r#gen::<f64>())).collect();
            let gamma = rng.r#gen::<f64>() * 3.0;
            let ws = WeightSet {
                per_task: per_task.clone(),
                per_group: vec![],
                objective_value: 0.0,
                converged: true,
                iterations: 0,
            };
            let mean_based = regulariser_value(&ws, gamma, &TaskGrouping::all(m));
            let mut pairwise = 0.0;
            for k in 0..m {
                for l in 0..=k {
                    pairwise += (&per_task[l] - &per_task[k]).norm_squared();
                }
            }
            pairwise *= gamma / m as f64;
            assert!((mean_based - pairwise).abs() < 1e-10);
        }
    }

    #[test]
    fn combine_full_row() {
        let w = DVector::from_vec(vec![0.5, 0.5]);
        assert_eq!(combine_forecast(&w, &[Some(1.0), Some(3.0)]).unwrap(), 2.0);
    }

    #[test]
    fn combine_renormalises_over_available() {
        let w = DVector::from_vec(vec![0.5, 0.5]);
        assert_eq!(combine_forecast(&w, &[Some(1.0), None]).unwrap(), 1.0);
    }

    #[test]
    fn combine_zero_available_weight_errors() {
        let w = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(
            combine_forecast(&w, &[None, Some(5.0)]),
            Err(CombineError::NothingToCombine)
        ));
    }

    #[test]
    fn soft_optimal_equal_runs_and_respects_scheme() {
        let covs = vec![
            ar1_cov(&[1.0, 1.2, 2.5, 0.8], 0.3).unwrap(),
            ar1_cov(&[2.0, 0.9, 1.1, 1.4], 0.3).unwrap(),
        ];
        let spec = GlobalisationSpec {
            lambda: 0.1,
            gamma: 0.5,
            grouping: TaskGrouping::all(2),
            scaled: false,
        };
        let ws = soft_global_weights(&covs, &spec, WeightScheme::OptimalEqual).unwrap();
        for w in &ws.per_task {
            assert!((w.sum() - 1.0).abs() < 1e-8);
            let s = w.iter().filter(|&&x| x > 1e-12).count();
            for &x in w.iter() {
                assert!(x.abs() < 1e-12 || (x - 1.0 / s as f64).abs() < 1e-10);
            }
        }
    }
}
