//! Synthetic data generation and the simulation experiment pipeline.
//!
//! Forecast errors are drawn directly from per-task Gaussians with
//! AR(1)-structured covariances whose per-forecaster standard deviations are
//! correlated-uniform across tasks (Gaussian copula). Out-of-sample accuracy
//! is measured analytically against oracle weights fit on the true
//! covariance, so no testing draws are needed.

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::combine::{CombineError, WeightScheme};
use crate::covest::{ar1_cov, CovError, CovMatrix};
use crate::panel::{ErrorMatrix, TaskGrouping};
use crate::solver::{
    solve_eq_qp, solve_equal_subset, solve_simplex_qp, QuadraticObjective, SubsetMode,
    EXACT_ENUM_MAX_P, SIMPLEX_QP_MAX_ITER, SIMPLEX_QP_TOL,
};
use crate::tune::{validation_tune, CombinationMode, TuneError, TuningGrid};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("uniform bounds require a < b, got a = {0}, b = {1}")]
    BadBounds(f64, f64),
    #[error("covariance is not positive definite; Cholesky factorisation failed")]
    NotPositiveDefinite,
    #[error("oracle metric denominator is zero")]
    ZeroDenominator,
    #[error("covariance construction failed: {0}")]
    Cov(#[from] CovError),
    #[error("combination failed: {0}")]
    Combine(#[from] CombineError),
    #[error("solver failed: {0}")]
    Solver(#[from] crate::solver::SolverError),
    #[error("tuning failed: {0}")]
    Tune(#[from] TuneError),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Configuration of one simulation cell.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub p: usize,
    pub t: usize,
    pub m: usize,
    pub rho: f64,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Paper-scale defaults: p = T = 50, rho = 0.75, sigma in [1, 3].
    pub fn paper_defaults(m: usize, alpha: f64, replications: usize, seed: u64) -> Self {
        Self { p: 50, t: 50, m, rho: 0.75, alpha, a: 1.0, b: 3.0, replications, seed }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SimError::AlphaOutOfRange(self.alpha));
        }
        if !(self.a < self.b) {
            return Err(SimError::BadBounds(self.a, self.b));
        }
        if self.rho.abs() >= 1.0 {
            return Err(SimError::Config(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if self.p == 0 || self.t == 0 || self.m == 0 || self.replications == 0 {
            return Err(SimError::Config("p, t, m, replications must be positive".into()));
        }
        Ok(())
    }
}

/// Standard normal CDF.
fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Draws the `p × m` matrix of per-forecaster standard deviations: each row
/// is marginally Uniform[a,b] with pairwise Pearson correlation `alpha`
/// across tasks, via a Gaussian copula with Gaussian correlation
/// `r = 2 sin(pi * alpha / 6)`.
///
/// Each forecaster uses its own seed-derived substream, so the task-1 column
/// does not depend on `m`.
pub fn gen_sigma_draws(
    p: usize,
    m: usize,
    alpha: f64,
    a: f64,
    b: f64,
    rng: &mut impl RngCore,
) -> Result<Vec<Vec<f64>>, SimError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SimError::AlphaOutOfRange(alpha));
    }
    if !(a < b) {
        return Err(SimError::BadBounds(a, b));
    }
    let r = 2.0 * (std::f64::consts::PI * alpha / 6.0).sin();
    let seeds: Vec<u64> = (0..p).map(|_| rng.next_u64()).collect();
    let rows = seeds
        .into_iter()
        .map(|seed| {
            let mut sub = ChaCha8Rng::seed_from_u64(seed);
            let common: f64 = standard_normal(&mut sub);
            (0..m)
                .map(|_| {
                    let idio: f64 = standard_normal(&mut sub);
                    let x = if alpha >= 1.0 {
                        common // perfect relatedness: identical columns
                    } else if alpha <= 0.0 {
                        idio
                    } else {
                        r.sqrt() * common + (1.0 - r).sqrt() * idio
                    };
                    a + (b - a) * std_normal_cdf(x)
                })
                .collect()
        })
        .collect();
    Ok(rows)
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; one draw per call keeps substreams simple
    let u1: f64 = rng.r#gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.r#gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `T` independent draws from `N(0, cov)` via Cholesky factorisation.
pub fn gen_errors(
    cov: &CovMatrix,
    t: usize,
    rng: &mut impl Rng,
) -> Result<ErrorMatrix, SimError> {
    let p = cov.dim();
    let chol = cov.values().clone().cholesky().ok_or(SimError::NotPositiveDefinite)?;
    let l = chol.l();
    let mut values = Vec::with_capacity(t * p);
    for _ in 0..t {
        let z = DVector::from_fn(p, |_, _| standard_normal(rng));
        let e = &l * z;
        values.extend(e.iter().map(|&x| Some(x)));
    }
    Ok(ErrorMatrix::new(t, p, values).expect("dimensions consistent by construction"))
}

/// `(ŵ − w)' Σ (ŵ − w) / (w' Σ w)` with the true covariance.
pub fn msfe_rel_oracle(
    w_hat: &DVector<f64>,
    w_oracle: &DVector<f64>,
    cov_true: &CovMatrix,
) -> Result<f64, SimError> {
    let denom = w_oracle.dot(&(cov_true.values() * w_oracle));
    if denom == 0.0 {
        return Err(SimError::ZeroDenominator);
    }
    let d = w_hat - w_oracle;
    Ok(d.dot(&(cov_true.values() * &d)) / denom)
}

/// One per-replication result cell.
#[derive(Debug, Clone)]
pub struct SimRow {
    pub scheme: WeightScheme,
    pub mode: CombinationMode,
    pub alpha: f64,
    pub m: usize,
    pub replication: usize,
    pub metric: f64,
}

/// Aggregated mean and standard error per (scheme, mode) cell.
#[derive(Debug, Clone)]
pub struct SimSummary {
    pub scheme: WeightScheme,
    pub mode: CombinationMode,
    pub alpha: f64,
    pub m: usize,
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SimResults {
    pub rows: Vec<SimRow>,
    pub failures: usize,
}

impl SimResults {
    pub fn summarise(&self) -> Vec<SimSummary> {
        let mut out: Vec<SimSummary> = Vec::new();
        for row in &self.rows {
            let cell = out.iter_mut().find(|s| {
                s.scheme == row.scheme && s.mode == row.mode && s.alpha == row.alpha && s.m == row.m
            });
            match cell {
                Some(s) => {
                    s.mean += row.metric;
                    s.n += 1;
                }
                None => out.push(SimSummary {
                    scheme: row.scheme,
                    mode: row.mode,
                    alpha: row.alpha,
                    m: row.m,
                    mean: row.metric,
                    std_error: 0.0,
                    n: 1,
                    failures: self.failures,
                }),
            }
        }
        for s in &mut out {
            s.mean /= s.n as f64;
        }
        for s in &mut out {
            if s.n > 1 {
                let var: f64 = self
                    .rows
                    .iter()
                    .filter(|r| {
                        r.scheme == s.scheme && r.mode == s.mode && r.alpha == s.alpha && r.m == s.m
                    })
                    .map(|r| (r.metric - s.mean).powi(2))
                    .sum::<f64>()
                    / (s.n - 1) as f64;
                s.std_error = (var / s.n as f64).sqrt();
            }
        }
        out
    }
}

/// Substream encoding for the stream-split RNG: one independent substream
/// per (replication, purpose, index).
fn substream(seed: u64, rep: usize, purpose: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((rep as u64) << 16) | (purpose << 8) | index as u64);
    rng
}

/// Oracle weights for one scheme on the true covariance (no shrinkage).
fn oracle_weights(scheme: WeightScheme, cov: &CovMatrix) -> Result<DVector<f64>, SimError> {
    let p = cov.dim();
    Ok(match scheme {
        WeightScheme::Equal => DVector::from_element(p, 1.0 / p as f64),
        WeightScheme::Optimal => {
            let obj = QuadraticObjective::quadratic_only(cov.values().clone())?;
            solve_eq_qp(&obj, 0.0)?
        }
        WeightScheme::OptimalConvex => {
            let obj = QuadraticObjective::quadratic_only(cov.values().clone())?;
            solve_simplex_qp(&obj, 0.0, SIMPLEX_QP_TOL, SIMPLEX_QP_MAX_ITER)?
        }
        WeightScheme::OptimalEqual => {
            let obj = QuadraticObjective::quadratic_only(cov.values().clone())?;
            let mode = if p <= EXACT_ENUM_MAX_P { SubsetMode::Exact } else { SubsetMode::BranchBound };
            solve_equal_subset(&obj, 0.0, mode, std::time::Duration::from_secs(30))?.w
        }
    })
}

fn run_replication(
    config: &SimConfig,
    rep: usize,
    schemes: &[WeightScheme],
    modes: &[CombinationMode],
    grid: &TuningGrid,
) -> Result<Vec<SimRow>, SimError> {
    let mut sigma_rng = substream(config.seed, rep, 0, 0);
    let sigma = gen_sigma_draws(config.p, config.m, config.alpha, config.a, config.b, &mut sigma_rng)?;
    let true_covs: Vec<CovMatrix> = (0..config.m)
        .map(|k| {
            let sds: Vec<f64> = (0..config.p).map(|j| sigma[j][k]).collect();
            ar1_cov(&sds, config.rho)
        })
        .collect::<Result<_, _>>()?;

    if config.alpha >= 1.0 {
        // all true covariances are identical matrices
        for cov in &true_covs[1..] {
            debug_assert_eq!(cov.values(), true_covs[0].values());
        }
    }

    let mut train = Vec::with_capacity(config.m);
    let mut val = Vec::with_capacity(config.m);
    for k in 0..config.m {
        train.push(gen_errors(&true_covs[k], config.t, &mut substream(config.seed, rep, 1, k))?);
        val.push(gen_errors(&true_covs[k], config.t, &mut substream(config.seed, rep, 2, k))?);
    }

    let grouping = TaskGrouping::all(config.m);
    let mut rows = Vec::new();
    for &scheme in schemes {
        let oracle = oracle_weights(scheme, &true_covs[0])?;
        // pipeline self-check: the oracle scores zero by definition
        debug_assert!(msfe_rel_oracle(&oracle, &oracle, &true_covs[0])?.abs() < 1e-15);
        for &mode in modes {
            let result = validation_tune(&train, &val, grid, scheme, &grouping, mode)?;
            let metric = msfe_rel_oracle(&result.weights.per_task[0], &oracle, &true_covs[0])?;
            rows.push(SimRow {
                scheme,
                mode,
                alpha: config.alpha,
                m: config.m,
                replication: rep,
                metric,
            });
        }
    }
    Ok(rows)
}

/// Runs the full simulation cell: per replication draw, tune on the
/// validation set, and score task 1 against the oracle. Replications run in
/// parallel on seed-derived substreams; failures are excluded and counted.
pub fn run_sim_experiment(
    config: &SimConfig,
    schemes: &[WeightScheme],
    modes: &[CombinationMode],
) -> Result<SimResults, SimError> {
    config.validate()?;
    let grid = TuningGrid::default_log();
    let results: Vec<Result<Vec<SimRow>, SimError>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, rep, schemes, modes, &grid))
        .collect();
    let mut out = SimResults::default();
    for r in results {
        match r {
            Ok(rows) => out.rows.extend(rows),
            Err(e) => {
                log::warn!("replication failed and was excluded: {e}");
                out.failures += 1;
            }
        }
    }
    Ok(out)
}
