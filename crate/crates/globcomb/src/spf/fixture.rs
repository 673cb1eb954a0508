//! Synthetic survey-shaped fixtures standing in for the proprietary survey
//! export: correlated forecaster error covariances, block entry/exit plus
//! i.i.d. nonresponse missingness, and CSV round-trip helpers.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covest::ar1_cov;
use crate::panel::ForecastPanel;
use crate::simlab::{gen_errors, gen_sigma_draws};
use crate::spf::{quarter_seq, SpfError};

/// Number of forecasters surviving the 40-response filter in the standard
/// survey fixture.
pub const SURVEY_RETAINED: usize = 34;
/// Total forecasters in the raw survey fixture before filtering.
pub const SURVEY_RAW: usize = 45;
/// Periods (quarters) in the survey fixture.
pub const SURVEY_PERIODS: usize = 100;

const SURVEY_TASKS: [&str; 6] = ["gdp_1y", "gdp_2y", "infl_1y", "infl_2y", "unemp_1y", "unemp_2y"];
const SURVEY_HORIZONS: [usize; 6] = [4, 8, 4, 8, 4, 8];
/// Quarters every forecaster answers, guaranteeing pairwise overlap.
const PROTECTED: std::ops::RangeInclusive<usize> = 47..=52;

fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.r#gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.r#gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Fully-observed panel with `m` tasks (horizon one), independent true
/// covariances, and no missingness. Handy for small pipeline tests.
pub fn dense_panel(p: usize, t: usize, m: usize, seed: u64) -> Result<ForecastPanel, SpfError> {
    panel_from_draws(p, t, m, seed, false, None)
}

/// Like [`dense_panel`] but all tasks share one true covariance, so
/// cross-task information sharing genuinely helps.
pub fn related_panel(p: usize, t: usize, m: usize, seed: u64) -> Result<ForecastPanel, SpfError> {
    panel_from_draws(p, t, m, seed, true, None)
}

fn panel_from_draws(
    p: usize,
    t: usize,
    m: usize,
    seed: u64,
    shared_cov: bool,
    mask: Option<&[Vec<bool>]>, // mask[j][t], shared across tasks
) -> Result<ForecastPanel, SpfError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = if shared_cov { 1.0 } else { 0.0 };
    let sigma = gen_sigma_draws(p, m, alpha, 1.0, 3.0, &mut rng)?;
    let mut forecasts = Vec::with_capacity(m);
    let mut actuals = Vec::with_capacity(m);
    for k in 0..m {
        let sds: Vec<f64> = (0..p).map(|j| sigma[j][k]).collect();
        let cov = ar1_cov(&sds, 0.75)?;
        let errs = gen_errors(&cov, t, &mut rng)?;
        let ys: Vec<f64> = (0..t).map(|_| 2.0 * normal(&mut rng)).collect();
        let mut fk = Vec::with_capacity(t * p);
        for ti in 0..t {
            for j in 0..p {
                let observed = mask.map_or(true, |mk| mk[j][ti]);
                fk.push(if observed {
                    Some(ys[ti] - errs.get(ti, j).unwrap())
                } else {
                    None
                });
            }
        }
        forecasts.push(fk);
        actuals.push(ys.into_iter().map(Some).collect());
    }
    let (tasks, horizons) = if m == 6 {
        (
            SURVEY_TASKS.iter().map(|s| s.to_string()).collect(),
            SURVEY_HORIZONS.to_vec(),
        )
    } else {
        ((0..m).map(|k| format!("task{k}")).collect(), vec![1; m])
    };
    Ok(ForecastPanel::new(
        tasks,
        (0..p).map(|j| format!("fc{j:02}")).collect(),
        quarter_seq(1999, 1, t),
        horizons,
        forecasts,
        actuals,
    )?)
}

/// Raw survey fixture: 45 forecasters over 100 quarters and the six standard
/// tasks, with block entry/exit missingness shared across tasks. Exactly 34
/// forecasters respond at least 40 times; the rest stay below the cutoff, so
/// filtering at 40 responses retains 34. A mid-sample stretch is answered by
/// everyone, guaranteeing pairwise overlap. Overall missingness is near 40%.
pub fn survey_fixture_raw(seed: u64) -> Result<ForecastPanel, SpfError> {
    let (p, t) = (SURVEY_RAW, SURVEY_PERIODS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5f5f_5f5f);
    let mut mask = vec![vec![false; t]; p];
    for j in 0..p {
        if j < SURVEY_RETAINED {
            // long-stayer: wide block, thinned by nonresponse, >= 55 responses
            let entry = rng.gen_range(0..=10);
            let exit = rng.gen_range(89..t);
            let target = rng.gen_range(55..=85);
            let mut block: Vec<usize> =
                (entry..=exit).filter(|ti| !PROTECTED.contains(ti)).collect();
            block.shuffle(&mut rng);
            for &ti in block.iter().take(target - PROTECTED.count()) {
                mask[j][ti] = true;
            }
            for ti in PROTECTED {
                mask[j][ti] = true;
            }
        } else {
            // short-stayer: contiguous block strictly under the 40 cutoff
            let len = rng.gen_range(10..=35);
            let start = rng.gen_range(0..=t - len);
            for ti in start..start + len {
                mask[j][ti] = true;
            }
        }
    }
    panel_from_draws(p, t, 6, seed, false, Some(&mask))
}

/// The filtered survey fixture: [`survey_fixture_raw`] with forecasters
/// below 40 responses dropped, yielding p = 34.
pub fn survey_fixture(seed: u64) -> Result<ForecastPanel, SpfError> {
    let raw = survey_fixture_raw(seed)?;
    let filtered = raw.filter_forecasters(40, (0, raw.n_periods() - 1))?;
    Ok(filtered)
}

/// Returns a copy of the panel with every actual from `from_period` onward
/// shifted by `delta` (for leakage tests).
pub fn perturb_actuals(
    panel: &ForecastPanel,
    from_period: usize,
    delta: f64,
) -> Result<ForecastPanel, SpfError> {
    let (m, p, t) = (panel.n_tasks(), panel.n_forecasters(), panel.n_periods());
    let forecasts = (0..m)
        .map(|k| {
            let mut fk = Vec::with_capacity(t * p);
            for ti in 0..t {
                fk.extend_from_slice(panel.forecast_row(k, ti));
            }
            fk
        })
        .collect();
    let actuals = (0..m)
        .map(|k| {
            (0..t)
                .map(|ti| {
                    panel
                        .actual(k, ti)
                        .map(|y| if ti >= from_period { y + delta } else { y })
                })
                .collect()
        })
        .collect();
    Ok(ForecastPanel::new(
        panel.tasks().to_vec(),
        panel.forecasters().to_vec(),
        panel.periods().to_vec(),
        (0..m).map(|k| panel.horizon(k)).collect(),
        forecasts,
        actuals,
    )?)
}

/// Writes the panel to the long-format export schema: observed forecasts to
/// `forecasts_path`, observed actuals to `actuals_path`. Rows are ordered by
/// (task, period, forecaster).
pub fn write_panel_csvs(
    panel: &ForecastPanel,
    forecasts_path: &Path,
    actuals_path: &Path,
) -> Result<(), SpfError> {
    let wrap = |path: &Path, source: csv::Error| SpfError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(forecasts_path)
        .map_err(|e| wrap(forecasts_path, e))?;
    w.write_record(["task", "period", "forecaster", "forecast"])
        .map_err(|e| wrap(forecasts_path, e))?;
    for (k, task) in panel.tasks().iter().enumerate() {
        for (ti, period) in panel.periods().iter().enumerate() {
            for (j, forecaster) in panel.forecasters().iter().enumerate() {
                if let Some(f) = panel.forecast(k, ti, j) {
                    w.write_record([task, period, forecaster, &format!("{f:.15e}")])
                        .map_err(|e| wrap(forecasts_path, e))?;
                }
            }
        }
    }
    w.flush().map_err(|e| SpfError::Io {
        path: forecasts_path.display().to_string(),
        source: e,
    })?;

    let mut w = csv::Writer::from_path(actuals_path).map_err(|e| wrap(actuals_path, e))?;
    w.write_record(["task", "period", "actual"]).map_err(|e| wrap(actuals_path, e))?;
    for (k, task) in panel.tasks().iter().enumerate() {
        for (ti, period) in panel.periods().iter().enumerate() {
            if let Some(y) = panel.actual(k, ti) {
                w.write_record([task, period, &format!("{y:.15e}")])
                    .map_err(|e| wrap(actuals_path, e))?;
            }
        }
    }
    w.flush().map_err(|e| SpfError::Io {
        path: actuals_path.display().to_string(),
        source: e,
    })?;
    Ok(())
}
