//! Command-line driver: reproducible runs of the synthetic experiment, the
//! globalisation path, rolling-origin evaluation, and one-shot weight fits,
//! all emitting deterministic CSVs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use globcomb::combine::{combine_forecast, GlobalisationSpec, WeightScheme};
use globcomb::report::{self, EvalSummaryRow};
use globcomb::simlab::{run_sim_experiment, SimConfig};
use globcomb::spf::{
    fit_panel_weights, globalisation_path, grouping_preset, load_panel, msfe_rel_equal,
    rolling_eval, CsvSchema, EvalRecord, EvalWindow, Tuner,
};
use globcomb::tune::{log_grid, CombinationMode};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
enum CliError {
    /// Bad arguments or config; exit code 2.
    Usage(String),
    /// Failure during computation or I/O; exit code 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "globcomb", version, about = "Global combinations of expert forecasts")]
struct Cli {
    /// Flat key=value config file; explicit flags win over its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; all randomness flows from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSVs (created if absent).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthetic experiment: draw related tasks, tune, score against the
    /// covariance oracle.
    Simulate(SimulateArgs),
    /// Sweep the globalisation strength and report error relative to local
    /// combination.
    Path(PathArgs),
    /// Rolling-origin evaluation with per-task tuned globalisation, reported
    /// relative to equal weights.
    Evaluate(EvaluateArgs),
    /// One-shot weight fit over a full panel; emits weights and the latest
    /// combined forecasts.
    Combine(CombineArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Forecasters per task.
    #[arg(long)]
    p: Option<usize>,
    /// Training (and validation) periods per task.
    #[arg(long)]
    t: Option<usize>,
    /// Number of tasks.
    #[arg(long)]
    m: Option<usize>,
    /// Cross-task relatedness in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// AR(1) error correlation across forecasters.
    #[arg(long)]
    rho: Option<f64>,
    /// Lower bound of the forecaster standard-deviation range.
    #[arg(long)]
    a: Option<f64>,
    /// Upper bound of the forecaster standard-deviation range.
    #[arg(long)]
    b: Option<f64>,
    /// Replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Weighting scheme(s); repeatable.
    #[arg(long)]
    scheme: Vec<String>,
    /// Combination mode(s); repeatable (default: all three).
    #[arg(long)]
    mode: Vec<String>,
}

#[derive(Args, Debug)]
struct PanelArgs {
    /// Forecasts CSV {task, period, forecaster, forecast}.
    #[arg(long)]
    forecasts: Option<PathBuf>,
    /// Actuals CSV {task, period, actual}.
    #[arg(long)]
    actuals: Option<PathBuf>,
    /// Last training period label, e.g. 2018-Q4.
    #[arg(long)]
    train_end: Option<String>,
    /// First test period label.
    #[arg(long)]
    test_start: Option<String>,
    /// Last test period label.
    #[arg(long)]
    test_end: Option<String>,
    /// Freeze covariance training at train_end instead of expanding through
    /// the test window.
    #[arg(long)]
    frozen: bool,
}

#[derive(Args, Debug)]
struct PathArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[arg(long)]
    scheme: Option<String>,
    /// Grouping preset: variables | horizons | all | custom:<spec>.
    #[arg(long)]
    grouping: Option<String>,
    /// Globalisation grid: log:<hi>:<lo>:<n> or comma-separated values.
    #[arg(long)]
    gamma_grid: Option<String>,
    /// Shrinkage strength.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Weighting scheme(s); repeatable (default: optimal, optimal-convex,
    /// optimal-equal).
    #[arg(long)]
    scheme: Vec<String>,
    /// Combination mode(s); repeatable (default: local, hard, soft).
    #[arg(long)]
    mode: Vec<String>,
    /// Grouping preset(s); repeatable (default: all).
    #[arg(long)]
    grouping: Vec<String>,
    #[arg(long)]
    gamma_grid: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Scale each task's loss by its local optimum.
    #[arg(long)]
    scaled: bool,
}

#[derive(Args, Debug)]
struct CombineArgs {
    #[arg(long)]
    forecasts: Option<PathBuf>,
    #[arg(long)]
    actuals: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    grouping: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    scaled: bool,
}

/// Flat key=value config file; blank lines and `#` comments allowed.
struct ConfigFile {
    values: HashMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "seed", "out_dir", "threads", "p", "t", "m", "alpha", "rho", "a", "b", "reps", "scheme",
    "mode", "grouping", "forecasts", "actuals", "train_end", "test_start", "test_end", "frozen",
    "gamma_grid", "lambda", "gamma", "scaled",
];

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut values = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!(
                        "{} line {}: expected key=value, got '{line}'",
                        path.display(),
                        i + 1
                    ))
                })?;
                let key = key.trim().to_string();
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    return Err(CliError::Usage(format!(
                        "{} line {}: unknown key '{key}'",
                        path.display(),
                        i + 1
                    )));
                }
                values.insert(key, value.trim().to_string());
            }
        }
        Ok(Self { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key '{key}': {e}"))),
        }
    }
}

/// Flag wins, then config file, then default.
fn resolve<T: std::str::FromStr + Clone>(
    flag: Option<T>,
    config: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    Ok(flag.or(config.get(key)?).unwrap_or(default))
}

fn resolve_required<T: std::str::FromStr + Clone>(
    flag: Option<T>,
    config: &ConfigFile,
    key: &str,
) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    flag.or(config.get(key)?)
        .ok_or_else(|| CliError::Usage(format!("missing required parameter --{}", key.replace('_', "-"))))
}

fn parse_scheme(s: &str) -> Result<WeightScheme, CliError> {
    WeightScheme::parse(s).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown scheme '{s}' (expected equal, optimal, optimal-convex, optimal-equal)"
        ))
    })
}

fn parse_mode(s: &str) -> Result<CombinationMode, CliError> {
    CombinationMode::parse(s)
        .ok_or_else(|| CliError::Usage(format!("unknown mode '{s}' (expected local, hard, soft)")))
}

/// `log:<hi>:<lo>:<n>` or a comma-separated value list.
fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    if let Some(body) = s.strip_prefix("log:") {
        let parts: Vec<&str> = body.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Usage(format!("bad grid '{s}': expected log:<hi>:<lo>:<n>")));
        }
        let hi: f64 = parts[0].parse().map_err(usage)?;
        let lo: f64 = parts[1].parse().map_err(usage)?;
        let n: usize = parts[2].parse().map_err(usage)?;
        log_grid(hi, lo, n).map_err(usage)
    } else {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(usage))
            .collect()
    }
}

fn load_input_panel(
    forecasts: &Path,
    actuals: &Path,
) -> Result<globcomb::panel::ForecastPanel, CliError> {
    load_panel(forecasts, actuals, &CsvSchema::default()).map_err(runtime)
}

fn out_dir(dir: &Option<PathBuf>, config: &ConfigFile) -> Result<PathBuf, CliError> {
    let dir = resolve(dir.clone(), config, "out_dir", PathBuf::from("."))?;
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn window_from(panel: &globcomb::panel::ForecastPanel, args: &PanelArgs, config: &ConfigFile) -> Result<EvalWindow, CliError> {
    let train_end: String = resolve_required(args.train_end.clone(), config, "train_end")?;
    let test_start: String = resolve_required(args.test_start.clone(), config, "test_start")?;
    let test_end: String = resolve_required(args.test_end.clone(), config, "test_end")?;
    EvalWindow::from_labels(panel, &train_end, &test_start, &test_end).map_err(usage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = ConfigFile::load(cli.config.as_deref())?;
    let threads = resolve(cli.threads, &config, "threads", 0)?;
    if threads > 0 {
        // ignore failure when a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let seed = resolve(cli.seed, &config, "seed", 0)?;
    let dir = out_dir(&cli.out_dir, &config)?;
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, &config, seed, &dir),
        Command::Path(args) => cmd_path(args, &config, &dir),
        Command::Evaluate(args) => cmd_evaluate(args, &config, &dir),
        Command::Combine(args) => cmd_combine(args, &config, &dir),
    }
}

fn schemes_or(list: &[String], config: &ConfigFile, defaults: &[WeightScheme]) -> Result<Vec<WeightScheme>, CliError> {
    let mut names = list.to_vec();
    if names.is_empty() {
        if let Some(s) = config.get::<String>("scheme")? {
            names.push(s);
        }
    }
    if names.is_empty() {
        return Ok(defaults.to_vec());
    }
    names.iter().map(|s| parse_scheme(s)).collect()
}

fn modes_or(list: &[String], config: &ConfigFile, defaults: &[CombinationMode]) -> Result<Vec<CombinationMode>, CliError> {
    let mut names = list.to_vec();
    if names.is_empty() {
        if let Some(s) = config.get::<String>("mode")? {
            names.push(s);
        }
    }
    if names.is_empty() {
        return Ok(defaults.to_vec());
    }
    names.iter().map(|s| parse_mode(s)).collect()
}

fn cmd_simulate(
    args: &SimulateArgs,
    config: &ConfigFile,
    seed: u64,
    dir: &Path,
) -> Result<(), CliError> {
    let sim = SimConfig {
        p: resolve(args.p, config, "p", 50)?,
        t: resolve(args.t, config, "t", 50)?,
        m: resolve(args.m, config, "m", 5)?,
        alpha: resolve(args.alpha, config, "alpha", 1.0 / 3.0)?,
        rho: resolve(args.rho, config, "rho", 0.75)?,
        a: resolve(args.a, config, "a", 1.0)?,
        b: resolve(args.b, config, "b", 3.0)?,
        replications: resolve(args.reps, config, "reps", 30)?,
        seed,
    };
    sim.validate().map_err(usage)?;
    let schemes = schemes_or(&args.scheme, config, &[WeightScheme::Optimal])?;
    let modes = modes_or(
        &args.mode,
        config,
        &[CombinationMode::Local, CombinationMode::Hard, CombinationMode::Soft],
    )?;

    let results = run_sim_experiment(&sim, &schemes, &modes).map_err(runtime)?;
    let summary = results.summarise();

    let comment = format!(
        "globcomb v{VERSION} simulate p={} t={} m={} alpha={} rho={} a={} b={} reps={} seed={} schemes={} modes={}",
        sim.p,
        sim.t,
        sim.m,
        report::fmt_float(sim.alpha),
        report::fmt_float(sim.rho),
        report::fmt_float(sim.a),
        report::fmt_float(sim.b),
        sim.replications,
        sim.seed,
        schemes.iter().map(|s| s.name()).collect::<Vec<_>>().join("+"),
        modes.iter().map(|m| m.name()).collect::<Vec<_>>().join("+"),
    );
    report::write_sim_rows(&dir.join("sim_rows.csv"), &comment, &results.rows).map_err(runtime)?;
    report::write_sim_summary(&dir.join("sim_summary.csv"), &comment, &summary)
        .map_err(runtime)?;

    for s in &summary {
        println!(
            "alpha={} m={} scheme={} mode={}: mean={:.4} se={:.4} (n={}, failures={})",
            report::fmt_float(s.alpha),
            s.m,
            s.scheme.name(),
            s.mode.name(),
            s.mean,
            s.std_error,
            s.n,
            s.failures
        );
    }
    Ok(())
}

fn cmd_path(args: &PathArgs, config: &ConfigFile, dir: &Path) -> Result<(), CliError> {
    let forecasts: PathBuf = resolve_required(args.panel.forecasts.clone(), config, "forecasts")?;
    let actuals: PathBuf = resolve_required(args.panel.actuals.clone(), config, "actuals")?;
    let panel = load_input_panel(&forecasts, &actuals)?;
    let window = window_from(&panel, &args.panel, config)?;
    let scheme = parse_scheme(&resolve(args.scheme.clone(), config, "scheme", "optimal".into())?)?;
    let grouping_name = resolve(args.grouping.clone(), config, "grouping", "all".to_string())?;
    let grouping = grouping_preset(&grouping_name, panel.tasks()).map_err(usage)?;
    let grid_spec = resolve(args.gamma_grid.clone(), config, "gamma_grid", "log:1e3:1e-3:10".to_string())?;
    let grid = parse_grid(&grid_spec)?;
    let lambda = resolve(args.lambda, config, "lambda", 0.1)?;
    if lambda < 0.0 {
        return Err(CliError::Usage(format!("lambda must be nonnegative, got {lambda}")));
    }
    let frozen = args.panel.frozen || config.get::<bool>("frozen")?.unwrap_or(false);

    let result = globalisation_path(&panel, window, scheme, &grouping, &grid, lambda, frozen)
        .map_err(runtime)?;
    let comment = format!(
        "globcomb v{VERSION} path scheme={} grouping={} lambda={} gamma_grid={} frozen={} window={}..{}..{}",
        scheme.name(),
        grouping_name,
        report::fmt_float(lambda),
        grid_spec,
        frozen,
        window.train_end,
        window.test_start,
        window.test_end,
    );
    report::write_path_result(&dir.join("path.csv"), &comment, panel.tasks(), &grouping_name, &result)
        .map_err(runtime)?;
    println!("path.csv written: {} tasks x {} gamma values", panel.n_tasks(), result.gammas.len());
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, config: &ConfigFile, dir: &Path) -> Result<(), CliError> {
    let forecasts: PathBuf = resolve_required(args.panel.forecasts.clone(), config, "forecasts")?;
    let actuals: PathBuf = resolve_required(args.panel.actuals.clone(), config, "actuals")?;
    let panel = load_input_panel(&forecasts, &actuals)?;
    let window = window_from(&panel, &args.panel, config)?;
    let schemes = schemes_or(
        &args.scheme,
        config,
        &[WeightScheme::Optimal, WeightScheme::OptimalConvex, WeightScheme::OptimalEqual],
    )?;
    let modes = modes_or(
        &args.mode,
        config,
        &[CombinationMode::Local, CombinationMode::Hard, CombinationMode::Soft],
    )?;
    let grouping_names: Vec<String> = if args.grouping.is_empty() {
        vec![config.get::<String>("grouping")?.unwrap_or_else(|| "all".to_string())]
    } else {
        args.grouping.clone()
    };
    let grid_spec = resolve(args.gamma_grid.clone(), config, "gamma_grid", "log:1e3:1e-3:10".to_string())?;
    let grid = parse_grid(&grid_spec)?;
    let lambda = resolve(args.lambda, config, "lambda", 0.1)?;
    let scaled = args.scaled || config.get::<bool>("scaled")?.unwrap_or(false);
    let frozen = args.panel.frozen || config.get::<bool>("frozen")?.unwrap_or(false);
    let m = panel.n_tasks();

    // equal-weights baseline: the denominator of every reported ratio
    let baseline_spec = GlobalisationSpec {
        lambda,
        gamma: 0.0,
        grouping: grouping_preset("all", panel.tasks()).map_err(usage)?,
        scaled: false,
    };
    let baseline = rolling_eval(
        &panel,
        window,
        WeightScheme::Equal,
        CombinationMode::Local,
        &baseline_spec,
        &Tuner::None,
        frozen,
    )
    .map_err(runtime)?;
    let base_sq: HashMap<(usize, usize), f64> =
        baseline.iter().map(|r| ((r.task, r.origin), r.sq_error)).collect();

    let comment_base = format!(
        "globcomb v{VERSION} evaluate lambda={} gamma_grid={} scaled={} frozen={} window={}..{}..{}",
        report::fmt_float(lambda),
        grid_spec,
        scaled,
        frozen,
        window.train_end,
        window.test_start,
        window.test_end,
    );
    let mut summary_rows = Vec::new();
    let mut all_records: Vec<(String, String, String, Vec<EvalRecord>)> = Vec::new();
    for &scheme in &schemes {
        for &mode in &modes {
            for grouping_name in &grouping_names {
                let grouping = grouping_preset(grouping_name, panel.tasks()).map_err(usage)?;
                let spec = GlobalisationSpec {
                    lambda,
                    gamma: 0.0,
                    grouping,
                    scaled,
                };
                let tuner = match mode {
                    CombinationMode::Soft => Tuner::Loocv { gamma_grid: grid.clone() },
                    _ => Tuner::None,
                };
                let records =
                    rolling_eval(&panel, window, scheme, mode, &spec, &tuner, frozen)
                        .map_err(runtime)?;
                let mut ratios = Vec::new();
                for k in 0..m {
                    let mut num = Vec::new();
                    let mut den = Vec::new();
                    for r in records.iter().filter(|r| r.task == k) {
                        if let Some(&b) = base_sq.get(&(r.task, r.origin)) {
                            num.push(r.sq_error);
                            den.push(b);
                        }
                    }
                    if !num.is_empty() {
                        ratios.push(msfe_rel_equal(&num, &den).map_err(runtime)?);
                    }
                }
                if ratios.is_empty() {
                    return Err(CliError::Runtime("no comparable records against the equal-weights baseline".into()));
                }
                let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
                let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                summary_rows.push(EvalSummaryRow {
                    scheme: scheme.name().to_string(),
                    mode: mode.name().to_string(),
                    grouping: grouping_name.clone(),
                    mean,
                    min,
                    max,
                });
                all_records.push((
                    scheme.name().to_string(),
                    mode.name().to_string(),
                    grouping_name.clone(),
                    records,
                ));
            }
        }
    }

    report::write_eval_summary(&dir.join("eval_summary.csv"), &comment_base, &summary_rows)
        .map_err(runtime)?;
    let mut record_rows = Vec::new();
    for (scheme, mode, grouping, records) in &all_records {
        for r in records {
            record_rows.push(vec![
                panel.tasks()[r.task].clone(),
                grouping.clone(),
                mode.clone(),
                scheme.clone(),
                report::fmt_float(r.gamma),
                report::fmt_float(lambda),
                panel.periods()[r.origin].clone(),
                report::fmt_float(r.forecast),
                report::fmt_float(r.actual),
                report::fmt_float(r.sq_error),
            ]);
        }
    }
    report::write_csv(
        &dir.join("eval_records.csv"),
        &comment_base,
        &[
            "task", "grouping", "mode", "scheme", "gamma", "lambda", "origin", "forecast",
            "actual", "sq_error",
        ],
        record_rows,
    )
    .map_err(runtime)?;

    for row in &summary_rows {
        println!(
            "{} / {} / {}: {:.3} [{:.3}, {:.3}]",
            row.scheme, row.mode, row.grouping, row.mean, row.min, row.max
        );
    }
    Ok(())
}

fn cmd_combine(args: &CombineArgs, config: &ConfigFile, dir: &Path) -> Result<(), CliError> {
    let forecasts: PathBuf = resolve_required(args.forecasts.clone(), config, "forecasts")?;
    let actuals: PathBuf = resolve_required(args.actuals.clone(), config, "actuals")?;
    let panel = load_input_panel(&forecasts, &actuals)?;
    let scheme = parse_scheme(&resolve(args.scheme.clone(), config, "scheme", "optimal".into())?)?;
    let mode = parse_mode(&resolve(args.mode.clone(), config, "mode", "local".into())?)?;
    let grouping_name = resolve(args.grouping.clone(), config, "grouping", "all".to_string())?;
    let grouping = grouping_preset(&grouping_name, panel.tasks()).map_err(usage)?;
    let lambda = resolve(args.lambda, config, "lambda", 0.1)?;
    let gamma = resolve(args.gamma, config, "gamma", 1.0)?;
    let scaled = args.scaled || config.get::<bool>("scaled")?.unwrap_or(false);
    if lambda < 0.0 || gamma < 0.0 {
        return Err(CliError::Usage(format!(
            "lambda and gamma must be nonnegative, got lambda={lambda}, gamma={gamma}"
        )));
    }

    let spec = GlobalisationSpec { lambda, gamma, grouping, scaled };
    let (per_task, _gammas) =
        fit_panel_weights(&panel, scheme, mode, &spec, &Tuner::None).map_err(runtime)?;

    let comment = format!(
        "globcomb v{VERSION} combine scheme={} mode={} grouping={} lambda={} gamma={} scaled={}",
        scheme.name(),
        mode.name(),
        grouping_name,
        report::fmt_float(lambda),
        report::fmt_float(gamma),
        scaled,
    );
    report::write_weights(&dir.join("weights.csv"), &comment, &panel, &per_task)
        .map_err(runtime)?;

    let last = panel.n_periods() - 1;
    for (k, task) in panel.tasks().iter().enumerate() {
        match combine_forecast(&per_task[k], panel.forecast_row(k, last)) {
            Ok(f) => println!("{task} {}: combined forecast {f:.6}", panel.periods()[last]),
            Err(_) => println!("{task} {}: no available forecasts", panel.periods()[last]),
        }
    }
    Ok(())
}
