//! `mvopt` command line.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvopt_core::backtest::{self, BacktestConfig, BacktestRule, Benchmark, NpebModel};
use mvopt_core::frontier::{self, Bounds};
use mvopt_core::qp::{self, QpProblem, QpStatus};
use mvopt_core::simlab::{self, Scenario, SweepRule};
use mvopt_core::timeseries::GarchForm;
use mvopt_core::{npeb, Vector};

use crate::data::{self, DataError, MarketData};
use crate::report::{self, Format, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mvopt",
    version,
    about = "Mean-variance portfolio optimization with unknown moments"
)]
pub struct Cli {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "MVOPT_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Annualization factor for information ratios and targets.
    #[arg(long, global = true, default_value_t = 12.0)]
    pub periods_per_year: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo reward tables and actual frontiers.
    Simulate(SimulateArgs),
    /// Rolling-window out-of-sample backtest.
    Backtest(BacktestArgs),
    /// Efficient frontier of the sample moments.
    Frontier(FrontierArgs),
    /// NPEB weights for one panel.
    NpebWeights(NpebArgs),
    /// Rank assets by information ratio.
    Screen(ScreenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Table1,
    Table2,
    FrontierFig1,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Multiplier on every return (default 0.01 for the reward tables, 1
    /// for the frontier).
    #[arg(long)]
    pub scale: Option<f64>,
    /// Number of simulated training samples.
    #[arg(long)]
    pub sims: Option<usize>,
    /// Bootstrap replicates of the NPEB and resampled rules.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleName {
    PlugIn,
    Shrinkage,
    Resampled,
    Npeb,
    NpebAr,
    NpebSrg,
    EqualWeight,
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchmarkKind {
    /// The `benchmark` column.
    Index,
    /// Value-weighted portfolio from the `mv_` columns.
    ValueWeighted,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GarchDriver {
    Innovation,
    Return,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV with a `date` column, asset returns and optional `benchmark` and
    /// `mv_<asset>` columns.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Lower bound on every weight (e.g. -0.05 to allow small shorts).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lower_bound: f64,
    #[arg(long, default_value_t = 1.0)]
    pub upper_bound: f64,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub rule: RuleName,
    /// Annualized target mean return of the plug-in, shrinkage and
    /// resampled rules.
    #[arg(long, default_value_t = 0.015)]
    pub target: f64,
    #[arg(long, default_value_t = 120)]
    pub window: usize,
    #[arg(long, default_value_t = 50)]
    pub universe: usize,
    /// Defaults to the index column if present, else value weights.
    #[arg(long, value_enum)]
    pub benchmark: Option<BenchmarkKind>,
    #[command(flatten)]
    pub bounds: BoundArgs,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// `λ` grid for NPEB rules (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// Series driving the GARCH variance of the NPEB-SRG rule.
    #[arg(long, value_enum, default_value_t = GarchDriver::Innovation)]
    pub garch_driver: GarchDriver,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[command(flatten)]
    pub bounds: BoundArgs,
}

#[derive(Debug, Args)]
pub struct NpebArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Risk aversion. Without it `λ` is chosen over the grid by bootstrap
    /// information ratio of excess returns over the benchmark column.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = npeb::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[command(flatten)]
    pub bounds: BoundArgs,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub keep: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Core(#[from] mvopt_core::Error),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(mvopt_core::Error::InvalidParameter(_)) => EXIT_CONFIG,
            _ => EXIT_DATA,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs the parsed command and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    if !(cli.periods_per_year > 0.0) {
        return Err(CliError::Config("--periods-per-year must be positive".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| {
        let tables = match &cli.command {
            Command::Simulate(a) => simulate(cli, a)?,
            Command::Backtest(a) => run_backtest(cli, a)?,
            Command::Frontier(a) => frontier_cmd(a)?,
            Command::NpebWeights(a) => npeb_weights(cli, a)?,
            Command::Screen(a) => screen(a)?,
        };
        tables
            .iter()
            .map(|(stem, t)| t.write_file(&cli.output_dir, stem, cli.format).map_err(CliError::from))
            .collect()
    })
}

type Outputs = Vec<(String, Table)>;

fn load(input: &InputArgs) -> Result<MarketData, CliError> {
    Ok(data::read_csv_path(&input.input)?)
}

fn bounds(b: &BoundArgs, m: usize) -> Result<Bounds, CliError> {
    if !(b.lower_bound <= b.upper_bound) || b.lower_bound * m as f64 > 1.0 || b.upper_bound * (m as f64) < 1.0 {
        return Err(CliError::Config(format!(
            "weight bounds [{}, {}] leave no fully invested portfolio of {m} assets",
            b.lower_bound, b.upper_bound
        )));
    }
    Ok(Bounds {
        lower: Vector::from_element(m, b.lower_bound),
        upper: Vector::from_element(m, b.upper_bound),
    })
}

fn positive(name: &str, n: usize) -> Result<usize, CliError> {
    if n == 0 {
        return Err(CliError::Config(format!("{name} must be positive")));
    }
    Ok(n)
}

/// Actual-frontier `λ` grid of the NPEB rule.
pub const FRONTIER_LAMBDAS: [f64; 10] = [0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0];

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<Outputs, CliError> {
    match a.preset {
        Preset::Table1 | Preset::Table2 => {
            let scale = a.scale.unwrap_or(0.01);
            let presets = if a.preset == Preset::Table1 {
                Scenario::table1()
            } else {
                Scenario::table2()
            };
            let mut scenarios = Vec::with_capacity(presets.len());
            for mut s in presets {
                if let Some(n) = a.sims {
                    s.n_sims = positive("--sims", n)?;
                }
                if let Some(b) = a.replicates {
                    s.npeb_replicates = positive("--replicates", b)?;
                }
                scenarios.push(s.scaled(scale));
            }
            let table = simlab::run_reward_studies(&scenarios, cli.seed)?;
            let stem = if a.preset == Preset::Table1 {
                "rewards_table1"
            } else {
                "rewards_table2"
            };
            Ok(vec![(stem.into(), report::reward_table(&table))])
        }
        Preset::FrontierFig1 => {
            let scale = a.scale.unwrap_or(1.0);
            let sims = positive("--sims", a.sims.unwrap_or(500))?;
            let replicates = positive("--replicates", a.replicates.unwrap_or(200))?;
            let (mu, sigma) = simlab::freq_truth(1);
            let (mu, sigma) = (mu * scale, sigma * (scale * scale));
            let bounds = Bounds::long_only(mu.len());
            let targets: Vec<f64> = frontier::linspace(2.0, 3.47, 15)
                .into_iter()
                .map(|t| t * scale)
                .collect();
            let lambdas: Vec<f64> = FRONTIER_LAMBDAS.iter().map(|l| l / scale).collect();
            let rules = [
                SweepRule::Oracle,
                SweepRule::PlugIn,
                SweepRule::Shrinkage,
                SweepRule::Michaud { replicates },
                SweepRule::Npeb { replicates },
            ];
            let mut sweeps = Vec::new();
            for (k, rule) in rules.into_iter().enumerate() {
                let grid = if matches!(rule, SweepRule::Npeb { .. }) {
                    &lambdas
                } else {
                    &targets
                };
                let seed = mvopt_core::rng::derive_seed(cli.seed, k as u64);
                let points = simlab::actual_frontier_sweep(&mu, &sigma, rule, grid, &bounds, 6, sims, seed)?;
                sweeps.push((rule.name().to_string(), points));
            }
            Ok(vec![("frontier_fig1".into(), report::sweep_table(&sweeps))])
        }
    }
}

fn lambda_grid(grid: &Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
    let grid = grid.clone().unwrap_or_else(npeb::default_lambda_grid);
    if grid.is_empty() || grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(CliError::Config("lambda grid must hold positive values".into()));
    }
    Ok(grid)
}

fn run_backtest(cli: &Cli, a: &BacktestArgs) -> Result<Outputs, CliError> {
    let data = load(&a.input)?;
    let per_period = a.target / cli.periods_per_year;
    let replicates = a.replicates;
    let rule = match a.rule {
        RuleName::PlugIn => BacktestRule::PlugIn { target: per_period },
        RuleName::Shrinkage => BacktestRule::Shrinkage { target: per_period },
        RuleName::Resampled => BacktestRule::Resampled {
            target: per_period,
            replicates: positive("--replicates", replicates)?,
        },
        RuleName::Npeb | RuleName::NpebAr | RuleName::NpebSrg => BacktestRule::Npeb {
            model: match a.rule {
                RuleName::Npeb => NpebModel::Iid,
                RuleName::NpebAr => NpebModel::Ar,
                _ => NpebModel::Srg(match a.garch_driver {
                    GarchDriver::Innovation => GarchForm::Innovation,
                    GarchDriver::Return => GarchForm::Return,
                }),
            },
            grid: lambda_grid(&a.lambda_grid)?,
            replicates: positive("--replicates", replicates)?,
        },
        RuleName::EqualWeight => BacktestRule::EqualWeight,
        RuleName::Benchmark => BacktestRule::HoldBenchmark,
    };
    let kind = a
        .benchmark
        .unwrap_or(match (&data.benchmark, &data.market_values, a.rule) {
            (_, Some(_), RuleName::Benchmark) => BenchmarkKind::ValueWeighted,
            (Some(_), _, _) => BenchmarkKind::Index,
            (None, Some(_), _) => BenchmarkKind::ValueWeighted,
            (None, None, _) => BenchmarkKind::None,
        });
    if a.rule == RuleName::Benchmark && kind != BenchmarkKind::ValueWeighted {
        return Err(CliError::Config("holding the benchmark needs mv_ columns".into()));
    }
    let benchmark = match kind {
        BenchmarkKind::Index => {
            Some(Benchmark::Index(data.benchmark.clone().ok_or_else(|| {
                CliError::Config("input has no benchmark column".into())
            })?))
        }
        BenchmarkKind::ValueWeighted => Some(Benchmark::ValueWeighted(
            data.market_values
                .clone()
                .ok_or_else(|| CliError::Config("input has no mv_ columns".into()))?,
        )),
        BenchmarkKind::None => None,
    };
    let m = a.universe.min(data.panel.n_assets());
    bounds(&a.bounds, m)?;
    let config = BacktestConfig {
        window: a.window,
        universe_size: a.universe,
        rule,
        lower_bound: a.bounds.lower_bound,
        upper_bound: a.bounds.upper_bound,
        periods_per_year: cli.periods_per_year,
        seed: cli.seed,
    };
    let result = backtest::run_backtest(&data.panel, benchmark.as_ref(), &config)?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    for f in &result.infeasible {
        log::info!("period {}: {} ({})", f.period, f.message, f.fallback);
    }
    Ok(vec![
        (
            "backtest_periods".into(),
            report::backtest_periods(&result, data.panel.asset_labels()),
        ),
        (
            "backtest_summary".into(),
            report::backtest_summary(&result, cli.periods_per_year),
        ),
        ("backtest_infeasible".into(), report::backtest_infeasible(&result)),
    ])
}

fn frontier_cmd(a: &FrontierArgs) -> Result<Outputs, CliError> {
    let data = load(&a.input)?;
    let panel = &data.panel;
    let m = panel.n_assets();
    let bounds = bounds(&a.bounds, m)?;
    let est = mvopt_core::MomentEstimate::from_data(panel.data());
    let cov = mvopt_core::moments::regularize_if_needed(&est.cov).0;
    let (lo, hi) = frontier::achievable_mean_range(&est.mean, &bounds.lower, &bounds.upper, 1.0)
        .ok_or_else(|| CliError::Config("weight bounds are infeasible".into()))?;
    let gmv = QpProblem::with_budget(&cov * 2.0, Vector::zeros(m)).bounds(bounds.lower.clone(), bounds.upper.clone());
    let gmv_mean = qp::solve_qp(&gmv)
        .ok()
        .filter(|s| s.status == QpStatus::Optimal)
        .map(|s| s.w.dot(&est.mean));
    let start = gmv_mean.unwrap_or(lo).clamp(lo, hi);
    let targets = frontier::linspace(start, hi, positive("--points", a.points)?);
    let f = frontier::efficient_frontier(&est.mean, &cov, &targets, &bounds);
    for (t, e) in &f.skipped {
        log::warn!("target {t}: {e}");
    }
    Ok(vec![(
        "frontier".into(),
        report::frontier_table(&f, panel.asset_labels()),
    )])
}

fn npeb_weights(cli: &Cli, a: &NpebArgs) -> Result<Outputs, CliError> {
    let data = load(&a.input)?;
    let panel = &data.panel;
    let bounds = bounds(&a.bounds, panel.n_assets())?;
    let b = positive("--replicates", a.replicates)?;
    match a.lambda {
        Some(lambda) => {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(CliError::Config("--lambda must be positive".into()));
            }
            let est = npeb::npeb(panel, lambda, &bounds, b, cli.seed)?;
            Ok(vec![(
                "npeb_weights".into(),
                report::weights_table(panel.asset_labels(), est.w_star.w.as_slice()),
            )])
        }
        None => {
            let benchmark = data
                .benchmark
                .as_ref()
                .ok_or_else(|| CliError::Config("choosing lambda needs a benchmark column; pass --lambda".into()))?;
            let grid = lambda_grid(&a.lambda_grid)?;
            let sel = npeb::select_lambda(panel, benchmark, &grid, &bounds, b, cli.seed)?;
            Ok(vec![
                (
                    "npeb_weights".into(),
                    report::weights_table(panel.asset_labels(), sel.best.estimate.w_star.w.as_slice()),
                ),
                ("npeb_lambda".into(), report::lambda_table(&sel)),
            ])
        }
    }
}

fn screen(a: &ScreenArgs) -> Result<Outputs, CliError> {
    let data = load(&a.input)?;
    let panel = &data.panel;
    if a.keep > panel.n_assets() {
        return Err(CliError::Config(format!(
            "--keep {} exceeds the {} assets",
            a.keep,
            panel.n_assets()
        )));
    }
    let zero = vec![0.0; panel.n_periods()];
    let u = data.benchmark.as_deref().unwrap_or(&zero);
    let ratios = backtest::information_ratios(panel, u)?;
    let kept = backtest::screen_by_information_ratio(panel, u, a.keep)?;
    Ok(vec![(
        "screen".into(),
        report::screen_table(panel.asset_labels(), &ratios, &kept),
    )])
}
