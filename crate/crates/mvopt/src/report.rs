//! Result tables and their CSV/JSON emission. JSON carries the same rows as
//! the CSV, one object per row keyed by column name.

use std::io::Write;
use std::path::{Path, PathBuf};

use mvopt_core::backtest::BacktestResult;
use mvopt_core::frontier::Frontier;
use mvopt_core::npeb::LambdaSelection;
use mvopt_core::simlab::{RewardTable, SweepPoint};
use serde_json::{Map, Number, Value};

use crate::data::format_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => format_number(*x)
                .parse::<f64>()
                .ok()
                .and_then(Number::from_f64)
                .map_or(Value::Null, Value::Number),
            Cell::Int(n) => Value::from(*n),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Bool(b) => Value::from(*b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width matches the header");
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        w.flush()
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> =
                        self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    pub fn write<W: Write>(&self, format: Format, mut out: W) -> std::io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, &self.to_json())?;
                writeln!(out)
            }
        }
    }

    /// Writes `dir/stem.<ext>` and returns the path.
    pub fn write_file(&self, dir: &Path, stem: &str, format: Format) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{stem}.{}", format.extension()));
        let file = std::fs::File::create(&path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write(format, &mut out)?;
        out.flush()?;
        Ok(path)
    }
}

pub fn reward_table(table: &RewardTable) -> Table {
    let mut t = Table::new([
        "scenario", "lambda", "rule", "reward", "se", "mean", "variance", "failures",
    ]);
    for row in &table.rows {
        for c in &row.cells {
            t.push(vec![
                row.scenario.as_str().into(),
                row.lambda.into(),
                c.rule.name().into(),
                c.reward.into(),
                c.se.into(),
                c.mean.into(),
                c.variance.into(),
                c.failures.into(),
            ]);
        }
    }
    t
}

pub fn sweep_table(sweeps: &[(String, Vec<SweepPoint>)]) -> Table {
    let mut t = Table::new(["rule", "parameter", "mu", "sigma", "failures"]);
    for (rule, points) in sweeps {
        for p in points {
            t.push(vec![
                rule.as_str().into(),
                p.parameter.into(),
                p.mu.into(),
                p.sigma.into(),
                p.failures.into(),
            ]);
        }
    }
    t
}

/// Per-period excess returns, cumulative excess returns, `λ` and weights.
pub fn backtest_periods(result: &BacktestResult, assets: &[String]) -> Table {
    let mut t = Table::new(
        ["date", "excess", "cumulative", "lambda"]
            .into_iter()
            .map(String::from)
            .chain(assets.iter().map(|a| format!("w_{a}"))),
    );
    for k in 0..result.periods.len() {
        let mut row: Vec<Cell> = vec![
            result.period_labels[k].as_str().into(),
            result.excess[k].into(),
            result.cumulative[k].into(),
            result.lambdas[k].into(),
        ];
        row.extend(result.weights[k].iter().map(|&w| Cell::Num(w)));
        t.push(row);
    }
    t
}

pub fn backtest_summary(result: &BacktestResult, periods_per_year: f64) -> Table {
    let mut t = Table::new([
        "rule",
        "test_periods",
        "information_ratio",
        "ir_defined",
        "annualized_mean_excess",
        "annualized_sd_excess",
        "infeasible_periods",
    ]);
    let n = result.excess.len();
    let mean = if n > 0 {
        result.excess.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    let sd = if n > 1 {
        (result.excess.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    t.push(vec![
        result.rule.as_str().into(),
        n.into(),
        result.information_ratio.into(),
        result.ir_defined.into(),
        (periods_per_year * mean).into(),
        (periods_per_year.sqrt() * sd).into(),
        result.infeasible.len().into(),
    ]);
    t
}

pub fn backtest_infeasible(result: &BacktestResult) -> Table {
    let mut t = Table::new(["period", "date", "message", "fallback"]);
    for f in &result.infeasible {
        let k = result
            .periods
            .iter()
            .position(|&p| p == f.period)
            .expect("logged period was tested");
        t.push(vec![
            f.period.into(),
            result.period_labels[k].as_str().into(),
            f.message.as_str().into(),
            f.fallback.as_str().into(),
        ]);
    }
    t
}

pub fn frontier_table(frontier: &Frontier, assets: &[String]) -> Table {
    let mut t = Table::new(
        ["target", "mu", "sigma"]
            .into_iter()
            .map(String::from)
            .chain(assets.iter().map(|a| format!("w_{a}"))),
    );
    for p in &frontier.points {
        let mut row: Vec<Cell> = vec![p.target_mu.into(), p.mu.into(), p.sigma.into()];
        row.extend(p.w.w.iter().map(|&w| Cell::Num(w)));
        t.push(row);
    }
    t
}

pub fn weights_table(assets: &[String], w: &[f64]) -> Table {
    let mut t = Table::new(["asset", "weight"]);
    for (a, &x) in assets.iter().zip(w) {
        t.push(vec![a.as_str().into(), x.into()]);
    }
    t
}

pub fn lambda_table(selection: &LambdaSelection) -> Table {
    let mut t = Table::new(["lambda", "information_ratio", "selected"]);
    for &(lambda, ir) in &selection.table {
        t.push(vec![lambda.into(), ir.into(), (lambda == selection.lambda_star).into()]);
    }
    t
}

pub fn screen_table(assets: &[String], ratios: &[f64], kept: &[usize]) -> Table {
    let mut t = Table::new(["asset", "information_ratio", "kept"]);
    for (j, a) in assets.iter().enumerate() {
        t.push(vec![a.as_str().into(), ratios[j].into(), kept.contains(&j).into()]);
    }
    t
}
