//! CSV market data: a `date` column (ISO-8601), asset return columns as
//! decimals, and optionally a `benchmark` return column and one `mv_<asset>`
//! market-value column per asset.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use mvopt_core::{Matrix, ReturnsPanel};

pub const DATE_COLUMN: &str = "date";
pub const BENCHMARK_COLUMN: &str = "benchmark";
pub const MARKET_VALUE_PREFIX: &str = "mv_";

/// Empty cell, by file line (header is line 1) and column name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gap {
    pub line: usize,
    pub column: String,
}

impl fmt::Display for Gap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} column '{}'", self.line, self.column)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column} ('{name}'): {message}")]
    Parse {
        line: usize,
        column: usize,
        name: String,
        message: String,
    },
    #[error("missing data: {}", format_gaps(.0))]
    MissingData(Vec<Gap>),
    #[error("bad header: {0}")]
    Schema(String),
    #[error(transparent)]
    Panel(#[from] mvopt_core::Error),
}

fn format_gaps(gaps: &[Gap]) -> String {
    const SHOWN: usize = 10;
    let mut s = gaps
        .iter()
        .take(SHOWN)
        .map(Gap::to_string)
        .collect::<Vec<_>>()
        .join(", ");
    if gaps.len() > SHOWN {
        s.push_str(&format!(" and {} more", gaps.len() - SHOWN));
    }
    s
}

/// Asset returns with the optional benchmark series and market values.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    pub panel: ReturnsPanel,
    pub benchmark: Option<Vec<f64>>,
    /// `T × m`, columns in asset order.
    pub market_values: Option<Matrix>,
}

impl MarketData {
    pub fn new(panel: ReturnsPanel) -> Self {
        Self {
            panel,
            benchmark: None,
            market_values: None,
        }
    }
}

enum Role {
    Asset(usize),
    Benchmark,
    MarketValue(String),
}

pub fn read_csv_path(path: &Path) -> Result<MarketData, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file)
}

pub fn read_csv<R: Read>(input: R) -> Result<MarketData, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.first().map(String::as_str) != Some(DATE_COLUMN) {
        return Err(DataError::Schema(format!("first column must be '{DATE_COLUMN}'")));
    }
    let mut roles = Vec::with_capacity(names.len() - 1);
    let mut assets: Vec<String> = Vec::new();
    for name in &names[1..] {
        let role = if name == BENCHMARK_COLUMN {
            Role::Benchmark
        } else if let Some(asset) = name.strip_prefix(MARKET_VALUE_PREFIX) {
            Role::MarketValue(asset.to_string())
        } else {
            assets.push(name.clone());
            Role::Asset(assets.len() - 1)
        };
        roles.push(role);
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(DataError::Schema(format!("duplicate column '{dup}'")));
    }
    if assets.is_empty() {
        return Err(DataError::Schema("no asset return columns".into()));
    }
    let mv_names: Vec<&String> = roles
        .iter()
        .filter_map(|r| match r {
            Role::MarketValue(a) => Some(a),
            _ => None,
        })
        .collect();
    let mv_index: Vec<usize> = mv_names
        .iter()
        .map(|a| {
            assets
                .iter()
                .position(|x| x == *a)
                .ok_or_else(|| DataError::Schema(format!("market values for unknown asset '{a}'")))
        })
        .collect::<Result<_, _>>()?;
    if !mv_names.is_empty() && mv_names.len() != assets.len() {
        return Err(DataError::Schema(
            "market values must be given for every asset or none".into(),
        ));
    }
    let has_benchmark = roles.iter().any(|r| matches!(r, Role::Benchmark));

    let m = assets.len();
    let mut dates: Vec<String> = Vec::new();
    let mut returns: Vec<f64> = Vec::new();
    let mut benchmark: Vec<f64> = Vec::new();
    let mut mv: Vec<f64> = Vec::new();
    let mut gaps = Vec::new();
    let mut last_date: Option<NaiveDate> = None;
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| csv_error(e, line))?;
        let parse_error = |column: usize, message: String| DataError::Parse {
            line,
            column: column + 1,
            name: names[column].clone(),
            message,
        };
        let date_text = &record[0];
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d")
            .map_err(|e| parse_error(0, format!("'{date_text}' is not an ISO-8601 date: {e}")))?;
        if last_date.is_some_and(|d| d >= date) {
            return Err(parse_error(0, format!("date {date} does not follow the previous row")));
        }
        last_date = Some(date);
        dates.push(date_text.to_string());
        let mut row = vec![f64::NAN; m];
        let mut mv_row = vec![f64::NAN; m];
        let mut mv_seen = 0;
        for (j, role) in roles.iter().enumerate() {
            let column = j + 1;
            let text = &record[column];
            let value = if text.is_empty() || text.eq_ignore_ascii_case("na") {
                gaps.push(Gap {
                    line,
                    column: names[column].clone(),
                });
                f64::NAN
            } else {
                let v: f64 = text
                    .parse()
                    .map_err(|_| parse_error(column, format!("'{text}' is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_error(column, format!("'{text}' is not finite")));
                }
                v
            };
            match role {
                Role::Asset(i) => row[*i] = value,
                Role::Benchmark => benchmark.push(value),
                Role::MarketValue(_) => {
                    if value < 0.0 {
                        return Err(parse_error(column, "market value is negative".into()));
                    }
                    mv_row[mv_index[mv_seen]] = value;
                    mv_seen += 1;
                }
            }
        }
        returns.extend(row);
        mv.extend(mv_row);
    }
    if !gaps.is_empty() {
        return Err(DataError::MissingData(gaps));
    }
    let t = dates.len();
    let panel = ReturnsPanel::new(Matrix::from_row_slice(t, m, &returns), dates, assets)?;
    Ok(MarketData {
        panel,
        benchmark: has_benchmark.then_some(benchmark),
        market_values: (!mv_names.is_empty()).then(|| Matrix::from_row_slice(t, m, &mv)),
    })
}

fn csv_error(e: csv::Error, line: usize) -> DataError {
    let line = e.position().map_or(line, |p| p.line() as usize);
    DataError::Parse {
        line,
        column: 0,
        name: String::new(),
        message: e.to_string(),
    }
}

/// `x` rounded to 10 significant digits, printed in the shortest form that
/// reads back to the rounded value.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.9e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub fn write_csv<W: Write>(data: &MarketData, out: W) -> std::io::Result<()> {
    let panel = &data.panel;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![DATE_COLUMN.to_string()];
    if data.benchmark.is_some() {
        header.push(BENCHMARK_COLUMN.into());
    }
    header.extend(panel.asset_labels().iter().cloned());
    if data.market_values.is_some() {
        header.extend(panel.asset_labels().iter().map(|a| format!("{MARKET_VALUE_PREFIX}{a}")));
    }
    w.write_record(&header)?;
    for t in 0..panel.n_periods() {
        let mut row = vec![panel.period_labels()[t].clone()];
        if let Some(b) = &data.benchmark {
            row.push(format_number(b[t]));
        }
        row.extend(panel.data().row(t).iter().map(|&x| format_number(x)));
        if let Some(mv) = &data.market_values {
            row.extend(mv.row(t).iter().map(|&x| format_number(x)));
        }
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn write_csv_path(data: &MarketData, path: &Path) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_csv(data, std::io::BufWriter::new(file)).map_err(io)
}
