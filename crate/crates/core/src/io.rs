//! Profile CSV and scenario JSON ingestion, report emission.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::domain::{HouseholdProfile, HouseholdType, Money};
use crate::error::{Error, Result};
use crate::stress::{ScenarioSpec, StressResult};

pub const PROFILE_COLUMNS: [&str; 11] = [
    "id",
    "household_type",
    "income_annual",
    "debt_balance",
    "debt_apr",
    "baseline_expenses_annual",
    "sigma_income",
    "sigma_market",
    "rho",
    "mu",
    "r_savings",
];

pub const REPORT_COLUMNS: [&str; 9] = [
    "profile_id",
    "rule",
    "scenario",
    "default_rate",
    "median_clearance_years",
    "mean_final_savings",
    "months_coverage",
    "dti_violation_rate",
    "ser_violation_rate",
];

/// Environment variable capping stress worker threads (`0` = all cores).
pub const THREADS_ENV: &str = "THIRDRULE_THREADS";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        kind => Error::Record { path: path.to_path_buf(), row, field: String::new(), message: format!("{kind:?}") },
    }
}

/// Reads household profiles. Rows are validated; `row` in errors is the
/// 1-based line number in the file.
pub fn load_profiles(path: &Path) -> Result<Vec<HouseholdProfile>> {
    let text = read_to_string(path)?;
    parse_profiles(&text, path)
}

fn parse_profiles(text: &str, path: &Path) -> Result<Vec<HouseholdProfile>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    for (i, want) in PROFILE_COLUMNS.iter().enumerate() {
        if headers.get(i) != Some(want) {
            return Err(Error::Record {
                path: path.to_path_buf(),
                row: 1,
                field: want.to_string(),
                message: format!("expected column {} to be `{want}`, found {:?}", i + 1, headers.get(i)),
            });
        }
    }
    if headers.len() != PROFILE_COLUMNS.len() {
        return Err(Error::Record {
            path: path.to_path_buf(),
            row: 1,
            field: headers.get(PROFILE_COLUMNS.len()).unwrap_or_default().to_string(),
            message: "unexpected extra column".into(),
        });
    }

    let mut profiles = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let fail = |field: &str, message: String| Error::Record { path: path.to_path_buf(), row, field: field.into(), message };
        let cell = |i: usize| record.get(i).unwrap_or("");
        let float = |i: usize| -> Result<f64> {
            let raw = cell(i);
            raw.parse::<f64>().map_err(|_| fail(PROFILE_COLUMNS[i], format!("`{raw}` is not a number")))
        };
        let money = |i: usize, raw: &str| -> Result<Money> {
            Money::from_str(raw).map_err(|e| fail(PROFILE_COLUMNS[i], e.to_string()))
        };

        let household_type = HouseholdType::from_str(cell(1)).map_err(|e| fail("household_type", e.to_string()))?;
        let member_incomes = cell(2).split(';').map(|s| money(2, s.trim())).collect::<Result<Vec<_>>>()?;
        let profile = HouseholdProfile {
            id: cell(0).to_string(),
            household_type,
            member_incomes,
            debt_balance: money(3, cell(3))?,
            debt_apr: float(4)?,
            baseline_expenses: money(5, cell(5))?,
            sigma_income: float(6)?,
            sigma_market: float(7)?,
            rho: float(8)?,
            mu: float(9)?,
            r_savings: float(10)?,
        };
        profile.validate().map_err(|e| match e {
            Error::Validation { field, message } => fail(&field, message),
            other => other,
        })?;
        if !seen.insert(profile.id.clone()) {
            return Err(fail("id", format!("duplicate id `{}`", profile.id)));
        }
        profiles.push(profile);
    }
    Ok(profiles)
}

/// Reads stress scenarios: a single JSON object or an array of them.
/// Unknown keys are rejected; errors carry the JSON path.
pub fn load_scenarios(path: &Path) -> Result<Vec<ScenarioSpec>> {
    let text = read_to_string(path)?;
    parse_scenarios(&text, path)
}

fn parse_scenarios(text: &str, path: &Path) -> Result<Vec<ScenarioSpec>> {
    let schema = |json_path: String, message: String| Error::Schema { path: path.to_path_buf(), json_path, message };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema(".".into(), e.to_string()))?;
    let items: Vec<(String, serde_json::Value)> = match value {
        serde_json::Value::Array(items) => items.into_iter().enumerate().map(|(i, v)| (format!("[{i}]"), v)).collect(),
        other => vec![(String::new(), other)],
    };
    let mut scenarios = Vec::with_capacity(items.len());
    let mut names = HashSet::new();
    for (prefix, item) in items {
        let join = |inner: &str| match (prefix.as_str(), inner) {
            ("", "." | "") => ".".to_string(),
            (p, "." | "") => p.to_string(),
            ("", i) => i.to_string(),
            (p, i) => format!("{p}.{i}"),
        };
        let spec: ScenarioSpec = serde_path_to_error::deserialize(item)
            .map_err(|e| schema(join(&e.path().to_string()), e.into_inner().to_string()))?;
        spec.validate().map_err(|e| match e {
            Error::Validation { field, message } => schema(join(&field), message),
            other => other,
        })?;
        if !names.insert(spec.name.clone()) {
            return Err(schema(join("name"), format!("duplicate scenario `{}`", spec.name)));
        }
        scenarios.push(spec);
    }
    Ok(scenarios)
}

/// Worker thread count from [`THREADS_ENV`]; unset means `0` (all cores).
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::validation(THREADS_ENV, format!("`{v}` is not a thread count"))),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(Error::validation(THREADS_ENV, e.to_string())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// Guesses the format from a `.json` or `.csv` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "json" => Some(ReportFormat::Json),
            "csv" => Some(ReportFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::validation("format", format!("unknown report format `{other}`"))),
        }
    }
}

/// One report line: the stress metrics of a (profile, rule, scenario).
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub profile_id: String,
    pub rule: String,
    pub scenario: String,
    pub default_rate: f64,
    pub median_clearance_years: Option<f64>,
    pub mean_final_savings: Money,
    pub months_coverage: f64,
    pub dti_violation_rate: f64,
    pub ser_violation_rate: f64,
}

impl From<&StressResult> for ReportRow {
    fn from(r: &StressResult) -> Self {
        let m = &r.metrics;
        ReportRow {
            profile_id: r.profile_id.clone(),
            rule: r.rule.clone(),
            scenario: r.scenario.clone(),
            default_rate: m.default_rate,
            median_clearance_years: m.median_debt_clearance_years,
            mean_final_savings: m.mean_final_savings,
            months_coverage: m.months_expense_coverage,
            dti_violation_rate: m.dti_violation_rate,
            ser_violation_rate: m.ser_violation_rate,
        }
    }
}

/// Formats like C's `%.6g`: six significant digits, trailing zeros dropped.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl ReportRow {
    fn cells(&self) -> [(&'static str, Cell); 9] {
        [
            ("profile_id", Cell::Text(self.profile_id.clone())),
            ("rule", Cell::Text(self.rule.clone())),
            ("scenario", Cell::Text(self.scenario.clone())),
            ("default_rate", Cell::Float(Some(self.default_rate))),
            ("median_clearance_years", Cell::Float(self.median_clearance_years)),
            ("mean_final_savings", Cell::Money(self.mean_final_savings)),
            ("months_coverage", Cell::Float(Some(self.months_coverage))),
            ("dti_violation_rate", Cell::Float(Some(self.dti_violation_rate))),
            ("ser_violation_rate", Cell::Float(Some(self.ser_violation_rate))),
        ]
    }
}

enum Cell {
    Text(String),
    Float(Option<f64>),
    Money(Money),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Float(Some(x)) => format_float(*x),
            Cell::Float(None) => String::new(),
            Cell::Money(m) => m.to_string(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Text(s) => serde_json::to_string(s).expect("string serializes"),
            Cell::Float(Some(x)) if x.is_finite() => format_float(*x),
            Cell::Float(_) => "null".into(),
            Cell::Money(m) => m.to_string(),
        }
    }
}

/// Renders a report. JSON has sorted keys and one object per line.
pub fn render_report(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::validation("results", "report has no rows"));
    }
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(REPORT_COLUMNS).expect("in-memory write");
            for row in rows {
                w.write_record(row.cells().iter().map(|(_, c)| c.csv())).expect("in-memory write");
            }
            out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells");
        }
        ReportFormat::Json => {
            out.push_str("[\n");
            for (i, row) in rows.iter().enumerate() {
                let sorted: BTreeMap<&str, String> = row.cells().iter().map(|(k, c)| (*k, c.json())).collect();
                let body: Vec<String> = sorted.iter().map(|(k, v)| format!("\"{k}\": {v}")).collect();
                let comma = if i + 1 < rows.len() { "," } else { "" };
                let _ = writeln!(out, "  {{{}}}{comma}", body.join(", "));
            }
            out.push_str("]\n");
        }
    }
    Ok(out)
}

/// Writes stress results to `path`.
pub fn emit_report(results: &[StressResult], format: ReportFormat, path: &Path) -> Result<()> {
    let rows: Vec<ReportRow> = results.iter().map(ReportRow::from).collect();
    let text = render_report(&rows, format)?;
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    profile_id: String,
    rule: String,
    scenario: String,
    default_rate: f64,
    median_clearance_years: Option<f64>,
    mean_final_savings: f64,
    months_coverage: f64,
    dti_violation_rate: f64,
    ser_violation_rate: f64,
}

impl From<RawRow> for ReportRow {
    fn from(r: RawRow) -> Self {
        ReportRow {
            profile_id: r.profile_id,
            rule: r.rule,
            scenario: r.scenario,
            default_rate: r.default_rate,
            median_clearance_years: r.median_clearance_years,
            mean_final_savings: Money::from_f64(r.mean_final_savings),
            months_coverage: r.months_coverage,
            dti_violation_rate: r.dti_violation_rate,
            ser_violation_rate: r.ser_violation_rate,
        }
    }
}

/// Reads a report written by [`emit_report`].
pub fn load_report(path: &Path, format: ReportFormat) -> Result<Vec<ReportRow>> {
    let text = read_to_string(path)?;
    let to_path = PathBuf::from(path);
    match format {
        ReportFormat::Json => {
            let de = &mut serde_json::Deserializer::from_str(&text);
            let raw: Vec<RawRow> = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
                path: to_path,
                json_path: e.path().to_string(),
                message: e.into_inner().to_string(),
            })?;
            Ok(raw.into_iter().map(ReportRow::from).collect())
        }
        ReportFormat::Csv => {
            let mut reader = csv::Reader::from_reader(text.as_bytes());
            let mut rows = Vec::new();
            for rec in reader.deserialize::<RawRow>() {
                rows.push(rec.map_err(|e| csv_err(path, e))?.into());
            }
            Ok(rows)
        }
    }
}
