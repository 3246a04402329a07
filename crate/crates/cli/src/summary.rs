//! Mean and standard deviation over runs for a run-level CSV.

use std::io::{Read, Write};
use std::path::Path;

use crate::suite::RUN_HEADER;
use crate::CliError;

/// A parsed row of the run-level schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub experiment: String,
    pub algorithm: String,
    pub sweep_key: String,
    pub sweep_value: f64,
    pub run: usize,
    pub iteration: usize,
    pub theta_norm: f64,
    pub risk: f64,
    pub accuracy: Option<f64>,
    pub pi_error: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Stat { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub algorithm: String,
    pub sweep_key: String,
    pub sweep_value: f64,
    pub iteration: usize,
    pub n_runs: usize,
    pub theta_norm: Stat,
    pub risk: Stat,
    pub accuracy: Option<Stat>,
    pub pi_error: Option<Stat>,
    pub n_diverged: usize,
}

pub const SUMMARY_HEADER: [&str; 15] = [
    "experiment",
    "algorithm",
    "sweep_key",
    "sweep_value",
    "iteration",
    "n_runs",
    "theta_norm_mean",
    "theta_norm_std",
    "risk_mean",
    "risk_std",
    "accuracy_mean",
    "accuracy_std",
    "pi_error_mean",
    "pi_error_std",
    "n_diverged",
];

fn malformed(source: &str, line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{source}: line {line}: {msg}"))
}

pub fn read_run_csv(path: &Path) -> Result<Vec<ParsedRow>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    read_run_rows(file, &path.display().to_string())
}

/// Parses the run-level schema; `source` names the input in error messages.
pub fn read_run_rows(reader: impl Read, source: &str) -> Result<Vec<ParsedRow>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| malformed(source, 1, e))?.clone();
    if header.iter().ne(RUN_HEADER.iter().copied()) {
        return Err(malformed(
            source,
            1,
            format!("expected header `{}`", RUN_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(source, line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| &record[i];
        let num = |i: usize| -> Result<f64, CliError> {
            field(i)
                .parse::<f64>()
                .map_err(|_| malformed(source, line, format!("column `{}`: bad number `{}`", RUN_HEADER[i], field(i))))
        };
        let int = |i: usize| -> Result<usize, CliError> {
            field(i)
                .parse::<usize>()
                .map_err(|_| malformed(source, line, format!("column `{}`: bad integer `{}`", RUN_HEADER[i], field(i))))
        };
        let maybe = |i: usize| -> Result<Option<f64>, CliError> {
            if field(i).is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let diverged = match field(10) {
            "true" => true,
            "false" => false,
            other => return Err(malformed(source, line, format!("column `diverged`: expected true/false, got `{other}`"))),
        };
        rows.push(ParsedRow {
            experiment: field(0).to_string(),
            algorithm: field(1).to_string(),
            sweep_key: field(2).to_string(),
            sweep_value: num(3)?,
            run: int(4)?,
            iteration: int(5)?,
            theta_norm: num(6)?,
            risk: num(7)?,
            accuracy: maybe(8)?,
            pi_error: maybe(9)?,
            diverged,
        });
    }
    Ok(rows)
}

/// Aggregates per `(experiment, algorithm, sweep, iteration)`; runs that
/// stopped early only contribute to the iterations they reached.
pub fn summarize(rows: &[ParsedRow]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&ParsedRow> = rows.iter().collect();
    let key = |r: &ParsedRow| (r.experiment.clone(), r.algorithm.clone(), r.sweep_key.clone());
    sorted.sort_by(|a, b| {
        key(a)
            .cmp(&key(b))
            .then(a.sweep_value.total_cmp(&b.sweep_value))
            .then(a.iteration.cmp(&b.iteration))
            .then(a.run.cmp(&b.run))
    });
    let same_group = |a: &ParsedRow, b: &ParsedRow| {
        key(a) == key(b) && a.sweep_value.to_bits() == b.sweep_value.to_bits() && a.iteration == b.iteration
    };
    let mut out = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && same_group(sorted[start], sorted[end]) {
            end += 1;
        }
        let group = &sorted[start..end];
        let collect = |f: &dyn Fn(&ParsedRow) -> Option<f64>| -> Vec<f64> { group.iter().filter_map(|r| f(r)).collect() };
        let first = group[0];
        out.push(SummaryRow {
            experiment: first.experiment.clone(),
            algorithm: first.algorithm.clone(),
            sweep_key: first.sweep_key.clone(),
            sweep_value: first.sweep_value,
            iteration: first.iteration,
            n_runs: group.len(),
            theta_norm: Stat::of(&collect(&|r| Some(r.theta_norm))).expect("non-empty group"),
            risk: Stat::of(&collect(&|r| Some(r.risk))).expect("non-empty group"),
            accuracy: Stat::of(&collect(&|r| r.accuracy)),
            pi_error: Stat::of(&collect(&|r| r.pi_error)),
            n_diverged: group.iter().filter(|r| r.diverged).count(),
        });
        start = end;
    }
    out
}

pub fn write_summary(rows: &[SummaryRow], writer: impl Write) -> Result<(), CliError> {
    let fail = |e: csv::Error| CliError::Run(format!("writing summary: {e}"));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER).map_err(fail)?;
    let pair = |s: Option<Stat>| match s {
        Some(s) => [s.mean.to_string(), s.std.to_string()],
        None => [String::new(), String::new()],
    };
    for r in rows {
        let mut rec = vec![
            r.experiment.clone(),
            r.algorithm.clone(),
            r.sweep_key.clone(),
            r.sweep_value.to_string(),
            r.iteration.to_string(),
            r.n_runs.to_string(),
        ];
        rec.extend(pair(Some(r.theta_norm)));
        rec.extend(pair(Some(r.risk)));
        rec.extend(pair(r.accuracy));
        rec.extend(pair(r.pi_error));
        rec.push(r.n_diverged.to_string());
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::Run(format!("writing summary: {e}")))
}
