//! CSV encodings of benchmark traces and summaries.
//!
//! All files are UTF-8 with a header row and LF line endings. Floats are
//! written in shortest round-trip decimal form.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{SummaryRow, TraceRow};
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 6] = ["strategy", "function", "eps", "repeat", "iteration", "best_value"];
pub const SUMMARY_HEADER: [&str; 8] = [
    "strategy", "function", "eps", "iteration", "median", "q25", "q75", "repeats",
];

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.strategy.as_str().to_string(),
            r.function.clone(),
            r.eps.to_string(),
            r.repeat.to_string(),
            r.iteration.to_string(),
            r.best_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn reader<R: Read>(input: R, header: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let found = rdr.headers()?.clone();
    if !found.iter().eq(header.iter().copied()) {
        return Err(Error::MalformedTrace(format!(
            "expected header {}, found {}",
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(rdr)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, name: &str) -> Result<T> {
    rec.get(k)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedTrace(format!("bad {name} field in record {:?}", rec.position().map(|p| p.line()))))
}

fn finite(v: f64, name: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::MalformedTrace(format!("non-finite {name}")))
    }
}

/// Parses a trace CSV written by [`write_trace`].
pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rdr = reader(input, &TRACE_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let strategy = rec
            .get(0)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::MalformedTrace(format!("unknown strategy {:?}", rec.get(0))))?;
        let eps = finite(field(&rec, 2, "eps")?, "eps")?;
        if eps < 0.0 {
            return Err(Error::MalformedTrace("negative eps".into()));
        }
        rows.push(TraceRow {
            strategy,
            function: rec.get(1).unwrap_or_default().to_string(),
            eps,
            repeat: field(&rec, 3, "repeat")?,
            iteration: field(&rec, 4, "iteration")?,
            best_value: finite(field(&rec, 5, "best_value")?, "best_value")?,
        });
    }
    Ok(rows)
}

/// Long-form per-iteration summary.
pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.strategy.as_str().to_string(),
            r.function.clone(),
            r.eps.to_string(),
            r.iteration.to_string(),
            r.median.to_string(),
            r.q25.to_string(),
            r.q75.to_string(),
            r.repeats.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = reader(input, &SUMMARY_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let strategy = rec
            .get(0)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::MalformedTrace(format!("unknown strategy {:?}", rec.get(0))))?;
        rows.push(SummaryRow {
            strategy,
            function: rec.get(1).unwrap_or_default().to_string(),
            eps: finite(field(&rec, 2, "eps")?, "eps")?,
            iteration: field(&rec, 3, "iteration")?,
            median: field(&rec, 4, "median")?,
            q25: field(&rec, 5, "q25")?,
            q75: field(&rec, 6, "q75")?,
            repeats: field(&rec, 7, "repeats")?,
        });
    }
    Ok(rows)
}

/// Wide plot-ready table: one row per iteration, three columns
/// (`median`, `q25`, `q75`) per `strategy/function/eps` series. Cells are
/// empty where a series has no value for that iteration.
pub fn write_plotdata<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut series: Vec<String> = Vec::new();
    let mut table: BTreeMap<usize, BTreeMap<usize, (f64, f64, f64)>> = BTreeMap::new();
    for r in rows {
        let name = format!("{}/{}/{}", r.strategy, r.function, r.eps);
        let col = match series.iter().position(|s| *s == name) {
            Some(c) => c,
            None => {
                series.push(name);
                series.len() - 1
            }
        };
        table.entry(r.iteration).or_default().insert(col, (r.median, r.q25, r.q75));
    }
    let mut w = writer(out);
    let mut header = vec!["iteration".to_string()];
    for s in &series {
        for stat in ["median", "q25", "q75"] {
            header.push(format!("{s}:{stat}"));
        }
    }
    w.write_record(&header)?;
    for (it, cols) in table {
        let mut rec = vec![it.to_string()];
        for c in 0..series.len() {
            match cols.get(&c) {
                Some((m, lo, hi)) => rec.extend([m.to_string(), lo.to_string(), hi.to_string()]),
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
