//! Trace files: one wide CSV row per step, and summary statistics derived from
//! the rows alone.
//!
//! Columns are fixed: the market columns first, then the same block of
//! per-firm columns for every firm, prefixed `f1_`, `f2_`, ... Floats carry at
//! most nine significant digits and are written in their shortest round-trip
//! form, so parsing and rewriting a trace reproduces it byte for byte.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{FirmRecord, StepRecord};

const MARKET_COLUMNS: [&str; 4] = ["t", "customers", "a", "price"];

const FIRM_COLUMNS: [&str; 19] = [
    "unit_cost",
    "production",
    "analysis",
    "sold",
    "warehouse_before",
    "warehouse_after",
    "signal",
    "inferred_warehouse",
    "inferred_context",
    "p_reduce",
    "epistemic",
    "predicted_price",
    "a_hat",
    "br",
    "br_recomputed",
    "vfe",
    "vfe_max_rise",
    "iterations",
    "converged",
];

pub fn header(n_firms: usize) -> Vec<String> {
    let mut h: Vec<String> = MARKET_COLUMNS.iter().map(|s| s.to_string()).collect();
    for i in 1..=n_firms {
        h.extend(FIRM_COLUMNS.iter().map(|c| format!("f{i}_{c}")));
    }
    h
}

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn firm_fields(f: &FirmRecord) -> [String; 19] {
    [
        num(f.unit_cost),
        f.production.to_string(),
        (f.analysis as u8).to_string(),
        f.sold.to_string(),
        f.warehouse_before.to_string(),
        f.warehouse_after.to_string(),
        f.signal.to_string(),
        num(f.inferred_warehouse),
        f.inferred_context.to_string(),
        num(f.p_reduce),
        f.epistemic.to_string(),
        num(f.predicted_price),
        num(f.a_hat),
        f.br.to_string(),
        (f.br_recomputed as u8).to_string(),
        num(f.vfe),
        num(f.vfe_max_rise),
        f.iterations.to_string(),
        (f.converged as u8).to_string(),
    ]
}

/// Serializes records; every record must have the same number of firms.
pub fn to_csv(records: &[StepRecord]) -> Result<String> {
    let n = records.first().map_or(0, |r| r.firms.len());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header(n)).map_err(csv_err)?;
    for r in records {
        if r.firms.len() != n {
            return Err(Error::Trace(format!("step {} has {} firms, expected {n}", r.t, r.firms.len())));
        }
        let mut row = vec![r.t.to_string(), r.customers.to_string(), num(r.a), num(r.price)];
        for f in &r.firms {
            row.extend(firm_fields(f));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Trace(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Trace(e.to_string())
}

struct Row<'a> {
    line: u64,
    fields: &'a csv::StringRecord,
}

impl Row<'_> {
    fn get<T: std::str::FromStr>(&self, idx: usize, name: &str) -> Result<T> {
        let raw = self.fields.get(idx).unwrap_or("");
        raw.parse().map_err(|_| Error::Trace(format!("line {}: bad {name} '{raw}'", self.line)))
    }

    fn flag(&self, idx: usize, name: &str) -> Result<bool> {
        match self.get::<u8>(idx, name)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Trace(format!("line {}: {name} must be 0 or 1, got {v}", self.line))),
        }
    }
}

pub fn from_csv(text: &str) -> Result<Vec<StepRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let head = r.headers().map_err(csv_err)?.clone();
    let width = head.len();
    if width < MARKET_COLUMNS.len() || (width - MARKET_COLUMNS.len()) % FIRM_COLUMNS.len() != 0 {
        return Err(Error::Trace(format!("line 1: unexpected column count {width}")));
    }
    let n = (width - MARKET_COLUMNS.len()) / FIRM_COLUMNS.len();
    if head.iter().ne(header(n).iter().map(String::as_str)) {
        return Err(Error::Trace("line 1: header does not match the trace schema".into()));
    }
    let mut records = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let fields = rec.map_err(csv_err)?;
        let row = Row { line: k as u64 + 2, fields: &fields };
        let mut firms = Vec::with_capacity(n);
        for i in 0..n {
            let o = MARKET_COLUMNS.len() + i * FIRM_COLUMNS.len();
            let c = |j: usize| FIRM_COLUMNS[j];
            firms.push(FirmRecord {
                unit_cost: row.get(o, c(0))?,
                production: row.get(o + 1, c(1))?,
                analysis: row.flag(o + 2, c(2))?,
                sold: row.get(o + 3, c(3))?,
                warehouse_before: row.get(o + 4, c(4))?,
                warehouse_after: row.get(o + 5, c(5))?,
                signal: row.get(o + 6, c(6))?,
                inferred_warehouse: row.get(o + 7, c(7))?,
                inferred_context: row.get(o + 8, c(8))?,
                p_reduce: row.get(o + 9, c(9))?,
                epistemic: row.get(o + 10, c(10))?,
                predicted_price: row.get(o + 11, c(11))?,
                a_hat: row.get(o + 12, c(12))?,
                br: row.get(o + 13, c(13))?,
                br_recomputed: row.flag(o + 14, c(14))?,
                vfe: row.get(o + 15, c(15))?,
                vfe_max_rise: row.get(o + 16, c(16))?,
                iterations: row.get(o + 17, c(17))?,
                converged: row.flag(o + 18, c(18))?,
            });
        }
        records.push(StepRecord {
            t: row.get(0, "t")?,
            customers: row.get(1, "customers")?,
            a: row.get(2, "a")?,
            price: row.get(3, "price")?,
            firms,
        });
    }
    Ok(records)
}

pub fn write_csv(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(to_csv(records)?.as_bytes())?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<StepRecord>> {
    from_csv(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmSummary {
    /// Revenue from units sold minus the cost of units produced.
    pub profit: f64,
    /// Steps whose production met the best-response target, capped by the largest feasible production.
    pub steps_at_br: usize,
    pub analyses: usize,
    /// Changes of the inferred context between consecutive steps.
    pub context_switches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub firms: Vec<FirmSummary>,
    pub mean_price: f64,
    /// Mean over steps of the total stock left in the warehouses.
    pub mean_unsold: f64,
}

impl RunSummary {
    pub fn from_records(records: &[StepRecord], max_production: usize) -> Self {
        let n = records.first().map_or(0, |r| r.firms.len());
        let firms = (0..n)
            .map(|i| {
                let rows: Vec<&FirmRecord> = records.iter().map(|r| &r.firms[i]).collect();
                FirmSummary {
                    profit: records
                        .iter()
                        .map(|r| r.price * r.firms[i].sold as f64 - r.firms[i].unit_cost * r.firms[i].production as f64)
                        .sum(),
                    steps_at_br: rows.iter().filter(|f| f.production == f.br.min(max_production)).count(),
                    analyses: rows.iter().filter(|f| f.analysis).count(),
                    context_switches: rows.windows(2).filter(|w| w[0].inferred_context != w[1].inferred_context).count(),
                }
            })
            .collect();
        let steps = records.len();
        let mean = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
        RunSummary {
            steps,
            firms,
            mean_price: mean(records.iter().map(|r| r.price).collect()),
            mean_unsold: mean(records.iter().map(|r| r.firms.iter().map(|f| f.warehouse_after as f64).sum()).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn firm(production: usize, sold: usize, br: usize, ctx: usize) -> FirmRecord {
        FirmRecord {
            unit_cost: 16.0,
            production,
            analysis: ctx == 1,
            sold,
            warehouse_before: 0,
            warehouse_after: production - sold,
            signal: 0,
            inferred_warehouse: 0.123456789,
            inferred_context: ctx,
            p_reduce: 1.0 / 3.0,
            epistemic: 0,
            predicted_price: 21.0,
            a_hat: 29.9,
            br,
            br_recomputed: false,
            vfe: -1.5e-7,
            vfe_max_rise: 0.0,
            iterations: 4,
            converged: true,
        }
    }

    fn records() -> Vec<StepRecord> {
        vec![
            StepRecord { t: 0, customers: 10, a: 30.0, price: 21.0, firms: vec![firm(5, 5, 5, 0), firm(4, 4, 4, 0)] },
            StepRecord { t: 1, customers: 6, a: 30.0, price: 20.5, firms: vec![firm(6, 3, 5, 1), firm(4, 3, 4, 0)] },
        ]
    }

    #[test]
    fn header_layout() {
        let h = header(2);
        assert_eq!(h.len(), 4 + 2 * 19);
        assert_eq!(h[4], "f1_unit_cost");
        assert_eq!(h.last().unwrap(), "f2_converged");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let text = to_csv(&records()).unwrap();
        assert!(text.ends_with('\n') && !text.contains('\r'));
        let back = from_csv(&text).unwrap();
        assert_eq!(back, records());
        assert_eq!(to_csv(&back).unwrap(), text);
        assert!(text.contains(",-1.5e-7,"));
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let text = to_csv(&records()).unwrap().replace("\n1,6,", "\n1,six,");
        let err = from_csv(&text).unwrap_err();
        assert!(matches!(err, Error::Trace(m) if m.starts_with("line 3")));
        assert!(from_csv("t,customers\n0,1\n").is_err());
    }

    #[test]
    fn summary_from_rows() {
        let s = RunSummary::from_records(&records(), 6);
        assert_eq!(s.steps, 2);
        assert_eq!(s.firms[0].profit, 21.0 * 5.0 - 16.0 * 5.0 + 20.5 * 3.0 - 16.0 * 6.0);
        assert_eq!(s.firms[0].steps_at_br, 1);
        assert_eq!(s.firms[1].steps_at_br, 2);
        assert_eq!(s.firms[0].analyses, 1);
        assert_eq!(s.firms[0].context_switches, 1);
        assert_eq!(s.firms[1].context_switches, 0);
        assert_eq!(s.mean_price, 20.75);
        assert_eq!(s.mean_unsold, 2.0);
    }
}
