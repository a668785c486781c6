//! CSV and JSON emission of run records.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::channel::LinkGraph;
use crate::error::{Error, Result};
use crate::metrics::{compute_awareness_coverage, Quartiles};
use crate::record::RunRecord;

/// `%.9g`: nine significant digits, trailing zeros dropped, exponent form
/// outside `[1e-4, 1e9)`.
pub fn fmt_sig(x: f64) -> String {
    const P: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = e.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..P).contains(&exp) {
        let decimals = (P - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mant.to_string()), sign, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub const TRACE_HEADER: &str = "t,vehicle,mu,p_dbm,lambda,load_frac";
pub const RATE_HEADER: &str = "t,vehicle,mu,lambda,load_frac";
pub const POWER_HEADER: &str = "t,vehicle,p_dbm,gprime,lambda,load_frac";

/// Writes `trace.csv`, `rate.csv`, `power.csv`, `summary.json`,
/// `awareness.csv` and `coverage.csv` into `out_dir`.
pub fn emit(record: &RunRecord, g: Option<&LinkGraph>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let air = record.airtime_s;
    let f = |x: f64| fmt_sig(x);
    let mut written = Vec::new();

    let path = out_dir.join("trace.csv");
    write_file(&path, |w| {
        writeln!(w, "{TRACE_HEADER}")?;
        for s in &record.snapshots {
            for k in 0..s.mu.len() {
                writeln!(
                    w,
                    "{},{k},{},{},{},{}",
                    s.t,
                    f(s.mu[k]),
                    f(s.p[k]),
                    f(s.lambda[k]),
                    f(s.load[k] * air)
                )?;
            }
        }
        Ok(())
    })?;
    written.push(path);

    let path = out_dir.join("rate.csv");
    write_file(&path, |w| {
        writeln!(w, "{RATE_HEADER}")?;
        for s in &record.snapshots {
            for k in 0..s.mu.len() {
                writeln!(
                    w,
                    "{},{k},{},{},{}",
                    s.t,
                    f(s.mu[k]),
                    f(s.lambda[k]),
                    f(s.load[k] * air)
                )?;
            }
        }
        Ok(())
    })?;
    written.push(path);

    let path = out_dir.join("power.csv");
    write_file(&path, |w| {
        writeln!(w, "{POWER_HEADER}")?;
        for s in &record.snapshots {
            for k in 0..s.p.len() {
                let gp = s.gprime.as_ref().map(|g| g[k].to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{},{k},{},{gp},{},{}",
                    s.t,
                    f(s.p[k]),
                    f(s.lambda[k]),
                    f(s.load[k] * air)
                )?;
            }
        }
        Ok(())
    })?;
    written.push(path);

    let stats = g
        .filter(|g| g.len() == record.final_state.p.len())
        .map(|g| compute_awareness_coverage(g, &record.final_state.p));
    for (name, col) in [("awareness", true), ("coverage", false)] {
        let path = out_dir.join(format!("{name}.csv"));
        write_file(&path, |w| {
            writeln!(w, "vehicle,{name}")?;
            if let Some(st) = &stats {
                let v = if col { &st.awareness } else { &st.coverage };
                for (k, c) in v.iter().enumerate() {
                    writeln!(w, "{k},{c}")?;
                }
            }
            Ok(())
        })?;
        written.push(path);
    }

    let quart = |q: &Quartiles| json!({"q1": q.q1, "median": q.median, "q3": q.q3, "iqr": q.iqr()});
    let summary = json!({
        "algo": record.algo,
        "n": record.n,
        "rounds": record.rounds(),
        "gamma": record.gamma,
        "airtime_s": air,
        "rho_avg": record.rho_avg(),
        "rho_final": record.rho.last().copied(),
        "max_load_frac": record.max_tail_load() * air,
        "rounds_to_band": record.rounds_to_band(0.05),
        "outer": record.outer,
        "converged": record.converged,
        "awareness": stats.as_ref().map(|s| quart(&s.awareness_quartiles)),
        "coverage": stats.as_ref().map(|s| quart(&s.coverage_quartiles)),
        "awareness_hist": stats.as_ref().map(|s| &s.awareness_hist),
        "coverage_hist": stats.as_ref().map(|s| &s.coverage_hist),
        "seed": record.seed,
        "config": record.config,
    });
    let path = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::json(&path, e))?;
    write_file(&path, |w| writeln!(w, "{text}"))?;
    written.push(path);
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub vehicle: usize,
    pub mu: f64,
    pub p_dbm: f64,
    pub lambda: f64,
    pub load_frac: f64,
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        other => {
            return Err(Error::config(format!("unexpected trace header {other:?}")));
        }
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let bad = || Error::config(format!("malformed trace row {}: {line}", k + 2));
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(TraceRow {
                t: c[0].parse().map_err(|_| bad())?,
                vehicle: c[1].parse().map_err(|_| bad())?,
                mu: num(c[2])?,
                p_dbm: num(c[3])?,
                lambda: num(c[4])?,
                load_frac: num(c[5])?,
            })
        })
        .collect()
}
