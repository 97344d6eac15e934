//! CSV and metadata writers shared by sweeps and the optimizer.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::optim::{GridPoint, OptimResult};

/// 17 significant digits in scientific notation; round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_metadata<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// One row per half-step: `half_step` is `pilot` or `eps`.
pub fn write_trace_csv<W: Write>(out: W, result: &OptimResult) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["iteration", "half_step", "n_t", "eps", "objective"])?;
    for s in &result.trace {
        w.write_record([
            s.iteration.to_string(),
            "pilot".to_string(),
            s.n_t.to_string(),
            fmt_f64(s.eps_in),
            fmt_f64(s.ec_after_pilot),
        ])?;
        w.write_record([
            s.iteration.to_string(),
            "eps".to_string(),
            s.n_t.to_string(),
            fmt_f64(s.eps_out),
            fmt_f64(s.ec_after_eps),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const OPTIM_GRID_HEADER: [&str; 10] = [
    "m",
    "snr_db",
    "n_t_star",
    "eps_star",
    "lower_bound",
    "expint",
    "iterations",
    "boundary",
    "valid",
    "note",
];

/// Optimized capacity, `n_t*` and `ε*` per `(m, SNR)` grid point.
pub fn write_optim_grid_csv<W: Write>(out: W, points: &[GridPoint]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(OPTIM_GRID_HEADER)?;
    for p in points {
        let rec = match &p.result {
            Ok(r) => vec![
                p.m.to_string(),
                fmt_f64(p.snr_db),
                r.n_t_star.to_string(),
                fmt_f64(r.eps_star),
                fmt_f64(r.ec_star),
                r.ec_expint.map(fmt_f64).unwrap_or_default(),
                r.iterations.to_string(),
                format!("{:?}", r.boundary).to_lowercase(),
                "true".to_string(),
                String::new(),
            ],
            Err(e) => vec![
                p.m.to_string(),
                fmt_f64(p.snr_db),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".to_string(),
                e.to_string(),
            ],
        };
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
