//! Parameter sweeps: evaluate the selected methods along one axis and write
//! the rows as CSV with a JSON metadata sidecar.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, SystemParams};
use crate::effcap::{ec_expint, ec_lower_bound, Method};
use crate::error::{Error, Result};
use crate::mcsim::{ec_monte_carlo, McConfig, RNG_FAMILY};
use crate::output::{fmt_f64, write_metadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptField {
    NT,
    Eps,
    Gamma0Db,
    M,
}

impl SweptField {
    pub fn name(&self) -> &'static str {
        match self {
            SweptField::NT => "n_t",
            SweptField::Eps => "eps",
            SweptField::Gamma0Db => "gamma0_db",
            SweptField::M => "m",
        }
    }
}

impl fmt::Display for SweptField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweptField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_t" | "nt" => Ok(SweptField::NT),
            "eps" => Ok(SweptField::Eps),
            "gamma0_db" | "snr_db" | "snr-db" => Ok(SweptField::Gamma0Db),
            "m" => Ok(SweptField::M),
            other => Err(Error::domain(format!(
                "cannot sweep '{other}' (expected n_t, eps, gamma0_db or m)"
            ))),
        }
    }
}

/// Output unit for capacity columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    BitsPerBlock,
    /// Divided by `m n`.
    BitsPerChannelUse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub swept: SweptField,
    pub grid: Vec<f64>,
    /// Fixed parameters; the swept field's value here is ignored.
    pub fixed: SystemParams,
    pub methods: Vec<Method>,
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub units: Units,
}

/// Canonical column order.
const METHOD_ORDER: [Method; 3] = [Method::Expint, Method::LowerBound, Method::MonteCarlo];

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::domain("sweep grid is empty"));
        }
        if let Some(w) = self.grid.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::domain(format!(
                "sweep grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::domain("no methods selected"));
        }
        if let Some(m) = self.methods.iter().find(|m| !METHOD_ORDER.contains(m)) {
            return Err(Error::domain(format!(
                "method {m} is not available in sweeps"
            )));
        }
        if self.methods.contains(&Method::MonteCarlo) {
            match &self.mc {
                Some(cfg) => cfg.validate()?,
                None => {
                    return Err(Error::domain(
                        "monte_carlo selected without a Monte-Carlo config",
                    ))
                }
            }
        }
        Ok(())
    }

    fn has(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }

    /// Selected methods in column order.
    pub fn columns(&self) -> Vec<Method> {
        METHOD_ORDER
            .iter()
            .copied()
            .filter(|m| self.has(*m))
            .collect()
    }

    /// Parameters at one grid value.
    pub fn point(&self, x: f64) -> Result<SystemParams> {
        let mut p = self.fixed;
        match self.swept {
            SweptField::NT => p.n_t = as_count(x, "n_t")?,
            SweptField::M => p.m = as_count(x, "m")?,
            SweptField::Eps => p.eps = x,
            SweptField::Gamma0Db => p.gamma0 = db_to_linear(x),
        }
        p.validate()?;
        Ok(p)
    }
}

fn as_count(x: f64, name: &str) -> Result<u32> {
    if x.fract() != 0.0 || !(x >= 0.0) || x > u32::MAX as f64 {
        return Err(Error::domain(format!(
            "{name} must be a non-negative integer, got {x}"
        )));
    }
    Ok(x as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub expint: Option<f64>,
    pub lower_bound: Option<f64>,
    pub monte_carlo: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub valid: bool,
    /// Failure messages, `; `-joined. Empty for valid rows.
    pub note: String,
}

impl SweepRow {
    pub fn get(&self, m: Method) -> Option<f64> {
        match m {
            Method::Expint => self.expint,
            Method::LowerBound => self.lower_bound,
            Method::MonteCarlo => self.monte_carlo,
            Method::Quadrature => None,
        }
    }
}

fn eval_point(spec: &SweepSpec, x: f64) -> SweepRow {
    let mut row = SweepRow {
        x,
        expint: None,
        lower_bound: None,
        monte_carlo: None,
        mc_stderr: None,
        valid: true,
        note: String::new(),
    };
    let mut notes = Vec::new();
    let params = match spec.point(x) {
        Ok(p) => p,
        Err(e) => {
            row.valid = false;
            row.note = e.to_string();
            return row;
        }
    };
    let scale = match spec.units {
        Units::BitsPerBlock => 1.0,
        Units::BitsPerChannelUse => 1.0 / (params.m as f64 * params.n as f64),
    };
    if spec.has(Method::Expint) {
        match ec_expint(&params) {
            Ok(v) => row.expint = Some(v.value * scale),
            Err(e) => notes.push(format!("expint: {e}")),
        }
    }
    if spec.has(Method::LowerBound) {
        match ec_lower_bound(&params) {
            Ok(v) => row.lower_bound = Some(v.value * scale),
            Err(e) => notes.push(format!("lower_bound: {e}")),
        }
    }
    if spec.has(Method::MonteCarlo) {
        let cfg = spec.mc.expect("validated");
        match ec_monte_carlo(&params, &cfg) {
            Ok(est) => {
                row.monte_carlo = Some(est.value * scale);
                row.mc_stderr = Some(est.stderr * scale);
            }
            Err(e) => notes.push(format!("monte_carlo: {e}")),
        }
    }
    if !notes.is_empty() {
        row.valid = false;
        row.note = notes.join("; ");
    }
    row
}

/// Evaluates every grid point. Per-point failures are recorded in the row.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    Ok(spec.grid.par_iter().map(|&x| eval_point(spec, x)).collect())
}

pub fn csv_header(spec: &SweepSpec) -> Vec<String> {
    let mut h = vec![spec.swept.name().to_string()];
    for m in spec.columns() {
        h.push(m.as_str().to_string());
        if m == Method::MonteCarlo {
            h.push("monte_carlo_stderr".to_string());
        }
    }
    h.push("valid".to_string());
    h.push("note".to_string());
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_sweep_csv<W: std::io::Write>(
    out: W,
    spec: &SweepSpec,
    rows: &[SweepRow],
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(csv_header(spec))?;
    for row in rows {
        let mut rec = vec![fmt_f64(row.x)];
        for m in spec.columns() {
            rec.push(opt(row.get(m)));
            if m == Method::MonteCarlo {
                rec.push(opt(row.mc_stderr));
            }
        }
        rec.push(row.valid.to_string());
        rec.push(row.note.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SweepMeta<'a> {
    tool: &'static str,
    version: &'static str,
    kind: &'static str,
    spec: &'a SweepSpec,
    rng: Option<&'static str>,
    float_format: &'static str,
}

/// Sidecar path: `<out>.meta.json`.
pub fn metadata_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Runs the sweep and writes the CSV plus its metadata sidecar.
pub fn cmd_sweep(spec: &SweepSpec, out: &Path) -> Result<Vec<SweepRow>> {
    let rows = run_sweep(spec)?;
    let file = std::fs::File::create(out)?;
    write_sweep_csv(std::io::BufWriter::new(file), spec, &rows)?;
    let meta = SweepMeta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind: "sweep",
        spec,
        rng: spec.has(Method::MonteCarlo).then_some(RNG_FAMILY),
        float_format: "17 significant digits, scientific",
    };
    write_metadata(&metadata_path(out), &meta)?;
    Ok(rows)
}
