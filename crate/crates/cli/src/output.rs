//! Result rows and their CSV/JSON encodings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use creopt_core::channel::Case;
use creopt_core::linalg::CMatrix;
use creopt_core::metrics::{CrePoint, Status};
use serde::{Serialize, Serializer};

pub const COLUMNS: [&str; 12] = [
    "case",
    "task",
    "gamma_eh_W",
    "gamma_s",
    "crb",
    "rate_bpshz",
    "energy_W",
    "energy_dc_W",
    "status",
    "iterations",
    "duality_gap",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub case: &'static str,
    pub task: String,
    #[serde(rename = "gamma_eh_W", serialize_with = "opt_num")]
    pub gamma_eh: Option<f64>,
    #[serde(serialize_with = "opt_num")]
    pub gamma_s: Option<f64>,
    #[serde(serialize_with = "num")]
    pub crb: f64,
    #[serde(rename = "rate_bpshz", serialize_with = "num")]
    pub rate: f64,
    #[serde(rename = "energy_W", serialize_with = "num")]
    pub energy: f64,
    #[serde(rename = "energy_dc_W", serialize_with = "num")]
    pub energy_dc: f64,
    pub status: &'static str,
    pub iterations: usize,
    #[serde(serialize_with = "opt_num")]
    pub duality_gap: Option<f64>,
    pub seed: u64,
    /// Row-major `[re, im]` pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<[f64; 2]>>>,
}

impl Row {
    pub fn new(case: Case, task: impl Into<String>, seed: u64, gammas: (Option<f64>, Option<f64>), point: &CrePoint) -> Self {
        Self {
            case: case.as_str(),
            task: task.into(),
            gamma_eh: gammas.0,
            gamma_s: gammas.1,
            crb: point.crb,
            rate: point.rate,
            energy: point.energy,
            energy_dc: point.energy_dc,
            status: point.meta.status.as_str(),
            iterations: point.meta.iterations,
            duality_gap: point.meta.duality_gap,
            seed,
            covariance: None,
        }
    }

    pub fn with_covariance(mut self, s: Option<&CMatrix>) -> Self {
        self.covariance = s.map(|s| s.row_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect());
        self
    }

    pub fn is(&self, status: Status) -> bool {
        self.status == status.as_str()
    }

    fn csv_record(&self) -> [String; 12] {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        [
            self.case.to_string(),
            self.task.clone(),
            opt(self.gamma_eh),
            opt(self.gamma_s),
            fmt_f64(self.crb),
            fmt_f64(self.rate),
            fmt_f64(self.energy),
            fmt_f64(self.energy_dc),
            self.status.to_string(),
            self.iterations.to_string(),
            opt(self.duality_gap),
            self.seed.to_string(),
        ]
    }
}

/// Shortest round-trip form; non-finite values as `inf`, `-inf`, `nan`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

fn num<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_none()
    } else {
        s.serialize_str(&fmt_f64(*v))
    }
}

fn opt_num<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => num(x, s),
        None => s.serialize_none(),
    }
}

pub fn write_rows<W: Write>(mut w: W, rows: &[Row], format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut wr = csv::Writer::from_writer(w);
            wr.write_record(COLUMNS)?;
            for r in rows {
                wr.write_record(r.csv_record())?;
            }
            wr.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn emit(path: &Path, rows: &[Row], format: Format) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    write_rows(BufWriter::new(file), rows, format).with_context(|| format!("writing {}", path.display()))
}
