//! Metric files: one CSV row per round, or a schema-versioned JSON document.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::OutputFormat;
use super::engine::RoundRecord;
use super::experiment::{ExperimentResult, Summary};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// CSV column order. List-valued columns hold `;`-separated values, one per selected device
/// in ascending device order.
pub const CSV_COLUMNS: [&str; 20] = [
    "round",
    "seed",
    "candidates",
    "selected",
    "n_selected",
    "aoi",
    "channels",
    "tau",
    "alpha",
    "t_cp",
    "t_cm",
    "e_cp",
    "e_cm",
    "total_energy",
    "energy_per_device",
    "matching_cycles",
    "loss",
    "accuracy",
    "divergence",
    "n_candidates",
];

/// Flat form of a [`RoundRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub round: usize,
    pub seed: u64,
    pub candidates: String,
    pub selected: String,
    pub n_selected: usize,
    pub aoi: String,
    pub channels: String,
    pub tau: String,
    pub alpha: String,
    pub t_cp: String,
    pub t_cm: String,
    pub e_cp: String,
    pub e_cm: String,
    pub total_energy: f64,
    pub energy_per_device: Option<f64>,
    pub matching_cycles: usize,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub divergence: Option<f64>,
    pub n_candidates: usize,
}

fn join<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Splits a `;`-joined list column.
pub fn split_list(field: &str) -> Result<Vec<f64>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|v| {
            v.parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("bad list entry '{v}': {e}")))
        })
        .collect()
}

impl From<&RoundRecord> for CsvRow {
    fn from(r: &RoundRecord) -> Self {
        Self {
            round: r.round,
            seed: r.seed,
            candidates: join(&r.candidates),
            selected: join(&r.selected),
            n_selected: r.selected.len(),
            aoi: join(&r.aoi),
            channels: join(r.devices.iter().map(|d| d.channel)),
            tau: join(r.devices.iter().map(|d| d.tau)),
            alpha: join(r.devices.iter().map(|d| d.alpha)),
            t_cp: join(r.devices.iter().map(|d| d.t_cp)),
            t_cm: join(r.devices.iter().map(|d| d.t_cm)),
            e_cp: join(r.devices.iter().map(|d| d.e_cp)),
            e_cm: join(r.devices.iter().map(|d| d.e_cm)),
            total_energy: r.total_energy,
            energy_per_device: r.energy_per_device,
            matching_cycles: r.matching_cycles,
            loss: r.loss,
            accuracy: r.accuracy,
            divergence: r.divergence,
            n_candidates: r.candidates.len(),
        }
    }
}

pub fn write_csv<'a, W: Write>(records: impl IntoIterator<Item = &'a RoundRecord>, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(CsvRow::from(r))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::InvalidArgument(format!(
            "unexpected CSV header {headers:?}"
        )));
    }
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    schema_version: u32,
    records: Vec<&'a RoundRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<&'a Summary>,
}

pub fn write_json<'a, W: Write>(
    records: impl IntoIterator<Item = &'a RoundRecord>,
    summary: Option<&Summary>,
    out: W,
) -> Result<()> {
    let doc = JsonDocument {
        schema_version: SCHEMA_VERSION,
        records: records.into_iter().collect(),
        summary,
    };
    let mut out = BufWriter::new(out);
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

type FieldCheck = (&'static str, fn(&Value) -> bool);

const RECORD_FIELDS: [FieldCheck; 12] = [
    ("round", Value::is_u64),
    ("seed", Value::is_u64),
    ("candidates", Value::is_array),
    ("selected", Value::is_array),
    ("aoi", Value::is_array),
    ("devices", Value::is_array),
    ("total_energy", Value::is_number),
    ("energy_per_device", |v| v.is_number() || v.is_null()),
    ("matching_cycles", Value::is_u64),
    ("loss", |v| v.is_number() || v.is_null()),
    ("accuracy", |v| v.is_number() || v.is_null()),
    ("divergence", |v| v.is_number() || v.is_null()),
];

const DEVICE_FIELDS: [&str; 8] = [
    "device", "channel", "tau", "alpha", "t_cp", "t_cm", "e_cp", "e_cm",
];

/// Structural check of an exported JSON document against the current schema.
pub fn validate_json(doc: &Value) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidArgument(msg));
    match doc.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        other => return bad(format!("schema_version must be {SCHEMA_VERSION}, got {other:?}")),
    }
    let Some(records) = doc.get("records").and_then(Value::as_array) else {
        return bad("records must be an array".into());
    };
    for (i, rec) in records.iter().enumerate() {
        for (field, check) in RECORD_FIELDS {
            match rec.get(field) {
                Some(v) if check(v) => {}
                _ => return bad(format!("records[{i}].{field} missing or mistyped")),
            }
        }
        for (j, dev) in rec["devices"].as_array().into_iter().flatten().enumerate() {
            for field in DEVICE_FIELDS {
                if !dev.get(field).is_some_and(Value::is_number) {
                    return bad(format!("records[{i}].devices[{j}].{field} missing or mistyped"));
                }
            }
        }
    }
    Ok(())
}

/// Writes `records` to `path` in `format`.
pub fn export_metrics(records: &[RoundRecord], path: &Path, format: OutputFormat) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to export".into()));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = BufWriter::new(File::create(path)?);
    match format {
        OutputFormat::Csv => write_csv(records, file),
        OutputFormat::Json => write_json(records, None, file),
    }
}

/// Per-round means over seeds, as CSV.
pub fn write_summary_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in &result.summary.per_round {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
