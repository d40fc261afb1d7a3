//! Line-based training reports.
//!
//! Each line is a record kind followed by `key=value` fields separated by
//! single spaces; lines starting with `#` are comments. Example:
//!
//! ```text
//! report version=1
//! config s=4 k=3 eta_rec=1 ...
//! epoch index=0 variance=0.0001 regularizer=0.02 ... cluster_weight=0
//! metrics n=600 ari=1 nmi=1 ams=0.999 mean_cosine_distance=0.001
//! checkpoint path=checkpoint.bin
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use genksc_core::train::{EpochRecord, Metrics, TrainConfig, TrainReport};

use crate::config::train_pairs;
use crate::FormatError;

pub const VERSION: u32 = 1;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn metrics_line(m: &Metrics) -> String {
    format!(
        "metrics n={} ari={} nmi={} ams={} mean_cosine_distance={}",
        m.n,
        opt(m.ari),
        opt(m.nmi),
        m.ams,
        m.mean_cosine_distance
    )
}

pub fn epoch_line(e: &EpochRecord) -> String {
    format!(
        "epoch index={} variance={} regularizer={} reconstruction={} cluster={} total={} cluster_weight={} batches={} clamped={} orthonormality={}",
        e.epoch, e.variance, e.regularizer, e.reconstruction, e.cluster, e.total, e.cluster_weight, e.batches, e.clamped, e.orthonormality
    )
}

/// Renders a report. Values are exact decimal round-trips of the `f64`s,
/// so equal reports mean bit-identical training.
pub fn render(cfg: &TrainConfig, report: &TrainReport, provenance: &str, checkpoint: Option<&str>) -> String {
    let mut out = String::new();
    writeln!(out, "report version={VERSION}").expect("string write");
    let provenance: String = provenance.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
    writeln!(out, "# data: {provenance}").expect("string write");
    let cfg_fields: Vec<String> = train_pairs(cfg).into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(out, "config {}", cfg_fields.join(" ")).expect("string write");
    for e in &report.epochs {
        writeln!(out, "{}", epoch_line(e)).expect("string write");
    }
    if let Some(m) = &report.metrics {
        writeln!(out, "{}", metrics_line(m)).expect("string write");
    }
    let clamped = report.clamped();
    if clamped > 0 {
        writeln!(out, "warning degree_clamps={clamped}").expect("string write");
    }
    if let Some(p) = checkpoint {
        writeln!(out, "checkpoint path={p}").expect("string write");
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub kind: String,
    pub fields: BTreeMap<String, String>,
}

impl Record {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }
}

/// Parses any line-based report or table produced by this crate.
pub fn parse(text: &str) -> Result<Vec<Record>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(' ');
        let kind = parts.next().unwrap_or_default().to_string();
        let mut fields = BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| FormatError::Invalid(format!("report line {}: field {p:?} is not key=value", i + 1)))?;
            fields.insert(k.to_string(), v.to_string());
        }
        out.push(Record { kind, fields });
    }
    Ok(out)
}
