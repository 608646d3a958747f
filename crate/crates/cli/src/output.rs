//! The row format shared by every experiment.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::CliResult;

pub const HEADER: [&str; 13] = [
    "experiment",
    "config_hash",
    "seed",
    "system",
    "T",
    "statistic",
    "value",
    "aux1_name",
    "aux1",
    "aux2_name",
    "aux2",
    "aux3_name",
    "aux3",
];

pub const PARTIAL_MARKER: &str = "# PARTIAL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub system: String,
    #[serde(rename = "T")]
    pub t: f64,
    pub statistic: String,
    pub value: f64,
    pub aux1_name: String,
    pub aux1: Option<f64>,
    pub aux2_name: String,
    pub aux2: Option<f64>,
    pub aux3_name: String,
    pub aux3: Option<f64>,
}

/// Row under construction: the per-run fields are filled in by the writer.
#[derive(Debug, Clone, PartialEq)]
pub struct Stat {
    pub t: f64,
    pub statistic: String,
    pub value: f64,
    pub aux: Vec<(String, f64)>,
}

impl Stat {
    pub fn new(t: f64, statistic: &str, value: f64) -> Self {
        Self {
            t,
            statistic: statistic.to_string(),
            value,
            aux: Vec::new(),
        }
    }

    pub fn aux(mut self, name: &str, v: f64) -> Self {
        self.aux.push((name.to_string(), v));
        self
    }
}

/// Shortest representation that parses back to the same `f64`, switching to
/// exponent notation far from unity.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub struct RunInfo<'a> {
    pub experiment: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub system: &'a str,
}

pub fn write_rows<W: Write>(
    out: W,
    info: &RunInfo,
    stats: &[Stat],
    timestamp: Option<&str>,
    partial: Option<&str>,
) -> CliResult<()> {
    let mut out = out;
    if let Some(ts) = timestamp {
        writeln!(out, "# generated {ts}")?;
    }
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        w.write_record(HEADER)?;
        for s in stats {
            let mut rec = vec![
                info.experiment.to_string(),
                info.config_hash.to_string(),
                info.seed.to_string(),
                info.system.to_string(),
                fmt_float(s.t),
                s.statistic.clone(),
                fmt_float(s.value),
            ];
            for i in 0..3 {
                match s.aux.get(i) {
                    Some((n, v)) => {
                        rec.push(n.clone());
                        rec.push(fmt_float(*v));
                    }
                    None => {
                        rec.push(String::new());
                        rec.push(String::new());
                    }
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    if let Some(msg) = partial {
        writeln!(out, "{PARTIAL_MARKER} {}", msg.replace('\n', " "))?;
    }
    out.flush()?;
    Ok(())
}
