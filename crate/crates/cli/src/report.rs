//! Merging result CSVs and summarizing them, optionally with power-law fits.

use std::collections::BTreeMap;
use std::path::Path;

use ergolab::rates::fit_power_law;
use ergolab::RateSample;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::output::{Row, HEADER, PARTIAL_MARKER};

pub struct Run {
    pub rows: Vec<Row>,
    pub partial: bool,
}

pub fn read_run(path: &Path) -> CliResult<Run> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_run(&text).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_run(text: &str) -> CliResult<Run> {
    let partial = text.lines().any(|l| l.starts_with(PARTIAL_MARKER));
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(CliError::Validation(format!("schema mismatch: header {header:?}")));
    }
    let rows = rdr.deserialize().collect::<Result<Vec<Row>, _>>()?;
    Ok(Run { rows, partial })
}

/// Rows of one statistic of one experiment on one system.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Key {
    pub experiment: String,
    pub system: String,
    pub statistic: String,
}

/// Groups rows into samples sorted by `T`.
pub fn group(rows: &[Row]) -> BTreeMap<Key, Vec<RateSample>> {
    let mut out: BTreeMap<Key, Vec<RateSample>> = BTreeMap::new();
    for r in rows {
        let key = Key {
            experiment: r.experiment.clone(),
            system: r.system.clone(),
            statistic: r.statistic.clone(),
        };
        let mut s = RateSample::new(r.t, r.value);
        s.seed = Some(r.seed);
        out.entry(key).or_default().push(s);
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatSummary {
    #[serde(flatten)]
    pub key: Key,
    pub count: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(rename = "R2", skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_exponent: Option<f64>,
    /// Measured decay exponent over the predicted one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub runs: usize,
    pub rows: usize,
    pub config_hashes: Vec<String>,
    pub partial: bool,
    pub statistics: Vec<StatSummary>,
}

pub struct ReportOptions {
    pub fit: bool,
    pub allow_mixed: bool,
    /// A `rates-calc` document; its `outputs.delta` is the predicted decay
    /// exponent unless `predicted_key` names another output.
    pub predicted: Option<Value>,
    pub predicted_key: String,
}

pub fn summarize(runs: &[Run], opts: &ReportOptions) -> CliResult<Summary> {
    let rows: Vec<Row> = runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let mut hashes: Vec<String> = rows.iter().map(|r| r.config_hash.clone()).collect();
    hashes.sort();
    hashes.dedup();
    if hashes.len() > 1 && !opts.allow_mixed {
        return Err(CliError::Validation(format!(
            "rows come from {} different configs; pass --allow-mixed to merge them",
            hashes.len()
        )));
    }
    let predicted = match &opts.predicted {
        Some(doc) => Some(
            doc.get("outputs")
                .and_then(|o| o.get(&opts.predicted_key))
                .and_then(Value::as_f64)
                .ok_or_else(|| CliError::Validation(format!("predicted JSON lacks outputs.{}", opts.predicted_key)))?,
        ),
        None => None,
    };
    let mut statistics = Vec::new();
    for (key, samples) in group(&rows) {
        let n = samples.len();
        let vals: Vec<f64> = samples.iter().map(|s| s.value).collect();
        let mut s = StatSummary {
            key,
            count: n,
            t_min: samples.first().map(|s| s.t).unwrap_or(f64::NAN),
            t_max: samples.last().map(|s| s.t).unwrap_or(f64::NAN),
            min: vals.iter().cloned().fold(f64::INFINITY, f64::min),
            max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean: vals.iter().sum::<f64>() / n as f64,
            slope: None,
            intercept: None,
            r_squared: None,
            dropped: None,
            fit_error: None,
            predicted_exponent: None,
            ratio: None,
        };
        if opts.fit {
            match fit_power_law(&samples) {
                Ok(f) => {
                    s.slope = Some(f.slope);
                    s.intercept = Some(f.intercept);
                    s.r_squared = Some(f.r_squared);
                    s.dropped = Some(f.dropped);
                    if let Some(p) = predicted {
                        s.predicted_exponent = Some(p);
                        s.ratio = Some(-f.slope / p);
                    }
                }
                Err(e) => s.fit_error = Some(e.to_string()),
            }
        }
        statistics.push(s);
    }
    Ok(Summary {
        runs: runs.len(),
        rows: rows.len(),
        config_hashes: hashes,
        partial: runs.iter().any(|r| r.partial),
        statistics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(hash: &str, ts: &[(f64, f64)]) -> String {
        let mut s = format!("# generated 0\n{}\n", HEADER.join(","));
        for (t, v) in ts {
            s.push_str(&format!("beta,{hash},1,Rotation,{t},beta,{v},,,,,,\n"));
        }
        s
    }

    fn opts(fit: bool) -> ReportOptions {
        ReportOptions { fit, allow_mixed: false, predicted: None, predicted_key: "delta".into() }
    }

    #[test]
    fn merges_disjoint_grids() {
        let a = parse_run(&csv("h", &[(4.0, 0.5), (16.0, 0.25)])).unwrap();
        let b = parse_run(&csv("h", &[(8.0, 2f64.powf(-1.5)), (64.0, 0.125)])).unwrap();
        let s = summarize(&[a, b], &opts(true)).unwrap();
        assert_eq!(s.statistics.len(), 1);
        let st = &s.statistics[0];
        assert_eq!(st.count, 4);
        assert!((st.slope.unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(st.t_min, 4.0);
    }

    #[test]
    fn mixed_hashes_need_opt_in() {
        let a = parse_run(&csv("h1", &[(4.0, 0.5)])).unwrap();
        let b = parse_run(&csv("h2", &[(8.0, 0.5)])).unwrap();
        assert!(summarize(&[a, b], &opts(false)).is_err());
    }

    #[test]
    fn descriptive_only_without_fit() {
        let a = parse_run(&csv("h", &[(4.0, 1.0), (8.0, 3.0)])).unwrap();
        let s = summarize(&[a], &opts(false)).unwrap();
        assert_eq!(s.statistics[0].mean, 2.0);
        assert!(s.statistics[0].slope.is_none());
    }

    #[test]
    fn schema_mismatch_rejected() {
        assert!(parse_run("a,b\n1,2\n").is_err());
    }
}
