use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One value of one metric for one experimental arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub arm: String,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(dataset: &str, arm: &str, metric: &str, value: f64) -> Self {
        Self { dataset: dataset.into(), arm: arm.into(), metric: metric.into(), value }
    }
}

pub fn render_tsv(rows: &[MetricRow]) -> String {
    let mut out = String::from("dataset\tarm\tmetric\tvalue\n");
    for r in rows {
        writeln!(out, "{}\t{}\t{}\t{:.6}", r.dataset, r.arm, r.metric, r.value).unwrap();
    }
    out
}

/// Writes `<stem>.tsv` and `<stem>.json` side by side.
pub fn write_report(dir: &Path, stem: &str, rows: &[MetricRow]) -> Result<()> {
    let tsv = dir.join(format!("{stem}.tsv"));
    fs::write(&tsv, render_tsv(rows)).map_err(|e| Error::unreadable(&tsv, e))?;
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(rows)?).map_err(|e| Error::unreadable(&json, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_layout() {
        let rows = [MetricRow::new("smoke", "augmented", "f1", 0.5)];
        assert_eq!(render_tsv(&rows), "dataset\tarm\tmetric\tvalue\nsmoke\taugmented\tf1\t0.500000\n");
    }
}
