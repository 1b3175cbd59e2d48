//! CSV report rows: one per (variant, metric).

use std::io::Write;

use mia_audit::AggregateStat;

pub const HEADER: [&str; 7] = ["benchmark", "variant", "metric", "mean", "std", "n", "n_undefined"];
pub const UNDEFINED: &str = "NA";

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub benchmark: String,
    pub variant: String,
    pub metric: String,
    pub stat: AggregateStat,
}

#[derive(Clone, Debug, Default)]
pub struct ReportTable {
    rows: Vec<Row>,
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_value(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        UNDEFINED.to_string()
    }
}

/// Compact label for a rate inside a metric name, e.g. `1e-5`.
pub fn label(x: f64) -> String {
    format!("{x:e}")
}

impl ReportTable {
    pub fn push(&mut self, benchmark: &str, variant: &str, metric: impl Into<String>, stat: AggregateStat) {
        self.rows.push(Row {
            benchmark: benchmark.to_string(),
            variant: variant.to_string(),
            metric: metric.into(),
            stat,
        });
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.benchmark.clone(),
                r.variant.clone(),
                r.metric.clone(),
                format_value(r.stat.mean),
                format_value(r.stat.std),
                r.stat.n.to_string(),
                r.stat.n_undefined.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
