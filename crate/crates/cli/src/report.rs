//! Artifacts of one run: results.csv, summary.json and plotdata/*.csv.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

pub const RESULTS_HEADER: &str = "# witten results csv v1";

/// A fixed-column table rendered as CSV.
#[derive(Clone, Debug)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, header: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{header}");
        let _ = writeln!(s, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }
}

/// Float formatting used in every CSV: fixed, round-trippable.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub struct Report {
    pub experiment: &'static str,
    pub citation: &'static str,
    pub results: Table,
    pub plots: Vec<(String, Table)>,
    pub assertions: Vec<Assertion>,
    pub metrics: Map<String, Value>,
}

impl Report {
    pub fn new(experiment: &'static str, citation: &'static str, results: Table) -> Self {
        Report { experiment, citation, results, plots: Vec::new(), assertions: Vec::new(), metrics: Map::new() }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.into(), passed, detail: detail.into() });
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    pub fn write(&self, out: &Path, name: Option<&str>, seed: u64) -> std::io::Result<()> {
        fs::create_dir_all(out.join("plotdata"))?;
        let header = format!("{RESULTS_HEADER} experiment={} ({})", self.experiment, self.citation);
        fs::write(out.join("results.csv"), self.results.render(&header))?;
        for (file, table) in &self.plots {
            let h = format!("# witten plotdata csv v1 experiment={}", self.experiment);
            fs::write(out.join("plotdata").join(format!("{file}.csv")), table.render(&h))?;
        }
        let summary = json!({
            "experiment": self.experiment,
            "name": name,
            "citation": self.citation,
            "seed": seed,
            "passed": self.passed(),
            "assertions": self.assertions,
            "metrics": self.metrics,
        });
        fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        Ok(())
    }
}
