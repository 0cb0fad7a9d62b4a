use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asymptotics::{ConvergenceReport, Verdict};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// A named numeric table, written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| num(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip decimal.
fn num(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v:?}").expect("writing to a String");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub scenario: String,
    pub kind: String,
    pub verdict: Verdict,
    pub extrapolated_limit: Option<f64>,
    pub rho: Option<f64>,
    pub decay_exponent: Option<f64>,
    pub tolerance: f64,
    pub profile: Option<ConvergenceReport>,
    pub tables: Vec<Table>,
    pub details: serde_json::Value,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub verdict: Verdict,
    pub extrapolated_limit: Option<f64>,
    pub rho: Option<f64>,
    pub decay_exponent: Option<f64>,
    pub tolerance: f64,
}

fn finite(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

impl ReportBundle {
    pub fn summary(&self) -> Summary {
        Summary {
            scenario: self.scenario.clone(),
            verdict: self.verdict,
            extrapolated_limit: finite(self.extrapolated_limit),
            rho: finite(self.rho),
            decay_exponent: finite(self.decay_exponent),
            tolerance: self.tolerance,
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn profile_csv(&self) -> String {
        let mut out = String::from("x,sup_deviation,n_skipped\n");
        if let Some(p) = &self.profile {
            for row in &p.per_x {
                writeln!(out, "{},{},{}", num(row.x), num(row.sup_deviation), row.n_skipped).expect("writing to a String");
            }
        }
        out
    }
}

/// Write `summary.json` plus either `profile.csv` and one CSV per table, or
/// a full `report.json`. Returns the written paths.
pub fn emit_report(bundle: &ReportBundle, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put("summary.json", serde_json::to_string_pretty(&bundle.summary())? + "\n")?;
    match format {
        Format::Csv => {
            put("profile.csv", bundle.profile_csv())?;
            for t in &bundle.tables {
                put(&format!("{}.csv", t.name), t.to_csv())?;
            }
        }
        Format::Json => put("report.json", serde_json::to_string_pretty(bundle)? + "\n")?,
    }
    Ok(written)
}
