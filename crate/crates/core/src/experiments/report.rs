use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named numeric column tagged with what it measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub quantity: String,
    pub units: String,
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Equal-length columns. Missing values are NaN and are written as empty CSV cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new() -> Self {
        Table::default()
    }

    /// Appends a column; panics if its length differs from the existing columns.
    pub fn with(
        mut self,
        name: &str,
        quantity: &str,
        units: &str,
        values: impl IntoIterator<Item = f64>,
    ) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        if let Some(first) = self.columns.first() {
            assert_eq!(
                first.values.len(),
                values.len(),
                "column {name} has the wrong length"
            );
        }
        self.columns.push(Column {
            name: name.into(),
            quantity: quantity.into(),
            units: units.into(),
            values,
        });
        self
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| &c.values[..])
    }

    fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for r in 0..self.rows() {
            w.write_record(self.columns.iter().map(|c| format_value(c.values[r])))?;
        }
        w.flush()?;
        Ok(())
    }

    fn read_values(&mut self, path: &Path) -> Result<()> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        if header != names {
            return Err(Error::arg(format!(
                "{} has columns {header:?}, expected {names:?}",
                path.display()
            )));
        }
        for c in &mut self.columns {
            c.values.clear();
        }
        for record in r.records() {
            let record = record?;
            for (c, cell) in self.columns.iter_mut().zip(record.iter()) {
                c.values.push(parse_value(cell)?);
            }
        }
        Ok(())
    }
}

/// Shortest representation that parses back to the same bits.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

pub fn parse_value(cell: &str) -> Result<f64> {
    if cell.is_empty() {
        return Ok(f64::NAN);
    }
    cell.parse()
        .map_err(|_| Error::arg(format!("cannot parse {cell:?} as a number")))
}

/// Outcome of one check, with the statistic and the threshold it was held to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassFlag {
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub criterion: String,
}

impl PassFlag {
    pub fn at_most(statistic: f64, threshold: f64, criterion: impl Into<String>) -> Self {
        PassFlag {
            passed: statistic <= threshold,
            statistic,
            threshold,
            criterion: criterion.into(),
        }
    }

    pub fn at_least(statistic: f64, threshold: f64, criterion: impl Into<String>) -> Self {
        PassFlag {
            passed: statistic >= threshold,
            statistic,
            threshold,
            criterion: criterion.into(),
        }
    }

    /// `|statistic − target| ≤ tolerance`; stores the absolute deviation as the statistic.
    pub fn within(value: f64, target: f64, tolerance: f64, criterion: impl Into<String>) -> Self {
        let deviation = (value - target).abs();
        PassFlag {
            passed: deviation <= tolerance,
            statistic: deviation,
            threshold: tolerance,
            criterion: criterion.into(),
        }
    }
}

/// Results of one seeded experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub replicates: usize,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub tables: BTreeMap<String, Table>,
    pub pass_flags: BTreeMap<String, PassFlag>,
    pub notes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    crate_version: String,
    created_unix_seconds: u64,
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    #[serde(flatten)]
    report: ExperimentReport,
    metadata: Metadata,
}

impl ExperimentReport {
    pub fn new(name: &str, seed: u64, replicates: usize) -> Self {
        ExperimentReport {
            name: name.into(),
            seed,
            replicates,
            parameters: BTreeMap::new(),
            tables: BTreeMap::new(),
            pass_flags: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let value = serde_json::to_value(value).expect("parameters serialize");
        self.parameters.insert(key.into(), value);
        self
    }

    pub fn table(&mut self, name: &str, table: Table) -> &mut Self {
        self.tables.insert(name.into(), table);
        self
    }

    pub fn flag(&mut self, name: &str, flag: PassFlag) -> &mut Self {
        self.pass_flags.insert(name.into(), flag);
        self
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    pub fn all_passed(&self) -> bool {
        self.pass_flags.values().all(|f| f.passed)
    }

    pub fn failed_flags(&self) -> Vec<&str> {
        self.pass_flags
            .iter()
            .filter(|(_, f)| !f.passed)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    /// Writes `report.json` and one `<table>.csv` per table into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let file = ReportFile {
            report: self.clone(),
            metadata: Metadata {
                crate_version: env!("CARGO_PKG_VERSION").into(),
                created_unix_seconds: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs()),
            },
        };
        let json = serde_json::to_string_pretty(&file)?;
        fs::write(dir.join("report.json"), json + "\n")?;
        for (name, table) in &self.tables {
            table.write_csv(&dir.join(format!("{name}.csv")))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let json = fs::read_to_string(dir.join("report.json"))?;
        let mut report = serde_json::from_str::<ReportFile>(&json)?.report;
        for (name, table) in &mut report.tables {
            table.read_values(&dir.join(format!("{name}.csv")))?;
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_round_trip() {
        let mut r = ExperimentReport::new("demo", 7, 3);
        r.param("n", 100).param("eps", 0.01);
        r.table(
            "values",
            Table::new()
                .with("x", "input", "1", [0.1, 1.0 / 3.0, -2.5e-300])
                .with("y", "output", "1", [f64::MAX, 0.0, 7.0]),
        );
        r.flag("ok", PassFlag::at_most(0.2, 0.5, "y below x"));
        r.note("free text");
        let dir = tempfile::tempdir().unwrap();
        r.write_dir(dir.path()).unwrap();
        let back = ExperimentReport::read_dir(dir.path()).unwrap();
        assert_eq!(back, r);
        let csv = fs::read_to_string(dir.path().join("values.csv")).unwrap();
        assert!(csv.starts_with("x,y\n0.1,1.7976931348623157e308\n"));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn missing_values_are_empty_cells() {
        let mut r = ExperimentReport::new("gaps", 1, 1);
        r.table("t", Table::new().with("a", "q", "u", [1.0, f64::NAN]));
        let dir = tempfile::tempdir().unwrap();
        r.write_dir(dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(csv, "a\n1.0\n\"\"\n");
        let back = ExperimentReport::read_dir(dir.path()).unwrap();
        assert!(back.tables["t"].column("a").unwrap()[1].is_nan());
    }

    #[test]
    fn flags() {
        assert!(PassFlag::within(1.0, 1.05, 0.1, "").passed);
        assert!(!PassFlag::at_least(0.9, 0.95, "").passed);
        let mut r = ExperimentReport::new("f", 0, 0);
        r.flag("a", PassFlag::at_most(2.0, 1.0, ""));
        assert_eq!(r.failed_flags(), vec!["a"]);
        assert!(!r.all_passed());
    }
}
