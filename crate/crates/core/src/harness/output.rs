use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HkError, Result};

pub const CSV_HEADER: [&str; 10] = [
    "repeat",
    "observable",
    "t",
    "estimate_re",
    "estimate_im",
    "std_err",
    "variance_est",
    "intrinsic_err",
    "acceptance",
    "wall_ms",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub repeat: usize,
    pub observable: String,
    pub t: f64,
    pub estimate_re: f64,
    pub estimate_im: f64,
    pub std_err: f64,
    pub variance_est: Option<f64>,
    pub intrinsic_err: Option<f64>,
    pub acceptance: Option<f64>,
    pub wall_ms: f64,
}

impl ResultRow {
    /// Equality on every field except the wall-clock time.
    pub fn same_numbers(&self, other: &Self) -> bool {
        let bits = |x: Option<f64>| x.map(f64::to_bits);
        self.repeat == other.repeat
            && self.observable == other.observable
            && self.t.to_bits() == other.t.to_bits()
            && self.estimate_re.to_bits() == other.estimate_re.to_bits()
            && self.estimate_im.to_bits() == other.estimate_im.to_bits()
            && self.std_err.to_bits() == other.std_err.to_bits()
            && bits(self.variance_est) == bits(other.variance_est)
            && bits(self.intrinsic_err) == bits(other.intrinsic_err)
            && bits(self.acceptance) == bits(other.acceptance)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn rows_for(&self, observable: &str) -> impl Iterator<Item = &ResultRow> {
        let label = observable.to_string();
        self.rows.iter().filter(move |r| r.observable == label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

impl FromStr for OutputFormat {
    type Err = HkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" | "json-lines" => Ok(OutputFormat::JsonLines),
            other => Err(HkError::InvalidArgument(format!("unknown output format `{other}`"))),
        }
    }
}

pub fn write_results<W: Write>(table: &ResultsTable, out: W, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(CSV_HEADER)?;
            for row in &table.rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        OutputFormat::JsonLines => {
            let mut w = BufWriter::new(out);
            for row in &table.rows {
                serde_json::to_writer(&mut w, row)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn emit_results(table: &ResultsTable, path: &Path, format: OutputFormat) -> Result<()> {
    write_results(table, File::create(path)?, format)
}

pub fn read_results<R: Read>(input: R, format: OutputFormat) -> Result<ResultsTable> {
    let rows = match format {
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_reader(input);
            let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
            if header != CSV_HEADER {
                return Err(HkError::InvalidArgument(format!("unexpected CSV header {header:?}")));
            }
            r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?
        }
        OutputFormat::JsonLines => {
            let mut rows = Vec::new();
            for line in BufReader::new(input).lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    rows.push(serde_json::from_str(&line)?);
                }
            }
            rows
        }
    };
    Ok(ResultsTable { rows })
}

pub fn parse_results(path: &Path, format: OutputFormat) -> Result<ResultsTable> {
    read_results(File::open(path)?, format)
}
