use std::io::Write;
use std::path::Path;

use mrfa::data::DataMatrix;

use crate::CliError;

/// A numeric CSV file: header plus finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    /// Row-major values.
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(file).map_err(|e| match e {
            CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self, CliError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::Input(format!("unreadable header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if names.is_empty() || names.iter().all(String::is_empty) {
            return Err(CliError::Input("missing header row".into()));
        }
        for (j, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(CliError::Input(format!("column {} has an empty name", j + 1)));
            }
            if names[..j].contains(name) {
                return Err(CliError::Input(format!("column name '{name}' appears twice")));
            }
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| CliError::Input(format!("malformed CSV: {e}")))?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != names.len() {
                return Err(CliError::Input(format!(
                    "line {line}: expected {} fields, found {}",
                    names.len(),
                    record.len()
                )));
            }
            let row = record
                .iter()
                .enumerate()
                .map(|(j, cell)| parse_cell(cell).map_err(|why| {
                    CliError::Input(format!("line {line}, column '{}': {why}", names[j]))
                }))
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        Ok(Self { names, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Columns `names`, in that order, looked up by name.
    pub fn select(&self, names: &[String]) -> Result<DataMatrix, CliError> {
        let missing: Vec<&str> = names
            .iter()
            .filter(|n| self.column_index(n).is_none())
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Input(format!(
                "missing input column(s): {}",
                missing.join(", ")
            )));
        }
        let idx: Vec<usize> = names.iter().map(|n| self.column_index(n).unwrap()).collect();
        let data: Vec<f64> = self
            .rows
            .iter()
            .flat_map(|r| idx.iter().map(move |&j| r[j]))
            .collect();
        Ok(DataMatrix::new(self.rows.len(), idx.len(), data)?)
    }
}

fn parse_cell(cell: &str) -> Result<f64, String> {
    if cell.is_empty() {
        return Err("empty cell".into());
    }
    let v: f64 = cell.parse().map_err(|_| format!("'{cell}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("'{cell}' is not finite"));
    }
    Ok(v)
}

/// Opens `path` for writing, or stdout when it is `None`.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(|e| {
            CliError::Input(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout())),
    })
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
