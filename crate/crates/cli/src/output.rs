use std::path::{Path, PathBuf};

use crate::failure::Failure;

/// Shortest round-trip decimal form, so outputs are reproducible byte for byte.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Empty cell for an absent value.
pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::config(format!("cannot create output directory {}: {e}", dir.display())))
}

/// Writes a header-first CSV table.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::io(path, e))?;
    w.write_record(header).map_err(|e| Failure::io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| Failure::io(path, e))?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))
}

/// Reads a header-first CSV into its header and rows of cells.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), Failure> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

/// Position of a named column, as a data error when absent.
pub fn column(header: &[String], name: &str, path: &Path) -> Result<usize, Failure> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Failure::data(format!("{} has no `{name}` column", path.display())))
}

/// Parses an optional numeric cell.
pub fn parse_opt(cell: &str, path: &Path) -> Result<Option<f64>, Failure> {
    if cell.is_empty() || cell == "NA" {
        return Ok(None);
    }
    cell.parse()
        .map(Some)
        .map_err(|_| Failure::data(format!("{}: `{cell}` is not a number", path.display())))
}

pub fn join(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
