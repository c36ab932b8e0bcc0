//! Flat-CSV dataset dump/load, one file per agent, for cross-implementation
//! comparison. Rows are measurements (phase retrieval: amplitude followed by
//! the direction coordinates) or data-matrix rows.

use crate::error::{Error, Result};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// Writes numeric rows as CSV with full round-trip float formatting.
pub fn dump_agent_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back rows written by [`dump_agent_csv`]; the header line is skipped.
pub fn load_agent_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Config {
            line: Some(idx + 1),
            msg: format!("bad CSV number: {e}"),
        })?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_floats_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent_0.csv");
        let rows = vec![
            vec![1.0, -0.5, std::f64::consts::PI],
            vec![1e-300, 2.2250738585072014e-308, 0.1 + 0.2],
        ];
        dump_agent_csv(&path, &["a", "b", "c"], &rows).unwrap();
        let back = load_agent_csv(&path).unwrap();
        assert_eq!(rows, back);
    }
}
