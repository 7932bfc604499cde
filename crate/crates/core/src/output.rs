//! Artifact writing: CSV tables and JSON documents, written atomically and
//! gzip-compressed when the file name ends in `.gz`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::Serialize;

use crate::error::Result;

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let payload = if path.extension().is_some_and(|e| e == "gz") {
        // mtime 0 and no file name keep the archive bytes reproducible
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?
    } else {
        bytes.to_vec()
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&payload)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a file, transparently decompressing `.gz`.
pub fn read_text(path: &Path) -> Result<String> {
    let raw = fs::read(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = String::new();
        std::io::Read::read_to_string(&mut flate2::read::GzDecoder::new(&raw[..]), &mut out)?;
        Ok(out)
    } else {
        Ok(String::from_utf8_lossy(&raw).into_owned())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// In-memory CSV table with a fixed header.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Csv {
        let mut text = header.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join(",");
        text.push('\n');
        Csv {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns);
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            let _ = write!(self.text, "{v}");
        }
        self.text.push('\n');
    }

    pub fn raw_row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let line = cells.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join(",");
        self.text.push_str(&line);
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.text.as_bytes())
    }
}

/// Parses a numeric CSV with one header line.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| crate::Error::Precondition(format!("csv line {}: {e}", i + 2)))?;
        if row.len() != header.len() {
            return Err(crate::Error::Precondition(format!(
                "csv line {} has {} cells, header has {}",
                i + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gzip_round_trip_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = Csv::new(&["t", "q1"]);
        csv.row(&[0.0, 1.5]);
        csv.row(&[0.1, -2e-9]);
        let a = dir.path().join("a.csv.gz");
        let b = dir.path().join("b.csv.gz");
        csv.write(&a).unwrap();
        csv.write(&b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let text = read_text(&a).unwrap();
        let (h, rows) = parse_csv(&text).unwrap();
        assert_eq!(h, vec!["t", "q1"]);
        assert_eq!(rows[1][1], -2e-9);
    }
}
