//! File formats: CSV tables, truth JSONL, and tuple JSONL output.
//!
//! Truth lines are JSON arrays of `"source:row"` strings. Output tuple lines
//! are `{"members": ["source:row", ...]}` with members ascending and lines
//! ordered by their member lists.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{Tuple, TruthSet};
use crate::model::{validate_dataset, Dataset, EntityRef, RawTable};

pub fn read_csv_table(path: &Path) -> Result<RawTable> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

pub fn write_csv_table(path: &Path, table: &RawTable) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record(&table.header).map_err(csv_err)?;
    for row in &table.rows {
        writer.write_record(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads one CSV per table and validates them together.
pub fn load_dataset<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    let raw = paths
        .iter()
        .map(|p| read_csv_table(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    validate_dataset(raw)
}

/// Writes `dataset` as `table_<i>.csv` files in `dir`, returning the paths.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for (i, table) in dataset.to_raw().iter().enumerate() {
        let path = dir.join(format!("table_{i}.csv"));
        write_csv_table(&path, table)?;
        paths.push(path);
    }
    Ok(paths)
}

fn parse_refs(items: Vec<String>) -> Result<Tuple<EntityRef>> {
    items.iter().map(|s| s.parse()).collect()
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn read_truth(path: &Path) -> Result<TruthSet<EntityRef>> {
    let mut tuples = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let items: Vec<String> = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            line: line_no,
            source,
        })?;
        tuples.push(parse_refs(items)?);
    }
    TruthSet::new(tuples)
}

pub fn write_truth(path: &Path, tuples: &[Tuple<EntityRef>]) -> Result<()> {
    let mut sorted: Vec<&Tuple<EntityRef>> = tuples.iter().collect();
    sorted.sort();
    write_lines(path, sorted.iter().map(|t| {
        let items: Vec<String> = t.iter().map(EntityRef::to_string).collect();
        serde_json::to_string(&items).expect("string lists serialize")
    }))
}

#[derive(Serialize, Deserialize)]
struct TupleLine {
    members: Vec<String>,
}

/// Accepts either `{"members": [...]}` lines or bare arrays.
pub fn read_tuples(path: &Path) -> Result<Vec<Tuple<EntityRef>>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Line {
        Object(TupleLine),
        List(Vec<String>),
    }
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let parsed: Line = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            line: line_no,
            source,
        })?;
        let items = match parsed {
            Line::Object(o) => o.members,
            Line::List(l) => l,
        };
        out.push(parse_refs(items)?);
    }
    Ok(out)
}

/// Canonical JSONL encoding of output tuples.
pub fn encode_tuples(tuples: &[Tuple<EntityRef>]) -> String {
    let mut sorted: Vec<&Tuple<EntityRef>> = tuples.iter().collect();
    sorted.sort();
    let mut out = String::new();
    for t in sorted {
        let line = TupleLine {
            members: t.iter().map(EntityRef::to_string).collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("tuple lines serialize"));
        out.push('\n');
    }
    out
}

pub fn write_tuples(path: &Path, tuples: &[Tuple<EntityRef>]) -> Result<()> {
    std::fs::write(path, encode_tuples(tuples)).map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
