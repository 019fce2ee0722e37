//! Vector datasets as CSV: a header `x0,x1,…` followed by one sample per
//! line. Values are written with the shortest representation that parses
//! back to the same `f32`.

use std::fmt::Write as _;
use std::path::Path;

use super::DataBatch;
use crate::fsio::write_atomic;
use crate::{Error, Result};

pub fn vectors_to_csv(batch: &DataBatch) -> String {
    let d = batch.features();
    let mut out = (0..d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for s in batch.samples() {
        for (i, v) in s.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn write_vectors_csv(batch: &DataBatch, path: &Path) -> Result<()> {
    write_atomic(path, vectors_to_csv(batch).as_bytes())
}

pub fn read_vectors_csv(path: &Path) -> Result<DataBatch> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, msg: String| Error::Csv { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(err(1, "empty file".into()));
    };
    let d = header.split(',').count();
    let mut data = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(err(i + 1, format!("expected {d} fields, found {}", fields.len())));
        }
        for f in fields {
            let v: f32 = f.trim().parse().map_err(|_| err(i + 1, format!("not a number: {f:?}")))?;
            data.push(v);
        }
    }
    if data.is_empty() {
        return Err(err(2, "no samples".into()));
    }
    DataBatch::new(vec![d], data)
}
