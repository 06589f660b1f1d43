//! CSV matrix reading and writing. Gzip input is detected from its magic bytes.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Header {
    /// First row is always column names.
    Required,
    /// First row is a header if any of its fields fails to parse as a number.
    Auto,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub values: DMatrix<f64>,
}

fn open(path: &Path) -> Result<Box<dyn Read>> {
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?);
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let prefix = std::io::Cursor::new(magic[..n].to_vec());
    let chained = prefix.chain(file);
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(MultiGzDecoder::new(chained)))
    } else {
        Ok(Box::new(chained))
    }
}

pub fn read_table(path: &Path, header: Header) -> Result<Table> {
    let input_err = |message: String| Error::Input {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut records = reader.records();

    let first = match records.next() {
        Some(r) => r?,
        None => return Err(input_err("file is empty".into())),
    };
    let parse_row = |record: &csv::StringRecord, line: usize, names: Option<&[String]>| -> Result<Vec<f64>> {
        record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|_| {
                    let column = names
                        .and_then(|n| n.get(col))
                        .map(|n| format!("`{n}`"))
                        .unwrap_or_else(|| (col + 1).to_string());
                    input_err(format!("line {line}, column {column}: `{field}` is not a number"))
                })
            })
            .collect()
    };

    let first_is_numeric = first.iter().all(|f| f.parse::<f64>().is_ok());
    let (names, mut rows) = if header == Header::Required || !first_is_numeric {
        (
            Some(first.iter().map(str::to_string).collect::<Vec<_>>()),
            Vec::new(),
        )
    } else {
        (None, vec![parse_row(&first, 1, None)?])
    };
    let width = first.len();
    for (offset, record) in records.enumerate() {
        let record = record?;
        let line = 2 + offset;
        if record.len() != width {
            return Err(input_err(format!(
                "line {line} has {} fields, expected {width}",
                record.len()
            )));
        }
        rows.push(parse_row(&record, line, names.as_deref())?);
    }
    let values = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
    Ok(Table {
        header: names,
        values,
    })
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    Ok(read_table(path, Header::Auto)?.values)
}

/// Write a matrix as CSV with Rust's shortest round-trip float formatting.
pub fn write_matrix<W: Write>(writer: W, header: Option<&[String]>, values: &DMatrix<f64>) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    if let Some(names) = header {
        out.write_record(names)?;
    }
    for row in values.row_iter() {
        out.write_record(row.iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}
