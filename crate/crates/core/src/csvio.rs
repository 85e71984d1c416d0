//! Dataset CSV files: a header `z,y,x1,...,xd`, one row per unit.
//!
//! Columns are matched by name, so their order in the file is free; covariate
//! columns are every column other than `z` and `y`, kept in file order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::ObservedDataset;
use crate::error::{Error, Result};

pub fn read_dataset(path: &Path) -> Result<ObservedDataset> {
    let file = File::open(path).map_err(|e| Error::Ingest(format!("{}: {}", path.display(), e)))?;
    read_dataset_from(file)
}

pub fn read_dataset_from<R: Read>(reader: R) -> Result<ObservedDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Ingest(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let zi = find("z").ok_or_else(|| Error::Ingest("column z not found".into()))?;
    let yi = find("y").ok_or_else(|| Error::Ingest("column y not found".into()))?;
    let xcols: Vec<usize> = (0..headers.len()).filter(|&c| c != zi && c != yi).collect();

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut z = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        // Row numbers are 1-based data rows, not counting the header.
        let row = r + 1;
        let record = record.map_err(|e| Error::Ingest(format!("row {}: {}", row, e)))?;
        let field = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::Ingest(format!("row {}, column {}: {:?} is not a finite number", row, &headers[c], raw))
            })
        };
        let zv = field(zi)?;
        if zv != 0.0 && zv != 1.0 {
            return Err(Error::Ingest(format!("row {}, column z: {} is not 0 or 1", row, zv)));
        }
        z.push(zv as u8);
        y.push(field(yi)?);
        for &c in &xcols {
            x.push(field(c)?);
        }
    }
    ObservedDataset::new(xcols.len(), x, y, z)
}

pub fn write_dataset(path: &Path, data: &ObservedDataset) -> Result<()> {
    let mut file = File::create(path)?;
    write_dataset_to(&mut file, data)?;
    file.flush()?;
    Ok(())
}

/// Writes with shortest round-trip float formatting, so reading the file back
/// reproduces the dataset bit for bit.
pub fn write_dataset_to<W: Write>(writer: W, data: &ObservedDataset) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["z".to_string(), "y".to_string()];
    header.extend((1..=data.dim()).map(|j| format!("x{}", j)));
    wtr.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let mut rec = vec![data.treatments()[i].to_string(), fmt(data.outcomes()[i])];
        rec.extend(data.row(i).iter().map(|v| fmt(*v)));
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a numeric matrix with a header row, e.g. an external covariate table.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::Ingest(format!("{}: {}", path.display(), e)))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = rdr.headers().map_err(|e| Error::Ingest(e.to_string()))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Ingest(format!("row {}: {}", r + 1, e)))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, raw)| {
                raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Ingest(format!("row {}, column {}: {:?} is not a finite number", r + 1, headers[c], raw))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((headers, rows))
}

fn fmt(v: f64) -> String {
    format!("{:?}", v)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
