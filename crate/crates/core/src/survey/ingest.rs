use std::io::{Read, Write};
use std::path::Path;

use super::{derive_prev, UnitRecord};
use crate::error::{Error, Result};
use crate::scalar::Real;

const FIXED_COLUMNS: [&str; 5] = ["unit_id", "t", "area", "y", "w"];

/// Reads microdata with header `unit_id,t,area,y,w,x1..xq`.
///
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn ingest_csv<T: Real>(path: impl AsRef<Path>, n_categories: usize) -> Result<Vec<UnitRecord<T>>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_records(file, n_categories).map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        other => other,
    })
}

/// [`ingest_csv`] over any reader.
pub fn parse_records<T: Real, R: Read>(reader: R, n_categories: usize) -> Result<Vec<UnitRecord<T>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::csv("<input>", e))?.clone();
    if header.len() < FIXED_COLUMNS.len() || header.iter().zip(FIXED_COLUMNS).any(|(h, want)| h != want) {
        return Err(Error::data(
            None,
            format!("header must start with {}", FIXED_COLUMNS.join(",")),
        ));
    }
    let q = header.len() - FIXED_COLUMNS.len();
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| Error::data(line, e.to_string()))?;
        if row.len() != header.len() {
            return Err(Error::data(
                line,
                format!("expected {} fields, found {}", header.len(), row.len()),
            ));
        }
        let field = |j: usize| &row[j];
        let int = |j: usize| -> Result<usize> {
            field(j)
                .parse::<usize>()
                .map_err(|e| Error::data(line, format!("column `{}`: {e}", &header[j])))
        };
        let real = |j: usize| -> Result<T> {
            let v: f64 = field(j)
                .parse()
                .map_err(|e| Error::data(line, format!("column `{}`: {e}", &header[j])))?;
            if !v.is_finite() {
                return Err(Error::data(
                    line,
                    format!("column `{}` is not finite", &header[j]),
                ));
            }
            Ok(T::lit(v))
        };
        let unit_id = field(0).to_string();
        if unit_id.is_empty() {
            return Err(Error::data(line, "empty unit_id"));
        }
        let t = int(1)?;
        let area = int(2)?;
        let y = int(3)?;
        let w = real(4)?;
        if t == 0 {
            return Err(Error::data(line, "time index must be at least 1"));
        }
        if area == 0 {
            return Err(Error::data(line, "area index must be at least 1"));
        }
        if y == 0 || y > n_categories {
            return Err(Error::data(
                line,
                format!("response {y} outside 1..={n_categories}"),
            ));
        }
        if !(w > T::zero()) {
            return Err(Error::data(line, format!("weight must be positive, got {w}")));
        }
        let x = (0..q)
            .map(|j| real(FIXED_COLUMNS.len() + j))
            .collect::<Result<Vec<T>>>()?;
        records.push(UnitRecord {
            unit_id,
            t,
            area,
            x,
            y,
            w,
            prev: None,
        });
    }
    derive_prev(&mut records)?;
    Ok(records)
}

/// Writes records in the format read by [`parse_records`].
pub fn write_records_csv<T: Real, W: Write>(records: &[UnitRecord<T>], writer: W) -> Result<()> {
    let q = records.first().map_or(0, |r| r.x.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=q).map(|j| format!("x{j}")));
    let wrap = |e: csv::Error| Error::csv("<output>", e);
    w.write_record(&header).map_err(wrap)?;
    for r in records {
        let mut fields = vec![
            r.unit_id.clone(),
            r.t.to_string(),
            r.area.to_string(),
            r.y.to_string(),
            r.w.as_f64().to_string(),
        ];
        fields.extend(r.x.iter().map(|v| v.as_f64().to_string()));
        w.write_record(&fields).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}
