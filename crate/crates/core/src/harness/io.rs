//! CSV datasets.
//!
//! Header: `x0, ..., x{d-1}`, optional `t`, `y`, optional `role`. Column
//! order is free. Infinities are written as `inf` / `-inf`; finite values
//! use the shortest representation that parses back to the same `f64`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Dataset, Matrix, Role};
use crate::error::{Error, Result};

/// Requirements checked on top of the basic header rules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvSchema {
    pub dim: Option<usize>,
    pub require_treatment: bool,
    pub require_role: bool,
}

enum Column {
    Feature(usize),
    Treatment,
    Outcome,
    Role,
}

fn parse_header(headers: &csv::StringRecord) -> Result<(Vec<Column>, usize)> {
    let mut cols = Vec::with_capacity(headers.len());
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut max_feature = None;
    for h in headers {
        let name = h.trim();
        if seen.insert(name.to_string(), ()).is_some() {
            return Err(Error::Schema(format!("duplicate column `{name}`")));
        }
        let col = match name {
            "t" => Column::Treatment,
            "y" => Column::Outcome,
            "role" => Column::Role,
            _ => match name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                Some(j) if name == format!("x{j}") => {
                    max_feature = Some(max_feature.map_or(j, |m: usize| m.max(j)));
                    Column::Feature(j)
                }
                _ => return Err(Error::Schema(format!("unknown column `{name}`"))),
            },
        };
        cols.push(col);
    }
    if !cols.iter().any(|c| matches!(c, Column::Outcome)) {
        return Err(Error::Schema("missing column `y`".into()));
    }
    let dim = max_feature.map_or(0, |m| m + 1);
    if dim == 0 {
        return Err(Error::Schema("missing feature columns `x0`...".into()));
    }
    let n_features = cols
        .iter()
        .filter(|c| matches!(c, Column::Feature(_)))
        .count();
    if n_features != dim {
        let missing = (0..dim)
            .find(|j| !seen.contains_key(&format!("x{j}")))
            .unwrap_or(0);
        return Err(Error::Schema(format!("missing column `x{missing}`")));
    }
    Ok((cols, dim))
}

fn parse_value(raw: &str, row: usize, column: &str) -> Result<f64> {
    let s = raw.trim();
    if s.is_empty() {
        return Err(Error::Row {
            row,
            message: format!("missing value in `{column}`"),
        });
    }
    let v: f64 = s.parse().map_err(|_| Error::Row {
        row,
        message: format!("cannot parse `{s}` in `{column}`"),
    })?;
    if v.is_nan() {
        return Err(Error::Row {
            row,
            message: format!("NaN in `{column}`"),
        });
    }
    Ok(v)
}

/// Reads a dataset from any reader. Row numbers in errors are file line
/// numbers (the header is line 1).
pub fn read_csv_dataset<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let (cols, dim) = parse_header(&headers)?;
    if let Some(expected) = schema.dim {
        if expected != dim {
            return Err(Error::Schema(format!(
                "expected {expected} feature columns, found {dim}"
            )));
        }
    }
    let has_t = cols.iter().any(|c| matches!(c, Column::Treatment));
    let has_role = cols.iter().any(|c| matches!(c, Column::Role));
    if schema.require_treatment && !has_t {
        return Err(Error::Schema("missing column `t`".into()));
    }
    if schema.require_role && !has_role {
        return Err(Error::Schema("missing column `role`".into()));
    }

    let mut x = Matrix::with_cols(dim);
    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut roles = Vec::new();
    let mut features = vec![0.0; dim];
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        if record.len() != cols.len() {
            return Err(Error::Row {
                row,
                message: format!("expected {} fields, found {}", cols.len(), record.len()),
            });
        }
        for (col, (raw, name)) in cols.iter().zip(record.iter().zip(headers.iter())) {
            match col {
                Column::Feature(j) => features[*j] = parse_value(raw, row, name)?,
                Column::Outcome => y.push(parse_value(raw, row, name)?),
                Column::Treatment => match raw.trim() {
                    "0" => t.push(0u8),
                    "1" => t.push(1u8),
                    other => {
                        return Err(Error::Row {
                            row,
                            message: format!("treatment must be 0 or 1, got `{other}`"),
                        })
                    }
                },
                Column::Role => {
                    let r = Role::parse(raw.trim()).ok_or_else(|| Error::Row {
                        row,
                        message: format!("role must be obs, int or test, got `{}`", raw.trim()),
                    })?;
                    roles.push(r);
                }
            }
        }
        x.push_row(&features)?;
    }
    let mut data = Dataset::new(x, y)?;
    if has_t {
        data = data.with_treatment(t)?;
    }
    if has_role {
        data = data.with_role(roles)?;
    }
    Ok(data)
}

pub fn load_csv_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    read_csv_dataset(std::fs::File::open(path)?, schema)
}

pub fn write_csv_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    if data.treatment.is_some() {
        header.push("t".into());
    }
    header.push("y".into());
    if data.role.is_some() {
        header.push("role".into());
    }
    w.write_record(&header)?;
    let mut fields = Vec::with_capacity(header.len());
    for i in 0..data.len() {
        fields.clear();
        fields.extend(data.x.row(i).iter().map(|v| v.to_string()));
        if let Some(t) = &data.treatment {
            fields.push(t[i].to_string());
        }
        fields.push(data.y[i].to_string());
        if let Some(r) = &data.role {
            fields.push(r[i].as_str().to_string());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_csv_dataset(std::fs::File::create(path)?, data)
}
