//! Row-major feature matrices and labelled datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of features.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    ncols: usize,
}

impl Matrix {
    /// An empty matrix with `ncols` columns.
    pub fn with_cols(ncols: usize) -> Self {
        Self {
            data: Vec::new(),
            ncols,
        }
    }

    pub fn from_flat(data: Vec<f64>, ncols: usize) -> Result<Self> {
        if ncols == 0 {
            return Err(Error::InvalidParameter(
                "matrix needs at least one column".into(),
            ));
        }
        if !data.len().is_multiple_of(ncols) {
            return Err(Error::DimensionMismatch {
                expected: ncols,
                got: data.len() % ncols,
            });
        }
        Ok(Self { data, ncols })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("matrix rows"))?;
        let ncols = first.as_ref().len();
        let mut m = Self::with_cols(ncols);
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        if ncols == 0 {
            return Err(Error::InvalidParameter(
                "matrix needs at least one column".into(),
            ));
        }
        Ok(m)
    }

    /// Single-column matrix.
    pub fn column(values: &[f64]) -> Self {
        Self {
            data: values.to_vec(),
            ncols: 1,
        }
    }

    pub fn nrows(&self) -> usize {
        if self.ncols == 0 {
            0
        } else {
            self.data.len() / self.ncols
        }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.ncols.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.ncols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            ncols: self.ncols,
        }
    }

    /// Horizontal concatenation of `self` with one extra column.
    pub fn with_column(&self, extra: &[f64]) -> Result<Self> {
        if extra.len() != self.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.nrows(),
                got: extra.len(),
            });
        }
        let ncols = self.ncols + 1;
        let mut data = Vec::with_capacity(self.nrows() * ncols);
        for (row, &e) in self.rows().zip(extra) {
            data.extend_from_slice(row);
            data.push(e);
        }
        Ok(Self { data, ncols })
    }

    pub fn vstack(&self, other: &Matrix) -> Result<Self> {
        if other.ncols != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: other.ncols,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            data,
            ncols: self.ncols,
        })
    }
}

/// Provenance of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[serde(rename = "obs")]
    Observational,
    #[serde(rename = "int")]
    Interventional,
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Observational => "obs",
            Role::Interventional => "int",
            Role::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "obs" => Some(Role::Observational),
            "int" => Some(Role::Interventional),
            "test" => Some(Role::Test),
            _ => None,
        }
    }
}

/// Feature rows with outcomes, optionally tagged with a binary treatment and
/// a provenance role.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub treatment: Option<Vec<u8>>,
    pub role: Option<Vec<Role>>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        Ok(Self {
            x,
            y,
            treatment: None,
            role: None,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            x: Matrix::with_cols(dim),
            y: Vec::new(),
            treatment: None,
            role: None,
        }
    }

    pub fn with_treatment(mut self, t: Vec<u8>) -> Result<Self> {
        if t.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: t.len(),
            });
        }
        if t.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter("treatment must be 0 or 1".into()));
        }
        self.treatment = Some(t);
        Ok(self)
    }

    pub fn with_role(mut self, role: Vec<Role>) -> Result<Self> {
        if role.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: role.len(),
            });
        }
        self.role = Some(role);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            treatment: self
                .treatment
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
            role: self
                .role
                .as_ref()
                .map(|r| indices.iter().map(|&i| r[i]).collect()),
        }
    }

    /// Rows `range` in order.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let idx: Vec<usize> = range.collect();
        self.select(&idx)
    }

    /// Rows whose treatment equals `t`; errors when no treatment column exists.
    pub fn arm(&self, t: u8) -> Result<Self> {
        let tr = self
            .treatment
            .as_ref()
            .ok_or_else(|| Error::Schema("dataset has no treatment column".into()))?;
        let idx: Vec<usize> = tr
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == t)
            .map(|(i, _)| i)
            .collect();
        Ok(self.select(&idx))
    }

    /// Rows tagged with `role`; errors when no role column exists.
    pub fn with_role_only(&self, role: Role) -> Result<Self> {
        let r = self
            .role
            .as_ref()
            .ok_or_else(|| Error::Schema("dataset has no role column".into()))?;
        let idx: Vec<usize> = r
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == role)
            .map(|(i, _)| i)
            .collect();
        Ok(self.select(&idx))
    }

    /// Copy of `self` with one extra `(x, y)` row appended. Treatment and role
    /// columns are dropped.
    pub fn augmented(&self, x: &[f64], y: f64) -> Result<Self> {
        let mut out = Dataset {
            x: self.x.clone(),
            y: self.y.clone(),
            treatment: None,
            role: None,
        };
        out.x.push_row(x)?;
        out.y.push(y);
        Ok(out)
    }

    /// Features and outcome stacked into one `(d + 1)`-column matrix.
    pub fn joint(&self) -> Matrix {
        self.x
            .with_column(&self.y)
            .expect("lengths checked at construction")
    }

    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        let x = self.x.vstack(&other.x)?;
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        let treatment = match (&self.treatment, &other.treatment) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        let role = match (&self.role, &other.role) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(Self {
            x,
            y,
            treatment,
            role,
        })
    }
}
