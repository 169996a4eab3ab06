use serde::{Deserialize, Serialize};

use crate::data::Matrix;

/// Fixed feature expansion applied before a linear model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    #[default]
    Identity,
    /// Inputs followed by all products `x_i * x_j` with `i <= j`.
    PolynomialDegree2,
}

impl FeatureMap {
    pub fn output_dim(self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => input_dim,
            FeatureMap::PolynomialDegree2 => input_dim + input_dim * (input_dim + 1) / 2,
        }
    }

    pub fn expand_into(self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x);
        if self == FeatureMap::PolynomialDegree2 {
            for i in 0..x.len() {
                for j in i..x.len() {
                    out.push(x[i] * x[j]);
                }
            }
        }
    }

    pub fn expand(self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_dim(x.len()));
        self.expand_into(x, &mut out);
        out
    }

    pub fn expand_matrix(self, x: &Matrix) -> Matrix {
        if self == FeatureMap::Identity {
            return x.clone();
        }
        let p = self.output_dim(x.ncols());
        let mut data = Vec::with_capacity(x.nrows() * p);
        let mut buf = Vec::with_capacity(p);
        for r in x.rows() {
            self.expand_into(r, &mut buf);
            data.extend_from_slice(&buf);
        }
        Matrix::from_flat(data, p).expect("p > 0")
    }
}
