use nalgebra::{DMatrix, DVector};

use crate::data::Matrix;
use crate::error::{Error, Result};

/// Penalized least squares with an unpenalized intercept, solved on centered
/// data via Cholesky. Returns `(coef, intercept)`.
pub(super) fn fit(x: &Matrix, y: &[f64], penalty: f64) -> Result<(Vec<f64>, f64)> {
    let n = x.nrows();
    let p = x.ncols();
    let nf = n as f64;
    let mut x_mean = vec![0.0; p];
    for r in x.rows() {
        for (m, v) in x_mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= nf);
    let y_mean = y.iter().sum::<f64>() / nf;

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut centered = vec![0.0; p];
    for (r, &yi) in x.rows().zip(y) {
        for k in 0..p {
            centered[k] = r[k] - x_mean[k];
        }
        let yc = yi - y_mean;
        for i in 0..p {
            let ci = centered[i];
            rhs[i] += ci * yc;
            for j in i..p {
                gram[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
        gram[(i, i)] += penalty;
    }
    if penalty == 0.0 {
        // Cholesky happily factors numerically singular matrices; reject
        // pivots that are negligible relative to the diagonal scale.
        let scale = (0..p).map(|i| gram[(i, i)]).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::Singular);
        }
        let chol = gram.clone().cholesky().ok_or(Error::Singular)?;
        let l = chol.l();
        let min_pivot = (0..p)
            .map(|i| l[(i, i)] * l[(i, i)])
            .fold(f64::INFINITY, f64::min);
        if min_pivot <= scale * 1e-12 {
            return Err(Error::Singular);
        }
        let coef = chol.solve(&rhs);
        return Ok(finish(coef, &x_mean, y_mean));
    }
    let chol = gram.cholesky().ok_or(Error::Singular)?;
    Ok(finish(chol.solve(&rhs), &x_mean, y_mean))
}

fn finish(coef: DVector<f64>, x_mean: &[f64], y_mean: f64) -> (Vec<f64>, f64) {
    let intercept = y_mean - coef.iter().zip(x_mean).map(|(c, m)| c * m).sum::<f64>();
    (coef.iter().copied().collect(), intercept)
}
