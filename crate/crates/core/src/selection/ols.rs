use nalgebra::{DMatrix, DVector};

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, spd_inverse};

/// Least-squares fit. For weighted fits `weights` holds the per-row variance
/// multipliers and `xtx_inv` is (X'W⁻¹X)⁻¹.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    /// Residual standard deviation sqrt(RSS / residual_df).
    pub sigma: f64,
    pub covariance: DMatrix<f64>,
    pub residual_df: usize,
    pub rss: f64,
    pub xtx_inv: DMatrix<f64>,
    pub column_names: Vec<String>,
    pub weights: Option<Vec<f64>>,
}

impl OlsFit {
    pub fn n(&self) -> usize {
        self.residual_df + self.beta.len()
    }

    pub fn std_errors(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }

    /// x'β for one row.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.beta.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Ordinary least squares of `y` on the design.
pub fn fit_ols(y: &[f64], x: &DesignMatrix) -> Result<OlsFit> {
    fit_matrix(y, &x.values, &x.column_names, None)
}

/// Weighted least squares with per-row variance multipliers `w` (Var ε_i ∝ w_i).
pub fn fit_wls(y: &[f64], x: &DesignMatrix, w: &[f64]) -> Result<OlsFit> {
    fit_matrix(y, &x.values, &x.column_names, Some(w))
}

pub(crate) fn fit_matrix(
    y: &[f64],
    x: &DMatrix<f64>,
    names: &[String],
    weights: Option<&[f64]>,
) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "outcome has {} values but design has {n} rows",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::Degenerate(format!(
            "{n} rows cannot identify {p} coefficients with positive residual df"
        )));
    }
    let (xw, yw) = match weights {
        None => (x.clone(), DVector::from_column_slice(y)),
        Some(w) => {
            if w.len() != n || w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument("weights must be positive and finite".into()));
            }
            let s: Vec<f64> = w.iter().map(|v| 1.0 / v.sqrt()).collect();
            let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * s[i]);
            let yw = DVector::from_iterator(n, y.iter().zip(&s).map(|(a, b)| a * b));
            (xw, yw)
        }
    };
    check_full_rank(&xw, names)?;
    let xtx_inv = spd_inverse(&xw.tr_mul(&xw), "least squares normal equations")?;
    let beta = &xtx_inv * xw.tr_mul(&yw);
    let resid = &yw - &xw * &beta;
    let rss = resid.norm_squared();
    let residual_df = n - p;
    let sigma2 = rss / residual_df as f64;
    Ok(OlsFit {
        covariance: &xtx_inv * sigma2,
        sigma: sigma2.sqrt(),
        beta,
        residual_df,
        rss,
        xtx_inv,
        column_names: names.to_vec(),
        weights: weights.map(|w| w.to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(values: DMatrix<f64>) -> DesignMatrix {
        let k = values.ncols();
        let n = values.nrows();
        DesignMatrix {
            values,
            column_names: (0..k).map(|j| format!("c{j}")).collect(),
            row_ids: (0..n).map(|i| i.to_string()).collect(),
            rows: (0..n).collect(),
            blocks: vec![],
        }
    }

    #[test]
    fn intercept_only_hand_case() {
        let x = design(DMatrix::from_element(3, 1, 1.0));
        let fit = fit_ols(&[1.0, 2.0, 3.0], &x).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-15);
        assert!((fit.sigma * fit.sigma - 1.0).abs() < 1e-14);
        assert_eq!(fit.residual_df, 2);
        assert!((fit.xtx_inv[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_fit_has_zero_sigma() {
        let x = design(DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 5.0]));
        let y = [1.0, 3.0, 5.0, 11.0];
        let fit = fit_ols(&y, &x).unwrap();
        assert!(fit.sigma < 1e-12);
        assert!((fit.beta[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows() {
        let x = design(DMatrix::from_element(2, 2, 1.0));
        assert!(fit_ols(&[1.0, 2.0], &x).is_err());
    }

    #[test]
    fn rank_deficient_design() {
        let x = design(DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]));
        assert!(matches!(fit_ols(&[1.0, 2.0, 3.0], &x), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn unit_weights_match_ols() {
        let x = design(DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 5.0]));
        let y = [1.0, 2.5, 5.0, 10.0];
        let a = fit_ols(&y, &x).unwrap();
        let b = fit_wls(&y, &x, &[1.0; 4]).unwrap();
        assert!((a.beta - b.beta).norm() < 1e-13);
        assert!((a.rss - b.rss).abs() < 1e-12);
    }
}
