//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot below which a column counts as linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// Checks full column rank; on failure names each dependent column together
/// with the earlier columns it is (numerically) a combination of.
pub fn check_full_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let k = x.ncols();
    if x.nrows() < k {
        return Err(Error::RankDeficient {
            columns: names.to_vec(),
        });
    }
    let norms: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    let mut gram = x.tr_mul(x);
    for i in 0..k {
        for j in 0..k {
            let d = norms[i] * norms[j];
            gram[(i, j)] = if d > 0.0 { gram[(i, j)] / d } else { 0.0 };
        }
    }
    // Cholesky that skips dependent columns.
    let mut l = DMatrix::<f64>::zeros(k, k);
    let mut independent: Vec<usize> = Vec::new();
    let mut bad: Vec<usize> = Vec::new();
    for j in 0..k {
        let mut d = gram[(j, j)];
        for &p in &independent {
            d -= l[(j, p)] * l[(j, p)];
        }
        if norms[j] == 0.0 || d <= RANK_TOL {
            bad.push(j);
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..k {
            let mut s = gram[(i, j)];
            for &p in &independent {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / djj;
        }
        independent.push(j);
    }
    if bad.is_empty() {
        return Ok(());
    }
    let mut involved = std::collections::BTreeSet::new();
    for &j in &bad {
        involved.insert(j);
        if norms[j] == 0.0 || independent.is_empty() {
            continue;
        }
        // Regress column j on the independent columns before it.
        let prev: Vec<usize> = independent.iter().copied().filter(|&p| p < j).collect();
        if prev.is_empty() {
            continue;
        }
        let g = gram.select_rows(&prev).select_columns(&prev);
        let rhs = DVector::from_iterator(prev.len(), prev.iter().map(|&p| gram[(p, j)]));
        if let Some(ch) = g.cholesky() {
            let c = ch.solve(&rhs);
            for (t, &p) in prev.iter().enumerate() {
                if c[t].abs() > 1e-6 {
                    involved.insert(p);
                }
            }
        }
    }
    Err(Error::RankDeficient {
        columns: involved.into_iter().map(|j| names[j].clone()).collect(),
    })
}

/// Inverse of a symmetric positive-definite matrix, computed with symmetric
/// diagonal scaling for conditioning.
pub fn spd_inverse(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let k = a.nrows();
    let d: Vec<f64> = (0..k)
        .map(|i| {
            let v = a[(i, i)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what));
    }
    let scaled = DMatrix::from_fn(k, k, |i, j| a[(i, j)] * d[i] * d[j]);
    let ch = scaled.cholesky().ok_or(Error::Singular(what))?;
    let inv = ch.inverse();
    let out = DMatrix::from_fn(k, k, |i, j| inv[(i, j)] * d[i] * d[j]);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what));
    }
    Ok(symmetrize(&out))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// x' A x for a row vector slice.
pub fn quad_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let k = x.len();
    let mut s = 0.0;
    for i in 0..k {
        let mut r = 0.0;
        for j in 0..k {
            r += a[(i, j)] * x[j];
        }
        s += x[i] * r;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rank_passes() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        check_full_rank(&x, &["a".into(), "b".into()]).unwrap();
    }

    #[test]
    fn names_dependency() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 1.0, 3.0, 4.0]);
        let names: Vec<String> = vec!["one".into(), "x".into(), "x_plus_one".into()];
        match check_full_rank(&x, &names) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, names),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spd_inverse_round_trip() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = spd_inverse(&a, "test").unwrap();
        let id = &a * inv;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
