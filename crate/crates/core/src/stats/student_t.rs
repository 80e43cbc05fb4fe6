use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};

use super::normal::norm_quantile;
use crate::error::{Error, Result};

/// Distribution whose quantile is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    StdNormal,
    StudentT { df: f64 },
}

/// Quantile of the standard normal or Student-t distribution.
pub fn quantile(dist: Dist, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile probability {p} outside (0, 1)"
        )));
    }
    match dist {
        Dist::StdNormal => Ok(norm_quantile(p)),
        Dist::StudentT { df } => {
            if !(df > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "degrees of freedom {df} must be positive"
                )));
            }
            Ok(t_quantile(df, p))
        }
    }
}

/// Two-sided critical value t_{1-α/2, df}; infinite df gives the normal value.
pub fn t_critical(df: f64, alpha: f64) -> f64 {
    let p = 1.0 - alpha / 2.0;
    if df.is_infinite() {
        norm_quantile(p)
    } else {
        t_quantile(df, p)
    }
}

/// Cornish-Fisher expansion of the t quantile around the normal quantile.
fn cornish_fisher(z: f64, df: f64) -> f64 {
    let z2 = z * z;
    let g1 = (z2 + 1.0) * z / 4.0;
    let g2 = ((5.0 * z2 + 16.0) * z2 + 3.0) * z / 96.0;
    let g3 = (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) * z / 384.0;
    let g4 = ((((79.0 * z2 + 776.0) * z2 + 1482.0) * z2 - 1920.0) * z2 - 945.0) * z / 92160.0;
    z + g1 / df + g2 / (df * df) + g3 / df.powi(3) + g4 / df.powi(4)
}

fn t_quantile(df: f64, p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -t_quantile(df, 1.0 - p);
    }
    let z = norm_quantile(p);
    if df >= 1e4 {
        return cornish_fisher(z, df);
    }
    if df == 1.0 {
        return (std::f64::consts::PI * (p - 0.5)).tan();
    }
    if df == 2.0 {
        return (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt();
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    let mut x = cornish_fisher(z, df);
    if !(x.is_finite() && x > 0.0) {
        x = z;
    }
    // Safeguarded Newton on the upper tail probability.
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let target = 1.0 - p;
    for _ in 0..100 {
        let tail = dist.sf(x);
        let err = tail - target;
        if err > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if err.abs() <= 1e-15 * target {
            break;
        }
        let step = err / dist.pdf(x);
        let mut next = x + step;
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1.0) };
        }
        if (next - x).abs() <= 1e-14 * x.abs() {
            x = next;
            break;
        }
        x = next;
    }
    x
}
