//! Scalar distribution functions, inverse Mills ratios, seeded random
//! streams and multivariate-normal sampling shared by every estimator.

mod mvn;
mod normal;
mod rng;
mod student_t;

pub use mvn::{mvn_draw, psd_cholesky, MvnSampler};
pub use normal::{
    inverse_mills, mills_delta, norm_cdf, norm_log_cdf, norm_log_pdf, norm_pdf, norm_quantile,
    std_normal,
};
pub use rng::RngStream;
pub use student_t::{quantile, t_critical, Dist};
