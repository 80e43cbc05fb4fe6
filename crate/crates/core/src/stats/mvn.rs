use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Multivariate normal sampler holding a lower-triangular factor of the covariance.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: DVector<f64>,
    factor: Option<DMatrix<f64>>,
}

/// Cholesky factor of a symmetric PSD matrix with escalating diagonal jitter.
///
/// Jitter starts at 1e-12 times the mean absolute diagonal and grows by 10x up
/// to 1e-6 of it. Returns `None` for the all-zero matrix.
pub fn psd_cholesky(cov: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    let k = cov.nrows();
    if cov.ncols() != k {
        return Err(Error::InvalidArgument("covariance must be square".into()));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance".into()));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    if sym.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(Some(ch.l()));
    }
    let scale = sym.diagonal().iter().map(|d| d.abs()).sum::<f64>() / k as f64;
    let mut jitter = 1e-12 * scale;
    while jitter <= 1e-6 * scale * (1.0 + 1e-9) {
        let mut trial = sym.clone();
        for i in 0..k {
            trial[(i, i)] += jitter;
        }
        if let Some(ch) = trial.cholesky() {
            return Ok(Some(ch.l()));
        }
        jitter *= 10.0;
    }
    Err(Error::Indefinite)
}

impl MvnSampler {
    pub fn new(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() {
            return Err(Error::InvalidArgument(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let factor = psd_cholesky(covariance)?;
        Ok(Self { mean, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match &self.factor {
            None => self.mean.clone(),
            Some(l) => {
                let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                &self.mean + l * z
            }
        }
    }
}

/// One draw from N(mean, covariance).
pub fn mvn_draw<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(MvnSampler::new(mean.clone(), covariance)?.draw(rng))
}
