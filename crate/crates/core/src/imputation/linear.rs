use nalgebra::DVector;
use rand::Rng;
use rand_distr::ChiSquared;

use super::{run_imputations, MethodConfig, OutcomeData, ParameterDraw, SourceFit};
use crate::data::{DesignSpec, Dataset};
use crate::error::{Error, Result};
use crate::imputation::ImputationSet;
use crate::selection::ols::fit_matrix;
use crate::selection::OlsFit;
use crate::stats::mvn_draw;

/// One draw of (β, σ) from the posterior of the normal linear model under the
/// standard noninformative prior.
///
/// σ*² = RSS / χ²(df) and β* ~ N(β̂, σ*² (X'W⁻¹X)⁻¹). For a weighted fit the
/// residual sum of squares and `xtx_inv` are already on the weighted scale,
/// so the Cholesky factor of the weighted covariance drives the draw.
pub fn posterior_draw_linear<R: Rng + ?Sized>(fit: &OlsFit, rng: &mut R) -> Result<(DVector<f64>, f64)> {
    if fit.residual_df == 0 {
        return Err(Error::Degenerate("posterior draw needs positive residual df".into()));
    }
    if fit.rss <= 0.0 {
        return Ok((fit.beta.clone(), 0.0));
    }
    let chi = ChiSquared::new(fit.residual_df as f64)
        .map_err(|e| Error::InvalidArgument(format!("chi-squared draw: {e}")))?;
    let sigma2 = fit.rss / rng.sample(chi);
    let beta = mvn_draw(&fit.beta, &(&fit.xtx_inv * sigma2), rng)?;
    Ok((beta, sigma2.sqrt()))
}

/// Deterministic regression imputation: each missing outcome becomes X_iβ̂
/// from least squares on the observed rows.
pub fn impute_lm_single(ds: &Dataset, spec: &DesignSpec, cfg: &MethodConfig) -> Result<ImputationSet> {
    let d = OutcomeData::new(ds, spec)?;
    let fit = fit_matrix(&d.y_obs, &d.x_obs, &d.design.column_names, None)?;
    let values: Vec<f64> = (&d.x_mis * &fit.beta).iter().copied().collect();
    let draw = ParameterDraw {
        beta: fit.beta.iter().copied().collect(),
        sigma: Some(fit.sigma),
        ..Default::default()
    };
    run_imputations(ds, spec, cfg, SourceFit::Ols(Box::new(fit)), &d.missing_rows, |_, _| {
        Ok((values.clone(), draw.clone()))
    })
}

/// Indices of the `k` entries of ascending `sorted` closest to `target`.
fn nearest_window(sorted: &[f64], target: f64, k: usize) -> (usize, usize) {
    let n = sorted.len();
    let pos = sorted.partition_point(|&v| v < target);
    let (mut lo, mut hi) = (pos, pos);
    while hi - lo < k {
        let take_left = if lo == 0 {
            false
        } else if hi == n {
            true
        } else {
            target - sorted[lo - 1] <= sorted[hi] - target
        };
        if take_left {
            lo -= 1;
        } else {
            hi += 1;
        }
    }
    (lo, hi)
}

/// Predictive mean matching with type-1 matching: donors are ranked by
/// X β̂ while recipients use X β* from a posterior draw; each missing
/// outcome copies the observed value of a donor drawn uniformly from the
/// `donors` closest.
pub fn impute_mi_pmm(ds: &Dataset, spec: &DesignSpec, cfg: &MethodConfig) -> Result<ImputationSet> {
    let d = OutcomeData::new(ds, spec)?;
    if cfg.donors > d.y_obs.len() {
        return Err(Error::InvalidArgument(format!(
            "donor pool of {} exceeds the {} observed rows",
            cfg.donors,
            d.y_obs.len()
        )));
    }
    let fit = fit_matrix(&d.y_obs, &d.x_obs, &d.design.column_names, None)?;
    let donor_means = &d.x_obs * &fit.beta;
    let mut order: Vec<usize> = (0..d.y_obs.len()).collect();
    order.sort_by(|&a, &b| donor_means[a].total_cmp(&donor_means[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| donor_means[i]).collect();
    run_imputations(
        ds,
        spec,
        cfg,
        SourceFit::Ols(Box::new(fit.clone())),
        &d.missing_rows,
        |_, rng| {
            let (beta, sigma) = posterior_draw_linear(&fit, rng)?;
            let recipient_means = &d.x_mis * &beta;
            let values = recipient_means
                .iter()
                .map(|&target| {
                    let (lo, hi) = nearest_window(&sorted, target, cfg.donors);
                    let pick = rng.random_range(lo..hi);
                    d.y_obs[order[pick]]
                })
                .collect();
            let draw = ParameterDraw {
                beta: beta.iter().copied().collect(),
                sigma: Some(sigma),
                ..Default::default()
            };
            Ok((values, draw))
        },
    )
}
