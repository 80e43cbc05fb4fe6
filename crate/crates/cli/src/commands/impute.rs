use serde_json::json;

use selmi::data::{check_common_support, encode_design};
use selmi::imputation::{impute, Method};
use selmi::pooling::{fit_per_imputation, pool_rubin, predict_combine, predict_median_baseline, PredictionWithInterval, ALPHA};
use selmi::stats::t_critical;

use super::{load_dataset, method_config, method_options, resolve_methods, resolve_spec};
use crate::config::JobConfig;
use crate::failure::Failure;
use crate::output::{create_dir, join, num, opt, write_json, write_table};

struct Coefficient {
    term: String,
    estimate: f64,
    se: f64,
    lower: f64,
    upper: f64,
    df: f64,
}

fn estimate_rows(method: Method, preds: &[PredictionWithInterval]) -> Vec<Vec<String>> {
    preds
        .iter()
        .map(|p| {
            let len = p.interval_length();
            vec![
                p.row_id.clone(),
                method.name().to_string(),
                num(p.y_hat),
                opt(p.lower),
                opt(p.upper),
                opt(len),
                opt(len.map(|l| 100.0 * l / p.y_hat)),
            ]
        })
        .collect()
}

/// `impute`: every configured method on the `[data]` CSV.
pub fn run(cfg: &JobConfig) -> Result<String, Failure> {
    let seed = cfg.require_seed("impute")?;
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| Failure::config("`impute` needs a [data] section"))?;
    let methods = resolve_methods(cfg)?;
    let opts = method_options(cfg);
    let ds = load_dataset(data)?;
    let (spec, traces) = resolve_spec(cfg, &ds)?;
    let (ds, dropped) = check_common_support(&ds, &spec).map_err(|e| Failure::from_error("common support", e))?;
    for d in &dropped.dropped {
        log::warn!("dropped row {}: {}", d.row_id, d.reason);
    }
    if ds.n_missing() == 0 {
        return Err(Failure::data("no missing outcomes to impute"));
    }
    let out = cfg.out_dir();
    create_dir(&out)?;

    let mut estimates = Vec::new();
    let mut coefficients = Vec::new();
    for &method in &methods {
        let name = method.name();
        if method == Method::Median {
            let key = data
                .group_key
                .as_deref()
                .ok_or_else(|| Failure::config("the median baseline needs `group_key` in [data]"))?;
            let preds = predict_median_baseline(&ds, key).map_err(|e| Failure::from_error(&format!("{name} prediction"), e))?;
            estimates.extend(estimate_rows(method, &preds));
            continue;
        }
        let mcfg = method_config(method, seed, &opts);
        let imps = impute(&ds, &spec, &mcfg).map_err(|e| Failure::from_error(&format!("{name} imputation"), e))?;
        let fits = fit_per_imputation(&imps, &spec).map_err(|e| Failure::from_error(&format!("{name} analysis"), e))?;
        let coefs: Vec<Coefficient> = if let [fit] = fits.as_slice() {
            let df = fit.residual_df as f64;
            let t = t_critical(df, ALPHA);
            let se = fit.std_errors();
            fit.column_names
                .iter()
                .enumerate()
                .map(|(k, term)| Coefficient {
                    term: term.clone(),
                    estimate: fit.beta[k],
                    se: se[k],
                    lower: fit.beta[k] - t * se[k],
                    upper: fit.beta[k] + t * se[k],
                    df,
                })
                .collect()
        } else {
            let pooled = pool_rubin(&fits).map_err(|e| Failure::from_error(&format!("{name} pooling"), e))?;
            pooled
                .column_names
                .iter()
                .enumerate()
                .map(|(k, term)| {
                    let (lower, upper) = pooled.confidence_interval(k, ALPHA);
                    Coefficient {
                        term: term.clone(),
                        estimate: pooled.theta_hat[k],
                        se: pooled.std_error(k),
                        lower,
                        upper,
                        df: pooled.df[k],
                    }
                })
                .collect()
        };
        coefficients.extend(coefs.into_iter().map(|c| {
            vec![
                name.to_string(),
                c.term,
                num(c.estimate),
                num(c.se),
                num(c.lower),
                num(c.upper),
                num(c.df),
            ]
        }));
        let design = encode_design(&ds, &spec.outcome_covariates, &ds.all_rows())?;
        let targets = design.select_rows(&ds.missing_rows());
        let preds = predict_combine(&imps, &fits, &targets).map_err(|e| Failure::from_error(&format!("{name} prediction"), e))?;
        estimates.extend(estimate_rows(method, &preds));
    }

    write_table(
        &join(&out, "estimates.csv"),
        &["row_id", "method", "y_hat", "pi_lower", "pi_upper", "pi_length", "rel_pi"],
        &estimates,
    )?;
    write_table(
        &join(&out, "coefficients.csv"),
        &["method", "term", "estimate", "se", "ci_lower", "ci_upper", "df"],
        &coefficients,
    )?;
    write_json(
        &join(&out, "run.json"),
        &json!({
            "command": "impute",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "config": cfg,
            "spec": spec,
            "stepwise": traces,
            "methods": methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "rows": ds.n(),
            "missing": ds.n_missing(),
            "dropped": dropped.dropped.iter().map(|d| json!({"row_id": d.row_id, "reason": d.reason})).collect::<Vec<_>>(),
        }),
    )?;
    Ok(format!(
        "impute: {} methods, {} missing rows -> {}",
        methods.len(),
        ds.n_missing(),
        out.display()
    ))
}
