use serde_json::json;

use selmi::par;
use selmi::simulation::{
    evaluate_predictions, prepare_study, prepare_study_from, run_scenario_in, Mechanism, MetricsReport, PredMetrics,
    ReplicationResult, ScenarioConfig, SelectionRule, Study,
};

use super::{load_dataset, method_options, resolve_methods, resolve_spec};
use crate::config::JobConfig;
use crate::failure::Failure;
use crate::output::{create_dir, join, num, opt, write_json, write_table};

const PARAM_HEADER: [&str; 18] = [
    "scenario", "mechanism", "rho", "sigma2", "seed", "method", "parameter", "truth", "n", "n_failed", "mean",
    "bias", "rbias", "se_m", "se_e", "re_se", "cr", "rmse",
];

const PRED_HEADER: [&str; 15] = [
    "scenario", "mechanism", "rho", "sigma2", "seed", "method", "group", "n_reps", "n_failed", "n_predictions",
    "n_zero_excluded", "re", "rmse", "cr", "pi",
];

fn scenario_cells(cfg: &ScenarioConfig) -> Vec<String> {
    vec![
        cfg.label(),
        cfg.mechanism.to_string(),
        num(cfg.rho),
        num(cfg.sigma2_eps),
        cfg.seed.to_string(),
    ]
}

fn param_rows(cfg: &ScenarioConfig, report: &MetricsReport, keep: &[String]) -> Vec<Vec<String>> {
    report
        .params
        .iter()
        .filter(|p| keep.is_empty() || keep.contains(&p.parameter))
        .map(|p| {
            let mut row = scenario_cells(cfg);
            row.extend([p.method.to_string(), p.parameter.clone(), num(p.truth)]);
            match &p.summary {
                Some(s) => row.extend([
                    s.n.to_string(),
                    p.n_failed.to_string(),
                    num(s.mean),
                    num(s.bias),
                    opt(s.rbias),
                    num(s.se_m),
                    opt(s.se_e),
                    opt(s.re_se),
                    num(s.cr),
                    opt(s.rmse),
                ]),
                None => {
                    row.extend(["0".to_string(), p.n_failed.to_string()]);
                    row.extend(std::iter::repeat(String::new()).take(8));
                }
            }
            row
        })
        .collect()
}

fn pred_rows(cfg: &ScenarioConfig, metrics: &[PredMetrics]) -> Vec<Vec<String>> {
    metrics
        .iter()
        .map(|p| {
            let mut row = scenario_cells(cfg);
            row.extend([
                p.method.to_string(),
                p.group.clone().unwrap_or_default(),
                p.n_reps.to_string(),
                p.n_failed.to_string(),
                p.n_predictions.to_string(),
                p.n_zero_excluded.to_string(),
                opt(p.re),
                opt(p.rmse),
                opt(p.cr),
                opt(p.pi),
            ]);
            row
        })
        .collect()
}

fn raw_rows(cfg: &ScenarioConfig, study: &Study, results: &[ReplicationResult]) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let mut params = Vec::new();
    let mut preds = Vec::new();
    for r in results {
        for run in &r.methods {
            let head = vec![cfg.label(), r.replication.to_string(), run.method.to_string()];
            if let Some(f) = &run.failure {
                let mut row = head.clone();
                row.push(f.clone());
                row.extend(std::iter::repeat(String::new()).take(7));
                params.push(row);
                continue;
            }
            for p in &run.params {
                let mut row = head.clone();
                row.extend([
                    String::new(),
                    p.name.clone(),
                    num(p.estimate),
                    num(p.variance),
                    num(p.lower),
                    num(p.upper),
                    num(p.truth),
                    p.hit.to_string(),
                ]);
                params.push(row);
            }
            for p in &run.predictions {
                let mut row = head.clone();
                row.extend([
                    study.covariates.row_ids()[p.row].clone(),
                    num(p.y_hat),
                    num(p.truth),
                    opt(p.lower),
                    opt(p.upper),
                ]);
                preds.push(row);
            }
        }
    }
    (params, preds)
}

fn base_config(cfg: &JobConfig, seed: u64) -> Result<ScenarioConfig, Failure> {
    let sim = &cfg.simulation;
    let mut base = ScenarioConfig::new(Mechanism::Mar, 1.0);
    base.seed = seed;
    base.replications = sim.replications;
    base.n_rows = sim.n_rows;
    base.c = sim.c;
    base.slope = sim.slope;
    base.methods = resolve_methods(cfg)?;
    base.options = method_options(cfg);
    base.selection_rule = match sim.selection_rule.to_ascii_lowercase().as_str() {
        "latent" => SelectionRule::Latent,
        "probability" => SelectionRule::Probability,
        other => return Err(Failure::config(format!("unknown selection rule `{other}`"))),
    };
    Ok(base)
}

/// Study from the `[data]` CSV (calibration seed) or from the synthetic profile.
fn build_study(cfg: &JobConfig, base: &mut ScenarioConfig) -> Result<Study, Failure> {
    if !cfg.simulation.seed_from_data {
        if let Some(model) = &cfg.model {
            if !model.stepwise {
                base.spec.outcome_covariates = model.outcome.clone();
                base.spec.selection_covariates = model.selection.clone();
            }
        }
        return prepare_study(base).map_err(|e| Failure::from_error("study preparation", e));
    }
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| Failure::config("`seed_from_data` needs a [data] section"))?;
    let ds = load_dataset(data)?;
    let (spec, _) = resolve_spec(cfg, &ds)?;
    base.spec = spec;
    base.n_rows = ds.n();
    if let Some(key) = &data.group_key {
        base.group_key = key.clone();
    }
    prepare_study_from(ds, base).map_err(|e| Failure::from_error("truth calibration", e))
}

/// `simulate`: every mechanism × error variance of the `[simulation]` grid.
pub fn run(cfg: &JobConfig) -> Result<String, Failure> {
    let seed = cfg.require_seed("simulate")?;
    let sim = &cfg.simulation;
    let mechanisms: Vec<Mechanism> = sim
        .mechanisms
        .iter()
        .map(|m| m.parse().map_err(|e: selmi::Error| Failure::config(e.to_string())))
        .collect::<Result<_, _>>()?;
    if mechanisms.is_empty() || sim.sigma2.is_empty() {
        return Err(Failure::config("the simulation grid is empty"));
    }
    let mut base = base_config(cfg, seed)?;
    base.validate().map_err(|e| Failure::from_error("simulation config", e))?;
    let out = cfg.out_dir();
    create_dir(&out)?;
    let threads = cfg.threads.unwrap_or(0);
    let study = build_study(cfg, &mut base)?;

    let (mut params, mut preds, mut raw_params, mut raw_preds) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut scenarios = Vec::new();
    for &mechanism in &mechanisms {
        for &sigma2 in &sim.sigma2 {
            let mut scfg = base.clone();
            scfg.mechanism = mechanism;
            scfg.rho = mechanism.default_rho();
            scfg.sigma2_eps = sigma2;
            log::info!("running {}", scfg.label());
            let output = par::with_threads(threads, || run_scenario_in(&study, &scfg))?
                .map_err(|e| Failure::from_error(&format!("scenario {}", scfg.label()), e))?;
            params.extend(param_rows(&scfg, &output.report, &sim.parameters));
            preds.extend(pred_rows(&scfg, &output.report.predictions));
            if sim.group_metrics {
                preds.extend(pred_rows(&scfg, &evaluate_predictions(&output.results, Some(&study.grouping()))));
            }
            if cfg.keep_raw {
                let (p, q) = raw_rows(&scfg, &study, &output.results);
                raw_params.extend(p);
                raw_preds.extend(q);
            }
            let failures: Vec<_> = output
                .report
                .predictions
                .iter()
                .map(|p| json!({"method": p.method.name(), "failed": p.n_failed}))
                .collect();
            scenarios.push(json!({
                "label": scfg.label(),
                "mechanism": mechanism,
                "rho": scfg.rho,
                "sigma2": sigma2,
                "mean_missing_rate": output.report.mean_missing_rate,
                "failures": failures,
            }));
        }
    }

    write_table(&join(&out, "params_metrics.csv"), &PARAM_HEADER, &params)?;
    write_table(&join(&out, "pred_metrics.csv"), &PRED_HEADER, &preds)?;
    if cfg.keep_raw {
        write_table(
            &join(&out, "raw_params.csv"),
            &["scenario", "replication", "method", "failure", "parameter", "estimate", "variance", "lower", "upper", "truth", "hit"],
            &raw_params,
        )?;
        write_table(
            &join(&out, "raw_predictions.csv"),
            &["scenario", "replication", "method", "row_id", "y_hat", "truth", "lower", "upper"],
            &raw_preds,
        )?;
    }
    write_json(
        &join(&out, "run.json"),
        &json!({
            "command": "simulate",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "config": cfg,
            "scenario_template": base,
            "truth": study.truth,
            "scenarios": scenarios,
        }),
    )?;
    Ok(format!(
        "simulate: {} scenarios x {} replications, {} methods -> {}",
        scenarios.len(),
        base.replications,
        base.methods.len(),
        out.display()
    ))
}
