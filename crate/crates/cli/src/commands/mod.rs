pub mod impute;
pub mod report;
pub mod simulate;
pub mod validate;

use selmi::data::{load_csv, Dataset, DesignSpec, Role, Variable, VariableKind, VariableSchema};
use selmi::imputation::{Method, MethodConfig, TreeOptions};
use selmi::simulation::MethodOptions;
use selmi::stats::RngStream;
use selmi::stepwise::{stepwise_aic, ModelKind, StepTrace};

use crate::config::{DataSection, JobConfig};
use crate::failure::Failure;

/// Configured methods in canonical order, or all of them.
pub fn resolve_methods(cfg: &JobConfig) -> Result<Vec<Method>, Failure> {
    if cfg.methods.names.is_empty() {
        return Ok(Method::ALL.to_vec());
    }
    let mut chosen = Vec::new();
    for name in &cfg.methods.names {
        let m: Method = name.parse().map_err(|e: selmi::Error| Failure::config(e.to_string()))?;
        if !chosen.contains(&m) {
            chosen.push(m);
        }
    }
    Ok(chosen)
}

pub fn method_options(cfg: &JobConfig) -> MethodOptions {
    MethodOptions {
        m: cfg.methods.m,
        donors: cfg.methods.donors,
        trees: cfg.methods.trees,
        tree: TreeOptions {
            min_leaf: cfg.methods.min_leaf,
            ..TreeOptions::default()
        },
    }
}

/// Method configuration drawing from the method's own stream of `seed`, so
/// adding or removing other methods never changes its results.
pub fn method_config(method: Method, seed: u64, opts: &MethodOptions) -> MethodConfig {
    let slot = Method::ALL.iter().position(|&m| m == method).unwrap_or(0) as u64;
    MethodConfig {
        method,
        m: opts.m,
        donors: opts.donors,
        trees: opts.trees,
        tree: opts.tree,
        rng: RngStream::new(seed, slot),
    }
}

pub fn load_dataset(data: &DataSection) -> Result<Dataset, Failure> {
    let mut vars = Vec::new();
    if let Some(id) = &data.id {
        vars.push(Variable::id(id));
    }
    vars.push(Variable::outcome(&data.outcome));
    for name in &data.categorical {
        let role = if data.group_key.as_deref() == Some(name.as_str()) {
            Role::GroupKey
        } else {
            Role::Covariate
        };
        vars.push(Variable {
            name: name.clone(),
            kind: VariableKind::Categorical { levels: None },
            role,
        });
    }
    for name in &data.continuous {
        vars.push(Variable::continuous(name));
    }
    let schema = VariableSchema::new(vars).map_err(|e| Failure::from_error("schema", e))?;
    load_csv(&data.path, &schema).map_err(|e| Failure::from_error(&format!("loading {}", data.path.display()), e))
}

/// Equations from the `[model]` section, running stepwise AIC when asked.
/// Returns the spec and any stepwise traces (outcome, selection).
pub fn resolve_spec(cfg: &JobConfig, ds: &Dataset) -> Result<(DesignSpec, Vec<StepTrace>), Failure> {
    let model = cfg
        .model
        .as_ref()
        .ok_or_else(|| Failure::config("a [model] section is required"))?;
    if !model.stepwise {
        if model.outcome.is_empty() || model.selection.is_empty() {
            return Err(Failure::config("[model] needs `outcome` and `selection` covariate lists"));
        }
        let spec = DesignSpec {
            outcome_covariates: model.outcome.clone(),
            selection_covariates: model.selection.clone(),
            ..DesignSpec::new(&[], &[])
        };
        return Ok((spec, Vec::new()));
    }
    let pick = |a: &Vec<String>, b: &Vec<String>| if a.is_empty() { b.clone() } else { a.clone() };
    let outcome_c = pick(&model.outcome_candidates, &model.outcome);
    let selection_c = pick(&model.selection_candidates, &model.selection);
    if outcome_c.is_empty() || selection_c.is_empty() {
        return Err(Failure::config("stepwise selection needs candidate covariates for both equations"));
    }
    let all = ds.all_rows();
    let out_trace = stepwise_aic(ds, &outcome_c, ModelKind::Linear, &all)
        .map_err(|e| Failure::from_error("stepwise (outcome)", e))?;
    let sel_trace = stepwise_aic(ds, &selection_c, ModelKind::Probit, &all)
        .map_err(|e| Failure::from_error("stepwise (selection)", e))?;
    if out_trace.final_spec.is_empty() || sel_trace.final_spec.is_empty() {
        return Err(Failure::data("stepwise selection kept no covariates in one of the equations"));
    }
    let spec = DesignSpec {
        outcome_covariates: out_trace.final_spec.clone(),
        selection_covariates: sel_trace.final_spec.clone(),
        ..DesignSpec::new(&[], &[])
    };
    log::info!(
        "stepwise: outcome {:?}, selection {:?}",
        spec.outcome_covariates,
        spec.selection_covariates
    );
    Ok((spec, vec![out_trace, sel_trace]))
}
