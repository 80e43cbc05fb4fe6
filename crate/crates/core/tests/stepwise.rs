mod common;

use common::{simulate, Dgp};
use selmi::stepwise::{model_aic, stepwise_aic, ModelKind, StepAction};

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn outcome_search_finds_the_true_covariates() {
    let sample = simulate(&Dgp::default(), 3000, 31);
    let all = sample.data.all_rows();
    let trace = stepwise_aic(&sample.data, &names(&["z", "g", "x"]), ModelKind::Linear, &all).unwrap();
    assert!(trace.final_spec.contains(&"x".to_string()));
    assert!(trace.final_spec.contains(&"g".to_string()));
    assert!(trace.final_aic < trace.initial_aic);
    assert!(trace.steps.iter().all(|s| s.aic_after < s.aic_before));
    assert_eq!(trace.steps[0].action, StepAction::Add);
    assert_eq!(trace.steps[0].covariate, "x");
}

#[test]
fn selection_search_keeps_the_exclusion_variable() {
    let sample = simulate(&Dgp::default(), 3000, 32);
    let all = sample.data.all_rows();
    let trace = stepwise_aic(&sample.data, &names(&["x", "g", "z"]), ModelKind::Probit, &all).unwrap();
    assert!(trace.final_spec.contains(&"z".to_string()));
    assert!(trace.final_spec.contains(&"x".to_string()));
}

#[test]
fn reported_aic_matches_a_direct_fit() {
    let sample = simulate(&Dgp::default(), 1000, 33);
    let all = sample.data.all_rows();
    let trace = stepwise_aic(&sample.data, &names(&["x", "g", "z"]), ModelKind::Linear, &all).unwrap();
    let direct = model_aic(&sample.data, &trace.final_spec, ModelKind::Linear, &all).unwrap();
    assert!((direct - trace.final_aic).abs() < 1e-8);
    let empty = model_aic(&sample.data, &[], ModelKind::Linear, &all).unwrap();
    assert!((empty - trace.initial_aic).abs() < 1e-8);
}

#[test]
fn search_is_independent_of_candidate_order() {
    let sample = simulate(&Dgp::default(), 1500, 34);
    let all = sample.data.all_rows();
    let a = stepwise_aic(&sample.data, &names(&["x", "g", "z"]), ModelKind::Linear, &all).unwrap();
    let b = stepwise_aic(&sample.data, &names(&["z", "x", "g"]), ModelKind::Linear, &all).unwrap();
    let mut fa = a.final_spec.clone();
    let mut fb = b.final_spec.clone();
    fa.sort();
    fb.sort();
    assert_eq!(fa, fb);
    assert!((a.final_aic - b.final_aic).abs() < 1e-9);
}
