#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;

use selmi::data::{Column, Dataset, DesignSpec, Variable, VariableSchema};
use selmi::stats::RngStream;

/// Parameters of a small selection-model data-generating process.
///
/// Outcome: y = b0 + b1·x + b2·[g = "b"] + σ ε.
/// Selection: observed iff s0 + s1·x + s2·z + u ≥ 0, corr(ε, u) = ρ.
#[derive(Debug, Clone, Copy)]
pub struct Dgp {
    pub beta: [f64; 3],
    pub beta_s: [f64; 3],
    pub sigma: f64,
    pub rho: f64,
}

impl Default for Dgp {
    fn default() -> Self {
        Self {
            beta: [1.0, 2.0, -0.5],
            beta_s: [0.3, 0.5, 1.0],
            sigma: 1.0,
            rho: -0.6,
        }
    }
}

pub struct Sample {
    pub data: Dataset,
    pub spec: DesignSpec,
    /// Full outcome, including the values later deleted.
    pub y_full: Vec<f64>,
}

pub fn schema() -> VariableSchema {
    VariableSchema::new(vec![
        Variable::outcome("y"),
        Variable::continuous("x"),
        Variable::categorical("g", &["a", "b"]),
        Variable::continuous("z"),
    ])
    .unwrap()
}

pub fn spec() -> DesignSpec {
    DesignSpec::new(&["x", "g"], &["x", "z"])
}

pub fn simulate(dgp: &Dgp, n: usize, seed: u64) -> Sample {
    let mut rng = RngStream::new(seed, 0).rng();
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut y_full = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    let s = (1.0 - dgp.rho * dgp.rho).sqrt();
    for _ in 0..n {
        let xi: f64 = rng.sample(StandardNormal);
        let zi: f64 = rng.sample(StandardNormal);
        let gi = u32::from(rng.random::<f64>() < 0.4);
        let u: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let eps = dgp.rho * u + s * e2;
        let yi = dgp.beta[0] + dgp.beta[1] * xi + dgp.beta[2] * gi as f64 + dgp.sigma * eps;
        let observed = dgp.beta_s[0] + dgp.beta_s[1] * xi + dgp.beta_s[2] * zi + u >= 0.0;
        x.push(xi);
        z.push(zi);
        g.push(gi);
        y_full.push(yi);
        outcome.push(observed.then_some(yi));
    }
    let ids = (0..n).map(|i| format!("r{i}")).collect();
    let columns = vec![
        ("x".to_string(), Column::Continuous(x)),
        (
            "g".to_string(),
            Column::Categorical {
                levels: vec!["a".into(), "b".into()],
                codes: g,
            },
        ),
        ("z".to_string(), Column::Continuous(z)),
    ];
    Sample {
        data: Dataset::from_columns(schema(), ids, columns, outcome).unwrap(),
        spec: spec(),
        y_full,
    }
}
