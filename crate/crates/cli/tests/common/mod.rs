#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use selmi::data::{read_csv, Dataset, DesignSpec, Variable, VariableSchema};
use selmi::stats::{norm_quantile, RngStream};

pub fn selmi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_selmi"))
}

pub fn run(args: &[&str]) -> Output {
    selmi().args(args).output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    norm_quantile(rng.random_range(1e-12..1.0 - 1e-12))
}

/// Coefficients of the test data-generating process that vary between tests.
#[derive(Debug, Clone, Copy)]
pub struct Dgp {
    pub rho: f64,
    /// Coefficient of the exclusion variable `z` in the selection equation.
    pub z_coef: f64,
}

impl Default for Dgp {
    fn default() -> Self {
        Self { rho: -0.6, z_coef: 1.0 }
    }
}

/// CSV text of a selection-model dataset: outcome `y` on `x` and group `g`;
/// selection on `x` and `z`. Also returns the full outcome per row id.
pub fn dataset_csv(dgp: Dgp, n: usize, seed: u64) -> (String, Vec<(String, f64)>) {
    let mut rng = RngStream::new(seed, 0).rng();
    let mut csv = String::from("id,y,x,g,z\n");
    let mut truth = Vec::with_capacity(n);
    let tail = (1.0 - dgp.rho * dgp.rho).sqrt();
    for i in 0..n {
        let x = normal(&mut rng);
        let z = normal(&mut rng);
        let g = ["a", "b", "c"][rng.random_range(0..3)];
        let u = normal(&mut rng);
        let e = dgp.rho * u + tail * normal(&mut rng);
        let shift = match g {
            "a" => 0.0,
            "b" => 1.0,
            _ => -1.0,
        };
        let y = 5.0 + 2.0 * x + shift + e;
        let observed = 0.2 + 0.5 * x + dgp.z_coef * z + u >= 0.0;
        let id = format!("u{i:05}");
        let yv = if observed { format!("{y}") } else { String::new() };
        let _ = writeln!(csv, "{id},{yv},{x},{g},{z}");
        truth.push((id, y));
    }
    (csv, truth)
}

pub fn write_dataset(dir: &Path, n: usize, seed: u64) -> (PathBuf, Vec<(String, f64)>) {
    let (csv, truth) = dataset_csv(Dgp::default(), n, seed);
    let path = dir.join("data.csv");
    std::fs::write(&path, csv).unwrap();
    (path, truth)
}

/// The same data loaded in memory, with its equations.
pub fn dataset(dgp: Dgp, n: usize, seed: u64) -> (Dataset, DesignSpec) {
    let (csv, _) = dataset_csv(dgp, n, seed);
    let schema = VariableSchema::new(vec![
        Variable::id("id"),
        Variable::outcome("y"),
        Variable::continuous("x"),
        Variable::categorical("g", &["a", "b", "c"]),
        Variable::continuous("z"),
    ])
    .unwrap();
    let ds = read_csv(csv.as_bytes(), &schema).unwrap();
    (ds, DesignSpec::new(&["x", "g"], &["x", "z"]))
}

pub fn impute_config(dir: &Path, data: &Path) -> PathBuf {
    let text = format!(
        r#"seed = 17
out = "{out}"

[data]
path = "{data}"
outcome = "y"
id = "id"
categorical = ["g"]
continuous = ["x", "z"]
group_key = "g"

[model]
outcome = ["x", "g"]
selection = ["x", "z"]
"#,
        out = dir.join("impute").display(),
        data = data.display()
    );
    let path = dir.join("impute.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn simulate_config(dir: &Path, name: &str) -> PathBuf {
    let text = r#"seed = 99

[methods]
names = ["Median", "LM", "MIPmm", "MIHml"]
m = 3

[simulation]
mechanisms = ["HeavyMNAR", "NonHeckman"]
sigma2 = [1.0]
replications = 4
n_rows = 600
parameters = ["LogRevenue"]
"#;
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}
