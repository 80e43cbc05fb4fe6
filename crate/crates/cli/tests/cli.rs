mod common;

use std::collections::HashMap;

use common::{impute_config, read_table, run, simulate_config, stdout, write_dataset};

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn impute_writes_estimates_for_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let (data, truth) = write_dataset(dir.path(), 600, 1);
    let cfg = impute_config(dir.path(), &data);
    let out = run(&["impute", "--config", path_str(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().count(), 1);
    assert!(stdout(&out).starts_with("impute: 7 methods"));

    let (header, rows) = read_table(&dir.path().join("impute/estimates.csv"));
    assert_eq!(header, ["row_id", "method", "y_hat", "pi_lower", "pi_upper", "pi_length", "rel_pi"]);
    let text = std::fs::read_to_string(&data).unwrap();
    let n_missing = text.lines().skip(1).filter(|l| l.split(',').nth(1) == Some("")).count();
    assert_eq!(rows.len(), 7 * n_missing);
    // The median baseline has no interval; every other method has one.
    for row in &rows {
        assert_eq!(row[1] == "Median", row[3].is_empty(), "{row:?}");
    }
    let ids: HashMap<&str, f64> = truth.iter().map(|(id, y)| (id.as_str(), *y)).collect();
    assert!(rows.iter().all(|r| ids.contains_key(r[0].as_str())));

    let (_, coefs) = read_table(&dir.path().join("impute/coefficients.csv"));
    assert!(coefs.iter().any(|r| r[0] == "MIHml" && r[1] == "x"));
    assert!(!coefs.iter().any(|r| r[0] == "Median"));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("impute/run.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 17);
    assert_eq!(manifest["config"]["data"]["outcome"], "y");
}

#[test]
fn impute_is_reproducible_and_method_flags_filter() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_dataset(dir.path(), 400, 2);
    let cfg = impute_config(dir.path(), &data);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = run(&[
            "impute", "--config", path_str(&cfg), "--out", path_str(out_dir), "--method", "MIPmm", "--method", "Hml",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ea = std::fs::read(a.join("estimates.csv")).unwrap();
    assert_eq!(ea, std::fs::read(b.join("estimates.csv")).unwrap());
    let (_, rows) = read_table(&a.join("estimates.csv"));
    assert!(rows.iter().all(|r| r[1] == "MIPmm" || r[1] == "Hml"));
}

#[test]
fn seed_is_required() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_dataset(dir.path(), 100, 3);
    let cfg = impute_config(dir.path(), &data);
    let text = std::fs::read_to_string(&cfg).unwrap().replace("seed = 17\n", "");
    std::fs::write(&cfg, text).unwrap();
    let out = run(&["impute", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).is_empty());
}

#[test]
fn unknown_config_keys_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\nbogus = true\n").unwrap();
    assert_eq!(run(&["simulate", "--config", path_str(&cfg)]).status.code(), Some(2));
    std::fs::write(&cfg, "seed = 1\n[methods]\nnames = [\"NoSuchMethod\"]\n").unwrap();
    assert_eq!(run(&["simulate", "--config", path_str(&cfg)]).status.code(), Some(2));
}

#[test]
fn unreadable_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_dataset(dir.path(), 100, 4);
    let cfg = impute_config(dir.path(), &data);
    std::fs::write(&data, "id,y,x,g,z\nu1,1.0,abc,a,0.5\n").unwrap();
    assert_eq!(run(&["impute", "--config", path_str(&cfg)]).status.code(), Some(3));
    std::fs::remove_file(&data).unwrap();
    assert_eq!(run(&["impute", "--config", path_str(&cfg)]).status.code(), Some(3));
}

fn write_validate_config(dir: &std::path::Path, estimates: &std::path::Path, reported: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("validate.toml");
    std::fs::write(
        &path,
        format!(
            "out = \"{}\"\n[validate]\nestimates = \"{}\"\nreported = \"{}\"\nkey = \"id\"\nvalue = \"reported\"\n",
            dir.join("validation").display(),
            estimates.display(),
            reported.display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn validate_scores_estimates_against_reported_values() {
    let dir = tempfile::tempdir().unwrap();
    let (data, truth) = write_dataset(dir.path(), 600, 5);
    let cfg = impute_config(dir.path(), &data);
    assert!(run(&["impute", "--config", path_str(&cfg)]).status.success());
    let estimates = dir.path().join("impute/estimates.csv");
    let mut reported = String::from("id,reported\n");
    for (id, y) in &truth {
        reported.push_str(&format!("{id},{y}\n"));
    }
    let reported_path = dir.path().join("reported.csv");
    std::fs::write(&reported_path, reported).unwrap();
    let vcfg = write_validate_config(dir.path(), &estimates, &reported_path);
    let out = run(&["validate", "--config", path_str(&vcfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_table(&dir.path().join("validation/validation.csv"));
    assert_eq!(header[0], "method");
    assert_eq!(rows.len(), 7);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for row in &rows {
        let pearson: f64 = row[col("pearson")].parse().unwrap();
        // The group median ignores x, so only the model-based methods track y closely.
        let floor = if row[0] == "Median" { 0.0 } else { 0.8 };
        assert!(pearson > floor, "{row:?}");
        assert_eq!(row[0] == "Median", row[col("cr")].is_empty());
    }
    let mihml = rows.iter().find(|r| r[0] == "MIHml").unwrap();
    let cr: f64 = mihml[col("cr")].parse().unwrap();
    assert!(cr > 80.0, "MIHml holdout coverage {cr}");
}

#[test]
fn validate_of_exact_estimates_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let estimates = dir.path().join("estimates.csv");
    std::fs::write(
        &estimates,
        "row_id,method,y_hat,pi_lower,pi_upper,pi_length,rel_pi\n\
         a,LM,1.0,0.0,2.0,2.0,200\nb,LM,2.0,1.0,3.0,2.0,100\nc,LM,4.0,3.0,5.0,2.0,50\n",
    )
    .unwrap();
    let reported = dir.path().join("reported.csv");
    std::fs::write(&reported, "id,reported\na,1.0\nb,2.0\nc,4.0\nd,9.0\n").unwrap();
    let vcfg = write_validate_config(dir.path(), &estimates, &reported);
    assert!(run(&["validate", "--config", path_str(&vcfg)]).status.success());
    let (header, rows) = read_table(&dir.path().join("validation/validation.csv"));
    let get = |name: &str| rows[0][header.iter().position(|h| h == name).unwrap()].parse::<f64>().unwrap();
    assert_eq!(get("n"), 3.0);
    assert_eq!(get("re_max"), 0.0);
    assert_eq!(get("rmse"), 0.0);
    assert_eq!(get("cr"), 100.0);
    assert!((get("pearson") - 1.0).abs() < 1e-12);
    assert!((get("spearman") - 1.0).abs() < 1e-12);

    std::fs::write(&reported, "id,reported\nx,1.0\n").unwrap();
    assert_eq!(run(&["validate", "--config", path_str(&vcfg)]).status.code(), Some(3));
}

#[test]
fn simulate_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(dir.path(), "sim.toml");
    let out_dir = dir.path().join("sim");
    let out = run(&["simulate", "--config", path_str(&cfg), "--out", path_str(&out_dir), "--keep-raw"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("simulate: 2 scenarios x 4 replications"));

    let (header, params) = read_table(&out_dir.join("params_metrics.csv"));
    assert_eq!(header.len(), 18);
    // Three methods with coefficients, two scenarios, one reported parameter.
    assert_eq!(params.len(), 3 * 2);
    let (_, preds) = read_table(&out_dir.join("pred_metrics.csv"));
    assert_eq!(preds.len(), 4 * 2);
    assert!(out_dir.join("raw_params.csv").exists());
    assert!(out_dir.join("raw_predictions.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    assert!(manifest["truth"]["beta_star"].is_array());

    let out = run(&["report", "--out", path_str(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let md = std::fs::read_to_string(out_dir.join("report.md")).unwrap();
    assert!(md.contains("| HeavyMNAR/s2=1 | MIHml |"));
    assert!(md.contains("| NonHeckman/s2=1 | Median |"));
}

#[test]
fn simulate_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(dir.path(), "sim.toml");
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    for (d, t) in [(&one, "1"), (&four, "4")] {
        let out = run(&["simulate", "--config", path_str(&cfg), "--out", path_str(d), "--threads", t]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["params_metrics.csv", "pred_metrics.csv"] {
        assert_eq!(std::fs::read(one.join(f)).unwrap(), std::fs::read(four.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn report_without_inputs_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["report", "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}
