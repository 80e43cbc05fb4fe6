use std::fmt::Write as _;
use std::path::Path;

use crate::config::JobConfig;
use crate::failure::Failure;
use crate::output::{column, join, parse_opt, read_table};

fn cell(v: Option<f64>, scale: f64, digits: usize) -> String {
    match v {
        Some(x) => format!("{:.*}", digits, x * scale),
        None => "-".to_string(),
    }
}

fn table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), Failure> {
    read_table(path)
}

/// `report`: Markdown tables from a `simulate` output directory, one row per
/// scenario and method.
pub fn run(cfg: &JobConfig) -> Result<String, Failure> {
    let dir = cfg.report.input.clone().unwrap_or_else(|| cfg.out_dir());
    let parameter = cfg.report.parameter.clone().unwrap_or_else(|| "LogRevenue".to_string());
    let ppath = join(&dir, "params_metrics.csv");
    let qpath = join(&dir, "pred_metrics.csv");
    let (ph, prows) = table(&ppath)?;
    let (qh, qrows) = table(&qpath)?;

    let mut md = String::new();
    let _ = writeln!(md, "# Simulation report\n");
    let _ = writeln!(md, "## Coefficient `{parameter}`\n");
    let _ = writeln!(
        md,
        "SE and RMSE columns are multiplied by 100; Rbias, RE_SE and CR are percentages.\n"
    );
    let _ = writeln!(md, "| Scenario | Method | Mean | Rbias | SE_m | SE_e | RE_SE | CR | RMSE |");
    let _ = writeln!(md, "|---|---|---:|---:|---:|---:|---:|---:|---:|");
    let pcol = |name: &str| column(&ph, name, &ppath);
    let (c_sc, c_m, c_par) = (pcol("scenario")?, pcol("method")?, pcol("parameter")?);
    let metrics = ["mean", "rbias", "se_m", "se_e", "re_se", "cr", "rmse"].map(|m| pcol(m));
    let metrics: Vec<usize> = metrics.into_iter().collect::<Result<_, _>>()?;
    let scales = [(1.0, 3), (1.0, 2), (100.0, 2), (100.0, 2), (1.0, 2), (1.0, 1), (100.0, 2)];
    let mut n_param = 0;
    for row in prows.iter().filter(|r| r[c_par] == parameter) {
        n_param += 1;
        let _ = write!(md, "| {} | {} |", row[c_sc], row[c_m]);
        for (&c, &(scale, digits)) in metrics.iter().zip(&scales) {
            let _ = write!(md, " {} |", cell(parse_opt(&row[c], &ppath)?, scale, digits));
        }
        md.push('\n');
    }

    let _ = writeln!(md, "\n## Predictions of deleted outcomes\n");
    let _ = writeln!(md, "| Scenario | Method | RE | RMSE | CR | PI |");
    let _ = writeln!(md, "|---|---|---:|---:|---:|---:|");
    let qcol = |name: &str| column(&qh, name, &qpath);
    let (q_sc, q_m, q_g) = (qcol("scenario")?, qcol("method")?, qcol("group")?);
    let qm: Vec<usize> = ["re", "rmse", "cr", "pi"].map(|m| qcol(m)).into_iter().collect::<Result<_, _>>()?;
    let qscales = [(1.0, 2), (1.0, 3), (1.0, 2), (1.0, 3)];
    for row in qrows.iter().filter(|r| r[q_g].is_empty()) {
        let _ = write!(md, "| {} | {} |", row[q_sc], row[q_m]);
        for (&c, &(scale, digits)) in qm.iter().zip(&qscales) {
            let _ = write!(md, " {} |", cell(parse_opt(&row[c], &qpath)?, scale, digits));
        }
        md.push('\n');
    }
    if n_param == 0 {
        log::warn!("no rows for coefficient `{parameter}` in {}", ppath.display());
    }
    let out = join(&dir, "report.md");
    std::fs::write(&out, md).map_err(|e| Failure::io(&out, e))?;
    Ok(format!("report: {n_param} coefficient rows -> {}", out.display()))
}
