use std::collections::HashMap;

use serde_json::json;

use crate::config::JobConfig;
use crate::failure::Failure;
use crate::output::{column, create_dir, join, num, opt, parse_opt, read_table, write_json, write_table};

/// Pearson correlation; `None` when either side is constant or n < 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Ranks starting at 1 with ties given their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

struct Joined {
    y_hat: f64,
    truth: f64,
    interval: Option<(f64, f64)>,
}

/// `validate`: joins `estimates.csv` with later-reported values and scores
/// each method.
pub fn run(cfg: &JobConfig) -> Result<String, Failure> {
    let v = cfg
        .validate
        .as_ref()
        .ok_or_else(|| Failure::config("`validate` needs a [validate] section"))?;
    let (eh, erows) = read_table(&v.estimates)?;
    let (rh, rrows) = read_table(&v.reported)?;
    let (e_id, e_method, e_hat, e_lo, e_hi) = (
        column(&eh, "row_id", &v.estimates)?,
        column(&eh, "method", &v.estimates)?,
        column(&eh, "y_hat", &v.estimates)?,
        column(&eh, "pi_lower", &v.estimates)?,
        column(&eh, "pi_upper", &v.estimates)?,
    );
    let (r_key, r_val) = (column(&rh, &v.key, &v.reported)?, column(&rh, &v.value, &v.reported)?);
    let mut reported = HashMap::new();
    for row in &rrows {
        if let Some(y) = parse_opt(&row[r_val], &v.reported)? {
            reported.insert(row[r_key].clone(), y);
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_method: HashMap<String, Vec<Joined>> = HashMap::new();
    for row in &erows {
        let Some(&truth) = reported.get(&row[e_id]) else {
            continue;
        };
        let y_hat = parse_opt(&row[e_hat], &v.estimates)?
            .ok_or_else(|| Failure::data(format!("{}: empty y_hat", v.estimates.display())))?;
        let interval = match (parse_opt(&row[e_lo], &v.estimates)?, parse_opt(&row[e_hi], &v.estimates)?) {
            (Some(l), Some(u)) => Some((l, u)),
            _ => None,
        };
        let method = row[e_method].clone();
        if !by_method.contains_key(&method) {
            order.push(method.clone());
        }
        by_method.entry(method).or_default().push(Joined { y_hat, truth, interval });
    }
    if order.is_empty() {
        return Err(Failure::data("no estimate matches a reported value"));
    }

    let mut rows = Vec::new();
    for method in &order {
        let js = &by_method[method];
        let n = js.len() as f64;
        let hat: Vec<f64> = js.iter().map(|j| j.y_hat).collect();
        let truth: Vec<f64> = js.iter().map(|j| j.truth).collect();
        let intervals: Option<Vec<(f64, f64)>> = js.iter().map(|j| j.interval).collect();
        let (cr, pi) = match &intervals {
            Some(iv) => {
                let hits = iv.iter().zip(&truth).filter(|((l, u), y)| l <= *y && *y <= u).count();
                (
                    Some(hits as f64 / n * 100.0),
                    Some(iv.iter().map(|(l, u)| u - l).sum::<f64>() / n),
                )
            }
            None => (None, None),
        };
        let re: Vec<f64> = js
            .iter()
            .filter(|j| j.truth != 0.0)
            .map(|j| (j.y_hat - j.truth).abs() / j.truth.abs() * 100.0)
            .collect();
        let re_min = re.iter().copied().reduce(f64::min);
        let re_max = re.iter().copied().reduce(f64::max);
        let re_mean = (!re.is_empty()).then(|| re.iter().sum::<f64>() / re.len() as f64);
        let rmse = (js.iter().map(|j| (j.y_hat - j.truth).powi(2)).sum::<f64>() / n).sqrt();
        rows.push(vec![
            method.clone(),
            js.len().to_string(),
            opt(cr),
            opt(pi),
            opt(re_min),
            opt(re_mean),
            opt(re_max),
            num(rmse),
            opt(pearson(&hat, &truth)),
            opt(spearman(&hat, &truth)),
        ]);
    }
    let out = cfg.out_dir();
    create_dir(&out)?;
    write_table(
        &join(&out, "validation.csv"),
        &["method", "n", "cr", "pi", "re_min", "re_mean", "re_max", "rmse", "pearson", "spearman"],
        &rows,
    )?;
    write_json(
        &join(&out, "run.json"),
        &json!({
            "command": "validate",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.seed,
            "config": cfg,
        }),
    )?;
    Ok(format!(
        "validate: {} methods, {} matched rows -> {}",
        order.len(),
        by_method[&order[0]].len(),
        out.display()
    ))
}
