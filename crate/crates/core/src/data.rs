//! Tabular datasets with an optionally missing outcome, categorical encoding
//! into design matrices, and common-support filtering.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    /// Categorical with declared levels, or `None` to infer them (sorted) on load.
    Categorical { levels: Option<Vec<String>> },
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Outcome,
    Covariate,
    /// A covariate that also defines peer groups (median baseline, grouped metrics).
    GroupKey,
    /// Row identifier column; carried through untouched.
    Id,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VariableKind,
    pub role: Role,
}

impl Variable {
    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Categorical {
                levels: Some(levels.iter().map(|s| s.to_string()).collect()),
            },
            role: Role::Covariate,
        }
    }

    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Continuous,
            role: Role::Covariate,
        }
    }

    pub fn outcome(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Continuous,
            role: Role::Outcome,
        }
    }

    pub fn id(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Continuous,
            role: Role::Id,
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn is_covariate(&self) -> bool {
        matches!(self.role, Role::Covariate | Role::GroupKey)
    }
}

/// Variable roster: exactly one outcome, at most one id column, any number of covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSchema {
    variables: Vec<Variable>,
}

impl VariableSchema {
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for v in &variables {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable `{}`", v.name)));
            }
            if let VariableKind::Categorical { levels: Some(levels) } = &v.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!("`{}` declares no levels", v.name)));
                }
                let unique: BTreeSet<_> = levels.iter().collect();
                if unique.len() != levels.len() {
                    return Err(Error::Schema(format!("`{}` has duplicate levels", v.name)));
                }
            }
        }
        let outcomes = variables.iter().filter(|v| v.role == Role::Outcome).count();
        if outcomes != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one outcome variable, found {outcomes}"
            )));
        }
        if variables.iter().filter(|v| v.role == Role::Id).count() > 1 {
            return Err(Error::Schema("more than one id column".into()));
        }
        Ok(Self { variables })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn get(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn outcome(&self) -> &Variable {
        self.variables
            .iter()
            .find(|v| v.role == Role::Outcome)
            .expect("validated on construction")
    }

    pub fn id(&self) -> Option<&Variable> {
        self.variables.iter().find(|v| v.role == Role::Id)
    }

    pub fn covariates(&self) -> impl Iterator<Item = &Variable> {
        self.variables.iter().filter(|v| v.is_covariate())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Categorical { levels: Vec<String>, codes: Vec<u32> },
    Continuous(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Categorical { codes, .. } => codes.len(),
            Column::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Level label of row `i` for categorical columns.
    pub fn level_of(&self, i: usize) -> Option<&str> {
        match self {
            Column::Categorical { levels, codes } => Some(levels[codes[i] as usize].as_str()),
            Column::Continuous(_) => None,
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Categorical { levels, codes } => Column::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&i| codes[i]).collect(),
            },
            Column::Continuous(v) => Column::Continuous(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// A complete-covariate dataset whose outcome may be missing.
///
/// Covariate columns are shared behind `Arc`, so completed copies produced by
/// imputation only duplicate the outcome vector.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<VariableSchema>,
    row_ids: Arc<Vec<String>>,
    columns: Arc<Vec<(String, Column)>>,
    outcome: Vec<Option<f64>>,
}

impl Dataset {
    /// Builds a dataset from columns. Categorical levels in the schema are
    /// replaced by the columns' level lists.
    pub fn from_columns(
        schema: VariableSchema,
        row_ids: Vec<String>,
        columns: Vec<(String, Column)>,
        outcome: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = outcome.len();
        if row_ids.len() != n {
            return Err(Error::Schema("row id count does not match outcome length".into()));
        }
        let mut variables = schema.variables.clone();
        for var in variables.iter_mut().filter(|v| v.is_covariate()) {
            let col = columns
                .iter()
                .find(|(name, _)| *name == var.name)
                .map(|(_, c)| c)
                .ok_or_else(|| Error::Schema(format!("missing column `{}`", var.name)))?;
            if col.len() != n {
                return Err(Error::Schema(format!("column `{}` has wrong length", var.name)));
            }
            match (&mut var.kind, col) {
                (VariableKind::Categorical { levels }, Column::Categorical { levels: cl, codes }) => {
                    if codes.iter().any(|&c| c as usize >= cl.len()) {
                        return Err(Error::Schema(format!("`{}` has out-of-range codes", var.name)));
                    }
                    *levels = Some(cl.clone());
                }
                (VariableKind::Continuous, Column::Continuous(_)) => {}
                _ => {
                    return Err(Error::Schema(format!(
                        "column `{}` does not match its declared kind",
                        var.name
                    )))
                }
            }
        }
        let ordered: Vec<(String, Column)> = variables
            .iter()
            .filter(|v| v.is_covariate())
            .map(|v| {
                columns
                    .iter()
                    .find(|(name, _)| *name == v.name)
                    .cloned()
                    .expect("checked above")
            })
            .collect();
        if outcome.iter().flatten().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("outcome".into()));
        }
        Ok(Self {
            schema: Arc::new(VariableSchema { variables }),
            row_ids: Arc::new(row_ids),
            columns: Arc::new(ordered),
            outcome,
        })
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn n_observed(&self) -> usize {
        self.outcome.iter().filter(|y| y.is_some()).count()
    }

    pub fn n_missing(&self) -> usize {
        self.n() - self.n_observed()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn outcome(&self) -> &[Option<f64>] {
        &self.outcome
    }

    /// Missingness indicator R: 1 when the outcome is present.
    pub fn indicator(&self) -> Vec<f64> {
        self.outcome
            .iter()
            .map(|y| if y.is_some() { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn observed_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.outcome[i].is_some()).collect()
    }

    pub fn missing_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.outcome[i].is_none()).collect()
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n()).collect()
    }

    /// Observed outcome values, in row order.
    pub fn observed_outcome(&self) -> Vec<f64> {
        self.outcome.iter().flatten().copied().collect()
    }

    pub fn columns(&self) -> &[(String, Column)] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Same covariates, new outcome vector.
    pub fn with_outcome(&self, outcome: Vec<Option<f64>>) -> Result<Self> {
        if outcome.len() != self.n() {
            return Err(Error::InvalidArgument("outcome length mismatch".into()));
        }
        Ok(Self {
            schema: Arc::clone(&self.schema),
            row_ids: Arc::clone(&self.row_ids),
            columns: Arc::clone(&self.columns),
            outcome,
        })
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            schema: Arc::clone(&self.schema),
            row_ids: Arc::new(rows.iter().map(|&i| self.row_ids[i].clone()).collect()),
            columns: Arc::new(
                self.columns
                    .iter()
                    .map(|(n, c)| (n.clone(), c.select(rows)))
                    .collect(),
            ),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
        }
    }

    /// Row indices grouped by the level of a categorical covariate.
    pub fn groups(&self, key: &str) -> Result<BTreeMap<String, Vec<usize>>> {
        let col = self
            .column(key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown group key `{key}`")))?;
        let Column::Categorical { levels, codes } = col else {
            return Err(Error::InvalidArgument(format!("group key `{key}` is not categorical")));
        };
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, &c) in codes.iter().enumerate() {
            out.entry(levels[c as usize].clone()).or_default().push(i);
        }
        Ok(out)
    }
}

fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s == "NA"
}

/// Loads a dataset from a CSV file. See [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>, schema: &VariableSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema)
}

/// Reads a header-first CSV. Columns are matched by header name, extra columns
/// are ignored, a blank or `NA` outcome marks a missing value. Reported row
/// numbers are file line numbers (the header is line 1).
pub fn read_csv<R: Read>(reader: R, schema: &VariableSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedRow {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("header has no column `{name}`")))
    };
    let outcome_var = schema.outcome();
    let outcome_idx = index_of(&outcome_var.name)?;
    let id_idx = match schema.id() {
        Some(v) => Some(index_of(&v.name)?),
        None => None,
    };
    struct Pending {
        name: String,
        idx: usize,
        declared: Option<HashMap<String, u32>>,
        levels: Option<Vec<String>>,
        categorical: bool,
        raw: Vec<String>,
        values: Vec<f64>,
    }
    let mut pending: Vec<Pending> = Vec::new();
    for var in schema.covariates() {
        let idx = index_of(&var.name)?;
        let (categorical, levels) = match &var.kind {
            VariableKind::Categorical { levels } => (true, levels.clone()),
            VariableKind::Continuous => (false, None),
        };
        pending.push(Pending {
            name: var.name.clone(),
            idx,
            declared: levels.as_ref().map(|l| {
                l.iter()
                    .enumerate()
                    .map(|(i, s)| (s.clone(), i as u32))
                    .collect()
            }),
            levels,
            categorical,
            raw: Vec::new(),
            values: Vec::new(),
        });
    }

    let mut row_ids = Vec::new();
    let mut outcome = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| Error::MalformedRow {
            row: line,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::MalformedRow {
                row: line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let y = &record[outcome_idx];
        outcome.push(if is_missing_token(y) {
            None
        } else {
            let v: f64 = y.parse().map_err(|_| Error::NonNumeric {
                row: line,
                column: outcome_var.name.clone(),
                value: y.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    row: line,
                    column: outcome_var.name.clone(),
                    value: y.to_string(),
                });
            }
            Some(v)
        });
        row_ids.push(match id_idx {
            Some(i) => record[i].to_string(),
            None => (k + 1).to_string(),
        });
        for p in pending.iter_mut() {
            let cell = &record[p.idx];
            if cell.is_empty() {
                return Err(Error::MalformedRow {
                    row: line,
                    message: format!("covariate `{}` is empty", p.name),
                });
            }
            if p.categorical {
                if let Some(map) = &p.declared {
                    if !map.contains_key(cell) {
                        return Err(Error::UnknownLevel {
                            row: line,
                            column: p.name.clone(),
                            level: cell.to_string(),
                        });
                    }
                }
                p.raw.push(cell.to_string());
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                    row: line,
                    column: p.name.clone(),
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonNumeric {
                        row: line,
                        column: p.name.clone(),
                        value: cell.to_string(),
                    });
                }
                p.values.push(v);
            }
        }
    }

    let mut columns = Vec::with_capacity(pending.len());
    for p in pending {
        let col = if p.categorical {
            let levels = match p.levels {
                Some(l) => l,
                None => p
                    .raw
                    .iter()
                    .cloned()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            };
            let map: HashMap<&str, u32> = levels
                .iter()
                .enumerate()
                .map(|(i, s)| (s.as_str(), i as u32))
                .collect();
            let codes = p.raw.iter().map(|s| map[s.as_str()]).collect();
            Column::Categorical { levels, codes }
        } else {
            Column::Continuous(p.values)
        };
        columns.push((p.name, col));
    }
    Dataset::from_columns(schema.clone(), row_ids, columns, outcome)
}

/// Writes the dataset in schema order; missing outcomes become empty cells.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::MalformedRow {
        row: 0,
        message: e.to_string(),
    };
    let vars = ds.schema().variables();
    w.write_record(vars.iter().map(|v| v.name.as_str())).map_err(io)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = Vec::with_capacity(vars.len());
        for v in vars {
            rec.push(match v.role {
                Role::Id => ds.row_ids()[i].clone(),
                Role::Outcome => ds.outcome()[i].map(|y| y.to_string()).unwrap_or_default(),
                Role::Covariate | Role::GroupKey => match ds.column(&v.name).expect("schema column") {
                    Column::Categorical { levels, codes } => levels[codes[i] as usize].clone(),
                    Column::Continuous(x) => x[i].to_string(),
                },
            });
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<csv writer>".into(),
        source,
    })
}

/// Covariate lists for the outcome and selection equations. An intercept is
/// always prepended when encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub outcome_covariates: Vec<String>,
    pub selection_covariates: Vec<String>,
    #[serde(default = "default_true")]
    pub include_intercept: bool,
}

fn default_true() -> bool {
    true
}

impl DesignSpec {
    pub fn new(outcome: &[&str], selection: &[&str]) -> Self {
        Self {
            outcome_covariates: outcome.iter().map(|s| s.to_string()).collect(),
            selection_covariates: selection.iter().map(|s| s.to_string()).collect(),
            include_intercept: true,
        }
    }

    /// True when the two equations use different covariate sets.
    pub fn exclusion_restriction_holds(&self) -> bool {
        let a: BTreeSet<_> = self.outcome_covariates.iter().collect();
        let b: BTreeSet<_> = self.selection_covariates.iter().collect();
        a != b
    }

    /// Union of both covariate lists, outcome covariates first.
    pub fn referenced(&self) -> Vec<String> {
        let mut out = self.outcome_covariates.clone();
        for c in &self.selection_covariates {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }
}

/// Contiguous block of design columns produced by one covariate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnBlock {
    pub variable: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub column_names: Vec<String>,
    pub row_ids: Vec<String>,
    /// Source row indices into the dataset.
    pub rows: Vec<usize>,
    pub blocks: Vec<ColumnBlock>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Rows `idx` (positions within this matrix) as a new design matrix.
    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: self.values.select_rows(idx),
            column_names: self.column_names.clone(),
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            blocks: self.blocks.clone(),
        }
    }

    /// Appends an extra named column (e.g. an inverse Mills ratio regressor).
    pub fn with_column(&self, name: &str, values: &[f64]) -> DesignMatrix {
        let k = self.ncols();
        let mut m = self.values.clone().insert_column(k, 0.0);
        for (i, v) in values.iter().enumerate() {
            m[(i, k)] = *v;
        }
        let mut names = self.column_names.clone();
        names.push(name.to_string());
        let mut blocks = self.blocks.clone();
        blocks.push(ColumnBlock {
            variable: name.to_string(),
            start: k,
            len: 1,
        });
        DesignMatrix {
            values: m,
            column_names: names,
            row_ids: self.row_ids.clone(),
            rows: self.rows.clone(),
            blocks,
        }
    }
}

pub const INTERCEPT: &str = "(Intercept)";

/// Encodes covariates on the given rows.
///
/// Intercept first, then each covariate in the given order. A categorical
/// variable contributes one dummy per level present in `rows`, in declared
/// order, dropping the first present level as reference; fewer than two
/// present levels is an error. The result is checked for full column rank.
pub fn encode_design(ds: &Dataset, covariates: &[String], rows: &[usize]) -> Result<DesignMatrix> {
    let n = rows.len();
    let mut names = vec![INTERCEPT.to_string()];
    let mut blocks = Vec::new();
    enum Source<'a> {
        Dummy(&'a [u32], u32),
        Value(&'a [f64]),
    }
    let mut sources: Vec<Source> = Vec::new();
    for cov in covariates {
        let col = ds
            .column(cov)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown covariate `{cov}`")))?;
        let start = names.len();
        match col {
            Column::Categorical { levels, codes } => {
                let mut present = vec![false; levels.len()];
                for &i in rows {
                    present[codes[i] as usize] = true;
                }
                let used: Vec<usize> = (0..levels.len()).filter(|&l| present[l]).collect();
                if used.len() < 2 {
                    return Err(Error::Degenerate(format!(
                        "categorical `{cov}` has {} level(s) on these rows; no contrast to encode",
                        used.len()
                    )));
                }
                for &l in &used[1..] {
                    names.push(format!("{cov}={}", levels[l]));
                    sources.push(Source::Dummy(codes, l as u32));
                }
            }
            Column::Continuous(v) => {
                names.push(cov.clone());
                sources.push(Source::Value(v));
            }
        }
        blocks.push(ColumnBlock {
            variable: cov.clone(),
            start,
            len: names.len() - start,
        });
    }
    let k = names.len();
    let mut values = DMatrix::zeros(n, k);
    for r in 0..n {
        values[(r, 0)] = 1.0;
    }
    for (j, src) in sources.iter().enumerate() {
        let mut col = values.column_mut(j + 1);
        match src {
            Source::Dummy(codes, level) => {
                for (r, &i) in rows.iter().enumerate() {
                    if codes[i] == *level {
                        col[r] = 1.0;
                    }
                }
            }
            Source::Value(v) => {
                for (r, &i) in rows.iter().enumerate() {
                    col[r] = v[i];
                }
            }
        }
    }
    crate::linalg::check_full_rank(&values, &names)?;
    Ok(DesignMatrix {
        values,
        column_names: names,
        row_ids: rows.iter().map(|&i| ds.row_ids()[i].clone()).collect(),
        rows: rows.to_vec(),
        blocks,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedRow {
    pub index: usize,
    pub row_id: String,
    pub reason: String,
}

/// Rows removed by [`check_common_support`], with indices into the input dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DropReport {
    pub dropped: Vec<DroppedRow>,
}

impl DropReport {
    pub fn is_empty(&self) -> bool {
        self.dropped.is_empty()
    }

    pub fn len(&self) -> usize {
        self.dropped.len()
    }
}

/// Drops rows whose level (of any categorical covariate referenced by `spec`)
/// lacks either observed or missing outcomes. Repeats until stable, since a
/// drop for one variable can unbalance a level of another.
pub fn check_common_support(ds: &Dataset, spec: &DesignSpec) -> Result<(Dataset, DropReport)> {
    if ds.n() == 0 {
        return Err(Error::Degenerate("dataset is empty".into()));
    }
    let cats: Vec<(&String, &Vec<String>, &Vec<u32>)> = spec
        .referenced()
        .into_iter()
        .filter_map(|name| {
            ds.columns().iter().find(|(n, _)| *n == name).and_then(|(n, c)| match c {
                Column::Categorical { levels, codes } => Some((n, levels, codes)),
                Column::Continuous(_) => None,
            })
        })
        .collect();
    let mut alive = vec![true; ds.n()];
    let mut report = DropReport::default();
    loop {
        let mut changed = false;
        for (name, levels, codes) in &cats {
            let mut obs = vec![0usize; levels.len()];
            let mut mis = vec![0usize; levels.len()];
            for i in (0..ds.n()).filter(|&i| alive[i]) {
                if ds.outcome()[i].is_some() {
                    obs[codes[i] as usize] += 1;
                } else {
                    mis[codes[i] as usize] += 1;
                }
            }
            for i in 0..ds.n() {
                if !alive[i] {
                    continue;
                }
                let l = codes[i] as usize;
                if obs[l] == 0 || mis[l] == 0 {
                    alive[i] = false;
                    changed = true;
                    let what = if obs[l] == 0 { "observed" } else { "missing" };
                    report.dropped.push(DroppedRow {
                        index: i,
                        row_id: ds.row_ids()[i].clone(),
                        reason: format!("{name}={} has no {what} outcomes", levels[l]),
                    });
                }
            }
        }
        if !changed {
            break;
        }
    }
    let keep: Vec<usize> = (0..ds.n()).filter(|&i| alive[i]).collect();
    if keep.is_empty() {
        return Err(Error::Degenerate("common-support filtering removed every row".into()));
    }
    report.dropped.sort_by_key(|d| d.index);
    Ok((ds.select_rows(&keep), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> VariableSchema {
        VariableSchema::new(vec![
            Variable::id("id"),
            Variable::categorical("Region", &["EU", "NA", "AS"]),
            Variable::continuous("LogRevenue"),
            Variable::outcome("scope1"),
        ])
        .unwrap()
    }

    #[test]
    fn load_counts_missing() {
        let csv = "id,Region,LogRevenue,scope1\na,EU,20.1,3.5\nb,NA,21.0,\nc,AS,19.5,NA\n";
        let ds = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.n_missing(), 2);
        assert_eq!(ds.n_observed(), 1);
        assert_eq!(ds.indicator(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn three_rows_one_blank() {
        let csv = "id,Region,LogRevenue,scope1\na,EU,20.1,3.5\nb,NA,21.0,\nc,AS,19.5,4\n";
        let ds = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!((ds.n(), ds.n_missing(), ds.n_observed()), (3, 1, 2));
    }

    #[test]
    fn unknown_level_names_row_and_column() {
        let csv = "id,Region,LogRevenue,scope1\na,EU,20.1,3.5\nb,XX,21.0,\n";
        let err = read_csv(csv.as_bytes(), &schema()).unwrap_err();
        match err {
            Error::UnknownLevel { row, column, level } => {
                assert_eq!((row, column.as_str(), level.as_str()), (3, "Region", "XX"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn garbage_outcome_is_an_error_not_missing() {
        let csv = "id,Region,LogRevenue,scope1\na,EU,20.1,abc\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &schema()),
            Err(Error::NonNumeric { row: 2, .. })
        ));
        let csv = "id,Region,LogRevenue,scope1\na,EU,twenty,1\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &schema()),
            Err(Error::NonNumeric { .. })
        ));
    }

    #[test]
    fn ragged_row_is_malformed() {
        let csv = "id,Region,LogRevenue,scope1\na,EU,20.1\n";
        assert!(read_csv(csv.as_bytes(), &schema()).is_err());
    }

    #[test]
    fn column_order_is_free_and_levels_can_be_inferred() {
        let schema = VariableSchema::new(vec![
            Variable {
                name: "Sector".into(),
                kind: VariableKind::Categorical { levels: None },
                role: Role::GroupKey,
            },
            Variable::outcome("y"),
        ])
        .unwrap();
        let csv = "y,Sector\n1,b\n2,a\n,b\n";
        let ds = read_csv(csv.as_bytes(), &schema).unwrap();
        match ds.column("Sector").unwrap() {
            Column::Categorical { levels, codes } => {
                assert_eq!(levels, &vec!["a".to_string(), "b".to_string()]);
                assert_eq!(codes, &vec![1, 0, 1]);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn schema_validation() {
        assert!(VariableSchema::new(vec![Variable::continuous("x")]).is_err());
        assert!(VariableSchema::new(vec![
            Variable::outcome("y"),
            Variable::categorical("c", &["a", "a"])
        ])
        .is_err());
        assert!(VariableSchema::new(vec![Variable::outcome("y"), Variable::categorical("c", &[])]).is_err());
    }

    fn toy() -> Dataset {
        let schema = VariableSchema::new(vec![
            Variable::categorical("Sector", &["A", "B", "Z"]),
            Variable::continuous("x"),
            Variable::outcome("y"),
        ])
        .unwrap();
        Dataset::from_columns(
            schema,
            (1..=7).map(|i| i.to_string()).collect(),
            vec![
                (
                    "Sector".into(),
                    Column::Categorical {
                        levels: vec!["A".into(), "B".into(), "Z".into()],
                        codes: vec![0, 0, 1, 1, 2, 2, 0],
                    },
                ),
                ("x".into(), Column::Continuous(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.5])),
            ],
            vec![Some(1.0), None, Some(2.0), None, Some(3.0), Some(4.0), Some(1.5)],
        )
        .unwrap()
    }

    #[test]
    fn common_support_drops_unbalanced_level() {
        let ds = toy();
        let spec = DesignSpec::new(&["Sector", "x"], &["Sector"]);
        let (kept, report) = check_common_support(&ds, &spec).unwrap();
        assert_eq!(kept.n(), 5);
        let idx: Vec<usize> = report.dropped.iter().map(|d| d.index).collect();
        assert_eq!(idx, vec![4, 5]);
        assert!(report.dropped[0].reason.contains("Sector=Z"));
        // Idempotent.
        let (again, r2) = check_common_support(&kept, &spec).unwrap();
        assert!(r2.is_empty());
        assert_eq!(again.n(), kept.n());
    }

    #[test]
    fn common_support_ignores_unreferenced_covariates() {
        let ds = toy();
        let spec = DesignSpec::new(&["x"], &["x"]);
        let (kept, report) = check_common_support(&ds, &spec).unwrap();
        assert!(report.is_empty());
        assert_eq!(kept.n(), ds.n());
    }

    #[test]
    fn common_support_all_dropped_is_error() {
        let ds = toy();
        let all_obs = ds.with_outcome(vec![Some(1.0); 7]).unwrap();
        let spec = DesignSpec::new(&["Sector"], &["Sector"]);
        assert!(matches!(
            check_common_support(&all_obs, &spec),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn encode_column_count() {
        let ds = toy();
        let dm = encode_design(&ds, &["Sector".into(), "x".into()], &ds.all_rows()).unwrap();
        assert_eq!(dm.ncols(), 4);
        assert_eq!(dm.column_names, vec!["(Intercept)", "Sector=B", "Sector=Z", "x"]);
        assert_eq!(dm.blocks[0], ColumnBlock { variable: "Sector".into(), start: 1, len: 2 });
        assert_eq!(dm.values[(2, 1)], 1.0);
        assert_eq!(dm.values[(4, 2)], 1.0);
    }

    #[test]
    fn encode_detects_collinearity() {
        let schema = VariableSchema::new(vec![
            Variable::continuous("a"),
            Variable::continuous("b"),
            Variable::outcome("y"),
        ])
        .unwrap();
        let v = vec![1.0, 2.0, 4.0, 3.0];
        let ds = Dataset::from_columns(
            schema,
            (0..4).map(|i| i.to_string()).collect(),
            vec![("a".into(), Column::Continuous(v.clone())), ("b".into(), Column::Continuous(v))],
            vec![Some(1.0); 4],
        )
        .unwrap();
        match encode_design(&ds, &["a".into(), "b".into()], &ds.all_rows()) {
            Err(Error::RankDeficient { columns }) => {
                assert!(columns.contains(&"a".to_string()) && columns.contains(&"b".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_level_categorical_has_no_contrast() {
        let ds = toy();
        let rows = vec![0, 1, 6];
        assert!(matches!(
            encode_design(&ds, &["Sector".into()], &rows),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let csv = "id,Region,LogRevenue,scope1\na,EU,20.1,3.5\nb,NA,21.25,\nc,AS,19.5,4\n";
        let ds = read_csv(csv.as_bytes(), &schema()).unwrap();
        let mut out = Vec::new();
        write_csv(&ds, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }
}
