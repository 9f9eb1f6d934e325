//! Cross-fitted nuisance models.
//!
//! The mediator model ĝ(m | t, x) is a multinomial logit of the mediator on
//! treatment and confounder dummies; the outcome model f̂(y | m, t, x) is a
//! logit of the outcome on mediator dummies, treatment, their interaction and
//! confounder dummies. Both are fitted on grouped cell counts and then
//! materialized as finite tables over the whole (m, t, x) grid, one table per
//! fold: the table for fold k is trained on every other fold and scores the
//! units of fold k.

mod dataset;
pub mod irls;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use dataset::Dataset;
pub use irls::{fit_multinomial, IrlsError, IrlsFit, IrlsOptions};

use crate::error::{Error, Result};
use crate::measure::RecordSchema;
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossFitPlan {
    n_folds: usize,
    assignment: BTreeMap<String, usize>,
}

impl CrossFitPlan {
    pub fn from_assignment(assignment: BTreeMap<String, usize>, n_folds: usize) -> Result<Self> {
        if n_folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {n_folds}")));
        }
        if let Some((id, f)) = assignment.iter().find(|(_, f)| **f >= n_folds) {
            return Err(Error::Data(format!("unit `{id}` assigned to fold {f} of {n_folds}")));
        }
        Ok(Self { n_folds, assignment })
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn fold_of(&self, unit_id: &str) -> Option<usize> {
        self.assignment.get(unit_id).copied()
    }

    pub fn test_set(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn train_set(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, f)| **f != fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// Balanced seeded partition of `unit_ids` into `n_folds` test sets. The ids
/// are sorted before shuffling, so the plan depends on the id set, not its order.
pub fn make_plan(unit_ids: &[String], n_folds: usize, seed: u64) -> Result<CrossFitPlan> {
    if n_folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {n_folds}")));
    }
    let mut ids: Vec<&String> = unit_ids.iter().collect();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Data("duplicate unit ids in cross-fit plan".into()));
    }
    if ids.len() < n_folds {
        return Err(Error::Data(format!("{} units cannot fill {n_folds} folds", ids.len())));
    }
    ids.shuffle(&mut seeded(seed));
    let assignment = ids.into_iter().enumerate().map(|(i, id)| (id.clone(), i % n_folds)).collect();
    CrossFitPlan::from_assignment(assignment, n_folds)
}

/// The plan used throughout the toolkit for a given root seed.
pub fn fold_plan(unit_ids: &[String], n_folds: usize, root_seed: u64) -> Result<CrossFitPlan> {
    make_plan(unit_ids, n_folds, derive_seed(root_seed, "folds"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmOptions {
    pub irls: IrlsOptions,
    /// Laplace pseudo-count for table cells with no training observations.
    pub pseudo_count: f64,
    /// Include the treatment x mediator interaction in the outcome model.
    pub interaction: bool,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            irls: IrlsOptions::default(),
            pseudo_count: 0.5,
            interaction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub fold: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub n_train: usize,
}

/// A table cell that had no training observations and was Laplace-smoothed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothedCell {
    pub model: String,
    pub fold: usize,
    pub m: Option<usize>,
    pub t: u8,
    pub x: usize,
}

/// ĝ: per-fold tables of P(M = m | T = t, X = x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedMediatorModel {
    pub mediator: String,
    pub n_levels: usize,
    pub n_x: usize,
    tables: Vec<Vec<Option<f64>>>,
    pub diagnostics: Vec<FitDiagnostics>,
    pub smoothed: Vec<SmoothedCell>,
}

impl FittedMediatorModel {
    /// An all-missing table set, to be filled with [`Self::set`].
    pub fn empty(mediator: impl Into<String>, n_levels: usize, n_x: usize, n_folds: usize) -> Self {
        Self {
            mediator: mediator.into(),
            n_levels,
            n_x,
            tables: vec![vec![None; 2 * n_x * n_levels]; n_folds],
            diagnostics: Vec::new(),
            smoothed: Vec::new(),
        }
    }

    fn idx(&self, m: usize, t: u8, x: usize) -> usize {
        ((usize::from(t) * self.n_x) + x) * self.n_levels + m
    }

    pub fn set(&mut self, fold: usize, m: usize, t: u8, x: usize, value: f64) {
        let i = self.idx(m, t, x);
        self.tables[fold][i] = Some(value);
    }

    pub fn n_folds(&self) -> usize {
        self.tables.len()
    }

    pub fn prob(&self, fold: usize, m: usize, t: u8, x: usize) -> Result<f64> {
        let missing = || Error::MissingCell {
            model: format!("mediator model `{}`", self.mediator),
            fold,
            m,
            t,
            x,
        };
        if m >= self.n_levels || x >= self.n_x || t > 1 {
            return Err(missing());
        }
        self.tables
            .get(fold)
            .and_then(|tab| tab[self.idx(m, t, x)])
            .ok_or_else(missing)
    }
}

/// f̂: per-fold tables of E[Y | M = m, T = t, X = x].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedOutcomeModel {
    pub mediator: String,
    pub n_levels: usize,
    pub n_x: usize,
    tables: Vec<Vec<Option<f64>>>,
    pub diagnostics: Vec<FitDiagnostics>,
    pub smoothed: Vec<SmoothedCell>,
}

impl FittedOutcomeModel {
    pub fn empty(mediator: impl Into<String>, n_levels: usize, n_x: usize, n_folds: usize) -> Self {
        Self {
            mediator: mediator.into(),
            n_levels,
            n_x,
            tables: vec![vec![None; 2 * n_x * n_levels]; n_folds],
            diagnostics: Vec::new(),
            smoothed: Vec::new(),
        }
    }

    fn idx(&self, m: usize, t: u8, x: usize) -> usize {
        ((m * 2) + usize::from(t)) * self.n_x + x
    }

    pub fn set(&mut self, fold: usize, m: usize, t: u8, x: usize, value: f64) {
        let i = self.idx(m, t, x);
        self.tables[fold][i] = Some(value);
    }

    pub fn n_folds(&self) -> usize {
        self.tables.len()
    }

    pub fn expected(&self, fold: usize, m: usize, t: u8, x: usize) -> Result<f64> {
        let missing = || Error::MissingCell {
            model: format!("outcome model `{}`", self.mediator),
            fold,
            m,
            t,
            x,
        };
        if m >= self.n_levels || x >= self.n_x || t > 1 {
            return Err(missing());
        }
        self.tables
            .get(fold)
            .and_then(|tab| tab[self.idx(m, t, x)])
            .ok_or_else(missing)
    }
}

/// Confounder dummy columns (reference level 0 dropped) for a flat grid index.
fn confounder_dummies(schema: &RecordSchema, x: usize, out: &mut Vec<f64>) {
    for (c, level) in schema.confounders.iter().zip(Dataset::decode_x(schema, x)) {
        for l in 1..c.levels.len() {
            out.push(f64::from(u8::from(level == l)));
        }
    }
}

fn mediator_design(schema: &RecordSchema, t: u8, x: usize) -> Vec<f64> {
    let mut row = vec![1.0, f64::from(t)];
    confounder_dummies(schema, x, &mut row);
    row
}

fn outcome_design(schema: &RecordSchema, n_levels: usize, m: usize, t: u8, x: usize, interaction: bool) -> Vec<f64> {
    let mut row = vec![1.0, f64::from(t)];
    for l in 1..n_levels {
        row.push(f64::from(u8::from(m == l)));
    }
    if interaction {
        for l in 1..n_levels {
            row.push(f64::from(u8::from(m == l)) * f64::from(t));
        }
    }
    confounder_dummies(schema, x, &mut row);
    row
}

fn irls_error(err: IrlsError, model: &str, fold: usize) -> Error {
    match err {
        IrlsError::NotConverged { iterations, max_change } => Error::NonConvergence {
            model: model.to_string(),
            fold,
            iterations,
            max_change,
        },
        IrlsError::Singular => Error::Singular(format!("{model} (fold {fold})")),
        IrlsError::BadInput(msg) => Error::Data(format!("{model} (fold {fold}): {msg}")),
    }
}

pub fn fit_mediator_model(data: &Dataset, mediator: &str, opts: &GlmOptions) -> Result<FittedMediatorModel> {
    let j = data.mediator_index(mediator)?;
    let schema = data.schema();
    let n_levels = schema.mediators[j].levels.len();
    let n_x = data.n_x();
    let n_folds = data.n_folds();
    let label = format!("mediator:{mediator}");

    // counts[fold][(t * n_x + x) * L + m]
    let mut counts = vec![vec![0.0f64; 2 * n_x * n_levels]; n_folds];
    for i in 0..data.len() {
        let cell = (usize::from(data.t[i]) * n_x + data.x[i]) * n_levels + data.m[j][i];
        counts[data.fold[i]][cell] += 1.0;
    }
    let total: Vec<f64> = (0..counts[0].len()).map(|c| counts.iter().map(|f| f[c]).sum()).collect();

    let mut model = FittedMediatorModel::empty(mediator, n_levels, n_x, n_folds);
    for fold in 0..n_folds {
        let train: Vec<f64> = total.iter().zip(&counts[fold]).map(|(a, b)| a - b).collect();
        let mut design = Vec::new();
        let mut ys = Vec::new();
        for t in 0..2u8 {
            for x in 0..n_x {
                let base = (usize::from(t) * n_x + x) * n_levels;
                let y = train[base..base + n_levels].to_vec();
                if y.iter().sum::<f64>() > 0.0 {
                    design.push(mediator_design(schema, t, x));
                    ys.push(y);
                }
            }
        }
        let n_train = ys.iter().flatten().sum::<f64>() as usize;
        if design.is_empty() {
            return Err(Error::Data(format!("{label}: fold {fold} has no training units")));
        }
        let fit = fit_multinomial(&design, &ys, &opts.irls).map_err(|e| irls_error(e, &label, fold))?;
        model.diagnostics.push(FitDiagnostics {
            fold,
            log_likelihood: fit.log_likelihood,
            iterations: fit.iterations,
            n_train,
        });
        for t in 0..2u8 {
            for x in 0..n_x {
                let base = (usize::from(t) * n_x + x) * n_levels;
                let cell_n: f64 = train[base..base + n_levels].iter().sum();
                let probs = if cell_n > 0.0 {
                    irls::predict(&fit.coef, &mediator_design(schema, t, x), n_levels)
                } else {
                    log::info!("{label}: smoothing empty cell t={t} x={x} in fold {fold}");
                    model.smoothed.push(SmoothedCell {
                        model: label.clone(),
                        fold,
                        m: None,
                        t,
                        x,
                    });
                    let a = opts.pseudo_count;
                    vec![a / (a * n_levels as f64); n_levels]
                };
                for (m, p) in probs.into_iter().enumerate() {
                    model.set(fold, m, t, x, p);
                }
            }
        }
    }
    Ok(model)
}

pub fn fit_outcome_model(data: &Dataset, mediator: &str, opts: &GlmOptions) -> Result<FittedOutcomeModel> {
    let j = data.mediator_index(mediator)?;
    let schema = data.schema();
    let n_levels = schema.mediators[j].levels.len();
    let n_x = data.n_x();
    let n_folds = data.n_folds();
    let label = format!("outcome:{mediator}");
    let cell_of = |m: usize, t: u8, x: usize| ((m * 2) + usize::from(t)) * n_x + x;

    // counts[fold][cell] = [n(y=0), n(y=1)]
    let n_cells = 2 * n_x * n_levels;
    let mut counts = vec![vec![[0.0f64; 2]; n_cells]; n_folds];
    for i in 0..data.len() {
        let cell = cell_of(data.m[j][i], data.t[i], data.x[i]);
        counts[data.fold[i]][cell][usize::from(data.y[i])] += 1.0;
    }
    let total: Vec<[f64; 2]> = (0..n_cells)
        .map(|c| counts.iter().fold([0.0, 0.0], |acc, f| [acc[0] + f[c][0], acc[1] + f[c][1]]))
        .collect();

    let mut model = FittedOutcomeModel::empty(mediator, n_levels, n_x, n_folds);
    for fold in 0..n_folds {
        let train: Vec<[f64; 2]> = total
            .iter()
            .zip(&counts[fold])
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
            .collect();
        let mut design = Vec::new();
        let mut ys = Vec::new();
        for m in 0..n_levels {
            for t in 0..2u8 {
                for x in 0..n_x {
                    let c = train[cell_of(m, t, x)];
                    if c[0] + c[1] > 0.0 {
                        design.push(outcome_design(schema, n_levels, m, t, x, opts.interaction));
                        ys.push(c.to_vec());
                    }
                }
            }
        }
        if design.is_empty() {
            return Err(Error::Data(format!("{label}: fold {fold} has no training units")));
        }
        let n_train = ys.iter().flatten().sum::<f64>() as usize;
        let fit = fit_multinomial(&design, &ys, &opts.irls).map_err(|e| irls_error(e, &label, fold))?;
        model.diagnostics.push(FitDiagnostics {
            fold,
            log_likelihood: fit.log_likelihood,
            iterations: fit.iterations,
            n_train,
        });
        for m in 0..n_levels {
            for t in 0..2u8 {
                for x in 0..n_x {
                    let c = train[cell_of(m, t, x)];
                    let value = if c[0] + c[1] > 0.0 {
                        irls::predict(&fit.coef, &outcome_design(schema, n_levels, m, t, x, opts.interaction), 2)[1]
                    } else {
                        log::info!("{label}: smoothing empty cell m={m} t={t} x={x} in fold {fold}");
                        model.smoothed.push(SmoothedCell {
                            model: label.clone(),
                            fold,
                            m: Some(m),
                            t,
                            x,
                        });
                        let a = opts.pseudo_count;
                        a / (2.0 * a)
                    };
                    model.set(fold, m, t, x, value);
                }
            }
        }
    }
    Ok(model)
}

fn table_header(schema: &RecordSchema) -> Vec<String> {
    let mut header = vec!["fold".to_string(), "mediator".into(), "m".into(), "t".into()];
    header.extend(schema.confounders.iter().map(|c| c.name.clone()));
    header.push("value".into());
    header
}

fn table_row(schema: &RecordSchema, fold: usize, mediator: &str, m: usize, t: u8, x: usize, value: f64) -> Vec<String> {
    let var = schema.mediator(mediator).expect("mediator in schema");
    let mut row = vec![fold.to_string(), mediator.to_string(), var.levels[m].clone(), t.to_string()];
    for (c, level) in schema.confounders.iter().zip(Dataset::decode_x(schema, x)) {
        row.push(c.levels[level].clone());
    }
    row.push(value.to_string());
    row
}

/// CSV audit export of ĝ tables; one row per (fold, m, t, x).
pub fn write_mediator_tables<W: Write>(models: &[FittedMediatorModel], schema: &RecordSchema, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(table_header(schema))?;
    for model in models {
        for fold in 0..model.n_folds() {
            for m in 0..model.n_levels {
                for t in 0..2u8 {
                    for x in 0..model.n_x {
                        let v = model.prob(fold, m, t, x)?;
                        w.write_record(table_row(schema, fold, &model.mediator, m, t, x, v))?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// CSV audit export of f̂ tables; one row per (fold, m, t, x).
pub fn write_outcome_tables<W: Write>(models: &[FittedOutcomeModel], schema: &RecordSchema, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(table_header(schema))?;
    for model in models {
        for fold in 0..model.n_folds() {
            for m in 0..model.n_levels {
                for t in 0..2u8 {
                    for x in 0..model.n_x {
                        let v = model.expected(fold, m, t, x)?;
                        w.write_record(table_row(schema, fold, &model.mediator, m, t, x, v))?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Levels of T and of every confounder that occur in the training part of each fold.
pub(crate) fn training_levels(data: &Dataset) -> Vec<(BTreeSet<u8>, Vec<BTreeSet<usize>>)> {
    let schema = data.schema();
    (0..data.n_folds())
        .map(|fold| {
            let mut ts = BTreeSet::new();
            let mut xs = vec![BTreeSet::new(); schema.confounders.len()];
            for i in (0..data.len()).filter(|&i| data.fold[i] != fold) {
                ts.insert(data.t[i]);
                for (c, level) in Dataset::decode_x(schema, data.x[i]).into_iter().enumerate() {
                    xs[c].insert(level);
                }
            }
            (ts, xs)
        })
        .collect()
}
