use std::sync::Arc;

use super::CrossFitPlan;
use crate::error::{Error, Result};
use crate::measure::{validate_record, CausalRecord, RecordSchema};

/// Records encoded as level indices against their schema.
///
/// Confounders are flattened into one grid index `x` in mixed radix, first
/// confounder most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<RecordSchema>,
    pub unit_ids: Vec<String>,
    pub t: Vec<u8>,
    pub x: Vec<usize>,
    /// `m[j][i]`: level of mediator `j` for row `i`.
    pub m: Vec<Vec<usize>>,
    pub y: Vec<u8>,
    pub fold: Vec<usize>,
    n_folds: usize,
}

impl Dataset {
    /// Encodes records using the fold stored in each record.
    pub fn from_records(records: &[CausalRecord], schema: &RecordSchema) -> Result<Self> {
        let schema = Arc::new(schema.clone());
        let mut data = Dataset {
            schema: schema.clone(),
            unit_ids: Vec::with_capacity(records.len()),
            t: Vec::with_capacity(records.len()),
            x: Vec::with_capacity(records.len()),
            m: vec![Vec::with_capacity(records.len()); schema.mediators.len()],
            y: Vec::with_capacity(records.len()),
            fold: Vec::with_capacity(records.len()),
            n_folds: schema.n_folds,
        };
        for r in records {
            validate_record(r, &schema)?;
            let levels: Vec<usize> = schema
                .confounders
                .iter()
                .map(|c| c.level_index(&r.x[&c.name]).expect("validated"))
                .collect();
            data.unit_ids.push(r.unit_id.clone());
            data.t.push(r.t);
            data.x.push(Self::encode_x(&schema, &levels));
            for (j, var) in schema.mediators.iter().enumerate() {
                data.m[j].push(var.level_index(&r.m[&var.name]).expect("validated"));
            }
            data.y.push(r.y);
            data.fold.push(r.fold);
        }
        Ok(data)
    }

    /// Encodes records and takes fold membership from `plan` instead.
    pub fn with_plan(records: &[CausalRecord], schema: &RecordSchema, plan: &CrossFitPlan) -> Result<Self> {
        let schema = RecordSchema {
            n_folds: plan.n_folds(),
            ..schema.clone()
        };
        let mut reassigned = Vec::with_capacity(records.len());
        for r in records {
            let fold = plan
                .fold_of(&r.unit_id)
                .ok_or_else(|| Error::Data(format!("unit `{}` is not in the cross-fit plan", r.unit_id)))?;
            reassigned.push(CausalRecord { fold, ..r.clone() });
        }
        Self::from_records(&reassigned, &schema)
    }

    pub fn schema(&self) -> &RecordSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn n_x(&self) -> usize {
        self.schema.grid_size()
    }

    pub fn mediator_index(&self, name: &str) -> Result<usize> {
        self.schema
            .mediators
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::Config(format!("mediator `{name}` is not in the record schema")))
    }

    pub fn encode_x(schema: &RecordSchema, levels: &[usize]) -> usize {
        schema
            .confounders
            .iter()
            .zip(levels)
            .fold(0, |acc, (c, l)| acc * c.levels.len() + l)
    }

    pub fn decode_x(schema: &RecordSchema, mut x: usize) -> Vec<usize> {
        let mut levels = vec![0; schema.confounders.len()];
        for (c, slot) in schema.confounders.iter().zip(levels.iter_mut()).rev() {
            let n = c.levels.len().max(1);
            *slot = x % n;
            x /= n;
        }
        levels
    }

    /// Rows `indices` (with repetition) under a new fold assignment.
    pub fn resample(&self, indices: &[usize], folds: Vec<usize>, n_folds: usize) -> Dataset {
        assert_eq!(indices.len(), folds.len());
        Dataset {
            schema: self.schema.clone(),
            unit_ids: indices.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            t: indices.iter().map(|&i| self.t[i]).collect(),
            x: indices.iter().map(|&i| self.x[i]).collect(),
            m: self.m.iter().map(|col| indices.iter().map(|&i| col[i]).collect()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            fold: folds,
            n_folds,
        }
    }

    /// Number of rows per (fold, x) cell, `counts[fold][x]`.
    pub fn fold_x_counts(&self) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0usize; self.n_x()]; self.n_folds];
        for (f, x) in self.fold.iter().zip(&self.x) {
            counts[*f][*x] += 1;
        }
        counts
    }
}
