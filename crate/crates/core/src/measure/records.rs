//! Causal records: one measured (T, X, M, Y) row per analysis unit.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::topic::{fit_topic_model, measure_topic, TopicConfig, TopicModel};
use super::{MeasurementSpec, DISFLUENCY, HEDGING, TOPIC};
use crate::corpus::{AnalysisUnit, Utterance};
use crate::error::{Error, Result};
use crate::glm::fold_plan;
use crate::rng::derive_seed;

/// A categorical variable and its finite, ordered domain of level labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub levels: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, levels: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            name: name.into(),
            levels: levels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self::new(name, ["0", "1"])
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }
}

/// Declared domains of the confounders and mediators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSchema {
    pub confounders: Vec<Variable>,
    pub mediators: Vec<Variable>,
    pub n_folds: usize,
}

impl RecordSchema {
    pub fn mediator(&self, name: &str) -> Option<&Variable> {
        self.mediators.iter().find(|v| v.name == name)
    }

    /// Size of the confounder grid, the product of the confounder domain sizes.
    pub fn grid_size(&self) -> usize {
        self.confounders.iter().map(|c| c.levels.len()).product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalRecord {
    pub unit_id: String,
    pub t: u8,
    pub x: BTreeMap<String, String>,
    pub m: BTreeMap<String, String>,
    pub y: u8,
    pub fold: usize,
    /// Reserved for an interruption-valence outcome; never populated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub unit_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub n_folds: usize,
    pub seed: u64,
    pub confounders: Vec<String>,
    pub mediators: Vec<String>,
    pub topic: TopicConfig,
    /// Fold whose units train the topic model before it is frozen.
    pub topic_train_fold: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            n_folds: 2,
            seed: 0,
            confounders: vec![crate::corpus::PRIOR_INTERRUPTIONS.into()],
            mediators: vec![HEDGING.into(), DISFLUENCY.into()],
            topic: TopicConfig::default(),
            topic_train_fold: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredRecords {
    pub records: Vec<CausalRecord>,
    pub schema: RecordSchema,
    pub exclusions: Vec<Exclusion>,
    pub topic_model: Option<TopicModel>,
}

const UNKNOWN_LEVEL: &str = "unknown";

/// Measures every unit with a defined treatment and outcome; other units are
/// reported as exclusions. `utterances` must contain the full cases so the
/// chief justice's introductions are visible.
pub fn build_records(
    utterances: &[Utterance],
    units: &[AnalysisUnit],
    spec: &MeasurementSpec,
    options: &BuildOptions,
    topic_model: Option<&TopicModel>,
) -> Result<MeasuredRecords> {
    spec.validate()?;
    if options.n_folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {}", options.n_folds)));
    }
    for name in &options.mediators {
        if ![HEDGING, DISFLUENCY, TOPIC].contains(&name.as_str()) {
            return Err(Error::Config(format!("unknown mediator `{name}`")));
        }
    }

    let mut by_case: HashMap<&str, Vec<Utterance>> = HashMap::new();
    for u in utterances {
        by_case.entry(u.case_id.as_str()).or_default().push(u.clone());
    }

    let mut exclusions = Vec::new();
    let mut included: Vec<(&AnalysisUnit, u8, u8)> = Vec::new();
    let mut treatment_cache: HashMap<(&str, &str), Option<u8>> = HashMap::new();
    for unit in units {
        let p1 = &unit.p1_utterance;
        let t = *treatment_cache
            .entry((p1.case_id.as_str(), p1.speaker_id.as_str()))
            .or_insert_with(|| {
                let case = by_case.get(p1.case_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
                spec.label_treatment(case, &p1.speaker_id).ok()
            });
        let Some(t) = t else {
            log::warn!("excluding {}: no honorific introduction", unit.unit_id);
            exclusions.push(Exclusion {
                unit_id: unit.unit_id.clone(),
                reason: "no honorific introduction".into(),
            });
            continue;
        };
        match spec.label_interruption(unit) {
            Ok(y) => included.push((unit, t, y)),
            Err(_) => {
                log::warn!("excluding {}: no responding justice turn", unit.unit_id);
                exclusions.push(Exclusion {
                    unit_id: unit.unit_id.clone(),
                    reason: "no responding justice turn".into(),
                });
            }
        }
    }

    let ids: Vec<String> = included.iter().map(|(u, ..)| u.unit_id.clone()).collect();
    let folds: Vec<usize> = if ids.is_empty() {
        Vec::new()
    } else {
        let plan = fold_plan(&ids, options.n_folds, options.seed)?;
        ids.iter().map(|id| plan.fold_of(id).expect("planned id")).collect()
    };

    let wants_topic = options.mediators.iter().any(|m| m == TOPIC);
    let fitted;
    let topic_model = match (wants_topic, topic_model) {
        (false, _) => None,
        (true, Some(m)) => Some(m),
        (true, None) => {
            let train: Vec<&str> = included
                .iter()
                .zip(&folds)
                .filter(|(_, f)| **f == options.topic_train_fold)
                .map(|((u, ..), _)| u.p1_utterance.text.as_str())
                .collect();
            let config = TopicConfig {
                seed: derive_seed(options.seed, "topics"),
                ..options.topic
            };
            fitted = fit_topic_model(&train, config)?;
            Some(&fitted)
        }
    };

    let mut records = Vec::with_capacity(included.len());
    for ((unit, t, y), fold) in included.iter().zip(&folds) {
        let text = &unit.p1_utterance.text;
        let x = options
            .confounders
            .iter()
            .map(|c| {
                let level = unit
                    .context_features
                    .get(c)
                    .cloned()
                    .unwrap_or_else(|| UNKNOWN_LEVEL.to_string());
                (c.clone(), level)
            })
            .collect();
        let m = options
            .mediators
            .iter()
            .map(|name| {
                let level = match name.as_str() {
                    HEDGING => spec.measure_hedging(text).to_string(),
                    DISFLUENCY => spec.measure_disfluency(text).to_string(),
                    _ => {
                        let model = topic_model.expect("topic model present");
                        topic_label(model, measure_topic(model, text))
                    }
                };
                (name.clone(), level)
            })
            .collect();
        records.push(CausalRecord {
            unit_id: unit.unit_id.clone(),
            t: *t,
            x,
            m,
            y: *y,
            fold: *fold,
            valence: None,
        });
    }

    let confounders = options
        .confounders
        .iter()
        .map(|c| {
            let levels: BTreeSet<&str> = records.iter().map(|r| r.x[c].as_str()).collect();
            Variable::new(c.clone(), levels)
        })
        .collect();
    let mediators = options
        .mediators
        .iter()
        .map(|name| match name.as_str() {
            TOPIC => {
                let model = topic_model.expect("topic model present");
                Variable::new(TOPIC, (0..=model.k()).map(|l| topic_label(model, l)))
            }
            other => Variable::binary(other),
        })
        .collect();

    Ok(MeasuredRecords {
        records,
        schema: RecordSchema {
            confounders,
            mediators,
            n_folds: options.n_folds,
        },
        exclusions,
        topic_model: topic_model.cloned(),
    })
}

fn topic_label(model: &TopicModel, level: usize) -> String {
    if level == model.no_content_level() {
        "none".to_string()
    } else {
        level.to_string()
    }
}

/// Checks a record against the declared domains.
pub fn validate_record(record: &CausalRecord, schema: &RecordSchema) -> Result<()> {
    let bad = |msg: String| Err(Error::Data(format!("record `{}`: {msg}", record.unit_id)));
    if record.t > 1 {
        return bad(format!("treatment {} is not binary", record.t));
    }
    if record.y > 1 {
        return bad(format!("outcome {} is not binary", record.y));
    }
    if record.fold >= schema.n_folds {
        return bad(format!("fold {} outside 0..{}", record.fold, schema.n_folds));
    }
    if record.valence.is_some() {
        return bad("valence outcome is reserved and must be absent".into());
    }
    for (values, vars, what) in [
        (&record.x, &schema.confounders, "confounder"),
        (&record.m, &schema.mediators, "mediator"),
    ] {
        if values.len() != vars.len() {
            return bad(format!("expected {} {what}s, found {}", vars.len(), values.len()));
        }
        for var in vars {
            match values.get(&var.name) {
                None => return bad(format!("missing {what} `{}`", var.name)),
                Some(level) if var.level_index(level).is_none() => {
                    return bad(format!("{what} `{}` level `{level}` outside its domain", var.name))
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

pub fn write_records<W: Write>(records: &[CausalRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<CausalRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
