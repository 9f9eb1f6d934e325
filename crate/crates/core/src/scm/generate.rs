use std::collections::BTreeMap;

use rand::Rng;

use super::{Model, ScmSpec};
use crate::corpus::{unit_id, CaseMetadata, SpeakerRole, Utterance, PRIOR_INTERRUPTIONS, RESPONDER_ROLE};
use crate::error::{Error, Result};
use crate::glm::fold_plan;
use crate::measure::{CausalRecord, RecordSchema, Variable, DISFLUENCY, HEDGING};
use crate::rng::{categorical_index, stage_rng};

/// Position of the advocate turn inside each rendered case.
pub const ADVOCATE_INDEX: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub records: Vec<CausalRecord>,
    pub schema: RecordSchema,
    /// Sampled values of the unmeasured confounder (all 0 when absent).
    pub u: Vec<u8>,
}

pub fn generate(spec: &ScmSpec, n: usize) -> Result<Simulation> {
    generate_with_folds(spec, n, 2)
}

/// Samples `n` units in sequence from one stream seeded by `spec.seed`. Every
/// unit consumes the same number of uniforms whatever the parameters, so specs
/// differing only in coefficients share their random numbers.
pub fn generate_with_folds(spec: &ScmSpec, n: usize, n_folds: usize) -> Result<Simulation> {
    let model: Model = spec.compile()?;
    let mut rng = stage_rng(spec.seed, "generate");
    let u_prob = model.u_prob.unwrap_or(0.0);
    let ids: Vec<String> = (0..n).map(|i| unit_id(&case_id(i), ADVOCATE_INDEX)).collect();
    let folds: Vec<usize> = if n == 0 {
        Vec::new()
    } else {
        let plan = fold_plan(&ids, n_folds, spec.seed)?;
        ids.iter().map(|id| plan.fold_of(id).expect("planned")).collect()
    };

    let mut records = Vec::with_capacity(n);
    let mut us = Vec::with_capacity(n);
    let mut y_prev = 0u8;
    for (id, fold) in ids.into_iter().zip(folds) {
        let x: Vec<usize> = model
            .x_probs
            .iter()
            .map(|p| categorical_index(p, rng.gen::<f64>()))
            .collect();
        let u = u8::from(rng.gen::<f64>() < u_prob);
        let t = u8::from(rng.gen::<f64>() < model.treatment_prob(&x));
        let mut m = Vec::with_capacity(model.mediators.len());
        for j in 0..model.mediators.len() {
            let m0 = m.first().copied().unwrap_or(0);
            let probs = model.mediator_probs(j, t, &x, u, m0, y_prev);
            m.push(categorical_index(&probs, rng.gen::<f64>()));
        }
        let y = u8::from(rng.gen::<f64>() < model.outcome_prob(&m, t, &x, u, y_prev));
        y_prev = y;
        us.push(u);
        records.push(CausalRecord {
            unit_id: id,
            t,
            x: spec
                .confounders
                .iter()
                .zip(&x)
                .map(|(c, l)| (c.name.clone(), c.levels[*l].clone()))
                .collect(),
            m: spec
                .mediators
                .iter()
                .zip(&m)
                .map(|(law, l)| (law.name.clone(), law.levels[*l].clone()))
                .collect(),
            y,
            fold,
            valence: None,
        });
    }
    let schema = RecordSchema {
        confounders: spec.confounders.iter().map(|c| Variable::new(c.name.clone(), c.levels.clone())).collect(),
        mediators: spec.mediators.iter().map(|m| Variable::new(m.name.clone(), m.levels.clone())).collect(),
        n_folds,
    };
    Ok(Simulation { records, schema, u: us })
}

fn case_id(i: usize) -> String {
    format!("sim-{i:06}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedCorpus {
    pub utterances: Vec<Utterance>,
    pub metadata: CaseMetadata,
}

fn utterance(case: &str, index: u32, speaker: &str, role: SpeakerRole, text: String) -> Utterance {
    Utterance {
        case_id: case.to_string(),
        index,
        speaker_id: speaker.to_string(),
        speaker_role: role,
        text,
    }
}

/// Renders each record as a three-turn case: the chief justice introduces the
/// advocate, the advocate speaks, a justice responds. Hedging inserts a
/// lexicon phrase, disfluency a "w - - w" repair, and an interruption ends the
/// advocate turn with the dash marker. Confounders go to the metadata sidecar.
pub fn render_transcript(sim: &Simulation) -> Result<RenderedCorpus> {
    for var in &sim.schema.mediators {
        if ![HEDGING, DISFLUENCY].contains(&var.name.as_str()) || var.levels != ["0", "1"] {
            return Err(Error::Config(format!(
                "mediator `{}` cannot be rendered as text; only binary hedging and disfluency can",
                var.name
            )));
        }
    }
    for c in &sim.schema.confounders {
        if [PRIOR_INTERRUPTIONS, RESPONDER_ROLE, "case_id"].contains(&c.name.as_str()) {
            return Err(Error::Config(format!("confounder name `{}` is reserved", c.name)));
        }
    }
    let mut utterances = Vec::with_capacity(3 * sim.records.len());
    let mut metadata = CaseMetadata::new();
    for (i, r) in sim.records.iter().enumerate() {
        let case = case_id(i);
        let surname = format!("Rowe-{i}");
        let honorific = if r.t == 1 { "Ms." } else { "Mr." };
        utterances.push(utterance(
            &case,
            0,
            "chief_justice",
            SpeakerRole::ChiefJustice,
            format!("We will hear argument next in case number {i}. {honorific} {surname}."),
        ));
        let flag = |name: &str| r.m.get(name).is_some_and(|v| v == "1");
        let mut text = String::new();
        if flag(HEDGING) {
            text.push_str("I think ");
        }
        text.push_str("the statute covers this transfer");
        if flag(DISFLUENCY) {
            text.push_str(", and the - - the record confirms it");
        }
        text.push_str(if r.y == 1 { ", and if I - -" } else { "." });
        utterances.push(utterance(
            &case,
            ADVOCATE_INDEX,
            &format!("Alex {surname}"),
            SpeakerRole::Advocate,
            text,
        ));
        utterances.push(utterance(
            &case,
            2,
            "justice_a",
            SpeakerRole::Justice,
            "What is your best authority for that reading?".to_string(),
        ));
        metadata.insert(case, r.x.clone().into_iter().collect::<BTreeMap<_, _>>());
    }
    Ok(RenderedCorpus { utterances, metadata })
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny_spec;
    use super::*;

    #[test]
    fn empty_generation() {
        let sim = generate(&tiny_spec(), 0).unwrap();
        assert!(sim.records.is_empty());
    }

    #[test]
    fn reproducible() {
        let a = generate(&tiny_spec(), 500).unwrap();
        let b = generate(&tiny_spec(), 500).unwrap();
        assert_eq!(a, b);
        let mut other = tiny_spec();
        other.seed += 1;
        assert_ne!(a.records, generate(&other, 500).unwrap().records);
    }

    #[test]
    fn renders_three_turns_per_unit() {
        let sim = generate(&tiny_spec(), 10).unwrap();
        let corpus = render_transcript(&sim).unwrap();
        assert_eq!(corpus.utterances.len(), 30);
        assert_eq!(corpus.metadata.len(), 10);
    }

    #[test]
    fn refuses_unrenderable_mediator() {
        let mut spec = tiny_spec();
        spec.mediators[0].name = "pitch".into();
        spec.outcome.m.clear();
        spec.outcome.tm.clear();
        let sim = generate(&spec, 3).unwrap();
        assert!(matches!(render_transcript(&sim), Err(Error::Config(_))));
    }
}
