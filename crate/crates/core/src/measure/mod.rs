//! Measurement functions mapping text to treatment, outcome and mediator values.

mod lexicon;
pub mod records;
pub mod topic;

use std::collections::BTreeMap;

pub use lexicon::{Lexicon, DEFAULT_LEXICON};
pub use records::{
    build_records, read_records, validate_record, write_records, BuildOptions, CausalRecord,
    Exclusion, MeasuredRecords, RecordSchema, Variable,
};
pub use topic::{fit_topic_model, measure_topic, TopicConfig, TopicModel};

use crate::corpus::{AnalysisUnit, SpeakerRole, Utterance};
use crate::error::{Error, Result};
use crate::text::{ends_with_interruption_marker, has_repeat_around, tokenize, STRICT_DASH};

pub const HEDGING: &str = "hedging";
pub const DISFLUENCY: &str = "disfluency";
pub const TOPIC: &str = "topic";

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSpec {
    pub hedging_lexicon: Lexicon,
    /// Literal marker between the repeated words of a disfluency.
    pub disfluency_marker: String,
    /// Identifier of the fitted topic model in use, if any.
    pub topic_model_ref: Option<String>,
    pub honorific_map: BTreeMap<String, u8>,
    /// Accept only "- -" (not "--") as the interruption marker.
    pub strict_dash: bool,
}

impl Default for MeasurementSpec {
    fn default() -> Self {
        Self {
            hedging_lexicon: Lexicon::default_hedging(),
            disfluency_marker: STRICT_DASH.to_string(),
            topic_model_ref: None,
            honorific_map: BTreeMap::from([("Ms.".to_string(), 1), ("Mr.".to_string(), 0)]),
            strict_dash: false,
        }
    }
}

impl MeasurementSpec {
    pub fn with_lexicon(lexicon: Lexicon) -> Self {
        Self {
            hedging_lexicon: lexicon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hedging_lexicon.is_empty() {
            return Err(Error::Config("hedging lexicon is empty".into()));
        }
        if tokenize(&self.disfluency_marker).is_empty() {
            return Err(Error::Config("disfluency marker has no tokens".into()));
        }
        let mut values: Vec<u8> = self.honorific_map.values().copied().collect();
        values.sort_unstable();
        if values != [0, 1] {
            return Err(Error::Config(
                "honorific map must map exactly two honorifics onto {0, 1}".into(),
            ));
        }
        Ok(())
    }

    /// Treatment label from the chief justice's introduction of `advocate_id`.
    pub fn label_treatment(&self, case_utterances: &[Utterance], advocate_id: &str) -> Result<u8> {
        label_treatment_with(case_utterances, advocate_id, &self.honorific_map)
    }

    pub fn label_interruption(&self, unit: &AnalysisUnit) -> Result<u8> {
        label_interruption(unit, self.strict_dash)
    }

    pub fn measure_hedging(&self, text: &str) -> u8 {
        u8::from(self.hedging_lexicon.matches_tokens(&tokenize(text)))
    }

    pub fn measure_disfluency(&self, text: &str) -> u8 {
        u8::from(has_repeat_around(&tokenize(text), &tokenize(&self.disfluency_marker)))
    }
}

fn surname(advocate_id: &str) -> &str {
    advocate_id
        .split(|c: char| c.is_whitespace() || c == '_')
        .rfind(|s| !s.is_empty())
        .unwrap_or(advocate_id)
        .trim_matches(|c: char| !c.is_alphanumeric())
}

fn label_treatment_with(
    case_utterances: &[Utterance],
    advocate_id: &str,
    honorifics: &BTreeMap<String, u8>,
) -> Result<u8> {
    let target = surname(advocate_id);
    for u in case_utterances
        .iter()
        .filter(|u| u.speaker_role == SpeakerRole::ChiefJustice)
    {
        let words: Vec<&str> = u.text.split_whitespace().collect();
        for pair in words.windows(2) {
            let Some(&label) = honorifics.get(pair[0]) else {
                continue;
            };
            if pair[1]
                .trim_matches(|c: char| !c.is_alphanumeric())
                .eq_ignore_ascii_case(target)
            {
                return Ok(label);
            }
        }
    }
    let case_id = case_utterances
        .first()
        .map(|u| u.case_id.clone())
        .unwrap_or_default();
    Err(Error::NoIntroduction {
        case_id,
        advocate: advocate_id.to_string(),
    })
}

/// 1 if the chief justice first introduces the advocate's surname as "Ms.",
/// 0 for "Mr.".
pub fn label_treatment(case_utterances: &[Utterance], advocate_id: &str) -> Result<u8> {
    label_treatment_with(case_utterances, advocate_id, &MeasurementSpec::default().honorific_map)
}

/// 1 iff the advocate turn ends with the double-dash marker.
pub fn label_interruption(unit: &AnalysisUnit, strict: bool) -> Result<u8> {
    if unit.p2_utterance.is_none() {
        return Err(Error::UndefinedOutcome(unit.unit_id.clone()));
    }
    Ok(u8::from(ends_with_interruption_marker(&unit.p1_utterance.text, strict)))
}

/// Hedging with the bundled lexicon.
pub fn measure_hedging(text: &str) -> u8 {
    u8::from(Lexicon::default_hedging().matches_tokens(&tokenize(text)))
}

/// 1 iff the text contains "w - - w" for some word w.
pub fn measure_disfluency(text: &str) -> u8 {
    u8::from(has_repeat_around(&tokenize(text), &tokenize(STRICT_DASH)))
}
