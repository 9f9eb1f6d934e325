//! Transcript parsing and extraction of advocate/justice utterance pairs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::ends_with_interruption_marker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerRole {
    Advocate,
    Justice,
    ChiefJustice,
}

impl SpeakerRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SpeakerRole::Advocate => "advocate",
            SpeakerRole::Justice => "justice",
            SpeakerRole::ChiefJustice => "chief_justice",
        }
    }

    pub fn parse(value: &str) -> Option<Self> {
        match value {
            "advocate" => Some(SpeakerRole::Advocate),
            "justice" => Some(SpeakerRole::Justice),
            "chief_justice" => Some(SpeakerRole::ChiefJustice),
            _ => None,
        }
    }

    pub fn is_bench(self) -> bool {
        matches!(self, SpeakerRole::Justice | SpeakerRole::ChiefJustice)
    }
}

/// One transcript turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub case_id: String,
    pub index: u32,
    pub speaker_id: String,
    pub speaker_role: SpeakerRole,
    pub text: String,
}

// Wire shape: role kept as a string so an unknown value can be reported by name.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceLine {
    case_id: String,
    index: u32,
    speaker_id: String,
    speaker_role: String,
    text: String,
}

/// An advocate turn together with the justice turn that immediately follows it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisUnit {
    pub unit_id: String,
    pub p1_utterance: Utterance,
    pub p2_utterance: Option<Utterance>,
    pub context_features: BTreeMap<String, String>,
}

impl AnalysisUnit {
    /// Units without a responding justice turn have no defined outcome and are
    /// excluded at estimation time.
    pub fn has_response(&self) -> bool {
        self.p2_utterance.is_some()
    }
}

/// Unit-of-analysis choices. Only adjacent pairs are implemented; the
/// estimator assumes independent units, which thread- and conversation-level
/// units would need a different estimator for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnitKind {
    #[default]
    AdjacentPair,
    Thread,
    Conversation,
}

pub const PRIOR_INTERRUPTIONS: &str = "prior_interruptions";
pub const RESPONDER_ROLE: &str = "responder_role";

/// Per-case categorical attributes loaded from the metadata sidecar.
pub type CaseMetadata = BTreeMap<String, BTreeMap<String, String>>;

pub fn parse_transcript<R: BufRead>(input: R) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    let mut seen: HashSet<(String, u32)> = HashSet::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: UtteranceLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let role = SpeakerRole::parse(&raw.speaker_role).ok_or_else(|| Error::UnknownRole {
            line: line_no,
            value: raw.speaker_role.clone(),
        })?;
        if raw.text.trim().is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty utterance text".into(),
            });
        }
        if !seen.insert((raw.case_id.clone(), raw.index)) {
            return Err(Error::DuplicateIndex {
                line: line_no,
                case_id: raw.case_id,
                index: raw.index,
            });
        }
        first_line.entry(raw.case_id.clone()).or_insert(line_no);
        out.push(Utterance {
            case_id: raw.case_id,
            index: raw.index,
            speaker_id: raw.speaker_id,
            speaker_role: role,
            text: raw.text,
        });
    }

    // Indices must form 0..n within every case.
    let mut per_case: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for u in &out {
        per_case.entry(&u.case_id).or_default().push(u.index);
    }
    for (case_id, mut idx) in per_case {
        idx.sort_unstable();
        if let Some(gap) = idx.iter().enumerate().find(|(i, v)| *i as u32 != **v) {
            return Err(Error::Parse {
                line: first_line[case_id],
                message: format!(
                    "case `{case_id}` indices are not contiguous from 0 (expected {}, found {})",
                    gap.0,
                    gap.1
                ),
            });
        }
    }
    Ok(out)
}

pub fn write_transcript<W: Write>(utterances: &[Utterance], mut out: W) -> Result<()> {
    for u in utterances {
        serde_json::to_writer(&mut out, u)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads the metadata sidecar: one object per line with a `case_id` key and
/// categorical attributes. Non-string scalars are stored by their JSON text.
pub fn parse_case_metadata<R: BufRead>(input: R) -> Result<CaseMetadata> {
    let mut meta = CaseMetadata::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            line: line_no,
            message: "metadata record must be an object".into(),
        })?;
        let case_id = obj
            .get("case_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse {
                line: line_no,
                message: "metadata record lacks string `case_id`".into(),
            })?
            .to_string();
        let mut attrs = BTreeMap::new();
        for (k, v) in obj {
            if k == "case_id" {
                continue;
            }
            let level = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Null => continue,
                serde_json::Value::Object(_) | serde_json::Value::Array(_) => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("attribute `{k}` is not categorical"),
                    })
                }
                other => other.to_string(),
            };
            attrs.insert(k.clone(), level);
        }
        if meta.insert(case_id.clone(), attrs).is_some() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate metadata for case `{case_id}`"),
            });
        }
    }
    Ok(meta)
}

pub fn unit_id(case_id: &str, index: u32) -> String {
    format!("{case_id}:{index}")
}

fn bucket(count: usize) -> &'static str {
    match count {
        0 => "0",
        1 => "1",
        _ => "2+",
    }
}

pub fn extract_units(utterances: &[Utterance]) -> Vec<AnalysisUnit> {
    extract_units_with_meta(utterances, &CaseMetadata::new())
}

/// One unit per advocate utterance, in input order. `utterances` must be
/// sorted by (case_id, index).
pub fn extract_units_with_meta(utterances: &[Utterance], meta: &CaseMetadata) -> Vec<AnalysisUnit> {
    let mut units = Vec::new();
    let mut prior: HashMap<&str, usize> = HashMap::new();

    for (pos, u) in utterances.iter().enumerate() {
        if u.speaker_role != SpeakerRole::Advocate {
            continue;
        }
        let p2 = utterances
            .get(pos + 1)
            .filter(|n| n.case_id == u.case_id && n.index == u.index + 1 && n.speaker_role.is_bench())
            .cloned();

        let count = prior.entry(u.case_id.as_str()).or_insert(0);
        let mut features = BTreeMap::new();
        if let Some(attrs) = meta.get(&u.case_id) {
            features.extend(attrs.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        features.insert(PRIOR_INTERRUPTIONS.to_string(), bucket(*count).to_string());
        features.insert(
            RESPONDER_ROLE.to_string(),
            p2.as_ref()
                .map_or("none", |p| p.speaker_role.as_str())
                .to_string(),
        );
        if p2.is_some() && ends_with_interruption_marker(&u.text, false) {
            *count += 1;
        }

        units.push(AnalysisUnit {
            unit_id: unit_id(&u.case_id, u.index),
            p1_utterance: u.clone(),
            p2_utterance: p2,
            context_features: features,
        });
    }
    units
}

pub fn extract_units_as(kind: UnitKind, utterances: &[Utterance], meta: &CaseMetadata) -> Result<Vec<AnalysisUnit>> {
    match kind {
        UnitKind::AdjacentPair => Ok(extract_units_with_meta(utterances, meta)),
        other => Err(Error::Config(format!("unit of analysis {other:?} is not implemented"))),
    }
}

/// Sorts utterances by (case_id, index), the order `extract_units` expects.
pub fn sort_utterances(utterances: &mut [Utterance]) {
    utterances.sort_by(|a, b| a.case_id.cmp(&b.case_id).then(a.index.cmp(&b.index)));
}

pub fn write_units<W: Write>(units: &[AnalysisUnit], mut out: W) -> Result<()> {
    for u in units {
        serde_json::to_writer(&mut out, u)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_units<R: BufRead>(input: R) -> Result<Vec<AnalysisUnit>> {
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
