//! End-to-end runs: ingest → measure → fit → estimate → report, with a manifest
//! that pins the configuration, the derived seeds and the checksum of every
//! input and output file.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    extract_units_with_meta, parse_case_metadata, parse_transcript, sort_utterances, AnalysisUnit, CaseMetadata,
    Utterance, PRIOR_INTERRUPTIONS,
};
use crate::error::{Error, Result};
use crate::glm::{
    fit_mediator_model, fit_outcome_model, write_mediator_tables, write_outcome_tables, Dataset, GlmOptions,
    SmoothedCell,
};
use crate::measure::{
    build_records, write_records, BuildOptions, Lexicon, MeasuredRecords, MeasurementSpec, TopicConfig, DISFLUENCY,
    HEDGING, TOPIC,
};
use crate::mediation::{estimate_all, EffectEstimate, EstimationConfig, XWeighting};
use crate::report::{render_report, write_estimates_csv, write_estimates_jsonl, write_plot_data};
use crate::rng::derive_seed;

pub const MANIFEST_FILE: &str = "manifest.json";
const MAX_FOLDS: usize = 20;
const MAX_BOOTSTRAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub transcripts: PathBuf,
    #[serde(default)]
    pub metadata: Option<PathBuf>,
    /// Hedging lexicon file; the bundled lexicon when absent.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    /// Output directory. Not recorded in the manifest, so a manifest can be
    /// replayed into any directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_ci")]
    pub ci_level: f64,
    #[serde(default = "default_mediators")]
    pub mediators: Vec<String>,
    #[serde(default = "default_confounders")]
    pub confounders: Vec<String>,
    #[serde(default)]
    pub topic: TopicConfig,
    #[serde(default)]
    pub strict_dash: bool,
    #[serde(default)]
    pub x_weighting: XWeighting,
    #[serde(default)]
    pub glm: GlmOptions,
}

fn default_folds() -> usize {
    2
}
fn default_bootstrap() -> usize {
    1000
}
fn default_ci() -> f64 {
    0.90
}
fn default_mediators() -> Vec<String> {
    vec![HEDGING.into(), DISFLUENCY.into(), TOPIC.into()]
}
fn default_confounders() -> Vec<String> {
    vec![PRIOR_INTERRUPTIONS.into()]
}

impl RunConfig {
    pub fn new(transcripts: impl Into<PathBuf>) -> Self {
        Self {
            transcripts: transcripts.into(),
            metadata: None,
            lexicon: None,
            out: None,
            seed: 0,
            folds: default_folds(),
            bootstrap: default_bootstrap(),
            ci_level: default_ci(),
            mediators: default_mediators(),
            confounders: default_confounders(),
            topic: TopicConfig::default(),
            strict_dash: false,
            x_weighting: XWeighting::default(),
            glm: GlmOptions::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let mut inputs = vec![&self.transcripts];
        inputs.extend(self.metadata.iter());
        inputs.extend(self.lexicon.iter());
        for p in inputs {
            if !p.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        if !(2..=MAX_FOLDS).contains(&self.folds) {
            return Err(Error::Config(format!("folds must be in 2..={MAX_FOLDS}, got {}", self.folds)));
        }
        if self.bootstrap != 0 && !(100..=MAX_BOOTSTRAP).contains(&self.bootstrap) {
            return Err(Error::Config(format!(
                "bootstrap must be 0 or in 100..={MAX_BOOTSTRAP}, got {}",
                self.bootstrap
            )));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config(format!("ci level must be in (0, 1), got {}", self.ci_level)));
        }
        if self.mediators.is_empty() {
            return Err(Error::Config("no mediators requested".into()));
        }
        for m in &self.mediators {
            if ![HEDGING, DISFLUENCY, TOPIC].contains(&m.as_str()) {
                return Err(Error::Config(format!("unknown mediator `{m}`")));
            }
        }
        if self.topic.burn_in >= self.topic.sweeps && self.mediators.iter().any(|m| m == TOPIC) {
            return Err(Error::Config("topic burn-in must be shorter than the sweep count".into()));
        }
        Ok(())
    }

    pub fn measurement_spec(&self) -> Result<MeasurementSpec> {
        let lexicon = match &self.lexicon {
            Some(p) => Lexicon::parse(&fs::read_to_string(p)?)?,
            None => Lexicon::default_hedging(),
        };
        Ok(MeasurementSpec {
            strict_dash: self.strict_dash,
            ..MeasurementSpec::with_lexicon(lexicon)
        })
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            n_folds: self.folds,
            seed: self.seed,
            confounders: self.confounders.clone(),
            mediators: self.mediators.clone(),
            topic: self.topic,
            topic_train_fold: 0,
        }
    }

    pub fn estimation_config(&self) -> EstimationConfig {
        EstimationConfig {
            n_bootstrap: self.bootstrap,
            seed: derive_seed(self.seed, "bootstrap"),
            ci_level: self.ci_level,
            x_weighting: self.x_weighting,
            glm: self.glm,
        }
    }
}

/// Entries of the warnings ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    Excluded { unit_id: String, reason: String },
    Smoothed(SmoothedCell),
    DroppedReplicates { mediator: String, dropped: usize, total: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub root: u64,
    pub folds: u64,
    pub topics: u64,
    pub bootstrap: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Self {
            root,
            folds: derive_seed(root, "folds"),
            topics: derive_seed(root, "topics"),
            bootstrap: derive_seed(root, "bootstrap"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    /// SHA-256 of each input file, keyed by the path as configured.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each output file, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub n_units: usize,
    pub measured: MeasuredRecords,
    pub estimates: Vec<EffectEstimate>,
    pub warnings: Vec<Warning>,
    pub manifest: Manifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn in_stage<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage,
            source: Box::new(other),
        },
    })
}

/// Parses transcripts and metadata and extracts adjacent-pair units.
pub fn ingest(transcripts: &Path, metadata: Option<&Path>) -> Result<(Vec<Utterance>, Vec<AnalysisUnit>)> {
    let mut utterances = parse_transcript(BufReader::new(fs::File::open(transcripts)?))?;
    sort_utterances(&mut utterances);
    let meta = match metadata {
        Some(p) => parse_case_metadata(BufReader::new(fs::File::open(p)?))?,
        None => CaseMetadata::new(),
    };
    let units = extract_units_with_meta(&utterances, &meta);
    Ok((utterances, units))
}

struct Outputs {
    dir: PathBuf,
    sums: BTreeMap<String, String>,
}

impl Outputs {
    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        fs::write(self.dir.join(name), &bytes)?;
        self.sums.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn run_pipeline(config: &RunConfig) -> Result<RunOutput> {
    in_stage("config", config.validate())?;
    let out_dir = config
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory given".into()))?;
    fs::create_dir_all(&out_dir)?;
    let mut outputs = Outputs {
        dir: out_dir,
        sums: BTreeMap::new(),
    };

    let mut inputs = BTreeMap::new();
    for p in std::iter::once(&config.transcripts).chain(&config.metadata).chain(&config.lexicon) {
        inputs.insert(p.display().to_string(), sha256_hex(&fs::read(p)?));
    }

    let (utterances, units) = in_stage("ingest", ingest(&config.transcripts, config.metadata.as_deref()))?;
    in_stage("ingest", {
        let mut buf = Vec::new();
        crate::corpus::write_units(&units, &mut buf).map(|_| buf)
    })
    .and_then(|buf| outputs.put("units.jsonl", buf))?;

    let spec = in_stage("measure", config.measurement_spec())?;
    let measured = in_stage(
        "measure",
        build_records(&utterances, &units, &spec, &config.build_options(), None),
    )?;
    let mut warnings: Vec<Warning> = measured
        .exclusions
        .iter()
        .map(|e| Warning::Excluded {
            unit_id: e.unit_id.clone(),
            reason: e.reason.clone(),
        })
        .collect();
    let mut buf = Vec::new();
    write_records(&measured.records, &mut buf)?;
    outputs.put("records.jsonl", buf)?;
    outputs.put("records.schema.json", pretty(&measured.schema)?)?;
    if let Some(model) = &measured.topic_model {
        outputs.put("topic_model.json", pretty(model)?)?;
    }
    if measured.records.is_empty() {
        return Err(Error::Stage {
            stage: "measure",
            source: Box::new(Error::Data("no unit has a defined treatment and outcome".into())),
        });
    }

    let data = in_stage("fit", Dataset::from_records(&measured.records, &measured.schema))?;
    let mut g_models = Vec::new();
    let mut f_models = Vec::new();
    for m in &config.mediators {
        let g = in_stage("fit", fit_mediator_model(&data, m, &config.glm))?;
        let f = in_stage("fit", fit_outcome_model(&data, m, &config.glm))?;
        warnings.extend(g.smoothed.iter().chain(&f.smoothed).cloned().map(Warning::Smoothed));
        g_models.push(g);
        f_models.push(f);
    }
    let mut buf = Vec::new();
    write_mediator_tables(&g_models, &measured.schema, &mut buf)?;
    outputs.put("mediator_tables.csv", buf)?;
    let mut buf = Vec::new();
    write_outcome_tables(&f_models, &measured.schema, &mut buf)?;
    outputs.put("outcome_tables.csv", buf)?;

    let estimates = in_stage(
        "estimate",
        estimate_all(&data, &config.mediators, &config.estimation_config()),
    )?;
    for e in &estimates {
        if e.n_dropped > 0 {
            warnings.push(Warning::DroppedReplicates {
                mediator: e.mediator.clone(),
                dropped: e.n_dropped,
                total: e.n_dropped + e.n_bootstrap,
            });
        }
    }

    let mut buf = Vec::new();
    write_estimates_csv(&estimates, &mut buf)?;
    outputs.put("estimates.csv", buf)?;
    let mut buf = Vec::new();
    write_estimates_jsonl(&estimates, &mut buf)?;
    outputs.put("estimates.jsonl", buf)?;
    let mut buf = Vec::new();
    write_plot_data(&estimates, &mut buf)?;
    outputs.put("plot_data.csv", buf)?;
    outputs.put("report.txt", render_report(&estimates).into_bytes())?;
    outputs.put("warnings.jsonl", to_jsonl(&warnings)?)?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: RunConfig {
            out: None,
            ..config.clone()
        },
        seeds: Seeds::from_root(config.seed),
        inputs,
        outputs: outputs.sums.clone(),
    };
    fs::write(outputs.dir.join(MANIFEST_FILE), pretty(&manifest)?)?;

    Ok(RunOutput {
        n_units: units.len(),
        measured,
        estimates,
        warnings,
        manifest,
    })
}

/// Re-runs a manifest into `out` and lists every input or output whose
/// checksum differs from the recorded one.
pub fn rerun_manifest(manifest: &Manifest, out: &Path) -> Result<(RunOutput, Vec<String>)> {
    let config = RunConfig {
        out: Some(out.to_path_buf()),
        ..manifest.config.clone()
    };
    let result = run_pipeline(&config)?;
    let mut mismatches = Vec::new();
    for (which, want, got) in [
        ("input", &manifest.inputs, &result.manifest.inputs),
        ("output", &manifest.outputs, &result.manifest.outputs),
    ] {
        for (name, sum) in want {
            if got.get(name) != Some(sum) {
                mismatches.push(format!("{which} {name}"));
            }
        }
        for name in got.keys().filter(|k| !want.contains_key(*k)) {
            mismatches.push(format!("{which} {name}"));
        }
    }
    Ok((result, mismatches))
}
