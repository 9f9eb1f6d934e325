use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exact_effects, generate, ScmSpec, UnmeasuredLaw};
use crate::error::{Error, Result};
use crate::glm::Dataset;
use crate::mediation::{point_estimate, EstimationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    /// U → M and U → Y, both with coefficient equal to the magnitude.
    UnmeasuredConfounder,
    /// M¹ → later mediators.
    MediatorCoupling,
    /// Yᵢ₋₁ → Mᵢ and Yᵢ₋₁ → Yᵢ.
    TemporalCarryover,
}

impl Knob {
    pub fn as_str(self) -> &'static str {
        match self {
            Knob::UnmeasuredConfounder => "unmeasured_confounder",
            Knob::MediatorCoupling => "mediator_coupling",
            Knob::TemporalCarryover => "temporal_carryover",
        }
    }

    /// The base spec with this knob set to `magnitude` and the other two off.
    pub fn apply(self, base: &ScmSpec, magnitude: f64) -> ScmSpec {
        let mut spec = base.clone();
        spec.coupling = 0.0;
        spec.carryover = 0.0;
        spec.unmeasured = None;
        for m in &mut spec.mediators {
            m.u.clear();
        }
        spec.outcome.u = 0.0;
        match self {
            Knob::UnmeasuredConfounder => {
                spec.unmeasured = Some(base.unmeasured.unwrap_or(UnmeasuredLaw { prob: 0.5 }));
                for m in &mut spec.mediators {
                    m.u = vec![magnitude; m.levels.len() - 1];
                }
                spec.outcome.u = magnitude;
            }
            Knob::MediatorCoupling => spec.coupling = magnitude,
            Knob::TemporalCarryover => spec.carryover = magnitude,
        }
        spec
    }
}

impl fmt::Display for Knob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Knob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unmeasured_confounder" => Ok(Knob::UnmeasuredConfounder),
            "mediator_coupling" => Ok(Knob::MediatorCoupling),
            "temporal_carryover" => Ok(Knob::TemporalCarryover),
            other => Err(Error::Config(format!("unknown knob `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub knob: Knob,
    pub grid: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub estimation: EstimationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub knob: Knob,
    pub magnitude: f64,
    pub mediator: String,
    pub nde: f64,
    pub nie: f64,
    /// Oracle of the base spec with the knob at zero.
    pub oracle_nde: f64,
    pub oracle_nie: f64,
    pub nde_bias: f64,
    pub nie_bias: f64,
}

/// For each grid magnitude: generate `n` units with the knob active, estimate
/// every mediator, and compare against the zero-knob oracle. All grid points
/// reuse the same seed, so differences between rows come from the knob alone.
pub fn violation_study(base: &ScmSpec, config: &StudyConfig) -> Result<Vec<StudyRow>> {
    if config.grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::Config("grid magnitudes must be finite".into()));
    }
    let null = Knob::MediatorCoupling.apply(base, 0.0);
    let oracle = exact_effects(&null)?;
    let rows: Vec<Result<Vec<StudyRow>>> = config
        .grid
        .par_iter()
        .map(|&magnitude| {
            let mut spec = config.knob.apply(base, magnitude);
            spec.seed = config.seed;
            let sim = generate(&spec, config.n)?;
            let data = Dataset::from_records(&sim.records, &sim.schema)?;
            oracle
                .iter()
                .map(|o| {
                    let est = point_estimate(&data, &o.mediator, &config.estimation)?;
                    Ok(StudyRow {
                        knob: config.knob,
                        magnitude,
                        mediator: o.mediator.clone(),
                        nde: est.nde,
                        nie: est.nie,
                        oracle_nde: o.nde,
                        oracle_nie: o.nie,
                        nde_bias: est.nde - o.nde,
                        nie_bias: est.nie - o.nie,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// CSV with one row per (magnitude, mediator).
pub fn write_study<W: std::io::Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "knob", "magnitude", "mediator", "nde", "nie", "oracle_nde", "oracle_nie", "nde_bias", "nie_bias",
    ])?;
    for r in rows {
        w.write_record([
            r.knob.as_str().to_string(),
            r.magnitude.to_string(),
            r.mediator.clone(),
            r.nde.to_string(),
            r.nie.to_string(),
            r.oracle_nde.to_string(),
            r.oracle_nie.to_string(),
            r.nde_bias.to_string(),
            r.nie_bias.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
