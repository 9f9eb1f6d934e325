//! Sample-average natural direct and indirect effects per mediator.
//!
//! For a unit in fold k with confounders x, using the tables trained without fold k:
//!
//! ```text
//! NDE term = Σ_m [f̂(m,1,x) − f̂(m,0,x)] ĝ(m|0,x)
//! NIE term = Σ_m f̂(m,0,x) [ĝ(m|1,x) − ĝ(m|0,x)]
//! TE  term = Σ_m [f̂(m,1,x) ĝ(m|1,x) − f̂(m,0,x) ĝ(m|0,x)]
//! reversed NIE term = Σ_m f̂(m,1,x) [ĝ(m|1,x) − ĝ(m|0,x)]
//! ```
//!
//! and each estimate is the average of its term over units. T = 0 is the
//! reference arm. Terms are accumulated per (fold, x) cell, so the result does
//! not depend on record order.

mod bootstrap;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_effects, estimate_all, percentile};

use crate::error::{Error, Result};
use crate::glm::{Dataset, FittedMediatorModel, FittedOutcomeModel, GlmOptions};

/// Attached to every estimate and report.
pub const NDE_CAVEAT: &str = "Mediators left out of the model send their share of the treatment's \
influence into the NDE column. Read NDE as everything that does not pass through the named mediator, \
not as a pure direct effect, unless every mediator that matters has been modelled.";

/// How the confounder sum is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XWeighting {
    /// Evaluate the mediator sum at each unit's own confounders and average over units.
    #[default]
    PerUnit,
    /// Weight confounder cells by their empirical distribution in the training
    /// folds, independently of which units are scored.
    TrainingMarginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EffectTerms {
    pub nde: f64,
    pub nie: f64,
    pub nie_reversed: f64,
    pub total_effect: f64,
}

impl EffectTerms {
    fn scaled_add(&mut self, other: &EffectTerms, w: f64) {
        self.nde += w * other.nde;
        self.nie += w * other.nie;
        self.nie_reversed += w * other.nie_reversed;
        self.total_effect += w * other.total_effect;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub mediator: String,
    pub nde: f64,
    pub nie: f64,
    pub nie_reversed: f64,
    pub total_effect: f64,
    pub ci_level: f64,
    pub nde_ci: Option<Interval>,
    pub nie_ci: Option<Interval>,
    pub n_units: usize,
    pub n_bootstrap: usize,
    pub n_dropped: usize,
    pub caveat: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    /// Bootstrap replicates; 0 skips interval estimation, otherwise at least 100.
    pub n_bootstrap: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub x_weighting: XWeighting,
    pub glm: GlmOptions,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            n_bootstrap: 1000,
            seed: 0,
            ci_level: 0.90,
            x_weighting: XWeighting::PerUnit,
            glm: GlmOptions::default(),
        }
    }
}

/// Mediator-sum terms for one (fold, x) cell.
pub fn cell_terms(g: &FittedMediatorModel, f: &FittedOutcomeModel, fold: usize, x: usize) -> Result<EffectTerms> {
    if g.n_levels != f.n_levels {
        return Err(Error::Data(format!(
            "mediator model has {} levels but outcome model has {}",
            g.n_levels, f.n_levels
        )));
    }
    let mut terms = EffectTerms::default();
    for m in 0..g.n_levels {
        let g0 = g.prob(fold, m, 0, x)?;
        let g1 = g.prob(fold, m, 1, x)?;
        let f0 = f.expected(fold, m, 0, x)?;
        let f1 = f.expected(fold, m, 1, x)?;
        terms.nde += (f1 - f0) * g0;
        terms.nie += f0 * (g1 - g0);
        terms.nie_reversed += f1 * (g1 - g0);
        terms.total_effect += f1 * g1 - f0 * g0;
    }
    Ok(terms)
}

/// All four plug-in estimates, cross-fitted.
pub fn effect_terms(
    data: &Dataset,
    g: &FittedMediatorModel,
    f: &FittedOutcomeModel,
    weighting: XWeighting,
) -> Result<EffectTerms> {
    if data.is_empty() {
        return Err(Error::Data("no records to estimate from".into()));
    }
    let counts = data.fold_x_counts();
    let n = data.len() as f64;
    let mut total = EffectTerms::default();
    match weighting {
        XWeighting::PerUnit => {
            for (fold, row) in counts.iter().enumerate() {
                for (x, &c) in row.iter().enumerate() {
                    if c > 0 {
                        total.scaled_add(&cell_terms(g, f, fold, x)?, c as f64);
                    }
                }
            }
            for v in [&mut total.nde, &mut total.nie, &mut total.nie_reversed, &mut total.total_effect] {
                *v /= n;
            }
        }
        XWeighting::TrainingMarginal => {
            let n_x = data.n_x();
            for (fold, row) in counts.iter().enumerate() {
                let n_test: usize = row.iter().sum();
                if n_test == 0 {
                    continue;
                }
                let train: Vec<usize> = (0..n_x)
                    .map(|x| counts.iter().enumerate().filter(|(k, _)| *k != fold).map(|(_, r)| r[x]).sum())
                    .collect();
                let n_train: usize = train.iter().sum();
                if n_train == 0 {
                    return Err(Error::Data(format!("fold {fold} has no training units")));
                }
                let mut fold_terms = EffectTerms::default();
                for (x, &c) in train.iter().enumerate() {
                    if c > 0 {
                        fold_terms.scaled_add(&cell_terms(g, f, fold, x)?, c as f64 / n_train as f64);
                    }
                }
                total.scaled_add(&fold_terms, n_test as f64 / n);
            }
        }
    }
    Ok(total)
}

pub fn sa_nde(data: &Dataset, g: &FittedMediatorModel, f: &FittedOutcomeModel) -> Result<f64> {
    Ok(effect_terms(data, g, f, XWeighting::PerUnit)?.nde)
}

pub fn sa_nie(data: &Dataset, g: &FittedMediatorModel, f: &FittedOutcomeModel) -> Result<f64> {
    Ok(effect_terms(data, g, f, XWeighting::PerUnit)?.nie)
}

pub fn total_effect(data: &Dataset, g: &FittedMediatorModel, f: &FittedOutcomeModel) -> Result<f64> {
    Ok(effect_terms(data, g, f, XWeighting::PerUnit)?.total_effect)
}

/// Fits both nuisance models for `mediator` and returns the point estimates.
pub fn point_estimate(data: &Dataset, mediator: &str, config: &EstimationConfig) -> Result<EffectTerms> {
    let g = crate::glm::fit_mediator_model(data, mediator, &config.glm)?;
    let f = crate::glm::fit_outcome_model(data, mediator, &config.glm)?;
    effect_terms(data, &g, &f, config.x_weighting)
}
