//! Structural causal model over categorical confounders X, an optional binary
//! unmeasured confounder U, a binary treatment T, categorical mediators and a
//! binary outcome Y. Every law is a logit or multinomial logit in its parents:
//!
//! ```text
//! P(T=1 | x)         = σ(a_T + Σ_c β_T[c][x_c])
//! P(Mʲ=l | t, x, u)  ∝ exp(a[l] + b[l]·t + Σ_c β[c][l][x_c] + γ[l]·u)        (l ≥ 1; level 0 has logit 0)
//! P(Y=1 | m, t, x, u) = σ(a_Y + b_Y·t + Σ_j (β_M[j][mʲ] + β_TM[j][mʲ]·t) + Σ_c β_X[c][x_c] + γ_Y·u)
//! ```
//!
//! Two optional edges break the mediation assumptions on purpose: `coupling`
//! adds ρ·M¹ to the non-reference logits of every later mediator, and
//! `carryover` adds τ·Yᵢ₋₁ to unit i's mediator and outcome logits.

mod generate;
mod oracle;
mod study;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use generate::{generate, generate_with_folds, render_transcript, RenderedCorpus, Simulation, ADVOCATE_INDEX};
pub use oracle::{exact_effects, monte_carlo_effects, MonteCarloResult, OracleResult};
pub use study::{violation_study, write_study, Knob, StudyConfig, StudyRow};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfounderLaw {
    pub name: String,
    pub levels: Vec<String>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentLaw {
    pub intercept: f64,
    /// Per confounder, one coefficient per level.
    #[serde(default)]
    pub x: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediatorLaw {
    pub name: String,
    pub levels: Vec<String>,
    /// One entry per non-reference level.
    pub intercept: Vec<f64>,
    pub t: Vec<f64>,
    /// Per confounder: `[non-reference level][confounder level]`.
    #[serde(default)]
    pub x: BTreeMap<String, Vec<Vec<f64>>>,
    /// Effect of U per non-reference level; empty means none.
    #[serde(default)]
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeLaw {
    pub intercept: f64,
    pub t: f64,
    /// Per mediator, one coefficient per mediator level.
    #[serde(default)]
    pub m: BTreeMap<String, Vec<f64>>,
    /// Treatment-by-mediator interaction, per mediator level.
    #[serde(default)]
    pub tm: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub x: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnmeasuredLaw {
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmSpec {
    #[serde(default)]
    pub confounders: Vec<ConfounderLaw>,
    pub treatment: TreatmentLaw,
    pub mediators: Vec<MediatorLaw>,
    pub outcome: OutcomeLaw,
    #[serde(default)]
    pub unmeasured: Option<UnmeasuredLaw>,
    #[serde(default)]
    pub coupling: f64,
    #[serde(default)]
    pub carryover: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScmSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScmSpec = serde_json::from_str(text).map_err(|e| Error::Config(format!("scm spec: {e}")))?;
        spec.compile()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scm spec {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Validates the spec and evaluates every law over its full parent grid.
    pub fn validate(&self) -> Result<()> {
        self.compile().map(|_| ())
    }

    /// True when no assumption-violating edge is active.
    pub fn satisfies_assumptions(&self) -> bool {
        self.coupling == 0.0 && self.carryover == 0.0 && self.unmeasured.is_none()
    }

    pub(crate) fn compile(&self) -> Result<Model> {
        Model::new(self)
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(format!("scm spec: {}", msg.into()))
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(bad(format!("{what} has a non-finite coefficient")))
    }
}

fn check_levels(levels: &[String], what: &str) -> Result<()> {
    if levels.is_empty() {
        return Err(bad(format!("{what} has no levels")));
    }
    let distinct: BTreeSet<&String> = levels.iter().collect();
    if distinct.len() != levels.len() {
        return Err(bad(format!("{what} has duplicate levels")));
    }
    Ok(())
}

/// Per-confounder coefficient vectors, aligned with the confounder list.
fn per_confounder(map: &BTreeMap<String, Vec<f64>>, confounders: &[ConfounderLaw], what: &str) -> Result<Vec<Vec<f64>>> {
    for name in map.keys() {
        if !confounders.iter().any(|c| &c.name == name) {
            return Err(bad(format!("{what} refers to unknown confounder `{name}`")));
        }
    }
    confounders
        .iter()
        .map(|c| match map.get(&c.name) {
            None => Ok(vec![0.0; c.levels.len()]),
            Some(v) if v.len() == c.levels.len() => {
                check_finite(v, what)?;
                Ok(v.clone())
            }
            Some(v) => Err(bad(format!(
                "{what}: confounder `{}` needs {} coefficients, got {}",
                c.name,
                c.levels.len(),
                v.len()
            ))),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) struct MediatorModel {
    pub n_levels: usize,
    pub intercept: Vec<f64>,
    pub t: Vec<f64>,
    /// `[confounder][non-reference level][confounder level]`
    pub x: Vec<Vec<Vec<f64>>>,
    pub u: Vec<f64>,
}

/// Index-based form of a validated spec.
#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub names: Vec<String>,
    pub x_levels: Vec<usize>,
    pub x_probs: Vec<Vec<f64>>,
    pub treat_intercept: f64,
    pub treat_x: Vec<Vec<f64>>,
    pub mediators: Vec<MediatorModel>,
    pub out_intercept: f64,
    pub out_t: f64,
    pub out_m: Vec<Vec<f64>>,
    pub out_tm: Vec<Vec<f64>>,
    pub out_x: Vec<Vec<f64>>,
    pub out_u: f64,
    pub u_prob: Option<f64>,
    pub coupling: f64,
    pub carryover: f64,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Model {
    fn new(spec: &ScmSpec) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &spec.confounders {
            if !seen.insert(c.name.as_str()) {
                return Err(bad(format!("duplicate confounder `{}`", c.name)));
            }
            check_levels(&c.levels, &format!("confounder `{}`", c.name))?;
            if c.probs.len() != c.levels.len() {
                return Err(bad(format!("confounder `{}`: one probability per level required", c.name)));
            }
            if c.probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (c.probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(bad(format!("confounder `{}`: probabilities must be non-negative and sum to 1", c.name)));
            }
        }
        if spec.mediators.is_empty() {
            return Err(bad("at least one mediator is required"));
        }
        let mut med_names = BTreeSet::new();
        let mut mediators = Vec::new();
        for m in &spec.mediators {
            if !med_names.insert(m.name.as_str()) {
                return Err(bad(format!("duplicate mediator `{}`", m.name)));
            }
            let what = format!("mediator `{}`", m.name);
            check_levels(&m.levels, &what)?;
            let l = m.levels.len();
            if l < 2 {
                return Err(bad(format!("{what} needs at least two levels")));
            }
            if m.intercept.len() != l - 1 || m.t.len() != l - 1 {
                return Err(bad(format!("{what}: intercept and t need {} entries", l - 1)));
            }
            let u = if m.u.is_empty() { vec![0.0; l - 1] } else { m.u.clone() };
            if u.len() != l - 1 {
                return Err(bad(format!("{what}: u needs {} entries", l - 1)));
            }
            check_finite(&m.intercept, &what)?;
            check_finite(&m.t, &what)?;
            check_finite(&u, &what)?;
            for name in m.x.keys() {
                if !spec.confounders.iter().any(|c| &c.name == name) {
                    return Err(bad(format!("{what} refers to unknown confounder `{name}`")));
                }
            }
            let mut x = Vec::new();
            for c in &spec.confounders {
                match m.x.get(&c.name) {
                    None => x.push(vec![vec![0.0; c.levels.len()]; l - 1]),
                    Some(rows) => {
                        if rows.len() != l - 1 || rows.iter().any(|r| r.len() != c.levels.len()) {
                            return Err(bad(format!(
                                "{what}: confounder `{}` needs {}x{} coefficients",
                                c.name,
                                l - 1,
                                c.levels.len()
                            )));
                        }
                        for r in rows {
                            check_finite(r, &what)?;
                        }
                        x.push(rows.clone());
                    }
                }
            }
            mediators.push(MediatorModel {
                n_levels: l,
                intercept: m.intercept.clone(),
                t: m.t.clone(),
                x,
                u,
            });
        }

        let per_mediator = |map: &BTreeMap<String, Vec<f64>>, what: &str| -> Result<Vec<Vec<f64>>> {
            for name in map.keys() {
                if !med_names.contains(name.as_str()) {
                    return Err(bad(format!("{what} refers to unknown mediator `{name}`")));
                }
            }
            spec.mediators
                .iter()
                .map(|m| match map.get(&m.name) {
                    None => Ok(vec![0.0; m.levels.len()]),
                    Some(v) if v.len() == m.levels.len() => {
                        check_finite(v, what)?;
                        Ok(v.clone())
                    }
                    Some(_) => Err(bad(format!("{what}: mediator `{}` needs one coefficient per level", m.name))),
                })
                .collect()
        };

        let o = &spec.outcome;
        check_finite(&[o.intercept, o.t, o.u, spec.treatment.intercept], "intercepts")?;
        if let Some(u) = spec.unmeasured {
            if !(0.0..=1.0).contains(&u.prob) {
                return Err(bad("unmeasured confounder probability must lie in [0, 1]"));
            }
        }
        if !spec.coupling.is_finite() || !spec.carryover.is_finite() {
            return Err(bad("coupling and carryover must be finite"));
        }
        if spec.coupling != 0.0 && spec.mediators.len() < 2 {
            return Err(bad("mediator coupling needs at least two mediators"));
        }

        let model = Model {
            names: spec.mediators.iter().map(|m| m.name.clone()).collect(),
            x_levels: spec.confounders.iter().map(|c| c.levels.len()).collect(),
            x_probs: spec.confounders.iter().map(|c| c.probs.clone()).collect(),
            treat_intercept: spec.treatment.intercept,
            treat_x: per_confounder(&spec.treatment.x, &spec.confounders, "treatment")?,
            mediators,
            out_intercept: o.intercept,
            out_t: o.t,
            out_m: per_mediator(&o.m, "outcome m")?,
            out_tm: per_mediator(&o.tm, "outcome tm")?,
            out_x: per_confounder(&o.x, &spec.confounders, "outcome")?,
            out_u: o.u,
            u_prob: spec.unmeasured.map(|u| u.prob),
            coupling: spec.coupling,
            carryover: spec.carryover,
        };
        model.check_grid()?;
        Ok(model)
    }

    /// Evaluates every law at every parent combination.
    fn check_grid(&self) -> Result<()> {
        let ok = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        for x in self.x_grid() {
            if !ok(self.treatment_prob(&x)) {
                return Err(bad("treatment law is not a valid probability"));
            }
            for u in 0..2u8 {
                for t in 0..2u8 {
                    for (j, _) in self.mediators.iter().enumerate() {
                        let probs = self.mediator_probs(j, t, &x, u, 0, 0);
                        if !probs.iter().all(|p| ok(*p)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                            return Err(bad(format!("mediator `{}` law is not a valid distribution", self.names[j])));
                        }
                    }
                    for m in self.m_grid() {
                        if !ok(self.outcome_prob(&m, t, &x, u, 0)) {
                            return Err(bad("outcome law is not a valid probability"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.x_levels.iter().product()
    }

    /// Every confounder level combination, first confounder most significant.
    pub fn x_grid(&self) -> Vec<Vec<usize>> {
        product(&self.x_levels)
    }

    pub fn m_grid(&self) -> Vec<Vec<usize>> {
        product(&self.mediators.iter().map(|m| m.n_levels).collect::<Vec<_>>())
    }

    pub fn x_prob(&self, x: &[usize]) -> f64 {
        x.iter().zip(&self.x_probs).map(|(l, p)| p[*l]).product()
    }

    pub fn u_probs(&self) -> [f64; 2] {
        match self.u_prob {
            Some(p) => [1.0 - p, p],
            None => [1.0, 0.0],
        }
    }

    pub fn treatment_prob(&self, x: &[usize]) -> f64 {
        let z = self.treat_intercept + x.iter().zip(&self.treat_x).map(|(l, b)| b[*l]).sum::<f64>();
        sigmoid(z)
    }

    /// `m0` is the level of the first mediator (used by coupling), `y_prev`
    /// the previous unit's outcome (used by carryover).
    pub fn mediator_probs(&self, j: usize, t: u8, x: &[usize], u: u8, m0: usize, y_prev: u8) -> Vec<f64> {
        let med = &self.mediators[j];
        let mut logits = vec![0.0; med.n_levels];
        for l in 1..med.n_levels {
            let mut z = med.intercept[l - 1] + med.t[l - 1] * f64::from(t) + med.u[l - 1] * f64::from(u);
            for (c, level) in x.iter().enumerate() {
                z += med.x[c][l - 1][*level];
            }
            if j > 0 {
                z += self.coupling * m0 as f64;
            }
            z += self.carryover * f64::from(y_prev);
            logits[l] = z;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in logits.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        logits.iter().map(|v| v / total).collect()
    }

    pub fn outcome_prob(&self, m: &[usize], t: u8, x: &[usize], u: u8, y_prev: u8) -> f64 {
        let tf = f64::from(t);
        let mut z = self.out_intercept + self.out_t * tf + self.out_u * f64::from(u);
        for (j, level) in m.iter().enumerate() {
            z += self.out_m[j][*level] + self.out_tm[j][*level] * tf;
        }
        for (c, level) in x.iter().enumerate() {
            z += self.out_x[c][*level];
        }
        z += self.carryover * f64::from(y_prev);
        sigmoid(z)
    }
}

/// Mixed-radix enumeration, last position fastest.
fn product(radix: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &r in radix {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..r).map(move |l| {
                    let mut v = prefix.clone();
                    v.push(l);
                    v
                })
            })
            .collect();
    }
    out
}
