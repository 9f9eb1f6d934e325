use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Model, ScmSpec};
use crate::error::{Error, Result};
use crate::rng::{categorical_index, stage_rng};

/// True effects for one mediator. For mediator j, `expectations[t][t2]` is
/// E[Y(t, Mʲ(t2), M⁻ʲ(t))]: only Mʲ is held at its t2 value, the other
/// mediators follow the treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub mediator: String,
    pub nde: f64,
    pub nie: f64,
    pub te: f64,
    pub nie_reversed: f64,
    pub expectations: [[f64; 2]; 2],
}

impl OracleResult {
    fn from_expectations(mediator: &str, e: [[f64; 2]; 2]) -> Self {
        Self {
            mediator: mediator.to_string(),
            nde: e[1][0] - e[0][0],
            nie: e[0][1] - e[0][0],
            te: e[1][1] - e[0][0],
            nie_reversed: e[1][1] - e[1][0],
            expectations: e,
        }
    }
}

/// Exact effects by summation over the (X, U, M) grid, one result per mediator.
pub fn exact_effects(spec: &ScmSpec) -> Result<Vec<OracleResult>> {
    if spec.coupling != 0.0 || spec.carryover != 0.0 {
        return Err(Error::Config(
            "the enumeration oracle needs coupling = 0 and carryover = 0".into(),
        ));
    }
    let model = spec.compile()?;
    let k = model.mediators.len();
    let m_grid = model.m_grid();
    let u_probs = model.u_probs();
    let mut e = vec![[[0.0f64; 2]; 2]; k];
    for x in model.x_grid() {
        let px = model.x_prob(&x);
        if px == 0.0 {
            continue;
        }
        for (u, &pu) in u_probs.iter().enumerate() {
            if pu == 0.0 {
                continue;
            }
            let u = u as u8;
            // g[t][j][level]
            let g: Vec<Vec<Vec<f64>>> = (0..2u8)
                .map(|t| (0..k).map(|j| model.mediator_probs(j, t, &x, u, 0, 0)).collect())
                .collect();
            for m in &m_grid {
                for t in 0..2u8 {
                    let y = model.outcome_prob(m, t, &x, u, 0);
                    for (j, ej) in e.iter_mut().enumerate() {
                        for t2 in 0..2usize {
                            let mut w = px * pu;
                            for (i, level) in m.iter().enumerate() {
                                let arm = if i == j { t2 } else { usize::from(t) };
                                w *= g[arm][i][*level];
                            }
                            ej[usize::from(t)][t2] += w * y;
                        }
                    }
                }
            }
        }
    }
    Ok(model
        .names
        .iter()
        .zip(e)
        .map(|(name, ej)| OracleResult::from_expectations(name, ej))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub mediator: String,
    pub draws: u64,
    pub nde: f64,
    pub nie: f64,
    pub te: f64,
    pub nde_se: f64,
    pub nie_se: f64,
    pub te_se: f64,
}

const CHUNK: u64 = 1 << 16;

/// Integer tallies for one mediator: sums of Y(t, t2) and of the effect
/// differences and their absolute values (differences are in {-1, 0, 1}).
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    nde: i64,
    nie: i64,
    te: i64,
    nde_abs: u64,
    nie_abs: u64,
    te_abs: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.nde += o.nde;
        self.nie += o.nie;
        self.te += o.te;
        self.nde_abs += o.nde_abs;
        self.nie_abs += o.nie_abs;
        self.te_abs += o.te_abs;
    }
}

struct Tables {
    /// cumulative P(Mʲ | t, x, u) at `[(t * n_x + x) * 2 + u][j]`
    med_cdf: Vec<Vec<Vec<f64>>>,
    /// P(Y = 1 | m, t, x, u) at `((m_flat * 2 + t) * n_x + x) * 2 + u`
    outcome: Vec<f64>,
    m_radix: Vec<usize>,
    n_x: usize,
}

impl Tables {
    fn new(model: &Model) -> Self {
        let n_x = model.n_x();
        let xs = model.x_grid();
        let mut med_cdf = Vec::with_capacity(2 * n_x * 2);
        for t in 0..2u8 {
            for x in &xs {
                for u in 0..2u8 {
                    med_cdf.push(
                        (0..model.mediators.len())
                            .map(|j| {
                                let mut acc = 0.0;
                                model
                                    .mediator_probs(j, t, x, u, 0, 0)
                                    .into_iter()
                                    .map(|p| {
                                        acc += p;
                                        acc
                                    })
                                    .collect()
                            })
                            .collect(),
                    );
                }
            }
        }
        let mut outcome = Vec::new();
        for m in model.m_grid() {
            for t in 0..2u8 {
                for x in &xs {
                    for u in 0..2u8 {
                        outcome.push(model.outcome_prob(&m, t, x, u, 0));
                    }
                }
            }
        }
        Self {
            med_cdf,
            outcome,
            m_radix: model.mediators.iter().map(|m| m.n_levels).collect(),
            n_x,
        }
    }

    fn draw_level(cdf: &[f64], v: f64) -> usize {
        cdf.iter().position(|c| v < *c).unwrap_or(cdf.len() - 1)
    }

    fn y_prob(&self, m: &[usize], t: usize, x: usize, u: usize) -> f64 {
        let m_flat = m.iter().zip(&self.m_radix).fold(0, |acc, (l, r)| acc * r + l);
        self.outcome[((m_flat * 2 + t) * self.n_x + x) * 2 + u]
    }
}

/// Counterfactual simulation of the same quantities as [`exact_effects`]:
/// each draw samples X and U, couples Mʲ(0) and Mʲ(1) through one uniform per
/// mediator, and couples every potential outcome through one uniform for Y.
pub fn monte_carlo_effects(spec: &ScmSpec, draws: u64, seed: u64) -> Result<Vec<MonteCarloResult>> {
    if spec.coupling != 0.0 || spec.carryover != 0.0 {
        return Err(Error::Config(
            "counterfactual simulation needs coupling = 0 and carryover = 0".into(),
        ));
    }
    if draws == 0 {
        return Err(Error::Config("need at least one draw".into()));
    }
    let model = spec.compile()?;
    let tables = Tables::new(&model);
    let k = model.mediators.len();
    let u_prob = model.u_prob.unwrap_or(0.0);
    let n_chunks = draws.div_ceil(CHUNK);

    let tallies: Vec<Vec<Tally>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stage_rng(seed, &format!("monte-carlo/{c}"));
            let size = CHUNK.min(draws - c * CHUNK);
            let mut tally = vec![Tally::default(); k];
            let mut m0 = vec![0usize; k];
            let mut m1 = vec![0usize; k];
            let mut m = vec![0usize; k];
            for _ in 0..size {
                let mut x = 0usize;
                for (probs, radix) in model.x_probs.iter().zip(&model.x_levels) {
                    x = x * radix + categorical_index(probs, rng.gen::<f64>());
                }
                let u = usize::from(rng.gen::<f64>() < u_prob);
                for j in 0..k {
                    let v: f64 = rng.gen();
                    m0[j] = Tables::draw_level(&tables.med_cdf[(x) * 2 + u][j], v);
                    m1[j] = Tables::draw_level(&tables.med_cdf[(tables.n_x + x) * 2 + u][j], v);
                }
                let w: f64 = rng.gen();
                for (j, tj) in tally.iter_mut().enumerate() {
                    let mut y = [[0i64; 2]; 2];
                    for (t, row) in y.iter_mut().enumerate() {
                        for (t2, cell) in row.iter_mut().enumerate() {
                            for i in 0..k {
                                let own = if i == j { t2 } else { t };
                                m[i] = if own == 1 { m1[i] } else { m0[i] };
                            }
                            *cell = i64::from(w < tables.y_prob(&m, t, x, u));
                        }
                    }
                    let nde = y[1][0] - y[0][0];
                    let nie = y[0][1] - y[0][0];
                    let te = y[1][1] - y[0][0];
                    tj.nde += nde;
                    tj.nie += nie;
                    tj.te += te;
                    tj.nde_abs += nde.unsigned_abs();
                    tj.nie_abs += nie.unsigned_abs();
                    tj.te_abs += te.unsigned_abs();
                }
            }
            tally
        })
        .collect();

    let mut total = vec![Tally::default(); k];
    for chunk in &tallies {
        for (acc, t) in total.iter_mut().zip(chunk) {
            acc.add(t);
        }
    }
    let n = draws as f64;
    let mean_se = |sum: i64, sq: u64| {
        let mean = sum as f64 / n;
        let var = (sq as f64 / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    };
    Ok(model
        .names
        .iter()
        .zip(total)
        .map(|(name, t)| {
            let (nde, nde_se) = mean_se(t.nde, t.nde_abs);
            let (nie, nie_se) = mean_se(t.nie, t.nie_abs);
            let (te, te_se) = mean_se(t.te, t.te_abs);
            MonteCarloResult {
                mediator: name.clone(),
                draws,
                nde,
                nie,
                te,
                nde_se,
                nie_se,
                te_se,
            }
        })
        .collect())
}
