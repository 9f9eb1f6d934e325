//! Ridge-stabilized multinomial logistic regression on grouped data, fitted by
//! Newton-Raphson (iteratively reweighted least squares) with step halving.
//!
//! Class 0 is the reference class. Coefficients are stored class-major:
//! `coef[(class - 1) * p + j]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute coefficient change.
    pub tol: f64,
    /// L2 penalty on every coefficient; keeps separated fits finite.
    pub ridge: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsFit {
    pub coef: Vec<f64>,
    pub n_classes: usize,
    pub n_features: usize,
    pub iterations: usize,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IrlsError {
    NotConverged { iterations: usize, max_change: f64 },
    Singular,
    BadInput(String),
}

/// Class probabilities for one design row.
pub fn predict(coef: &[f64], row: &[f64], n_classes: usize) -> Vec<f64> {
    let p = row.len();
    let mut eta = vec![0.0; n_classes];
    for l in 1..n_classes {
        let b = &coef[(l - 1) * p..l * p];
        eta[l] = b.iter().zip(row).map(|(a, x)| a * x).sum();
    }
    softmax(&mut eta);
    eta
}

fn softmax(eta: &mut [f64]) {
    let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for e in eta.iter_mut() {
        *e = (*e - max).exp();
        total += *e;
    }
    for e in eta.iter_mut() {
        *e /= total;
    }
}

fn log_likelihood(coef: &[f64], design: &[Vec<f64>], counts: &[Vec<f64>], n_classes: usize) -> f64 {
    let mut ll = 0.0;
    for (row, y) in design.iter().zip(counts) {
        let probs = predict(coef, row, n_classes);
        for (c, p) in y.iter().zip(&probs) {
            if *c > 0.0 {
                ll += c * p.max(f64::MIN_POSITIVE).ln();
            }
        }
    }
    ll
}

fn penalized(coef: &[f64], design: &[Vec<f64>], counts: &[Vec<f64>], n_classes: usize, ridge: f64) -> f64 {
    log_likelihood(coef, design, counts, n_classes) - 0.5 * ridge * coef.iter().map(|b| b * b).sum::<f64>()
}

/// `design[c]` is the covariate row of cell `c`; `counts[c][l]` the number of
/// observations of class `l` in that cell.
pub fn fit_multinomial(design: &[Vec<f64>], counts: &[Vec<f64>], opts: &IrlsOptions) -> Result<IrlsFit, IrlsError> {
    let n_classes = counts.first().map_or(0, Vec::len);
    let p = design.first().map_or(0, Vec::len);
    if design.is_empty() || design.len() != counts.len() {
        return Err(IrlsError::BadInput("design and counts must be non-empty and aligned".into()));
    }
    if n_classes < 2 || counts.iter().any(|c| c.len() != n_classes) || design.iter().any(|r| r.len() != p) {
        return Err(IrlsError::BadInput("ragged design or counts".into()));
    }
    let q = (n_classes - 1) * p;
    let mut coef = vec![0.0; q];
    let mut objective = penalized(&coef, design, counts, n_classes, opts.ridge);
    let mut max_change = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        let mut grad = DVector::<f64>::zeros(q);
        let mut info = DMatrix::<f64>::zeros(q, q);
        for (row, y) in design.iter().zip(counts) {
            let n: f64 = y.iter().sum();
            if n == 0.0 {
                continue;
            }
            let probs = predict(&coef, row, n_classes);
            for l in 1..n_classes {
                let resid = y[l] - n * probs[l];
                for j in 0..p {
                    grad[(l - 1) * p + j] += resid * row[j];
                }
                for l2 in 1..n_classes {
                    let w = n * probs[l] * (f64::from(u8::from(l == l2)) - probs[l2]);
                    if w == 0.0 {
                        continue;
                    }
                    for j in 0..p {
                        let wx = w * row[j];
                        if wx == 0.0 {
                            continue;
                        }
                        for k in 0..p {
                            info[((l - 1) * p + j, (l2 - 1) * p + k)] += wx * row[k];
                        }
                    }
                }
            }
        }
        for i in 0..q {
            grad[i] -= opts.ridge * coef[i];
            info[(i, i)] += opts.ridge;
        }

        let step = match info.clone().cholesky() {
            Some(chol) => chol.solve(&grad),
            None => info.lu().solve(&grad).ok_or(IrlsError::Singular)?,
        };
        if step.iter().any(|s| !s.is_finite()) {
            return Err(IrlsError::Singular);
        }

        let mut scale = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_obj;
        loop {
            candidate = coef.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            cand_obj = penalized(&candidate, design, counts, n_classes, opts.ridge);
            if cand_obj >= objective - 1e-12 * objective.abs().max(1.0) || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        max_change = step.iter().map(|s| (scale * s).abs()).fold(0.0, f64::max);
        coef = candidate;
        objective = cand_obj;
        if max_change < opts.tol {
            return Ok(IrlsFit {
                log_likelihood: log_likelihood(&coef, design, counts, n_classes),
                coef,
                n_classes,
                n_features: p,
                iterations: iter,
            });
        }
    }
    Err(IrlsError::NotConverged {
        iterations: opts.max_iter,
        max_change,
    })
}
