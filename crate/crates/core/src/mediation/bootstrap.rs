use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{point_estimate, EffectEstimate, EffectTerms, EstimationConfig, Interval, NDE_CAVEAT};
use crate::error::{Error, Result};
use crate::glm::{training_levels, Dataset};
use crate::rng::stage_rng;

const MIN_REPLICATES: usize = 100;
const MAX_DROPPED_FRACTION: f64 = 0.10;

/// Linear-interpolation quantile of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn observed_levels(data: &Dataset) -> (BTreeSet<u8>, Vec<BTreeSet<usize>>) {
    let schema = data.schema();
    let mut ts = BTreeSet::new();
    let mut xs = vec![BTreeSet::new(); schema.confounders.len()];
    for i in 0..data.len() {
        ts.insert(data.t[i]);
        for (c, level) in Dataset::decode_x(schema, data.x[i]).into_iter().enumerate() {
            xs[c].insert(level);
        }
    }
    (ts, xs)
}

/// One replicate: resample rows, reassign folds by position, refit, re-estimate.
/// `None` when a training fold lost a treatment arm or confounder level.
fn replicate(
    data: &Dataset,
    mediator: &str,
    config: &EstimationConfig,
    r: usize,
    original: &(BTreeSet<u8>, Vec<BTreeSet<usize>>),
) -> Result<Option<EffectTerms>> {
    let n = data.len();
    let mut rng = stage_rng(config.seed, &format!("bootstrap/{r}"));
    let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut folds = vec![0; n];
    for (k, &pos) in order.iter().enumerate() {
        folds[pos] = k % data.n_folds();
    }
    let sample = data.resample(&indices, folds, data.n_folds());
    let collapsed = training_levels(&sample).iter().any(|(ts, xs)| {
        !original.0.is_subset(ts) || original.1.iter().zip(xs).any(|(want, got)| !want.is_subset(got))
    });
    if collapsed {
        log::debug!("bootstrap replicate {r} for `{mediator}` dropped: collapsed covariate level");
        return Ok(None);
    }
    point_estimate(&sample, mediator, config).map(Some)
}

/// Point estimates plus percentile bootstrap intervals for one mediator.
///
/// Replicate `r` draws from a generator seeded by `(config.seed, r)` only, so
/// the result does not depend on thread count or on which other mediators are
/// estimated in the same run.
pub fn bootstrap_effects(data: &Dataset, mediator: &str, config: &EstimationConfig) -> Result<EffectEstimate> {
    if !(config.ci_level > 0.0 && config.ci_level < 1.0) {
        return Err(Error::Config(format!("ci level must be in (0, 1), got {}", config.ci_level)));
    }
    if config.n_bootstrap != 0 && config.n_bootstrap < MIN_REPLICATES {
        return Err(Error::Config(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
            config.n_bootstrap
        )));
    }
    let point = point_estimate(data, mediator, config)?;
    let mut estimate = EffectEstimate {
        mediator: mediator.to_string(),
        nde: point.nde,
        nie: point.nie,
        nie_reversed: point.nie_reversed,
        total_effect: point.total_effect,
        ci_level: config.ci_level,
        nde_ci: None,
        nie_ci: None,
        n_units: data.len(),
        n_bootstrap: 0,
        n_dropped: 0,
        caveat: NDE_CAVEAT.to_string(),
    };
    if config.n_bootstrap == 0 {
        return Ok(estimate);
    }

    let original = observed_levels(data);
    let results: Vec<Result<Option<EffectTerms>>> = (0..config.n_bootstrap)
        .into_par_iter()
        .map(|r| replicate(data, mediator, config, r, &original))
        .collect();
    let mut kept = Vec::with_capacity(results.len());
    for res in results {
        if let Some(terms) = res? {
            kept.push(terms);
        }
    }
    let dropped = config.n_bootstrap - kept.len();
    if dropped as f64 > MAX_DROPPED_FRACTION * config.n_bootstrap as f64 {
        return Err(Error::BootstrapDropped {
            dropped,
            total: config.n_bootstrap,
        });
    }
    if dropped > 0 {
        log::warn!("`{mediator}`: dropped {dropped} of {} bootstrap replicates", config.n_bootstrap);
    }

    let alpha = (1.0 - config.ci_level) / 2.0;
    let interval = |values: Vec<f64>, point: f64| {
        let mut v = values;
        v.sort_by(f64::total_cmp);
        Interval {
            lower: percentile(&v, alpha).min(point),
            upper: percentile(&v, 1.0 - alpha).max(point),
        }
    };
    estimate.nde_ci = Some(interval(kept.iter().map(|t| t.nde).collect(), point.nde));
    estimate.nie_ci = Some(interval(kept.iter().map(|t| t.nie).collect(), point.nie));
    estimate.n_bootstrap = kept.len();
    estimate.n_dropped = dropped;
    Ok(estimate)
}

/// Each mediator is estimated on its own, ignoring the others.
pub fn estimate_all(data: &Dataset, mediators: &[String], config: &EstimationConfig) -> Result<Vec<EffectEstimate>> {
    mediators.iter().map(|m| bootstrap_effects(data, m, config)).collect()
}
