//! Estimate exports and the human-readable summary.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::mediation::{EffectEstimate, Interval, NDE_CAVEAT};

fn sorted(estimates: &[EffectEstimate]) -> Vec<&EffectEstimate> {
    let mut v: Vec<&EffectEstimate> = estimates.iter().collect();
    v.sort_by(|a, b| a.mediator.cmp(&b.mediator));
    v
}

fn bound(ci: Option<Interval>, upper: bool) -> String {
    ci.map(|c| if upper { c.upper } else { c.lower }.to_string()).unwrap_or_default()
}

pub fn write_estimates_csv<W: Write>(estimates: &[EffectEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "mediator",
        "nde",
        "nie",
        "nie_reversed",
        "total_effect",
        "ci_level",
        "nde_lower",
        "nde_upper",
        "nie_lower",
        "nie_upper",
        "n_units",
        "n_bootstrap",
        "n_dropped",
    ])?;
    for e in sorted(estimates) {
        w.write_record([
            e.mediator.clone(),
            e.nde.to_string(),
            e.nie.to_string(),
            e.nie_reversed.to_string(),
            e.total_effect.to_string(),
            e.ci_level.to_string(),
            bound(e.nde_ci, false),
            bound(e.nde_ci, true),
            bound(e.nie_ci, false),
            bound(e.nie_ci, true),
            e.n_units.to_string(),
            e.n_bootstrap.to_string(),
            e.n_dropped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_estimates_jsonl<W: Write>(estimates: &[EffectEstimate], mut out: W) -> Result<()> {
    for e in sorted(estimates) {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_estimates_jsonl<R: BufRead>(input: R) -> Result<Vec<EffectEstimate>> {
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

/// Long format: one row per (mediator, effect) with its interval, if any.
pub fn write_plot_data<W: Write>(estimates: &[EffectEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mediator", "effect", "estimate", "lower", "upper"])?;
    for e in sorted(estimates) {
        for (name, value, ci) in [
            ("nde", e.nde, e.nde_ci),
            ("nie", e.nie, e.nie_ci),
            ("total_effect", e.total_effect, None),
        ] {
            w.write_record([
                e.mediator.clone(),
                name.to_string(),
                value.to_string(),
                bound(ci, false),
                bound(ci, true),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt_ci(ci: Option<Interval>) -> String {
    match ci {
        Some(c) => format!("[{:.4}, {:.4}]", c.lower, c.upper),
        None => "-".to_string(),
    }
}

/// Plain-text summary, mediators sorted by name. The caveat block is always present.
pub fn render_report(estimates: &[EffectEstimate]) -> String {
    let mut s = String::new();
    s.push_str("Mediation effects by language mediator (T = 0 is the reference arm)\n\n");
    s.push_str("Caveat: ");
    s.push_str(NDE_CAVEAT);
    s.push_str("\n\n");
    let _ = writeln!(
        s,
        "{:<12} {:>9} {:>20} {:>9} {:>20} {:>9} {:>7} {:>6}",
        "mediator", "NDE", "NDE interval", "NIE", "NIE interval", "TE", "N", "level"
    );
    for e in sorted(estimates) {
        let _ = writeln!(
            s,
            "{:<12} {:>9.4} {:>20} {:>9.4} {:>20} {:>9.4} {:>7} {:>6}",
            e.mediator,
            e.nde,
            fmt_ci(e.nde_ci),
            e.nie,
            fmt_ci(e.nie_ci),
            e.total_effect,
            e.n_units,
            if e.nde_ci.is_some() { format!("{:.2}", e.ci_level) } else { "-".into() },
        );
    }
    s
}
