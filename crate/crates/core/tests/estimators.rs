mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use medlang::glm::{
    fit_mediator_model, fit_outcome_model, Dataset, FittedMediatorModel, FittedOutcomeModel, GlmOptions,
};
use medlang::measure::{CausalRecord, RecordSchema, Variable};
use medlang::mediation::{
    bootstrap_effects, effect_terms, estimate_all, point_estimate, sa_nde, sa_nie, total_effect, EstimationConfig,
    XWeighting,
};
use medlang::scm::{exact_effects, generate, ScmSpec};

use common::spec;

const X_LEVELS: usize = 3;

/// (t, x, m, y, fold)
type Row = (u8, usize, u8, u8, usize);

fn schema(n_x: usize) -> RecordSchema {
    RecordSchema {
        confounders: vec![Variable::new("issue", (0..n_x).map(|i| i.to_string()))],
        mediators: vec![Variable::binary("hedging")],
        n_folds: 2,
    }
}

fn record(i: usize, t: u8, x: usize, m: u8, y: u8, fold: usize) -> CausalRecord {
    CausalRecord {
        unit_id: format!("u{i}"),
        t,
        x: BTreeMap::from([("issue".into(), x.to_string())]),
        m: BTreeMap::from([("hedging".into(), m.to_string())]),
        y,
        fold,
        valence: None,
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Samples from P(T=1|x), P(M=1|t,x), P(Y=1|m,t,x) with folds alternating by row.
fn sample(
    n: usize,
    n_x: usize,
    seed: u64,
    pt: impl Fn(usize) -> f64,
    pm: impl Fn(u8, usize) -> f64,
    py: impl Fn(u8, u8, usize) -> f64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records: Vec<CausalRecord> = (0..n)
        .map(|i| {
            let x = rng.gen_range(0..n_x);
            let t = u8::from(rng.gen::<f64>() < pt(x));
            let m = u8::from(rng.gen::<f64>() < pm(t, x));
            let y = u8::from(rng.gen::<f64>() < py(m, t, x));
            record(i, t, x, m, y, i % 2)
        })
        .collect();
    Dataset::from_records(&records, &schema(n_x)).unwrap()
}

fn hand_tables() -> (Dataset, FittedMediatorModel, FittedOutcomeModel) {
    let schema = RecordSchema {
        confounders: vec![],
        mediators: vec![Variable::binary("hedging")],
        n_folds: 1,
    };
    let mut r = record(0, 0, 0, 0, 0, 0);
    r.x.clear();
    let data = Dataset::from_records(&[r], &schema).unwrap();
    let mut f = FittedOutcomeModel::empty("hedging", 2, 1, 1);
    for (m, t, v) in [(0, 1, 0.7), (0, 0, 0.4), (1, 1, 0.9), (1, 0, 0.5)] {
        f.set(0, m, t, 0, v);
    }
    let mut g = FittedMediatorModel::empty("hedging", 2, 1, 1);
    for (m, t, v) in [(1, 0, 0.25), (0, 0, 0.75), (1, 1, 0.6), (0, 1, 0.4)] {
        g.set(0, m, t, 0, v);
    }
    (data, g, f)
}

#[test]
fn hand_tables_give_hand_values() {
    let (data, g, f) = hand_tables();
    assert!((sa_nde(&data, &g, &f).unwrap() - 0.325).abs() < 1e-12);
    assert!((sa_nie(&data, &g, &f).unwrap() - 0.035).abs() < 1e-12);
    assert!((total_effect(&data, &g, &f).unwrap() - 0.395).abs() < 1e-12);
    let terms = effect_terms(&data, &g, &f, XWeighting::PerUnit).unwrap();
    assert!((terms.nie_reversed - 0.07).abs() < 1e-12);
}

#[test]
fn tables_constant_in_t_give_zero_total() {
    let (data, mut g, mut f) = hand_tables();
    for m in 0..2 {
        g.set(0, m, 1, 0, g.prob(0, m, 0, 0).unwrap());
        f.set(0, m, 1, 0, f.expected(0, m, 0, 0).unwrap());
    }
    let terms = effect_terms(&data, &g, &f, XWeighting::PerUnit).unwrap();
    assert_eq!(terms.total_effect, 0.0);
    assert_eq!(terms.nde, 0.0);
    assert_eq!(terms.nie, 0.0);
}

#[test]
fn missing_cell_is_an_error() {
    let (data, _, f) = hand_tables();
    let g = FittedMediatorModel::empty("hedging", 2, 1, 1);
    let err = sa_nde(&data, &g, &f).unwrap_err().to_string();
    assert!(err.contains("m=") || err.contains("cell"), "{err}");
}

#[derive(Debug, Clone)]
struct Tables {
    g: FittedMediatorModel,
    f: FittedOutcomeModel,
}

fn tables_strategy() -> impl Strategy<Value = Tables> {
    (
        prop::collection::vec(0.01f64..0.99, 2 * 2 * X_LEVELS),
        prop::collection::vec(0.0f64..=1.0, 2 * 2 * 2 * X_LEVELS),
    )
        .prop_map(|(gp, fp)| {
            let mut g = FittedMediatorModel::empty("hedging", 2, X_LEVELS, 2);
            let mut f = FittedOutcomeModel::empty("hedging", 2, X_LEVELS, 2);
            let mut gi = gp.into_iter();
            let mut fi = fp.into_iter();
            for fold in 0..2 {
                for t in 0..2u8 {
                    for x in 0..X_LEVELS {
                        let p = gi.next().unwrap();
                        g.set(fold, 1, t, x, p);
                        g.set(fold, 0, t, x, 1.0 - p);
                        for m in 0..2 {
                            f.set(fold, m, t, x, fi.next().unwrap());
                        }
                    }
                }
            }
            Tables { g, f }
        })
}

fn rows_strategy() -> impl Strategy<Value = Vec<Row>> {
    prop::collection::vec((0u8..2, 0..X_LEVELS, 0u8..2, 0u8..2, 0usize..2), 1..60)
}

fn dataset(rows: &[Row]) -> Dataset {
    let records: Vec<CausalRecord> = rows
        .iter()
        .enumerate()
        .map(|(i, &(t, x, m, y, fold))| record(i, t, x, m, y, fold))
        .collect();
    Dataset::from_records(&records, &schema(X_LEVELS)).unwrap()
}

/// Straight per-row transcription of the estimator sums.
fn row_loop(data: &Dataset, g: &FittedMediatorModel, f: &FittedOutcomeModel) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for i in 0..data.len() {
        let (k, x) = (data.fold[i], data.x[i]);
        for m in 0..2 {
            let g0 = g.prob(k, m, 0, x).unwrap();
            let g1 = g.prob(k, m, 1, x).unwrap();
            let f0 = f.expected(k, m, 0, x).unwrap();
            let f1 = f.expected(k, m, 1, x).unwrap();
            acc[0] += (f1 - f0) * g0;
            acc[1] += f0 * (g1 - g0);
            acc[2] += f1 * (g1 - g0);
            acc[3] += f1 * g1 - f0 * g0;
        }
    }
    acc.map(|v| v / data.len() as f64)
}

proptest! {
    #[test]
    fn matches_row_loop(rows in rows_strategy(), tables in tables_strategy()) {
        let data = dataset(&rows);
        let got = effect_terms(&data, &tables.g, &tables.f, XWeighting::PerUnit).unwrap();
        let want = row_loop(&data, &tables.g, &tables.f);
        for (a, b) in [got.nde, got.nie, got.nie_reversed, got.total_effect].into_iter().zip(want) {
            prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn decomposition_identity(rows in rows_strategy(), tables in tables_strategy()) {
        let data = dataset(&rows);
        let both_folds = rows.iter().any(|r| r.4 == 0) && rows.iter().any(|r| r.4 == 1);
        for w in [XWeighting::PerUnit, XWeighting::TrainingMarginal] {
            if w == XWeighting::TrainingMarginal && !both_folds {
                continue;
            }
            let e = effect_terms(&data, &tables.g, &tables.f, w).unwrap();
            prop_assert!((e.total_effect - e.nde - e.nie_reversed).abs() <= 1e-9);
            for v in [e.nde, e.nie, e.total_effect] {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn invariant_tables_annihilate(rows in rows_strategy(), tables in tables_strategy()) {
        let data = dataset(&rows);
        let Tables { mut g, mut f } = tables;
        let (g_orig, f_orig) = (g.clone(), f.clone());
        for fold in 0..2 {
            for m in 0..2 {
                for x in 0..X_LEVELS {
                    g.set(fold, m, 1, x, g_orig.prob(fold, m, 0, x).unwrap());
                    f.set(fold, m, 1, x, f_orig.expected(fold, m, 0, x).unwrap());
                }
            }
        }
        prop_assert_eq!(sa_nie(&data, &g, &f_orig).unwrap(), 0.0);
        prop_assert_eq!(sa_nde(&data, &g_orig, &f).unwrap(), 0.0);
    }

    #[test]
    fn record_order_is_irrelevant(rows in rows_strategy(), tables in tables_strategy(), seed in any::<u64>()) {
        let data = dataset(&rows);
        let mut indexed: Vec<(usize, Row)> = rows.iter().copied().enumerate().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(indexed.as_mut_slice(), &mut rng);
        let records: Vec<CausalRecord> = indexed
            .iter()
            .map(|&(i, (t, x, m, y, fold))| record(i, t, x, m, y, fold))
            .collect();
        let shuffled = Dataset::from_records(&records, &schema(X_LEVELS)).unwrap();
        let a = effect_terms(&data, &tables.g, &tables.f, XWeighting::PerUnit).unwrap();
        let b = effect_terms(&shuffled, &tables.g, &tables.f, XWeighting::PerUnit).unwrap();
        prop_assert!((a.nde - b.nde).abs() < 1e-12 && (a.nie - b.nie).abs() < 1e-12);
    }
}

fn max_t_gap_g(g: &FittedMediatorModel, n_x: usize) -> f64 {
    let mut worst = 0.0f64;
    for fold in 0..g.n_folds() {
        for m in 0..g.n_levels {
            for x in 0..n_x {
                worst = worst.max((g.prob(fold, m, 1, x).unwrap() - g.prob(fold, m, 0, x).unwrap()).abs());
            }
        }
    }
    worst
}

#[test]
fn mediator_independent_of_treatment() {
    let data = sample(20_000, 2, 1, |x| 0.4 + 0.2 * x as f64, |_, x| 0.3 + 0.3 * x as f64, |_, _, _| 0.5);
    let g = fit_mediator_model(&data, "hedging", &GlmOptions::default()).unwrap();
    let gap = max_t_gap_g(&g, 2);
    assert!(gap <= 0.02, "gap {gap}");
}

#[test]
fn outcome_independent_of_treatment() {
    let data = sample(
        20_000,
        2,
        2,
        |x| 0.4 + 0.2 * x as f64,
        |t, _| 0.3 + 0.3 * f64::from(t),
        |m, _, x| sigmoid(-0.5 + 0.8 * f64::from(m) + 0.4 * x as f64),
    );
    let opts = GlmOptions {
        interaction: false,
        ..GlmOptions::default()
    };
    let f = fit_outcome_model(&data, "hedging", &opts).unwrap();
    for fold in 0..2 {
        for m in 0..2 {
            for x in 0..2 {
                let gap = (f.expected(fold, m, 1, x).unwrap() - f.expected(fold, m, 0, x).unwrap()).abs();
                assert!(gap <= 0.02, "fold {fold} m {m} x {x}: {gap}");
            }
        }
    }
}

#[test]
fn balanced_toy_is_one_half_everywhere() {
    let mut records = Vec::new();
    let mut i = 0;
    for fold in 0..2 {
        for t in 0..2u8 {
            for x in 0..2 {
                for m in 0..2u8 {
                    for _ in 0..25 {
                        records.push(record(i, t, x, m, (i % 2) as u8, fold));
                        i += 1;
                    }
                }
            }
        }
    }
    let data = Dataset::from_records(&records, &schema(2)).unwrap();
    let g = fit_mediator_model(&data, "hedging", &GlmOptions::default()).unwrap();
    for fold in 0..2 {
        for t in 0..2u8 {
            for x in 0..2 {
                for m in 0..2 {
                    assert!((g.prob(fold, m, t, x).unwrap() - 0.5).abs() <= 0.01);
                }
            }
        }
    }
}

#[test]
fn single_class_mediator_gives_degenerate_table() {
    // fold 0's tables are trained on fold 1, where hedging is always 0
    let records: Vec<CausalRecord> = (0..200)
        .map(|i| {
            let fold = i % 2;
            let m = if fold == 1 { 0 } else { (i / 2 % 2) as u8 };
            record(i, (i / 4 % 2) as u8, i / 8 % 2, m, (i / 3 % 2) as u8, fold)
        })
        .collect();
    let data = Dataset::from_records(&records, &schema(2)).unwrap();
    let g = fit_mediator_model(&data, "hedging", &GlmOptions::default()).unwrap();
    for t in 0..2u8 {
        for x in 0..2 {
            let p = g.prob(0, 0, t, x).unwrap();
            assert!(p > 0.99 && p <= 1.0, "P(m=0|{t},{x}) = {p}");
        }
    }
}

#[test]
fn constant_outcome_gives_constant_table() {
    let data = sample(2_000, 2, 3, |_| 0.5, |t, _| 0.3 + 0.2 * f64::from(t), |_, _, _| 1.0);
    let f = fit_outcome_model(&data, "hedging", &GlmOptions::default()).unwrap();
    for fold in 0..2 {
        for m in 0..2 {
            for t in 0..2u8 {
                for x in 0..2 {
                    let v = f.expected(fold, m, t, x).unwrap();
                    assert!(v > 0.99 && v <= 1.0, "{v}");
                }
            }
        }
    }
    let e = point_estimate(&data, "hedging", &EstimationConfig::default()).unwrap();
    assert!(e.nde.abs() < 1e-3 && e.nie.abs() < 1e-3);
}

#[test]
fn logistic_outcome_recovered() {
    let law = |m: u8, t: u8, x: usize| {
        let (m, t) = (f64::from(m), f64::from(t));
        sigmoid(-0.7 + 0.5 * t + 0.9 * m - 0.4 * t * m + [0.0, 0.35, -0.3][x])
    };
    // each fold's model is fit on 50,000 rows; cell means are the fold average
    let data = sample(100_000, 3, 4, |x| 0.45 + 0.05 * x as f64, |t, x| 0.4 + 0.2 * f64::from(t) - 0.05 * x as f64, law);
    let f = fit_outcome_model(&data, "hedging", &GlmOptions::default()).unwrap();
    for m in 0..2u8 {
        for t in 0..2u8 {
            for x in 0..3 {
                let got = (0..2).map(|k| f.expected(k, usize::from(m), t, x).unwrap()).sum::<f64>() / 2.0;
                let want = law(m, t, x);
                assert!((got - want).abs() <= 0.01, "({m},{t},{x}): {got} vs {want}");
            }
        }
    }
}

#[test]
fn null_interaction_shrinks() {
    let law = |m: u8, t: u8, x: usize| sigmoid(-2.2 + 0.4 * f64::from(t) + 0.6 * f64::from(m) + 0.2 * x as f64);
    let data = sample(50_000, 2, 5, |_| 0.5, |t, _| 0.4 + 0.2 * f64::from(t), law);
    let f = fit_outcome_model(&data, "hedging", &GlmOptions::default()).unwrap();
    for fold in 0..2 {
        for x in 0..2 {
            let e = |m, t| f.expected(fold, m, t, x).unwrap();
            let contrast = (e(1, 1) - e(0, 1)) - (e(1, 0) - e(0, 0));
            let truth = (law(1, 1, x) - law(0, 1, x)) - (law(1, 0, x) - law(0, 0, x));
            assert!((contrast - truth).abs() <= 0.01, "fold {fold} x {x}: {contrast} vs {truth}");
        }
    }
}

#[test]
fn fitting_ignores_record_order() {
    let spec = spec("multilevel");
    let sim = generate(&spec, 3_000).unwrap();
    let forward = Dataset::from_records(&sim.records, &sim.schema).unwrap();
    let mut reversed_records = sim.records.clone();
    reversed_records.reverse();
    let reversed = Dataset::from_records(&reversed_records, &sim.schema).unwrap();
    let opts = GlmOptions::default();
    let (g1, g2) = (
        fit_mediator_model(&forward, "topic", &opts).unwrap(),
        fit_mediator_model(&reversed, "topic", &opts).unwrap(),
    );
    let (f1, f2) = (
        fit_outcome_model(&forward, "topic", &opts).unwrap(),
        fit_outcome_model(&reversed, "topic", &opts).unwrap(),
    );
    for fold in 0..2 {
        for m in 0..g1.n_levels {
            for t in 0..2u8 {
                for x in 0..g1.n_x {
                    assert!((g1.prob(fold, m, t, x).unwrap() - g2.prob(fold, m, t, x).unwrap()).abs() < 1e-12);
                    assert!((f1.expected(fold, m, t, x).unwrap() - f2.expected(fold, m, t, x).unwrap()).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn fitted_tables_are_normalized() {
    for name in common::SPECS {
        let sim = generate(&spec(name), 2_000).unwrap();
        let data = Dataset::from_records(&sim.records, &sim.schema).unwrap();
        for var in &sim.schema.mediators {
            let g = fit_mediator_model(&data, &var.name, &GlmOptions::default()).unwrap();
            let f = fit_outcome_model(&data, &var.name, &GlmOptions::default()).unwrap();
            for fold in 0..2 {
                for t in 0..2u8 {
                    for x in 0..g.n_x {
                        let total: f64 = (0..g.n_levels).map(|m| g.prob(fold, m, t, x).unwrap()).sum();
                        assert!((total - 1.0).abs() <= 1e-9);
                        for m in 0..g.n_levels {
                            assert!((0.0..=1.0).contains(&g.prob(fold, m, t, x).unwrap()));
                            assert!((0.0..=1.0).contains(&f.expected(fold, m, t, x).unwrap()));
                        }
                    }
                }
            }
        }
    }
}

fn bootstrap_config(b: usize, seed: u64) -> EstimationConfig {
    EstimationConfig {
        n_bootstrap: b,
        seed,
        ..EstimationConfig::default()
    }
}

#[test]
fn bootstrap_same_seed_same_interval() {
    let sim = generate(&spec("binary"), 1_500).unwrap();
    let data = Dataset::from_records(&sim.records, &sim.schema).unwrap();
    let a = bootstrap_effects(&data, "hedging", &bootstrap_config(200, 11)).unwrap();
    let b = bootstrap_effects(&data, "hedging", &bootstrap_config(200, 11)).unwrap();
    assert_eq!(a, b);
    let nde_ci = a.nde_ci.unwrap();
    let nie_ci = a.nie_ci.unwrap();
    assert!(nde_ci.contains(a.nde) && nie_ci.contains(a.nie));
    assert_eq!(a.n_bootstrap, 200);
}

#[test]
fn identical_units_give_zero_width() {
    let records: Vec<CausalRecord> = (0..20).map(|i| record(i, 1, 0, 1, 1, i % 2)).collect();
    let data = Dataset::from_records(&records, &schema(1)).unwrap();
    let e = bootstrap_effects(&data, "hedging", &bootstrap_config(100, 3)).unwrap();
    assert_eq!(e.nde_ci.unwrap().width(), 0.0);
    assert_eq!(e.nie_ci.unwrap().width(), 0.0);
}

#[test]
fn bootstrap_rejects_too_few_replicates() {
    let sim = generate(&spec("binary"), 200).unwrap();
    let data = Dataset::from_records(&sim.records, &sim.schema).unwrap();
    assert!(bootstrap_effects(&data, "hedging", &bootstrap_config(50, 1)).is_err());
}

const THREE_MEDIATORS: &str = r#"{
  "confounders": [{"name": "term", "levels": ["early", "late"], "probs": [0.5, 0.5]}],
  "treatment": {"intercept": 0.0, "x": {"term": [0.0, 0.3]}},
  "mediators": [
    {"name": "hedging", "levels": ["0", "1"], "intercept": [-0.5], "t": [1.0], "x": {"term": [[0.0, 0.2]]}},
    {"name": "disfluency", "levels": ["0", "1"], "intercept": [-0.8], "t": [0.3], "x": {"term": [[0.0, -0.2]]}},
    {"name": "topic", "levels": ["0", "1", "2"], "intercept": [0.2, -0.4], "t": [0.5, -0.3], "x": {"term": [[0.0, 0.1], [0.0, 0.2]]}}
  ],
  "outcome": {
    "intercept": -0.9,
    "t": 0.4,
    "m": {"hedging": [0.0, 0.6], "disfluency": [0.0, 0.9], "topic": [0.0, 0.3, -0.4]},
    "x": {"term": [0.0, 0.2]}
  },
  "seed": 3
}"#;

#[test]
fn estimate_all_matches_single_runs() {
    let spec = ScmSpec::from_json(THREE_MEDIATORS).unwrap();
    let sim = generate(&spec, 2_000).unwrap();
    let data = Dataset::from_records(&sim.records, &sim.schema).unwrap();
    let names: Vec<String> = ["hedging", "disfluency", "topic"].map(String::from).to_vec();
    let config = bootstrap_config(100, 21);
    let all = estimate_all(&data, &names, &config).unwrap();
    assert_eq!(all.len(), 3);
    let alone = bootstrap_effects(&data, "hedging", &config).unwrap();
    assert_eq!(all[0], alone);
    assert_eq!(all[0].nde.to_bits(), alone.nde.to_bits());
    let single = estimate_all(&data, &names[2..], &config).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0], all[2]);
}

#[test]
fn independent_mediators_match_their_oracles() {
    let spec = spec("two_mediator");
    let oracle = exact_effects(&spec).unwrap();
    let sim = generate(&spec, 50_000).unwrap();
    let data = Dataset::from_records(&sim.records, &sim.schema).unwrap();
    let config = bootstrap_config(0, 0);
    for o in &oracle {
        let e = point_estimate(&data, &o.mediator, &config).unwrap();
        assert!((e.nie - o.nie).abs() <= 0.01, "{}: nie {} vs {}", o.mediator, e.nie, o.nie);
        assert!((e.total_effect - o.te).abs() <= 0.01, "{}: te {} vs {}", o.mediator, e.total_effect, o.te);
    }
}

#[test]
fn binary_fixture_total_effect_matches_oracle() {
    let spec = spec("binary");
    let o = &exact_effects(&spec).unwrap()[0];
    let sim = generate(&spec, 50_000).unwrap();
    let data = Dataset::from_records(&sim.records, &sim.schema).unwrap();
    for w in [XWeighting::PerUnit, XWeighting::TrainingMarginal] {
        let config = EstimationConfig {
            x_weighting: w,
            ..bootstrap_config(0, 0)
        };
        let e = point_estimate(&data, "hedging", &config).unwrap();
        assert!((e.total_effect - o.te).abs() <= 0.01);
        assert!((e.nde - o.nde).abs() <= 0.01);
        assert!((e.nie - o.nie).abs() <= 0.01);
    }
}
