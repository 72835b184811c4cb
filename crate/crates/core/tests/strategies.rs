use std::collections::{BTreeMap, HashSet};

use crashtune::harness::{MetricStats, Outcome, TrialResult};
use crashtune::orchestrator::{Session, SessionOptions};
use crashtune::space::{ConfigSpace, Configuration, Domain, Objective, ParameterDef, Stage, Value};
use crashtune::strategies::{
    BayesParams, BayesStrategy, GridParams, GridStrategy, RandomStrategy, SearchContext, Strategy, StrategyError,
};

mod common;

fn param(name: &str, domain: Domain, default: Value) -> ParameterDef {
    ParameterDef::new(name, domain, Stage::Run, default, None).unwrap()
}

fn ran(iteration: u64, config: Configuration, value: f64) -> TrialResult {
    TrialResult {
        iteration,
        config,
        outcome: Outcome::Ran,
        metrics: BTreeMap::from([("perf".to_string(), value)]),
        build_seconds: 0.0,
        test_seconds: 0.0,
    }
}

/// Run `strategy` for `n` proposals, scoring each with `f`.
fn drive(
    strategy: &mut dyn Strategy,
    space: &ConfigSpace,
    seed: u64,
    n: usize,
    f: impl Fn(&Configuration) -> f64,
) -> Result<Vec<TrialResult>, StrategyError> {
    let objective = Objective::maximize("perf");
    let mut trials = Vec::new();
    let mut stats = MetricStats::default();
    for i in 0..n {
        let ctx = SearchContext {
            space,
            trials: &trials,
            objective: &objective,
            stats: &stats,
            seed,
        };
        let config = strategy.propose(&ctx)?;
        let t = ran(i as u64, config.clone(), f(&config));
        stats.observe(&t.metrics);
        trials.push(t);
    }
    Ok(trials)
}

#[test]
fn grid_over_three_by_two_levels_exhausts_after_six() {
    let space = ConfigSpace::new(
        vec![
            param(
                "mode",
                Domain::Categorical {
                    choices: vec!["a".into(), "b".into(), "c".into()],
                },
                Value::Text("a".into()),
            ),
            param("flag", Domain::Boolean, Value::Bool(false)),
        ],
        None,
    )
    .unwrap();
    let mut grid = GridStrategy::new(&space, &GridParams::default());
    assert_eq!(grid.size(), 6);
    let trials = drive(&mut grid, &space, 0, 6, |_| 0.0).unwrap();
    let keys: HashSet<String> = trials.iter().map(|t| t.config.key()).collect();
    assert_eq!(keys.len(), 6);
    assert_eq!(trials[0].config, space.default_config());
    let err = drive(&mut grid, &space, 0, 7, |_| 0.0).unwrap_err();
    assert!(matches!(err, StrategyError::Exhausted(6)), "{err}");
}

#[test]
fn random_search_on_an_exhausted_space_repeats_known_configurations() {
    let space = ConfigSpace::new(
        vec![param(
            "mode",
            Domain::Categorical {
                choices: vec!["x".into(), "y".into(), "z".into()],
            },
            Value::Text("x".into()),
        )],
        None,
    )
    .unwrap();
    let objective = Objective::maximize("perf");
    let stats = MetricStats::default();
    let mut trials = Vec::new();
    for i in 0..3 {
        let ctx = SearchContext {
            space: &space,
            trials: &trials,
            objective: &objective,
            stats: &stats,
            seed: 5,
        };
        let c = RandomStrategy.propose(&ctx).unwrap();
        trials.push(ran(i, c, 0.0));
    }
    let first: HashSet<String> = trials.iter().map(|t| t.config.key()).collect();
    assert_eq!(first.len(), 3, "unseen values are preferred while any remain");

    let mut distinct = first.clone();
    for i in 3..10_000u64 {
        let ctx = SearchContext {
            space: &space,
            trials: &trials[..3],
            objective: &objective,
            stats: &stats,
            seed: i,
        };
        distinct.insert(RandomStrategy.propose(&ctx).unwrap().key());
    }
    assert_eq!(distinct, first);
}

#[test]
fn bayes_finds_a_one_dimensional_quadratic_optimum() {
    let space = ConfigSpace::new(
        vec![param("x", Domain::Continuous { lo: 0.0, hi: 10.0 }, Value::Float(5.0))],
        None,
    )
    .unwrap();
    let mut hits = 0;
    for seed in 0..10u64 {
        let target = 1.0 + 0.8 * seed as f64;
        let x = |c: &Configuration| c.get("x").and_then(Value::as_f64).unwrap();
        let mut gp = BayesStrategy::new(BayesParams::default());
        let trials = drive(&mut gp, &space, seed, 20, |c| -(x(c) - target).powi(2)).unwrap();
        let best = trials
            .iter()
            .max_by(|a, b| a.metrics["perf"].total_cmp(&b.metrics["perf"]))
            .unwrap();
        // Within 5 % of the range from the analytic optimum.
        if (x(&best.config) - target).abs() <= 0.5 {
            hits += 1;
        }
    }
    assert!(hits >= 8, "{hits}/10 seeds");
}

#[test]
fn proposals_never_repeat_the_history() {
    for strategy in ["random", "grid", "bayes", "deeptune"] {
        let job = common::small_job(strategy, 40, 9);
        let mut s = Session::start(job, &SessionOptions::default()).unwrap();
        s.run().unwrap();
        let keys: HashSet<String> = s.history().trials().iter().map(|t| t.config.key()).collect();
        assert_eq!(keys.len(), 40, "{strategy} repeated a configuration");
    }
}
