//! End-to-end flows through ingestion, estimation, and detection, in
//! process, without touching the CLI.

use chrono::NaiveDate;

use mementum::detector::{detect, DetectorConfig};
use mementum::ingest::{
    align, make_pair, PairKind, RawSeries, SeriesKind, TransformSpec, WeekendPolicy,
};
use mementum::regimes::summarize;
use mementum::sampler::{run_mcmc, McmcSettings, PriorSpec};
use mementum::synth::{gen_rank_path, gen_series, ElementScript, PathMode, ScenarioSpec};
use mementum::vecm::RankPath;

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 4).unwrap() + chrono::Days::new(i as u64)
}

fn series(kind: SeriesKind, values: &[f64]) -> RawSeries {
    let obs = values
        .iter()
        .enumerate()
        .map(|(i, v)| (day(i), *v))
        .collect();
    RawSeries::new("TEST", kind, obs).unwrap()
}

/// Days with zero posts are ordinary observations (the count transform maps
/// them to zero, not to minus infinity), and the whole chain from raw
/// series to a detection report accepts them.
#[test]
fn zero_tweet_days_flow_through_the_whole_pipeline() {
    let t_len = 40;
    let price: Vec<f64> = (0..t_len).map(|i| 20.0 + (i as f64 * 0.7).sin()).collect();
    let volume: Vec<f64> = (0..t_len).map(|i| 5000.0 + 130.0 * (i % 7) as f64).collect();
    // A quiet series: long stretches of zero posts with sporadic bursts.
    let tweets: Vec<f64> = (0..t_len)
        .map(|i| if i % 9 == 0 { 12.0 } else { 0.0 })
        .collect();

    let set = align(
        &series(SeriesKind::Price, &price),
        &series(SeriesKind::Volume, &volume),
        &series(SeriesKind::Tweets, &tweets),
        WeekendPolicy::SumForward,
    )
    .unwrap();

    let spec = TransformSpec::default();
    let pr = make_pair(&set, PairKind::PrTw, &spec, 10).unwrap();
    let vol = make_pair(&set, PairKind::VolTw, &spec, 10).unwrap();
    assert!(pr.y.iter().all(|v| v.is_finite()));
    assert!(vol.y.iter().all(|v| v.is_finite()));
    // log1p(0) = 0 exactly, on every zero-post day.
    for i in 0..t_len {
        if tweets[i] == 0.0 {
            assert_eq!(pr.y[(i, 1)], 0.0);
        }
    }

    let priors = PriorSpec::default_for(2);
    let settings = McmcSettings { n_draws: 60, n_burnin: 20, thin: 1, seed: 11 };
    let pr_draws = run_mcmc(&pr.y, &priors, &settings).unwrap();
    let vol_draws = run_mcmc(&vol.y, &priors, &settings).unwrap();
    let pr_post = summarize(&pr_draws.states, pr_draws.n + 1).unwrap();
    let vol_post = summarize(&vol_draws.states, vol_draws.n + 1).unwrap();

    let report = detect(
        &RankPath::new(pr_post.map_path.clone()),
        &RankPath::new(vol_post.map_path.clone()),
        &set.dates,
        &DetectorConfig::default(),
    )
    .unwrap();
    report.validate().unwrap();
    assert_eq!(report.calendar.len(), t_len);
}

/// Two simulated pairs sharing a scripted joint window go through
/// estimation and posterior summary, and detection hands the window back
/// as a single episode.
///
/// Both pairs run near zero log-levels. At large levels (log-price ~3,
/// log-count ~8) a rank-one correction is almost indistinguishable from a
/// shift in the intercept over windows this short — the level barely moves
/// within the window, so y*Pi is nearly constant — and no sampler can be
/// expected to label such a series reliably. Recovery power across noise
/// realizations is measured separately on the long switch experiment; this
/// test pins the wiring between the stages.
#[test]
fn estimation_to_detection_round_trip_recovers_a_joint_episode() {
    let t_len = 120;
    let mut states = vec![1usize; t_len];
    for s in states.iter_mut().take(100).skip(55) {
        *s = 2;
    }
    let scenario = |seed: u64| ScenarioSpec {
        t_len,
        path_mode: PathMode::Scripted { states: states.clone() },
        c: vec![0.0, 0.0],
        b: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        sigma: vec![vec![0.01, 0.0], vec![0.0, 0.01]],
        l0: vec![-1.0],
        a0: vec![vec![-0.8, 0.5], vec![0.1, -0.4]],
        beta_script: ElementScript::Constant,
        alpha_script: ElementScript::Constant,
        noise_on: true,
        seed,
        y0: None,
    };

    let pr_spec = scenario(3);
    let (pr_pair, _) = gen_series(&pr_spec, &gen_rank_path(&pr_spec).unwrap()).unwrap();
    let vol_spec = scenario(5);
    let (vol_pair, _) = gen_series(&vol_spec, &gen_rank_path(&vol_spec).unwrap()).unwrap();

    // Regime runs in this script last ~45 days, so tell the sampler to
    // expect sticky regimes (prior stay probability 38/39).
    let mut priors = PriorSpec::default_for(2);
    priors.a_stay = 38.0;
    let settings = McmcSettings { n_draws: 500, n_burnin: 200, thin: 1, seed: 21 };
    let pr_draws = run_mcmc(&pr_pair.y, &priors, &settings).unwrap();
    let vol_draws = run_mcmc(&vol_pair.y, &priors, &settings).unwrap();
    let pr_post = summarize(&pr_draws.states, pr_draws.n + 1).unwrap();
    let vol_post = summarize(&vol_draws.states, vol_draws.n + 1).unwrap();

    let calendar: Vec<NaiveDate> = (0..t_len).map(day).collect();
    let report = detect(
        &RankPath::new(pr_post.map_path.clone()),
        &RankPath::new(vol_post.map_path.clone()),
        &calendar,
        &DetectorConfig::default(),
    )
    .unwrap();

    assert_eq!(report.periods.len(), 1, "expected one episode: {:?}", report.periods);
    let (start, end) = report.periods[0];
    // The episode must sit on the scripted window, give or take the few
    // days the posterior may blur at each edge.
    assert!((50..=60).contains(&start), "episode starts at day {start}");
    assert!((95..=104).contains(&end), "episode ends at day {end}");
}
