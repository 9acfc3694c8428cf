//! Scenario-driven synthetic data generation with full ground truth, used by
//! every estimation and detection benchmark and by the `simulate` subcommand.

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::{DMatrix, RowDVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PairSeries;
use crate::vecm::{factor_pi, RankPath, StaticParams};

/// Hard ceiling on |y| beyond which generation aborts as explosive.
pub const EXPLOSION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    /// Fixed state sequence, echoed verbatim.
    Scripted { states: Vec<usize> },
    /// Simulate the hidden chain from a transition matrix and an initial
    /// distribution over states.
    Markov { p: Vec<Vec<f64>>, init: Vec<f64> },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementScript {
    #[default]
    Constant,
    RandomWalk {
        variance: f64,
    },
    /// base + amplitude · sin(2π t / period) with 1-based t.
    Sine {
        amplitude: f64,
        period: f64,
    },
}

/// Everything needed to generate one bivariate series: length, rank path law,
/// static coefficients, base factor values and their motion, noise switch,
/// and the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub t_len: usize,
    pub path_mode: PathMode,
    pub c: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    /// Free β elements (strictly lower triangle), row-major by (row, col).
    pub l0: Vec<f64>,
    /// Full α state matrix; row r is the loading row active from rank r+1 up.
    pub a0: Vec<Vec<f64>>,
    #[serde(default)]
    pub beta_script: ElementScript,
    #[serde(default)]
    pub alpha_script: ElementScript,
    pub noise_on: bool,
    pub seed: u64,
    /// Level of the first two observations; zeros when omitted.
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
}

impl ScenarioSpec {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn n_states(&self) -> usize {
        self.n() + 1
    }

    fn n_lower(&self) -> usize {
        let n = self.n();
        n * (n - 1) / 2
    }

    pub fn statics(&self) -> StaticParams {
        let n = self.n();
        StaticParams {
            c: RowDVector::from_row_slice(&self.c),
            b: mat_from(&self.b, n),
            sigma: mat_from(&self.sigma, n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Config("scenario needs n >= 1".into()));
        }
        if self.t_len < 3 {
            return Err(Error::Config("scenario needs t_len >= 3".into()));
        }
        if self.b.len() != n
            || self.b.iter().any(|r| r.len() != n)
            || self.sigma.len() != n
            || self.sigma.iter().any(|r| r.len() != n)
            || self.a0.len() != n
            || self.a0.iter().any(|r| r.len() != n)
        {
            return Err(Error::Config("scenario matrices must all be n×n".into()));
        }
        if self.l0.len() != self.n_lower() {
            return Err(Error::Config(format!(
                "expected {} free beta elements, got {}",
                self.n_lower(),
                self.l0.len()
            )));
        }
        if let Some(y0) = &self.y0 {
            if y0.len() != n {
                return Err(Error::Config("y0 must have n entries".into()));
            }
        }
        self.statics().validate().map_err(|e| Error::Config(e.to_string()))?;
        match &self.path_mode {
            PathMode::Scripted { states } => {
                if states.len() != self.t_len {
                    return Err(Error::Config(format!(
                        "scripted path has {} states for t_len {}",
                        states.len(),
                        self.t_len
                    )));
                }
                RankPath::new(states.clone())
                    .validate(self.n_states())
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
            PathMode::Markov { p, init } => {
                let ns = self.n_states();
                if p.len() != ns || p.iter().any(|r| r.len() != ns) || init.len() != ns {
                    return Err(Error::Config("markov mode needs an N×N matrix and length-N init".into()));
                }
                for (i, row) in p.iter().enumerate() {
                    check_distribution(row, &format!("transition row {i}"))?;
                }
                check_distribution(init, "initial distribution")?;
            }
        }
        for script in [&self.beta_script, &self.alpha_script] {
            match script {
                ElementScript::RandomWalk { variance } if *variance < 0.0 => {
                    return Err(Error::Config("random walk variance must be nonnegative".into()))
                }
                ElementScript::Sine { period, .. } if *period <= 0.0 => {
                    return Err(Error::Config("sine period must be positive".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn check_distribution(w: &[f64], what: &str) -> Result<()> {
    if w.iter().any(|v| !(0.0..=1.0 + 1e-12).contains(v)) {
        return Err(Error::Config(format!("{what} has entries outside [0, 1]")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{what} sums to {s}, expected 1")));
    }
    Ok(())
}

fn mat_from(rows: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Everything the generator knows and the estimator is asked to recover.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub path: RankPath,
    /// Per-day free-β matrices (strictly lower storage).
    pub l: Vec<DMatrix<f64>>,
    /// Per-day α state matrices.
    pub a: Vec<DMatrix<f64>>,
    /// Per-day impact matrices, full length T.
    pub pi: Vec<DMatrix<f64>>,
    pub statics: StaticParams,
    /// Injected noise rows for the usable times (length T − 2).
    pub eps: DMatrix<f64>,
}

impl GroundTruth {
    /// Impact matrices for the usable observations only.
    pub fn usable_pi(&self) -> &[DMatrix<f64>] {
        &self.pi[2..]
    }
}

/// Weekday calendar of the requested length starting 2021-01-04.
pub fn trading_calendar(t_len: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(t_len);
    let mut day = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
    while dates.len() < t_len {
        if day.weekday() != Weekday::Sat && day.weekday() != Weekday::Sun {
            dates.push(day);
        }
        day = day.succ_opt().unwrap();
    }
    dates
}

fn categorical(w: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen::<f64>() * w.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, v) in w.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    w.len() - 1
}

/// Draw (or echo) the hidden state path of a scenario.
pub fn gen_rank_path(spec: &ScenarioSpec) -> Result<RankPath> {
    spec.validate()?;
    match &spec.path_mode {
        PathMode::Scripted { states } => Ok(RankPath::new(states.clone())),
        PathMode::Markov { p, init } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(0);
            let mut states = Vec::with_capacity(spec.t_len);
            let mut s = categorical(init, &mut rng);
            states.push(s + 1);
            for _ in 1..spec.t_len {
                s = categorical(&p[s], &mut rng);
                states.push(s + 1);
            }
            Ok(RankPath::new(states))
        }
    }
}

fn script_paths(
    base_l: &DMatrix<f64>,
    base_a: &DMatrix<f64>,
    beta_script: &ElementScript,
    alpha_script: &ElementScript,
    t_len: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let mut l = Vec::with_capacity(t_len);
    let mut a = Vec::with_capacity(t_len);
    let mut cur_l = base_l.clone();
    let mut cur_a = base_a.clone();
    for t in 0..t_len {
        match beta_script {
            ElementScript::Constant => {}
            ElementScript::RandomWalk { variance } => {
                if t > 0 {
                    let sd = variance.sqrt();
                    for i in 1..n {
                        for j in 0..i {
                            cur_l[(i, j)] += sd * rng.sample::<f64, _>(StandardNormal);
                        }
                    }
                }
            }
            ElementScript::Sine { amplitude, period } => {
                let phase = amplitude * (2.0 * std::f64::consts::PI * (t + 1) as f64 / period).sin();
                for i in 1..n {
                    for j in 0..i {
                        cur_l[(i, j)] = base_l[(i, j)] + phase;
                    }
                }
            }
        }
        match alpha_script {
            ElementScript::Constant => {}
            ElementScript::RandomWalk { variance } => {
                if t > 0 {
                    let sd = variance.sqrt();
                    for v in cur_a.iter_mut() {
                        *v += sd * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            ElementScript::Sine { amplitude, period } => {
                let phase = amplitude * (2.0 * std::f64::consts::PI * (t + 1) as f64 / period).sin();
                cur_a = base_a.add_scalar(phase);
            }
        }
        l.push(cur_l.clone());
        a.push(cur_a.clone());
    }
    (l, a)
}

/// Run the observation recursion over a given impact-matrix sequence.
/// Returns the series and the injected noise rows.
fn run_recursion(
    y0: &RowDVector<f64>,
    statics: &StaticParams,
    pi: &[DMatrix<f64>],
    noise_on: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = statics.n();
    let t_len = pi.len();
    let chol = nalgebra::linalg::Cholesky::new(statics.sigma.clone())
        .ok_or_else(|| Error::Numerical("Sigma not positive definite".into()))?;
    let lt = chol.l().transpose();
    let mut y = DMatrix::zeros(t_len, n);
    y.row_mut(0).copy_from(y0);
    y.row_mut(1).copy_from(y0);
    let mut eps = DMatrix::zeros(t_len - 2, n);
    for k in 0..t_len - 2 {
        let t = k + 2;
        if noise_on {
            let z = RowDVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            eps.row_mut(k).copy_from(&(z * &lt));
        }
        let dy_prev = y.row(t - 1) - y.row(t - 2);
        let dy = &statics.c + y.row(t - 1) * &pi[t] + dy_prev * &statics.b + eps.row(k);
        let next = y.row(t - 1) + dy;
        if next.iter().any(|v| v.abs() > EXPLOSION_LIMIT) {
            return Err(Error::Config(format!(
                "explosive dynamics at step {} (|y| > {EXPLOSION_LIMIT:.0e}); shrink the impact or short-run coefficients",
                t + 1
            )));
        }
        y.row_mut(t).copy_from(&next);
    }
    Ok((y, eps))
}

/// Generate the observed pair for a scenario under the given rank path.
pub fn gen_series(spec: &ScenarioSpec, path: &RankPath) -> Result<(PairSeries, GroundTruth)> {
    spec.validate()?;
    if path.len() != spec.t_len {
        return Err(Error::Config(format!(
            "path length {} does not match t_len {}",
            path.len(),
            spec.t_len
        )));
    }
    path.validate(spec.n_states())?;
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);

    let base_l = {
        let mut m = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 1..n {
            for j in 0..i {
                m[(i, j)] = spec.l0[k];
                k += 1;
            }
        }
        m
    };
    let base_a = mat_from(&spec.a0, n);
    let (l, a) = script_paths(
        &base_l,
        &base_a,
        &spec.beta_script,
        &spec.alpha_script,
        spec.t_len,
        n,
        &mut rng,
    );
    let pi: Vec<DMatrix<f64>> = (0..spec.t_len)
        .map(|t| factor_pi(&l[t], &a[t], path.rank(t)))
        .collect();

    let statics = spec.statics();
    let y0 = match &spec.y0 {
        Some(v) => RowDVector::from_row_slice(v),
        None => RowDVector::zeros(n),
    };
    let (y, eps) = run_recursion(&y0, &statics, &pi, spec.noise_on, &mut rng)?;

    let series = PairSeries {
        labels: ("y1".into(), "y2".into()),
        y,
        dates: trading_calendar(spec.t_len),
    };
    Ok((
        series,
        GroundTruth {
            path: path.clone(),
            l,
            a,
            pi,
            statics,
            eps,
        },
    ))
}

/// Generate observations from explicitly given factor and state paths with
/// noise on — the data step of prior–posterior simulator checks.
pub fn gen_from_paths(
    path: &RankPath,
    l: &[DMatrix<f64>],
    a: &[DMatrix<f64>],
    statics: &StaticParams,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let t_len = path.len();
    if l.len() != t_len || a.len() != t_len {
        return Err(Error::Dim("factor paths must match the state path length".into()));
    }
    let pi: Vec<DMatrix<f64>> = (0..t_len)
        .map(|t| factor_pi(&l[t], &a[t], path.rank(t)))
        .collect();
    let y0 = RowDVector::zeros(statics.n());
    let (y, _) = run_recursion(&y0, statics, &pi, true, rng)?;
    Ok(y)
}

/// A pair of scenarios sharing one calendar — the price pair and the volume
/// pair of a simulated ticker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoPairScenario {
    pub ticker: String,
    pub pr: ScenarioSpec,
    pub vol: ScenarioSpec,
}

impl TwoPairScenario {
    pub fn validate(&self) -> Result<()> {
        self.pr.validate()?;
        self.vol.validate()?;
        if self.pr.t_len != self.vol.t_len {
            return Err(Error::Config(format!(
                "pair scenarios disagree on length: {} vs {}",
                self.pr.t_len, self.vol.t_len
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecm::{numeric_rank, residuals};

    fn base_spec(t_len: usize) -> ScenarioSpec {
        ScenarioSpec {
            t_len,
            path_mode: PathMode::Scripted {
                states: vec![1; t_len],
            },
            c: vec![0.0, 0.0],
            b: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            sigma: vec![vec![0.01, 0.0], vec![0.0, 0.01]],
            l0: vec![-1.0],
            a0: vec![vec![-0.3, 0.15], vec![0.0, 0.0]],
            beta_script: ElementScript::Constant,
            alpha_script: ElementScript::Constant,
            noise_on: true,
            seed: 7,
            y0: None,
        }
    }

    #[test]
    fn scripted_path_is_echoed() {
        let mut spec = base_spec(3);
        spec.path_mode = PathMode::Scripted {
            states: vec![2, 2, 2],
        };
        assert_eq!(gen_rank_path(&spec).unwrap().states, vec![2, 2, 2]);
    }

    #[test]
    fn markov_identity_is_absorbing() {
        let mut spec = base_spec(50);
        spec.path_mode = PathMode::Markov {
            p: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            init: vec![0.0, 0.0, 1.0],
        };
        assert_eq!(gen_rank_path(&spec).unwrap().states, vec![3; 50]);
    }

    #[test]
    fn markov_transition_frequencies_match() {
        let mut spec = base_spec(10_000);
        let p = vec![
            vec![0.95, 0.025, 0.025],
            vec![0.025, 0.95, 0.025],
            vec![0.025, 0.025, 0.95],
        ];
        spec.path_mode = PathMode::Markov {
            p: p.clone(),
            init: vec![1.0 / 3.0; 3],
        };
        let path = gen_rank_path(&spec).unwrap();
        let mut counts = [[0usize; 3]; 3];
        for w in path.states.windows(2) {
            counts[w[0] - 1][w[1] - 1] += 1;
        }
        for i in 0..3 {
            let total: usize = counts[i].iter().sum();
            assert!(total > 1000, "state {i} undervisited: {total}");
            for j in 0..3 {
                let freq = counts[i][j] as f64 / total as f64;
                assert!(
                    (freq - p[i][j]).abs() < 0.02,
                    "p[{i}][{j}] = {freq} vs {}",
                    p[i][j]
                );
            }
        }
    }

    #[test]
    fn noise_off_constant_drift() {
        let mut spec = base_spec(20);
        spec.noise_on = false;
        spec.c = vec![0.1, 0.2];
        let path = gen_rank_path(&spec).unwrap();
        let (series, _) = gen_series(&spec, &path).unwrap();
        for t in 2..20 {
            let dy = series.y.row(t) - series.y.row(t - 1);
            assert!((dy[(0, 0)] - 0.1).abs() < 1e-12);
            assert!((dy[(0, 1)] - 0.2).abs() < 1e-12);
        }
        // y grows linearly from the third observation on.
        assert!((series.y[(19, 0)] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn residuals_recover_injected_noise_exactly() {
        let mut spec = base_spec(200);
        spec.path_mode = PathMode::Scripted {
            states: [vec![1; 100], vec![2; 100]].concat(),
        };
        spec.c = vec![0.01, -0.02];
        spec.b = vec![vec![0.2, 0.0], vec![0.1, -0.1]];
        let path = gen_rank_path(&spec).unwrap();
        let (series, truth) = gen_series(&spec, &path).unwrap();
        let e = residuals(&series.y, &truth.statics, truth.usable_pi()).unwrap();
        assert!((e - truth.eps).abs().max() < 1e-12);
    }

    #[test]
    fn ground_truth_ranks_agree_with_path() {
        let mut spec = base_spec(60);
        // Full-rank states need an invertible α state matrix.
        spec.a0 = vec![vec![-0.3, 0.15], vec![0.1, -0.4]];
        spec.path_mode = PathMode::Scripted {
            states: (0..60).map(|t| 1 + (t % 3)).collect(),
        };
        let path = gen_rank_path(&spec).unwrap();
        let (_, truth) = gen_series(&spec, &path).unwrap();
        for t in 0..60 {
            assert_eq!(numeric_rank(&truth.pi[t]), path.rank(t), "t={t}");
        }
    }

    #[test]
    fn noise_covariance_matches_at_scale() {
        let mut spec = base_spec(10_000);
        spec.sigma = vec![vec![0.5, 0.2], vec![0.2, 0.4]];
        let path = gen_rank_path(&spec).unwrap();
        let (series, truth) = gen_series(&spec, &path).unwrap();
        // Rank 0 everywhere with c = B = 0, so Δy_t is the raw noise.
        let e = residuals(&series.y, &truth.statics, truth.usable_pi()).unwrap();
        let t_eff = e.nrows() as f64;
        let cov = e.transpose() * &e / t_eff;
        let diff = (&cov - &truth.statics.sigma).norm();
        assert!(
            diff / truth.statics.sigma.norm() < 0.05,
            "relative covariance error {}",
            diff / truth.statics.sigma.norm()
        );
    }

    fn spread_autocorr(s: &[f64]) -> f64 {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let num: f64 = s.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let den: f64 = s.iter().map(|v| (v - mean) * (v - mean)).sum();
        num / den
    }

    #[test]
    fn switch_to_rank_one_makes_spread_mean_revert() {
        let mut spec = base_spec(5_000);
        spec.path_mode = PathMode::Scripted {
            states: [vec![1; 2_500], vec![2; 2_500]].concat(),
        };
        let path = gen_rank_path(&spec).unwrap();
        let (series, _) = gen_series(&spec, &path).unwrap();
        let spread: Vec<f64> = (0..5_000)
            .map(|t| series.y[(t, 0)] - series.y[(t, 1)])
            .collect();
        let pre = spread_autocorr(&spread[..2_500]);
        let post = spread_autocorr(&spread[2_600..]); // skip the transition
        assert!(post < 1.0 && post < pre, "pre={pre} post={post}");
        assert!(post < 0.8, "post-switch spread should revert, got {post}");
        assert!(pre > 0.9, "pre-switch spread should wander, got {pre}");
    }

    #[test]
    fn seed_determinism() {
        let spec = base_spec(300);
        let p1 = gen_rank_path(&spec).unwrap();
        let (s1, _) = gen_series(&spec, &p1).unwrap();
        let p2 = gen_rank_path(&spec).unwrap();
        let (s2, _) = gen_series(&spec, &p2).unwrap();
        assert_eq!(s1.y, s2.y);
        assert_eq!(s1.dates, s2.dates);
    }

    #[test]
    fn explosive_dynamics_are_reported() {
        let mut spec = base_spec(60);
        spec.b = vec![vec![3.0, 0.0], vec![0.0, 3.0]];
        spec.c = vec![1.0, 1.0];
        let path = gen_rank_path(&spec).unwrap();
        let err = gen_series(&spec, &path).unwrap_err();
        assert!(err.to_string().contains("explosive"), "{err}");
    }

    #[test]
    fn scenario_json_round_trip() {
        let spec = base_spec(30);
        let text = serde_json::to_string_pretty(&spec).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.t_len, spec.t_len);
        let p1 = gen_rank_path(&spec).unwrap();
        let p2 = gen_rank_path(&back).unwrap();
        let (s1, _) = gen_series(&spec, &p1).unwrap();
        let (s2, _) = gen_series(&back, &p2).unwrap();
        assert_eq!(s1.y, s2.y);
    }

    #[test]
    fn validation_catches_bad_scenarios() {
        let mut spec = base_spec(30);
        spec.path_mode = PathMode::Scripted { states: vec![2; 10] };
        assert!(spec.validate().is_err());

        let mut spec = base_spec(30);
        spec.path_mode = PathMode::Markov {
            p: vec![vec![0.5, 0.5, 0.5]; 3],
            init: vec![1.0, 0.0, 0.0],
        };
        assert!(spec.validate().is_err());

        let mut spec = base_spec(30);
        spec.l0 = vec![1.0, 2.0];
        assert!(spec.validate().is_err());
    }
}
