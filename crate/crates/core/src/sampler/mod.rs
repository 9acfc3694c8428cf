//! Markov chain Monte Carlo estimation of the switching-rank model.
//!
//! A Gibbs sweep cycles through: the hidden rank path (forward filter,
//! backward sampler), the transition matrix (Dirichlet rows), the two
//! time-varying factor paths (simulation smoother), their random-walk
//! increment variances (inverse gamma), and the static coefficients and
//! innovation covariance (normal and inverse Wishart). `prior_draw` and
//! `gibbs_cycle` expose the exact kernel so joint-distribution tests can
//! drive the same code the estimator runs.

pub mod conjugate;
pub mod ffbs;
pub mod serialize;
pub mod smoother;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecm::{factor_pi, per_obs_loglik, GaussianDensity, RankChainParams, RankPath, StaticParams};

/// Hyperparameters of every prior block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Variance of each static coefficient; exactly 0 pins them to zero.
    pub v0: f64,
    /// Degrees of freedom of the inverse-Wishart prior on Σ (scale I).
    pub nu0: f64,
    /// Dirichlet weight on staying in the current rank state.
    pub a_stay: f64,
    /// Dirichlet weight on each move to a different state.
    pub a_move: f64,
    /// Inverse-gamma shape of each random-walk increment variance.
    pub w_shape: f64,
    /// Inverse-gamma rate of each random-walk increment variance.
    pub w_rate: f64,
    /// Variance of the factor paths' first point.
    pub tau0_sq: f64,
}

impl PriorSpec {
    pub fn default_for(n: usize) -> Self {
        Self {
            v0: 10.0,
            nu0: (n + 2) as f64,
            a_stay: 10.0,
            a_move: 1.0,
            w_shape: 3.0,
            w_rate: 0.01,
            tau0_sq: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v0 < 0.0
            || self.nu0 <= 0.0
            || self.a_stay <= 0.0
            || self.a_move <= 0.0
            || self.w_shape <= 0.0
            || self.w_rate <= 0.0
            || self.tau0_sq <= 0.0
        {
            return Err(Error::Config("prior hyperparameters out of range".into()));
        }
        Ok(())
    }
}

/// Chain length, burn-in, thinning, and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub n_draws: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self { n_draws: 5000, n_burnin: 1000, thin: 1, seed: 12345 }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 || self.thin == 0 {
            return Err(Error::Config("n_draws and thin must be positive".into()));
        }
        Ok(())
    }
}

/// Counters for numerical fallbacks taken during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bookkeeping {
    /// Cholesky jitter bumps inside the simulation smoother.
    pub jitter_events: u64,
    /// Ridge bumps on the static-coefficient precision.
    pub ridge_events: u64,
}

/// Full parameter state of one Gibbs iteration.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub path: RankPath,
    pub chain: RankChainParams,
    /// Free β elements per time point (n×n, strictly lower populated).
    pub l_path: Vec<DMatrix<f64>>,
    /// α state per time point (n×n).
    pub a_path: Vec<DMatrix<f64>>,
    pub w_l: DVector<f64>,
    pub w_a: DVector<f64>,
    pub statics: StaticParams,
}

impl GibbsState {
    pub fn n(&self) -> usize {
        self.statics.n()
    }

    pub fn t_len(&self) -> usize {
        self.path.len()
    }

    /// Π_t implied by the current factors and rank path.
    pub fn pi_path(&self) -> Vec<DMatrix<f64>> {
        (0..self.t_len())
            .map(|t| factor_pi(&self.l_path[t], &self.a_path[t], self.path.rank(t)))
            .collect()
    }
}

fn inverse_gamma_draw(shape: f64, rate: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(format!("gamma shape {shape}: {e}")))?;
    Ok(1.0 / rng.sample::<f64, _>(g))
}

fn n_lower(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Simulate a random-walk path of `dim` elements with per-element increment
/// variances `w`, starting from N(0, τ₀² I).
fn prior_rw_path(
    t_len: usize,
    dim: usize,
    w: &DVector<f64>,
    tau0_sq: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let mut path = Vec::with_capacity(t_len);
    let mut x = DVector::from_fn(dim, |_, _| {
        rng.sample::<f64, _>(StandardNormal) * tau0_sq.sqrt()
    });
    path.push(x.clone());
    for _ in 1..t_len {
        for k in 0..dim {
            x[k] += rng.sample::<f64, _>(StandardNormal) * w[k].sqrt();
        }
        path.push(x.clone());
    }
    path
}

/// Draw a complete parameter state from the prior.
pub fn prior_draw(
    n: usize,
    t_len: usize,
    priors: &PriorSpec,
    rng: &mut ChaCha8Rng,
) -> Result<GibbsState> {
    priors.validate()?;
    if n < 2 || t_len < 3 {
        return Err(Error::Dim(format!("need n ≥ 2 and t_len ≥ 3, got n={n}, t_len={t_len}")));
    }
    let ns = n + 1;
    // A single-point path contributes no move counts, so this is the prior.
    let chain = conjugate::sample_transition_matrix(&[1], ns, priors.a_stay, priors.a_move, rng)?;
    let mut states = Vec::with_capacity(t_len);
    let mut s = rng.gen_range(0..ns);
    states.push(s + 1);
    for _ in 1..t_len {
        let row: Vec<f64> = chain.p.row(s).iter().copied().collect();
        s = ffbs::sample_categorical(&row, rng);
        states.push(s + 1);
    }
    let path = RankPath::new(states);

    let mut w_a = DVector::zeros(n * n);
    for k in 0..n * n {
        w_a[k] = inverse_gamma_draw(priors.w_shape, priors.w_rate, rng)?;
    }
    let mut w_l = DVector::zeros(n_lower(n));
    for k in 0..n_lower(n) {
        w_l[k] = inverse_gamma_draw(priors.w_shape, priors.w_rate, rng)?;
    }
    let a_path: Vec<DMatrix<f64>> = prior_rw_path(t_len, n * n, &w_a, priors.tau0_sq, rng)
        .iter()
        .map(|x| smoother::unvec_a(x, n))
        .collect();
    let l_path: Vec<DMatrix<f64>> = prior_rw_path(t_len, n_lower(n), &w_l, priors.tau0_sq, rng)
        .iter()
        .map(|x| smoother::unvec_l(x, n))
        .collect();

    let sd0 = priors.v0.sqrt();
    let c = RowDVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * sd0);
    let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * sd0);
    let sigma = conjugate::sample_inverse_wishart(priors.nu0, &DMatrix::identity(n, n), rng)?;
    let statics = StaticParams { c, b, sigma };
    statics.validate()?;

    Ok(GibbsState { path, chain, l_path, a_path, w_l, w_a, statics })
}

/// Free β elements matching an impact estimate, row by row: L[i, ..i] maps
/// the top i rows of Π onto row i (the reduced-rank relation
/// Π_low = L · Π_top at each rank).
fn l_from_pi(pi_hat: &DMatrix<f64>) -> DMatrix<f64> {
    let n = pi_hat.nrows();
    let mut l = DMatrix::zeros(n, n);
    for i in 1..n {
        let top = pi_hat.rows(0, i);
        let mut gram = &top * top.transpose();
        for d in 0..i {
            gram[(d, d)] += 1e-8;
        }
        let rhs = &top * pi_hat.row(i).transpose();
        if let Some(sol) = gram.lu().solve(&rhs) {
            for k in 0..i {
                l[(i, k)] = sol[k];
            }
        }
    }
    l
}

/// Seed (L, A) states from a local impact estimate.
///
/// For pairs the estimate is truncated to its top singular direction and
/// re-expressed in the leading-one normalization, and A is set to that same
/// rank-one matrix. Seeding the reduced-rank form rather than the raw
/// estimate matters: the raw least-squares fit always beats its own
/// projection in sample, so a chain seeded with it labels every active day
/// full rank, the rank-one state's relationship vector is then never
/// data-informed, and the run degenerates. With both states tied at the
/// seed, early sweeps populate the reduced-rank regime wherever the data
/// supports it.
fn seed_factors(pi_hat: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = pi_hat.nrows();
    if n == 2 {
        let svd = pi_hat.clone().svd(true, true);
        if let (Some(u), Some(v_t)) = (&svd.u, &svd.v_t) {
            let s1 = svd.singular_values[0];
            let u1 = u.column(0);
            // β = u/u[0] keeps the leading-one form; α absorbs the scale.
            if u1[0].abs() > 0.05 {
                let ell = (u1[1] / u1[0]).clamp(-25.0, 25.0);
                let alpha = v_t.row(0) * (s1 * u1[0]);
                let mut l = DMatrix::zeros(n, n);
                l[(1, 0)] = ell;
                let mut a = DMatrix::zeros(n, n);
                a.row_mut(0).copy_from(&alpha);
                a.row_mut(1).copy_from(&(alpha * ell));
                return (l, a);
            }
        }
    }
    (l_from_pi(pi_hat), pi_hat.clone())
}

/// Half-width of the local regression window used to seed the factor paths.
const INIT_WINDOW: usize = 15;

/// Refinement passes of the label → refit loop in `initial_state`.
const INIT_PASSES: usize = 3;

/// Most probable state sequence given per-day state log-likelihoods and a
/// transition matrix: max-product dynamic programming with a uniform start.
/// Returns 1-based states.
fn viterbi_labels(ll: &DMatrix<f64>, p: &DMatrix<f64>) -> Vec<usize> {
    let t_len = ll.nrows();
    let ns = ll.ncols();
    let logp = p.map(|v| v.max(1e-300).ln());
    let mut score = vec![0.0f64; ns];
    for (s, v) in score.iter_mut().enumerate() {
        *v = ll[(0, s)];
    }
    let mut back = vec![vec![0usize; ns]; t_len];
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; ns];
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for r in 0..ns {
                let v = score[r] + logp[(r, s)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            next[s] = best + ll[(t, s)];
            back[t][s] = arg;
        }
        score = next;
    }
    let mut s = 0usize;
    let mut best = f64::NEG_INFINITY;
    for (cand, &v) in score.iter().enumerate() {
        if v > best {
            best = v;
            s = cand;
        }
    }
    let mut labels = vec![0usize; t_len];
    labels[t_len - 1] = s + 1;
    for t in (0..t_len - 1).rev() {
        s = back[t + 1][s];
        labels[t] = s + 1;
    }
    labels
}

/// Refit c, B, Σ by ridge least squares with the error-correction term fixed
/// at each day's labeled state: regress Δy_t − y_{t−1}Π_t on [1, Δy_{t−1}].
fn refit_statics(
    y: &DMatrix<f64>,
    labels: &[usize],
    l_path: &[DMatrix<f64>],
    a_path: &[DMatrix<f64>],
) -> StaticParams {
    let n = y.ncols();
    let t_len = y.nrows();
    let rows = t_len - 2;
    let k = 1 + n;
    let mut x = DMatrix::zeros(rows, k);
    let mut u = DMatrix::zeros(rows, n);
    for t in 2..t_len {
        let r = t - 2;
        let pi = factor_pi(&l_path[t], &a_path[t], labels[t] - 1);
        let z = (y.row(t) - y.row(t - 1)) - y.row(t - 1) * &pi;
        x[(r, 0)] = 1.0;
        for j in 0..n {
            x[(r, 1 + j)] = y[(t - 1, j)] - y[(t - 2, j)];
            u[(r, j)] = z[j];
        }
    }
    let mut gram = x.transpose() * &x;
    let ridge = 1e-6 * (gram.trace() / k as f64).max(1e-12);
    for i in 0..k {
        gram[(i, i)] += ridge;
    }
    let theta = gram
        .lu()
        .solve(&(x.transpose() * &u))
        .unwrap_or_else(|| DMatrix::zeros(k, n));
    let c = theta.row(0).into_owned();
    let b = theta.rows(1, n).into_owned();
    let resid = &u - &x * &theta;
    let mut sigma = resid.transpose() * &resid / rows.max(1) as f64;
    for i in 0..n {
        sigma[(i, i)] += 1e-4;
    }
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    StaticParams { c, b, sigma }
}

/// Pooled impact estimate over one stretch, with the constant and
/// short-run terms held at the current statics: regress
/// Δy_t − c − Δy_{t−1}B on y_{t−1} for t in [lo, hi).
///
/// `skip` leaves one day out of the fit. A seed whose window contains the
/// day it will be judged on hands every state a small in-sample advantage,
/// uniformly across the sample — enough, accumulated over a long stretch,
/// to out-vote the transition costs that are supposed to keep quiet days
/// at rank 0.
fn block_pi(
    y: &DMatrix<f64>,
    lo: usize,
    hi: usize,
    statics: &StaticParams,
    skip: Option<usize>,
) -> DMatrix<f64> {
    let n = y.ncols();
    let lo = lo.max(2);
    let mut x_rows: Vec<RowDVector<f64>> = Vec::new();
    let mut u_rows: Vec<RowDVector<f64>> = Vec::new();
    for t in lo..hi {
        if Some(t) == skip {
            continue;
        }
        let z = (y.row(t) - y.row(t - 1))
            - &statics.c
            - (y.row(t - 1) - y.row(t - 2)) * &statics.b;
        x_rows.push(y.row(t - 1).into_owned());
        u_rows.push(z);
    }
    let rows = x_rows.len();
    let mut x = DMatrix::zeros(rows, n);
    let mut u = DMatrix::zeros(rows, n);
    for (r, (xr, ur)) in x_rows.iter().zip(&u_rows).enumerate() {
        x.row_mut(r).copy_from(xr);
        u.row_mut(r).copy_from(ur);
    }
    let mut gram = x.transpose() * &x;
    let ridge = 1e-6 * (gram.trace() / n as f64).max(1e-12);
    for i in 0..n {
        gram[(i, i)] += ridge;
    }
    gram.lu()
        .solve(&(x.transpose() * &u))
        .unwrap_or_else(|| DMatrix::zeros(n, n))
}

/// Scan windows of several widths for stretches whose pooled reduced-rank
/// fit beats no error correction, and return a greedy non-overlapping
/// selection of the winners as (lo, hi) day ranges.
///
/// Day-by-day comparisons cannot bootstrap the labeling: a single-window
/// impact estimate carries enough noise that even truly active days often
/// score below rank 0, so scattered wins never form a block. Pooling a
/// window shrinks that estimation noise with its length while the real
/// signal accumulates linearly. Each window's in-sample gain is charged a
/// Bayes-style complexity penalty before it may enter the selection.
fn scan_blocks(y: &DMatrix<f64>, statics: &StaticParams) -> Vec<(usize, usize)> {
    let t_len = y.nrows();
    let dens = match GaussianDensity::new(&statics.sigma) {
        Ok(d) => d,
        Err(_) => return Vec::new(),
    };
    let mut scored: Vec<(f64, usize, usize)> = Vec::new();
    for width in [20usize, 40, 80] {
        let width = width.min(t_len.saturating_sub(2));
        if width < 6 {
            continue;
        }
        let step = (width / 4).max(1);
        let mut lo = 2;
        loop {
            let hi = (lo + width).min(t_len);
            let (l, a) = seed_factors(&block_pi(y, lo, hi, statics, None));
            let pi = factor_pi(&l, &a, 1);
            let mut score = 0.0;
            for t in lo..hi {
                let base = (y.row(t) - y.row(t - 1))
                    - &statics.c
                    - (y.row(t - 1) - y.row(t - 2)) * &statics.b;
                let with = &base - y.row(t - 1) * &pi;
                score += dens.logpdf(&with) - dens.logpdf(&base);
            }
            // Half the free parameter count times log window length, as a
            // model-comparison charge against in-sample overfit.
            score -= 1.5 * ((hi - lo) as f64).ln();
            if score > 0.0 {
                scored.push((score, lo, hi));
            }
            if hi == t_len {
                break;
            }
            lo += step;
        }
    }
    scored.sort_by(|x, z| z.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    for &(_, lo, hi) in &scored {
        if chosen.iter().all(|&(a, b)| hi <= a || lo >= b) {
            chosen.push((lo, hi));
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Posterior-mean transition matrix given a labeled path: Dirichlet
/// pseudo-counts plus observed move counts, row-normalized.
fn label_transitions(labels: &[usize], ns: usize, a_stay: f64, a_move: f64) -> DMatrix<f64> {
    let mut counts = DMatrix::from_fn(ns, ns, |i, j| if i == j { a_stay } else { a_move });
    for w in labels.windows(2) {
        counts[(w[0] - 1, w[1] - 1)] += 1.0;
    }
    for i in 0..ns {
        let total: f64 = counts.row(i).iter().sum();
        for j in 0..ns {
            counts[(i, j)] /= total;
        }
    }
    counts
}

/// Deterministic, data-informed starting point for estimation runs.
///
/// The factor paths start at a rolling-window least-squares impact
/// estimate (rows of the local Π for α, a row-wise sub-fit for the free β
/// elements), so the very first rank-path update can already tell states
/// apart day by day: the local fit is near zero on stretches without error
/// correction and near the acting impact inside regimes. A cold all-zero
/// start leaves every nonzero rank unobserved and chains then take
/// arbitrarily long to discover regimes (or latch onto labeling every day
/// full rank).
///
/// A few deterministic refinement passes then tighten the start: label each
/// day with its most probable state given the seeded paths and current
/// statics (max-product over the sticky chain), refit c, B, Σ from
/// residuals that honor each day's labeled state, and replace the factor
/// seeds inside labeled stretches with that stretch's pooled estimate.
/// Without the refit, the one-regime full-sample fit inflates Σ whenever
/// regimes are present, which flattens the state likelihoods exactly when
/// the first sweeps need them sharpest; chains then risk absorbing into an
/// all-rank-0 labeling whose factor paths decay to prior noise. The final
/// labeling also seeds the rank path and the transition matrix, so the
/// chain starts consistent with itself.
pub fn initial_state(y: &DMatrix<f64>, priors: &PriorSpec) -> Result<GibbsState> {
    priors.validate()?;
    let n = y.ncols();
    let t_len = y.nrows();
    if n < 2 || t_len < 3 {
        return Err(Error::Dim(format!("need n ≥ 2 and t_len ≥ 3, got n={n}, t_len={t_len}")));
    }
    let ns = n + 1;
    let denom = priors.a_stay + (ns - 1) as f64 * priors.a_move;
    let p = DMatrix::from_fn(ns, ns, |i, j| {
        if i == j { priors.a_stay / denom } else { priors.a_move / denom }
    });
    // The increment variances start far below their prior mean, so the
    // first smoother draws hug the pooled seeds instead of wandering. The
    // cost of a wandering start scales with the level of the series (a
    // relationship-vector wiggle is multiplied by the level it weights),
    // and a few such sweeps can delabel every active day before the
    // variances have a chance to adapt downward. From a tiny start the
    // inverse-gamma block grows them within a handful of sweeps wherever
    // the data ask for drift.
    let w_init = 1e-6;

    // Base statics from the no-cointegration fit. The intercept and the
    // level regressors must never be fit jointly here: series whose levels
    // sit far from zero and barely move make those columns collinear, and
    // the solver then splits the drift between c and Π·levels arbitrarily —
    // a phantom constant misfit that every nonzero-rank window could
    // "explain" during the scan below.
    let zero = DMatrix::zeros(n, n);
    let zero_l: Vec<DMatrix<f64>> = vec![zero.clone(); t_len];
    let zero_a: Vec<DMatrix<f64>> = vec![zero; t_len];
    let mut statics = refit_statics(y, &vec![1usize; t_len], &zero_l, &zero_a);
    statics.validate()?;

    let mut l_path = Vec::with_capacity(t_len);
    let mut a_path = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let lo = t.saturating_sub(INIT_WINDOW).max(2);
        let hi = (t + INIT_WINDOW + 1).min(t_len);
        let (l, a) = seed_factors(&block_pi(y, lo, hi, &statics, Some(t)));
        l_path.push(l);
        a_path.push(a);
    }

    // Bootstrap the labeling from pooled window scores, then let the
    // refinement passes snap boundaries and tighten the fit.
    let mut labels = vec![1usize; t_len];
    for (lo, hi) in scan_blocks(y, &statics) {
        let (l, a) = seed_factors(&block_pi(y, lo, hi, &statics, None));
        for t in lo..hi {
            labels[t] = 2;
            l_path[t] = l.clone();
            a_path[t] = a.clone();
        }
    }
    statics = refit_statics(y, &labels, &l_path, &a_path);
    statics.validate()?;

    for _ in 0..INIT_PASSES {
        let ll = ffbs::state_loglik_matrix(y, &statics, &l_path, &a_path, ns)?;
        labels = viterbi_labels(&ll, &p);
        statics = refit_statics(y, &labels, &l_path, &a_path);
        statics.validate()?;
        // Pool each labeled stretch into one impact estimate; isolated seeds
        // stay as the rolling-window fit.
        let mut t = 0;
        while t < t_len {
            if labels[t] < 2 {
                t += 1;
                continue;
            }
            let lo = t;
            while t < t_len && labels[t] >= 2 {
                t += 1;
            }
            if t - lo >= 3 {
                let (l, a) = seed_factors(&block_pi(y, lo, t, &statics, None));
                for u in lo..t {
                    l_path[u] = l.clone();
                    a_path[u] = a.clone();
                }
            }
        }
    }
    let ll = ffbs::state_loglik_matrix(y, &statics, &l_path, &a_path, ns)?;
    labels = viterbi_labels(&ll, &p);
    let chain = RankChainParams {
        p: label_transitions(&labels, ns, priors.a_stay, priors.a_move),
    };
    chain.validate()?;

    Ok(GibbsState {
        path: RankPath::new(labels),
        chain,
        l_path,
        a_path,
        w_l: DVector::repeat(n_lower(n), w_init),
        w_a: DVector::repeat(n * n, w_init),
        statics,
    })
}

/// One full Gibbs sweep over all blocks, in place.
pub fn gibbs_cycle(
    state: &mut GibbsState,
    y: &DMatrix<f64>,
    priors: &PriorSpec,
    rng: &mut ChaCha8Rng,
    book: &mut Bookkeeping,
) -> Result<()> {
    let ns = state.n() + 1;

    state.path = ffbs::sample_rank_path(
        y,
        &state.statics,
        &state.l_path,
        &state.a_path,
        &state.chain,
        rng,
    )?;
    state.chain = conjugate::sample_transition_matrix(
        &state.path.states,
        ns,
        priors.a_stay,
        priors.a_move,
        rng,
    )?;
    state.a_path = smoother::sample_alpha_path(
        y,
        &state.path,
        &state.l_path,
        &state.statics,
        &state.w_a,
        priors.tau0_sq,
        rng,
        &mut book.jitter_events,
    )?;
    state.l_path = smoother::sample_l_path(
        y,
        &state.path,
        &state.a_path,
        &state.statics,
        &state.w_l,
        priors.tau0_sq,
        rng,
        &mut book.jitter_events,
    )?;
    let a_vecs: Vec<DVector<f64>> = state.a_path.iter().map(smoother::vec_a).collect();
    state.w_a = conjugate::sample_innovation_variances(&a_vecs, priors.w_shape, priors.w_rate, rng)?;
    let l_vecs: Vec<DVector<f64>> = state.l_path.iter().map(smoother::vec_l).collect();
    state.w_l = conjugate::sample_innovation_variances(&l_vecs, priors.w_shape, priors.w_rate, rng)?;
    state.statics = conjugate::sample_statics(
        y,
        &state.pi_path(),
        &state.statics.sigma,
        priors.v0,
        priors.nu0,
        rng,
        &mut book.ridge_events,
    )?;
    Ok(())
}

/// Retained posterior sample plus run metadata.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub n: usize,
    pub t_len: usize,
    /// Per-draw 1-based state paths.
    pub states: Vec<Vec<u8>>,
    pub p: Vec<DMatrix<f64>>,
    pub statics: Vec<StaticParams>,
    /// Per-draw flattened factor paths, one row per time point.
    pub l_paths: Vec<DMatrix<f64>>,
    pub a_paths: Vec<DMatrix<f64>>,
    pub w_l: Vec<DVector<f64>>,
    pub w_a: Vec<DVector<f64>>,
    /// Per-draw conditional log likelihood of the usable observations.
    pub loglik: Vec<f64>,
    pub priors: PriorSpec,
    pub settings: McmcSettings,
    pub bookkeeping: Bookkeeping,
}

impl PosteriorDraws {
    pub fn n_retained(&self) -> usize {
        self.states.len()
    }
}

fn flatten_path(path: &[DMatrix<f64>], to_vec: impl Fn(&DMatrix<f64>) -> DVector<f64>) -> DMatrix<f64> {
    let rows = path.len();
    let cols = to_vec(&path[0]).len();
    let mut out = DMatrix::zeros(rows, cols);
    for (t, m) in path.iter().enumerate() {
        out.row_mut(t).tr_copy_from(&to_vec(m));
    }
    out
}

/// Run the sampler on one bivariate series (rows are time points).
pub fn run_mcmc(y: &DMatrix<f64>, priors: &PriorSpec, settings: &McmcSettings) -> Result<PosteriorDraws> {
    priors.validate()?;
    settings.validate()?;
    let n = y.ncols();
    let t_len = y.nrows();
    if n < 2 {
        return Err(Error::Dim(format!("need at least 2 series, got {n}")));
    }
    if t_len < 3 {
        return Err(Error::Dim(format!("need at least 3 time points, got {t_len}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("series contains non-finite values".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut state = initial_state(y, priors)?;
    let mut book = Bookkeeping::default();

    let total = settings.n_burnin + settings.n_draws;
    let retained = settings.n_draws.div_ceil(settings.thin);
    let mut out = PosteriorDraws {
        n,
        t_len,
        states: Vec::with_capacity(retained),
        p: Vec::with_capacity(retained),
        statics: Vec::with_capacity(retained),
        l_paths: Vec::with_capacity(retained),
        a_paths: Vec::with_capacity(retained),
        w_l: Vec::with_capacity(retained),
        w_a: Vec::with_capacity(retained),
        loglik: Vec::with_capacity(retained),
        priors: priors.clone(),
        settings: *settings,
        bookkeeping: book,
    };

    for iter in 0..total {
        gibbs_cycle(&mut state, y, priors, &mut rng, &mut book)?;
        if iter < settings.n_burnin || (iter - settings.n_burnin) % settings.thin != 0 {
            continue;
        }
        out.states.push(state.path.states.iter().map(|s| *s as u8).collect());
        out.p.push(state.chain.p.clone());
        out.statics.push(state.statics.clone());
        out.l_paths.push(flatten_path(&state.l_path, smoother::vec_l));
        out.a_paths.push(flatten_path(&state.a_path, smoother::vec_a));
        out.w_l.push(state.w_l.clone());
        out.w_a.push(state.w_a.clone());
        out.loglik.push(per_obs_loglik(y, &state.statics, &state.pi_path()[2..])?.sum());
    }
    out.bookkeeping = book;
    Ok(out)
}
