//! Forward filtering, backward sampling for the hidden rank chain.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vecm::{factor_pi, GaussianDensity, RankChainParams, RankPath, StaticParams};

/// Scaled forward filter in log-likelihood space.
///
/// `loglik` has one row per time point and one column per state; `init` is
/// the distribution of the first state. Returns the filtered state
/// probabilities (rows sum to one) and the total log-likelihood of the data
/// with the chain marginalized out.
pub fn forward_filter(
    loglik: &DMatrix<f64>,
    p: &DMatrix<f64>,
    init: &DVector<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let t_len = loglik.nrows();
    let ns = loglik.ncols();
    if p.shape() != (ns, ns) || init.len() != ns || t_len == 0 {
        return Err(Error::Dim(format!(
            "filter shapes disagree: loglik {:?}, P {:?}, init {}",
            loglik.shape(),
            p.shape(),
            init.len()
        )));
    }
    let mut filt = DMatrix::zeros(t_len, ns);
    let mut pred = init.clone();
    let mut total = 0.0;
    for t in 0..t_len {
        let m = loglik.row(t).max();
        if !m.is_finite() {
            return Err(Error::Numerical(format!(
                "state likelihood underflow at t={t}"
            )));
        }
        let mut norm = 0.0;
        for s in 0..ns {
            let w = pred[s] * (loglik[(t, s)] - m).exp();
            filt[(t, s)] = w;
            norm += w;
        }
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::Numerical(format!(
                "state likelihood underflow at t={t}"
            )));
        }
        for s in 0..ns {
            filt[(t, s)] /= norm;
        }
        total += m + norm.ln();
        if t + 1 < t_len {
            // pred_{t+1} = filt_t P (row convention)
            for j in 0..ns {
                pred[j] = (0..ns).map(|i| filt[(t, i)] * p[(i, j)]).sum();
            }
        }
    }
    Ok((filt, total))
}

pub(crate) fn sample_categorical(w: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = w.iter().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, v) in w.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    w.len() - 1
}

/// Draw a state path backwards from the filtered probabilities; returned
/// states are 1-based.
pub fn backward_sample(
    filt: &DMatrix<f64>,
    p: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let t_len = filt.nrows();
    let ns = filt.ncols();
    let mut states = vec![0usize; t_len];
    let last: Vec<f64> = filt.row(t_len - 1).iter().copied().collect();
    states[t_len - 1] = sample_categorical(&last, rng) + 1;
    for t in (0..t_len - 1).rev() {
        let next = states[t + 1] - 1;
        let w: Vec<f64> = (0..ns).map(|i| filt[(t, i)] * p[(i, next)]).collect();
        states[t] = sample_categorical(&w, rng) + 1;
    }
    states
}

/// Per-time, per-state log-likelihood of the observations with Π_t assembled
/// by truncating the current factor paths to each state's rank. The first two
/// rows stay at zero: no usable observation exists there, so every state is
/// equally likely.
pub fn state_loglik_matrix(
    y: &DMatrix<f64>,
    statics: &StaticParams,
    l_path: &[DMatrix<f64>],
    a_path: &[DMatrix<f64>],
    n_states: usize,
) -> Result<DMatrix<f64>> {
    let t_len = y.nrows();
    if l_path.len() != t_len || a_path.len() != t_len {
        return Err(Error::Dim("factor paths must cover every time point".into()));
    }
    let dens = GaussianDensity::new(&statics.sigma)?;
    let mut ll = DMatrix::zeros(t_len, n_states);
    for t in 2..t_len {
        let prev = y.row(t - 1).into_owned();
        let base = (y.row(t) - y.row(t - 1)) - &statics.c - (y.row(t - 1) - y.row(t - 2)) * &statics.b;
        for s in 1..=n_states {
            let pi = factor_pi(&l_path[t], &a_path[t], s - 1);
            let eps = &base - &prev * &pi;
            ll[(t, s - 1)] = dens.logpdf(&eps);
        }
    }
    Ok(ll)
}

/// One draw of the rank path from its conditional posterior, via forward
/// filtering with a uniform initial state distribution and backward sampling.
pub fn sample_rank_path(
    y: &DMatrix<f64>,
    statics: &StaticParams,
    l_path: &[DMatrix<f64>],
    a_path: &[DMatrix<f64>],
    chain: &RankChainParams,
    rng: &mut ChaCha8Rng,
) -> Result<RankPath> {
    let ns = chain.n_states();
    let ll = state_loglik_matrix(y, statics, l_path, a_path, ns)?;
    let init = DVector::repeat(ns, 1.0 / ns as f64);
    let (filt, _) = forward_filter(&ll, &chain.p, &init)?;
    Ok(RankPath::new(backward_sample(&filt, &chain.p, rng)))
}
