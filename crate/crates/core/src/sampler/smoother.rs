//! Simulation smoother for the Gaussian random-walk factor paths.
//!
//! State equation: x_{t+1} = x_t + w_t with w_t ~ N(0, diag(W)) and
//! x_1 ~ N(0, τ₀² I). Observation at t (when present): d_t = Z_t x_t + ε_t
//! with ε_t ~ N(0, Σ). A forward Kalman pass stores the filtered moments;
//! the backward pass draws the path jointly.

use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::vecm::{truncate_factors, RankPath, StaticParams};

/// One observation term d = Z x + noise; days without information carry None.
#[derive(Debug, Clone)]
pub struct ObsTerm {
    pub z: DMatrix<f64>,
    pub d: DVector<f64>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let mt = m.transpose();
    *m += mt;
    *m *= 0.5;
}

/// Cholesky with a small escalating jitter fallback; counts fallback uses.
fn robust_cholesky(
    mut m: DMatrix<f64>,
    jitter_events: &mut u64,
    what: &str,
) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    symmetrize(&mut m);
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    for jitter in [1e-10, 1e-8, 1e-6] {
        *jitter_events += 1;
        let bumped = &m + DMatrix::<f64>::identity(n, n) * jitter;
        if let Some(c) = Cholesky::new(bumped) {
            return Ok(c);
        }
    }
    Err(Error::Numerical(format!("{what} not positive definite")))
}

fn mvn_draw(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
    jitter_events: &mut u64,
) -> Result<DVector<f64>> {
    let chol = robust_cholesky(cov.clone(), jitter_events, "draw covariance")?;
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + chol.l() * z)
}

/// Draw the full state path given per-time observation terms.
pub fn sample_rw_path(
    obs: &[Option<ObsTerm>],
    sigma: &DMatrix<f64>,
    w: &DVector<f64>,
    tau0_sq: f64,
    rng: &mut ChaCha8Rng,
    jitter_events: &mut u64,
) -> Result<Vec<DVector<f64>>> {
    let t_len = obs.len();
    let m = w.len();
    if t_len == 0 {
        return Err(Error::Dim("empty observation sequence".into()));
    }
    let w_diag = DMatrix::from_diagonal(w);
    let mut a = DVector::<f64>::zeros(m);
    let mut p = DMatrix::<f64>::identity(m, m) * tau0_sq;
    let mut filt: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::with_capacity(t_len);

    for (t, term) in obs.iter().enumerate() {
        if let Some(ObsTerm { z, d }) = term {
            if z.ncols() != m || z.nrows() != d.len() {
                return Err(Error::Dim(format!("observation term at t={t} has wrong shape")));
            }
            // v = d − Za, F = ZPZ' + Σ, K = PZ'F⁻¹
            let v = d - z * &a;
            let f = z * &p * z.transpose() + sigma;
            let chol = robust_cholesky(f, jitter_events, &format!("innovation covariance at t={t}"))?;
            let k = chol.solve(&(z * &p)).transpose();
            a += &k * v;
            let mut pf = &p - &k * z * &p;
            symmetrize(&mut pf);
            p = pf;
        }
        filt.push((a.clone(), p.clone()));
        p += &w_diag;
    }

    // Backward draws: with an identity transition, x_t | x_{t+1} has
    // mean a_t + G(x_{t+1} − a_t) and covariance P_t − G P_t,
    // where G = P_t (P_t + W)⁻¹.
    let mut path = vec![DVector::zeros(m); t_len];
    let (a_last, p_last) = &filt[t_len - 1];
    path[t_len - 1] = mvn_draw(a_last, p_last, rng, jitter_events)?;
    for t in (0..t_len - 1).rev() {
        let (af, pf) = &filt[t];
        let chol = robust_cholesky(pf + &w_diag, jitter_events, "one-step covariance")?;
        let g = chol.solve(pf).transpose();
        let mean = af + &g * (&path[t + 1] - af);
        let mut cov = pf - &g * pf;
        symmetrize(&mut cov);
        path[t] = mvn_draw(&mean, &cov, rng, jitter_events)?;
    }
    Ok(path)
}

/// Row-major flattening helpers for the α state (n×n) and the free β
/// elements (strictly lower triangle, row-major).
pub fn vec_a(a: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows();
    DVector::from_fn(n * n, |k, _| a[(k / n, k % n)])
}

pub fn unvec_a(x: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| x[i * n + j])
}

pub fn lower_indices(n: usize) -> Vec<(usize, usize)> {
    let mut idx = Vec::new();
    for i in 1..n {
        for j in 0..i {
            idx.push((i, j));
        }
    }
    idx
}

pub fn vec_l(l: &DMatrix<f64>) -> DVector<f64> {
    let idx = lower_indices(l.nrows());
    DVector::from_fn(idx.len(), |k, _| l[idx[k]])
}

pub fn unvec_l(x: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (k, (i, j)) in lower_indices(n).into_iter().enumerate() {
        m[(i, j)] = x[k];
    }
    m
}

/// Per-time observation term for the α state given the β side and the rank:
/// Δy_t − c − Δy_{t−1}B = y_{t−1} β_t α_t + ε_t, linear in the first
/// rank rows of A. Rank-0 days and the first two time points carry no
/// information.
fn alpha_obs(
    y: &DMatrix<f64>,
    path: &RankPath,
    l_path: &[DMatrix<f64>],
    statics: &StaticParams,
    t: usize,
) -> Option<ObsTerm> {
    let n = statics.n();
    let rank = path.rank(t);
    if t < 2 || rank == 0 {
        return None;
    }
    let (beta, _) = truncate_factors(&l_path[t], &DMatrix::zeros(n, n), rank);
    let yb = y.row(t - 1) * beta; // 1×rank
    let d = ((y.row(t) - y.row(t - 1))
        - &statics.c
        - (y.row(t - 1) - y.row(t - 2)) * &statics.b)
        .transpose();
    let mut z = DMatrix::zeros(n, n * n);
    for j in 0..n {
        for k in 0..rank {
            z[(j, k * n + j)] = yb[(0, k)];
        }
    }
    Some(ObsTerm { z, d })
}

/// Per-time observation term for the free β elements given the α side:
/// subtracting the identity block's contribution leaves a term linear in
/// the strictly-lower entries feeding rows rank..n of β. Rank-0 and
/// full-rank days carry no information.
fn l_obs(
    y: &DMatrix<f64>,
    path: &RankPath,
    a_path: &[DMatrix<f64>],
    statics: &StaticParams,
    t: usize,
) -> Option<ObsTerm> {
    let n = statics.n();
    let rank = path.rank(t);
    if t < 2 || rank == 0 || rank == n {
        return None;
    }
    let alpha = a_path[t].rows(0, rank).into_owned();
    let d = ((y.row(t) - y.row(t - 1))
        - &statics.c
        - (y.row(t - 1) - y.row(t - 2)) * &statics.b
        - y.row(t - 1).columns(0, rank) * &alpha)
        .transpose();
    let idx = lower_indices(n);
    let mut z = DMatrix::zeros(n, idx.len());
    for (col, (i, k)) in idx.iter().enumerate() {
        if *i >= rank && *k < rank {
            for j in 0..n {
                z[(j, col)] = y[(t - 1, *i)] * alpha[(*k, j)];
            }
        }
    }
    Some(ObsTerm { z, d })
}

/// Draw the α state path given everything else.
pub fn sample_alpha_path(
    y: &DMatrix<f64>,
    path: &RankPath,
    l_path: &[DMatrix<f64>],
    statics: &StaticParams,
    w_a: &DVector<f64>,
    tau0_sq: f64,
    rng: &mut ChaCha8Rng,
    jitter_events: &mut u64,
) -> Result<Vec<DMatrix<f64>>> {
    let n = statics.n();
    let obs: Vec<Option<ObsTerm>> = (0..y.nrows())
        .map(|t| alpha_obs(y, path, l_path, statics, t))
        .collect();
    let states = sample_rw_path(&obs, &statics.sigma, w_a, tau0_sq, rng, jitter_events)?;
    Ok(states.iter().map(|x| unvec_a(x, n)).collect())
}

/// Draw the free-β path given everything else.
pub fn sample_l_path(
    y: &DMatrix<f64>,
    path: &RankPath,
    a_path: &[DMatrix<f64>],
    statics: &StaticParams,
    w_l: &DVector<f64>,
    tau0_sq: f64,
    rng: &mut ChaCha8Rng,
    jitter_events: &mut u64,
) -> Result<Vec<DMatrix<f64>>> {
    let n = statics.n();
    let obs: Vec<Option<ObsTerm>> = (0..y.nrows())
        .map(|t| l_obs(y, path, a_path, statics, t))
        .collect();
    let states = sample_rw_path(&obs, &statics.sigma, w_l, tau0_sq, rng, jitter_events)?;
    Ok(states.iter().map(|x| unvec_l(x, n)).collect())
}
