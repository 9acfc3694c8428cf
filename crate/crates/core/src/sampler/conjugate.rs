//! Closed-form conditional draws: transition rows, static coefficients,
//! the innovation covariance, and the random-walk increment variances.

use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector, RowDVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::vecm::{RankChainParams, StaticParams};

/// Count the state-to-state moves along a path of 1-based states.
pub fn transition_counts(states: &[usize], n_states: usize) -> DMatrix<f64> {
    let mut counts = DMatrix::zeros(n_states, n_states);
    for w in states.windows(2) {
        counts[(w[0] - 1, w[1] - 1)] += 1.0;
    }
    counts
}

/// Draw each transition row from its Dirichlet conditional: prior counts
/// (a_stay on the diagonal, a_move off it) plus observed move counts.
pub fn sample_transition_matrix(
    states: &[usize],
    n_states: usize,
    a_stay: f64,
    a_move: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RankChainParams> {
    let counts = transition_counts(states, n_states);
    let mut p = DMatrix::zeros(n_states, n_states);
    for i in 0..n_states {
        let mut row = Vec::with_capacity(n_states);
        let mut total = 0.0;
        for j in 0..n_states {
            let prior = if i == j { a_stay } else { a_move };
            let shape = prior + counts[(i, j)];
            let g = Gamma::new(shape, 1.0)
                .map_err(|e| Error::Numerical(format!("gamma shape {shape}: {e}")))?;
            let v: f64 = rng.sample(g);
            total += v;
            row.push(v);
        }
        if total <= 0.0 {
            return Err(Error::Numerical(format!("degenerate Dirichlet draw in row {i}")));
        }
        for j in 0..n_states {
            p[(i, j)] = row[j] / total;
        }
    }
    let chain = RankChainParams { p };
    chain.validate()?;
    Ok(chain)
}

/// Draw from an inverse-Wishart(ν, S) via the Bartlett decomposition of a
/// Wishart(ν, S⁻¹) draw.
pub fn sample_inverse_wishart(
    nu: f64,
    scale: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let n = scale.nrows();
    if nu <= (n - 1) as f64 {
        return Err(Error::Numerical(format!("inverse-Wishart needs ν > {} (got {nu})", n - 1)));
    }
    let scale_chol = Cholesky::new(scale.clone())
        .ok_or_else(|| Error::Numerical("inverse-Wishart scale not positive definite".into()))?;
    // Wishart(ν, S⁻¹): draw A lower-triangular with χ²_(ν−i) diagonals and
    // standard-normal subdiagonals; W = L⁻ᵀ A Aᵀ L⁻¹ where S = L Lᵀ.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let chi = Gamma::new((nu - i as f64) / 2.0, 2.0)
            .map_err(|e| Error::Numerical(format!("chi-square df {}: {e}", nu - i as f64)))?;
        a[(i, i)] = rng.sample::<f64, _>(chi).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    // X = L⁻ᵀ A has X Xᵀ ~ Wishart(ν, S⁻¹); invert to get the IW draw.
    let l_t = scale_chol.l().transpose();
    let x = l_t
        .solve_upper_triangular(&a)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let w = &x * x.transpose();
    let mut inv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Wishart draw not invertible".into()))?;
    let inv_t = inv.transpose();
    inv += inv_t;
    inv *= 0.5;
    Ok(inv)
}

/// Draw the innovation variance of each independent random-walk element
/// from its inverse-gamma conditional given the path increments.
pub fn sample_innovation_variances(
    path: &[DVector<f64>],
    shape: f64,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let t_len = path.len();
    if t_len < 2 {
        return Err(Error::Dim("need at least two path points".into()));
    }
    let m = path[0].len();
    let mut out = DVector::zeros(m);
    let n_incr = (t_len - 1) as f64;
    for k in 0..m {
        let mut ssq = 0.0;
        for t in 1..t_len {
            let d = path[t][k] - path[t - 1][k];
            ssq += d * d;
        }
        let post_shape = shape + n_incr / 2.0;
        let post_rate = rate + ssq / 2.0;
        let g = Gamma::new(post_shape, 1.0 / post_rate)
            .map_err(|e| Error::Numerical(format!("gamma shape {post_shape}: {e}")))?;
        out[k] = 1.0 / rng.sample::<f64, _>(g);
    }
    Ok(out)
}

/// Residual matrix with the level term removed but the statics left in:
/// row k (for t = k+2) is Δy_t − y_{t−1} Π_t, the response the static
/// regression explains.
pub fn static_response(y: &DMatrix<f64>, pis: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let t_len = y.nrows();
    let n = y.ncols();
    if t_len < 3 {
        return Err(Error::Dim(format!("need at least 3 rows, got {t_len}")));
    }
    if pis.len() != t_len {
        return Err(Error::Dim(format!("pi path length {} != {t_len}", pis.len())));
    }
    let mut u = DMatrix::zeros(t_len - 2, n);
    for k in 0..t_len - 2 {
        let t = k + 2;
        let row = (y.row(t) - y.row(t - 1)) - y.row(t - 1) * &pis[t];
        u.row_mut(k).copy_from(&row);
    }
    Ok(u)
}

/// Regressor matrix pairing each response row with [1, Δy_{t−1}].
pub fn static_regressors(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t_len = y.nrows();
    let n = y.ncols();
    if t_len < 3 {
        return Err(Error::Dim(format!("need at least 3 rows, got {t_len}")));
    }
    let mut g = DMatrix::zeros(t_len - 2, 1 + n);
    for k in 0..t_len - 2 {
        let t = k + 2;
        g[(k, 0)] = 1.0;
        for j in 0..n {
            g[(k, 1 + j)] = y[(t - 1, j)] - y[(t - 2, j)];
        }
    }
    Ok(g)
}

/// Draw the constant, the short-run matrix, and the innovation covariance.
///
/// Coefficients are stacked column-by-column of Θ = [c; B] ((1+n)×n) and
/// drawn from N(K⁻¹ vec(G'UΣ⁻¹), K⁻¹) with K = Σ⁻¹ ⊗ G'G + v₀⁻¹ I; the
/// covariance then comes from IW(ν₀ + rows, I + E'E) at the new residuals.
/// A prior variance of exactly zero pins the coefficients at zero.
pub fn sample_statics(
    y: &DMatrix<f64>,
    pis: &[DMatrix<f64>],
    sigma: &DMatrix<f64>,
    v0: f64,
    nu0: f64,
    rng: &mut ChaCha8Rng,
    ridge_events: &mut u64,
) -> Result<StaticParams> {
    let n = y.ncols();
    let u = static_response(y, pis)?;
    let g = static_regressors(y)?;
    let rows = u.nrows() as f64;
    let p = 1 + n;

    let theta = if v0 == 0.0 {
        DMatrix::zeros(p, n)
    } else {
        let sigma_inv = sigma
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular innovation covariance".into()))?;
        let gtg = g.transpose() * &g;
        let mut k = sigma_inv.kronecker(&gtg);
        for i in 0..k.nrows() {
            k[(i, i)] += 1.0 / v0;
        }
        let rhs_mat = g.transpose() * &u * &sigma_inv; // p×n
        let rhs = DVector::from_fn(p * n, |idx, _| rhs_mat[(idx % p, idx / p)]);
        let chol = match Cholesky::new(k.clone()) {
            Some(c) => c,
            None => {
                *ridge_events += 1;
                let bumped = &k + DMatrix::<f64>::identity(p * n, p * n) * 1e-8;
                Cholesky::new(bumped)
                    .ok_or_else(|| Error::Numerical("coefficient precision not positive definite".into()))?
            }
        };
        let mean = chol.solve(&rhs);
        // Draw θ = mean + K^{-1/2} z by solving Lᵀ x = z.
        let z = DVector::from_fn(p * n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Numerical("singular precision factor".into()))?;
        let v = mean + x;
        DMatrix::from_fn(p, n, |i, j| v[j * p + i])
    };

    let resid = &u - &g * &theta;
    let scale = DMatrix::identity(n, n) + resid.transpose() * &resid;
    let sigma_new = sample_inverse_wishart(nu0 + rows, &scale, rng)?;

    let c = RowDVector::from_fn(n, |_, j| theta[(0, j)]);
    let b = theta.rows(1, n).into_owned();
    let out = StaticParams { c, b, sigma: sigma_new };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::RowDVector;

    #[test]
    fn transition_counts_tally_moves() {
        let counts = transition_counts(&[1, 1, 2, 2, 2, 1, 3], 3);
        let want = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 1.0, 1.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0],
        );
        assert_eq!(counts, want);
    }

    #[test]
    fn transition_rows_concentrate_on_observed_moves() {
        // A long path that always moves 1→2→1 pushes p12 and p21 toward 1.
        let mut states = Vec::new();
        for _ in 0..500 {
            states.push(1);
            states.push(2);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mean12 = 0.0;
        let n_draws = 200;
        for _ in 0..n_draws {
            let p = sample_transition_matrix(&states, 3, 10.0, 1.0, &mut rng).unwrap();
            mean12 += p.p[(0, 1)];
        }
        mean12 /= n_draws as f64;
        // 500 moves out of state 1, all to state 2: the posterior mean of
        // p12 is (1+500)/(12+500); Monte Carlo error is tiny.
        let want = 501.0 / 512.0;
        assert!((mean12 - want).abs() < 0.01, "{mean12} vs {want}");
    }

    #[test]
    fn dirichlet_prior_mean_without_data() {
        // A single-point path contributes no moves: rows are pure prior.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mean_stay = 0.0;
        let n_draws = 4000;
        for _ in 0..n_draws {
            let p = sample_transition_matrix(&[2], 3, 10.0, 1.0, &mut rng).unwrap();
            mean_stay += p.p[(0, 0)];
        }
        mean_stay /= n_draws as f64;
        assert!((mean_stay - 10.0 / 12.0).abs() < 0.01, "{mean_stay}");
    }

    #[test]
    fn inverse_wishart_moments_match() {
        // E[X] = S/(ν−n−1) for IW(ν,S).
        let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let nu = 8.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mean = DMatrix::zeros(2, 2);
        let n_draws = 20000;
        for _ in 0..n_draws {
            mean += sample_inverse_wishart(nu, &scale, &mut rng).unwrap();
        }
        mean /= n_draws as f64;
        let want = &scale / (nu - 3.0);
        assert!((&mean - &want).abs().max() < 0.02, "{mean} vs {want}");
    }

    #[test]
    fn innovation_variance_posterior_mean() {
        // Constant increments d: posterior is IG(shape+(T−1)/2, rate+(T−1)d²/2).
        let d = 0.2;
        let path: Vec<DVector<f64>> = (0..101)
            .map(|t| DVector::from_vec(vec![t as f64 * d]))
            .collect();
        let shape = 3.0;
        let rate = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut mean = 0.0;
        let n_draws = 20000;
        for _ in 0..n_draws {
            mean += sample_innovation_variances(&path, shape, rate, &mut rng).unwrap()[0];
        }
        mean /= n_draws as f64;
        let post_shape = shape + 50.0;
        let post_rate = rate + 100.0 * d * d / 2.0;
        let want = post_rate / (post_shape - 1.0);
        assert!((mean - want).abs() / want < 0.02, "{mean} vs {want}");
    }

    #[test]
    fn zero_prior_variance_pins_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = DMatrix::from_fn(20, 2, |i, j| ((i * 2 + j) as f64 * 0.37).sin());
        let pis = vec![DMatrix::zeros(2, 2); 20];
        let sigma = DMatrix::identity(2, 2);
        let mut ridge = 0;
        let s = sample_statics(&y, &pis, &sigma, 0.0, 4.0, &mut rng, &mut ridge).unwrap();
        assert_eq!(s.c, RowDVector::from_vec(vec![0.0, 0.0]));
        assert_eq!(s.b, DMatrix::zeros(2, 2));
        assert_eq!(ridge, 0);
    }

    #[test]
    fn statics_recover_generating_coefficients() {
        // Strong data, vague prior: the posterior mean of Θ approaches the
        // generalized-least-squares estimate, which approaches the truth.
        let n = 2;
        let c_true = RowDVector::from_vec(vec![0.4, -0.2]);
        let b_true = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.1, 0.3]);
        let sigma_true = DMatrix::from_row_slice(2, 2, &[0.02, 0.005, 0.005, 0.01]);
        let chol = Cholesky::new(sigma_true.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t_len = 10_000;
        let mut y = DMatrix::zeros(t_len, n);
        for t in 2..t_len {
            let eps =
                RowDVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)) * chol.l().transpose();
            let row = y.row(t - 1) + &c_true + (y.row(t - 1) - y.row(t - 2)) * &b_true + eps;
            y.row_mut(t).copy_from(&row);
        }
        let pis = vec![DMatrix::zeros(n, n); t_len];
        let mut ridge = 0;
        let mut c_mean = RowDVector::zeros(n);
        let mut b_mean = DMatrix::zeros(n, n);
        let mut sig_mean = DMatrix::zeros(n, n);
        let n_draws = 50;
        let mut sigma = DMatrix::identity(n, n);
        for _ in 0..n_draws {
            let s = sample_statics(&y, &pis, &sigma, 10.0, 4.0, &mut rng, &mut ridge).unwrap();
            sigma = s.sigma.clone();
            c_mean += &s.c;
            b_mean += &s.b;
            sig_mean += &s.sigma;
        }
        c_mean /= n_draws as f64;
        b_mean /= n_draws as f64;
        sig_mean /= n_draws as f64;
        assert!((&c_mean - &c_true).abs().max() < 0.02, "{c_mean}");
        assert!((&b_mean - &b_true).abs().max() < 0.05, "{b_mean}");
        assert!((&sig_mean - &sigma_true).abs().max() < 0.005, "{sig_mean}");
    }
}
