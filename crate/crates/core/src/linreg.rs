//! Ridge / min-norm regression: exact finite-sample fits, gradient-descent
//! paths, and the exact asymptotic standard/robust risks in the proportional
//! regime driven by the Marchenko–Pastur Stieltjes transform.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array1, Array2};

use crate::data::{decompose, Dataset, Estimator};
use crate::{Error, Result};

use std::f64::consts::PI;

/// Asymptotic quantities of the ridge estimate at (lambda, gamma, sigma2):
/// Stieltjes transform values and the risk decomposition.
///
/// At `lambda = 0` with `gamma > 1`, `m` holds the regular (pole-removed)
/// limit `1/(gamma(gamma-1))` and `m_prime` is infinite; `bias`, `variance`,
/// `sr`, `perp_mass` and `ar` always hold the finite limits.
#[derive(Debug, Clone, Copy)]
pub struct LinRegAsymptotics {
    /// m(-lambda).
    pub m: f64,
    /// m'(-lambda).
    pub m_prime: f64,
    /// B_inf = lambda^2 m'(-lambda).
    pub bias: f64,
    /// V_inf = sigma^2 gamma (m(-lambda) - lambda m'(-lambda)).
    pub variance: f64,
    /// R_inf = bias + variance, the asymptotic standard risk.
    pub sr: f64,
    /// P_inf = R_inf - (lambda m(-lambda))^2, the orthogonal mass.
    pub perp_mass: f64,
    /// R_inf + eps^2 P_inf + sqrt(8 eps^2 / pi * P_inf * R_inf).
    pub ar: f64,
}

/// Stieltjes transform of the Marchenko–Pastur law and its derivative at
/// `z = -lambda`, `lambda > 0`. Evaluated through cancellation-free forms:
/// `m = 2/(D + w)` with `w = 1 - gamma + lambda`, `D = sqrt(w^2 + 4 gamma
/// lambda)`, and `m' = m (gamma m + 1) / D` from the defining quadratic.
pub fn stieltjes_mp(lambda: f64, gamma: f64) -> (f64, f64) {
    debug_assert!(lambda > 0.0 && gamma > 0.0);
    let w = 1.0 - gamma + lambda;
    let disc = (w * w + 4.0 * gamma * lambda).sqrt();
    // disc + w cancels for w < 0; the conjugate form is exact there
    let m = if w >= 0.0 {
        2.0 / (disc + w)
    } else {
        (disc - w) / (2.0 * gamma * lambda)
    };
    let m_prime = m * (gamma * m + 1.0) / disc;
    (m, m_prime)
}

/// Exact asymptotic risks of the ridge estimate (`lambda > 0`) or the
/// min-norm interpolator (`lambda = 0`, `gamma != 1`).
pub fn linreg_asymptotics(
    lambda: f64,
    gamma: f64,
    sigma2: f64,
    eps_test: f64,
) -> Result<LinRegAsymptotics> {
    if !(gamma > 0.0) || lambda < 0.0 || sigma2 < 0.0 || eps_test < 0.0 {
        return Err(Error::Domain(format!(
            "linreg_asymptotics(lambda={lambda}, gamma={gamma}, sigma2={sigma2}, eps={eps_test})"
        )));
    }
    let (m, m_prime, bias, variance, lambda_m) = if lambda > 0.0 {
        let (m, m_prime) = stieltjes_mp(lambda, gamma);
        let bias = lambda * lambda * m_prime;
        let variance = if sigma2 > 0.0 {
            sigma2 * gamma * (m - lambda * m_prime)
        } else {
            0.0
        };
        (m, m_prime, bias, variance, lambda * m)
    } else if gamma < 1.0 {
        let m = 1.0 / (1.0 - gamma);
        let m_prime = 1.0 / (1.0 - gamma).powi(3);
        let variance = if sigma2 > 0.0 { sigma2 * gamma * m } else { 0.0 };
        (m, m_prime, 0.0, variance, 0.0)
    } else if gamma > 1.0 {
        // interpolation: the pole (1 - 1/gamma)/lambda is removed; what
        // survives in the risk is lambda m -> 1 - 1/gamma and
        // lambda^2 m' -> 1 - 1/gamma
        let m = 1.0 / (gamma * (gamma - 1.0));
        let bias = 1.0 - 1.0 / gamma;
        let variance = if sigma2 > 0.0 { sigma2 / (gamma - 1.0) } else { 0.0 };
        (m, f64::INFINITY, bias, variance, bias)
    } else {
        return Err(Error::Divergence(
            "risk of the min-norm interpolator blows up at gamma = 1".into(),
        ));
    };

    let sr = bias + variance;
    let perp_mass = (sr - lambda_m * lambda_m).clamp(0.0, sr);
    let ar = sr
        + eps_test * eps_test * perp_mass
        + (8.0 * eps_test * eps_test / PI * perp_mass * sr).sqrt();
    Ok(LinRegAsymptotics {
        m,
        m_prime,
        bias,
        variance,
        sr,
        perp_mass,
        ar,
    })
}

/// Log-spaced lambda grid for the optimal-lambda search; `0` is always
/// included as an exact limit point (skipped at gamma = 1 where the
/// interpolator risk diverges).
#[derive(Debug, Clone, Copy)]
pub struct LambdaGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid {
            lambda_min: 1e-4,
            lambda_max: 100.0,
            points: 121,
        }
    }
}

/// Minimize the asymptotic robust risk over lambda: coarse log-grid scan
/// (plus the lambda = 0 limit) followed by golden-section refinement.
pub fn optimal_lambda(
    gamma: f64,
    sigma2: f64,
    eps_test: f64,
    grid: &LambdaGrid,
) -> Result<(f64, f64)> {
    if grid.lambda_max < 10.0 || grid.points < 3 || grid.lambda_min <= 0.0 {
        return Err(Error::Config(format!(
            "lambda grid must cover [0, >=10] with lambda_min > 0, got {grid:?}"
        )));
    }
    let ar_at = |lambda: f64| linreg_asymptotics(lambda, gamma, sigma2, eps_test).map(|a| a.ar);

    let mut lambdas = Vec::with_capacity(grid.points + 1);
    if gamma != 1.0 {
        lambdas.push(0.0);
    }
    let log_lo = grid.lambda_min.ln();
    let log_hi = grid.lambda_max.ln();
    for i in 0..grid.points {
        let t = i as f64 / (grid.points - 1) as f64;
        lambdas.push((log_lo + t * (log_hi - log_lo)).exp());
    }

    let mut best_ix = 0;
    let mut best_ar = f64::INFINITY;
    for (ix, &l) in lambdas.iter().enumerate() {
        let ar = ar_at(l)?;
        if ar < best_ar {
            best_ar = ar;
            best_ix = ix;
        }
    }
    if best_ix == 0 && lambdas[0] == 0.0 {
        return Ok((0.0, best_ar));
    }
    let lo = if best_ix == 0 { lambdas[0] } else { lambdas[best_ix - 1] }.max(grid.lambda_min * 0.5);
    let hi = if best_ix + 1 < lambdas.len() {
        lambdas[best_ix + 1]
    } else {
        lambdas[best_ix]
    };
    if hi <= lo {
        return Ok((lambdas[best_ix], best_ar));
    }

    // golden section on the log scale
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = ar_at(c.exp())?;
    let mut fd = ar_at(d.exp())?;
    for _ in 0..120 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ar_at(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ar_at(d.exp())?;
        }
    }
    let lambda_opt = (0.5 * (a + b)).exp();
    let ar_opt = ar_at(lambda_opt)?;
    if ar_opt <= best_ar {
        Ok((lambda_opt, ar_opt))
    } else {
        Ok((lambdas[best_ix], best_ar))
    }
}

/// Ridge estimate `(lambda I + X^T X / n)^{-1} X^T y / n`, computed in the
/// primal for d <= n and through the dual identity
/// `theta = X^T (n lambda I + X X^T)^{-1} y` for d > n.
pub fn ridge_fit(dataset: &Dataset, lambda: f64) -> Result<Estimator> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(
            "ridge_fit needs lambda > 0; use min_norm_fit for the interpolating limit".into(),
        ));
    }
    let (n, d) = (dataset.n(), dataset.d());
    let theta = if d <= n {
        let mut gram = gram_matrix(&dataset.x, true);
        gram /= n as f64;
        for i in 0..d {
            gram[(i, i)] += lambda;
        }
        let rhs = xt_y(&dataset.x, &dataset.y);
        let b = DVector::from_iterator(d, rhs.iter().map(|v| v / n as f64));
        let sol = cholesky_solve(gram, &b)?;
        Array1::from_iter(sol.iter().copied())
    } else {
        let mut gram = gram_matrix(&dataset.x, false);
        for i in 0..n {
            gram[(i, i)] += n as f64 * lambda;
        }
        let b = DVector::from_iterator(n, dataset.y.iter().copied());
        let alpha = cholesky_solve(gram, &b)?;
        xt_weighted(&dataset.x, &alpha)
    };
    verify_normal_equations(dataset, lambda, &theta)?;
    Ok(decompose(&theta, &dataset.theta_star))
}

/// Min-l2-norm interpolator `X^T (X X^T)^{-1} y` for d > n; plain least
/// squares for d <= n.
pub fn min_norm_fit(dataset: &Dataset) -> Result<Estimator> {
    let (n, d) = (dataset.n(), dataset.d());
    let theta = if d > n {
        let gram = gram_matrix(&dataset.x, false);
        let b = DVector::from_iterator(n, dataset.y.iter().copied());
        let alpha = cholesky_solve(gram, &b)?;
        let theta = xt_weighted(&dataset.x, &alpha);
        let resid_sq: f64 = dataset
            .x
            .rows()
            .into_iter()
            .zip(dataset.y.iter())
            .map(|(row, &y)| (dot(row.as_slice().unwrap(), theta.as_slice().unwrap()) - y).powi(2))
            .sum();
        let y_sq = dataset.y.dot(&dataset.y);
        if resid_sq.sqrt() > 1e-8 * y_sq.sqrt().max(1e-300) {
            return Err(Error::Conditioning(format!(
                "interpolation residual {:e} too large",
                resid_sq.sqrt()
            )));
        }
        theta
    } else {
        let gram = gram_matrix(&dataset.x, true);
        let rhs = xt_y(&dataset.x, &dataset.y);
        let b = DVector::from_iterator(d, rhs.iter().copied());
        let sol = cholesky_solve(gram, &b)?;
        Array1::from_iter(sol.iter().copied())
    };
    Ok(decompose(&theta, &dataset.theta_star))
}

/// Learning-rate schedule for full-batch gradient descent on the mean
/// squared loss: base rate sqrt(1/d) unless overridden, linear warmup.
#[derive(Debug, Clone, Copy)]
pub struct GdSchedule {
    pub base_lr: Option<f64>,
    pub warmup_steps: usize,
}

impl Default for GdSchedule {
    fn default() -> Self {
        GdSchedule {
            base_lr: None,
            warmup_steps: 250,
        }
    }
}

/// Zero-initialized gradient descent on the mean squared loss; returns the
/// estimator at each requested step (step 0 is the zero vector). Errors if
/// the loss rises to 10x its initial value.
pub fn gd_regression_path(
    dataset: &Dataset,
    steps: usize,
    schedule: &GdSchedule,
    snapshot_steps: &[usize],
) -> Result<Vec<(usize, Estimator)>> {
    let (n, d) = (dataset.n(), dataset.d());
    let base_lr = schedule.base_lr.unwrap_or_else(|| (1.0 / d as f64).sqrt());
    let mut theta = Array1::<f64>::zeros(d);
    let mut snapshots = Vec::new();
    let loss0 = dataset.y.dot(&dataset.y) / n as f64;

    for step in 0..=steps {
        if snapshot_steps.contains(&step) {
            snapshots.push((step, decompose(&theta, &dataset.theta_star)));
        }
        if step == steps {
            break;
        }
        let preds = mat_vec(&dataset.x, &theta);
        let resid = &preds - &dataset.y;
        let loss = resid.dot(&resid) / n as f64;
        if loss > 10.0 * loss0.max(1e-300) {
            return Err(Error::StepSize(format!(
                "loss {loss:.3e} exceeded 10x initial {loss0:.3e} at step {step}"
            )));
        }
        let lr = if schedule.warmup_steps > 0 && step < schedule.warmup_steps {
            base_lr * (step + 1) as f64 / schedule.warmup_steps as f64
        } else {
            base_lr
        };
        let grad = xt_weighted_nd(&dataset.x, &resid.mapv(|v| 2.0 * v / n as f64));
        theta -= &grad.mapv(|g| lr * g);
    }
    Ok(snapshots)
}

fn verify_normal_equations(dataset: &Dataset, lambda: f64, theta: &Array1<f64>) -> Result<()> {
    let n = dataset.n() as f64;
    let preds = mat_vec(&dataset.x, theta);
    let rhs = xt_y(&dataset.x, &dataset.y).mapv(|v| v / n);
    let lhs = xt_y(&dataset.x, &preds).mapv(|v| v / n) + theta.mapv(|v| lambda * v);
    let diff = &lhs - &rhs;
    let err = diff.dot(&diff).sqrt();
    let scale = rhs.dot(&rhs).sqrt().max(1e-300);
    if err > 1e-8 * scale {
        return Err(Error::Conditioning(format!(
            "normal-equation residual {err:e} vs scale {scale:e}"
        )));
    }
    Ok(())
}

fn cholesky_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Cholesky::new(a)
        .map(|ch| ch.solve(b))
        .ok_or_else(|| Error::Conditioning("Cholesky factorization failed".into()))
}

/// X^T X (d x d) when `primal`, X X^T (n x n) otherwise.
fn gram_matrix(x: &Array2<f64>, primal: bool) -> DMatrix<f64> {
    let g = if primal { x.t().dot(x) } else { x.dot(&x.t()) };
    let k = g.nrows();
    DMatrix::from_fn(k, k, |i, j| g[(i, j)])
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

pub(crate) fn mat_vec(x: &Array2<f64>, v: &Array1<f64>) -> Array1<f64> {
    let vs = v.as_slice().unwrap();
    Array1::from_iter(
        x.rows()
            .into_iter()
            .map(|row| dot(row.as_slice().unwrap(), vs)),
    )
}

/// X^T w accumulated row by row (cache-friendly for row-major X).
pub(crate) fn xt_weighted_nd(x: &Array2<f64>, w: &Array1<f64>) -> Array1<f64> {
    let mut acc = vec![0.0f64; x.ncols()];
    for (row, &wi) in x.rows().into_iter().zip(w.iter()) {
        if wi == 0.0 {
            continue;
        }
        let rs = row.as_slice().unwrap();
        for (a, &r) in acc.iter_mut().zip(rs) {
            *a += wi * r;
        }
    }
    Array1::from_vec(acc)
}

fn xt_y(x: &Array2<f64>, y: &Array1<f64>) -> Array1<f64> {
    xt_weighted_nd(x, y)
}

fn xt_weighted(x: &Array2<f64>, w: &DVector<f64>) -> Array1<f64> {
    let w_nd = Array1::from_iter(w.iter().copied());
    xt_weighted_nd(x, &w_nd)
}
