//! Adversarially trained logistic regression: the ridge-regularized robust
//! estimator, the robust max-l2-margin interpolator obtained by a lambda
//! homotopy, zero-initialized gradient-descent paths, and margin/sparsity
//! diagnostics.
//!
//! The robust objective puts the attack penalty inside the loss,
//! `mean l(y_i <x_i, theta> - eps rho(theta)) + lambda ||theta||^2`, with
//! `rho` the norm the perturbation ball sees. The l1 term has no separable
//! prox, so fits run accelerated subgradient descent with backtracking and
//! function-value restarts; Gaussian data keeps the kink set measure-zero.

use ndarray::Array1;

use crate::data::{decompose, Dataset, Estimator, PerturbationNorm};
use crate::linreg::{dot, mat_vec};
use crate::numerics::{logistic_loss, sigmoid};
use crate::{Error, Result};

/// One pass over X: mean robust logistic loss, its data-term gradient
/// `(1/n) X^T (l'(m) y)` and the mean weight `(1/n) sum l'(m_i)`. Each row
/// is used for the score and the gradient update while cache-hot.
fn fused_logistic_pass(
    dataset: &Dataset,
    theta: &Array1<f64>,
    eps_pen: f64,
) -> (f64, Array1<f64>, f64) {
    let n = dataset.n() as f64;
    let ts = theta.as_slice().unwrap();
    let mut value = 0.0;
    let mut w_mean = 0.0;
    let mut gx = vec![0.0f64; dataset.d()];
    for (row, &y) in dataset.x.rows().into_iter().zip(dataset.y.iter()) {
        let rs = row.as_slice().unwrap();
        let m = y * dot(rs, ts) - eps_pen;
        value += logistic_loss(m) / n;
        let w = -sigmoid(-m);
        w_mean += w / n;
        let wy = w * y / n;
        for (a, &r) in gx.iter_mut().zip(rs) {
            *a += wy * r;
        }
    }
    (value, Array1::from_vec(gx), w_mean)
}

/// One pass over X: mean robust logistic loss only.
fn fused_logistic_value(dataset: &Dataset, theta: &Array1<f64>, eps_pen: f64) -> f64 {
    let n = dataset.n() as f64;
    let ts = theta.as_slice().unwrap();
    let mut value = 0.0;
    for (row, &y) in dataset.x.rows().into_iter().zip(dataset.y.iter()) {
        let m = y * dot(row.as_slice().unwrap(), ts) - eps_pen;
        value += logistic_loss(m) / n;
    }
    value
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Iteration cap per solve.
    pub max_iter: usize,
    /// Accept gate: a subgradient of norm <= tol (1 + ||smooth grad||).
    pub stationarity_tol: f64,
    /// Stop when the objective decreased by less than `plateau_rel`
    /// (relatively) over this many iterations.
    pub plateau_window: usize,
    pub plateau_rel: f64,
    /// Homotopy stages lambda = 10^0 .. 10^-(decades).
    pub homotopy_decades: u32,
    /// After the decade stages, keep squaring lambda downward this many
    /// times (1e-12, 1e-24, ...). The homotopy direction converges only
    /// like 1/log(1/lambda), so these sharpening stages are what brings the
    /// max-margin direction in.
    pub sharpening_squarings: u32,
    /// Iteration cap per homotopy stage; only the terminal direction
    /// matters, so stages get a tighter budget than a standalone fit.
    pub stage_max_iter: usize,
    /// Early homotopy exit when the normalized direction moves less than
    /// this between consecutive lambdas.
    pub direction_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 4000,
            stationarity_tol: 1e-5,
            plateau_window: 100,
            plateau_rel: 1e-10,
            homotopy_decades: 6,
            sharpening_squarings: 4,
            stage_max_iter: 700,
            direction_tol: 1e-4,
        }
    }
}

/// Outcome of a robust logistic fit.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub estimator: Estimator,
    /// Robust objective at the output (including the ridge term).
    pub final_loss: f64,
    /// min_i (y_i <x_i, theta> - eps rho(theta)) / ||theta||_2.
    pub robust_margin: f64,
    pub robust_avg_margin: f64,
    /// ||theta||_1 / ||theta||_2, the sparsity proxy.
    pub l1_over_l2: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Attack norm of the estimator and the subgradient of that norm
/// (sign(0) := 0 for the l1 pieces).
fn penalty_and_subgrad(
    theta: &Array1<f64>,
    theta_star: &Array1<f64>,
    norm: PerturbationNorm,
    consistent: bool,
) -> (f64, Array1<f64>) {
    match (norm, consistent) {
        (PerturbationNorm::L2, true) => {
            let par = theta.dot(theta_star);
            let perp = theta - &theta_star.mapv(|s| par * s);
            let rho = perp.dot(&perp).sqrt();
            let sub = if rho > 0.0 { perp.mapv(|v| v / rho) } else { perp };
            (rho, sub)
        }
        (PerturbationNorm::L2, false) => {
            let rho = theta.dot(theta).sqrt();
            let sub = if rho > 0.0 {
                theta.mapv(|v| v / rho)
            } else {
                Array1::zeros(theta.len())
            };
            (rho, sub)
        }
        (PerturbationNorm::Linf, true) => {
            // requires theta* = e_1; callers validate
            let mut rho = 0.0;
            let mut sub = Array1::zeros(theta.len());
            for j in 1..theta.len() {
                rho += theta[j].abs();
                sub[j] = sign0(theta[j]);
            }
            (rho, sub)
        }
        (PerturbationNorm::Linf, false) => {
            let rho = theta.iter().map(|v| v.abs()).sum();
            (rho, theta.mapv(sign0))
        }
    }
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn validate_mode(dataset: &Dataset, norm: PerturbationNorm, consistent: bool) -> Result<()> {
    if norm == PerturbationNorm::Linf && consistent {
        let ts = &dataset.theta_star;
        let is_e1 = ts[0] == 1.0 && ts.iter().skip(1).all(|&v| v == 0.0);
        if !is_e1 {
            return Err(Error::Config(
                "consistent l-infinity training requires the ground truth e_1".into(),
            ));
        }
    }
    Ok(())
}

/// Robust logistic objective and a subgradient.
pub fn robust_logistic_objective(
    theta: &Array1<f64>,
    dataset: &Dataset,
    eps: f64,
    norm: PerturbationNorm,
    consistent: bool,
    lambda: f64,
) -> Result<(f64, Array1<f64>)> {
    validate_mode(dataset, norm, consistent)?;
    let (rho, sub) = penalty_and_subgrad(theta, &dataset.theta_star, norm, consistent);
    let (loss, mut grad, w_mean) = fused_logistic_pass(dataset, theta, eps * rho);
    let value = loss + lambda * theta.dot(theta);
    for j in 0..grad.len() {
        grad[j] += -eps * w_mean * sub[j] + 2.0 * lambda * theta[j];
    }
    Ok((value, grad))
}

/// Objective value only (one matrix pass).
fn objective_value(
    theta: &Array1<f64>,
    dataset: &Dataset,
    eps: f64,
    norm: PerturbationNorm,
    consistent: bool,
    lambda: f64,
) -> f64 {
    let (rho, _) = penalty_and_subgrad(theta, &dataset.theta_star, norm, consistent);
    fused_logistic_value(dataset, theta, eps * rho) + lambda * theta.dot(theta)
}

/// Norm of the gradient of the smooth part (logistic + ridge), used to scale
/// the stationarity gate.
fn smooth_grad_norm(
    theta: &Array1<f64>,
    dataset: &Dataset,
    eps: f64,
    rho: f64,
    lambda: f64,
) -> f64 {
    let (_, mut g, _) = fused_logistic_pass(dataset, theta, eps * rho);
    for j in 0..g.len() {
        g[j] += 2.0 * lambda * theta[j];
    }
    g.dot(&g).sqrt()
}

struct SolveOutcome {
    theta: Array1<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Per-solve controls; `direction_exit` stops a homotopy stage once the
/// normalized direction settles (checked every 25 iterations), which is all
/// a warm-start stage needs to deliver.
#[derive(Debug, Clone, Copy)]
struct SolveControls {
    max_iter: usize,
    stationarity_exit: bool,
    direction_exit: Option<f64>,
}

/// Minimize the robust objective from `start`.
///
/// For l-infinity attacks the l1 penalty inside the loss grows like
/// `eps sqrt(d)` along a generic ray, so the `sign(0) = 0` subgradient at
/// the zero start is not a descent direction once d is large. The fits
/// therefore run in the split parameterization `theta = p - q`, `p, q >= 0`,
/// where the objective is smooth and the kinks become box constraints
/// handled exactly by projected accelerated descent. l2 attack norms have a
/// dimension-free kink and use the plain path.
///
/// `stationarity_exit` enables the early exit at the first-order gate; for
/// the near-zero-lambda homotopy stages of separable data the gate is
/// vacuous (every gradient is tiny on the max-margin ray), so those stages
/// run on the plateau criterion alone.
fn minimize(
    dataset: &Dataset,
    eps: f64,
    norm: PerturbationNorm,
    consistent: bool,
    lambda: f64,
    start: Array1<f64>,
    opts: &FitOptions,
    controls: SolveControls,
) -> Result<SolveOutcome> {
    match norm {
        PerturbationNorm::Linf => {
            minimize_split(dataset, eps, consistent, lambda, start, opts, controls)
        }
        PerturbationNorm::L2 => {
            minimize_plain(dataset, eps, norm, consistent, lambda, start, opts, controls)
        }
    }
}

/// Projected accelerated descent on the split objective
/// `mean l(y_i <x_i, p - q> - eps <mask, p + q>) + lambda ||p - q||^2`
/// over `p, q >= 0`; equivalent to the l1-penalized objective because any
/// common mass min(p_j, q_j) > 0 only lowers margins.
#[allow(clippy::too_many_arguments)]
fn minimize_split(
    dataset: &Dataset,
    eps: f64,
    consistent: bool,
    lambda: f64,
    start: Array1<f64>,
    opts: &FitOptions,
    controls: SolveControls,
) -> Result<SolveOutcome> {
    let stationarity_exit = controls.stationarity_exit;
    let d = dataset.d();
    let first_penalized = if consistent { 1 } else { 0 };

    let theta_of = |p: &Array1<f64>, q: &Array1<f64>| {
        let mut t = Array1::zeros(d);
        for j in 0..d {
            t[j] = p[j] - q[j];
        }
        t
    };
    let pen_of = |p: &Array1<f64>, q: &Array1<f64>| {
        let mut pen = 0.0;
        for j in first_penalized..d {
            pen += p[j] + q[j];
        }
        pen
    };
    let value_of = |p: &Array1<f64>, q: &Array1<f64>| {
        let theta = theta_of(p, q);
        fused_logistic_value(dataset, &theta, eps * pen_of(p, q)) + lambda * theta.dot(&theta)
    };
    // value, grad_p, grad_q, smooth-part gradient in theta, mean weight
    let full_eval = |p: &Array1<f64>, q: &Array1<f64>| {
        let theta = theta_of(p, q);
        let (loss, gx, w_mean) = fused_logistic_pass(dataset, &theta, eps * pen_of(p, q));
        let value = loss + lambda * theta.dot(&theta);
        let mut g_p = Array1::zeros(d);
        let mut g_q = Array1::zeros(d);
        for j in 0..d {
            let smooth = gx[j] + 2.0 * lambda * theta[j];
            let pen_g = if j >= first_penalized { -eps * w_mean } else { 0.0 };
            g_p[j] = smooth + pen_g;
            g_q[j] = -smooth + pen_g;
        }
        (value, g_p, g_q, gx, w_mean)
    };

    let mut p = start.mapv(|v| v.max(0.0));
    let mut q = start.mapv(|v| (-v).max(0.0));
    let mut f_best = value_of(&p, &q);
    let mut zp = p.clone();
    let mut zq = q.clone();
    let mut momentum = 1.0_f64;
    let mut lip = f64::NAN;
    let mut converged = false;
    let mut best_recent = f_best;
    let mut anchor = f_best;
    let mut iters = 0;
    let mut last_direction: Option<Array1<f64>> = None;

    for iter in 0..controls.max_iter {
        iters = iter + 1;
        let (f_z, g_p, g_q, gx, w_mean) = full_eval(&zp, &zq);
        let g_norm_sq = g_p.dot(&g_p) + g_q.dot(&g_q);
        if g_norm_sq == 0.0 {
            converged = stationarity_exit;
            break;
        }
        if lip.is_nan() {
            let scale = 1.0 + (zp.dot(&zp) + zq.dot(&zq)).sqrt();
            lip = g_norm_sq.sqrt() / (0.3 * scale);
        }

        // accept gate: a minimal-norm subgradient of the original objective
        // (free sign choice on zero coordinates) against the smooth scale.
        // gx/w_mean belong to the momentum point z, close enough once the
        // iterates settle; the plateau exit recomputes them at (p, q).
        if stationarity_exit && iter % 10 == 0 && iter > 0 {
            let theta = theta_of(&p, &q);
            let (sub_norm, smooth_norm) =
                best_subgradient_norm(&theta, &gx, w_mean, eps, lambda, first_penalized);
            if sub_norm <= opts.stationarity_tol * (1.0 + smooth_norm) {
                converged = true;
                break;
            }
        }

        // projected backtracking step from (zp, zq)
        let mut cand_p;
        let mut cand_q;
        let mut f_cand;
        let mut backtracks = 0;
        loop {
            cand_p = Array1::from_iter((0..d).map(|j| (zp[j] - g_p[j] / lip).max(0.0)));
            cand_q = Array1::from_iter((0..d).map(|j| (zq[j] - g_q[j] / lip).max(0.0)));
            f_cand = value_of(&cand_p, &cand_q);
            let mut lin = 0.0;
            let mut dist_sq = 0.0;
            for j in 0..d {
                let dp = cand_p[j] - zp[j];
                let dq = cand_q[j] - zq[j];
                lin += g_p[j] * dp + g_q[j] * dq;
                dist_sq += dp * dp + dq * dq;
            }
            if f_cand <= f_z + lin + 0.5 * lip * dist_sq || backtracks >= 120 || dist_sq == 0.0 {
                break;
            }
            lip *= 2.0;
            backtracks += 1;
        }

        if f_cand > f_best {
            // momentum overshot: restart from the best point
            zp = p.clone();
            zq = q.clone();
            momentum = 1.0;
            continue;
        }

        let momentum_new = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / momentum_new;
        for j in 0..d {
            zp[j] = cand_p[j] + beta * (cand_p[j] - p[j]);
            zq[j] = cand_q[j] + beta * (cand_q[j] - q[j]);
        }
        momentum = momentum_new;
        p = cand_p;
        q = cand_q;
        f_best = f_cand;
        lip = (lip * 0.9).max(1e-290);

        if let Some(tol) = controls.direction_exit {
            if (iter + 1) % 25 == 0 {
                let theta = theta_of(&p, &q);
                let nrm = theta.dot(&theta).sqrt();
                if nrm > 0.0 {
                    let dir = theta.mapv(|v| v / nrm);
                    if let Some(prev) = &last_direction {
                        if (&dir - prev).mapv(|v| v * v).sum().sqrt() < tol {
                            break;
                        }
                    }
                    last_direction = Some(dir);
                }
            }
        }

        best_recent = best_recent.min(f_best);
        if (iter + 1) % opts.plateau_window == 0 {
            if anchor - best_recent <= opts.plateau_rel * anchor.abs().max(1e-300) {
                if stationarity_exit {
                    let theta = theta_of(&p, &q);
                    let (_, _, _, gx2, w_mean2) = full_eval(&p, &q);
                    let (sub_norm, smooth_norm) = best_subgradient_norm(
                        &theta,
                        &gx2,
                        w_mean2,
                        eps,
                        lambda,
                        first_penalized,
                    );
                    converged = sub_norm <= opts.stationarity_tol * (1.0 + smooth_norm);
                }
                break;
            }
            anchor = best_recent;
        }
    }

    Ok(SolveOutcome {
        theta: theta_of(&p, &q),
        value: f_best,
        iterations: iters,
        converged,
    })
}

/// Minimal subgradient norm of the original objective at `theta`: zero
/// coordinates of the l1 term may pick any sign in [-1, 1].
fn best_subgradient_norm(
    theta: &Array1<f64>,
    gx: &Array1<f64>,
    w_mean: f64,
    eps: f64,
    lambda: f64,
    first_penalized: usize,
) -> (f64, f64) {
    let a = -eps * w_mean; // nonnegative: w_mean <= 0
    let mut sub_sq = 0.0;
    let mut smooth_sq = 0.0;
    for j in 0..theta.len() {
        let smooth = gx[j] + 2.0 * lambda * theta[j];
        smooth_sq += smooth * smooth;
        let g = if j < first_penalized {
            smooth
        } else if theta[j] > 0.0 {
            smooth + a
        } else if theta[j] < 0.0 {
            smooth - a
        } else {
            smooth.signum() * (smooth.abs() - a).max(0.0)
        };
        sub_sq += g * g;
    }
    (sub_sq.sqrt(), smooth_sq.sqrt())
}

/// Plain accelerated subgradient descent (l2 attack norms).
#[allow(clippy::too_many_arguments)]
fn minimize_plain(
    dataset: &Dataset,
    eps: f64,
    norm: PerturbationNorm,
    consistent: bool,
    lambda: f64,
    start: Array1<f64>,
    opts: &FitOptions,
    controls: SolveControls,
) -> Result<SolveOutcome> {
    let stationarity_exit = controls.stationarity_exit;
    let obj = |t: &Array1<f64>| robust_logistic_objective(t, dataset, eps, norm, consistent, lambda);
    let val = |t: &Array1<f64>| objective_value(t, dataset, eps, norm, consistent, lambda);

    let mut theta = start;
    let mut f_theta = val(&theta);
    let mut z = theta.clone();
    let mut momentum = 1.0_f64;
    let mut lip = f64::NAN; // calibrated from the first gradient
    let mut converged = false;
    let mut best_recent = f_theta;
    let mut anchor = f_theta;
    let mut iters = 0;

    for iter in 0..controls.max_iter {
        iters = iter + 1;
        let (f_z, g_z) = obj(&z)?;
        let g_sq = g_z.dot(&g_z);
        if g_sq == 0.0 {
            converged = stationarity_exit;
            break;
        }
        if lip.is_nan() {
            // first trial step moves O(1 + ||z||); backtracking refines
            lip = g_sq.sqrt() / (0.3 * (1.0 + z.dot(&z).sqrt()));
        }

        // stationarity gate, checked on the accumulation point
        if stationarity_exit && iter % 10 == 0 && iter > 0 {
            let (rho, _) = penalty_and_subgrad(&theta, &dataset.theta_star, norm, consistent);
            let smooth = smooth_grad_norm(&theta, dataset, eps, rho, lambda);
            let (_, g_theta) = obj(&theta)?;
            if g_theta.dot(&g_theta).sqrt() <= opts.stationarity_tol * (1.0 + smooth) {
                converged = true;
                break;
            }
        }

        // backtracking gradient step from z
        let mut cand;
        let mut f_cand;
        let mut backtracks = 0;
        loop {
            cand = &z - &g_z.mapv(|g| g / lip);
            f_cand = val(&cand);
            if f_cand <= f_z - 0.5 * g_sq / lip || backtracks >= 120 {
                break;
            }
            lip *= 2.0;
            backtracks += 1;
        }

        if f_cand > f_theta {
            // momentum overshot: restart from the best point
            z = theta.clone();
            momentum = 1.0;
            continue;
        }

        let momentum_new = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / momentum_new;
        z = &cand + &(&cand - &theta).mapv(|v| beta * v);
        momentum = momentum_new;
        theta = cand;
        f_theta = f_cand;
        lip = (lip * 0.9).max(1e-290);

        best_recent = best_recent.min(f_theta);
        if (iter + 1) % opts.plateau_window == 0 {
            if anchor - best_recent <= opts.plateau_rel * anchor.abs().max(1e-300) {
                if stationarity_exit {
                    let (rho, _) =
                        penalty_and_subgrad(&theta, &dataset.theta_star, norm, consistent);
                    let smooth = smooth_grad_norm(&theta, dataset, eps, rho, lambda);
                    let (_, g_theta) = obj(&theta)?;
                    converged =
                        g_theta.dot(&g_theta).sqrt() <= opts.stationarity_tol * (1.0 + smooth);
                }
                break;
            }
            anchor = best_recent;
        }
    }

    Ok(SolveOutcome {
        theta,
        value: f_theta,
        iterations: iters,
        converged,
    })
}

fn train_result(
    dataset: &Dataset,
    theta: Array1<f64>,
    eps: f64,
    norm: PerturbationNorm,
    consistent: bool,
    final_loss: f64,
    iterations: usize,
    converged: bool,
) -> TrainResult {
    let (rho, _) = penalty_and_subgrad(&theta, &dataset.theta_star, norm, consistent);
    let scores = mat_vec(&dataset.x, &theta);
    let norm_l2 = theta.dot(&theta).sqrt().max(1e-300);
    let mut min_m = f64::INFINITY;
    let mut sum_m = 0.0;
    for i in 0..dataset.n() {
        let m = (dataset.y[i] * scores[i] - eps * rho) / norm_l2;
        min_m = min_m.min(m);
        sum_m += m;
    }
    let l1: f64 = theta.iter().map(|v| v.abs()).sum();
    let estimator = decompose(&theta, &dataset.theta_star);
    TrainResult {
        estimator,
        final_loss,
        robust_margin: min_m,
        robust_avg_margin: sum_m / dataset.n() as f64,
        l1_over_l2: l1 / norm_l2,
        iterations,
        converged,
    }
}

/// Minimize the ridge-regularized robust logistic objective (lambda > 0).
pub fn fit_regularized(
    dataset: &Dataset,
    eps: f64,
    norm: PerturbationNorm,
    consistent: bool,
    lambda: f64,
    opts: &FitOptions,
) -> Result<TrainResult> {
    if !(lambda > 0.0) {
        return Err(Error::Domain("fit_regularized needs lambda > 0".into()));
    }
    validate_mode(dataset, norm, consistent)?;
    let start = Array1::zeros(dataset.d());
    let controls = SolveControls {
        max_iter: opts.max_iter,
        stationarity_exit: true,
        direction_exit: None,
    };
    let out = minimize(dataset, eps, norm, consistent, lambda, start, opts, controls)?;
    Ok(train_result(
        dataset,
        out.theta,
        eps,
        norm,
        consistent,
        out.value,
        out.iterations,
        out.converged,
    ))
}

/// Robust max-l2-margin interpolator via a lambda homotopy: warm-started
/// solves at lambda = 1, 0.1, ..., 1e-6, stopping early once the normalized
/// direction stabilizes; the output is rescaled so the minimum penalized
/// margin equals 1.
///
/// Errors with [`Error::Infeasible`] when the terminal solve still misfits
/// some training point (robust margin <= 0) while the unregularized loss
/// stays above 1e-4 — the data is not robustly separable at this eps.
pub fn fit_max_margin(
    dataset: &Dataset,
    eps: f64,
    norm: PerturbationNorm,
    consistent: bool,
    opts: &FitOptions,
) -> Result<TrainResult> {
    validate_mode(dataset, norm, consistent)?;
    let mut theta = Array1::zeros(dataset.d());
    let mut direction: Option<Array1<f64>> = None;
    let mut total_iters = 0;

    let min_margin_at = |theta: &Array1<f64>| {
        let (rho, _) = penalty_and_subgrad(theta, &dataset.theta_star, norm, consistent);
        let scores = mat_vec(&dataset.x, theta);
        (0..dataset.n())
            .map(|i| dataset.y[i] * scores[i] - eps * rho)
            .fold(f64::INFINITY, f64::min)
    };

    let stage_controls = |lambda: f64| SolveControls {
        max_iter: opts.stage_max_iter,
        stationarity_exit: lambda >= 1e-3,
        direction_exit: Some(3e-5),
    };
    // stages only deliver warm starts and a direction; a short plateau
    // window is plenty
    let stage_opts = FitOptions {
        plateau_window: 40,
        plateau_rel: 1e-9,
        ..opts.clone()
    };
    for k in 0..=opts.homotopy_decades {
        let lambda = 10f64.powi(-(k as i32));
        // the optimal norm grows like log(1/lambda) on separable data;
        // pre-scaling the warm start leaves only the direction to refine
        if k >= 2 {
            let scale = k as f64 / (k as f64 - 1.0);
            theta.mapv_inplace(|v| v * scale);
        }
        let out = minimize(
            dataset,
            eps,
            norm,
            consistent,
            lambda,
            theta,
            &stage_opts,
            stage_controls(lambda),
        )?;
        theta = out.theta;
        total_iters += out.iterations;
        let norm_l2 = theta.dot(&theta).sqrt();
        if norm_l2 > 0.0 {
            let dir = theta.mapv(|v| v / norm_l2);
            let stabilized = direction
                .as_ref()
                .is_some_and(|prev| (&dir - prev).mapv(|v| v * v).sum().sqrt() < opts.direction_tol);
            direction = Some(dir);
            if stabilized {
                break;
            }
        }
    }

    // separability verdict at the terminal decade stage
    let mut min_margin = min_margin_at(&theta);
    if min_margin <= 0.0 {
        let loss = objective_value(&theta, dataset, eps, norm, consistent, 0.0);
        if loss > 1e-4 {
            return Err(Error::Infeasible(format!(
                "robust margin {min_margin:.3e} with unregularized loss {loss:.3e}"
            )));
        }
        return Ok(train_result(
            dataset, theta, eps, norm, consistent, loss, total_iters, false,
        ));
    }

    // sharpen: the direction error decays like 1/log(1/lambda), so square
    // lambda downward instead of walking more decades
    let mut lambda = 10f64.powi(-(opts.homotopy_decades as i32));
    for _ in 0..opts.sharpening_squarings {
        lambda = lambda * lambda;
        // lambda -> lambda^2 doubles log(1/lambda) and hence the norm
        let out = minimize(
            dataset,
            eps,
            norm,
            consistent,
            lambda,
            theta.mapv(|v| 2.0 * v),
            &stage_opts,
            stage_controls(lambda),
        )?;
        if min_margin_at(&out.theta) <= 0.0 {
            break; // keep the last feasible iterate
        }
        theta = out.theta;
        total_iters += out.iterations;
        let norm_l2 = theta.dot(&theta).sqrt();
        let dir = theta.mapv(|v| v / norm_l2);
        let stabilized = direction
            .as_ref()
            .is_some_and(|prev| (&dir - prev).mapv(|v| v * v).sum().sqrt() < opts.direction_tol);
        direction = Some(dir);
        if stabilized {
            break;
        }
    }

    // penalized margin is 1-homogeneous: rescale to margin exactly 1
    min_margin = min_margin_at(&theta);
    theta.mapv_inplace(|v| v / min_margin);
    let loss = objective_value(&theta, dataset, eps, norm, consistent, 0.0);
    Ok(train_result(
        dataset, theta, eps, norm, consistent, loss, total_iters, true,
    ))
}

/// Learning-rate doubling schedule for the unregularized descent path.
#[derive(Debug, Clone, Copy)]
pub struct GdClassSchedule {
    pub init_lr: f64,
    pub double_every: usize,
    pub double_until: usize,
}

impl GdClassSchedule {
    fn lr(&self, step: usize) -> f64 {
        let doublings = step.min(self.double_until) / self.double_every.max(1);
        self.init_lr * 2f64.powi(doublings as i32)
    }
}

/// Zero-initialized subgradient descent on the unregularized robust logistic
/// loss; a [`TrainResult`] snapshot is recorded every `snapshot_stride`
/// steps (and at the final step).
pub fn gd_classification_path(
    dataset: &Dataset,
    eps: f64,
    norm: PerturbationNorm,
    consistent: bool,
    steps: usize,
    schedule: &GdClassSchedule,
    snapshot_stride: usize,
) -> Result<Vec<(usize, TrainResult)>> {
    validate_mode(dataset, norm, consistent)?;
    let n = dataset.n() as f64;
    let loss0 = 2f64.ln();
    let mut theta = Array1::<f64>::zeros(dataset.d());
    let mut snapshots = Vec::new();
    let stride = snapshot_stride.max(1);

    for step in 0..=steps {
        let (rho, sub) = penalty_and_subgrad(&theta, &dataset.theta_star, norm, consistent);
        let norm_l2 = theta.dot(&theta).sqrt();
        let ts = theta.as_slice().unwrap();
        let mut value = 0.0;
        let mut w_mean = 0.0;
        let mut gx = vec![0.0f64; dataset.d()];
        let mut min_m = f64::INFINITY;
        let mut sum_m = 0.0;
        for (row, &y) in dataset.x.rows().into_iter().zip(dataset.y.iter()) {
            let rs = row.as_slice().unwrap();
            let m = y * dot(rs, ts) - eps * rho;
            value += logistic_loss(m) / n;
            let w = -sigmoid(-m);
            w_mean += w / n;
            let wy = w * y / n;
            for (a, &r) in gx.iter_mut().zip(rs) {
                *a += wy * r;
            }
            if norm_l2 > 0.0 {
                let nm = m / norm_l2;
                min_m = min_m.min(nm);
                sum_m += nm;
            }
        }
        if value > 10.0 * loss0 {
            return Err(Error::StepSize(format!(
                "robust loss {value:.3e} exceeded 10x log 2 at step {step}"
            )));
        }
        if step % stride == 0 || step == steps {
            let l1: f64 = theta.iter().map(|v| v.abs()).sum();
            let (robust_margin, robust_avg_margin) = if norm_l2 > 0.0 {
                (min_m, sum_m / n)
            } else {
                (0.0, 0.0)
            };
            snapshots.push((
                step,
                TrainResult {
                    estimator: decompose(&theta, &dataset.theta_star),
                    final_loss: value,
                    robust_margin,
                    robust_avg_margin,
                    l1_over_l2: if norm_l2 > 0.0 { l1 / norm_l2 } else { 0.0 },
                    iterations: step,
                    converged: step == steps,
                },
            ));
        }
        if step == steps {
            break;
        }
        let lr = schedule.lr(step);
        for j in 0..theta.len() {
            theta[j] -= lr * (gx[j] - eps * w_mean * sub[j]);
        }
    }
    Ok(snapshots)
}

/// Sample-wise robust margins `(y_i <x_i, theta> - eps ||P_perp theta||_1)
/// / ||theta||_2`, their minimum and mean, and the sorted list.
pub fn margin_stats(
    est: &Estimator,
    dataset: &Dataset,
    eps: f64,
) -> Result<(f64, f64, Vec<f64>)> {
    let norm_l2 = est.theta.dot(&est.theta).sqrt();
    if !(norm_l2 > 0.0) {
        return Err(Error::Domain("margins of the zero vector".into()));
    }
    let scores = mat_vec(&dataset.x, &est.theta);
    let mut margins: Vec<f64> = (0..dataset.n())
        .map(|i| (dataset.y[i] * scores[i] - eps * est.perp_l1) / norm_l2)
        .collect();
    let min = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = margins.iter().sum::<f64>() / margins.len() as f64;
    margins.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((min, mean, margins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_theta_star, generate_dataset, ProblemConfig, Task};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;

    fn cls_config(n: usize, d: usize, flip: f64, seed: u64) -> ProblemConfig {
        ProblemConfig {
            d,
            n,
            task: Task::Classification,
            sigma2: 0.0,
            label_flip_prob: flip,
            eps_train: 0.0,
            eps_test: 0.0,
            perturbation_norm: PerturbationNorm::Linf,
            consistent: true,
            lambda: 0.0,
            seed,
        }
    }

    #[test]
    fn objective_at_zero_is_log_two() {
        let ds = generate_dataset(&cls_config(30, 10, 0.0, 1), &default_theta_star(10)).unwrap();
        let theta = Array1::zeros(10);
        let (v, _) =
            robust_logistic_objective(&theta, &ds, 0.2, PerturbationNorm::Linf, true, 0.5)
                .unwrap();
        assert_abs_diff_eq!(v, 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn subgradient_matches_finite_differences() {
        let ds = generate_dataset(&cls_config(40, 20, 0.0, 2), &default_theta_star(20)).unwrap();
        let mut rng = crate::data::seeded_rng(7, "test.fd", &[]);
        let theta = Array1::from_iter(
            (0..20).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
        );
        for (norm, consistent) in [
            (PerturbationNorm::Linf, true),
            (PerturbationNorm::Linf, false),
            (PerturbationNorm::L2, true),
            (PerturbationNorm::L2, false),
        ] {
            let (_, g) =
                robust_logistic_objective(&theta, &ds, 0.3, norm, consistent, 0.7).unwrap();
            let h = 1e-6;
            for j in [0usize, 3, 11, 19] {
                let mut tp = theta.clone();
                tp[j] += h;
                let mut tm = theta.clone();
                tm[j] -= h;
                let (vp, _) =
                    robust_logistic_objective(&tp, &ds, 0.3, norm, consistent, 0.7).unwrap();
                let (vm, _) =
                    robust_logistic_objective(&tm, &ds, 0.3, norm, consistent, 0.7).unwrap();
                let fd = (vp - vm) / (2.0 * h);
                assert!(
                    (g[j] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "{norm:?}/{consistent}: coord {j}: {} vs {fd}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn heavy_shrinkage() {
        let ds = generate_dataset(&cls_config(50, 10, 0.0, 3), &default_theta_star(10)).unwrap();
        let fit = fit_regularized(
            &ds,
            0.1,
            PerturbationNorm::Linf,
            true,
            1e3,
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.estimator.theta.dot(&fit.estimator.theta).sqrt() <= 1e-2);
        assert!(fit.final_loss <= 2f64.ln() + 1e-12);
    }

    #[test]
    fn matches_newton_oracle_on_smooth_problem() {
        // eps = 0, lambda > 0: smooth strongly convex; damped Newton in d=2
        let n = 20;
        let d = 2;
        let ds = generate_dataset(&cls_config(n, d, 0.0, 4), &default_theta_star(d)).unwrap();
        let lambda = 0.05;
        let fit = fit_regularized(
            &ds,
            0.0,
            PerturbationNorm::Linf,
            true,
            lambda,
            &FitOptions {
                max_iter: 20_000,
                stationarity_tol: 1e-9,
                ..FitOptions::default()
            },
        )
        .unwrap();

        // Newton oracle
        let mut theta = vec![0.0f64; d];
        for _ in 0..200 {
            let mut g = vec![0.0f64; d];
            let mut h = [[0.0f64; 2]; 2];
            for i in 0..n {
                let xi = [ds.x[(i, 0)], ds.x[(i, 1)]];
                let m = ds.y[i] * (xi[0] * theta[0] + xi[1] * theta[1]);
                let w = -sigmoid(-m);
                let s = sigmoid(m) * sigmoid(-m);
                for a in 0..2 {
                    g[a] += w * ds.y[i] * xi[a] / n as f64;
                    for b in 0..2 {
                        h[a][b] += s * xi[a] * xi[b] / n as f64;
                    }
                }
            }
            for a in 0..2 {
                g[a] += 2.0 * lambda * theta[a];
                h[a][a] += 2.0 * lambda;
            }
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let step = [
                (h[1][1] * g[0] - h[0][1] * g[1]) / det,
                (h[0][0] * g[1] - h[1][0] * g[0]) / det,
            ];
            theta[0] -= step[0];
            theta[1] -= step[1];
            if (g[0] * g[0] + g[1] * g[1]).sqrt() < 1e-14 {
                break;
            }
        }
        assert_abs_diff_eq!(fit.estimator.theta[0], theta[0], epsilon = 1e-5);
        assert_abs_diff_eq!(fit.estimator.theta[1], theta[1], epsilon = 1e-5);
    }

    #[test]
    fn max_margin_toy_matches_enumeration_oracle() {
        // four points in d=3, eps=0: hard-margin solution by enumerating
        // support sets and solving the equality-constrained subproblem
        let x = Array2::from_shape_vec(
            (4, 3),
            vec![
                1.2, 0.3, -0.4, //
                0.9, -0.8, 0.2, //
                -1.1, 0.5, 0.7, //
                -0.7, -0.9, -0.3,
            ],
        )
        .unwrap();
        let y = Array1::from_vec(vec![1.0, 1.0, -1.0, -1.0]);
        let ds = Dataset {
            x: x.clone(),
            y: y.clone(),
            theta_star: default_theta_star(3),
            clean_y: y.clone(),
        };

        let fit = fit_max_margin(
            &ds,
            0.0,
            PerturbationNorm::Linf,
            true,
            &FitOptions {
                max_iter: 30_000,
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert!(fit.robust_margin * fit.estimator.theta.dot(&fit.estimator.theta).sqrt() >= 1.0 - 1e-6);

        // enumeration oracle: theta = sum_i alpha_i y_i x_i over support sets
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..16 {
            let idx: Vec<usize> = (0..4).filter(|i| mask & (1 << i) != 0).collect();
            if idx.len() > 3 {
                continue;
            }
            let k = idx.len();
            let mut gram = nalgebra::DMatrix::zeros(k, k);
            for a in 0..k {
                for b in 0..k {
                    let mut s = 0.0;
                    for j in 0..3 {
                        s += x[(idx[a], j)] * x[(idx[b], j)];
                    }
                    gram[(a, b)] = y[idx[a]] * y[idx[b]] * s;
                }
            }
            let ones = nalgebra::DVector::from_element(k, 1.0);
            let alpha = match gram.clone().lu().solve(&ones) {
                Some(a) => a,
                None => continue,
            };
            if alpha.iter().any(|&a| a < -1e-10) {
                continue;
            }
            let mut theta = vec![0.0f64; 3];
            for a in 0..k {
                for j in 0..3 {
                    theta[j] += alpha[a] * y[idx[a]] * x[(idx[a], j)];
                }
            }
            let margins: Vec<f64> = (0..4)
                .map(|i| y[i] * (0..3).map(|j| x[(i, j)] * theta[j]).sum::<f64>())
                .collect();
            if margins.iter().all(|&m| m >= 1.0 - 1e-9) {
                let norm_sq: f64 = theta.iter().map(|v| v * v).sum();
                if best.as_ref().is_none_or(|(b, _)| norm_sq < *b) {
                    best = Some((norm_sq, theta));
                }
            }
        }
        let (_, oracle) = best.expect("toy problem is separable");
        let fit_norm = fit.estimator.theta.dot(&fit.estimator.theta).sqrt();
        let oracle_norm = oracle.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cosine: f64 = (0..3)
            .map(|j| fit.estimator.theta[j] / fit_norm * oracle[j] / oracle_norm)
            .sum();
        assert!(cosine >= 1.0 - 1e-3, "direction cosine {cosine}");
    }

    #[test]
    fn max_margin_infeasible_under_heavy_label_noise() {
        let ds =
            generate_dataset(&cls_config(1000, 500, 0.10, 5), &default_theta_star(500)).unwrap();
        let err = fit_max_margin(
            &ds,
            0.1,
            PerturbationNorm::Linf,
            true,
            &FitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "got {err}");
    }

    #[test]
    fn homotopy_norm_monotone() {
        let ds = generate_dataset(&cls_config(60, 120, 0.0, 6), &default_theta_star(120)).unwrap();
        let opts = FitOptions::default();
        let mut theta = Array1::zeros(120);
        let mut last_norm = 0.0;
        for k in 0..=4 {
            let out = minimize(
                &ds,
                0.05,
                PerturbationNorm::Linf,
                true,
                10f64.powi(-k),
                theta,
                &opts,
                SolveControls {
                    max_iter: opts.max_iter,
                    stationarity_exit: true,
                    direction_exit: None,
                },
            )
            .unwrap();
            theta = out.theta;
            let nrm = theta.dot(&theta).sqrt();
            assert!(nrm >= last_norm - 1e-6, "norm shrank along homotopy");
            last_norm = nrm;
        }
    }

    #[test]
    fn gd_path_snapshots() {
        let ds = generate_dataset(&cls_config(40, 80, 0.0, 7), &default_theta_star(80)).unwrap();
        let snaps = gd_classification_path(
            &ds,
            0.05,
            PerturbationNorm::Linf,
            true,
            200,
            &GdClassSchedule {
                init_lr: 0.05,
                double_every: 1_000_000,
                double_until: 0,
            },
            50,
        )
        .unwrap();
        assert_eq!(snaps[0].0, 0);
        assert!(snaps[0].1.estimator.theta.iter().all(|&v| v == 0.0));
        assert_abs_diff_eq!(snaps[0].1.final_loss, 2f64.ln(), epsilon = 1e-12);
        // small constant lr: loss nonincreasing across snapshots
        let mut last = f64::INFINITY;
        for (_, s) in &snaps {
            assert!(s.final_loss <= last + 1e-12);
            last = s.final_loss;
        }
    }

    #[test]
    fn margin_stats_contract() {
        let ds = generate_dataset(&cls_config(50, 30, 0.0, 8), &default_theta_star(30)).unwrap();
        let est = decompose(&ds.theta_star.clone(), &ds.theta_star);
        let (min, mean, sorted) = margin_stats(&est, &ds, 0.0).unwrap();
        assert!(min >= 0.0);
        assert!(min <= mean);
        assert_eq!(sorted.len(), 50);
        assert!(sorted.windows(2).all(|w| w[0] <= w[1]));

        let zero = Estimator {
            theta: Array1::zeros(30),
            nu_par: 0.0,
            perp_l2: 0.0,
            perp_l1: 0.0,
        };
        assert!(margin_stats(&zero, &ds, 0.1).is_err());
    }

    #[test]
    fn objective_invariant_to_sample_order() {
        let ds = generate_dataset(&cls_config(30, 12, 0.0, 9), &default_theta_star(12)).unwrap();
        let mut rev_x = Array2::zeros((30, 12));
        let mut rev_y = Array1::zeros(30);
        for i in 0..30 {
            rev_y[i] = ds.y[29 - i];
            for j in 0..12 {
                rev_x[(i, j)] = ds.x[(29 - i, j)];
            }
        }
        let rev = Dataset {
            x: rev_x,
            y: rev_y.clone(),
            theta_star: ds.theta_star.clone(),
            clean_y: rev_y,
        };
        let mut rng = crate::data::seeded_rng(10, "test.perm", &[]);
        let theta = Array1::from_iter(
            (0..12).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
        );
        let (a, _) =
            robust_logistic_objective(&theta, &ds, 0.2, PerturbationNorm::Linf, true, 0.3)
                .unwrap();
        let (b, _) =
            robust_logistic_objective(&theta, &rev, 0.2, PerturbationNorm::Linf, true, 0.3)
                .unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}
