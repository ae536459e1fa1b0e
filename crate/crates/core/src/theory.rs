//! Scalar min–max systems whose solutions give the exact asymptotic
//! standard/robust risks of adversarially trained logistic regression.
//!
//! Two regimes, selected by the caller: the regularized system (lambda > 0,
//! or lambda = 0 when label noise prevents robust separation) couples the
//! Moreau envelope of the logistic loss with the second moment of a
//! soft-thresholded Gaussian; the separable system (robust max-margin)
//! couples a positive-part second moment with an expected Huber loss. Both
//! are solved as stationarity systems (the gradients of the scalar
//! objectives), and the asymptotic alignment statistics
//! `(nu_par, nu_perp, delta)` map to risks through the closed-form 0-1 risk.
//!
//! Label flips enter as the exact two-point sign mixture on the parallel
//! Gaussian factor: weight `1 - flip_prob` on `+|Z_par|` and `flip_prob` on
//! `-|Z_par|`.

use crate::numerics::{
    expected_huber_partials, expected_soft_threshold_sq_partials, integral_i, moreau_logistic,
    positive_part_second_moment_partials, solve_nonlinear_system, std_normal_funcs,
    QuadratureGrid, SolveOptions,
};
use crate::{Error, Result};

use std::f64::consts::PI;

/// Variables of the regularized-regime system.
#[derive(Debug, Clone, Copy)]
pub struct NonSepVars {
    pub nu_par: f64,
    pub nu_perp: f64,
    /// ||P_perp theta||_1 / sqrt(d) in the limit.
    pub delta: f64,
    pub r: f64,
    pub mu: f64,
    pub tau: f64,
}

/// Variables of the separable-regime (robust max-margin) system.
#[derive(Debug, Clone, Copy)]
pub struct SepVars {
    pub nu_par: f64,
    pub nu_perp: f64,
    pub delta: f64,
    pub r: f64,
    pub zeta: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Regularized,
    Separable,
}

#[derive(Debug, Clone, Copy)]
pub enum TheoryVars {
    NonSep(NonSepVars),
    Sep(SepVars),
}

/// Solved system plus the risks it predicts.
#[derive(Debug, Clone)]
pub struct TheoryPrediction {
    pub regime: Regime,
    pub vars: TheoryVars,
    pub sr: f64,
    pub ar: f64,
    pub residual_norm: f64,
    pub eps0: f64,
    pub flip_prob: f64,
}

impl TheoryPrediction {
    pub fn alignment(&self) -> (f64, f64, f64) {
        match self.vars {
            TheoryVars::NonSep(v) => (v.nu_par, v.nu_perp, v.delta),
            TheoryVars::Sep(v) => (v.nu_par, v.nu_perp, v.delta),
        }
    }
}

/// Asymptotic risks from the alignment statistics:
/// `SR = arccos(nu_par / nu) / pi` and
/// `AR = SR + erf(eps0 delta / (sqrt(2) nu)) / 2 + I(eps0 delta / nu, nu_par / nu)`.
pub fn theory_risks(nu_par: f64, nu_perp: f64, delta: f64, eps0: f64) -> Result<(f64, f64)> {
    let nu = (nu_par * nu_par + nu_perp * nu_perp).sqrt();
    if !(nu > 0.0) {
        return Err(Error::Domain("risk of a zero-norm asymptotic estimator".into()));
    }
    let u = (nu_par / nu).clamp(-1.0, 1.0);
    let t = eps0 * delta / nu;
    let sr = u.acos() / PI;
    let ar = sr + (std_normal_funcs(t).cdf - 0.5) + integral_i(t, u);
    Ok((sr, ar))
}

/// The two-point sign mixture on the parallel factor.
fn sign_branches(flip_prob: f64) -> [(f64, f64); 2] {
    [(1.0, 1.0 - flip_prob), (-1.0, flip_prob)]
}

struct MoreauMoments {
    /// E[dM/dx * Z_sigma]
    d_nu_par: f64,
    /// E[dM/dx * Z_perp]
    d_nu_perp: f64,
    /// E[dM/dx]
    d_x: f64,
    /// E[dM/dt]
    d_t: f64,
}

fn moreau_moments(
    vars: &NonSepVars,
    eps0: f64,
    flip_prob: f64,
    grid: &QuadratureGrid,
) -> Result<MoreauMoments> {
    let t = vars.tau / vars.r;
    if !t.is_finite() || !(t > 0.0) {
        return Err(Error::Evaluation(format!("envelope parameter tau/r = {t}")));
    }
    let mut out = MoreauMoments {
        d_nu_par: 0.0,
        d_nu_perp: 0.0,
        d_x: 0.0,
        d_t: 0.0,
    };
    for (sgn, prob) in sign_branches(flip_prob) {
        if prob == 0.0 {
            continue;
        }
        for (&zp, &wp) in grid.half_nodes.iter().zip(&grid.half_weights) {
            let zs = sgn * zp;
            let base = zs * vars.nu_par - eps0 * vars.delta;
            for (&zo, &wo) in grid.full_nodes.iter().zip(&grid.full_weights) {
                let w = prob * wp * wo;
                let eval = moreau_logistic(base + zo * vars.nu_perp, t)?;
                out.d_nu_par += w * eval.d_x * zs;
                out.d_nu_perp += w * eval.d_x * zo;
                out.d_x += w * eval.d_x;
                out.d_t += w * eval.d_t;
            }
        }
    }
    Ok(out)
}

/// Gradient of the regularized-regime scalar objective at `vars`, ordered
/// `(nu_par, nu_perp, delta, r, mu, tau)`. Zero at the solution.
pub fn nonseparable_residuals(
    vars: &NonSepVars,
    gamma: f64,
    eps0: f64,
    lambda: f64,
    flip_prob: f64,
    grid: &QuadratureGrid,
) -> Result<[f64; 6]> {
    if !(vars.r > 0.0 && vars.tau > 0.0) {
        return Err(Error::Domain("r and tau must be positive".into()));
    }
    let em = moreau_moments(vars, eps0, flip_prob, grid)?;
    let soft = expected_soft_threshold_sq_partials(vars.mu, gamma.sqrt() * vars.r);
    if !(soft.value > 1e-280) {
        return Err(Error::Evaluation(
            "soft-threshold moment vanished (mu far above the noise scale)".into(),
        ));
    }
    let sqrt_g = soft.value.sqrt();
    let g_mu = soft.d_x;
    let g_r = soft.d_t * gamma.sqrt();

    let res = [
        em.d_nu_par + 2.0 * lambda * vars.nu_par,
        em.d_nu_perp + 2.0 * lambda * vars.nu_perp - sqrt_g,
        -eps0 * em.d_x - vars.mu,
        em.d_t * (-vars.tau / (vars.r * vars.r)) - vars.nu_perp * g_r / (2.0 * sqrt_g)
            + vars.tau / 2.0,
        -vars.nu_perp * g_mu / (2.0 * sqrt_g) - vars.delta,
        em.d_t / vars.r + vars.r / 2.0,
    ];
    if res.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("non-finite residual component".into()));
    }
    Ok(res)
}

struct PosPartMoments {
    value: f64,
    d_nu_par: f64,
    d_nu_perp: f64,
    d_delta: f64,
}

fn pos_part_moments(
    nu_par: f64,
    nu_perp: f64,
    delta: f64,
    eps0: f64,
    flip_prob: f64,
    grid: &QuadratureGrid,
) -> PosPartMoments {
    let mut out = PosPartMoments {
        value: 0.0,
        d_nu_par: 0.0,
        d_nu_perp: 0.0,
        d_delta: 0.0,
    };
    for (sgn, prob) in sign_branches(flip_prob) {
        if prob == 0.0 {
            continue;
        }
        for (&zp, &wp) in grid.half_nodes.iter().zip(&grid.half_weights) {
            let zs = sgn * zp;
            let b = 1.0 + eps0 * delta - zs * nu_par;
            let eval = positive_part_second_moment_partials(nu_perp, b);
            let w = prob * wp;
            out.value += w * eval.value;
            out.d_nu_par += w * eval.d_t * (-zs);
            out.d_nu_perp += w * eval.d_x;
            out.d_delta += w * eval.d_t * eps0;
        }
    }
    out
}

/// Gradient of the separable-regime scalar objective at `vars`, ordered
/// `(nu_par, nu_perp, delta, r, zeta, kappa)`.
pub fn separable_residuals(
    vars: &SepVars,
    gamma: f64,
    eps0: f64,
    flip_prob: f64,
    grid: &QuadratureGrid,
) -> Result<[f64; 6]> {
    let s = 1.0 + vars.kappa;
    if !(s > 0.0) {
        return Err(Error::Domain("1 + kappa must be positive".into()));
    }
    let t = pos_part_moments(vars.nu_par, vars.nu_perp, vars.delta, eps0, flip_prob, grid);
    if !(t.value > 1e-280) {
        return Err(Error::Evaluation("positive-part moment vanished".into()));
    }
    let sqrt_t = t.value.sqrt();
    let hub = expected_huber_partials(gamma.sqrt() * vars.r / 2.0, vars.zeta / 2.0);

    let res = [
        2.0 * vars.nu_par + vars.r * t.d_nu_par / (2.0 * sqrt_t),
        -2.0 * vars.kappa * vars.nu_perp + vars.r * t.d_nu_perp / (2.0 * sqrt_t),
        -vars.zeta + vars.r * t.d_delta / (2.0 * sqrt_t),
        sqrt_t - gamma * vars.r / (2.0 * s) + gamma.sqrt() * hub.d_x / s,
        -vars.delta + hub.d_t / s,
        -vars.nu_perp * vars.nu_perp + gamma * vars.r * vars.r / (4.0 * s * s)
            - 2.0 * hub.value / (s * s),
    ];
    if res.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("non-finite residual component".into()));
    }
    Ok(res)
}

const SOLVE_TOL: f64 = 1e-9;

/// Frozen multi-start grid for the regularized system.
fn nonsep_starts(init: Option<NonSepVars>) -> Vec<NonSepVars> {
    if let Some(v) = init {
        return vec![v];
    }
    let mut starts = Vec::new();
    for &nu_par in &[0.3, 0.7] {
        for &nu_perp in &[0.5, 2.0] {
            for &delta in &[0.1, 1.0] {
                for &rmt in &[0.5, 2.0] {
                    starts.push(NonSepVars {
                        nu_par,
                        nu_perp,
                        delta,
                        r: rmt,
                        mu: rmt,
                        tau: rmt,
                    });
                }
            }
        }
    }
    starts
}

/// Frozen multi-start grid for the separable system.
fn sep_starts(init: Option<SepVars>) -> Vec<SepVars> {
    if let Some(v) = init {
        return vec![v];
    }
    let mut starts = Vec::new();
    for &nu_par in &[0.5, 2.0] {
        for &nu_perp in &[0.5, 2.0] {
            for &delta in &[0.1, 1.0] {
                for &(r, zeta, kappa) in &[(1.0, 1.0, 1.0), (10.0, 20.0, 4.0)] {
                    starts.push(SepVars {
                        nu_par,
                        nu_perp,
                        delta,
                        r,
                        zeta,
                        kappa,
                    });
                }
            }
        }
    }
    starts
}

/// Solve the regularized-regime system and map it to predicted risks.
///
/// `lambda = 0` is allowed; it is the non-separable unregularized limit that
/// exists under enough label noise. `eps0 = 0` puts the exact solution on
/// the boundary (`mu = 0`), so that case reduces to the four-variable system
/// with `mu = 0` and `delta = nu_perp sqrt(2/pi)` recovered analytically.
pub fn solve_nonseparable(
    gamma: f64,
    eps0: f64,
    lambda: f64,
    flip_prob: f64,
    init: Option<NonSepVars>,
    grid: &QuadratureGrid,
) -> Result<TheoryPrediction> {
    if !(gamma > 0.0) || eps0 < 0.0 || lambda < 0.0 || !(0.0..0.5).contains(&flip_prob) {
        return Err(Error::Domain(format!(
            "solve_nonseparable(gamma={gamma}, eps0={eps0}, lambda={lambda}, flip={flip_prob})"
        )));
    }
    if eps0 == 0.0 {
        return solve_nonseparable_no_attack(gamma, lambda, flip_prob, init, grid);
    }

    let opts = SolveOptions {
        tol: SOLVE_TOL,
        restarts: 0,
        max_iter: 300,
    };
    let mask = [false, true, true, true, true, true];
    let mut best_residual = f64::INFINITY;
    for start in nonsep_starts(init) {
        let x0 = [
            start.nu_par,
            start.nu_perp,
            start.delta,
            start.r,
            start.mu,
            start.tau,
        ];
        let report = solve_nonlinear_system(
            |x, out| {
                let v = NonSepVars {
                    nu_par: x[0],
                    nu_perp: x[1],
                    delta: x[2],
                    r: x[3],
                    mu: x[4],
                    tau: x[5],
                };
                let res = nonseparable_residuals(&v, gamma, eps0, lambda, flip_prob, grid)?;
                out.copy_from_slice(&res);
                Ok(())
            },
            &x0,
            &mask,
            &opts,
        )?;
        best_residual = best_residual.min(report.residual_norm);
        if report.converged {
            let v = NonSepVars {
                nu_par: report.solution[0],
                nu_perp: report.solution[1],
                delta: report.solution[2],
                r: report.solution[3],
                mu: report.solution[4],
                tau: report.solution[5],
            };
            let (sr, ar) = theory_risks(v.nu_par, v.nu_perp, v.delta, eps0)?;
            return Ok(TheoryPrediction {
                regime: Regime::Regularized,
                vars: TheoryVars::NonSep(v),
                sr,
                ar,
                residual_norm: report.residual_norm,
                eps0,
                flip_prob,
            });
        }
    }
    Err(Error::Unsolved {
        residual_norm: best_residual,
        restarts: nonsep_starts(init).len(),
    })
}

/// eps0 = 0 reduction: mu = 0 exactly, delta decouples.
fn solve_nonseparable_no_attack(
    gamma: f64,
    lambda: f64,
    flip_prob: f64,
    init: Option<NonSepVars>,
    grid: &QuadratureGrid,
) -> Result<TheoryPrediction> {
    let opts = SolveOptions {
        tol: SOLVE_TOL,
        restarts: 0,
        max_iter: 300,
    };
    let mask = [false, true, true, true];
    let mut best_residual = f64::INFINITY;
    let starts = nonsep_starts(init);
    for start in &starts {
        let x0 = [start.nu_par, start.nu_perp, start.r, start.tau];
        let report = solve_nonlinear_system(
            |x, out| {
                let v = NonSepVars {
                    nu_par: x[0],
                    nu_perp: x[1],
                    delta: 0.0,
                    r: x[2],
                    mu: 0.0,
                    tau: x[3],
                };
                let em = moreau_moments(&v, 0.0, flip_prob, grid)?;
                let sqrt_g = gamma.sqrt() * v.r;
                out[0] = em.d_nu_par + 2.0 * lambda * v.nu_par;
                out[1] = em.d_nu_perp + 2.0 * lambda * v.nu_perp - sqrt_g;
                out[2] = em.d_t * (-v.tau / (v.r * v.r)) - v.nu_perp * gamma.sqrt()
                    + v.tau / 2.0;
                out[3] = em.d_t / v.r + v.r / 2.0;
                Ok(())
            },
            &x0,
            &mask,
            &opts,
        )?;
        best_residual = best_residual.min(report.residual_norm);
        if report.converged {
            let nu_perp = report.solution[1];
            let v = NonSepVars {
                nu_par: report.solution[0],
                nu_perp,
                delta: nu_perp * (2.0 / PI).sqrt(),
                r: report.solution[2],
                mu: 0.0,
                tau: report.solution[3],
            };
            let (sr, ar) = theory_risks(v.nu_par, v.nu_perp, v.delta, 0.0)?;
            return Ok(TheoryPrediction {
                regime: Regime::Regularized,
                vars: TheoryVars::NonSep(v),
                sr,
                ar,
                residual_norm: report.residual_norm,
                eps0: 0.0,
                flip_prob,
            });
        }
    }
    Err(Error::Unsolved {
        residual_norm: best_residual,
        restarts: starts.len(),
    })
}

/// Solve the separable-regime (robust max-margin) system.
///
/// `eps0 = 0` (plain max-margin) puts the exact solution on the boundary
/// (`zeta = 0`), handled by the reduced four-variable system with
/// `delta = sqrt(2 gamma / pi) r / (2 (1 + kappa))` recovered analytically.
pub fn solve_separable(
    gamma: f64,
    eps0: f64,
    flip_prob: f64,
    init: Option<SepVars>,
    grid: &QuadratureGrid,
) -> Result<TheoryPrediction> {
    if !(gamma > 0.0) || eps0 < 0.0 || !(0.0..0.5).contains(&flip_prob) {
        return Err(Error::Domain(format!(
            "solve_separable(gamma={gamma}, eps0={eps0}, flip={flip_prob})"
        )));
    }
    if eps0 == 0.0 {
        return solve_separable_no_attack(gamma, flip_prob, init, grid);
    }
    let opts = SolveOptions {
        tol: SOLVE_TOL,
        restarts: 0,
        max_iter: 300,
    };
    // kappa enters through s = 1 + kappa > 0: solve in s with positivity
    let mask = [false, true, true, true, true, true];
    let mut best_residual = f64::INFINITY;
    let starts = sep_starts(init);
    for start in &starts {
        let x0 = [
            start.nu_par,
            start.nu_perp,
            start.delta,
            start.r,
            start.zeta,
            1.0 + start.kappa,
        ];
        let report = solve_nonlinear_system(
            |x, out| {
                let v = SepVars {
                    nu_par: x[0],
                    nu_perp: x[1],
                    delta: x[2],
                    r: x[3],
                    zeta: x[4],
                    kappa: x[5] - 1.0,
                };
                let res = separable_residuals(&v, gamma, eps0, flip_prob, grid)?;
                out.copy_from_slice(&res);
                Ok(())
            },
            &x0,
            &mask,
            &opts,
        )?;
        best_residual = best_residual.min(report.residual_norm);
        if report.converged {
            let v = SepVars {
                nu_par: report.solution[0],
                nu_perp: report.solution[1],
                delta: report.solution[2],
                r: report.solution[3],
                zeta: report.solution[4],
                kappa: report.solution[5] - 1.0,
            };
            let (sr, ar) = theory_risks(v.nu_par, v.nu_perp, v.delta, eps0)?;
            return Ok(TheoryPrediction {
                regime: Regime::Separable,
                vars: TheoryVars::Sep(v),
                sr,
                ar,
                residual_norm: report.residual_norm,
                eps0,
                flip_prob,
            });
        }
    }
    Err(Error::Unsolved {
        residual_norm: best_residual,
        restarts: starts.len(),
    })
}

/// eps0 = 0 reduction of the separable system: zeta = 0 exactly, so the
/// expected Huber term vanishes and delta decouples.
fn solve_separable_no_attack(
    gamma: f64,
    flip_prob: f64,
    init: Option<SepVars>,
    grid: &QuadratureGrid,
) -> Result<TheoryPrediction> {
    let opts = SolveOptions {
        tol: SOLVE_TOL,
        restarts: 0,
        max_iter: 300,
    };
    let mask = [false, true, true, true];
    let mut best_residual = f64::INFINITY;
    let starts = sep_starts(init);
    for start in &starts {
        let x0 = [start.nu_par, start.nu_perp, start.r, 1.0 + start.kappa];
        let report = solve_nonlinear_system(
            |x, out| {
                let (nu_par, nu_perp, r, s) = (x[0], x[1], x[2], x[3]);
                let t = pos_part_moments(nu_par, nu_perp, 0.0, 0.0, flip_prob, grid);
                if !(t.value > 1e-280) {
                    return Err(Error::Evaluation("positive-part moment vanished".into()));
                }
                let sqrt_t = t.value.sqrt();
                out[0] = 2.0 * nu_par + r * t.d_nu_par / (2.0 * sqrt_t);
                out[1] = -2.0 * (s - 1.0) * nu_perp + r * t.d_nu_perp / (2.0 * sqrt_t);
                // zeta = 0 makes the Huber contribution to d/dr vanish
                out[2] = sqrt_t - gamma * r / (2.0 * s);
                out[3] = -nu_perp * nu_perp + gamma * r * r / (4.0 * s * s);
                Ok(())
            },
            &x0,
            &mask,
            &opts,
        )?;
        best_residual = best_residual.min(report.residual_norm);
        if report.converged {
            let (nu_par, nu_perp, r, s) = (
                report.solution[0],
                report.solution[1],
                report.solution[2],
                report.solution[3],
            );
            // delta from the zeta stationarity at zeta = 0:
            // E huber_y(a Z, 0) = a sqrt(2/pi) with a = sqrt(gamma) r / (2 s)
            let delta = gamma.sqrt() * r / (2.0 * s) * (2.0 / PI).sqrt();
            let v = SepVars {
                nu_par,
                nu_perp,
                delta,
                r,
                zeta: 0.0,
                kappa: s - 1.0,
            };
            let (sr, ar) = theory_risks(v.nu_par, v.nu_perp, v.delta, 0.0)?;
            return Ok(TheoryPrediction {
                regime: Regime::Separable,
                vars: TheoryVars::Sep(v),
                sr,
                ar,
                residual_norm: report.residual_norm,
                eps0: 0.0,
                flip_prob,
            });
        }
    }
    Err(Error::Unsolved {
        residual_norm: best_residual,
        restarts: starts.len(),
    })
}
