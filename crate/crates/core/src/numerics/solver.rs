//! Damped least-squares (Levenberg–Marquardt) solver for small nonlinear
//! systems, with log-space handling of sign-constrained variables and a
//! deterministic multi-restart schedule.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Convergence threshold on the residual 2-norm.
    pub tol: f64,
    /// Additional perturbed starts tried after the supplied one fails.
    pub restarts: usize,
    /// Iteration cap per start.
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-9,
            restarts: 4,
            max_iter: 250,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Solve `residual(x) = 0` from `x0`. Variables with `positivity_mask[i]`
/// set are reparameterized as `x_i = exp(u_i)`, so they stay strictly
/// positive; a solution driven below ~1e-12 in such a coordinate is treated
/// as boundary-adjacent and reported unconverged. The Jacobian is forward
/// finite differences with step `1e-6 (1 + |u|)`.
pub fn solve_nonlinear_system<F>(
    mut residual: F,
    x0: &[f64],
    positivity_mask: &[bool],
    opts: &SolveOptions,
) -> Result<SolveReport>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = x0.len();
    if positivity_mask.len() != n {
        return Err(Error::Config(format!(
            "positivity mask length {} != dimension {}",
            positivity_mask.len(),
            n
        )));
    }
    for (i, &x) in x0.iter().enumerate() {
        if positivity_mask[i] && !(x > 0.0) {
            return Err(Error::Domain(format!(
                "start value {x} for positive variable {i}"
            )));
        }
    }

    let to_x = |u: &DVector<f64>, x: &mut [f64]| {
        for i in 0..n {
            x[i] = if positivity_mask[i] { u[i].exp() } else { u[i] };
        }
    };
    let u0_base: DVector<f64> = DVector::from_iterator(
        n,
        x0.iter()
            .enumerate()
            .map(|(i, &x)| if positivity_mask[i] { x.ln() } else { x }),
    );

    let mut best: Option<SolveReport> = None;
    let mut total_iterations = 0usize;

    for restart in 0..=opts.restarts {
        let mut u = u0_base.clone();
        if restart > 0 {
            // fixed schedule, independent of the system being solved
            let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0000 + restart as u64);
            for i in 0..n {
                u[i] += rng.gen_range(-0.7..0.7);
            }
        }

        let mut x = vec![0.0; n];
        let mut r = vec![0.0; n];
        to_x(&u, &mut x);
        if residual(&x, &mut r).is_err() || r.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let mut r_vec = DVector::from_column_slice(&r);
        let mut r_norm = r_vec.norm();
        let mut damping = 1e-3;
        let mut iterations = 0usize;

        while iterations < opts.max_iter {
            iterations += 1;
            total_iterations += 1;
            if r_norm <= opts.tol {
                break;
            }

            // forward-difference Jacobian in u-space
            let mut jac = DMatrix::<f64>::zeros(n, n);
            let mut ok = true;
            for j in 0..n {
                let h = 1e-6 * (1.0 + u[j].abs());
                let mut u_p = u.clone();
                u_p[j] += h;
                to_x(&u_p, &mut x);
                if residual(&x, &mut r).is_err() || r.iter().any(|v| !v.is_finite()) {
                    ok = false;
                    break;
                }
                for i in 0..n {
                    jac[(i, j)] = (r[i] - r_vec[i]) / h;
                }
            }
            if !ok {
                break;
            }

            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * &r_vec;
            let mut accepted = false;
            for _ in 0..30 {
                let mut lhs = jtj.clone();
                for i in 0..n {
                    lhs[(i, i)] += damping * (1.0 + jtj[(i, i)]);
                }
                let step = match lhs.cholesky() {
                    Some(ch) => ch.solve(&(-&jtr)),
                    None => {
                        damping *= 10.0;
                        continue;
                    }
                };
                let u_new = &u + &step;
                to_x(&u_new, &mut x);
                if residual(&x, &mut r).is_ok() && r.iter().all(|v| v.is_finite()) {
                    let new_norm = DVector::from_column_slice(&r).norm();
                    if new_norm < r_norm {
                        u = u_new;
                        r_vec = DVector::from_column_slice(&r);
                        r_norm = new_norm;
                        damping = (damping / 3.0).max(1e-14);
                        accepted = true;
                        break;
                    }
                }
                damping *= 4.0;
            }
            if !accepted {
                break;
            }
        }

        to_x(&u, &mut x);
        let boundary_adjacent = (0..n).any(|i| positivity_mask[i] && x[i] < 1e-12);
        let report = SolveReport {
            solution: x.clone(),
            residual_norm: r_norm,
            iterations: total_iterations,
            converged: r_norm <= opts.tol && !boundary_adjacent,
            restarts_used: restart,
        };
        let better = match &best {
            None => true,
            Some(b) => report.converged && !b.converged || report.residual_norm < b.residual_norm,
        };
        if better {
            best = Some(report);
        }
        if best.as_ref().is_some_and(|b| b.converged) {
            break;
        }
    }

    Ok(best.unwrap_or(SolveReport {
        solution: x0.to_vec(),
        residual_norm: f64::INFINITY,
        iterations: total_iterations,
        converged: false,
        restarts_used: opts.restarts,
    }))
}
