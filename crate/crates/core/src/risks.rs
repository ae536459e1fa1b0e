//! Closed-form population standard/robust risks for both tasks, Monte Carlo
//! oracles built on the explicit worst-case perturbation, and the
//! mean-shift (distributional) risk estimate.
//!
//! Conventions: the ground truth is unit-norm; test targets are noiseless;
//! the l-infinity consistent closed forms require the 1-sparse ground truth
//! e_1 (the inner maximization has no closed form otherwise, so other ground
//! truths are rejected rather than approximated).

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Estimator, PerturbationNorm, Task};
use crate::numerics::{integral_i, logistic_loss, std_normal_funcs};
use crate::{Error, Result};

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Squared,
    ZeroOne,
    Logistic,
}

/// Standard and robust risk with the closed-form pieces they decompose into.
#[derive(Debug, Clone)]
pub struct RiskReport {
    pub sr: f64,
    pub ar: f64,
    pub components: RiskComponents,
}

#[derive(Debug, Clone)]
pub enum RiskComponents {
    Regression {
        /// ||theta - theta*||_2^2.
        err_total: f64,
        /// ||P_perp theta||_2^2.
        perp_mass: f64,
        /// 2 eps sqrt(2/pi) ||P_perp theta|| ||theta - theta*||.
        cross: f64,
        /// ||theta* - P_par theta||_2^2.
        par_err: f64,
        /// Same as perp_mass; the orthogonal error of the noiseless split.
        orth_err: f64,
    },
    Classification {
        arccos_term: f64,
        erf_term: f64,
        integral_term: f64,
    },
}

/// Squared-loss risks under consistent l2 perturbations of radius
/// `eps_test`.
pub fn regression_risks(est: &Estimator, eps_test: f64) -> RiskReport {
    let par_err = (1.0 - est.nu_par).powi(2);
    let perp_mass = est.perp_l2 * est.perp_l2;
    let err_total = par_err + perp_mass;
    let cross = 2.0 * eps_test * (2.0 / PI).sqrt() * est.perp_l2 * err_total.sqrt();
    let ar = err_total + cross + eps_test * eps_test * perp_mass;
    RiskReport {
        sr: err_total,
        ar,
        components: RiskComponents::Regression {
            err_total,
            perp_mass,
            cross,
            par_err,
            orth_err: perp_mass,
        },
    }
}

/// 0-1 risks under consistent l-infinity perturbations of radius `eps_test`
/// (ground truth e_1). Scale-invariant in theta.
pub fn classification_risks(est: &Estimator, eps_test: f64) -> Result<RiskReport> {
    let norm = est.norm_l2();
    if !(norm > 0.0) {
        return Err(Error::Domain("classification risk of the zero vector".into()));
    }
    let u = (est.nu_par / norm).clamp(-1.0, 1.0);
    let t = eps_test * est.perp_l1 / norm;
    let arccos_term = u.acos() / PI;
    // (1/2) erf(t / sqrt(2)) = Phi(t) - 1/2
    let erf_term = std_normal_funcs(t).cdf - 0.5;
    let integral_term = integral_i(t, u);
    RiskReport {
        sr: arccos_term,
        ar: arccos_term + erf_term + integral_term,
        components: RiskComponents::Classification {
            arccos_term,
            erf_term,
            integral_term,
        },
    }
    .validated()
}

impl RiskReport {
    fn validated(self) -> Result<RiskReport> {
        if !self.sr.is_finite() || !self.ar.is_finite() {
            return Err(Error::Evaluation("non-finite risk".into()));
        }
        Ok(self)
    }
}

/// Worst-case margin penalty `max_{delta} -<delta, theta>` over the chosen
/// perturbation ball, divided by eps: the norm of theta that the attack
/// "sees".
pub fn perturbation_penalty(
    est: &Estimator,
    norm: PerturbationNorm,
    consistent: bool,
) -> f64 {
    match (norm, consistent) {
        (PerturbationNorm::L2, true) => est.perp_l2,
        (PerturbationNorm::L2, false) => est.norm_l2(),
        (PerturbationNorm::Linf, true) => est.perp_l1,
        (PerturbationNorm::Linf, false) => est.theta.iter().map(|v| v.abs()).sum(),
    }
}

/// Pointwise worst-case loss over the perturbation ball, in closed form.
///
/// Regression: `( |y - <x, theta>| + eps rho )^2`; classification: the loss
/// at the penalized margin `y <x, theta> - eps rho`, where `rho` is
/// [`perturbation_penalty`]. The consistent l-infinity form assumes the
/// ground truth e_1.
pub fn worst_case_loss_oracle(
    x: &Array1<f64>,
    y: f64,
    est: &Estimator,
    eps: f64,
    norm: PerturbationNorm,
    consistent: bool,
    loss: LossKind,
) -> Result<f64> {
    let rho = perturbation_penalty(est, norm, consistent);
    let v = x.dot(&est.theta);
    match loss {
        LossKind::Squared => {
            let r = (y - v).abs() + eps * rho;
            Ok(r * r)
        }
        LossKind::ZeroOne => Ok(if y * v - eps * rho <= 0.0 { 1.0 } else { 0.0 }),
        LossKind::Logistic => Ok(logistic_loss(y * v - eps * rho)),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MonteCarloRisk {
    pub sr: f64,
    pub sr_stderr: f64,
    pub ar: f64,
    pub ar_stderr: f64,
}

/// Brute-force population risks on fresh Gaussian test points with the
/// explicit worst-case perturbation applied per point.
pub fn monte_carlo_risk(
    est: &Estimator,
    theta_star: &Array1<f64>,
    eps: f64,
    norm: PerturbationNorm,
    consistent: bool,
    task: Task,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloRisk> {
    if samples < 1000 {
        return Err(Error::Config("need at least 1e3 Monte Carlo samples".into()));
    }
    validate_linf_ground_truth(theta_star, norm, consistent)?;
    let d = est.theta.len();
    let rho = perturbation_penalty(est, norm, consistent);
    let mut rng = crate::data::seeded_rng(seed, "mc.risk", &[samples as u64]);

    let mut sr_acc = Acc::default();
    let mut ar_acc = Acc::default();
    let mut x = Array1::zeros(d);
    for _ in 0..samples {
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let s = x.dot(theta_star);
        let v = x.dot(&est.theta);
        match task {
            Task::Regression => {
                let clean = (s - v) * (s - v);
                let adv = ((s - v).abs() + eps * rho).powi(2);
                sr_acc.push(clean);
                ar_acc.push(adv);
            }
            Task::Classification => {
                let y = if s >= 0.0 { 1.0 } else { -1.0 };
                sr_acc.push(if y * v <= 0.0 { 1.0 } else { 0.0 });
                ar_acc.push(if y * v - eps * rho <= 0.0 { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(MonteCarloRisk {
        sr: sr_acc.mean(),
        sr_stderr: sr_acc.stderr(),
        ar: ar_acc.mean(),
        ar_stderr: ar_acc.stderr(),
    })
}

/// Monte Carlo estimate of the distributionally robust risk: the population
/// risk under the worst mean shift orthogonal to the ground truth. The
/// optimal shift aligns with the perturbation penalty of the consistent
/// ball, pushing every margin down by `eps rho`.
///
/// Shares its sample stream with [`monte_carlo_risk`]: called with the same
/// seed and sample count, the estimates are coupled so the pointwise
/// dominance of the adversarial risk carries over to the estimates.
pub fn mean_shift_dr_estimate(
    est: &Estimator,
    theta_star: &Array1<f64>,
    eps: f64,
    norm: PerturbationNorm,
    task: Task,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    validate_linf_ground_truth(theta_star, norm, true)?;
    let d = est.theta.len();
    let rho = perturbation_penalty(est, norm, true);
    let shift = eps * rho;
    let mut rng = crate::data::seeded_rng(seed, "mc.risk", &[samples as u64]);
    let mut acc = Acc::default();
    let mut x = Array1::zeros(d);
    for _ in 0..samples {
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let s = x.dot(theta_star);
        let v = x.dot(&est.theta);
        match task {
            // E (<x, theta - theta*> + c)^2 is maximized at |c| = eps rho
            Task::Regression => acc.push((v - s + shift).powi(2)),
            Task::Classification => {
                let y = if s >= 0.0 { 1.0 } else { -1.0 };
                acc.push(if y * (v - y * shift) <= 0.0 { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(acc.mean())
}

fn validate_linf_ground_truth(
    theta_star: &Array1<f64>,
    norm: PerturbationNorm,
    consistent: bool,
) -> Result<()> {
    if norm == PerturbationNorm::Linf && consistent {
        let is_e1 = theta_star[0] == 1.0 && theta_star.iter().skip(1).all(|&v| v == 0.0);
        if !is_e1 {
            return Err(Error::Config(
                "consistent l-infinity attacks have a closed form only for the ground truth e_1"
                    .into(),
            ));
        }
    }
    Ok(())
}

#[derive(Default)]
struct Acc {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Acc {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }
    fn mean(&self) -> f64 {
        self.sum / self.n
    }
    fn stderr(&self) -> f64 {
        let var = (self.sum_sq / self.n - self.mean().powi(2)).max(0.0);
        (var / self.n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{decompose, default_theta_star};
    use approx::assert_abs_diff_eq;

    fn est_from(coords: &[f64]) -> Estimator {
        let theta = Array1::from_vec(coords.to_vec());
        decompose(&theta, &default_theta_star(coords.len()))
    }

    #[test]
    fn regression_ground_truth_has_zero_risk() {
        let est = est_from(&[1.0, 0.0, 0.0]);
        let r = regression_risks(&est, 0.7);
        assert_eq!((r.sr, r.ar), (0.0, 0.0));
    }

    #[test]
    fn regression_parallel_error_only() {
        // theta - theta* parallel to theta*: perp mass zero, ar == sr
        let est = est_from(&[1.8, 0.0, 0.0]);
        let r = regression_risks(&est, 0.4);
        assert_abs_diff_eq!(r.sr, 0.64, epsilon = 1e-14);
        assert_eq!(r.ar, r.sr);
    }

    #[test]
    fn regression_closed_form_example() {
        let est = est_from(&[1.0, 1.0]);
        let r = regression_risks(&est, 0.4);
        assert_abs_diff_eq!(r.sr, 1.0, epsilon = 1e-14);
        let expected = 1.0 + 0.8 * (2.0 / PI).sqrt() + 0.16;
        assert_abs_diff_eq!(r.ar, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.7983, epsilon = 1e-4);
    }

    #[test]
    fn classification_examples() {
        let r = classification_risks(&est_from(&[1.0, 0.0]), 0.9).unwrap();
        assert_abs_diff_eq!(r.sr, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.ar, 0.0, epsilon = 1e-15);

        let r = classification_risks(&est_from(&[0.0, 1.0]), 0.0).unwrap();
        assert_abs_diff_eq!(r.sr, 0.5, epsilon = 1e-14);

        let r = classification_risks(&est_from(&[1.0, 1.0]), 0.0).unwrap();
        assert_abs_diff_eq!(r.sr, 0.25, epsilon = 1e-14);
        assert_eq!(r.ar, r.sr);

        assert!(classification_risks(&est_from(&[0.0, 0.0]), 0.1).is_err());
    }

    #[test]
    fn classification_scale_invariance() {
        let a = classification_risks(&est_from(&[0.8, -0.3, 0.5]), 0.2).unwrap();
        let b = classification_risks(&est_from(&[8.0, -3.0, 5.0]), 0.2).unwrap();
        assert_abs_diff_eq!(a.sr, b.sr, epsilon = 1e-14);
        assert_abs_diff_eq!(a.ar, b.ar, epsilon = 1e-14);
    }

    #[test]
    fn oracle_reduces_to_plain_loss_at_zero_eps() {
        let est = est_from(&[0.4, 0.8, -0.2]);
        let x = Array1::from_vec(vec![0.3, -1.2, 0.7]);
        let v = x.dot(&est.theta);
        let sq = worst_case_loss_oracle(
            &x,
            2.0,
            &est,
            0.0,
            PerturbationNorm::L2,
            true,
            LossKind::Squared,
        )
        .unwrap();
        assert_abs_diff_eq!(sq, (2.0 - v) * (2.0 - v), epsilon = 1e-14);

        // zero orthogonal mass: eps does not matter under consistency
        let aligned = est_from(&[2.0, 0.0, 0.0]);
        let a = worst_case_loss_oracle(
            &x,
            1.0,
            &aligned,
            0.0,
            PerturbationNorm::Linf,
            true,
            LossKind::Logistic,
        )
        .unwrap();
        let b = worst_case_loss_oracle(
            &x,
            1.0,
            &aligned,
            0.8,
            PerturbationNorm::Linf,
            true,
            LossKind::Logistic,
        )
        .unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn oracle_dominates_random_feasible_perturbations() {
        // closed form is the exact max; random feasible deltas only approach
        // it from below
        let d = 6;
        let mut rng = crate::data::seeded_rng(5, "test.delta", &[]);
        let theta =
            Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let est = decompose(&theta, &default_theta_star(d));
        let x = Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let eps = 0.3;
        let y = 1.0;
        let closed = worst_case_loss_oracle(
            &x,
            y,
            &est,
            eps,
            PerturbationNorm::Linf,
            true,
            LossKind::Logistic,
        )
        .unwrap();
        let mut best = f64::MIN;
        for k in 0..100_000 {
            let mut pert_margin = 0.0;
            for j in 1..d {
                // half the draws explore ball corners, half the interior
                let delta_j = if k % 2 == 0 {
                    eps * if rng.gen::<bool>() { 1.0 } else { -1.0 }
                } else {
                    eps * (2.0 * rng.gen::<f64>() - 1.0)
                };
                pert_margin += delta_j * est.theta[j];
            }
            let loss = logistic_loss(y * (x.dot(&est.theta) + pert_margin));
            best = best.max(loss);
        }
        assert!(best <= closed + 1e-12, "sampled {best} > closed {closed}");
        assert!(closed - best <= 1e-6, "sampled max should reach the closed form");
    }

    #[test]
    fn monte_carlo_matches_closed_forms() {
        let est = est_from(&[1.0, 1.0]);
        let mc = monte_carlo_risk(
            &est,
            &default_theta_star(2),
            0.4,
            PerturbationNorm::L2,
            true,
            Task::Regression,
            200_000,
            9,
        )
        .unwrap();
        let closed = regression_risks(&est, 0.4);
        assert!((mc.sr - closed.sr).abs() <= 3.0 * mc.sr_stderr);
        assert!((mc.ar - closed.ar).abs() <= 3.0 * mc.ar_stderr);

        let est = est_from(&[1.0, 1.0]);
        let mc = monte_carlo_risk(
            &est,
            &default_theta_star(2),
            0.1,
            PerturbationNorm::Linf,
            true,
            Task::Classification,
            200_000,
            10,
        )
        .unwrap();
        let closed = classification_risks(&est, 0.1).unwrap();
        assert!((mc.sr - closed.sr).abs() <= 3.0 * mc.sr_stderr.max(1e-4));
        assert!((mc.ar - closed.ar).abs() <= 3.0 * mc.ar_stderr.max(1e-4));
    }

    #[test]
    fn ground_truth_estimator_is_perfectly_robust() {
        let est = est_from(&[1.0, 0.0, 0.0, 0.0]);
        let mc = monte_carlo_risk(
            &est,
            &default_theta_star(4),
            0.5,
            PerturbationNorm::Linf,
            true,
            Task::Classification,
            10_000,
            3,
        )
        .unwrap();
        assert_eq!(mc.ar, 0.0);

        let dr = mean_shift_dr_estimate(
            &est,
            &default_theta_star(4),
            0.5,
            PerturbationNorm::Linf,
            Task::Classification,
            10_000,
            4,
        )
        .unwrap();
        assert_eq!(dr, 0.0);
    }

    #[test]
    fn dr_at_zero_eps_equals_sr() {
        let est = est_from(&[0.7, -0.4, 0.2]);
        let dr = mean_shift_dr_estimate(
            &est,
            &default_theta_star(3),
            0.0,
            PerturbationNorm::L2,
            Task::Regression,
            50_000,
            5,
        )
        .unwrap();
        let mc = monte_carlo_risk(
            &est,
            &default_theta_star(3),
            0.0,
            PerturbationNorm::L2,
            true,
            Task::Regression,
            50_000,
            5,
        )
        .unwrap();
        assert!((dr - mc.sr).abs() <= 5.0 * mc.sr_stderr.max(1e-6));
    }

    #[test]
    fn dr_bounded_by_ar() {
        for seed in 0..6u64 {
            let d = 8;
            let mut rng = crate::data::seeded_rng(seed, "test.dr", &[]);
            let theta =
                Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let est = decompose(&theta, &default_theta_star(d));
            for (task, norm) in [
                (Task::Regression, PerturbationNorm::L2),
                (Task::Classification, PerturbationNorm::Linf),
            ] {
                let dr = mean_shift_dr_estimate(
                    &est,
                    &default_theta_star(d),
                    0.4,
                    norm,
                    task,
                    100_000,
                    seed,
                )
                .unwrap();
                let mc = monte_carlo_risk(
                    &est,
                    &default_theta_star(d),
                    0.4,
                    norm,
                    true,
                    task,
                    100_000,
                    seed + 1000,
                )
                .unwrap();
                assert!(
                    dr <= mc.ar + 3.0 * mc.ar_stderr.max(1e-5),
                    "task {task:?}: dr {dr} > ar {}",
                    mc.ar
                );
            }
        }
    }

    #[test]
    fn ar_nondecreasing_in_eps() {
        let est = est_from(&[0.9, 0.5, -0.3]);
        let mut last_reg = 0.0;
        let mut last_cls = 0.0;
        for k in 0..8 {
            let eps = 0.1 * k as f64;
            let ar_reg = regression_risks(&est, eps).ar;
            let ar_cls = classification_risks(&est, eps).unwrap().ar;
            assert!(ar_reg >= last_reg - 1e-14);
            assert!(ar_cls >= last_cls - 1e-14);
            last_reg = ar_reg;
            last_cls = ar_cls;
        }
    }
}
