//! Logistic prox/Moreau kernels and closed-form Gaussian expectations.
//!
//! The closed forms below are the scalar building blocks of the stationarity
//! systems in [`crate::theory`]: the second moment of a soft-thresholded
//! Gaussian, the expected Huber loss of a scaled Gaussian, the second moment
//! of a shifted positive part, and the incomplete integral `I(t,u)` entering
//! the robust 0-1 risk.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::quadrature::gauss_legendre;
use super::special::{erf, logistic_loss, sigmoid};
use crate::{Error, Result};

/// Value of a scalar kernel together with its partial derivatives, where the
/// kernel has them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEval {
    pub value: f64,
    /// Partial in the first argument.
    pub d_x: f64,
    /// Partial in the second (envelope/scale) argument.
    pub d_t: f64,
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[inline]
fn sqrt_2_over_pi() -> f64 {
    (2.0 / PI).sqrt()
}

/// Proximal operator of the logistic loss: the minimizer of
/// `log(1+e^{-t}) + (t-x)^2/(2 mu)`.
///
/// Solved in the shifted variable `q = t - x`, which lies in `[0, mu]`
/// because the stationarity condition is `q = mu * sigmoid(-(x+q))`.
/// Safeguarded Newton; falls back to bisection whenever a step leaves the
/// bracket.
pub fn prox_logistic(x: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("prox_logistic(x={x}, mu={mu})")));
    }
    let h = |q: f64| q - mu * sigmoid(-(x + q));
    let (mut lo, mut hi) = (0.0_f64, mu);
    let mut q = mu * sigmoid(-x); // one fixed-point step from q=0
    let mut residual = f64::INFINITY;
    for _ in 0..100 {
        residual = h(q);
        if residual.abs() <= 1e-12 {
            return Ok(x + q);
        }
        if residual > 0.0 {
            hi = q;
        } else {
            lo = q;
        }
        let s = sigmoid(-(x + q));
        let step = residual / (1.0 + mu * s * (1.0 - s));
        q -= step;
        if !(q > lo && q < hi) {
            q = 0.5 * (lo + hi);
        }
    }
    // the bracket is tiny by now; accept if we met the contract tolerance
    if residual.abs() <= 1e-10 {
        return Ok(x + q);
    }
    Err(Error::ProxNoConvergence {
        residual: residual.abs(),
    })
}

/// Moreau envelope of the logistic loss and its two partials,
/// `d_x = (x-p)/t` and `d_t = -(x-p)^2/(2t^2)` with `p` the prox point.
pub fn moreau_logistic(x: f64, t: f64) -> Result<KernelEval> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("moreau_logistic needs t > 0, got {t}")));
    }
    let p = prox_logistic(x, t)?;
    let q = p - x;
    Ok(KernelEval {
        value: logistic_loss(p) + q * q / (2.0 * t),
        d_x: -q / t,
        d_t: -q * q / (2.0 * t * t),
    })
}

/// `E[SoftT_mu(s Z)^2]` for `Z ~ N(0,1)`:
/// `(mu^2+s^2)(1 - erf(mu/(sqrt(2) s))) - s mu sqrt(2/pi) exp(-mu^2/(2 s^2))`.
pub fn expected_soft_threshold_sq(mu: f64, s: f64) -> f64 {
    expected_soft_threshold_sq_partials(mu, s).value
}

/// Same moment with partials in `mu` (as `d_x`) and `s` (as `d_t`).
pub fn expected_soft_threshold_sq_partials(mu: f64, s: f64) -> KernelEval {
    debug_assert!(mu >= 0.0 && s > 0.0);
    if mu == 0.0 {
        return KernelEval {
            value: s * s,
            d_x: -2.0 * s * sqrt_2_over_pi(),
            d_t: 2.0 * s,
        };
    }
    let tail = 1.0 - erf(mu / (SQRT_2 * s));
    let gauss = (-mu * mu / (2.0 * s * s)).exp();
    KernelEval {
        value: ((mu * mu + s * s) * tail - s * mu * sqrt_2_over_pi() * gauss).max(0.0),
        d_x: 2.0 * mu * tail - 2.0 * s * sqrt_2_over_pi() * gauss,
        d_t: 2.0 * s * tail,
    }
}

/// `E[huber(a Z, b)]` where `huber(x,y) = x^2/2` for `|x| <= y` and
/// `y(|x| - y/2)` otherwise. Even in `a`; zero when `a = 0` or `b = 0`.
pub fn expected_huber(a: f64, b: f64) -> f64 {
    expected_huber_partials(a, b).value
}

/// Expected Huber loss with partials in `a` (as `d_x`) and `b` (as `d_t`).
pub fn expected_huber_partials(a: f64, b: f64) -> KernelEval {
    debug_assert!(b >= 0.0);
    let a = a.abs();
    if a == 0.0 || b == 0.0 {
        // huber(0, b) = 0 and huber(., 0) = 0; the a-slope at b=0 is 0,
        // the b-slope at a>0, b=0 is E|aZ| = a sqrt(2/pi)
        let d_t = if b == 0.0 { a * sqrt_2_over_pi() } else { 0.0 };
        return KernelEval { value: 0.0, d_x: 0.0, d_t };
    }
    let e = erf(b / (SQRT_2 * a));
    let gauss = (-b * b / (2.0 * a * a)).exp();
    KernelEval {
        value: (0.5 * (a * a + b * b) * e - 0.5 * b * b + a * b / (2.0 * PI).sqrt() * gauss)
            .max(0.0),
        d_x: a * e,
        d_t: b * (e - 1.0) + a * sqrt_2_over_pi() * gauss,
    }
}

/// `E[max(0, b + a Z)^2]` for `Z ~ N(0,1)`:
/// `(b^2+a^2)/2 (1+erf(b/(sqrt(2) a))) + a b exp(-b^2/(2a^2))/sqrt(2 pi)`.
pub fn positive_part_second_moment(a: f64, b: f64) -> f64 {
    positive_part_second_moment_partials(a, b).value
}

/// Same moment with partials in `a` (as `d_x`) and `b` (as `d_t`).
pub fn positive_part_second_moment_partials(a: f64, b: f64) -> KernelEval {
    debug_assert!(a >= 0.0);
    if a == 0.0 {
        let m = b.max(0.0);
        return KernelEval {
            value: m * m,
            d_x: 0.0,
            d_t: 2.0 * m,
        };
    }
    let one_plus_erf = 1.0 + erf(b / (SQRT_2 * a));
    let gauss = (-b * b / (2.0 * a * a)).exp();
    KernelEval {
        value: (0.5 * (b * b + a * a) * one_plus_erf + a * b / (2.0 * PI).sqrt() * gauss).max(0.0),
        d_x: a * one_plus_erf,
        d_t: b * one_plus_erf + a * sqrt_2_over_pi() * gauss,
    }
}

/// `I(t,u) = int_0^t phi(x) erf(x u / sqrt(2(1-u^2))) dx`, absolute accuracy
/// well below 1e-10. `u = +-1` uses the analytic limit `+-(Phi(t) - 1/2)`.
pub fn integral_i(t: f64, u: f64) -> f64 {
    let t = t.max(0.0);
    let u = u.clamp(-1.0, 1.0);
    if t == 0.0 || u == 0.0 {
        return 0.0;
    }
    if u.abs() >= 1.0 - 1e-14 {
        return u.signum() * 0.5 * erf(t / SQRT_2);
    }
    // the phi factor kills everything beyond ~9 sigma
    let t_eff = t.min(9.0);
    let c = u / (2.0 * (1.0 - u * u)).sqrt();
    let rule = gl_rule();
    let panels = (t_eff / 0.5).ceil() as usize;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = t_eff * p as f64 / panels as f64;
        let hi = t_eff * (p + 1) as f64 / panels as f64;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for (node, weight) in rule {
            let x = mid + half * node;
            total += weight * half * (-0.5 * x * x).exp() / (2.0 * PI).sqrt() * erf(c * x);
        }
    }
    total
}

fn gl_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(24))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Adaptive Simpson on [a,b], absolute tolerance `tol`.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            m: f64,
            fm: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                    + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let (m, fm, whole) = simpson(f, a, fa, b, fb);
        rec(f, a, fa, b, fb, m, fm, whole, tol, 48)
    }

    fn gauss_expect(f: &dyn Fn(f64) -> f64) -> f64 {
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
        adaptive_simpson(&|z| f(z) * phi(z), -12.0, 12.0, 1e-11)
    }

    #[test]
    fn prox_examples() {
        // mu -> 0+ collapses to the identity
        assert_abs_diff_eq!(prox_logistic(0.0, 1e-12).unwrap(), 0.0, epsilon = 1e-9);

        // bisection oracle for t(1+e^t) = 1 on [0,1]:
        // t = prox(0,1) solves t = sigmoid(-t)
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (1.0 + mid.exp()) > 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert_abs_diff_eq!(prox_logistic(0.0, 1.0).unwrap(), oracle, epsilon = 1e-10);
        assert_abs_diff_eq!(oracle, 0.4011, epsilon = 1e-4);

        // fixed-point oracle at x=10, mu=1: iterate q <- sigmoid(-(10+q))
        let mut q = sigmoid(-10.0);
        for _ in 0..50 {
            q = sigmoid(-(10.0 + q));
        }
        assert_abs_diff_eq!(prox_logistic(10.0, 1.0).unwrap(), 10.0 + q, epsilon = 1e-12);
        // one fixed-point step already gives the displayed digits
        assert_abs_diff_eq!(10.0 + q, 10.0 + sigmoid(-10.0), epsilon = 1e-8);
    }

    #[test]
    fn prox_stationarity_on_grid() {
        let mut worst = 0.0_f64;
        for i in 0..1000 {
            // low-discrepancy-ish deterministic grid
            let x = -20.0 + 40.0 * ((i as f64 * 0.6180339887498949) % 1.0);
            let mu = 10f64.powf(-6.0 + 9.0 * ((i as f64 * 0.3819660112501051) % 1.0));
            let p = prox_logistic(x, mu).unwrap();
            let r = (p - x - mu * sigmoid(-p)).abs();
            worst = worst.max(r);
        }
        assert!(worst <= 1e-10, "worst prox residual {worst:e}");
    }

    #[test]
    fn moreau_examples_and_envelope_bound() {
        let m = moreau_logistic(0.0, 1e-9).unwrap();
        assert_abs_diff_eq!(m.value, 2f64.ln(), epsilon = 1e-8);

        for &(x, t) in &[(-3.0, 0.2), (0.0, 1.0), (2.0, 0.5), (7.0, 30.0)] {
            let m = moreau_logistic(x, t).unwrap();
            assert!(m.value <= logistic_loss(x) + 1e-14);
        }
    }

    #[test]
    fn moreau_partials_match_central_differences() {
        let h = 1e-5;
        for &(x, t) in &[(2.0, 0.5), (-4.0, 1.3), (0.3, 2.0), (8.0, 0.05)] {
            let m = moreau_logistic(x, t).unwrap();
            let dx = (moreau_logistic(x + h, t).unwrap().value
                - moreau_logistic(x - h, t).unwrap().value)
                / (2.0 * h);
            let dt = (moreau_logistic(x, t + h).unwrap().value
                - moreau_logistic(x, t - h).unwrap().value)
                / (2.0 * h);
            assert_abs_diff_eq!(m.d_x, dx, epsilon = 1e-6 * (1.0 + dx.abs()));
            assert_abs_diff_eq!(m.d_t, dt, epsilon = 1e-6 * (1.0 + dt.abs()));
        }
    }

    #[test]
    fn soft_threshold_moment_examples() {
        assert_abs_diff_eq!(expected_soft_threshold_sq(0.0, 1.7), 2.89, epsilon = 1e-12);
        assert!(expected_soft_threshold_sq(50.0, 1.0) <= 1e-10);
        let soft = |z: f64| if z.abs() <= 1.0 { 0.0 } else { z.signum() * (z.abs() - 1.0) };
        let oracle = gauss_expect(&|z| soft(z).powi(2));
        assert_abs_diff_eq!(expected_soft_threshold_sq(1.0, 1.0), oracle, epsilon = 1e-8);
    }

    #[test]
    fn huber_moment_examples() {
        assert_eq!(expected_huber(3.0, 0.0), 0.0);
        assert_eq!(expected_huber(0.0, 2.0), 0.0);
        let huber = |x: f64, y: f64| {
            if x.abs() <= y {
                0.5 * x * x
            } else {
                y * (x.abs() - 0.5 * y)
            }
        };
        let oracle = gauss_expect(&|z| huber(z, 1.0));
        assert_abs_diff_eq!(expected_huber(1.0, 1.0), oracle, epsilon = 1e-8);
        assert_abs_diff_eq!(oracle, 0.42466, epsilon = 5e-6);
    }

    #[test]
    fn positive_part_moment_examples() {
        assert_abs_diff_eq!(positive_part_second_moment(1.0, 0.0), 0.5, epsilon = 1e-14);
        assert_eq!(positive_part_second_moment(0.0, 2.0), 4.0);
        // E (Z - 5)_+^2 = 26 Q(5) - 5 phi(5) = 1.9343e-8
        let oracle = gauss_expect(&|z| (-5.0 + z).max(0.0).powi(2));
        assert_abs_diff_eq!(positive_part_second_moment(1.0, -5.0), oracle, epsilon = 1e-10);
        assert_abs_diff_eq!(oracle, 1.9343e-8, epsilon = 2e-12);
    }

    #[test]
    fn moment_partials_match_central_differences() {
        let h = 1e-6;
        for &(a, b) in &[(0.7, 0.9), (1.4, 0.2), (2.3, 3.1), (0.05, 1.0)] {
            let st = expected_soft_threshold_sq_partials(b, a);
            let d_mu = (expected_soft_threshold_sq(b + h, a) - expected_soft_threshold_sq(b - h, a))
                / (2.0 * h);
            let d_s = (expected_soft_threshold_sq(b, a + h) - expected_soft_threshold_sq(b, a - h))
                / (2.0 * h);
            assert_abs_diff_eq!(st.d_x, d_mu, epsilon = 1e-6 * (1.0 + d_mu.abs()));
            assert_abs_diff_eq!(st.d_t, d_s, epsilon = 1e-6 * (1.0 + d_s.abs()));

            let hb = expected_huber_partials(a, b);
            let d_a = (expected_huber(a + h, b) - expected_huber(a - h, b)) / (2.0 * h);
            let d_b = (expected_huber(a, b + h) - expected_huber(a, b - h)) / (2.0 * h);
            assert_abs_diff_eq!(hb.d_x, d_a, epsilon = 1e-6 * (1.0 + d_a.abs()));
            assert_abs_diff_eq!(hb.d_t, d_b, epsilon = 1e-6 * (1.0 + d_b.abs()));

            let pp = positive_part_second_moment_partials(a, b - 2.0);
            let d_a = (positive_part_second_moment(a + h, b - 2.0)
                - positive_part_second_moment(a - h, b - 2.0))
                / (2.0 * h);
            let d_b = (positive_part_second_moment(a, b - 2.0 + h)
                - positive_part_second_moment(a, b - 2.0 - h))
                / (2.0 * h);
            assert_abs_diff_eq!(pp.d_x, d_a, epsilon = 1e-6 * (1.0 + d_a.abs()));
            assert_abs_diff_eq!(pp.d_t, d_b, epsilon = 1e-6 * (1.0 + d_b.abs()));
        }
    }

    #[test]
    fn integral_i_examples() {
        assert_eq!(integral_i(0.0, 0.7), 0.0);
        assert_eq!(integral_i(2.0, 0.0), 0.0);
        let phi1 = 0.5 * (1.0 + erf(1.0 / SQRT_2));
        assert_abs_diff_eq!(integral_i(1.0, 1.0), phi1 - 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(integral_i(1.0, 1.0), 0.3413447, epsilon = 1e-7);

        // against adaptive Simpson
        for &(t, u) in &[(0.5_f64, 0.3_f64), (2.0, -0.8), (4.0, 0.99), (1.3, 0.5)] {
            let c = u / (2.0 * (1.0 - u * u)).sqrt();
            let oracle = adaptive_simpson(
                &|x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt() * erf(c * x),
                0.0,
                t,
                1e-12,
            );
            assert_abs_diff_eq!(integral_i(t, u), oracle, epsilon = 1e-10);
        }
    }

    proptest! {
        #[test]
        fn envelope_inequality(x in -30.0..30.0f64, t in 1e-6..100.0f64) {
            let m = moreau_logistic(x, t).unwrap();
            prop_assert!(m.value <= logistic_loss(x) + 1e-12);
        }

        #[test]
        fn integral_i_odd_and_monotone(t in 0.0..5.0f64, u in 0.0..=1.0f64) {
            let v = integral_i(t, u);
            prop_assert!((integral_i(t, -u) + v).abs() <= 1e-12);
            prop_assert!(integral_i(t + 0.3, u) >= v - 1e-12);
            // |I(t,u)| <= Phi(t) - 1/2
            prop_assert!(v.abs() <= 0.5 * erf(t / SQRT_2) + 1e-12);
        }

        #[test]
        fn moment_bounds(a in 1e-3..10.0f64, b in -10.0..10.0f64) {
            let st = expected_soft_threshold_sq(b.abs(), a);
            prop_assert!(st >= 0.0 && st <= a * a + 1e-12);
            prop_assert!(expected_huber(a, b.abs()) >= 0.0);
            let pp = positive_part_second_moment(a, b);
            prop_assert!(pp >= 0.0 && pp <= a * a + b * b + (a * b).abs() + 1e-9);
        }
    }
}
