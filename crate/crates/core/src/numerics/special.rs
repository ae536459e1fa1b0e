//! Standard normal special functions and stable logistic primitives.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Error function, cumulative distribution and density of a standard normal,
/// all evaluated at the same point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFuncs {
    pub erf: f64,
    pub cdf: f64,
    pub pdf: f64,
}

/// Error function. Sub-ulp accurate (FDLIBM port).
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// erf, Phi and phi at `x`.
pub fn std_normal_funcs(x: f64) -> NormalFuncs {
    let e = erf(x * FRAC_1_SQRT_2);
    NormalFuncs {
        erf: erf(x),
        cdf: 0.5 * (1.0 + e),
        pdf: (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
    }
}

/// Logistic sigmoid 1/(1+e^{-x}) without overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss log(1+e^{-m}), stable for large |m|.
#[inline]
pub fn logistic_loss(m: f64) -> f64 {
    if m >= 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}
