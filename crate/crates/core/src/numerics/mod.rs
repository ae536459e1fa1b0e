//! Scalar computational substrate shared by the theory modules: standard
//! normal special functions, logistic prox/Moreau kernels, closed-form
//! Gaussian moments, Gaussian quadrature and a damped least-squares solver
//! for the stationarity systems.

mod kernels;
mod quadrature;
mod solver;
mod special;

pub use kernels::{
    expected_huber, expected_huber_partials, expected_soft_threshold_sq,
    expected_soft_threshold_sq_partials, integral_i, moreau_logistic,
    positive_part_second_moment, positive_part_second_moment_partials, prox_logistic, KernelEval,
};
pub use quadrature::QuadratureGrid;
pub use solver::{solve_nonlinear_system, SolveOptions, SolveReport};
pub use special::{erf, logistic_loss, sigmoid, std_normal_funcs, NormalFuncs};
