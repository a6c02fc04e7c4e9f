//! Grid discretisations of the annealed Koopman and transfer operators.

mod density;
mod grid;
mod mc;
mod two_point;
mod twisted;

pub use density::{l1_to_histogram, orbit_histogram, pushforward_lebesgue, stationary_density};
pub use grid::{spline_coefficients, GridFunction, Stencil};
pub use mc::{diffusion_variance_mc, moment_lyapunov_mc, moment_lyapunov_mc_many, McEstimate};
pub use two_point::{
    d_q_phi0, expected_log_distance, linearized_eigen_residual, two_point_apply, DqPhi0,
    MartingaleDefect,
};
pub use twisted::{
    default_q_grid, gamma_root, moment_curve, twisted_apply, MomentCurve, PowerIteration,
    SpectralEig, TwistedOperator, Q_MAX,
};
