//! Near-diagonal occupation: logarithmic growth of visit counts when the
//! exponent vanishes, and a power-law mass near the diagonal when it is positive.
//!
//! ```bash
//! cargo run --release --example measure_growth
//! ```

use circle_rds::dynamics::lyapunov_birkhoff;
use circle_rds::koopman::{default_q_grid, gamma_root, moment_curve, TwistedOperator};
use circle_rds::occupation::{
    diagonal_mass_fit, distance_histogram_chains, excursion_counts, log_growth_fit, ExcursionDesign,
    MASS_WINDOW,
};
use circle_rds::passage::theta_at_zero_exponent;
use circle_rds::{CircleMap, NoiseQuadrature, NoiseStream};

fn main() -> circle_rds::Result<()> {
    let map = CircleMap::example_nu(0.6)?;

    let theta0 = theta_at_zero_exponent(&map, 0.12, 0.3, 1024, 192)?;
    let design = ExcursionDesign::geometric(0.05, 0.1, 20, 500);
    let stats = excursion_counts(&map, &NoiseStream::new(theta0, 1), &design)?;
    let fit = log_growth_fit(&stats, 200, 1)?;
    println!(
        "theta = {theta0:.5}: visits grow like {:.2} |ln eps| (95% CI {:.2}..{:.2}, R2 {:.4})",
        fit.slope, fit.ci.0, fit.ci.1, fit.r_squared
    );

    let theta = 0.2;
    let lambda = lyapunov_birkhoff(&map, &mut NoiseStream::new(theta, 2), None, 2_000_000, 10_000)?;
    let op = TwistedOperator::new(&map, &NoiseQuadrature::standard(theta)?, 1024)?;
    let curve = moment_curve(&op, &default_q_grid(0.02, &[]))?;
    let gamma = gamma_root(&op, curve.lambda0, 1e-6)?;
    let hist = distance_histogram_chains(&map, &NoiseStream::new(theta, 3), 4, 1_000_000, 1000, 1e-7, 60)?;
    let mass = diagonal_mass_fit(&hist, lambda.lambda_hat, Some(gamma), MASS_WINDOW)?;
    println!(
        "theta = {theta}: mass within eps scales like eps^{:.4} (CI {:.4}..{:.4}), |gamma| = {:.4}",
        mass.exponent,
        mass.ci.0,
        mass.ci.1,
        gamma.abs()
    );
    Ok(())
}
