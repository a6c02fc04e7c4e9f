//! With a positive exponent, escape from a small distance takes time linear in
//! the log distance, and reaching a much smaller distance first has a power-law
//! probability with the nonzero root of the moment Lyapunov function as exponent.
//!
//! ```bash
//! cargo run --release --example passage_positive_exponent
//! ```

use circle_rds::koopman::{default_q_grid, gamma_root, moment_curve, TwistedOperator};
use circle_rds::passage::{escape_time_design, verify_positive_exponent_tail};
use circle_rds::{CircleMap, NoiseQuadrature};

fn main() -> circle_rds::Result<()> {
    let map = CircleMap::example_nu(0.6)?;
    let theta = 0.2;

    let esc = escape_time_design(&map, theta, 0.05, &[2.0, 4.0, 6.0], 4000, 1)?;
    for p in &esc.points {
        println!("d0 = {:.2e}: mean escape time {:.2} +- {:.2}", p.d0, p.mean, p.stderr);
    }
    println!(
        "slope in |ln d0| {:.3}, 1/lambda {:.3}",
        esc.fit.slope,
        1.0 / esc.lambda_hat
    );

    let op = TwistedOperator::new(&map, &NoiseQuadrature::standard(theta)?, 1024)?;
    let curve = moment_curve(&op, &default_q_grid(0.02, &[]))?;
    let gamma = gamma_root(&op, curve.lambda0, 1e-6)?;

    let offsets: Vec<f64> = (1..=6).map(|k| 2.0 * k as f64).collect();
    let tail = verify_positive_exponent_tail(&map, theta, 0.004, 0.05, 0.1, &offsets, 20_000, 2)?;
    for (k, p, hits) in &tail.points {
        println!("  log ratio {k:>4}: P {p:.4e} ({hits} hits)");
    }
    println!(
        "tail exponent {:.4} +- {:.4}, spectral gamma {gamma:.4}",
        tail.exponent, tail.exponent_stderr
    );
    Ok(())
}
