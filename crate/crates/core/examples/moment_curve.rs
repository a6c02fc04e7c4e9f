//! Moment Lyapunov function from the twisted transfer operator, its slope and
//! curvature at zero, the nonzero root, and a Monte Carlo comparison.
//!
//! ```bash
//! cargo run --release --example moment_curve [theta]
//! ```

use circle_rds::koopman::{default_q_grid, gamma_root, moment_curve, moment_lyapunov_mc_many, TwistedOperator};
use circle_rds::{CircleMap, NoiseQuadrature, NoiseStream};

fn main() -> circle_rds::Result<()> {
    let theta: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.2);
    let map = CircleMap::example_nu(0.6)?;
    let op = TwistedOperator::new(&map, &NoiseQuadrature::standard(theta)?, 2048)?;

    let curve = moment_curve(&op, &default_q_grid(0.02, &[0.5, 1.0, 2.0]))?;
    println!("theta = {theta}");
    for (q, l) in curve.q_grid.iter().zip(&curve.lambda) {
        println!("  Lambda({q:+.2}) = {l:+.6}");
    }
    println!("lambda0 = {:.6}  V = {:.5}", curve.lambda0, curve.v);
    match gamma_root(&op, curve.lambda0, 1e-6) {
        Ok(g) => println!("gamma = {g:.6}"),
        Err(e) => println!("no nonzero root: {e}"),
    }

    let qs = [-1.0, 1.0];
    let mc = moment_lyapunov_mc_many(&map, &NoiseStream::new(theta, 3), &qs, 16, 200_000)?;
    for (q, e) in qs.iter().zip(mc) {
        println!(
            "  q = {q:+}: spectral {:+.4}, Monte Carlo {:+.4} +- {:.4}",
            op.moment_lyapunov(*q)?,
            e.estimate,
            e.stderr
        );
    }
    Ok(())
}
