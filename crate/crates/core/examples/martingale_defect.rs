//! The derivative of the moment eigenfunctions at zero corrects ln d into a
//! function whose expected increment is the Lyapunov exponent, up to a defect
//! that shrinks with the distance.
//!
//! ```bash
//! cargo run --release --example martingale_defect
//! ```

use circle_rds::koopman::{d_q_phi0, MartingaleDefect, TwistedOperator};
use circle_rds::{CircleMap, NoiseQuadrature};

fn main() -> circle_rds::Result<()> {
    let map = CircleMap::example_nu(0.6)?;
    let op = TwistedOperator::new(&map, &NoiseQuadrature::standard(0.2)?, 1024)?;
    let lambda0 = d_q_phi0(&op, 1e-3)?.lambda;
    let m = MartingaleDefect::new(&op, 1e-3, lambda0)?;
    println!("lambda0 = {lambda0:.6}, eigen-identity residual {:.2e}", m.dq_phi0().residual);

    let x = 0.3;
    for k in 1..=6 {
        let d = m.max_distance() * 4f64.powi(-k);
        println!("  d = {d:.2e}: defect {:.3e}", m.defect(x, x + d)?);
    }
    Ok(())
}
