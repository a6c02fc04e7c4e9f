//! Lyapunov exponent of the noisy map over a range of noise levels.
//!
//! ```bash
//! cargo run --release --example lyapunov_sweep
//! ```

use circle_rds::dynamics::lyapunov_birkhoff;
use circle_rds::{CircleMap, NoiseStream};

fn main() -> circle_rds::Result<()> {
    let map = CircleMap::example_nu(0.6)?;
    let n = 2_000_000;

    println!("{:>6} {:>10} {:>9}", "theta", "lambda", "stderr");
    for k in 0..=8 {
        let theta = 0.1 + 0.05 * k as f64;
        let mut s = NoiseStream::new(theta, 1);
        let e = lyapunov_birkhoff(&map, &mut s, None, n, 10_000)?;
        println!("{theta:>6.2} {:>10.4} {:>9.4}", e.lambda_hat, e.stderr);
    }

    // the affine doubling map has constant derivative 2
    let affine = CircleMap::affine_doubling();
    let e = lyapunov_birkhoff(&affine, &mut NoiseStream::new(0.3, 1), None, 100_000, 0)?;
    println!("affine: {:.6} (ln 2 = {:.6})", e.lambda_hat, 2f64.ln());
    Ok(())
}
