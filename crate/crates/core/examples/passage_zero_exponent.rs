//! At the noise level where the exponent vanishes, the probability of reaching
//! the lower barrier first is linear in the log position, and the mean stopping
//! time grows like the log-width of the band squared.
//!
//! ```bash
//! cargo run --release --example passage_zero_exponent
//! ```

use circle_rds::passage::{theta_at_zero_exponent, verify_zero_exponent_bounds, ZeroExponentDesign};
use circle_rds::CircleMap;

fn main() -> circle_rds::Result<()> {
    let map = CircleMap::example_nu(0.6)?;
    let theta = theta_at_zero_exponent(&map, 0.12, 0.3, 1024, 192)?;
    println!("zero of the exponent at theta = {theta:.8}");

    // a lighter design than the default
    let design = ZeroExponentDesign {
        deltas: vec![0.05],
        log_ratios: vec![40.0],
        count: 2000,
        ..ZeroExponentDesign::default()
    };
    let r = verify_zero_exponent_bounds(&map, theta, &design)?;
    println!("Birkhoff exponent {:+.5}", r.lambda_hat);
    for c in &r.cells {
        println!(
            "  fraction {:.2}: P(lower first) {:.3}  mean stop {:.0}",
            c.fraction, c.p_minus_hat, c.mean_min_stop
        );
    }
    println!(
        "P against position: slope {:.3}, intercept {:.3}",
        r.probability_fit.slope, r.probability_fit.intercept
    );
    Ok(())
}
