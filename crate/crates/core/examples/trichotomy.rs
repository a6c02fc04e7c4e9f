//! Classify the long-run behaviour of two-point distances by noise level.
//!
//! ```bash
//! cargo run --release --example trichotomy
//! ```

use circle_rds::dynamics::{trichotomy_report, TrichotomyConfig};
use circle_rds::CircleMap;

fn main() -> circle_rds::Result<()> {
    let map = CircleMap::example_nu(0.6)?;
    let cfg = TrichotomyConfig {
        n: 200_000,
        ensemble: 32,
        ..TrichotomyConfig::default()
    };
    for theta in [0.1, 0.1698964978, 0.3] {
        let r = trichotomy_report(&map, theta, &cfg)?;
        println!(
            "theta = {theta:.4}: {:?}  lambda {:+.4} +- {:.4}  median time average {:.4}",
            r.regime, r.lambda_hat, r.stderr, r.median_time_avg
        );
    }
    Ok(())
}
