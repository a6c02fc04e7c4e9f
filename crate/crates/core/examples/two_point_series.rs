//! Distance between two orbits driven by the same noise, in the three regimes.
//!
//! ```bash
//! cargo run --release --example two_point_series
//! ```

use circle_rds::dynamics::distance_series;
use circle_rds::{CircleMap, NoiseStream};

fn main() -> circle_rds::Result<()> {
    let map = CircleMap::example_nu(0.6)?;
    for theta in [0.1, 0.17, 0.2] {
        let mut s = NoiseStream::new(theta, 11);
        let ds = distance_series(&map, &mut s, 0.1, 0.4, 200_000, 0.1)?;
        let near = ds.d.iter().filter(|&&d| d < 1e-3).count() as f64 / ds.d.len() as f64;
        println!(
            "theta = {theta}: time average {:.4}, tail min {:.2e}, tail max {:.3}, \
             fraction below 1e-3 {near:.3}, merged at {:?}",
            ds.time_avg, ds.tail_min, ds.tail_max, ds.merged_at
        );
    }
    Ok(())
}
