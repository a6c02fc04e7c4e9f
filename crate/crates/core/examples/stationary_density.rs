//! Stationary density of the annealed chain, checked against a long orbit and,
//! at full noise, against the pushforward of Lebesgue measure.
//!
//! ```bash
//! cargo run --release --example stationary_density
//! ```

use circle_rds::koopman::{l1_to_histogram, orbit_histogram, pushforward_lebesgue, stationary_density};
use circle_rds::{CircleMap, NoiseQuadrature, NoiseStream};

fn main() -> circle_rds::Result<()> {
    let map = CircleMap::example_nu(0.6)?;
    let n = 2048;
    for theta in [0.2, 0.5] {
        let rho = stationary_density(&map, &NoiseQuadrature::standard(theta)?, n, 1e-13, 500)?;
        let hist = orbit_histogram(&map, &mut NoiseStream::new(theta, 5), 4_000_000, 10_000, 128);
        println!(
            "theta = {theta}: integral {:.12}, max {:.4}, L1 to orbit histogram {:.4}",
            rho.integral(),
            rho.sup_norm(),
            l1_to_histogram(&rho, &hist)
        );
        if theta == 0.5 {
            let push = pushforward_lebesgue(&map, n)?;
            let sup = rho
                .values
                .iter()
                .zip(&push.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            println!("  sup distance to the pushforward: {sup:.2e}");
        }
    }
    Ok(())
}
