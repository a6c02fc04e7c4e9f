//! Hypothesis checks for a few maps, printed as JSON.
//!
//! ```bash
//! cargo run --release --example preflight
//! ```

use circle_rds::hypothesis::{check_logbound, preflight, PreflightSettings};
use circle_rds::CircleMap;

fn main() -> circle_rds::Result<()> {
    let settings = PreflightSettings::default();
    let cases = [
        (CircleMap::example_nu(0.6)?, 0.2),
        (CircleMap::example_nu(0.6)?, 1e-4),
        (CircleMap::affine_doubling(), 0.2),
    ];
    for (map, theta) in &cases {
        let r = preflight(map, *theta, &settings)?;
        println!("{} at theta = {theta}: {:?}", r.family, r.verdicts());
    }

    let r = preflight(&cases[0].0, 0.2, &settings)?;
    println!("{}", serde_json::to_string_pretty(&r).expect("report serialises"));

    for r in [0.2, 0.05, 0.02] {
        let b = check_logbound(&cases[0].0, 0.2, r, 64)?;
        println!("max of E[-ln d(T x, T y)] over pairs at distance >= {r}: {:.4}", b.max_expectation);
    }
    Ok(())
}
