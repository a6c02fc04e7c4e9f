use proptest::prelude::*;

use circle_rds::dynamics::{two_point_step, TwoPointState};
use circle_rds::koopman::{twisted_apply, GridFunction};
use circle_rds::occupation::{distance_histogram, excursion_counts, ExcursionDesign};
use circle_rds::passage::{run_passage_from_points, Band, First};
use circle_rds::stats::Accumulator;
use circle_rds::{distance, wrap, CircleMap, NoiseQuadrature, NoiseStream, QuadratureKind};

fn family() -> impl Strategy<Value = CircleMap> {
    prop_oneof![
        (0.01f64..1.99).prop_map(|nu| CircleMap::example_nu(nu).unwrap()),
        Just(CircleMap::affine_doubling()),
        // DT = 2 - c/30 + c x^2 (1 - x)^2
        (0.0f64..55.0).prop_map(|c| {
            CircleMap::custom_poly_deriv(2.0 - c / 30.0, vec![0.0, 0.0, c, -2.0 * c, c]).unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn derivative_matches_lift_differences(map in family(), x in 0.0f64..1.0) {
        let h = 1e-6;
        let fd = (map.lift(x + h) - map.lift(x - h)) / (2.0 * h);
        let d = map.deriv(x);
        prop_assert!((d - fd).abs() <= 1e-6 * (1.0 + d.abs()), "x = {x}: {d} vs {fd}");
    }

    #[test]
    fn preimages_round_trip(map in family(), y in 0.0f64..1.0) {
        for p in map.preimages(y).unwrap() {
            prop_assert!(distance(map.eval(p), y) <= 1e-10);
        }
    }

    #[test]
    fn example_lift_has_degree_two(nu in 1e-6f64..(2.0 - 1e-6)) {
        let map = CircleMap::example_nu(nu).unwrap();
        prop_assert!((map.lift(1.0) - map.lift(0.0) - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn noise_rule_is_a_probability_on_the_interval(theta in 0.0f64..=0.5, n in 8usize..300, x in 0.0f64..1.0) {
        for kind in [QuadratureKind::GaussLegendre, QuadratureKind::UniformPanel] {
            let q = NoiseQuadrature::new(theta, n, kind).unwrap();
            let (nodes, weights) = q.rule_at(x);
            for (ns, ws) in [(&q.nodes, &q.weights), (&nodes, &weights)] {
                let mut total = Accumulator::default();
                ws.iter().for_each(|&w| total.add(w));
                prop_assert!((total.sum() - 1.0).abs() <= 1e-14);
                prop_assert!(ws.iter().all(|&w| w > 0.0));
                prop_assert!(ns.iter().all(|a| a.abs() <= theta));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn derivative_bounds_hold_below_r_min(x in 0.0f64..1.0, t in 0.0f64..=1.0, sign in prop::bool::ANY) {
        thread_local! {
            static MAP: (CircleMap, circle_rds::MapBounds) = {
                let m = CircleMap::example_nu(0.6).unwrap();
                let b = m.bounds(4096).unwrap();
                (m, b)
            };
        }
        MAP.with(|(map, b)| {
            let d = (t * b.r_min).max(1e-12);
            let y = wrap(x + if sign { d } else { -d });
            let d = distance(x, y);
            let img = distance(map.eval(x), map.eval(y));
            let slack = 1e-12 * (1.0 + img);
            prop_assert!(img >= b.a1 * d - slack && img <= b.a2 * d + slack, "d {d}: image {img}");
            Ok(())
        })?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn diagonal_is_invariant(map in family(), x in 0.0f64..1.0, seed in any::<u64>()) {
        let mut s = NoiseStream::new(0.3, seed);
        let mut st = TwoPointState { x, y: x, n: 0 };
        for _ in 0..1000 {
            st = two_point_step(&map, st, s.next());
            prop_assert_eq!(st.x, st.y);
        }
    }

    #[test]
    fn twisted_operator_preserves_positivity(
        values in prop::collection::vec(1e-3f64..10.0, 256),
        q in -3.0f64..3.0,
        theta in 0.0f64..=0.5,
    ) {
        let map = CircleMap::example_nu(0.6).unwrap();
        let quad = NoiseQuadrature::new(theta, 32, QuadratureKind::GaussLegendre).unwrap();
        // smooth the random values so the spline interpolant stays positive
        let smooth: Vec<f64> = (0..256)
            .map(|i| (values[(i + 255) % 256] + 2.0 * values[i] + values[(i + 1) % 256]) / 4.0)
            .collect();
        let psi = GridFunction::new(smooth).unwrap();
        let out = twisted_apply(&map, &quad, q, &psi).unwrap();
        prop_assert!(out.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn passage_samples_are_consistent(seed in any::<u64>(), x0 in 0.0f64..1.0, k in 1.0f64..4.0) {
        let map = CircleMap::example_nu(0.6).unwrap();
        let bounds = map.bounds(256).unwrap();
        let delta = 0.05;
        let band = Band::new(delta * (-2.0 * k).exp(), delta, &bounds).unwrap();
        let mut s = NoiseStream::new(0.17, seed);
        let max_iter = 2000;
        let p = run_passage_from_points(&map, &bounds, &mut s, x0, wrap(x0 + delta * (-k).exp()), &band, max_iter).unwrap();
        match p.first {
            First::Minus => {
                prop_assert!(p.tau_minus.is_some());
                prop_assert!(p.tau_plus.is_none_or(|t| p.tau_minus.unwrap() < t));
            }
            First::Plus => prop_assert!(p.tau_plus.is_some() && p.tau_minus.is_none()),
            First::Censored => prop_assert_eq!(p.steps, max_iter),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn histogram_totals_and_edges(seed in any::<u64>(), theta in 0.2f64..0.5) {
        let map = CircleMap::example_nu(0.6).unwrap();
        let mut s = NoiseStream::new(theta, seed);
        let h = distance_histogram(&map, &mut s, 0.1, 0.4, 1_000_000, 100, 1e-6, 30).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>(), h.total);
        prop_assert!(h.edges.windows(2).all(|e| e[0] < e[1]));
        let mass = h.cumulative_mass();
        prop_assert!(mass.windows(2).all(|m| m[0] <= m[1]));
    }

    #[test]
    fn excursion_counts_nonincreasing_in_eps(seed in any::<u64>()) {
        let map = CircleMap::example_nu(0.6).unwrap();
        let mut design = ExcursionDesign::geometric(0.05, 0.1, 8, 64);
        design.chains = 4;
        let stats = excursion_counts(&map, &NoiseStream::new(0.17, seed), &design).unwrap();
        // the eps grid is decreasing, so counts may only grow along it
        for e in &stats.excursions {
            prop_assert!(e.counts.windows(2).all(|c| c[0] <= c[1]));
        }
    }
}
