//! Property tests of the structural invariants across modules.

use std::collections::HashSet;

use proptest::prelude::*;
use sgp_core::bowen::pressure_at_t;
use sgp_core::kernel::{birkhoff_sum, in_bowen_ball, orbit_segment};
use sgp_core::localmeasure::{local_pressure, LocalOptions, MeasureModel};
use sgp_core::lyapunov::lyapunov_word;
use sgp_core::pressure::{capacity_pressure, partition_table, Schedule, Variant};
use sgp_core::sets::{discretize, maximal_separated, RegionSpec, SampleCloud, WordOrbits};
use sgp_core::sets::{covers_all, maximal_separated_positions};
use sgp_core::systems::potential_sup_distance;
use sgp_core::words::{enumerate_words, is_suffix_le, sample_words};
use sgp_core::{Alphabet, ConformalMap, MapKind, MetricMode, Potential, SemigroupSystem, Word};

fn unit(h: f64) -> SampleCloud {
    discretize(&RegionSpec::Interval { a: 0.0, b: 1.0 }, h).unwrap()
}

fn word(m: usize, v: &[u8]) -> Word {
    Word::new(Alphabet::new(m).unwrap(), v.to_vec()).unwrap()
}

fn any_map() -> impl Strategy<Value = ConformalMap> {
    prop_oneof![
        (2u32..6).prop_map(ConformalMap::linear),
        (0.05f64..0.95).prop_map(ConformalMap::manneville_pomeau),
        prop::collection::vec(1.5f64..4.0, 1..4).prop_map(|mut s| {
            // rescale the last branch so widths sum to one
            let used: f64 = s.iter().map(|a| 1.0 / a).sum();
            if used >= 1.0 {
                s = vec![2.0, 2.0];
            } else {
                s.push(1.0 / (1.0 - used));
            }
            ConformalMap::new(MapKind::PiecewiseLinearFull { slopes: s }).unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_is_complete(m in 1usize..4, n in 1usize..6) {
        let words = enumerate_words(Alphabet::new(m).unwrap(), n, 1 << 12).unwrap();
        let distinct: HashSet<Vec<u8>> = words.iter().map(|w| w.symbols().to_vec()).collect();
        prop_assert_eq!(words.len(), m.pow(n as u32));
        prop_assert_eq!(distinct.len(), words.len());
    }

    #[test]
    fn sampling_is_reproducible(n in 1usize..20, k in 1usize..40, seed in any::<u64>()) {
        let a = Alphabet::new(3).unwrap();
        prop_assert_eq!(sample_words(a, n, k, seed), sample_words(a, n, k, seed));
    }

    #[test]
    fn suffix_order_is_reflexive_and_transitive(
        a in prop::collection::vec(0u8..3, 0..6),
        b in prop::collection::vec(0u8..3, 0..6),
        c in prop::collection::vec(0u8..3, 0..6),
    ) {
        prop_assert!(is_suffix_le(&a, &a));
        if is_suffix_le(&a, &b) && is_suffix_le(&b, &c) {
            prop_assert!(is_suffix_le(&a, &c));
        }
    }

    #[test]
    fn factors_positive_and_maps_total(map in any_map(), x in 0.0f64..1.0) {
        let f = map.factor(x);
        prop_assert!(f > 0.0 && f.is_finite());
        let y = map.apply(x);
        prop_assert!((0.0..1.0).contains(&y));
        prop_assert_eq!(y.to_bits(), map.apply(x).to_bits());
        if matches!(map.kind(), MapKind::MannevillePomeau { .. }) {
            prop_assert!(f >= 1.0);
        }
    }

    #[test]
    fn birkhoff_additivity(
        a in prop::collection::vec(0u8..2, 1..6),
        b in prop::collection::vec(0u8..2, 1..6),
        x in 0.0f64..1.0,
        t in -2.0f64..2.0,
    ) {
        let sys = SemigroupSystem::uniform(
            vec![ConformalMap::linear(3), ConformalMap::manneville_pomeau(0.5)],
            Potential::ScaledLogFactor(t),
            MetricMode::Circle,
        ).unwrap();
        let (wa, wb) = (word(2, &a), word(2, &b));
        let y = orbit_segment(&sys, &wa, x).last();
        let whole = birkhoff_sum(&sys, &wa.concat(&wb), x);
        prop_assert!((whole - birkhoff_sum(&sys, &wa, x) - birkhoff_sum(&sys, &wb, y)).abs() < 1e-9);
        let log = sys.with_log_factor();
        let lam = lyapunov_word(&log, &wa.concat(&wb), x) * (a.len() + b.len()) as f64;
        prop_assert!((lam - lyapunov_word(&log, &wa, x) * a.len() as f64 - birkhoff_sum(&log, &wb, y)).abs() < 1e-9);
    }

    /// Extending a word only shrinks its Bowen balls.
    #[test]
    fn balls_nest_under_extension(
        a in prop::collection::vec(0u8..2, 1..5),
        b in prop::collection::vec(0u8..2, 1..5),
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
        delta in 0.01f64..0.3,
    ) {
        let sys = SemigroupSystem::linear(&[2, 3]).unwrap();
        let short = word(2, &a);
        let long = short.concat(&word(2, &b));
        if in_bowen_ball(&sys, &long, x, delta, y) {
            prop_assert!(in_bowen_ball(&sys, &short, x, delta, y));
        }
    }

    /// For constant slopes the ball is the arc of radius `delta e^{-n lambda}`.
    #[test]
    fn linear_ball_radius(
        v in prop::collection::vec(0u8..2, 1..6),
        x in 0.0f64..1.0,
        u in -1.0f64..1.0,
        delta in 0.01f64..0.1,
    ) {
        let sys = SemigroupSystem::linear(&[2, 3]).unwrap();
        let w = word(2, &v);
        let radius = delta * (-(v.len() as f64) * lyapunov_word(&sys, &w, x)).exp();
        let inside = (x + 0.999 * radius * u).rem_euclid(1.0);
        prop_assert!(in_bowen_ball(&sys, &w, x, delta, inside));
        let y = (x + 2.0 * radius * u).rem_euclid(1.0);
        if in_bowen_ball(&sys, &w, x, delta, y) {
            prop_assert!(sys.distance(x, y) <= radius * (1.0 + 1e-9));
        }
    }

    /// Maximal separated sets span, and shrink as the scale grows.
    #[test]
    fn separated_sets_span_and_shrink(
        v in prop::collection::vec(0u8..2, 1..5),
        e1 in 0.02f64..0.2,
        e2 in 0.02f64..0.2,
    ) {
        let sys = SemigroupSystem::linear(&[2, 3]).unwrap();
        let cloud = unit(1.0 / 512.0);
        let w = word(2, &v);
        let orbits = WordOrbits::new(&sys, &cloud, w.symbols());
        let balls = orbits.balls(e1, false);
        let sums = vec![0.0; cloud.len()];
        let chosen = maximal_separated_positions(&balls, &sums);
        prop_assert!(covers_all(&balls, &chosen));
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let small = maximal_separated(&sys, &w, &cloud, lo).unwrap().len();
        let large = maximal_separated(&sys, &w, &cloud, hi).unwrap().len();
        prop_assert!(small >= large, "{} < {}", small, large);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn lipschitz_in_constant_shifts(a in prop::collection::vec(-1.0f64..1.0, 2), b in prop::collection::vec(-1.0f64..1.0, 2)) {
        let base = SemigroupSystem::linear(&[2, 3]).unwrap().with_potential(Potential::ScaledLogFactor(-0.5));
        let (phi, psi) = (base.with_constant_shifts(&a).unwrap(), base.with_constant_shifts(&b).unwrap());
        let cloud = unit(1.0 / 2048.0);
        let sched = Schedule::new(vec![2, 3, 4], vec![0.1]);
        let pa = capacity_pressure(&phi, &cloud, &sched, Variant::Spanning).unwrap().value;
        let pb = capacity_pressure(&psi, &cloud, &sched, Variant::Spanning).unwrap().value;
        prop_assert!((pa - pb).abs() <= potential_sup_distance(&phi, &psi, 64).unwrap() + 0.02);
    }

    #[test]
    fn subsets_have_smaller_pressure(a in 0.0f64..0.5, len in 0.2f64..0.5) {
        let sys = SemigroupSystem::linear(&[2, 4]).unwrap();
        let h = 1.0 / 4096.0;
        let part = discretize(&RegionSpec::Interval { a, b: a + len }, h).unwrap();
        let whole = unit(h);
        let sched = Schedule::new(vec![2, 3, 4], vec![0.1]);
        for v in [Variant::Spanning, Variant::Separated] {
            let p = capacity_pressure(&sys, &part, &sched, v).unwrap().value;
            let q = capacity_pressure(&sys, &whole, &sched, v).unwrap().value;
            prop_assert!(p <= q + 0.02, "{v}: {p} > {q}");
        }
    }

    #[test]
    fn local_lower_below_upper(x in 0.0f64..1.0, seed in any::<u64>()) {
        let sys = SemigroupSystem::linear(&[2, 3]).unwrap().with_potential(Potential::ScaledLogFactor(-0.5));
        let opts = LocalOptions::new(vec![2, 4, 6], vec![0.1, 0.05]).with_seed(seed);
        let r = local_pressure(&MeasureModel::lebesgue(1000).unwrap(), &sys, x, &opts).unwrap();
        for c in &r.cells {
            prop_assert!(c.lower <= c.upper);
        }
    }
}

#[test]
fn per_cell_sandwich_and_invariant_set() {
    let sys = SemigroupSystem::linear(&[2, 3]).unwrap().with_potential(Potential::ScaledLogFactor(-0.3));
    let cloud = unit(1.0 / 16384.0);
    let sched = Schedule::new(vec![2, 3, 4, 5], vec![0.1, 0.05]);
    let table = partition_table(&sys, &cloud, &sched).unwrap();
    assert_eq!(table.sandwich_violations(), 0);
    let est = capacity_pressure(&sys, &cloud, &sched, Variant::Spanning).unwrap();
    for f in &est.fits {
        assert!(f.limsup - f.liminf < 0.05, "{f:?}");
    }
}

#[test]
fn traces_decrease() {
    let sys = SemigroupSystem::linear(&[2, 3]).unwrap();
    let cloud = unit(1.0 / 8192.0);
    let sched = Schedule::new(vec![2, 3, 4], vec![0.1, 0.05]);
    let trace: Vec<f64> = (0..6).map(|k| pressure_at_t(&sys, &cloud, 0.4 * k as f64, &sched).unwrap().value).collect();
    assert!(trace.windows(2).all(|w| w[1] < w[0] + 0.02), "{trace:?}");
}
