use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use satdesign::discovery::{
    discovery_future, discovery_now, log_likelihood, penalized_objective, PYParams, PartitionCounts, DELTA,
    THETA_MAX,
};
use satdesign::factorial::{apply_isomorphism, d_efficiency, DesignProblem, FactorSpace, ModelSpec};
use satdesign::optimizer::random_saturated_design;
use satdesign::species::{classify, FrequencyVector, SpeciesKey, SpeciesLedger};

fn mixed_problem() -> DesignProblem {
    let space: FactorSpace = "3,2,2".parse().unwrap();
    let model = ModelSpec::parse("main+2fi", &space).unwrap();
    DesignProblem::new(space, model).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ledger_ignores_arrival_order(stream in prop::collection::vec(0u64..12, 1..80), seed in any::<u64>()) {
        let keys: Vec<SpeciesKey> = stream.iter().map(|&k| SpeciesKey::from_efficiency(60.0 + k as f64)).collect();
        let mut a = SpeciesLedger::new();
        for (s, k) in keys.iter().enumerate() {
            a.record_key(*k, s as u64 + 1);
        }
        let mut b = SpeciesLedger::new();
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for (s, i) in order.into_iter().enumerate() {
            b.record_key(keys[i], s as u64 + 1);
        }
        prop_assert_eq!(a.n(), b.n());
        prop_assert_eq!(a.j(), b.j());
        prop_assert_eq!(a.frequency_vector().unwrap(), b.frequency_vector().unwrap());
        let ka: Vec<_> = a.entries().map(|(k, e)| (*k, e.count)).collect();
        let kb: Vec<_> = b.entries().map(|(k, e)| (*k, e.count)).collect();
        prop_assert_eq!(ka, kb);
        let fv = a.frequency_vector().unwrap();
        prop_assert_eq!(fv.n(), stream.len() as u64);
    }

    #[test]
    fn penalty_vanishes_on_feasible_points(
        pairs in prop::collection::btree_map(1u64..30, 1u64..6, 1..6),
        sigma in DELTA..=1.0 - DELTA,
        theta_frac in 0.0f64..1.0,
    ) {
        let pairs: Vec<(u64, u64)> = pairs.into_iter().collect();
        let counts = PartitionCounts::from(&FrequencyVector::from_pairs(&pairs).unwrap());
        let theta = -sigma + 1e-9 + theta_frac * (THETA_MAX + sigma - 1e-9);
        prop_assume!(theta <= THETA_MAX);
        let ll = log_likelihood(sigma, theta, &counts).unwrap();
        prop_assert_eq!(penalized_objective(sigma, theta, &counts).unwrap(), ll);
    }

    #[test]
    fn discovery_probability_is_a_decreasing_probability(
        sigma in 0.01f64..0.99,
        theta_off in 0.001f64..200.0,
        n in 1u64..400,
        j_frac in 0.0f64..1.0,
    ) {
        let theta = -sigma + theta_off;
        let j = 1 + ((n - 1) as f64 * j_frac) as u64;
        let p = PYParams::new(sigma, theta).unwrap();
        let u0 = discovery_now(p, n, j);
        prop_assert!(u0 > 0.0 && u0 < 1.0);
        let mut prev = u0;
        for m in [1u64, 10, 100, 1000] {
            let u = discovery_future(p, n, j, m);
            prop_assert!(u > 0.0 && u < prev);
            prev = u;
        }
    }

    #[test]
    fn efficiency_increases_with_d(a in 1e-3f64..1e40, b in 1e-3f64..1e40, p in 1usize..60) {
        prop_assume!(a < b * (1.0 - 1e-9));
        prop_assert!(d_efficiency(a, p) < d_efficiency(b, p));
    }

    #[test]
    fn relabeling_keeps_d_on_a_mixed_space(seed in any::<u64>()) {
        let pr = mixed_problem();
        prop_assert_eq!(pr.p(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = random_saturated_design(&pr, &mut rng).unwrap();
        prop_assert!(design.d_value() > 0.0);
        let mut rows: Vec<usize> = (0..10).collect();
        rows.shuffle(&mut rng);
        // only the two 2-level factors may trade places
        let factors = if rng.random_bool(0.5) { vec![0, 2, 1] } else { vec![0, 1, 2] };
        let mut switches: Vec<Vec<usize>> = vec![(0..3).collect(), (0..2).collect(), (0..2).collect()];
        for sw in &mut switches {
            sw.shuffle(&mut rng);
        }
        let t = apply_isomorphism(&pr, &design, &rows, &factors, &switches).unwrap();
        let (d0, d1) = (design.d_value(), t.d_value());
        prop_assert!((d0 - d1).abs() <= 1e-9 * d0.max(d1), "{} vs {}", d0, d1);
        prop_assert_eq!(classify(&design, 10), classify(&t, 10));
    }
}
