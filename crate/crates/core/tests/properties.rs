//! Invariants checked over generated inputs.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shaplit_core::bounds::exact::{DiscreteToy, Q};
use shaplit_core::bounds::{global_rejects, global_test, pairwise_p_limit};
use shaplit_core::experiments::EcdfSeries;
use shaplit_core::games::{
    binomial, exact_shapley, exact_shapley_all, min_weight_exact, permutation_shapley,
    shapley_weight_exact, Coalition, CooperativeGame, TabularGame,
};
use shaplit_core::masking::Partition;
use shaplit_core::testing::{p_value, GammaEstimate};

fn table(players: usize) -> impl Strategy<Value = TabularGame> {
    prop::collection::vec(-1.0f64..1.0, 1 << players)
        .prop_map(move |values| TabularGame::new(players, values).unwrap())
}

fn sized_table() -> impl Strategy<Value = TabularGame> {
    (1usize..=6).prop_flat_map(table)
}

proptest! {
    #[test]
    fn exact_matches_permutations(game in sized_table()) {
        for j in 0..game.players() {
            let exact = exact_shapley(&game, j).unwrap().phi;
            let perm = permutation_shapley(&game, j).unwrap();
            prop_assert!((exact - perm).abs() <= 1e-10, "{exact} vs {perm}");
        }
    }

    #[test]
    fn values_are_efficient(game in sized_table()) {
        let n = game.players();
        let total: f64 = exact_shapley_all(&game).unwrap().iter().map(|r| r.phi).sum();
        let full = game.value(Coalition::full(n).unwrap()).unwrap();
        let empty = game.value(Coalition::empty(n).unwrap()).unwrap();
        prop_assert!((total - (full - empty)).abs() <= 1e-10);
    }

    #[test]
    fn stored_summands_rebuild_phi(game in sized_table(), j in 0usize..6) {
        let j = j % game.players();
        let r = exact_shapley(&game, j).unwrap();
        prop_assert_eq!(r.contributions.len(), 1 << (game.players() - 1));
        prop_assert!((r.recompute_phi() - r.phi).abs() <= 1e-12);
    }

    #[test]
    fn shapley_is_linear(a in table(4), b in table(4), s in -2.0f64..2.0) {
        let sum = TabularGame::new(4, a.values().iter().zip(b.values()).map(|(x, y)| x + s * y).collect()).unwrap();
        for j in 0..4 {
            let lhs = exact_shapley(&sum, j).unwrap().phi;
            let rhs = exact_shapley(&a, j).unwrap().phi + s * exact_shapley(&b, j).unwrap().phi;
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }
    }

    #[test]
    fn weights_sum_to_one(n in 1usize..=20) {
        let mut total = 0.0;
        for s in 0..n {
            let w = shapley_weight_exact(n, s).unwrap();
            let count = binomial(n as u64 - 1, s as u64);
            // every size class carries exactly 1/n
            prop_assert_eq!(w.denom, n as u128 * count);
            total += count as f64 * w.value();
        }
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn min_weight_is_the_smallest(n in 1usize..=20) {
        let min = min_weight_exact(n).unwrap().denom;
        let largest = (0..n).map(|s| shapley_weight_exact(n, s).unwrap().denom).max().unwrap();
        prop_assert_eq!(min, largest);
    }

    #[test]
    fn coalition_algebra(n in 1usize..=64, bits in any::<u64>(), p in 0usize..64) {
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let c = Coalition::from_bits(n, bits & mask).unwrap();
        let p = p % n;
        prop_assert_eq!(c.complement().complement(), c);
        prop_assert!(c.with(p).contains(p));
        prop_assert!(!c.without(p).contains(p));
        prop_assert_eq!(c.members().count(), c.len());
        prop_assert!(c.without(p).is_subset_of(c));
        prop_assert_eq!(c.len() + c.complement().len(), n);
    }

    #[test]
    fn p_value_lies_on_the_grid(t in -1.0f64..2.0, nulls in prop::collection::vec(0.0f64..1.0, 1..200)) {
        let k = nulls.len();
        let p = p_value(t, &nulls);
        prop_assert!(p >= 1.0 / (k + 1) as f64 && p <= 1.0);
        let scaled = p * (k + 1) as f64;
        prop_assert!((scaled - scaled.round()).abs() < 1e-9);
        // a larger statistic can only lower the p-value
        prop_assert!(p_value(t + 0.1, &nulls) <= p);
    }

    #[test]
    fn gamma_estimate_is_sane(diffs in prop::collection::vec(-1.0f64..=1.0, 1..300)) {
        let g = GammaEstimate::from_differences(&diffs);
        prop_assert!((-1.0..=1.0).contains(&g.gamma_hat));
        prop_assert!(g.std_error >= 0.0);
        prop_assert!(g.p_hat_limit + g.p_hat_limit_flipped >= 1.0 - 1e-12);
        if diffs.len() >= 2 {
            prop_assert!(g.std_error > 0.0);
        }
    }

    #[test]
    fn pairwise_limit_is_a_probability(
        with in prop::collection::vec(0.0f64..1.0, 1..50),
        without in prop::collection::vec(0.0f64..1.0, 1..50),
    ) {
        let (p, se) = pairwise_p_limit(&with, &without);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(se >= 0.0);
    }

    #[test]
    fn exact_bounds_hold(seed in any::<u64>(), n in 1usize..=4, x in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let toy = DiscreteToy::random(n, &mut rng).unwrap();
        let x = x & ((1 << n) - 1);
        let one = Q::from_integer(1);
        for j in 0..n {
            let records = toy.records(x, j).unwrap();
            for r in &records {
                prop_assert!(r.p <= one - r.gamma);
            }
            prop_assert!(DiscreteToy::weighted_p(&records) <= one - DiscreteToy::phi(&records));
        }
    }

    #[test]
    fn global_rule_matches_threshold(phi in 0.0f64..=1.0, alpha in 0.001f64..0.5) {
        let records: Vec<_> = Coalition::excluding(2, 0).unwrap().map(|c| (c, 0.5, 1.0 - phi)).collect();
        let g = global_test(0, phi, &records, alpha).unwrap();
        prop_assert_eq!(g.reject, phi >= 1.0 - alpha / 2.0);
        prop_assert_eq!(g.reject, global_rejects(phi, alpha));
        prop_assert!((g.p_global - 2.0 * g.weighted_p).abs() < 1e-15);
    }

    #[test]
    fn partition_masks_cover_groups(sizes in prop::collection::vec(1usize..4, 1..6), bits in any::<u64>()) {
        let mut groups = Vec::new();
        let mut next = 0;
        for s in &sizes {
            groups.push((next..next + s).collect::<Vec<_>>());
            next += s;
        }
        let players = sizes.len();
        let partition = Partition::new(next, groups.clone()).unwrap();
        let c = Coalition::from_bits(players, bits & ((1 << players) - 1)).unwrap();
        let mask = partition.feature_mask(c).unwrap();
        for (p, g) in groups.iter().enumerate() {
            for &i in g {
                prop_assert_eq!(mask[i], c.contains(p));
            }
        }
    }

    #[test]
    fn ecdf_is_monotone(values in prop::collection::vec(0.0f64..=1.0, 0..100)) {
        let e = EcdfSeries::new("v", values.clone());
        prop_assert!(e.is_valid());
        for &v in &values {
            let direct = values.iter().filter(|&&u| u <= v).count() as f64 / values.len() as f64;
            prop_assert!((e.at(v) - direct).abs() < 1e-12);
        }
    }
}
