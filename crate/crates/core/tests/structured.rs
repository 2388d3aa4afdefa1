use dtplan_core::dp::{q_from_value, vi_discounted, vi_finite};
use dtplan_core::factored::{for_each_assignment, ground, FactoredMdp};
use dtplan_core::random::{chain_family, random_factored_mdp};
use dtplan_core::svi::{structured_value_iteration, SviStop};
use proptest::prelude::*;

fn assert_matches_flat_finite(fmdp: &FactoredMdp, horizon: usize) {
    let flat = ground(fmdp).unwrap();
    let sol = vi_finite(&flat, horizon);
    let svi = structured_value_iteration(fmdp, SviStop::Horizon(horizon)).unwrap();
    let last = &sol.values[horizon];
    let q = q_from_value(&flat, &sol.values[horizon - 1], 1.0);
    for_each_assignment(&fmdp.domains(), |s| {
        let i = fmdp.encode(s);
        let v = *svi.value.eval(s).unwrap();
        assert!((v - last.get(i)).abs() <= 1e-9, "state {i}: {v} vs {}", last.get(i));
        let a = *svi.policy.eval(s).unwrap();
        assert!(q.argmax_set(i, 1e-9).contains(&a), "state {i}: action {a} not greedy");
    });
}

#[test]
fn chain_family_values_match_grounding() {
    for n in 1..=6 {
        assert_matches_flat_finite(&chain_family(n), n + 1);
    }
}

#[test]
fn chain_family_trees_stay_linear() {
    for n in 1..=8 {
        let svi = structured_value_iteration(&chain_family(n), SviStop::Horizon(n + 2)).unwrap();
        assert!(svi.leaf_counts.iter().all(|&c| c <= 2 * n + 1), "n = {n}: {:?}", svi.leaf_counts);
    }
}

#[test]
fn discounted_values_match_grounding() {
    for seed in 0..10 {
        let fmdp = random_factored_mdp(4, 3, seed);
        let flat = ground(&fmdp).unwrap();
        let sol = vi_discounted(&flat, 0.9, 1e-6).unwrap();
        let svi = structured_value_iteration(&fmdp, SviStop::Discounted { gamma: 0.9, eps: 1e-6 }).unwrap();
        for_each_assignment(&fmdp.domains(), |s| {
            let i = fmdp.encode(s);
            assert!((svi.value.eval(s).unwrap() - sol.values.get(i)).abs() <= 1e-4);
        });
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn finite_svi_agrees_with_flat(seed in 0u64..10_000, n in 1usize..6, k in 1usize..4, horizon in 1usize..5) {
        assert_matches_flat_finite(&random_factored_mdp(n, k, seed), horizon);
    }
}
