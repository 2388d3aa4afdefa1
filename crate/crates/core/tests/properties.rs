use std::collections::BTreeSet;

use proptest::prelude::*;

use dtplan_core::abstraction::{
    initial_partition, lift_solution, quotient, refine_partition, relevant_closure,
};
use dtplan_core::chain::{classify_chain, induce_chain, is_closed};
use dtplan_core::dp::vi_finite;
use dtplan_core::io::{emit_flat, parse_flat};
use dtplan_core::mdp::StationaryPolicy;
use dtplan_core::random::{clone_duplicate, random_factored_mdp, random_mdp};
use dtplan_core::search::{reachable_set, restrict_mdp};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closure_is_monotone_and_idempotent(seed in any::<u64>(), n in 2usize..7, mask in any::<u8>()) {
        let fmdp = random_factored_mdp(n, 3, seed);
        let small: BTreeSet<usize> = (0..n).filter(|i| mask >> i & 1 == 1).take(1).collect();
        let large: BTreeSet<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let c_small = relevant_closure(&fmdp, &small).unwrap();
        let c_large = relevant_closure(&fmdp, &large).unwrap();
        prop_assert!(small.is_subset(&c_small));
        prop_assert!(c_small.is_subset(&c_large));
        prop_assert_eq!(relevant_closure(&fmdp, &c_large).unwrap(), c_large);
    }

    #[test]
    fn refinement_is_stable_and_refines(seed in any::<u64>(), n in 2usize..14) {
        let mut mdp = random_mdp(n, 2, seed);
        // coarse rewards so that refinement has work to do
        for r in &mut mdp.reward {
            *r = if *r > 0.0 { 1.0 } else { 0.0 };
        }
        for a in &mut mdp.actions {
            a.cost_overrides.clear();
            a.default_cost = 0.0;
        }
        let p0 = initial_partition(&mdp, 1e-9);
        let p = refine_partition(&mdp, &p0, 1e-9).unwrap();
        prop_assert_eq!(refine_partition(&mdp, &p, 1e-9).unwrap(), p.clone());
        let coarse = p0.block_of();
        let fine = p.block_of();
        for s in 0..n {
            for t in 0..n {
                if fine[s] == fine[t] {
                    prop_assert_eq!(coarse[s], coarse[t]);
                }
            }
        }
        prop_assert!(quotient(&mdp, &p, 1e-9).is_ok());
    }

    #[test]
    fn lifted_quotient_values_match(seed in any::<u64>(), n in 2usize..10) {
        let base = random_mdp(n, 3, seed);
        let doubled = clone_duplicate(&base, seed ^ 0x5eed);
        let p = refine_partition(&doubled, &initial_partition(&doubled, 1e-9), 1e-9).unwrap();
        let q = quotient(&doubled, &p, 1e-9).unwrap();
        let small = vi_finite(&q, 6);
        let big = vi_finite(&doubled, 6);
        let (_, lifted) = lift_solution(&StationaryPolicy::new(small.policy.by_stage[5].clone()), &small.values[6], &p);
        for s in 0..doubled.n_states() {
            prop_assert!((lifted.get(s) - big.values[6].get(s)).abs() <= 1e-9);
        }
    }

    #[test]
    fn reachable_sets_are_closed(seed in any::<u64>(), n in 1usize..20, start in any::<usize>()) {
        let mdp = random_mdp(n, 2, seed);
        let init = BTreeSet::from([start % n]);
        let reach = reachable_set(&mdp, &init).unwrap();
        prop_assert!(reach.contains(&(start % n)));
        for &s in &reach {
            for a in 0..mdp.n_actions() {
                for &(t, p) in mdp.row(a, s) {
                    prop_assert!(p == 0.0 || reach.contains(&t));
                }
            }
        }
        let (sub, map) = restrict_mdp(&mdp, &reach).unwrap();
        prop_assert_eq!(sub.n_states(), reach.len());
        prop_assert_eq!(map.len(), reach.len());
    }

    #[test]
    fn chain_classes_partition_states(seed in any::<u64>(), n in 1usize..16) {
        let mdp = random_mdp(n, 2, seed);
        let policy = StationaryPolicy::new((0..n).map(|s| s % 2).collect());
        let chain = induce_chain(&mdp, &policy);
        let cs = classify_chain(&chain, 0.0);
        prop_assert!(!cs.recurrent_classes.is_empty());
        let mut covered = cs.transient.clone();
        for class in &cs.recurrent_classes {
            prop_assert!(is_closed(&chain, class, 0.0));
            prop_assert!(class.is_disjoint(&covered));
            covered.extend(class);
        }
        prop_assert_eq!(covered.len(), n);
        for &s in &cs.absorbing {
            prop_assert!(cs.recurrent_classes.contains(&BTreeSet::from([s])));
        }
    }

    #[test]
    fn flat_text_round_trips(seed in any::<u64>(), n in 1usize..12) {
        let mdp = random_mdp(n, 3, seed);
        let text = emit_flat(&mdp);
        let back = parse_flat(&text).unwrap();
        prop_assert_eq!(&back, &mdp);
        prop_assert_eq!(emit_flat(&back), text);
    }
}
