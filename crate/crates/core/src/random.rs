//! Seeded random model generators used by tests, benchmarks and the
//! property suites.

use crate::factored::{
    persistence_cpt, CptTree, DecisionTree, FactoredAction, FactoredMdp, TwoSliceNet, ValueTree,
    VarRef, VariableSpec,
};
use crate::mdp::{ActionRecord, FlatMdp, TransitionMatrix};
use crate::rng::SplitMix64;

/// A random sparse row over `n` states with at most `branching` successors.
pub fn random_row(rng: &mut SplitMix64, n: usize, branching: usize) -> Vec<(usize, f64)> {
    let k = 1 + rng.below(branching.clamp(1, n));
    let mut cols: Vec<usize> = Vec::with_capacity(k);
    while cols.len() < k {
        let j = rng.below(n);
        if !cols.contains(&j) {
            cols.push(j);
        }
    }
    let weights: Vec<f64> = (0..k).map(|_| 0.05 + rng.next_f64()).collect();
    let total: f64 = weights.iter().sum();
    let mut row: Vec<(usize, f64)> = cols.into_iter().zip(weights.iter().map(|w| w / total)).collect();
    row.sort_by_key(|&(j, _)| j);
    row
}

/// Random MDP with up to three successors per row, rewards in `[-1, 1]`
/// and non-positive action costs.
pub fn random_mdp(n: usize, n_actions: usize, seed: u64) -> FlatMdp {
    random_mdp_with_branching(n, n_actions, 3, seed)
}

pub fn random_mdp_with_branching(n: usize, n_actions: usize, branching: usize, seed: u64) -> FlatMdp {
    let mut rng = SplitMix64::new(seed);
    let actions = (0..n_actions)
        .map(|k| {
            let rows = (0..n).map(|_| random_row(&mut rng, n, branching)).collect();
            let mut action = ActionRecord::new(
                format!("a{k}"),
                TransitionMatrix::from_rows(rows),
                -0.5 * rng.next_f64(),
            );
            if rng.next_f64() < 0.5 {
                let s = rng.below(n);
                action.cost_overrides.insert(s, -rng.next_f64());
            }
            action
        })
        .collect();
    let reward = (0..n).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
    FlatMdp {
        states: (0..n).map(|i| format!("s{i}")).collect(),
        actions,
        reward,
        criterion: None,
        initial: None,
    }
}

/// Doubles every state of `mdp`: state `i` becomes clones `2i` and `2i + 1`
/// sharing its reward and costs, and each transition into `j` is split at a
/// random fraction between the two clones of `j`. The clone pairs form a
/// stable partition whose quotient is `mdp` itself.
pub fn clone_duplicate(mdp: &FlatMdp, seed: u64) -> FlatMdp {
    let mut rng = SplitMix64::new(seed);
    let n = mdp.n_states();
    let actions = mdp
        .actions
        .iter()
        .map(|action| {
            let rows = (0..2 * n)
                .map(|c| {
                    action
                        .matrix
                        .row(c / 2)
                        .iter()
                        .flat_map(|&(j, p)| {
                            let f = 0.2 + 0.6 * rng.next_f64();
                            [(2 * j, p * f), (2 * j + 1, p * (1.0 - f))]
                        })
                        .collect()
                })
                .collect();
            let mut record = ActionRecord::new(action.name.clone(), TransitionMatrix::from_rows(rows), action.default_cost);
            for (&s, &c) in &action.cost_overrides {
                record.cost_overrides.insert(2 * s, c);
                record.cost_overrides.insert(2 * s + 1, c);
            }
            record
        })
        .collect();
    FlatMdp {
        states: mdp.states.iter().flat_map(|s| [format!("{s}a"), format!("{s}b")]).collect(),
        actions,
        reward: mdp.reward.iter().flat_map(|&r| [r, r]).collect(),
        criterion: mdp.criterion,
        initial: None,
    }
}

/// Random probability vector of length `n`.
pub fn random_distribution(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.next_f64() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn fresh_test(rng: &mut SplitMix64, n_vars: usize, used: &[usize]) -> Option<usize> {
    let free: Vec<usize> = (0..n_vars).filter(|x| !used.contains(x)).collect();
    (!free.is_empty()).then(|| free[rng.below(free.len())])
}

fn random_bool_cpt(rng: &mut SplitMix64, n_vars: usize, depth: usize, used: &mut Vec<usize>) -> CptTree {
    let test = if depth == 0 || rng.below(3) == 0 {
        None
    } else {
        fresh_test(rng, n_vars, used)
    };
    let Some(test) = test else {
        // occasionally deterministic, which exercises skipped grafts
        let p = match rng.below(4) {
            0 => 1.0,
            1 => 0.0,
            _ => (rng.next_f64() * 100.0).round() / 100.0,
        };
        return DecisionTree::Leaf(vec![p, 1.0 - p]);
    };
    used.push(test);
    let t = random_bool_cpt(rng, n_vars, depth - 1, used);
    let f = random_bool_cpt(rng, n_vars, depth - 1, used);
    used.pop();
    DecisionTree::split(VarRef::pre(test), vec![t, f])
}

fn random_value_tree(rng: &mut SplitMix64, n_vars: usize, depth: usize, used: &mut Vec<usize>) -> ValueTree {
    let test = if depth == 0 || rng.below(4) == 0 {
        None
    } else {
        fresh_test(rng, n_vars, used)
    };
    let Some(test) = test else {
        return DecisionTree::Leaf((rng.next_f64() * 10.0).round() / 2.0);
    };
    used.push(test);
    let t = random_value_tree(rng, n_vars, depth - 1, used);
    let f = random_value_tree(rng, n_vars, depth - 1, used);
    used.pop();
    DecisionTree::split(VarRef::pre(test), vec![t, f])
}

/// Random factored model over boolean variables whose actions are simple
/// networks. Each action rewrites a few variables and leaves the rest
/// persistent.
pub fn random_factored_mdp(n_vars: usize, n_actions: usize, seed: u64) -> FactoredMdp {
    let mut rng = SplitMix64::new(seed);
    let variables = (0..n_vars).map(|i| VariableSpec::boolean(format!("V{i}"))).collect();
    let actions = (0..n_actions)
        .map(|k| {
            let cpts = (0..n_vars)
                .map(|x| {
                    if rng.below(2) == 0 {
                        random_bool_cpt(&mut rng, n_vars, 2, &mut Vec::new())
                    } else {
                        persistence_cpt(x, 2)
                    }
                })
                .collect();
            let cost = if rng.below(2) == 0 {
                DecisionTree::Leaf(-(rng.below(3) as f64) * 0.5)
            } else {
                random_value_tree(&mut rng, n_vars, 1, &mut Vec::new()).map(&mut |v| -v / 5.0)
            };
            FactoredAction::Net(TwoSliceNet {
                name: format!("a{k}"),
                cost,
                cpts,
            })
        })
        .collect();
    let reward = (0..1 + rng.below(2))
        .map(|_| random_value_tree(&mut rng, n_vars, 2, &mut Vec::new()))
        .collect();
    FactoredMdp {
        variables,
        actions,
        reward,
        criterion: None,
    }
}

/// Chain of `n` boolean variables where action `k` sets `X_k` true once
/// `X_{k-1}` holds and only `X_{n-1}` is rewarded. Its value trees grow
/// linearly in `n`.
pub fn chain_family(n: usize) -> FactoredMdp {
    let variables = (0..n).map(|i| VariableSpec::boolean(format!("X{i}"))).collect();
    let actions = (0..n)
        .map(|k| {
            let mut cpts: Vec<CptTree> = (0..n).map(|x| persistence_cpt(x, 2)).collect();
            cpts[k] = if k == 0 {
                DecisionTree::Leaf(vec![1.0, 0.0])
            } else {
                DecisionTree::split(
                    VarRef::pre(k - 1),
                    vec![DecisionTree::Leaf(vec![1.0, 0.0]), persistence_cpt(k, 2)],
                )
            };
            FactoredAction::Net(TwoSliceNet {
                name: format!("set{k}"),
                cost: DecisionTree::Leaf(0.0),
                cpts,
            })
        })
        .collect();
    let reward = vec![DecisionTree::split(
        VarRef::pre(n - 1),
        vec![DecisionTree::Leaf(1.0), DecisionTree::Leaf(0.0)],
    )];
    FactoredMdp {
        variables,
        actions,
        reward,
        criterion: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::validate_mdp;

    #[test]
    fn generated_models_are_valid() {
        for seed in 0..20 {
            let mdp = random_mdp(1 + seed as usize, 3, seed);
            assert!(validate_mdp(&mdp).is_empty());
        }
    }

    #[test]
    fn factored_models_are_valid() {
        for seed in 0..20 {
            random_factored_mdp(4, 3, seed).validate().unwrap();
        }
        chain_family(5).validate().unwrap();
    }

    #[test]
    fn generation_is_reproducible() {
        assert_eq!(random_mdp(7, 2, 42), random_mdp(7, 2, 42));
    }
}
