use std::collections::BTreeMap;

use super::model::{FactoredAction, FactoredMdp, ProbStripsOp, TwoSliceNet, GROUNDING_CAP};
use super::tree::for_each_assignment;
use crate::error::{Error, Result};
use crate::mdp::{most_frequent, ActionRecord, FlatMdp, TransitionMatrix};

/// Successor distribution of a PSO: the selected context's change sets
/// applied to `state`, coinciding successors merged. Sorted by successor.
pub fn apply_pso(op: &ProbStripsOp, state: &[usize]) -> Result<Vec<(Vec<usize>, f64)>> {
    let outcomes = op.context.eval(state)?;
    let mut dist: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for o in outcomes {
        if o.prob > 0.0 {
            *dist.entry(o.apply(state)).or_insert(0.0) += o.prob;
        }
    }
    Ok(dist.into_iter().collect())
}

/// Successor distribution of a two-slice net by the chain rule over the
/// synchronic order. Sorted by successor.
pub fn net_successors(
    net: &TwoSliceNet,
    domains: &[usize],
    state: &[usize],
) -> Result<Vec<(Vec<usize>, f64)>> {
    let order = net.synchronic_order()?;
    let mut partial: Vec<(Vec<Option<usize>>, f64)> = vec![(vec![None; domains.len()], 1.0)];
    for &x in &order {
        let mut next = Vec::with_capacity(partial.len() * domains[x]);
        for (post, p) in &partial {
            let dist = net.cpts[x].eval_with(state, post)?;
            for (v, &q) in dist.iter().enumerate() {
                if q > 0.0 {
                    let mut post = post.clone();
                    post[x] = Some(v);
                    next.push((post, p * q));
                }
            }
        }
        partial = next;
    }
    let mut dist: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for (post, p) in partial {
        let full: Vec<usize> = post.into_iter().map(|v| v.expect("every variable assigned")).collect();
        *dist.entry(full).or_insert(0.0) += p;
    }
    Ok(dist.into_iter().collect())
}

pub fn action_successors(
    fmdp: &FactoredMdp,
    action: &FactoredAction,
    state: &[usize],
) -> Result<Vec<(Vec<usize>, f64)>> {
    match action {
        FactoredAction::Net(net) => net_successors(net, &fmdp.domains(), state),
        FactoredAction::Pso(op) => apply_pso(op, state),
    }
}

pub fn ground(fmdp: &FactoredMdp) -> Result<FlatMdp> {
    ground_with_cap(fmdp, GROUNDING_CAP)
}

/// Enumerates the factored model into a flat one, states in lexicographic
/// order of the variable declarations.
pub fn ground_with_cap(fmdp: &FactoredMdp, cap: u128) -> Result<FlatMdp> {
    let count = fmdp.state_count();
    if count > cap {
        return Err(Error::TooLarge { states: count, cap });
    }
    fmdp.validate()?;
    let domains = fmdp.domains();
    let mut states = Vec::with_capacity(count as usize);
    let mut assignments = Vec::with_capacity(count as usize);
    for_each_assignment(&domains, |s| {
        states.push(fmdp.state_name(s));
        assignments.push(s.to_vec());
    });
    let reward = assignments
        .iter()
        .map(|s| fmdp.reward_at(s))
        .collect::<Result<Vec<_>>>()?;

    let mut actions = Vec::with_capacity(fmdp.actions.len());
    for action in &fmdp.actions {
        let mut rows = Vec::with_capacity(assignments.len());
        for s in &assignments {
            let row = action_successors(fmdp, action, s)?
                .into_iter()
                .map(|(t, p)| (fmdp.encode(&t), p))
                .collect();
            rows.push(row);
        }
        let costs = assignments
            .iter()
            .map(|s| action.cost().eval(s).copied())
            .collect::<Result<Vec<f64>>>()?;
        let default_cost = most_frequent(&costs);
        let mut record = ActionRecord::new(action.name(), TransitionMatrix::from_rows(rows), default_cost);
        for (i, &c) in costs.iter().enumerate() {
            if c != default_cost {
                record.cost_overrides.insert(i, c);
            }
        }
        actions.push(record);
    }
    FlatMdp {
        states,
        actions,
        reward,
        criterion: fmdp.criterion,
        initial: None,
    }
    .checked()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factored::model::{persistence_cpt, Outcome, VariableSpec};
    use crate::factored::tree::{DecisionTree, VarRef};

    fn single_var_model(action: FactoredAction) -> FactoredMdp {
        FactoredMdp {
            variables: vec![VariableSpec::boolean("X")],
            actions: vec![action],
            reward: vec![],
            criterion: None,
        }
    }

    #[test]
    fn persistence_grounds_to_identity() {
        let m = single_var_model(FactoredAction::Net(TwoSliceNet {
            name: "stay".into(),
            cost: DecisionTree::Leaf(0.0),
            cpts: vec![persistence_cpt(0, 2)],
        }));
        let flat = ground(&m).unwrap();
        assert_eq!(flat.actions[0].matrix, TransitionMatrix::identity(2));
        assert_eq!(flat.states, vec!["X=t", "X=f"]);
    }

    #[test]
    fn empty_change_set_is_point_mass() {
        let op = ProbStripsOp {
            name: "noop".into(),
            cost: DecisionTree::Leaf(0.0),
            context: DecisionTree::Leaf(vec![Outcome::new(vec![], 1.0)]),
        };
        assert_eq!(apply_pso(&op, &[1]).unwrap(), vec![(vec![1], 1.0)]);
    }

    #[test]
    fn colliding_outcomes_are_merged() {
        let op = ProbStripsOp {
            name: "set".into(),
            cost: DecisionTree::Leaf(0.0),
            context: DecisionTree::Leaf(vec![
                Outcome::new(vec![(0, 0)], 0.25),
                Outcome::new(vec![], 0.75),
            ]),
        };
        // at X=t both outcomes leave X=t
        assert_eq!(apply_pso(&op, &[0]).unwrap(), vec![(vec![0], 1.0)]);
        assert_eq!(
            apply_pso(&op, &[1]).unwrap(),
            vec![(vec![0], 0.25), (vec![1], 0.75)]
        );
    }

    #[test]
    fn cap_is_enforced() {
        let m = FactoredMdp {
            variables: (0..4).map(|i| VariableSpec::boolean(format!("V{i}"))).collect(),
            actions: vec![FactoredAction::Pso(ProbStripsOp {
                name: "noop".into(),
                cost: DecisionTree::Leaf(0.0),
                context: DecisionTree::Leaf(vec![Outcome::new(vec![], 1.0)]),
            })],
            reward: vec![],
            criterion: None,
        };
        assert!(matches!(
            ground_with_cap(&m, 8),
            Err(Error::TooLarge { states: 16, cap: 8 })
        ));
        assert_eq!(ground_with_cap(&m, 16).unwrap().n_states(), 16);
    }

    #[test]
    fn synchronic_chain_rule() {
        // A' ~ 0.6 true; B' copies A' with probability 0.9
        let m = FactoredMdp {
            variables: vec![VariableSpec::boolean("A"), VariableSpec::boolean("B")],
            actions: vec![FactoredAction::Net(TwoSliceNet {
                name: "go".into(),
                cost: DecisionTree::Leaf(-1.0),
                cpts: vec![
                    DecisionTree::Leaf(vec![0.6, 0.4]),
                    DecisionTree::split(
                        VarRef::post(0),
                        vec![DecisionTree::Leaf(vec![0.9, 0.1]), DecisionTree::Leaf(vec![0.1, 0.9])],
                    ),
                ],
            })],
            reward: vec![],
            criterion: None,
        };
        let flat = ground(&m).unwrap();
        let expected = [0.6 * 0.9, 0.6 * 0.1, 0.4 * 0.1, 0.4 * 0.9];
        for s in 0..4 {
            for (t, &e) in expected.iter().enumerate() {
                assert!((flat.prob(0, s, t) - e).abs() < 1e-15);
            }
        }
        assert_eq!(flat.cost(0, 2), -1.0);
    }
}
