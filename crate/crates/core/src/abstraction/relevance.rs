use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::factored::{
    DecisionTree, EffectTree, FactoredAction, FactoredMdp, Outcome, ProbStripsOp, TwoSliceNet,
    ValueTree,
};

/// Variables tested by any reward component.
pub fn reward_variables(fmdp: &FactoredMdp) -> BTreeSet<usize> {
    fmdp.reward
        .iter()
        .flat_map(|r| r.tested())
        .map(|t| t.var)
        .collect()
}

/// Least superset of `seed` closed under "is tested when computing the next
/// value of a relevant variable".
pub fn relevant_closure(fmdp: &FactoredMdp, seed: &BTreeSet<usize>) -> Result<BTreeSet<usize>> {
    if let Some(&bad) = seed.iter().find(|&&v| v >= fmdp.variables.len()) {
        return Err(Error::UnknownVariable(bad.to_string()));
    }
    let mut relevant = seed.clone();
    loop {
        let mut added = BTreeSet::new();
        for action in &fmdp.actions {
            match action {
                FactoredAction::Net(net) => {
                    for &x in &relevant {
                        added.extend(net.cpts[x].tested().into_iter().map(|t| t.var));
                    }
                }
                FactoredAction::Pso(op) => pso_influences(&op.context, &relevant, &mut Vec::new(), &mut added),
            }
        }
        let before = relevant.len();
        relevant.extend(added);
        if relevant.len() == before {
            return Ok(relevant);
        }
    }
}

/// Adds the tests on every path leading to a leaf whose outcomes change a
/// relevant variable.
fn pso_influences(
    tree: &EffectTree,
    relevant: &BTreeSet<usize>,
    path: &mut Vec<usize>,
    out: &mut BTreeSet<usize>,
) {
    match tree {
        DecisionTree::Leaf(outcomes) => {
            let touches = outcomes
                .iter()
                .any(|o| o.changes.iter().any(|(v, _)| relevant.contains(v)));
            if touches {
                out.extend(path.iter().copied());
            }
        }
        DecisionTree::Node(n) => {
            path.push(n.test.var);
            for (_, c) in &n.branches {
                pso_influences(c, relevant, path, out);
            }
            if let Some(c) = &n.otherwise {
                pso_influences(c, relevant, path, out);
            }
            path.pop();
        }
    }
}

/// Drops every variable outside `keep`, along with reward components that
/// test dropped variables.
pub fn project_abstract(fmdp: &FactoredMdp, keep: &BTreeSet<usize>) -> Result<FactoredMdp> {
    if let Some(&bad) = keep.iter().find(|&&v| v >= fmdp.variables.len()) {
        return Err(Error::UnknownVariable(bad.to_string()));
    }
    let index: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let rename = |v: usize| index[&v];
    let domains: Vec<usize> = keep.iter().map(|&v| fmdp.variables[v].size()).collect();
    let only_kept = |tested: &[crate::factored::VarRef]| tested.iter().all(|t| keep.contains(&t.var));
    let not_closed = |what: String, tree_vars: Vec<usize>| {
        let dropped: Vec<&str> = tree_vars
            .into_iter()
            .filter(|v| !keep.contains(v))
            .map(|v| fmdp.variables[v].name.as_str())
            .collect();
        Error::NotClosed(format!("{what} tests dropped variable `{}`", dropped.join("`, `")))
    };
    let remap_value = |tree: &ValueTree, what: String| -> Result<ValueTree> {
        if only_kept(&tree.tested()) {
            Ok(tree.rename_vars(&rename))
        } else {
            Err(not_closed(what, tree.tested().iter().map(|t| t.var).collect()))
        }
    };

    let mut actions = Vec::with_capacity(fmdp.actions.len());
    for action in &fmdp.actions {
        let cost = remap_value(action.cost(), format!("cost of `{}`", action.name()))?;
        let projected = match action {
            FactoredAction::Net(net) => {
                let mut cpts = Vec::with_capacity(keep.len());
                for &x in keep {
                    let cpt = &net.cpts[x];
                    if !only_kept(&cpt.tested()) {
                        return Err(not_closed(
                            format!("CPT for `{}` in `{}`", fmdp.variables[x].name, net.name),
                            cpt.tested().iter().map(|t| t.var).collect(),
                        ));
                    }
                    cpts.push(cpt.rename_vars(&rename));
                }
                FactoredAction::Net(TwoSliceNet {
                    name: net.name.clone(),
                    cost,
                    cpts,
                })
            }
            FactoredAction::Pso(op) => {
                let restricted = op
                    .context
                    .map(&mut |outcomes| restrict_outcomes(outcomes, keep))
                    .simplify(&fmdp.domains());
                if !only_kept(&restricted.tested()) {
                    return Err(not_closed(
                        format!("context of `{}`", op.name),
                        restricted.tested().iter().map(|t| t.var).collect(),
                    ));
                }
                let context = restricted
                    .rename_vars(&rename)
                    .map(&mut |outcomes: &Vec<Outcome>| {
                        outcomes
                            .iter()
                            .map(|o| Outcome::new(o.changes.iter().map(|&(v, x)| (rename(v), x)).collect(), o.prob))
                            .collect::<Vec<_>>()
                    })
                    .simplify(&domains);
                FactoredAction::Pso(ProbStripsOp {
                    name: op.name.clone(),
                    cost,
                    context,
                })
            }
        };
        actions.push(projected);
    }
    let reward = fmdp
        .reward
        .iter()
        .filter(|r| only_kept(&r.tested()))
        .map(|r| r.rename_vars(&rename))
        .collect();
    Ok(FactoredMdp {
        variables: keep.iter().map(|&v| fmdp.variables[v].clone()).collect(),
        actions,
        reward,
        criterion: fmdp.criterion,
    })
}

/// Outcomes with changes to dropped variables removed; coinciding change
/// sets are merged, in change-set order.
fn restrict_outcomes(outcomes: &[Outcome], keep: &BTreeSet<usize>) -> Vec<Outcome> {
    let mut merged: BTreeMap<Vec<(usize, usize)>, f64> = BTreeMap::new();
    for o in outcomes {
        let changes: Vec<(usize, usize)> = o.changes.iter().copied().filter(|(v, _)| keep.contains(v)).collect();
        *merged.entry(changes).or_insert(0.0) += o.prob;
    }
    merged.into_iter().map(|(c, p)| Outcome::new(c, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factored::{persistence_cpt, VarRef, VariableSpec};

    /// A' depends on B, B' on B, C' on A; reward on A.
    fn model() -> FactoredMdp {
        let t = |v: usize, a: f64, b: f64| {
            DecisionTree::split(VarRef::pre(v), vec![DecisionTree::Leaf(vec![a, 1.0 - a]), DecisionTree::Leaf(vec![b, 1.0 - b])])
        };
        FactoredMdp {
            variables: ["A", "B", "C"].iter().map(|n| VariableSpec::boolean(*n)).collect(),
            actions: vec![FactoredAction::Net(TwoSliceNet {
                name: "go".into(),
                cost: DecisionTree::Leaf(0.0),
                cpts: vec![t(1, 0.9, 0.1), persistence_cpt(1, 2), t(0, 0.5, 0.2)],
            })],
            reward: vec![DecisionTree::split(VarRef::pre(0), vec![DecisionTree::Leaf(1.0), DecisionTree::Leaf(0.0)])],
            criterion: None,
        }
    }

    #[test]
    fn closure_follows_parents() {
        let m = model();
        assert_eq!(relevant_closure(&m, &BTreeSet::from([0])).unwrap(), BTreeSet::from([0, 1]));
        assert_eq!(relevant_closure(&m, &BTreeSet::from([1])).unwrap(), BTreeSet::from([1]));
        assert_eq!(relevant_closure(&m, &BTreeSet::from([2])).unwrap(), BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn projection_of_closed_set() {
        let m = model();
        let p = project_abstract(&m, &BTreeSet::from([0, 1])).unwrap();
        assert_eq!(p.state_count(), 4);
        assert_eq!(p.reward.len(), 1);
        p.validate().unwrap();
    }

    #[test]
    fn projection_of_open_set_fails() {
        assert!(matches!(
            project_abstract(&model(), &BTreeSet::from([0])),
            Err(Error::NotClosed(_))
        ));
    }

    #[test]
    fn keeping_everything_is_identity() {
        let m = model();
        assert_eq!(project_abstract(&m, &BTreeSet::from([0, 1, 2])).unwrap(), m);
    }
}
