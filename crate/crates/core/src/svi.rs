//! Decision-theoretic regression and structured value iteration over simple
//! two-slice networks.
//!
//! Value functions stay in tree form throughout: a value tree is regressed
//! through each action into a tree of successor marginals, turned into a
//! Q-tree, and the Q-trees are maxed into the next value tree.

use std::collections::BTreeMap;

use crate::dp::stopping_threshold;
use crate::error::{Error, Result};
use crate::factored::tree::{combine, sum_trees};
use crate::factored::{
    DecisionTree, FactoredAction, FactoredMdp, Interval, IntervalTree, PolicyTree, TwoSliceNet,
    ValueTree, VarRef,
};

/// Successor marginals of the variables grafted on a branch.
pub type Marginals = BTreeMap<usize, Vec<f64>>;
pub type DistributionTree = DecisionTree<Marginals>;

fn require_simple(net: &TwoSliceNet) -> Result<()> {
    if net.is_simple() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "`{}` has synchronic dependencies; structured regression needs a simple network",
            net.name
        )))
    }
}

fn require_pre_only<L>(tree: &DecisionTree<L>) -> Result<()> {
    if tree.tested().iter().any(|t| t.post) {
        return Err(Error::MalformedTree("value tree tests a successor-state variable".into()));
    }
    Ok(())
}

/// Regresses a value tree through an action: the result determines, at every
/// current state, the successor marginal of each variable the value tree
/// tests. CPTs are grafted in depth-first first-encounter order of the value
/// tree; a graft is skipped where the value tree cannot reach a test of that
/// variable with positive probability.
pub fn pregress(vtree: &ValueTree, net: &TwoSliceNet, domains: &[usize]) -> Result<DistributionTree> {
    require_simple(net)?;
    require_pre_only(vtree)?;
    let mut tree = DecisionTree::Leaf(Marginals::new());
    for t in vtree.tested() {
        let cpt = net
            .cpts
            .get(t.var)
            .ok_or_else(|| Error::UnknownVariable(t.var.to_string()))?;
        tree = graft(&tree, t.var, cpt, vtree, domains, &mut Vec::new());
    }
    Ok(tree.simplify(domains))
}

fn graft(
    tree: &DistributionTree,
    var: usize,
    cpt: &DecisionTree<Vec<f64>>,
    vtree: &ValueTree,
    domains: &[usize],
    ctx: &mut Vec<(VarRef, usize)>,
) -> DistributionTree {
    match tree {
        DecisionTree::Leaf(marginals) => {
            if !reaches(vtree, var, marginals) {
                return tree.clone();
            }
            let restricted = cpt.restrict_all(ctx);
            attach(&restricted, var, marginals, domains, ctx)
        }
        DecisionTree::Node(n) => {
            let children = (0..domains[n.test.var])
                .map(|v| {
                    ctx.push((n.test, v));
                    let c = graft(n.child(v).expect("well-formed tree"), var, cpt, vtree, domains, ctx);
                    ctx.pop();
                    c
                })
                .collect();
            DecisionTree::split(n.test, children)
        }
    }
}

/// Copies a (context-restricted) CPT below a leaf, extending the leaf's
/// marginals with the CPT's distribution for `var`.
fn attach(
    cpt: &DecisionTree<Vec<f64>>,
    var: usize,
    marginals: &Marginals,
    domains: &[usize],
    ctx: &mut Vec<(VarRef, usize)>,
) -> DistributionTree {
    match cpt {
        DecisionTree::Leaf(dist) => {
            let mut m = marginals.clone();
            m.insert(var, dist.clone());
            DecisionTree::Leaf(m)
        }
        DecisionTree::Node(n) => {
            if let Some(&(_, v)) = ctx.iter().find(|(t, _)| *t == n.test) {
                return attach(n.child(v).expect("well-formed tree"), var, marginals, domains, ctx);
            }
            let children = (0..domains[n.test.var])
                .map(|v| {
                    ctx.push((n.test, v));
                    let c = attach(n.child(v).expect("well-formed tree"), var, marginals, domains, ctx);
                    ctx.pop();
                    c
                })
                .collect();
            DecisionTree::split(n.test, children)
        }
    }
}

/// Whether a test of `var` in `vtree` is reachable with positive probability
/// under the marginals known so far. Tests of variables without a marginal
/// are treated as able to take any value.
fn reaches(vtree: &ValueTree, var: usize, marginals: &Marginals) -> bool {
    match vtree {
        DecisionTree::Leaf(_) => false,
        DecisionTree::Node(n) => {
            if n.test.var == var {
                return true;
            }
            match marginals.get(&n.test.var) {
                Some(dist) => dist
                    .iter()
                    .enumerate()
                    .any(|(v, &p)| p > 0.0 && n.child(v).is_some_and(|c| reaches(c, var, marginals))),
                None => {
                    n.branches.iter().any(|(_, c)| reaches(c, var, marginals))
                        || n.otherwise.as_ref().is_some_and(|c| reaches(c, var, marginals))
                }
            }
        }
    }
}

/// Expected value of `vtree` at the successor when the tested variables are
/// independent with the given marginals.
fn expectation(vtree: &ValueTree, marginals: &Marginals) -> Result<f64> {
    match vtree {
        DecisionTree::Leaf(v) => Ok(*v),
        DecisionTree::Node(n) => {
            let dist = marginals.get(&n.test.var).ok_or_else(|| {
                Error::MalformedTree(format!("no successor marginal for variable {}", n.test.var))
            })?;
            let mut total = 0.0;
            for (v, &p) in dist.iter().enumerate() {
                if p > 0.0 {
                    let child = n.child(v).ok_or_else(|| {
                        Error::MalformedTree(format!("no branch for value {v} of variable {}", n.test.var))
                    })?;
                    total += p * expectation(child, marginals)?;
                }
            }
            Ok(total)
        }
    }
}

/// Tree of expected successor values under `net`.
pub fn future_value_tree(vtree: &ValueTree, net: &TwoSliceNet, domains: &[usize]) -> Result<ValueTree> {
    let dtree = pregress(vtree, net, domains)?;
    let mut failure = None;
    let fv = dtree.map(&mut |m| match expectation(vtree, m) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(fv.simplify(domains)),
    }
}

/// `Q(a, s) = R(s) + C(a, s) + γ E[V(s') | s, a]` as a tree.
pub fn q_tree(
    net: &TwoSliceNet,
    vtree: &ValueTree,
    gamma: f64,
    reward: &[ValueTree],
    domains: &[usize],
) -> Result<ValueTree> {
    let fv = future_value_tree(vtree, net, domains)?;
    let immediate = sum_trees(reward, domains);
    let with_cost = combine(&immediate, &net.cost, domains, &mut |r, c| r + c);
    Ok(combine(&with_cost, &fv, domains, &mut |rc, f| rc + gamma * f).simplify(domains))
}

/// Pointwise maximum of Q-trees with the maximizing action; the earliest
/// listed action wins ties.
pub fn max_merge_trees(qtrees: &[(usize, ValueTree)], domains: &[usize]) -> Result<(ValueTree, PolicyTree)> {
    let (first_action, first) = qtrees
        .first()
        .ok_or_else(|| Error::Argument("no Q-trees to merge".into()))?;
    let mut best: DecisionTree<(f64, usize)> = first.map(&mut |&v| (v, *first_action));
    for (action, tree) in &qtrees[1..] {
        best = combine(&best, tree, domains, &mut |&(v, a), &q| if q > v { (q, *action) } else { (v, a) });
    }
    let value = best.map(&mut |&(v, _)| v).simplify(domains);
    let policy = best.map(&mut |&(_, a)| a).simplify(domains);
    Ok((value, policy))
}

/// Sup-norm distance between two value trees after refining both to a
/// common partition.
pub fn aligned_max_diff(a: &ValueTree, b: &ValueTree, domains: &[usize]) -> f64 {
    let diff = combine(a, b, domains, &mut |x, y| (x - y).abs());
    diff.leaves().into_iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SviStop {
    /// Exactly `T` undiscounted backups.
    Horizon(usize),
    /// Discounted backups until the change drops to `eps (1 - γ) / (2γ)`.
    Discounted { gamma: f64, eps: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SviResult {
    pub value: ValueTree,
    pub policy: PolicyTree,
    pub iterations: usize,
    /// Leaf count of the value tree after each backup.
    pub leaf_counts: Vec<usize>,
}

fn simple_nets(fmdp: &FactoredMdp) -> Result<Vec<&TwoSliceNet>> {
    fmdp.actions
        .iter()
        .map(|a| match a {
            FactoredAction::Net(net) => {
                require_simple(net)?;
                Ok(net)
            }
            FactoredAction::Pso(op) => Err(Error::Unsupported(format!(
                "`{}` is a STRIPS operator; structured value iteration needs networks",
                op.name
            ))),
        })
        .collect()
}

/// One structured Bellman backup of `vtree`.
pub fn structured_backup(
    fmdp: &FactoredMdp,
    vtree: &ValueTree,
    gamma: f64,
) -> Result<(ValueTree, PolicyTree)> {
    let domains = fmdp.domains();
    let nets = simple_nets(fmdp)?;
    let qtrees = nets
        .iter()
        .enumerate()
        .map(|(k, net)| Ok((k, q_tree(net, vtree, gamma, &fmdp.reward, &domains)?)))
        .collect::<Result<Vec<_>>>()?;
    max_merge_trees(&qtrees, &domains)
}

pub fn structured_value_iteration(fmdp: &FactoredMdp, stop: SviStop) -> Result<SviResult> {
    fmdp.validate()?;
    simple_nets(fmdp)?;
    let domains = fmdp.domains();
    let mut value = sum_trees(&fmdp.reward, &domains);
    let mut leaf_counts = Vec::new();
    match stop {
        SviStop::Horizon(horizon) => {
            if horizon == 0 {
                return Err(Error::Argument("horizon must be positive".into()));
            }
            let mut policy = DecisionTree::Leaf(0);
            for _ in 0..horizon {
                let (v, p) = structured_backup(fmdp, &value, 1.0)?;
                leaf_counts.push(v.leaf_count());
                value = v;
                policy = p;
            }
            Ok(SviResult {
                value,
                policy,
                iterations: horizon,
                leaf_counts,
            })
        }
        SviStop::Discounted { gamma, eps } => {
            if !(0.0..1.0).contains(&gamma) {
                return Err(Error::Criterion(format!("discount {gamma} must lie in [0, 1)")));
            }
            if eps <= 0.0 {
                return Err(Error::Argument("eps must be positive".into()));
            }
            let threshold = stopping_threshold(gamma, eps);
            loop {
                let (v, p) = structured_backup(fmdp, &value, gamma)?;
                leaf_counts.push(v.leaf_count());
                let change = aligned_max_diff(&v, &value, &domains);
                value = v;
                let policy = p;
                if change <= threshold {
                    return Ok(SviResult {
                        value,
                        policy,
                        iterations: leaf_counts.len(),
                        leaf_counts,
                    });
                }
                if leaf_counts.len() >= 1_000_000 {
                    return Err(Error::NoConvergence {
                        iterations: leaf_counts.len(),
                        residual: change,
                    });
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PruneBudget {
    MaxLeaves(usize),
    Span(f64),
}

/// Collapses sibling leaves into bracketing intervals, smallest resulting
/// span first, until the budget is met. Returns the pruned tree and its
/// largest leaf span.
pub fn prune_value_tree(tree: &IntervalTree, budget: PruneBudget, domains: &[usize]) -> Result<(IntervalTree, f64)> {
    match budget {
        PruneBudget::MaxLeaves(0) => return Err(Error::Argument("leaf budget must be at least 1".into())),
        PruneBudget::Span(d) if d.is_nan() || d < 0.0 => {
            return Err(Error::Argument("span budget must be nonnegative".into()))
        }
        _ => {}
    }
    if tree.leaves().iter().any(|i| i.lo > i.hi) {
        return Err(Error::MalformedTree("interval with lower bound above upper bound".into()));
    }
    let mut current = tree.simplify(domains);
    loop {
        let done = match budget {
            PruneBudget::MaxLeaves(n) => current.leaf_count() <= n,
            PruneBudget::Span(_) => false,
        };
        if done {
            break;
        }
        let Some((path, span)) = smallest_mergeable(&current, &mut Vec::new()) else {
            break;
        };
        if let PruneBudget::Span(d) = budget {
            if span > d {
                break;
            }
        }
        current = merge_at(&current, &path).simplify(domains);
    }
    let max_span = current.leaves().iter().map(|i| i.span()).fold(0.0, f64::max);
    Ok((current, max_span))
}

/// Converts an exact tree to point intervals.
pub fn to_intervals(tree: &ValueTree) -> IntervalTree {
    tree.map(&mut |&v| Interval::point(v))
}

/// Path (child positions, `usize::MAX` for else) to the node whose children
/// are all leaves and whose merged span is smallest; first in depth-first
/// order on ties.
fn smallest_mergeable(tree: &IntervalTree, path: &mut Vec<usize>) -> Option<(Vec<usize>, f64)> {
    let DecisionTree::Node(n) = tree else {
        return None;
    };
    let children: Vec<&IntervalTree> = n
        .branches
        .iter()
        .map(|(_, c)| c)
        .chain(n.otherwise.as_ref())
        .collect();
    if children.iter().all(|c| c.is_leaf()) {
        let hull = children
            .iter()
            .filter_map(|c| c.as_leaf())
            .fold(None, |acc: Option<Interval>, i| Some(acc.map_or(*i, |a| a.hull(i))))
            .expect("node has children");
        return Some((path.clone(), hull.span()));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for (k, (_, c)) in n.branches.iter().enumerate() {
        path.push(k);
        if let Some(found) = smallest_mergeable(c, path) {
            if best.as_ref().is_none_or(|b| found.1 < b.1) {
                best = Some(found);
            }
        }
        path.pop();
    }
    if let Some(c) = &n.otherwise {
        path.push(usize::MAX);
        if let Some(found) = smallest_mergeable(c, path) {
            if best.as_ref().is_none_or(|b| found.1 < b.1) {
                best = Some(found);
            }
        }
        path.pop();
    }
    best
}

fn merge_at(tree: &IntervalTree, path: &[usize]) -> IntervalTree {
    let DecisionTree::Node(n) = tree else {
        return tree.clone();
    };
    match path.split_first() {
        None => {
            let hull = tree
                .leaves()
                .into_iter()
                .copied()
                .reduce(|a, b| a.hull(&b))
                .expect("node has leaves");
            DecisionTree::Leaf(hull)
        }
        Some((&k, rest)) => {
            let mut node = (**n).clone();
            if k == usize::MAX {
                let c = node.otherwise.as_ref().expect("path follows else");
                node.otherwise = Some(merge_at(c, rest));
            } else {
                node.branches[k].1 = merge_at(&node.branches[k].1, rest);
            }
            DecisionTree::Node(Box::new(node))
        }
    }
}

/// Greedy policy tree with respect to interval midpoints.
pub fn midpoint_policy(fmdp: &FactoredMdp, tree: &IntervalTree, gamma: f64) -> Result<PolicyTree> {
    let mid = tree.map(&mut |i| i.midpoint());
    Ok(structured_backup(fmdp, &mid, gamma)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::q_from_value;
    use crate::factored::{for_each_assignment, ground, persistence_cpt, VariableSpec};
    use crate::mdp::ValueFunction;

    fn leaf(p_true: f64) -> DecisionTree<Vec<f64>> {
        DecisionTree::Leaf(vec![p_true, 1.0 - p_true])
    }

    fn split<L>(var: usize, t: DecisionTree<L>, f: DecisionTree<L>) -> DecisionTree<L> {
        DecisionTree::split(VarRef::pre(var), vec![t, f])
    }

    /// Variables X, Y, Z. Y' depends on X and Y; Z' on Y and Z.
    fn example_action() -> (TwoSliceNet, ValueTree) {
        let net = TwoSliceNet {
            name: "a".into(),
            cost: DecisionTree::Leaf(0.0),
            cpts: vec![
                persistence_cpt(0, 2),
                split(0, leaf(0.9), split(1, leaf(1.0), leaf(0.0))),
                split(1, leaf(0.9), split(2, leaf(1.0), leaf(0.0))),
            ],
        };
        let v0 = split(1, DecisionTree::Leaf(8.1), split(2, DecisionTree::Leaf(9.0), DecisionTree::Leaf(0.0)));
        (net, v0)
    }

    #[test]
    fn constant_value_tree_needs_no_grafts() {
        let (net, _) = example_action();
        let d = pregress(&DecisionTree::Leaf(3.0), &net, &[2, 2, 2]).unwrap();
        assert_eq!(d, DecisionTree::Leaf(Marginals::new()));
    }

    #[test]
    fn graft_pattern() {
        let (net, v0) = example_action();
        let d = pregress(&v0, &net, &[2, 2, 2]).unwrap();
        let DecisionTree::Node(root) = &d else { panic!("expected a node") };
        assert_eq!(root.test, VarRef::pre(0));
        // X = t: the full Z tree, which tests Y first
        let DecisionTree::Node(xt) = root.child(0).unwrap() else { panic!() };
        assert_eq!(xt.test, VarRef::pre(1));
        let DecisionTree::Node(xt_yf) = xt.child(1).unwrap() else { panic!() };
        assert_eq!(xt_yf.test, VarRef::pre(2));
        // X = f: Y tested once; Y = t needs no Z graft
        let DecisionTree::Node(xf) = root.child(1).unwrap() else { panic!() };
        assert_eq!(xf.test, VarRef::pre(1));
        let xf_yt = xf.child(0).unwrap().as_leaf().unwrap();
        assert_eq!(xf_yt.keys().copied().collect::<Vec<_>>(), vec![1]);
        // X = f, Y = f: Z tree with the redundant Y test removed
        let DecisionTree::Node(xf_yf) = xf.child(1).unwrap() else { panic!() };
        assert_eq!(xf_yf.test, VarRef::pre(2));
        assert!(xf_yf.child(0).unwrap().is_leaf());
        assert!(xf_yf.child(1).unwrap().is_leaf());
    }

    #[test]
    fn q_tree_matches_grounded_q() {
        let (net, v0) = example_action();
        let fmdp = FactoredMdp {
            variables: vec![VariableSpec::boolean("X"), VariableSpec::boolean("Y"), VariableSpec::boolean("Z")],
            actions: vec![FactoredAction::Net(net.clone())],
            reward: vec![split(0, DecisionTree::Leaf(1.0), DecisionTree::Leaf(0.0))],
            criterion: None,
        };
        let domains = fmdp.domains();
        let q = q_tree(&net, &v0, 0.9, &fmdp.reward, &domains).unwrap();
        let flat = ground(&fmdp).unwrap();
        let mut values = vec![0.0; 8];
        for_each_assignment(&domains, |s| values[fmdp.encode(s)] = *v0.eval(s).unwrap());
        let flat_q = q_from_value(&flat, &ValueFunction::new(values), 0.9);
        for_each_assignment(&domains, |s| {
            let i = fmdp.encode(s);
            assert!((q.eval(s).unwrap() - flat_q.get(0, i)).abs() < 1e-12);
        });
    }

    #[test]
    fn merge_of_one_tree_is_identity() {
        let t = split(0, DecisionTree::Leaf(1.0), DecisionTree::Leaf(2.0));
        let (v, p) = max_merge_trees(&[(3, t.clone())], &[2]).unwrap();
        assert_eq!(v, t);
        assert_eq!(p, DecisionTree::Leaf(3));
    }

    #[test]
    fn merge_of_constants() {
        let (v, p) = max_merge_trees(
            &[(0, DecisionTree::Leaf(3.0)), (1, DecisionTree::Leaf(5.0))],
            &[2],
        )
        .unwrap();
        assert_eq!(v, DecisionTree::Leaf(5.0));
        assert_eq!(p, DecisionTree::Leaf(1));
        let (_, p) = max_merge_trees(
            &[(0, DecisionTree::Leaf(5.0)), (1, DecisionTree::Leaf(5.0))],
            &[2],
        )
        .unwrap();
        assert_eq!(p, DecisionTree::Leaf(0));
    }

    #[test]
    fn synchronic_nets_are_rejected() {
        let (mut net, v0) = example_action();
        net.cpts[2] = DecisionTree::split(VarRef::post(1), vec![leaf(1.0), leaf(0.0)]);
        assert!(matches!(pregress(&v0, &net, &[2, 2, 2]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn two_siblings_merge_to_bracket() {
        let t = to_intervals(&split(0, DecisionTree::Leaf(4.0), DecisionTree::Leaf(6.0)));
        let (p, span) = prune_value_tree(&t, PruneBudget::MaxLeaves(1), &[2]).unwrap();
        assert_eq!(p, DecisionTree::Leaf(Interval { lo: 4.0, hi: 6.0 }));
        assert_eq!(span, 2.0);
    }

    #[test]
    fn zero_span_budget_changes_nothing() {
        let t = to_intervals(&split(0, DecisionTree::Leaf(4.0), split(1, DecisionTree::Leaf(1.0), DecisionTree::Leaf(2.0))));
        let (p, span) = prune_value_tree(&t, PruneBudget::Span(0.0), &[2, 2]).unwrap();
        assert_eq!(p, t);
        assert_eq!(span, 0.0);
    }

    #[test]
    fn empty_leaf_budget_is_an_error() {
        let t = to_intervals(&DecisionTree::Leaf(1.0));
        assert!(matches!(
            prune_value_tree(&t, PruneBudget::MaxLeaves(0), &[2]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn smallest_span_merged_first() {
        // X=t: Y splits 1 | 1.5; X=f: Y splits 10 | 20
        let t = to_intervals(&split(
            0,
            split(1, DecisionTree::Leaf(1.0), DecisionTree::Leaf(1.5)),
            split(1, DecisionTree::Leaf(10.0), DecisionTree::Leaf(20.0)),
        ));
        let (p, span) = prune_value_tree(&t, PruneBudget::MaxLeaves(3), &[2, 2]).unwrap();
        assert_eq!(p.leaf_count(), 3);
        assert_eq!(span, 0.5);
        let (_, span) = prune_value_tree(&t, PruneBudget::Span(5.0), &[2, 2]).unwrap();
        assert_eq!(span, 0.5);
    }
}
