use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::factored::{DecisionTree, EffectTree, FactoredAction, FactoredMdp, ProbStripsOp};

/// Deterministic operator: applicable where every precondition literal
/// holds, after which the effect literals hold.
#[derive(Debug, Clone, PartialEq)]
pub struct StripsOp {
    pub name: String,
    pub precondition: BTreeMap<usize, usize>,
    pub effects: BTreeMap<usize, usize>,
    pub cost: f64,
}

impl StripsOp {
    pub fn applicable(&self, state: &[usize]) -> bool {
        self.precondition.iter().all(|(&v, &x)| state[v] == x)
    }

    pub fn apply(&self, state: &[usize]) -> Vec<usize> {
        let mut next = state.to_vec();
        for (&v, &x) in &self.effects {
            next[v] = x;
        }
        next
    }
}

/// Conjunction of `variable = value` requirements.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct SubgoalSet {
    pub literals: BTreeMap<usize, usize>,
}

impl SubgoalSet {
    pub fn new(literals: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (v, x) in literals {
            if map.insert(v, x).is_some_and(|old| old != x) {
                return Err(Error::Argument(format!("variable {v} is required to take two values")));
            }
        }
        Ok(SubgoalSet { literals: map })
    }

    pub fn satisfied_by(&self, state: &[usize]) -> bool {
        self.literals.iter().all(|(&v, &x)| state[v] == x)
    }
}

/// Weakest subgoal set from which `op` reaches `sg`, or `None` when `op`
/// undoes a subgoal or its precondition conflicts with one it leaves open.
pub fn strips_regress(sg: &SubgoalSet, op: &StripsOp) -> Option<SubgoalSet> {
    let mut result = BTreeMap::new();
    for (&v, &x) in &sg.literals {
        match op.effects.get(&v) {
            Some(&e) if e != x => return None,
            Some(_) => {}
            None => {
                if op.precondition.get(&v).is_some_and(|&p| p != x) {
                    return None;
                }
                result.insert(v, x);
            }
        }
    }
    for (&v, &x) in &op.precondition {
        result.insert(v, x);
    }
    Some(SubgoalSet { literals: result })
}

fn achieves(sg: &SubgoalSet, op: &StripsOp) -> bool {
    op.effects.iter().any(|(v, x)| sg.literals.get(v) == Some(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionPlan {
    /// Operator indices in execution order.
    pub ops: Vec<usize>,
    /// The goal followed by each successive regression.
    pub subgoals: Vec<SubgoalSet>,
}

/// Depth-first backward search from the goal, trying operators in index
/// order and only those that achieve a current subgoal without undoing
/// another.
pub fn regression_plan(
    ops: &[StripsOp],
    init: &[usize],
    goal: &SubgoalSet,
    depth_cap: usize,
) -> Option<RegressionPlan> {
    let mut subgoals = vec![goal.clone()];
    let mut chosen = Vec::new();
    if search(ops, init, depth_cap, &mut subgoals, &mut chosen) {
        chosen.reverse();
        Some(RegressionPlan { ops: chosen, subgoals })
    } else {
        None
    }
}

fn search(
    ops: &[StripsOp],
    init: &[usize],
    remaining: usize,
    subgoals: &mut Vec<SubgoalSet>,
    chosen: &mut Vec<usize>,
) -> bool {
    let current = subgoals.last().expect("goal present").clone();
    if current.satisfied_by(init) {
        return true;
    }
    if remaining == 0 {
        return false;
    }
    for (k, op) in ops.iter().enumerate() {
        if !achieves(&current, op) {
            continue;
        }
        let Some(next) = strips_regress(&current, op) else {
            continue;
        };
        // a subgoal set already on the path cannot lead anywhere new
        if subgoals.contains(&next) {
            continue;
        }
        subgoals.push(next);
        chosen.push(k);
        if search(ops, init, remaining - 1, subgoals, chosen) {
            return true;
        }
        subgoals.pop();
        chosen.pop();
    }
    false
}

/// Runs `plan` forward from `init`; `None` if some precondition fails.
pub fn execute_plan(ops: &[StripsOp], init: &[usize], plan: &[usize]) -> Option<Vec<usize>> {
    let mut state = init.to_vec();
    for &k in plan {
        let op = ops.get(k)?;
        if !op.applicable(&state) {
            return None;
        }
        state = op.apply(&state);
    }
    Some(state)
}

/// Reads a deterministic PSO as a STRIPS operator: exactly one context must
/// carry a change, with certainty, and all other contexts must be no-ops.
/// The path to that context becomes the precondition.
pub fn strips_from_pso(op: &ProbStripsOp, domains: &[usize]) -> Result<StripsOp> {
    let cost = match op.cost {
        DecisionTree::Leaf(c) => c,
        _ => {
            return Err(Error::Unsupported(format!(
                "`{}` has a state-dependent cost; STRIPS operators need a constant",
                op.name
            )))
        }
    };
    let mut found = Vec::new();
    collect_effects(&op.context, domains, &mut Vec::new(), &mut found, &op.name)?;
    match found.len() {
        1 => {
            let (precondition, effects) = found.pop().expect("one effect");
            Ok(StripsOp {
                name: op.name.clone(),
                precondition,
                effects,
                cost,
            })
        }
        0 => Err(Error::Unsupported(format!("`{}` never changes the state", op.name))),
        _ => Err(Error::Unsupported(format!(
            "`{}` has several effectful contexts; STRIPS operators need one",
            op.name
        ))),
    }
}

type Literals = BTreeMap<usize, usize>;

fn collect_effects(
    tree: &EffectTree,
    domains: &[usize],
    path: &mut Vec<(usize, usize)>,
    found: &mut Vec<(Literals, Literals)>,
    name: &str,
) -> Result<()> {
    match tree {
        DecisionTree::Leaf(outcomes) => {
            let effectful: Vec<_> = outcomes.iter().filter(|o| o.prob > 0.0 && !o.changes.is_empty()).collect();
            if effectful.is_empty() {
                return Ok(());
            }
            if effectful.len() != 1 || effectful[0].prob < 1.0 - 1e-12 {
                return Err(Error::Unsupported(format!("`{name}` has a stochastic effect")));
            }
            found.push((path.iter().copied().collect(), effectful[0].changes.iter().copied().collect()));
            Ok(())
        }
        DecisionTree::Node(n) => {
            if n.test.post {
                return Err(Error::Unsupported(format!("`{name}` tests a successor-state variable")));
            }
            let var = n.test.var;
            for (v, c) in &n.branches {
                path.push((var, *v));
                collect_effects(c, domains, path, found, name)?;
                path.pop();
            }
            if let Some(c) = &n.otherwise {
                let rest: Vec<usize> = (0..domains[var])
                    .filter(|v| !n.branches.iter().any(|(b, _)| b == v))
                    .collect();
                if rest.len() == 1 {
                    path.push((var, rest[0]));
                    collect_effects(c, domains, path, found, name)?;
                    path.pop();
                } else {
                    let before = found.len();
                    collect_effects(c, domains, path, found, name)?;
                    if found.len() != before {
                        return Err(Error::Unsupported(format!(
                            "`{name}` has a precondition that is not a conjunction of literals"
                        )));
                    }
                }
            }
            Ok(())
        }
    }
}

/// All actions of `fmdp` read as STRIPS operators.
pub fn strips_operators(fmdp: &FactoredMdp) -> Result<Vec<StripsOp>> {
    let domains = fmdp.domains();
    fmdp.actions
        .iter()
        .map(|a| match a {
            FactoredAction::Pso(op) => strips_from_pso(op, &domains),
            FactoredAction::Net(net) => Err(Error::Unsupported(format!(
                "`{}` is a network; goal regression needs deterministic operators",
                net.name
            ))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(name: &str, pre: &[(usize, usize)], eff: &[(usize, usize)]) -> StripsOp {
        StripsOp {
            name: name.into(),
            precondition: pre.iter().copied().collect(),
            effects: eff.iter().copied().collect(),
            cost: 0.0,
        }
    }

    #[test]
    fn regression_adds_precondition() {
        let sg = SubgoalSet::new([(0, 1)]).unwrap();
        let r = strips_regress(&sg, &op("a", &[(1, 0)], &[(0, 1)])).unwrap();
        assert_eq!(r, SubgoalSet::new([(1, 0)]).unwrap());
    }

    #[test]
    fn contradicting_effect_is_inapplicable() {
        let sg = SubgoalSet::new([(0, 1), (1, 1)]).unwrap();
        assert!(strips_regress(&sg, &op("a", &[], &[(0, 1), (1, 0)])).is_none());
    }

    #[test]
    fn unrelated_op_keeps_subgoals() {
        let sg = SubgoalSet::new([(0, 1)]).unwrap();
        let r = strips_regress(&sg, &op("a", &[(2, 0)], &[(1, 1)])).unwrap();
        assert_eq!(r, SubgoalSet::new([(0, 1), (2, 0)]).unwrap());
    }

    #[test]
    fn satisfied_goal_gives_empty_plan() {
        let goal = SubgoalSet::new([(0, 0)]).unwrap();
        let plan = regression_plan(&[], &[0], &goal, 3).unwrap();
        assert!(plan.ops.is_empty());
    }

    #[test]
    fn unachievable_goal_has_no_plan() {
        let goal = SubgoalSet::new([(0, 1)]).unwrap();
        assert!(regression_plan(&[op("a", &[], &[(1, 1)])], &[0, 0], &goal, 5).is_none());
    }

    #[test]
    fn conflicting_literals_are_rejected() {
        assert!(SubgoalSet::new([(0, 1), (0, 0)]).is_err());
    }
}
