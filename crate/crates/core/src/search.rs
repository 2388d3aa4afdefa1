//! Forward reachability and depth-limited expectimax search.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::mdp::{row_expectation, ActionRecord, FlatMdp, Trajectory, TransitionMatrix};
use crate::rng::{sample_index, SplitMix64};

/// States reachable from `init` under any sequence of actions.
pub fn reachable_set(mdp: &FlatMdp, init: &BTreeSet<usize>) -> Result<BTreeSet<usize>> {
    if init.is_empty() {
        return Err(Error::Argument("reachability needs at least one start state".into()));
    }
    if let Some(&bad) = init.iter().find(|&&s| s >= mdp.n_states()) {
        return Err(Error::UnknownState(bad.to_string()));
    }
    let mut seen = init.clone();
    let mut queue: VecDeque<usize> = init.iter().copied().collect();
    while let Some(s) = queue.pop_front() {
        for action in &mdp.actions {
            for j in action.matrix.successors(s) {
                if seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(seen)
}

/// Sub-model on a successor-closed state set. Returns the model and the
/// original index of each kept state.
pub fn restrict_mdp(mdp: &FlatMdp, keep: &BTreeSet<usize>) -> Result<(FlatMdp, Vec<usize>)> {
    if let Some(&bad) = keep.iter().find(|&&s| s >= mdp.n_states()) {
        return Err(Error::UnknownState(bad.to_string()));
    }
    let kept: Vec<usize> = keep.iter().copied().collect();
    let index: BTreeMap<usize, usize> = kept.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut actions = Vec::with_capacity(mdp.n_actions());
    for record in &mdp.actions {
        let mut rows = Vec::with_capacity(kept.len());
        for &s in &kept {
            let mut row = Vec::new();
            for &(j, p) in record.matrix.row(s) {
                match index.get(&j) {
                    Some(&k) => row.push((k, p)),
                    None if p > 0.0 => {
                        return Err(Error::Leakage {
                            state: mdp.states[s].clone(),
                            action: record.name.clone(),
                        })
                    }
                    None => {}
                }
            }
            rows.push(row);
        }
        let mut out = ActionRecord::new(record.name.clone(), TransitionMatrix::from_rows(rows), record.default_cost);
        for (k, &s) in kept.iter().enumerate() {
            if let Some(&c) = record.cost_overrides.get(&s) {
                out.cost_overrides.insert(k, c);
            }
        }
        actions.push(out);
    }
    let initial = mdp.initial.as_ref().map(|init| kept.iter().map(|&s| init[s]).collect());
    let restricted = FlatMdp {
        states: kept.iter().map(|&s| mdp.states[s].clone()).collect(),
        actions,
        reward: kept.iter().map(|&s| mdp.reward[s]).collect(),
        criterion: mdp.criterion,
        initial,
    }
    .checked()?;
    Ok((restricted, kept))
}

/// State node of an expectimax tree; `depth` counts the stages still to be
/// searched below it.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub state: usize,
    pub depth: usize,
    pub value: f64,
    pub children: Vec<ActionNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionNode {
    pub action: usize,
    /// Cost plus expected value of the outcomes, excluding the parent's reward.
    pub value: f64,
    pub outcomes: Vec<(f64, SearchNode)>,
}

impl SearchNode {
    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|a| 1 + a.outcomes.iter().map(|(_, c)| c.node_count()).sum::<usize>())
            .sum::<usize>()
    }
}

pub type Heuristic<'a> = &'a dyn Fn(usize) -> f64;

fn best_child(children: &[ActionNode]) -> Option<&ActionNode> {
    let mut best: Option<&ActionNode> = None;
    for c in children {
        if best.is_none_or(|b| c.value > b.value) {
            best = Some(c);
        }
    }
    best
}

fn build(mdp: &FlatMdp, s: usize, depth: usize, heuristic: Option<Heuristic>) -> SearchNode {
    if depth == 0 {
        let value = heuristic.map_or(mdp.reward[s], |h| h(s));
        return SearchNode {
            state: s,
            depth,
            value,
            children: Vec::new(),
        };
    }
    let children: Vec<ActionNode> = (0..mdp.n_actions())
        .map(|a| {
            let row = mdp.row(a, s);
            let outcomes: Vec<(f64, SearchNode)> = row
                .iter()
                .map(|&(j, p)| (p, build(mdp, j, depth - 1, heuristic)))
                .collect();
            let mut values = outcomes.iter().map(|(_, c)| c.value);
            let future = row_expectation(row, |_| values.next().expect("one child per successor"));
            ActionNode {
                action: a,
                value: mdp.cost(a, s) + 1.0 * future,
                outcomes,
            }
        })
        .collect();
    let best = best_child(&children).expect("models have at least one action").value;
    SearchNode {
        state: s,
        depth,
        value: mdp.reward[s] + best,
        children,
    }
}

/// Depth-limited expectimax from `s`: the root value, the best action
/// (lowest index on ties, none at depth 0) and the full search tree.
pub fn expectimax(
    mdp: &FlatMdp,
    s: usize,
    depth: usize,
    heuristic: Option<Heuristic>,
) -> Result<(f64, Option<usize>, SearchNode)> {
    if s >= mdp.n_states() {
        return Err(Error::UnknownState(s.to_string()));
    }
    let root = build(mdp, s, depth, heuristic);
    let action = best_child(&root.children).map(|a| a.action);
    Ok((root.value, action, root))
}

/// Repeatedly searches from the current state, takes the chosen action and
/// samples its outcome. Near the end the search depth shrinks to the number
/// of remaining steps.
pub fn plan_execute_loop(
    mdp: &FlatMdp,
    s0: usize,
    search_depth: usize,
    steps: usize,
    seed: u64,
    heuristic: Option<Heuristic>,
) -> Result<Trajectory> {
    if s0 >= mdp.n_states() {
        return Err(Error::UnknownState(s0.to_string()));
    }
    if search_depth == 0 && steps > 0 {
        return Err(Error::Argument("search depth must be positive to choose actions".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut state = s0;
    let mut history = Vec::with_capacity(steps);
    for k in 0..steps {
        let depth = search_depth.min(steps - k);
        let (_, action, _) = expectimax(mdp, state, depth, heuristic)?;
        let action = action.expect("positive depth yields an action");
        history.push((state, action));
        state = sample_index(&mut rng, mdp.row(action, state));
    }
    Ok(Trajectory::new(history, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::vi_finite;
    use crate::random::random_mdp;

    #[test]
    fn absorbing_start_reaches_itself() {
        let m = FlatMdp::new(
            vec!["a".into(), "b".into()],
            vec![ActionRecord::new("stay", TransitionMatrix::identity(2), 0.0)],
            vec![0.0, 1.0],
            None,
        )
        .unwrap();
        assert_eq!(reachable_set(&m, &BTreeSet::from([1])).unwrap(), BTreeSet::from([1]));
    }

    #[test]
    fn leakage_names_state_and_action() {
        let m = FlatMdp::new(
            vec!["a".into(), "b".into()],
            vec![ActionRecord::new("go", TransitionMatrix::from_rows(vec![vec![(1, 1.0)], vec![(1, 1.0)]]), 0.0)],
            vec![0.0, 1.0],
            None,
        )
        .unwrap();
        match restrict_mdp(&m, &BTreeSet::from([0])) {
            Err(Error::Leakage { state, action }) => assert_eq!((state.as_str(), action.as_str()), ("a", "go")),
            other => panic!("expected leakage, got {other:?}"),
        }
    }

    #[test]
    fn depth_zero_is_reward() {
        let m = random_mdp(5, 2, 3);
        let (v, a, tree) = expectimax(&m, 2, 0, None).unwrap();
        assert_eq!(v, m.reward[2]);
        assert_eq!(a, None);
        assert_eq!(tree.node_count(), 1);
    }

    #[test]
    fn matches_finite_dp_exactly() {
        for seed in 0..5 {
            let m = random_mdp(6, 3, seed);
            let sol = vi_finite(&m, 3);
            for s in 0..6 {
                for d in 1..=3 {
                    let (v, a, _) = expectimax(&m, s, d, None).unwrap();
                    assert_eq!(v, sol.values[d].get(s));
                    assert_eq!(a, Some(sol.policy.action(s, d)));
                }
            }
        }
    }

    #[test]
    fn execution_is_reproducible() {
        let m = random_mdp(8, 3, 11);
        let a = plan_execute_loop(&m, 0, 2, 10, 99, None).unwrap();
        assert_eq!(a, plan_execute_loop(&m, 0, 2, 10, 99, None).unwrap());
        assert_eq!(a.steps.len(), 10);
    }
}
