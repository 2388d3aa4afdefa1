//! Structure of the Markov chain induced by a stationary policy.
//!
//! Recurrent classes are the strongly connected components of the arc graph
//! (arcs are entries above `eps`) that have no arc leaving them; everything
//! else is transient.

use std::collections::BTreeSet;

use crate::mdp::{FlatMdp, StationaryPolicy, TransitionMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    pub states: Vec<String>,
    pub matrix: TransitionMatrix,
}

impl MarkovChain {
    pub fn n(&self) -> usize {
        self.states.len()
    }

    fn arcs(&self, eps: f64) -> Vec<Vec<usize>> {
        self.matrix
            .rows()
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|&&(_, p)| p > eps)
                    .map(|&(j, _)| j)
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainStructure {
    /// Ordered by smallest member.
    pub recurrent_classes: Vec<BTreeSet<usize>>,
    pub transient: BTreeSet<usize>,
    pub absorbing: BTreeSet<usize>,
}

/// Row `i` of the result is row `i` of the matrix of `policy(s_i)`.
pub fn induce_chain(mdp: &FlatMdp, policy: &StationaryPolicy) -> MarkovChain {
    let rows = (0..mdp.n_states())
        .map(|i| mdp.row(policy.action(i), i).to_vec())
        .collect();
    MarkovChain {
        states: mdp.states.clone(),
        matrix: TransitionMatrix::from_rows(rows),
    }
}

pub fn classify_chain(chain: &MarkovChain, eps: f64) -> ChainStructure {
    let arcs = chain.arcs(eps);
    let (component, count) = strongly_connected_components(&arcs);

    let mut is_sink = vec![true; count];
    for (i, succ) in arcs.iter().enumerate() {
        if succ.iter().any(|&j| component[j] != component[i]) {
            is_sink[component[i]] = false;
        }
    }

    let mut classes: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); count];
    for (i, &c) in component.iter().enumerate() {
        classes[c].insert(i);
    }

    let mut recurrent_classes = Vec::new();
    let mut transient = BTreeSet::new();
    for (c, members) in classes.into_iter().enumerate() {
        if is_sink[c] {
            recurrent_classes.push(members);
        } else {
            transient.extend(members);
        }
    }
    recurrent_classes.sort_by_key(|class| *class.iter().next().unwrap());

    let absorbing = recurrent_classes
        .iter()
        .filter(|class| class.len() == 1)
        .map(|class| *class.iter().next().unwrap())
        .filter(|&s| chain.matrix.get(s, s) >= 1.0 - eps)
        .collect();

    ChainStructure {
        recurrent_classes,
        transient,
        absorbing,
    }
}

/// True iff no member of `subset` sends more than `eps` probability outside it.
pub fn is_closed(chain: &MarkovChain, subset: &BTreeSet<usize>, eps: f64) -> bool {
    subset.iter().all(|&i| {
        let leaving: f64 = chain
            .matrix
            .row(i)
            .iter()
            .filter(|(j, _)| !subset.contains(j))
            .map(|&(_, p)| p)
            .sum();
        leaving <= eps
    })
}

/// Iterative Tarjan. Returns the component id of every vertex and the
/// number of components.
fn strongly_connected_components(arcs: &[Vec<usize>]) -> (Vec<usize>, usize) {
    const UNVISITED: usize = usize::MAX;
    let n = arcs.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut component = vec![UNVISITED; n];
    let mut next_index = 0;
    let mut count = 0;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        // (vertex, position of the next arc to explore)
        let mut frames = vec![(root, 0usize)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&(v, pos)) = frames.last() {
            if let Some(&w) = arcs[v].get(pos) {
                frames.last_mut().unwrap().1 += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w] = false;
                    component[w] = count;
                    if w == v {
                        break;
                    }
                }
                count += 1;
            }
        }
    }
    (component, count)
}
