use crate::error::{Error, Result};
use crate::mdp::{ActionRecord, FlatMdp, StationaryPolicy, TransitionMatrix, ValueFunction};

/// Disjoint, exhaustive, nonempty blocks of flat states.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub blocks: Vec<Vec<usize>>,
    pub labels: Vec<Option<String>>,
}

impl Partition {
    pub fn new(mut blocks: Vec<Vec<usize>>, n_states: usize) -> Result<Self> {
        let mut seen = vec![false; n_states];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::Argument("partition has an empty block".into()));
            }
            b.sort_unstable();
            for &s in b.iter() {
                if s >= n_states || std::mem::replace(&mut seen[s], true) {
                    return Err(Error::Argument(format!("state {s} is out of range or in two blocks")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|&x| !x) {
            return Err(Error::Argument(format!("state {missing} is in no block")));
        }
        let labels = vec![None; blocks.len()];
        Ok(Partition { blocks, labels })
    }

    pub fn singletons(n_states: usize) -> Self {
        Partition {
            blocks: (0..n_states).map(|s| vec![s]).collect(),
            labels: vec![None; n_states],
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block index of every state.
    pub fn block_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_states()];
        for (k, b) in self.blocks.iter().enumerate() {
            for &s in b {
                out[s] = k;
            }
        }
        out
    }

    pub fn block_name(&self, k: usize) -> String {
        self.labels[k].clone().unwrap_or_else(|| format!("B{k}"))
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Splits each block into groups of states whose signatures are within
/// `tol` of the group's first member, in state order.
fn split_by<F: Fn(usize) -> Vec<f64>>(blocks: &[Vec<usize>], tol: f64, signature: F) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(blocks.len());
    for block in blocks {
        let mut groups: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
        for &s in block {
            let sig = signature(s);
            match groups.iter_mut().find(|(rep, _)| close(rep, &sig, tol)) {
                Some((_, members)) => members.push(s),
                None => groups.push((sig, vec![s])),
            }
        }
        out.extend(groups.into_iter().map(|(_, m)| m));
    }
    out
}

fn local_signature(mdp: &FlatMdp, s: usize) -> Vec<f64> {
    std::iter::once(mdp.reward[s])
        .chain((0..mdp.n_actions()).map(|a| mdp.cost(a, s)))
        .collect()
}

/// `Pr(block | s, a)` for every action and block, action-major.
fn block_signature(mdp: &FlatMdp, block_of: &[usize], n_blocks: usize, s: usize) -> Vec<f64> {
    let mut sig = vec![0.0; mdp.n_actions() * n_blocks];
    for a in 0..mdp.n_actions() {
        for &(j, p) in mdp.row(a, s) {
            sig[a * n_blocks + block_of[j]] += p;
        }
    }
    sig
}

/// States grouped by reward and per-action cost.
pub fn initial_partition(mdp: &FlatMdp, tol: f64) -> Partition {
    let blocks = split_by(&[(0..mdp.n_states()).collect()], tol, |s| local_signature(mdp, s));
    let labels = vec![None; blocks.len()];
    Partition { blocks, labels }
}

/// The partitions produced by each refinement pass, starting with `initial`
/// and ending with the first stable one.
pub fn refine_trace(mdp: &FlatMdp, initial: &Partition, tol: f64) -> Result<Vec<Partition>> {
    if initial.n_states() != mdp.n_states() {
        return Err(Error::Argument(format!(
            "partition covers {} states but the model has {}",
            initial.n_states(),
            mdp.n_states()
        )));
    }
    let mut trace = vec![initial.clone()];
    loop {
        let current = trace.last().expect("nonempty trace");
        let block_of = current.block_of();
        let n_blocks = current.len();
        let mut labels = Vec::new();
        let mut blocks = Vec::new();
        for (k, block) in current.blocks.iter().enumerate() {
            let parts = split_by(std::slice::from_ref(block), tol, |s| block_signature(mdp, &block_of, n_blocks, s));
            let keep_label = parts.len() == 1;
            for part in parts {
                labels.push(if keep_label { current.labels[k].clone() } else { None });
                blocks.push(part);
            }
        }
        if blocks.len() == n_blocks {
            return Ok(trace);
        }
        trace.push(Partition { blocks, labels });
    }
}

/// Coarsest refinement of `initial` in which states of a block agree, within
/// `tol`, on the probability of reaching every block under every action.
pub fn refine_partition(mdp: &FlatMdp, initial: &Partition, tol: f64) -> Result<Partition> {
    Ok(refine_trace(mdp, initial, tol)?.pop().expect("nonempty trace"))
}

/// Aggregate model whose states are the blocks of a stable partition.
pub fn quotient(mdp: &FlatMdp, p: &Partition, tol: f64) -> Result<FlatMdp> {
    if p.n_states() != mdp.n_states() {
        return Err(Error::Argument("partition does not cover the model".into()));
    }
    let block_of = p.block_of();
    let n_blocks = p.len();
    for (k, block) in p.blocks.iter().enumerate() {
        let rep = block[0];
        let local = local_signature(mdp, rep);
        let sig = block_signature(mdp, &block_of, n_blocks, rep);
        for &s in &block[1..] {
            if !close(&local, &local_signature(mdp, s), tol) {
                return Err(Error::Unstable(format!(
                    "`{}` and `{}` in {} differ in reward or cost",
                    mdp.states[rep],
                    mdp.states[s],
                    p.block_name(k)
                )));
            }
            if !close(&sig, &block_signature(mdp, &block_of, n_blocks, s), tol) {
                return Err(Error::Unstable(format!(
                    "`{}` and `{}` in {} differ in block transition probabilities",
                    mdp.states[rep],
                    mdp.states[s],
                    p.block_name(k)
                )));
            }
        }
    }
    let actions = (0..mdp.n_actions())
        .map(|a| {
            let rows = p
                .blocks
                .iter()
                .map(|b| {
                    let sig = block_signature(mdp, &block_of, n_blocks, b[0]);
                    sig[a * n_blocks..(a + 1) * n_blocks]
                        .iter()
                        .enumerate()
                        .filter(|(_, &q)| q > 0.0)
                        .map(|(j, &q)| (j, q))
                        .collect()
                })
                .collect();
            let record = &mdp.actions[a];
            let mut out = ActionRecord::new(record.name.clone(), TransitionMatrix::from_rows(rows), record.default_cost);
            for (k, b) in p.blocks.iter().enumerate() {
                let c = mdp.cost(a, b[0]);
                if c != record.default_cost {
                    out.cost_overrides.insert(k, c);
                }
            }
            out
        })
        .collect();
    let initial = mdp.initial.as_ref().map(|init| {
        p.blocks.iter().map(|b| b.iter().map(|&s| init[s]).sum()).collect()
    });
    FlatMdp {
        states: (0..n_blocks).map(|k| p.block_name(k)).collect(),
        actions,
        reward: p.blocks.iter().map(|b| mdp.reward[b[0]]).collect(),
        criterion: mdp.criterion,
        initial,
    }
    .checked()
}

/// Gives each flat state its block's action and value.
pub fn lift_solution(
    policy: &StationaryPolicy,
    values: &ValueFunction,
    p: &Partition,
) -> (StationaryPolicy, ValueFunction) {
    let block_of = p.block_of();
    (
        StationaryPolicy::new(block_of.iter().map(|&k| policy.action(k)).collect()),
        ValueFunction::new(block_of.iter().map(|&k| values.get(k)).collect()),
    )
}
