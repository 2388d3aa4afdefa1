//! Multiway decision trees over state variables.
//!
//! A node tests one variable, either in the current state or (for synchronic
//! dependencies) in the successor state. Each value routes to an explicit
//! branch or, failing that, to the optional `else` subtree.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// A variable tested by a tree node; `post` marks a successor-state test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarRef {
    pub var: usize,
    pub post: bool,
}

impl VarRef {
    pub fn pre(var: usize) -> Self {
        VarRef { var, post: false }
    }

    pub fn post(var: usize) -> Self {
        VarRef { var, post: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionTree<L> {
    Leaf(L),
    Node(Box<TreeNode<L>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode<L> {
    pub test: VarRef,
    /// `(value, subtree)` pairs in increasing value order.
    pub branches: Vec<(usize, DecisionTree<L>)>,
    pub otherwise: Option<DecisionTree<L>>,
}

impl<L> TreeNode<L> {
    pub fn child(&self, value: usize) -> Option<&DecisionTree<L>> {
        self.branches
            .iter()
            .find(|(v, _)| *v == value)
            .map(|(_, t)| t)
            .or(self.otherwise.as_ref())
    }
}

/// Closed real interval used by approximate value trees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

pub type ValueTree = DecisionTree<f64>;
pub type IntervalTree = DecisionTree<Interval>;
/// Leaves name action indices.
pub type PolicyTree = DecisionTree<usize>;

impl<L> DecisionTree<L> {
    pub fn leaf(payload: L) -> Self {
        DecisionTree::Leaf(payload)
    }

    pub fn node(test: VarRef, branches: Vec<(usize, DecisionTree<L>)>, otherwise: Option<DecisionTree<L>>) -> Self {
        let mut branches = branches;
        branches.sort_by_key(|(v, _)| *v);
        DecisionTree::Node(Box::new(TreeNode {
            test,
            branches,
            otherwise,
        }))
    }

    /// A node with one subtree per domain value.
    pub fn split(test: VarRef, children: Vec<DecisionTree<L>>) -> Self {
        DecisionTree::node(test, children.into_iter().enumerate().collect(), None)
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, DecisionTree::Leaf(_))
    }

    pub fn as_leaf(&self) -> Option<&L> {
        match self {
            DecisionTree::Leaf(l) => Some(l),
            DecisionTree::Node(_) => None,
        }
    }

    /// Follows the path selected by a current state and, for synchronic
    /// tests, a (possibly partial) successor state.
    pub fn eval_with(&self, pre: &[usize], post: &[Option<usize>]) -> Result<&L> {
        let mut t = self;
        loop {
            match t {
                DecisionTree::Leaf(l) => return Ok(l),
                DecisionTree::Node(n) => {
                    let value = if n.test.post {
                        post.get(n.test.var).copied().flatten().ok_or_else(|| {
                            Error::MalformedTree(format!(
                                "successor value of variable {} is not yet known",
                                n.test.var
                            ))
                        })?
                    } else {
                        *pre.get(n.test.var).ok_or_else(|| {
                            Error::MalformedTree(format!("state does not assign variable {}", n.test.var))
                        })?
                    };
                    t = n.child(value).ok_or_else(|| {
                        Error::MalformedTree(format!(
                            "no branch for value {value} of variable {} and no else",
                            n.test.var
                        ))
                    })?;
                }
            }
        }
    }

    /// Evaluates a tree that tests only current-state variables.
    pub fn eval(&self, state: &[usize]) -> Result<&L> {
        self.eval_with(state, &[])
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 1,
            DecisionTree::Node(n) => {
                n.branches.iter().map(|(_, t)| t.leaf_count()).sum::<usize>()
                    + n.otherwise.as_ref().map_or(0, |t| t.leaf_count())
            }
        }
    }

    pub fn leaves(&self) -> Vec<&L> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a L>) {
        match self {
            DecisionTree::Leaf(l) => out.push(l),
            DecisionTree::Node(n) => {
                for (_, t) in &n.branches {
                    t.collect_leaves(out);
                }
                if let Some(t) = &n.otherwise {
                    t.collect_leaves(out);
                }
            }
        }
    }

    /// Tested variables in depth-first first-encounter order.
    pub fn tested(&self) -> Vec<VarRef> {
        let mut out = Vec::new();
        self.collect_tested(&mut out);
        out
    }

    fn collect_tested(&self, out: &mut Vec<VarRef>) {
        if let DecisionTree::Node(n) = self {
            if !out.contains(&n.test) {
                out.push(n.test);
            }
            for (_, t) in &n.branches {
                t.collect_tested(out);
            }
            if let Some(t) = &n.otherwise {
                t.collect_tested(out);
            }
        }
    }

    pub fn map<M>(&self, f: &mut impl FnMut(&L) -> M) -> DecisionTree<M> {
        match self {
            DecisionTree::Leaf(l) => DecisionTree::Leaf(f(l)),
            DecisionTree::Node(n) => DecisionTree::Node(Box::new(TreeNode {
                test: n.test,
                branches: n.branches.iter().map(|(v, t)| (*v, t.map(f))).collect(),
                otherwise: n.otherwise.as_ref().map(|t| t.map(f)),
            })),
        }
    }

    /// Checks that every variable and value is declared, every value routes
    /// somewhere, and no variable repeats on a path.
    /// Renames tested variables; leaves are cloned.
    pub fn rename_vars(&self, rename: &impl Fn(usize) -> usize) -> DecisionTree<L>
    where
        L: Clone,
    {
        match self {
            DecisionTree::Leaf(l) => DecisionTree::Leaf(l.clone()),
            DecisionTree::Node(n) => DecisionTree::Node(Box::new(TreeNode {
                test: VarRef {
                    var: rename(n.test.var),
                    post: n.test.post,
                },
                branches: n.branches.iter().map(|(v, c)| (*v, c.rename_vars(rename))).collect(),
                otherwise: n.otherwise.as_ref().map(|c| c.rename_vars(rename)),
            })),
        }
    }

    pub fn check(&self, domains: &[usize]) -> Result<()> {
        self.check_path(domains, &mut Vec::new())
    }

    fn check_path(&self, domains: &[usize], path: &mut Vec<VarRef>) -> Result<()> {
        let DecisionTree::Node(n) = self else {
            return Ok(());
        };
        let size = *domains
            .get(n.test.var)
            .ok_or_else(|| Error::MalformedTree(format!("undeclared variable {}", n.test.var)))?;
        if path.contains(&n.test) {
            return Err(Error::MalformedTree(format!(
                "variable {} is tested twice on one path",
                n.test.var
            )));
        }
        let mut seen = vec![false; size];
        for (v, _) in &n.branches {
            if *v >= size {
                return Err(Error::MalformedTree(format!(
                    "value {v} is outside the domain of variable {}",
                    n.test.var
                )));
            }
            if seen[*v] {
                return Err(Error::MalformedTree(format!(
                    "value {v} of variable {} has two branches",
                    n.test.var
                )));
            }
            seen[*v] = true;
        }
        if n.otherwise.is_none() && seen.iter().any(|s| !s) {
            return Err(Error::MalformedTree(format!(
                "variable {} has uncovered values and no else branch",
                n.test.var
            )));
        }
        path.push(n.test);
        for (_, t) in &n.branches {
            t.check_path(domains, path)?;
        }
        if let Some(t) = &n.otherwise {
            t.check_path(domains, path)?;
        }
        path.pop();
        Ok(())
    }
}

impl<L: Clone + PartialEq> DecisionTree<L> {
    /// Replaces every test of `test` by the subtree for `value`.
    pub fn restrict(&self, test: VarRef, value: usize) -> DecisionTree<L> {
        match self {
            DecisionTree::Leaf(_) => self.clone(),
            DecisionTree::Node(n) if n.test == test => match n.child(value) {
                Some(t) => t.restrict(test, value),
                None => self.clone(),
            },
            DecisionTree::Node(n) => DecisionTree::Node(Box::new(TreeNode {
                test: n.test,
                branches: n
                    .branches
                    .iter()
                    .map(|(v, t)| (*v, t.restrict(test, value)))
                    .collect(),
                otherwise: n.otherwise.as_ref().map(|t| t.restrict(test, value)),
            })),
        }
    }

    /// Restricts by every assignment in `context`.
    pub fn restrict_all(&self, context: &[(VarRef, usize)]) -> DecisionTree<L> {
        self.simplify_in(context, None)
    }

    /// Canonical form: redundant tests removed, nodes whose subtrees all
    /// coincide collapsed, and repeated sibling subtrees folded into an
    /// `else` branch.
    pub fn simplify(&self, domains: &[usize]) -> DecisionTree<L> {
        self.simplify_in(&[], Some(domains))
    }

    fn simplify_in(&self, context: &[(VarRef, usize)], domains: Option<&[usize]>) -> DecisionTree<L> {
        let mut ctx = context.to_vec();
        simplify_rec(self, &mut ctx, domains)
    }
}

fn lookup(ctx: &[(VarRef, usize)], test: VarRef) -> Option<usize> {
    ctx.iter().rev().find(|(t, _)| *t == test).map(|&(_, v)| v)
}

fn simplify_rec<L: Clone + PartialEq>(
    t: &DecisionTree<L>,
    ctx: &mut Vec<(VarRef, usize)>,
    domains: Option<&[usize]>,
) -> DecisionTree<L> {
    let DecisionTree::Node(n) = t else {
        return t.clone();
    };
    if let Some(v) = lookup(ctx, n.test) {
        return match n.child(v) {
            Some(c) => simplify_rec(c, ctx, domains),
            None => t.clone(),
        };
    }
    match domains {
        Some(domains) => {
            let size = domains[n.test.var];
            let children = (0..size)
                .map(|v| match n.child(v) {
                    Some(c) => {
                        ctx.push((n.test, v));
                        let s = simplify_rec(c, ctx, Some(domains));
                        ctx.pop();
                        Some(s)
                    }
                    None => None,
                })
                .collect::<Option<Vec<_>>>();
            match children {
                Some(children) => build_node(n.test, children),
                None => t.clone(),
            }
        }
        None => {
            let mut rebuild = |c: &DecisionTree<L>, v: Option<usize>| {
                if let Some(v) = v {
                    ctx.push((n.test, v));
                }
                let s = simplify_rec(c, ctx, None);
                if v.is_some() {
                    ctx.pop();
                }
                s
            };
            let branches = n.branches.iter().map(|(v, c)| (*v, rebuild(c, Some(*v)))).collect();
            let otherwise = n.otherwise.as_ref().map(|c| rebuild(c, None));
            DecisionTree::Node(Box::new(TreeNode {
                test: n.test,
                branches,
                otherwise,
            }))
        }
    }
}

/// Builds a node from one subtree per domain value, collapsing it when all
/// subtrees agree and otherwise folding the most frequent repeated subtree
/// (earliest value on ties) into `else`.
pub fn build_node<L: Clone + PartialEq>(test: VarRef, children: Vec<DecisionTree<L>>) -> DecisionTree<L> {
    if children.iter().all(|c| c == &children[0]) {
        return children.into_iter().next().expect("domain is nonempty");
    }
    let mut best: Option<(usize, usize)> = None;
    for (i, c) in children.iter().enumerate() {
        if children[..i].contains(c) {
            continue;
        }
        let count = children.iter().filter(|d| *d == c).count();
        if count >= 2 && best.is_none_or(|(_, k)| count > k) {
            best = Some((i, count));
        }
    }
    let otherwise = best.map(|(i, _)| children[i].clone());
    let branches = children
        .into_iter()
        .enumerate()
        .filter(|(_, c)| Some(c) != otherwise.as_ref())
        .collect();
    DecisionTree::Node(Box::new(TreeNode {
        test,
        branches,
        otherwise,
    }))
}

pub fn simplify_tree<L: Clone + PartialEq>(tree: &DecisionTree<L>, domains: &[usize]) -> DecisionTree<L> {
    tree.simplify(domains)
}

/// Pointwise combination of two current-state trees, simplified.
pub fn combine<A, B, C>(
    a: &DecisionTree<A>,
    b: &DecisionTree<B>,
    domains: &[usize],
    f: &mut impl FnMut(&A, &B) -> C,
) -> DecisionTree<C>
where
    A: Clone + PartialEq,
    B: Clone + PartialEq,
    C: Clone + PartialEq,
{
    combine_rec(a, b, domains, &mut Vec::new(), f)
}

fn combine_rec<A, B, C>(
    a: &DecisionTree<A>,
    b: &DecisionTree<B>,
    domains: &[usize],
    ctx: &mut Vec<(VarRef, usize)>,
    f: &mut impl FnMut(&A, &B) -> C,
) -> DecisionTree<C>
where
    A: Clone + PartialEq,
    B: Clone + PartialEq,
    C: Clone + PartialEq,
{
    match (a, b) {
        (DecisionTree::Leaf(x), DecisionTree::Leaf(y)) => DecisionTree::Leaf(f(x, y)),
        (DecisionTree::Node(n), _) => {
            if let Some(v) = lookup(ctx, n.test) {
                let c = n.child(v).expect("well-formed tree");
                return combine_rec(c, b, domains, ctx, f);
            }
            let children = (0..domains[n.test.var])
                .map(|v| {
                    ctx.push((n.test, v));
                    let c = combine_rec(n.child(v).expect("well-formed tree"), b, domains, ctx, f);
                    ctx.pop();
                    c
                })
                .collect();
            build_node(n.test, children)
        }
        (DecisionTree::Leaf(_), DecisionTree::Node(n)) => {
            if let Some(v) = lookup(ctx, n.test) {
                let c = n.child(v).expect("well-formed tree");
                return combine_rec(a, c, domains, ctx, f);
            }
            let children = (0..domains[n.test.var])
                .map(|v| {
                    ctx.push((n.test, v));
                    let c = combine_rec(a, n.child(v).expect("well-formed tree"), domains, ctx, f);
                    ctx.pop();
                    c
                })
                .collect();
            build_node(n.test, children)
        }
    }
}

/// Sum of scalar trees, simplified.
pub fn sum_trees(trees: &[ValueTree], domains: &[usize]) -> ValueTree {
    let mut acc = DecisionTree::Leaf(0.0);
    for t in trees {
        acc = combine(&acc, t, domains, &mut |x, y| x + y);
    }
    acc.simplify(domains)
}

/// Calls `f` on every full assignment in lexicographic order.
pub fn for_each_assignment(domains: &[usize], mut f: impl FnMut(&[usize])) {
    if domains.contains(&0) {
        return;
    }
    let mut state = vec![0; domains.len()];
    loop {
        f(&state);
        let mut k = domains.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            state[k] += 1;
            if state[k] < domains[k] {
                break;
            }
            state[k] = 0;
        }
    }
}

/// Number of distinct leaf payloads, keyed by a caller-supplied hash key.
pub fn distinct_leaves<L, K: std::hash::Hash + Eq>(tree: &DecisionTree<L>, key: impl Fn(&L) -> K) -> usize {
    let mut seen = HashMap::new();
    for l in tree.leaves() {
        seen.insert(key(l), ());
    }
    seen.len()
}
