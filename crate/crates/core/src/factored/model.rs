use std::collections::{BTreeSet, HashSet};

use super::tree::{DecisionTree, ValueTree, VarRef};
use crate::error::{Error, Result};
use crate::mdp::{Criterion, SUM_TOL};

/// Default limit on the number of states [`super::ground`] will enumerate.
pub const GROUNDING_CAP: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSpec {
    pub name: String,
    pub domain: Vec<String>,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, domain: &[&str]) -> Self {
        VariableSpec {
            name: name.into(),
            domain: domain.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn boolean(name: impl Into<String>) -> Self {
        VariableSpec::new(name, &["t", "f"])
    }

    pub fn size(&self) -> usize {
        self.domain.len()
    }

    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.domain.iter().position(|v| v == value)
    }
}

/// CPT leaves: a distribution over the post-variable's domain.
pub type CptTree = DecisionTree<Vec<f64>>;

/// One outcome of a probabilistic STRIPS operator: the listed variables are
/// overwritten, everything else persists.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub changes: Vec<(usize, usize)>,
    pub prob: f64,
}

impl Outcome {
    pub fn new(mut changes: Vec<(usize, usize)>, prob: f64) -> Self {
        changes.sort();
        Outcome { changes, prob }
    }

    pub fn apply(&self, state: &[usize]) -> Vec<usize> {
        let mut next = state.to_vec();
        for &(var, val) in &self.changes {
            next[var] = val;
        }
        next
    }
}

pub type EffectTree = DecisionTree<Vec<Outcome>>;

/// Per-action two-slice network: one CPT per post-state variable.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSliceNet {
    pub name: String,
    pub cost: ValueTree,
    /// `cpts[x]` is the CPT for variable `x` at the next stage.
    pub cpts: Vec<CptTree>,
}

impl TwoSliceNet {
    /// True iff no CPT tests a successor-state variable.
    pub fn is_simple(&self) -> bool {
        self.cpts
            .iter()
            .all(|c| c.tested().iter().all(|t| !t.post))
    }

    /// Post-variables in an order where every synchronic parent comes first,
    /// lowest index first among the ready ones.
    pub fn synchronic_order(&self) -> Result<Vec<usize>> {
        let n = self.cpts.len();
        let parents: Vec<BTreeSet<usize>> = self
            .cpts
            .iter()
            .map(|c| c.tested().iter().filter(|t| t.post).map(|t| t.var).collect())
            .collect();
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let next = (0..n).find(|&x| !placed[x] && parents[x].iter().all(|&p| placed[p]));
            match next {
                Some(x) => {
                    placed[x] = true;
                    order.push(x);
                }
                None => {
                    return Err(Error::InvalidModel(format!(
                        "synchronic dependencies of `{}` contain a cycle",
                        self.name
                    )))
                }
            }
        }
        Ok(order)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbStripsOp {
    pub name: String,
    pub cost: ValueTree,
    /// Context tree whose leaves list the stochastic effects.
    pub context: EffectTree,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactoredAction {
    Net(TwoSliceNet),
    Pso(ProbStripsOp),
}

impl FactoredAction {
    pub fn name(&self) -> &str {
        match self {
            FactoredAction::Net(n) => &n.name,
            FactoredAction::Pso(p) => &p.name,
        }
    }

    pub fn cost(&self) -> &ValueTree {
        match self {
            FactoredAction::Net(n) => &n.cost,
            FactoredAction::Pso(p) => &p.cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMdp {
    pub variables: Vec<VariableSpec>,
    pub actions: Vec<FactoredAction>,
    /// Additive reward components.
    pub reward: Vec<ValueTree>,
    pub criterion: Option<Criterion>,
}

impl FactoredMdp {
    pub fn domains(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.size()).collect()
    }

    pub fn state_count(&self) -> u128 {
        self.variables
            .iter()
            .map(|v| v.size() as u128)
            .try_fold(1u128, |acc, d| acc.checked_mul(d))
            .unwrap_or(u128::MAX)
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn action_index(&self, name: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a.name() == name)
            .ok_or_else(|| Error::UnknownAction(name.to_string()))
    }

    /// Flat index of a full assignment: the first variable is most significant.
    pub fn encode(&self, state: &[usize]) -> usize {
        self.variables
            .iter()
            .zip(state)
            .fold(0, |acc, (v, &x)| acc * v.size() + x)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut state = vec![0; self.variables.len()];
        for (k, v) in self.variables.iter().enumerate().rev() {
            state[k] = index % v.size();
            index /= v.size();
        }
        state
    }

    /// `X=v,Y=w,...` in declaration order.
    pub fn state_name(&self, state: &[usize]) -> String {
        self.variables
            .iter()
            .zip(state)
            .map(|(v, &x)| format!("{}={}", v.name, v.domain[x]))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses a full or partial assignment written `X=v,Y=w`.
    pub fn parse_assignment(&self, text: &str) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("expected VAR=VALUE, found `{part}`")))?;
            let var = self.var_index(name.trim())?;
            let val = self.variables[var].value_index(value.trim()).ok_or_else(|| {
                Error::Argument(format!("`{}` is not a value of `{}`", value.trim(), name.trim()))
            })?;
            if out.iter().any(|&(x, _)| x == var) {
                return Err(Error::Argument(format!("variable `{}` assigned twice", name.trim())));
            }
            out.push((var, val));
        }
        Ok(out)
    }

    pub fn reward_at(&self, state: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for component in &self.reward {
            total += *component.eval(state)?;
        }
        Ok(total)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let domains = self.domains();
        let mut names = HashSet::new();
        for v in &self.variables {
            if v.domain.is_empty() {
                return Err(Error::InvalidModel(format!("variable `{}` has an empty domain", v.name)));
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::InvalidModel(format!("duplicate variable `{}`", v.name)));
            }
            let mut values = HashSet::new();
            for x in &v.domain {
                if !values.insert(x.as_str()) {
                    return Err(Error::InvalidModel(format!(
                        "variable `{}` lists value `{x}` twice",
                        v.name
                    )));
                }
            }
        }
        let mut action_names = HashSet::new();
        for a in &self.actions {
            if !action_names.insert(a.name()) {
                return Err(Error::InvalidModel(format!("duplicate action `{}`", a.name())));
            }
        }
        if self.actions.is_empty() {
            return Err(Error::InvalidModel("model declares no actions".into()));
        }
        for r in &self.reward {
            check_pre_only(r, "reward tree")?;
            r.check(&domains)?;
        }
        for a in &self.actions {
            check_pre_only(a.cost(), &format!("cost of `{}`", a.name()))?;
            a.cost().check(&domains)?;
            match a {
                FactoredAction::Net(net) => self.validate_net(net, &domains)?,
                FactoredAction::Pso(op) => self.validate_pso(op, &domains)?,
            }
        }
        match self.criterion {
            Some(Criterion::FiniteHorizon(0)) => {
                return Err(Error::Criterion("horizon must be positive".into()))
            }
            Some(Criterion::Discounted(g)) if !(0.0..1.0).contains(&g) => {
                return Err(Error::Criterion(format!("discount {g} is outside [0, 1)")))
            }
            _ => {}
        }
        Ok(())
    }

    fn validate_net(&self, net: &TwoSliceNet, domains: &[usize]) -> Result<()> {
        if net.cpts.len() != self.variables.len() {
            return Err(Error::InvalidModel(format!(
                "action `{}` has {} CPTs for {} variables",
                net.name,
                net.cpts.len(),
                self.variables.len()
            )));
        }
        for (x, cpt) in net.cpts.iter().enumerate() {
            cpt.check(domains)?;
            if cpt.tested().contains(&VarRef::post(x)) {
                return Err(Error::InvalidModel(format!(
                    "CPT for `{}` in `{}` tests its own successor value",
                    self.variables[x].name, net.name
                )));
            }
            for dist in cpt.leaves() {
                check_distribution(dist, domains[x]).map_err(|m| {
                    Error::InvalidModel(format!(
                        "CPT for `{}` in `{}`: {m}",
                        self.variables[x].name, net.name
                    ))
                })?;
            }
        }
        net.synchronic_order()?;
        Ok(())
    }

    fn validate_pso(&self, op: &ProbStripsOp, domains: &[usize]) -> Result<()> {
        check_pre_only(&op.context, &format!("context of `{}`", op.name))?;
        op.context.check(domains)?;
        for outcomes in op.context.leaves() {
            let mut sum = 0.0;
            for o in outcomes {
                if !(0.0..=1.0).contains(&o.prob) {
                    return Err(Error::InvalidModel(format!(
                        "`{}` has outcome probability {} outside [0, 1]",
                        op.name, o.prob
                    )));
                }
                sum += o.prob;
                let mut seen = HashSet::new();
                for &(var, val) in &o.changes {
                    if var >= domains.len() || val >= domains[var] {
                        return Err(Error::InvalidModel(format!(
                            "`{}` assigns an undeclared variable or value",
                            op.name
                        )));
                    }
                    if !seen.insert(var) {
                        return Err(Error::InvalidModel(format!(
                            "`{}` change set assigns `{}` twice",
                            op.name, self.variables[var].name
                        )));
                    }
                }
            }
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "`{}` effect probabilities sum to {sum}",
                    op.name
                )));
            }
        }
        Ok(())
    }
}

fn check_pre_only<L>(tree: &DecisionTree<L>, what: &str) -> Result<()> {
    if tree.tested().iter().any(|t| t.post) {
        return Err(Error::InvalidModel(format!("{what} tests a successor-state variable")));
    }
    Ok(())
}

fn check_distribution(dist: &[f64], size: usize) -> std::result::Result<(), String> {
    if dist.len() != size {
        return Err(format!("distribution has {} entries, expected {size}", dist.len()));
    }
    if dist.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err("distribution entry outside [0, 1]".into());
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(format!("distribution sums to {sum}"));
    }
    Ok(())
}

/// Deterministic distribution putting all mass on `value`.
pub fn point_dist(size: usize, value: usize) -> Vec<f64> {
    let mut d = vec![0.0; size];
    d[value] = 1.0;
    d
}

/// The CPT that copies variable `var` unchanged.
pub fn persistence_cpt(var: usize, size: usize) -> CptTree {
    DecisionTree::split(
        VarRef::pre(var),
        (0..size).map(|v| DecisionTree::Leaf(point_dist(size, v))).collect(),
    )
}
