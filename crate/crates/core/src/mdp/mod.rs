//! Flat (enumerated) Markov decision processes.
//!
//! States and actions are addressed by index everywhere in the solver API;
//! [`FlatMdp::state_index`] and [`FlatMdp::action_index`] resolve names.
//! Action costs are additive: the value of taking `a` in `s` contributes
//! `R(s) + C(a, s)`, so a charge of one unit is written as a cost of `-1`.

mod belief;
mod trajectory;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};

pub use belief::{belief_update, BeliefState, ObservationModel};
pub use trajectory::{
    evaluate_trajectory, propagate_distribution, simulate_policy, Trajectory, TrajectoryCriterion,
};

/// Absolute tolerance on probability-vector sums.
pub const SUM_TOL: f64 = 1e-9;

/// Success criterion attached to a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    FiniteHorizon(usize),
    Discounted(f64),
}

/// Sparse row-stochastic matrix. Each row lists `(column, probability)` in
/// increasing column order with no repeated columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    /// Builds a matrix from unsorted rows; repeated columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|mut row| {
                row.sort_by_key(|&(j, _)| j);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                for (j, p) in row {
                    match merged.last_mut() {
                        Some(last) if last.0 == j => last.1 += p,
                        _ => merged.push((j, p)),
                    }
                }
                merged
            })
            .collect();
        TransitionMatrix { rows }
    }

    /// Builds a matrix from dense rows, dropping exact zeros.
    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        TransitionMatrix {
            rows: dense
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, &p)| p != 0.0)
                        .map(|(j, &p)| (j, p))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        TransitionMatrix {
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(k) => self.rows[i][k].1,
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, p)| p).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; n];
                for &(j, p) in row {
                    dense[j] = p;
                }
                dense
            })
            .collect()
    }

    /// Positive-probability successors of row `i`.
    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[i].iter().filter(|&&(_, p)| p > 0.0).map(|&(j, _)| j)
    }
}

/// Expected value of `f` over a sparse row, summed in column order.
///
/// Every backup in the crate goes through this function so that solvers
/// which perform the same arithmetic produce bit-identical results.
#[inline]
pub fn row_expectation(row: &[(usize, f64)], mut f: impl FnMut(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for &(j, p) in row {
        acc += p * f(j);
    }
    acc
}

/// Most frequent value, earliest on ties.
pub fn most_frequent(values: &[f64]) -> f64 {
    let mut best = (values.first().copied().unwrap_or(0.0), 0);
    for (i, &v) in values.iter().enumerate() {
        if values[..i].contains(&v) {
            continue;
        }
        let count = values.iter().filter(|&&w| w == v).count();
        if count > best.1 {
            best = (v, count);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRecord {
    pub name: String,
    pub matrix: TransitionMatrix,
    pub default_cost: f64,
    pub cost_overrides: BTreeMap<usize, f64>,
}

impl ActionRecord {
    pub fn new(name: impl Into<String>, matrix: TransitionMatrix, default_cost: f64) -> Self {
        ActionRecord {
            name: name.into(),
            matrix,
            default_cost,
            cost_overrides: BTreeMap::new(),
        }
    }

    pub fn cost(&self, state: usize) -> f64 {
        self.cost_overrides
            .get(&state)
            .copied()
            .unwrap_or(self.default_cost)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatMdp {
    pub states: Vec<String>,
    pub actions: Vec<ActionRecord>,
    pub reward: Vec<f64>,
    pub criterion: Option<Criterion>,
    pub initial: Option<Vec<f64>>,
}

impl FlatMdp {
    /// Builds a model and rejects it if any invariant fails.
    pub fn new(
        states: Vec<String>,
        actions: Vec<ActionRecord>,
        reward: Vec<f64>,
        criterion: Option<Criterion>,
    ) -> Result<Self> {
        let mdp = FlatMdp {
            states,
            actions,
            reward,
            criterion,
            initial: None,
        };
        mdp.checked()
    }

    /// Returns `self` if [`validate_mdp`] finds nothing, else the report as an error.
    pub fn checked(self) -> Result<Self> {
        let report = validate_mdp(&self);
        if report.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(report.to_string()))
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::UnknownState(name.to_string()))
    }

    pub fn action_index(&self, name: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAction(name.to_string()))
    }

    pub fn cost(&self, action: usize, state: usize) -> f64 {
        self.actions[action].cost(state)
    }

    pub fn prob(&self, action: usize, from: usize, to: usize) -> f64 {
        self.actions[action].matrix.get(from, to)
    }

    pub fn row(&self, action: usize, state: usize) -> &[(usize, f64)] {
        self.actions[action].matrix.row(state)
    }

    /// `C(a, s) + γ Σ Pr(s'|a, s) V(s')` without the immediate reward.
    #[inline]
    pub fn action_backup(&self, action: usize, state: usize, gamma: f64, values: &[f64]) -> f64 {
        let future = row_expectation(self.row(action, state), |j| values[j]);
        self.cost(action, state) + gamma * future
    }
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    NoActions,
    DuplicateState(String),
    DuplicateAction(String),
    RewardLength { expected: usize, found: usize },
    MatrixSize { action: String, rows: usize },
    ColumnOutOfRange { action: String, row: usize, col: usize },
    EntryOutOfRange { action: String, row: usize, col: usize, value: f64 },
    RowSum { action: String, row: usize, sum: f64 },
    CostOverrideOutOfRange { action: String, state: usize },
    InitialLength { expected: usize, found: usize },
    InitialEntry { index: usize, value: f64 },
    InitialSum(f64),
    Criterion(String),
    NonFinite(String),
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NoActions => write!(f, "model declares no actions"),
            Issue::DuplicateState(s) => write!(f, "duplicate state `{s}`"),
            Issue::DuplicateAction(a) => write!(f, "duplicate action `{a}`"),
            Issue::RewardLength { expected, found } => {
                write!(f, "reward vector has {found} entries, expected {expected}")
            }
            Issue::MatrixSize { action, rows } => {
                write!(f, "action `{action}` has {rows} rows, wrong dimension")
            }
            Issue::ColumnOutOfRange { action, row, col } => {
                write!(f, "action `{action}` row {row} refers to column {col}, out of range")
            }
            Issue::EntryOutOfRange {
                action,
                row,
                col,
                value,
            } => write!(
                f,
                "action `{action}` entry ({row}, {col}) = {value} is outside [0, 1]"
            ),
            Issue::RowSum { action, row, sum } => {
                write!(f, "action `{action}` row {row} sums to {sum}, not 1")
            }
            Issue::CostOverrideOutOfRange { action, state } => {
                write!(f, "action `{action}` overrides cost of unknown state {state}")
            }
            Issue::InitialLength { expected, found } => {
                write!(f, "initial distribution has {found} entries, expected {expected}")
            }
            Issue::InitialEntry { index, value } => {
                write!(f, "initial probability {value} at index {index} is outside [0, 1]")
            }
            Issue::InitialSum(sum) => write!(f, "initial distribution sums to {sum}, not 1"),
            Issue::Criterion(msg) => write!(f, "criterion: {msg}"),
            Issue::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

/// Every invariant violation found in a model. Empty iff the model is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

pub fn validate_mdp(mdp: &FlatMdp) -> ValidationReport {
    let n = mdp.n_states();
    let mut issues = Vec::new();

    let mut seen = HashSet::new();
    for s in &mdp.states {
        if !seen.insert(s.as_str()) {
            issues.push(Issue::DuplicateState(s.clone()));
        }
    }
    let mut seen = HashSet::new();
    for a in &mdp.actions {
        if !seen.insert(a.name.as_str()) {
            issues.push(Issue::DuplicateAction(a.name.clone()));
        }
    }
    if mdp.actions.is_empty() {
        issues.push(Issue::NoActions);
    }
    if mdp.reward.len() != n {
        issues.push(Issue::RewardLength {
            expected: n,
            found: mdp.reward.len(),
        });
    }
    if mdp.reward.iter().any(|r| !r.is_finite()) {
        issues.push(Issue::NonFinite("reward".into()));
    }

    for action in &mdp.actions {
        let m = &action.matrix;
        if m.n() != n {
            issues.push(Issue::MatrixSize {
                action: action.name.clone(),
                rows: m.n(),
            });
            continue;
        }
        for (i, row) in m.rows().iter().enumerate() {
            let mut sum = 0.0;
            for &(j, p) in row {
                if j >= n {
                    issues.push(Issue::ColumnOutOfRange {
                        action: action.name.clone(),
                        row: i,
                        col: j,
                    });
                }
                if !(0.0..=1.0).contains(&p) {
                    issues.push(Issue::EntryOutOfRange {
                        action: action.name.clone(),
                        row: i,
                        col: j,
                        value: p,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > SUM_TOL || !sum.is_finite() {
                issues.push(Issue::RowSum {
                    action: action.name.clone(),
                    row: i,
                    sum,
                });
            }
        }
        if !action.default_cost.is_finite() || action.cost_overrides.values().any(|c| !c.is_finite())
        {
            issues.push(Issue::NonFinite(format!("cost of `{}`", action.name)));
        }
        for &s in action.cost_overrides.keys() {
            if s >= n {
                issues.push(Issue::CostOverrideOutOfRange {
                    action: action.name.clone(),
                    state: s,
                });
            }
        }
    }

    if let Some(init) = &mdp.initial {
        if init.len() != n {
            issues.push(Issue::InitialLength {
                expected: n,
                found: init.len(),
            });
        }
        for (k, &p) in init.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                issues.push(Issue::InitialEntry { index: k, value: p });
            }
        }
        let sum: f64 = init.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            issues.push(Issue::InitialSum(sum));
        }
    }

    match mdp.criterion {
        Some(Criterion::FiniteHorizon(0)) => {
            issues.push(Issue::Criterion("horizon must be positive".into()))
        }
        Some(Criterion::Discounted(g)) if !(0.0..1.0).contains(&g) => {
            issues.push(Issue::Criterion(format!("discount {g} is outside [0, 1)")))
        }
        _ => {}
    }

    ValidationReport { issues }
}

/// Per-state values, aligned with the owning model's state list.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        ValueFunction { values }
    }

    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sup-norm distance to another value function of the same length.
    pub fn max_diff(&self, other: &ValueFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Something that picks an action given the current state and step index.
pub trait Policy {
    fn choose(&self, state: usize, step: usize) -> usize;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationaryPolicy {
    pub actions: Vec<usize>,
}

impl StationaryPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        StationaryPolicy { actions }
    }

    pub fn uniform(n_states: usize, action: usize) -> Self {
        StationaryPolicy {
            actions: vec![action; n_states],
        }
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }
}

impl Policy for StationaryPolicy {
    fn choose(&self, state: usize, _step: usize) -> usize {
        self.actions[state]
    }
}

/// Finite-horizon policy indexed by stages-to-go `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonstationaryPolicy {
    /// `by_stage[t - 1][s]` is the action at `s` with `t` stages to go.
    pub by_stage: Vec<Vec<usize>>,
}

impl NonstationaryPolicy {
    pub fn horizon(&self) -> usize {
        self.by_stage.len()
    }

    pub fn action(&self, state: usize, stages_to_go: usize) -> usize {
        self.by_stage[stages_to_go - 1][state]
    }
}

impl Policy for NonstationaryPolicy {
    /// Step `k` of an execution has `T - k` stages to go. Executions longer
    /// than the horizon keep using the one-stage-to-go decision rule.
    fn choose(&self, state: usize, step: usize) -> usize {
        let t = self.horizon().saturating_sub(step).max(1);
        self.action(state, t)
    }
}
