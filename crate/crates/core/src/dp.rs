//! Exact dynamic programming over flat models.
//!
//! Backups use the reward-at-current-state form
//! `V(s) = R(s) + max_a { C(a, s) + γ Σ Pr(s'|a, s) V(s') }`.
//! Among maximizing actions the lowest action index wins.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{row_expectation, FlatMdp, NonstationaryPolicy, StationaryPolicy, ValueFunction};

/// Threshold on `Q(a*, s) - V(s)` below which policy iteration keeps the
/// incumbent action.
pub const IMPROVEMENT_EPS: f64 = 1e-10;

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSolution {
    /// `values[t]` is the optimal `t`-stage-to-go value function, `t = 0..=T`.
    pub values: Vec<ValueFunction>,
    pub policy: NonstationaryPolicy,
}

impl FiniteSolution {
    pub fn horizon(&self) -> usize {
        self.policy.horizon()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub policy: StationaryPolicy,
    pub values: ValueFunction,
    /// Final sup-norm change of the value estimate.
    pub residual: f64,
    pub iterations: usize,
    /// Sup-norm change after each sweep, for iterative solvers.
    pub residuals: Vec<f64>,
}

/// `values[a][s]` is the value of doing `a` at `s` and then following `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    pub values: Vec<Vec<f64>>,
}

impl QFunction {
    pub fn get(&self, action: usize, state: usize) -> f64 {
        self.values[action][state]
    }

    /// Lowest-index maximizing action at `state` and its value.
    pub fn best(&self, state: usize) -> (usize, f64) {
        let mut best = (0, self.values[0][state]);
        for (a, row) in self.values.iter().enumerate().skip(1) {
            if row[state] > best.1 {
                best = (a, row[state]);
            }
        }
        best
    }

    /// Every action within `tol` of the best value at `state`.
    pub fn argmax_set(&self, state: usize, tol: f64) -> BTreeSet<usize> {
        let (_, best) = self.best(state);
        (0..self.values.len())
            .filter(|&a| self.values[a][state] >= best - tol)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalStop {
    Iterations(usize),
    Tolerance(f64),
}

fn check_discount(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::Criterion(format!("discount {gamma} must lie in [0, 1)")))
    }
}

/// Sup-norm change at which discounted iteration stops, guaranteeing an
/// `eps`-optimal greedy policy.
pub fn stopping_threshold(gamma: f64, eps: f64) -> f64 {
    if gamma == 0.0 {
        f64::INFINITY
    } else {
        eps * (1.0 - gamma) / (2.0 * gamma)
    }
}

/// One synchronous Bellman sweep. Returns the new values and the
/// lowest-index maximizing action at every state.
pub fn bellman_backup(mdp: &FlatMdp, gamma: f64, values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = mdp.n_states();
    let mut next = Vec::with_capacity(n);
    let mut argmax = Vec::with_capacity(n);
    for s in 0..n {
        let mut best_a = 0;
        let mut best = mdp.action_backup(0, s, gamma, values);
        for a in 1..mdp.n_actions() {
            let q = mdp.action_backup(a, s, gamma, values);
            if q > best {
                best = q;
                best_a = a;
            }
        }
        next.push(mdp.reward[s] + best);
        argmax.push(best_a);
    }
    (next, argmax)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Finite-horizon value iteration from `V_0 = R`, undiscounted.
pub fn vi_finite(mdp: &FlatMdp, horizon: usize) -> FiniteSolution {
    let mut values = vec![ValueFunction::new(mdp.reward.clone())];
    let mut by_stage = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let (next, argmax) = bellman_backup(mdp, 1.0, &values[t - 1].values);
        values.push(ValueFunction::new(next));
        by_stage.push(argmax);
    }
    FiniteSolution {
        values,
        policy: NonstationaryPolicy { by_stage },
    }
}

/// Evaluates a nonstationary policy over `T` stages, returning the value
/// function for each number of stages to go.
pub fn evaluate_finite_policy(mdp: &FlatMdp, policy: &NonstationaryPolicy) -> Vec<ValueFunction> {
    let mut values = vec![ValueFunction::new(mdp.reward.clone())];
    for t in 1..=policy.horizon() {
        let prev = &values[t - 1].values;
        let next = (0..mdp.n_states())
            .map(|s| mdp.reward[s] + mdp.action_backup(policy.action(s, t), s, 1.0, prev))
            .collect();
        values.push(ValueFunction::new(next));
    }
    values
}

/// Discounted value iteration from `V_0 = R`, stopped once the sup-norm
/// change drops to `eps (1 - γ) / (2γ)`.
pub fn vi_discounted(mdp: &FlatMdp, gamma: f64, eps: f64) -> Result<StationarySolution> {
    check_discount(gamma)?;
    if eps <= 0.0 {
        return Err(Error::Argument("eps must be positive".into()));
    }
    let threshold = stopping_threshold(gamma, eps);
    let mut values = mdp.reward.clone();
    let mut residuals = Vec::new();
    loop {
        let (next, argmax) = bellman_backup(mdp, gamma, &values);
        let residual = sup_diff(&next, &values);
        residuals.push(residual);
        values = next;
        if residual <= threshold {
            return Ok(StationarySolution {
                policy: StationaryPolicy::new(argmax),
                values: ValueFunction::new(values),
                residual,
                iterations: residuals.len(),
                residuals,
            });
        }
        if residuals.len() >= MAX_SWEEPS {
            return Err(Error::NoConvergence {
                iterations: residuals.len(),
                residual,
            });
        }
    }
}

/// Solves `V = R + C_π + γ P_π V` directly.
pub fn evaluate_policy_exact(
    mdp: &FlatMdp,
    policy: &StationaryPolicy,
    gamma: f64,
) -> Result<ValueFunction> {
    check_discount(gamma)?;
    let n = mdp.n_states();
    let mut system = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        let a = policy.action(s);
        rhs[s] = mdp.reward[s] + mdp.cost(a, s);
        for &(j, p) in mdp.row(a, s) {
            system[(s, j)] -= gamma * p;
        }
    }
    let lu = system.clone().lu();
    let mut solution = lu.solve(&rhs).ok_or(Error::Singular)?;
    // One round of iterative refinement keeps the residual well under 1e-8
    // even for discounts close to one.
    let correction = lu.solve(&(&rhs - &system * &solution)).ok_or(Error::Singular)?;
    solution += correction;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(ValueFunction::new(solution.iter().copied().collect()))
}

/// Successive approximation of a policy's value from `V_0 = R`.
pub fn evaluate_policy_iterative(
    mdp: &FlatMdp,
    policy: &StationaryPolicy,
    gamma: f64,
    stop: EvalStop,
) -> Result<ValueFunction> {
    check_discount(gamma)?;
    let values = policy_sweeps(mdp, policy, gamma, mdp.reward.clone(), stop)?;
    Ok(ValueFunction::new(values))
}

fn policy_sweeps(
    mdp: &FlatMdp,
    policy: &StationaryPolicy,
    gamma: f64,
    mut values: Vec<f64>,
    stop: EvalStop,
) -> Result<Vec<f64>> {
    let sweep = |values: &[f64]| -> Vec<f64> {
        (0..mdp.n_states())
            .map(|s| mdp.reward[s] + mdp.action_backup(policy.action(s), s, gamma, values))
            .collect()
    };
    match stop {
        EvalStop::Iterations(m) => {
            for _ in 0..m {
                values = sweep(&values);
            }
        }
        EvalStop::Tolerance(eps) => {
            if eps <= 0.0 {
                return Err(Error::Argument("tolerance must be positive".into()));
            }
            for k in 0.. {
                let next = sweep(&values);
                let change = sup_diff(&next, &values);
                values = next;
                if change <= eps {
                    break;
                }
                if k >= MAX_SWEEPS {
                    return Err(Error::NoConvergence {
                        iterations: k,
                        residual: change,
                    });
                }
            }
        }
    }
    Ok(values)
}

/// `Q(a, s) = R(s) + C(a, s) + γ Σ Pr(s'|a, s) V(s')`.
pub fn q_from_value(mdp: &FlatMdp, values: &ValueFunction, gamma: f64) -> QFunction {
    let q = (0..mdp.n_actions())
        .map(|a| {
            (0..mdp.n_states())
                .map(|s| mdp.reward[s] + mdp.action_backup(a, s, gamma, &values.values))
                .collect()
        })
        .collect();
    QFunction { values: q }
}

/// Howard's policy iteration, returning every evaluated policy in order.
/// The last entry is the fixed point.
pub fn policy_iteration_trace(
    mdp: &FlatMdp,
    gamma: f64,
    initial: &StationaryPolicy,
) -> Result<Vec<(StationaryPolicy, ValueFunction)>> {
    check_discount(gamma)?;
    let mut policy = initial.clone();
    let mut trace = Vec::new();
    loop {
        let values = evaluate_policy_exact(mdp, &policy, gamma)?;
        let q = q_from_value(mdp, &values, gamma);
        let mut improved = policy.clone();
        let mut changed = false;
        for s in 0..mdp.n_states() {
            let (best_a, best) = q.best(s);
            if best > values.get(s) + IMPROVEMENT_EPS && best_a != policy.action(s) {
                improved.actions[s] = best_a;
                changed = true;
            }
        }
        trace.push((policy, values));
        if !changed {
            return Ok(trace);
        }
        policy = improved;
    }
}

pub fn policy_iteration(
    mdp: &FlatMdp,
    gamma: f64,
    initial: &StationaryPolicy,
) -> Result<StationarySolution> {
    let trace = policy_iteration_trace(mdp, gamma, initial)?;
    let iterations = trace.len();
    let (policy, values) = trace.into_iter().last().unwrap();
    let q = q_from_value(mdp, &values, gamma);
    let residual = (0..mdp.n_states())
        .map(|s| (q.best(s).1 - values.get(s)).max(0.0))
        .fold(0.0, f64::max);
    Ok(StationarySolution {
        policy,
        values,
        residual,
        iterations,
        residuals: Vec::new(),
    })
}

/// Policy iteration with `m` successive-approximation sweeps in place of
/// exact evaluation. The first sweep of each round is the greedy backup, so
/// `m = 1` is value iteration.
pub fn modified_policy_iteration(
    mdp: &FlatMdp,
    gamma: f64,
    m: usize,
    eps: f64,
) -> Result<StationarySolution> {
    check_discount(gamma)?;
    if m == 0 {
        return Err(Error::Argument("m must be positive".into()));
    }
    if eps <= 0.0 {
        return Err(Error::Argument("eps must be positive".into()));
    }
    let threshold = stopping_threshold(gamma, eps);
    let mut values = mdp.reward.clone();
    let mut residuals = Vec::new();
    loop {
        let (greedy, argmax) = bellman_backup(mdp, gamma, &values);
        let policy = StationaryPolicy::new(argmax);
        let next = policy_sweeps(mdp, &policy, gamma, greedy, EvalStop::Iterations(m - 1))?;
        let residual = sup_diff(&next, &values);
        residuals.push(residual);
        values = next;
        if residual <= threshold {
            let (_, argmax) = bellman_backup(mdp, gamma, &values);
            return Ok(StationarySolution {
                policy: StationaryPolicy::new(argmax),
                values: ValueFunction::new(values),
                residual,
                iterations: residuals.len(),
                residuals,
            });
        }
        if residuals.len() >= MAX_SWEEPS {
            return Err(Error::NoConvergence {
                iterations: residuals.len(),
                residual,
            });
        }
    }
}

/// Maximal probability of reaching `goal` within `|S|` stages.
///
/// Goal states are made absorbing with value 1; undiscounted value iteration
/// runs until a fixpoint or for `|S|` sweeps. Returns the per-state
/// probabilities and the number of sweeps performed.
pub fn goal_reachability(mdp: &FlatMdp, goal: &BTreeSet<usize>) -> Result<(ValueFunction, usize)> {
    if goal.is_empty() {
        return Err(Error::Argument("goal set is empty".into()));
    }
    let n = mdp.n_states();
    let mut values: Vec<f64> = (0..n).map(|s| f64::from(goal.contains(&s))).collect();
    let mut used = 0;
    while used < n {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                if goal.contains(&s) {
                    1.0
                } else {
                    (0..mdp.n_actions())
                        .map(|a| row_expectation(mdp.row(a, s), |j| values[j]))
                        .fold(0.0, f64::max)
                }
            })
            .collect();
        used += 1;
        let done = next == values;
        values = next;
        if done {
            break;
        }
    }
    Ok((ValueFunction::new(values), used))
}
