//! Python interface to the dtplan planning library.

use std::collections::BTreeSet;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dtplan_core::abstraction::{
    initial_partition, project_abstract, refine_partition, regression_plan, relevant_closure,
    strips_operators, SubgoalSet,
};
use dtplan_core::chain::{classify_chain, induce_chain};
use dtplan_core::dp::{
    evaluate_policy_exact, modified_policy_iteration, policy_iteration, q_from_value,
    vi_discounted, vi_finite, StationarySolution,
};
use dtplan_core::events::compile_implicit_action;
use dtplan_core::factored::{ground, FactoredMdp};
use dtplan_core::io::{
    emit_factored, emit_flat, emit_policy_tree, emit_value_tree, parse_factored,
    parse_flat_document,
};
use dtplan_core::mdp::{simulate_policy, FlatMdp, StationaryPolicy};
use dtplan_core::search::{expectimax, reachable_set};
use dtplan_core::svi::{structured_value_iteration, SviStop};
use dtplan_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Singular | Error::NoConvergence { .. } | Error::Unstable(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn read(path: &str) -> PyResult<String> {
    std::fs::read_to_string(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))
}

/// Explicit MDP: named states, actions with transition matrices and costs,
/// and a state reward.
#[pyclass(module = "dtplan", frozen)]
struct FlatModel {
    inner: FlatMdp,
}

impl FlatModel {
    fn state(&self, name: &str) -> PyResult<usize> {
        self.inner.state_index(name).map_err(py_err)
    }

    fn policy(&self, actions: Vec<String>) -> PyResult<StationaryPolicy> {
        if actions.len() != self.inner.n_states() {
            return Err(PyValueError::new_err(format!(
                "policy names {} actions for {} states",
                actions.len(),
                self.inner.n_states()
            )));
        }
        let ids = actions
            .iter()
            .map(|a| self.inner.action_index(a))
            .collect::<Result<Vec<_>, _>>()
            .map_err(py_err)?;
        Ok(StationaryPolicy::new(ids))
    }

    fn action_names(&self, policy: &StationaryPolicy) -> Vec<String> {
        (0..self.inner.n_states())
            .map(|s| self.inner.actions[policy.action(s)].name.clone())
            .collect()
    }

    fn stationary(&self, sol: StationarySolution) -> (Vec<f64>, Vec<String>) {
        let names = self.action_names(&sol.policy);
        (sol.values.values, names)
    }
}

#[pymethods]
impl FlatModel {
    /// Parses the line-oriented flat format. Exogenous events, if any, are
    /// folded into every action.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let doc = parse_flat_document(text).map_err(py_err)?;
        let mut inner = doc.mdp;
        for action in &mut inner.actions {
            *action = compile_implicit_action(action, &doc.events).map_err(py_err)?;
        }
        Ok(FlatModel { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Self::from_text(&read(path)?)
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.states.clone()
    }

    #[getter]
    fn actions(&self) -> Vec<String> {
        self.inner.actions.iter().map(|a| a.name.clone()).collect()
    }

    #[getter]
    fn rewards(&self) -> Vec<f64> {
        self.inner.reward.clone()
    }

    fn prob(&self, action: &str, src: &str, dst: &str) -> PyResult<f64> {
        let a = self.inner.action_index(action).map_err(py_err)?;
        Ok(self.inner.prob(a, self.state(src)?, self.state(dst)?))
    }

    fn to_text(&self) -> String {
        emit_flat(&self.inner)
    }

    /// Finite-horizon values `values[t][s]` for `t = 0..=horizon` and the
    /// action names `policy[t - 1][s]` for `t = 1..=horizon`.
    fn solve_finite(&self, horizon: usize) -> (Vec<Vec<f64>>, Vec<Vec<String>>) {
        let sol = vi_finite(&self.inner, horizon);
        let values = sol.values.into_iter().map(|v| v.values).collect();
        let policy = sol
            .policy
            .by_stage
            .iter()
            .map(|stage| stage.iter().map(|&a| self.inner.actions[a].name.clone()).collect())
            .collect();
        (values, policy)
    }

    #[pyo3(signature = (gamma, eps = 1e-6))]
    fn value_iteration(&self, gamma: f64, eps: f64) -> PyResult<(Vec<f64>, Vec<String>)> {
        Ok(self.stationary(vi_discounted(&self.inner, gamma, eps).map_err(py_err)?))
    }

    fn policy_iteration(&self, gamma: f64) -> PyResult<(Vec<f64>, Vec<String>)> {
        let start = StationaryPolicy::uniform(self.inner.n_states(), 0);
        Ok(self.stationary(policy_iteration(&self.inner, gamma, &start).map_err(py_err)?))
    }

    #[pyo3(signature = (gamma, m = 5, eps = 1e-6))]
    fn modified_policy_iteration(&self, gamma: f64, m: usize, eps: f64) -> PyResult<(Vec<f64>, Vec<String>)> {
        Ok(self.stationary(modified_policy_iteration(&self.inner, gamma, m, eps).map_err(py_err)?))
    }

    /// Discounted value of a policy given as one action name per state.
    fn evaluate(&self, policy: Vec<String>, gamma: f64) -> PyResult<Vec<f64>> {
        let pi = self.policy(policy)?;
        Ok(evaluate_policy_exact(&self.inner, &pi, gamma).map_err(py_err)?.values)
    }

    /// `q[a][s]` for the given state values.
    fn q_values(&self, values: Vec<f64>, gamma: f64) -> PyResult<Vec<Vec<f64>>> {
        if values.len() != self.inner.n_states() {
            return Err(PyValueError::new_err("one value per state expected"));
        }
        let v = dtplan_core::mdp::ValueFunction::new(values);
        Ok(q_from_value(&self.inner, &v, gamma).values)
    }

    /// Recurrent classes, transient and absorbing states of the chain the
    /// policy induces.
    #[pyo3(signature = (policy, eps = 0.0))]
    fn classify(&self, policy: Vec<String>, eps: f64) -> PyResult<(Vec<Vec<String>>, Vec<String>, Vec<String>)> {
        let pi = self.policy(policy)?;
        let cs = classify_chain(&induce_chain(&self.inner, &pi), eps);
        let names = |set: &BTreeSet<usize>| set.iter().map(|&s| self.inner.states[s].clone()).collect::<Vec<_>>();
        Ok((
            cs.recurrent_classes.iter().map(names).collect(),
            names(&cs.transient),
            names(&cs.absorbing),
        ))
    }

    /// Samples `(state, action)` pairs followed by the final state.
    #[pyo3(signature = (policy, start, steps, seed = 0))]
    fn simulate(&self, policy: Vec<String>, start: &str, steps: usize, seed: u64) -> PyResult<(Vec<(String, String)>, String)> {
        let pi = self.policy(policy)?;
        let traj = simulate_policy(&self.inner, &pi, self.state(start)?, steps, seed);
        let steps = traj
            .steps
            .iter()
            .map(|&(s, a)| (self.inner.states[s].clone(), self.inner.actions[a].name.clone()))
            .collect();
        Ok((steps, self.inner.states[traj.final_state].clone()))
    }

    fn reachable(&self, starts: Vec<String>) -> PyResult<Vec<String>> {
        let init = starts.iter().map(|s| self.state(s)).collect::<PyResult<BTreeSet<_>>>()?;
        let reach = reachable_set(&self.inner, &init).map_err(py_err)?;
        Ok(reach.into_iter().map(|s| self.inner.states[s].clone()).collect())
    }

    /// Root value and best action of a depth-limited expectimax search.
    fn expectimax(&self, start: &str, depth: usize) -> PyResult<(f64, Option<String>)> {
        let (value, action, _) = expectimax(&self.inner, self.state(start)?, depth, None).map_err(py_err)?;
        Ok((value, action.map(|a| self.inner.actions[a].name.clone())))
    }

    /// Blocks of the coarsest stable partition refining the reward partition.
    #[pyo3(signature = (tol = 1e-9))]
    fn minimize(&self, tol: f64) -> PyResult<Vec<Vec<String>>> {
        let p = refine_partition(&self.inner, &initial_partition(&self.inner, tol), tol).map_err(py_err)?;
        Ok(p
            .blocks
            .iter()
            .map(|b| b.iter().map(|&s| self.inner.states[s].clone()).collect())
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.n_states()
    }

    fn __repr__(&self) -> String {
        format!("FlatModel({} states, {} actions)", self.inner.n_states(), self.inner.n_actions())
    }
}

/// Factored MDP over named multi-valued variables.
#[pyclass(module = "dtplan", frozen)]
struct FactoredModel {
    inner: FactoredMdp,
}

impl FactoredModel {
    fn var_set(&self, names: &[String]) -> PyResult<BTreeSet<usize>> {
        names.iter().map(|n| self.inner.var_index(n).map_err(py_err)).collect()
    }
}

#[pymethods]
impl FactoredModel {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(FactoredModel {
            inner: parse_factored(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Self::from_text(&read(path)?)
    }

    #[getter]
    fn variables(&self) -> Vec<(String, Vec<String>)> {
        self.inner
            .variables
            .iter()
            .map(|v| (v.name.clone(), v.domain.clone()))
            .collect()
    }

    #[getter]
    fn actions(&self) -> Vec<String> {
        self.inner.actions.iter().map(|a| a.name().to_string()).collect()
    }

    #[getter]
    fn state_count(&self) -> u128 {
        self.inner.state_count()
    }

    fn to_text(&self) -> String {
        emit_factored(&self.inner)
    }

    fn ground(&self) -> PyResult<FlatModel> {
        Ok(FlatModel {
            inner: ground(&self.inner).map_err(py_err)?,
        })
    }

    /// Structured value iteration. Give `horizon` for a finite problem or
    /// `gamma` for a discounted one. Returns the value tree and policy tree
    /// as text, and the iteration count.
    #[pyo3(signature = (horizon = None, gamma = None, eps = 1e-6))]
    fn structured_vi(&self, horizon: Option<usize>, gamma: Option<f64>, eps: f64) -> PyResult<(String, String, usize)> {
        let stop = match (horizon, gamma) {
            (Some(t), None) => SviStop::Horizon(t),
            (None, Some(g)) => SviStop::Discounted { gamma: g, eps },
            _ => return Err(PyValueError::new_err("give exactly one of horizon or gamma")),
        };
        let r = structured_value_iteration(&self.inner, stop).map_err(py_err)?;
        Ok((
            emit_value_tree(&self.inner, &r.value),
            emit_policy_tree(&self.inner, &r.policy),
            r.iterations,
        ))
    }

    /// Variables that can influence the given seed variables.
    fn relevant(&self, seed: Vec<String>) -> PyResult<Vec<String>> {
        let closure = relevant_closure(&self.inner, &self.var_set(&seed)?).map_err(py_err)?;
        Ok(closure.into_iter().map(|v| self.inner.variables[v].name.clone()).collect())
    }

    /// The model projected onto the relevance closure of `seed`.
    fn abstract_model(&self, seed: Vec<String>) -> PyResult<FactoredModel> {
        let closure = relevant_closure(&self.inner, &self.var_set(&seed)?).map_err(py_err)?;
        Ok(FactoredModel {
            inner: project_abstract(&self.inner, &closure).map_err(py_err)?,
        })
    }

    /// Goal regression over the model's deterministic operators. `init`
    /// and `goal` are written `X=v,Y=w`. Returns the operator names and the
    /// regressed subgoals, or `None` if no plan exists within `depth`.
    #[pyo3(signature = (init, goal, depth = 16))]
    fn regress(&self, init: &str, goal: &str, depth: usize) -> PyResult<Option<(Vec<String>, Vec<String>)>> {
        let ops = strips_operators(&self.inner).map_err(py_err)?;
        let assignment = self.inner.parse_assignment(init).map_err(py_err)?;
        if assignment.len() != self.inner.variables.len() {
            return Err(PyValueError::new_err("init must assign every variable"));
        }
        let mut state = vec![0; self.inner.variables.len()];
        for (v, x) in assignment {
            state[v] = x;
        }
        let goal = SubgoalSet::new(self.inner.parse_assignment(goal).map_err(py_err)?).map_err(py_err)?;
        let vars = &self.inner.variables;
        Ok(regression_plan(&ops, &state, &goal, depth).map(|plan| {
            let names = plan.ops.iter().map(|&k| ops[k].name.clone()).collect();
            let subgoals = plan
                .subgoals
                .iter()
                .map(|sg| {
                    sg.literals
                        .iter()
                        .map(|(&v, &x)| format!("{}={}", vars[v].name, vars[v].domain[x]))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            (names, subgoals)
        }))
    }

    fn __repr__(&self) -> String {
        format!(
            "FactoredModel({} variables, {} actions)",
            self.inner.variables.len(),
            self.inner.actions.len()
        )
    }
}

/// Loads either format, deciding by the first non-comment character.
#[pyfunction]
fn load(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    let text = read(path)?;
    if dtplan_core::io::looks_factored(&text) {
        Ok(Py::new(py, FactoredModel::from_text(&text)?)?.into_any())
    } else {
        Ok(Py::new(py, FlatModel::from_text(&text)?)?.into_any())
    }
}

#[pymodule]
fn dtplan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<FlatModel>()?;
    m.add_class::<FactoredModel>()?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    Ok(())
}
