use std::collections::BTreeMap;

use super::{FlatMdp, SUM_TOL};
use crate::error::{Error, Result};

/// Observation probabilities `Pr(o | s_i, a_k, s_j)`, keyed by
/// `(prior state, action, post state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub observations: Vec<String>,
    pub prob: BTreeMap<(usize, usize, usize), Vec<f64>>,
}

impl ObservationModel {
    /// The fully observable special case: the observation set is the state
    /// set and the agent always observes the state it lands in.
    pub fn full_observability(mdp: &FlatMdp) -> Self {
        let n = mdp.n_states();
        let mut prob = BTreeMap::new();
        for (k, action) in mdp.actions.iter().enumerate() {
            for i in 0..n {
                for j in action.matrix.successors(i) {
                    let mut dist = vec![0.0; n];
                    dist[j] = 1.0;
                    prob.insert((i, k, j), dist);
                }
            }
        }
        ObservationModel {
            observations: mdp.states.clone(),
            prob,
        }
    }

    pub fn observation_index(&self, name: &str) -> Result<usize> {
        self.observations
            .iter()
            .position(|o| o == name)
            .ok_or_else(|| Error::UnknownObservation(name.to_string()))
    }

    /// Lists every violated invariant: distributions must sum to one and
    /// every positive-probability transition needs a distribution.
    pub fn validate(&self, mdp: &FlatMdp) -> Vec<String> {
        let mut issues = Vec::new();
        for (&(i, k, j), dist) in &self.prob {
            if dist.len() != self.observations.len() {
                issues.push(format!(
                    "distribution for ({i}, {k}, {j}) has {} entries, expected {}",
                    dist.len(),
                    self.observations.len()
                ));
            }
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > SUM_TOL || dist.iter().any(|p| !(0.0..=1.0).contains(p)) {
                issues.push(format!("distribution for ({i}, {k}, {j}) sums to {sum}"));
            }
        }
        for (k, action) in mdp.actions.iter().enumerate() {
            for i in 0..mdp.n_states() {
                for j in action.matrix.successors(i) {
                    if !self.prob.contains_key(&(i, k, j)) {
                        issues.push(format!(
                            "no observation distribution for ({}, {}, {})",
                            mdp.states[i], action.name, mdp.states[j]
                        ));
                    }
                }
            }
        }
        issues
    }
}

/// Dense probability vector over the model's states.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub probs: Vec<f64>,
}

impl BeliefState {
    pub fn new(probs: Vec<f64>) -> Self {
        BeliefState { probs }
    }

    pub fn point(n: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        BeliefState { probs }
    }
}

/// Bayes filter step: `b'(j) ∝ Σ_i b(i) Pr(j | i, a) Pr(o | i, a, j)`.
pub fn belief_update(
    belief: &BeliefState,
    action: usize,
    obs: usize,
    mdp: &FlatMdp,
    om: &ObservationModel,
) -> Result<BeliefState> {
    if obs >= om.observations.len() {
        return Err(Error::UnknownObservation(obs.to_string()));
    }
    let n = mdp.n_states();
    let mut post = vec![0.0; n];
    for (i, &b) in belief.probs.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        for &(j, p) in mdp.row(action, i) {
            if p == 0.0 {
                continue;
            }
            let dist = om
                .prob
                .get(&(i, action, j))
                .ok_or_else(|| Error::MissingObservation {
                    prior: mdp.states[i].clone(),
                    action: mdp.actions[action].name.clone(),
                    post: mdp.states[j].clone(),
                })?;
            post[j] += b * p * dist[obs];
        }
    }
    let total: f64 = post.iter().sum();
    if total <= 0.0 {
        return Err(Error::ImpossibleObservation);
    }
    post.iter_mut().for_each(|x| *x /= total);
    Ok(BeliefState { probs: post })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionRecord, TransitionMatrix};

    fn noisy_pair() -> FlatMdp {
        let m = TransitionMatrix::from_dense(&[vec![0.6, 0.4], vec![0.1, 0.9]]);
        FlatMdp {
            states: vec!["x".into(), "y".into()],
            actions: vec![ActionRecord::new("a", m, 0.0)],
            reward: vec![0.0; 2],
            criterion: None,
            initial: None,
        }
    }

    #[test]
    fn full_observability_collapses_to_observed_state() {
        let mdp = noisy_pair();
        let om = ObservationModel::full_observability(&mdp);
        assert!(om.validate(&mdp).is_empty());
        let prior = BeliefState::new(vec![0.3, 0.7]);
        for obs in 0..2 {
            let post = belief_update(&prior, 0, obs, &mdp, &om).unwrap();
            assert_eq!(post, BeliefState::point(2, obs));
        }
    }

    #[test]
    fn zero_mass_observation_is_an_error() {
        let mdp = FlatMdp {
            actions: vec![ActionRecord::new("a", TransitionMatrix::identity(2), 0.0)],
            ..noisy_pair()
        };
        let om = ObservationModel::full_observability(&mdp);
        let prior = BeliefState::point(2, 0);
        assert!(matches!(
            belief_update(&prior, 0, 1, &mdp, &om),
            Err(Error::ImpossibleObservation)
        ));
    }

    #[test]
    fn missing_distribution_is_reported() {
        let mdp = noisy_pair();
        let mut om = ObservationModel::full_observability(&mdp);
        om.prob.remove(&(0, 0, 1));
        assert_eq!(om.validate(&mdp).len(), 1);
        assert!(matches!(
            belief_update(&BeliefState::point(2, 0), 0, 1, &mdp, &om),
            Err(Error::MissingObservation { .. })
        ));
    }
}
