use super::{FlatMdp, Policy, SUM_TOL};
use crate::error::{Error, Result};
use crate::rng::{sample_index, SplitMix64};

/// A system history: the state visited and action taken at each stage,
/// followed by the state reached after the last action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
    pub final_state: usize,
    pub observations: Option<Vec<usize>>,
}

impl Trajectory {
    pub fn new(steps: Vec<(usize, usize)>, final_state: usize) -> Self {
        Trajectory {
            steps,
            final_state,
            observations: None,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// State at stage `t`, where stage `len()` is the final state.
    pub fn state_at(&self, t: usize) -> usize {
        if t < self.steps.len() {
            self.steps[t].0
        } else {
            self.final_state
        }
    }

    pub fn visited(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps
            .iter()
            .map(|&(s, _)| s)
            .chain(std::iter::once(self.final_state))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryCriterion {
    /// Total reward over `T` stages plus the terminal reward.
    Finite(usize),
    /// Discounted sum over every step of the trajectory.
    Discounted(f64),
    /// Average per-stage reward over the first `n` steps.
    Gain(usize),
}

/// Values a history under one of the three success criteria.
///
/// Each stage contributes `R(s^t) + C(a^t, s^t)`. The finite criterion adds
/// the terminal reward `R(s^T)`; the discounted criterion sums every recorded
/// step; gain averages the first `n` stage contributions.
pub fn evaluate_trajectory(
    traj: &Trajectory,
    mdp: &FlatMdp,
    criterion: TrajectoryCriterion,
) -> Result<f64> {
    let stage = |t: usize| {
        let (s, a) = traj.steps[t];
        mdp.reward[s] + mdp.cost(a, s)
    };
    match criterion {
        TrajectoryCriterion::Finite(horizon) => {
            if traj.len() < horizon {
                return Err(Error::TrajectoryTooShort {
                    have: traj.len(),
                    need: horizon,
                });
            }
            let running: f64 = (0..horizon).map(stage).sum();
            Ok(running + mdp.reward[traj.state_at(horizon)])
        }
        TrajectoryCriterion::Discounted(gamma) => {
            if !(0.0..1.0).contains(&gamma) {
                return Err(Error::Criterion(format!("discount {gamma} is outside [0, 1)")));
            }
            let mut weight = 1.0;
            let mut total = 0.0;
            for t in 0..traj.len() {
                total += weight * stage(t);
                weight *= gamma;
            }
            Ok(total)
        }
        TrajectoryCriterion::Gain(n) => {
            if n == 0 {
                return Err(Error::Argument("gain needs a prefix of at least one step".into()));
            }
            if traj.len() < n {
                return Err(Error::TrajectoryTooShort {
                    have: traj.len(),
                    need: n,
                });
            }
            let total: f64 = (0..n).map(stage).sum();
            Ok(total / n as f64)
        }
    }
}

/// Pushes a distribution through `n` steps of the chain induced by `policy`.
pub fn propagate_distribution(
    dist: &[f64],
    mdp: &FlatMdp,
    policy: &super::StationaryPolicy,
    n: usize,
) -> Vec<f64> {
    debug_assert!((dist.iter().sum::<f64>() - 1.0).abs() <= SUM_TOL);
    let mut current = dist.to_vec();
    let mut next = vec![0.0; current.len()];
    for _ in 0..n {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for &(j, p) in mdp.row(policy.action(i), i) {
                next[j] += mass * p;
            }
        }
        std::mem::swap(&mut current, &mut next);
    }
    current
}

/// Samples a trajectory of exactly `steps` steps from `start`.
///
/// Successors are drawn by inverse CDF over the transition row in state-index
/// order, using one splitmix64 draw per step.
pub fn simulate_policy(
    mdp: &FlatMdp,
    policy: &dyn Policy,
    start: usize,
    steps: usize,
    seed: u64,
) -> Trajectory {
    let mut rng = SplitMix64::new(seed);
    let mut state = start;
    let mut history = Vec::with_capacity(steps);
    for k in 0..steps {
        let action = policy.choose(state, k);
        history.push((state, action));
        state = sample_index(&mut rng, mdp.row(action, state));
    }
    Trajectory::new(history, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionRecord, StationaryPolicy, TransitionMatrix};

    fn cycle(n: usize, reward: f64, cost: f64) -> FlatMdp {
        let rows = (0..n).map(|i| vec![((i + 1) % n, 1.0)]).collect();
        FlatMdp {
            states: (0..n).map(|i| format!("s{i}")).collect(),
            actions: vec![ActionRecord::new(
                "go",
                TransitionMatrix::from_rows(rows),
                cost,
            )],
            reward: vec![reward; n],
            criterion: None,
            initial: None,
        }
    }

    #[test]
    fn zero_reward_zero_cost_is_zero_everywhere() {
        let mdp = cycle(3, 0.0, 0.0);
        let traj = simulate_policy(&mdp, &StationaryPolicy::uniform(3, 0), 0, 7, 1);
        for c in [
            TrajectoryCriterion::Finite(5),
            TrajectoryCriterion::Discounted(0.9),
            TrajectoryCriterion::Gain(7),
        ] {
            assert_eq!(evaluate_trajectory(&traj, &mdp, c).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_reward_gain_is_that_reward() {
        let mdp = cycle(4, 2.5, 0.0);
        let traj = simulate_policy(&mdp, &StationaryPolicy::uniform(4, 0), 1, 13, 9);
        for n in [1, 5, 13] {
            let g = evaluate_trajectory(&traj, &mdp, TrajectoryCriterion::Gain(n)).unwrap();
            assert!((g - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_value_adds_terminal_reward() {
        let mut mdp = cycle(3, 0.0, -1.0);
        mdp.reward = vec![1.0, 2.0, 3.0];
        let traj = Trajectory::new(vec![(0, 0), (1, 0)], 2);
        // (1 - 1) + (2 - 1) + 3
        let v = evaluate_trajectory(&traj, &mdp, TrajectoryCriterion::Finite(2)).unwrap();
        assert_eq!(v, 4.0);
        let v1 = evaluate_trajectory(&traj, &mdp, TrajectoryCriterion::Finite(1)).unwrap();
        assert_eq!(v1, 0.0 + 2.0);
    }

    #[test]
    fn short_trajectory_is_a_length_error() {
        let mdp = cycle(3, 1.0, 0.0);
        let traj = Trajectory::new(vec![(0, 0)], 1);
        assert!(matches!(
            evaluate_trajectory(&traj, &mdp, TrajectoryCriterion::Finite(3)),
            Err(Error::TrajectoryTooShort { have: 1, need: 3 })
        ));
    }

    #[test]
    fn zero_steps_leaves_distribution_alone() {
        let mdp = cycle(3, 0.0, 0.0);
        let d = vec![0.2, 0.3, 0.5];
        assert_eq!(
            propagate_distribution(&d, &mdp, &StationaryPolicy::uniform(3, 0), 0),
            d
        );
    }

    #[test]
    fn uniform_is_fixed_under_doubly_stochastic() {
        let m = TransitionMatrix::from_dense(&[
            vec![0.2, 0.3, 0.5],
            vec![0.5, 0.2, 0.3],
            vec![0.3, 0.5, 0.2],
        ]);
        let mdp = FlatMdp {
            states: vec!["a".into(), "b".into(), "c".into()],
            actions: vec![ActionRecord::new("x", m, 0.0)],
            reward: vec![0.0; 3],
            criterion: None,
            initial: None,
        };
        let u = vec![1.0 / 3.0; 3];
        for n in [1, 2, 17] {
            let out = propagate_distribution(&u, &mdp, &StationaryPolicy::uniform(3, 0), n);
            for x in out {
                assert!((x - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_chain_has_one_trajectory() {
        let mdp = cycle(4, 0.0, 0.0);
        let p = StationaryPolicy::uniform(4, 0);
        for seed in [0, 1, 99, u64::MAX] {
            let t = simulate_policy(&mdp, &p, 2, 5, seed);
            assert_eq!(t.steps, vec![(2, 0), (3, 0), (0, 0), (1, 0), (2, 0)]);
            assert_eq!(t.final_state, 3);
        }
    }
}
