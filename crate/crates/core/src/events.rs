//! Explicit-event models compiled into implicit-event action matrices.
//!
//! The action happens first, then every event fires independently with its
//! per-state occurrence probability. With row-stochastic matrices acting on
//! row distributions this is the product `P_a · P̂_e1 ⋯ P̂_en`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mdp::{ActionRecord, TransitionMatrix};

/// Tolerance used by [`compile_implicit_action`] when checking that the
/// events commute.
pub const COMMUTE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousEvent {
    pub name: String,
    /// Effects of the event in isolation.
    pub matrix: TransitionMatrix,
    /// Probability that the event occurs at each state.
    pub occurrence: Vec<f64>,
}

impl ExogenousEvent {
    pub fn new(name: impl Into<String>, matrix: TransitionMatrix, occurrence: Vec<f64>) -> Self {
        ExogenousEvent {
            name: name.into(),
            matrix,
            occurrence,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.matrix.n();
        if self.occurrence.len() != n {
            return Err(Error::InvalidModel(format!(
                "event `{}` has {} occurrence entries for {n} states",
                self.name,
                self.occurrence.len()
            )));
        }
        if let Some(p) = self.occurrence.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidModel(format!(
                "event `{}` has occurrence probability {p} outside [0, 1]",
                self.name
            )));
        }
        for i in 0..n {
            let sum = self.matrix.row_sum(i);
            if (sum - 1.0).abs() > crate::mdp::SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "event `{}` row {i} sums to {sum}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Where two events fail to commute.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutationWitness {
    pub first: String,
    pub second: String,
    pub row: usize,
    pub col: usize,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutationReport {
    pub commutative: bool,
    pub witness: Option<CommutationWitness>,
}

fn dense(m: &TransitionMatrix) -> DMatrix<f64> {
    let n = m.n();
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in m.rows().iter().enumerate() {
        for &(j, p) in row {
            out[(i, j)] = p;
        }
    }
    out
}

fn sparse(m: &DMatrix<f64>) -> TransitionMatrix {
    let rows = (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .filter(|&j| m[(i, j)] != 0.0)
                .map(|j| (j, m[(i, j)]))
                .collect()
        })
        .collect();
    TransitionMatrix::from_rows(rows)
}

fn effective_dense(e: &ExogenousEvent) -> DMatrix<f64> {
    let mut m = dense(&e.matrix);
    for i in 0..m.nrows() {
        let occ = e.occurrence[i];
        for j in 0..m.ncols() {
            m[(i, j)] *= occ;
        }
        m[(i, i)] += 1.0 - occ;
    }
    m
}

/// `P̂_e(i, j) = Pr_e(i) Pr_e(i, j) + [i = j] (1 - Pr_e(i))`.
pub fn effective_event_matrix(e: &ExogenousEvent) -> TransitionMatrix {
    sparse(&effective_dense(e))
}

/// Checks every pair of events for commutation of their effective matrices.
/// On failure the witness names the first offending pair and its largest
/// entrywise discrepancy.
pub fn check_commutative(events: &[ExogenousEvent], tol: f64) -> CommutationReport {
    let eff: Vec<DMatrix<f64>> = events.iter().map(effective_dense).collect();
    for a in 0..eff.len() {
        for b in a + 1..eff.len() {
            let ab = &eff[a] * &eff[b];
            let ba = &eff[b] * &eff[a];
            let diff = ab - ba;
            let (mut row, mut col, mut worst) = (0, 0, 0.0);
            for i in 0..diff.nrows() {
                for j in 0..diff.ncols() {
                    if diff[(i, j)].abs() > worst {
                        (row, col, worst) = (i, j, diff[(i, j)].abs());
                    }
                }
            }
            if worst > tol {
                return CommutationReport {
                    commutative: false,
                    witness: Some(CommutationWitness {
                        first: events[a].name.clone(),
                        second: events[b].name.clone(),
                        row,
                        col,
                        discrepancy: worst,
                    }),
                };
            }
        }
    }
    CommutationReport {
        commutative: true,
        witness: None,
    }
}

/// Folds the events into the action after checking that they commute.
pub fn compile_implicit_action(
    action: &ActionRecord,
    events: &[ExogenousEvent],
) -> Result<ActionRecord> {
    let report = check_commutative(events, COMMUTE_TOL);
    if let Some(w) = report.witness {
        return Err(Error::CompositionOrder(format!(
            "`{}` and `{}` differ by {} at ({}, {}); supply an explicit ordering",
            w.first, w.second, w.discrepancy, w.row, w.col
        )));
    }
    compile_in_order(action, events)
}

/// Folds the events into the action in the given temporal order without
/// checking commutation.
pub fn compile_in_order(action: &ActionRecord, events: &[ExogenousEvent]) -> Result<ActionRecord> {
    let n = action.matrix.n();
    for e in events {
        e.validate()?;
        if e.matrix.n() != n {
            return Err(Error::InvalidModel(format!(
                "event `{}` has {} states, action `{}` has {n}",
                e.name,
                e.matrix.n(),
                action.name
            )));
        }
    }
    let mut product = dense(&action.matrix);
    for e in events {
        product = product * effective_dense(e);
    }
    Ok(ActionRecord {
        matrix: sparse(&product),
        ..action.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(n: usize, f: impl Fn(usize) -> usize) -> TransitionMatrix {
        TransitionMatrix::from_rows((0..n).map(|i| vec![(f(i), 1.0)]).collect())
    }

    #[test]
    fn never_occurring_event_is_identity() {
        let e = ExogenousEvent::new("e", perm(4, |i| (i + 1) % 4), vec![0.0; 4]);
        assert_eq!(effective_event_matrix(&e), TransitionMatrix::identity(4));
    }

    #[test]
    fn always_occurring_event_is_unchanged() {
        let m = TransitionMatrix::from_dense(&[vec![0.5, 0.5], vec![0.25, 0.75]]);
        let e = ExogenousEvent::new("e", m.clone(), vec![1.0; 2]);
        assert_eq!(effective_event_matrix(&e), m);
    }

    #[test]
    fn empty_event_list_leaves_action() {
        let a = ActionRecord::new("a", perm(3, |i| (i + 2) % 3), -1.0);
        assert_eq!(compile_implicit_action(&a, &[]).unwrap(), a);
    }

    #[test]
    fn disjoint_blocks_commute() {
        // states 0,1 touched by e1; states 2,3 by e2
        let e1 = ExogenousEvent::new("e1", perm(4, |i| [1, 0, 2, 3][i]), vec![0.3, 0.6, 0.0, 0.0]);
        let e2 = ExogenousEvent::new("e2", perm(4, |i| [0, 1, 3, 2][i]), vec![0.0, 0.0, 0.5, 0.1]);
        assert!(check_commutative(&[e1, e2], 1e-12).commutative);
    }

    #[test]
    fn order_dependent_pair_has_witness() {
        // e1 moves s1 to s2; e2 moves s2 to s3 but leaves s1 alone
        let e1 = ExogenousEvent::new("e1", perm(3, |i| [1, 1, 2][i]), vec![1.0; 3]);
        let e2 = ExogenousEvent::new("e2", perm(3, |i| [0, 2, 2][i]), vec![1.0; 3]);
        // e1 then e2 sends s1 to s3; e2 then e1 sends s1 to s2
        let report = check_commutative(&[e1.clone(), e2.clone()], 1e-12);
        assert!(!report.commutative);
        let w = report.witness.unwrap();
        assert_eq!((w.first.as_str(), w.second.as_str()), ("e1", "e2"));
        assert_eq!((w.row, w.col), (0, 1));
        assert_eq!(w.discrepancy, 1.0);

        let a = ActionRecord::new("a", TransitionMatrix::identity(3), 0.0);
        assert!(matches!(
            compile_implicit_action(&a, &[e1.clone(), e2.clone()]),
            Err(Error::CompositionOrder(_))
        ));
        let forced = compile_in_order(&a, &[e1, e2]).unwrap();
        assert_eq!(forced.matrix.row(0), &[(2, 1.0)]);
    }

    #[test]
    fn action_comes_first() {
        // action moves 0 -> 1; event fires only at 1 and moves it to 2
        let a = ActionRecord::new("a", perm(3, |i| [1, 1, 2][i]), 0.0);
        let e = ExogenousEvent::new("e", perm(3, |i| [0, 2, 2][i]), vec![0.0, 1.0, 0.0]);
        let c = compile_implicit_action(&a, &[e]).unwrap();
        assert_eq!(c.matrix.row(0), &[(2, 1.0)]);
    }
}
