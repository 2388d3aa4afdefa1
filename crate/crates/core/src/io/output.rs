//! Canonical text for solver results. Reals carry six decimals.

use crate::chain::ChainStructure;
use crate::abstraction::Partition;
use crate::dp::{FiniteSolution, QFunction};
use crate::error::{Diagnostic, Error, Result, Span};
use crate::factored::{DecisionTree, FactoredMdp, Interval, VarRef};
use crate::mdp::{FlatMdp, StationaryPolicy, Trajectory, ValueFunction};

/// Six decimals, never a negative zero.
pub fn fmt_real(x: f64) -> String {
    let s = format!("{x:.6}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Shortest text that parses back to the same value.
pub fn fmt_exact(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

pub fn emit_values(mdp: &FlatMdp, values: &ValueFunction) -> String {
    let mut out = String::new();
    for (s, name) in mdp.states.iter().enumerate() {
        out.push_str(&format!("{name} : {}\n", fmt_real(values.get(s))));
    }
    out
}

pub fn emit_policy(mdp: &FlatMdp, policy: &StationaryPolicy) -> String {
    let mut out = String::new();
    for (s, name) in mdp.states.iter().enumerate() {
        out.push_str(&format!("{name} : {}\n", mdp.actions[policy.action(s)].name));
    }
    out
}

/// Value and action per state, one section per stage count.
pub fn emit_finite_solution(mdp: &FlatMdp, sol: &FiniteSolution) -> String {
    let mut out = String::new();
    for t in 1..=sol.horizon() {
        out.push_str(&format!("stage {t}\n"));
        for (s, name) in mdp.states.iter().enumerate() {
            out.push_str(&format!(
                "  {name} : {} {}\n",
                fmt_real(sol.values[t].get(s)),
                mdp.actions[sol.policy.action(s, t)].name
            ));
        }
    }
    out
}

pub fn emit_q(mdp: &FlatMdp, q: &QFunction) -> String {
    let mut out = String::new();
    for (s, name) in mdp.states.iter().enumerate() {
        let cells: Vec<String> = mdp
            .actions
            .iter()
            .enumerate()
            .map(|(a, r)| format!("{}={}", r.name, fmt_real(q.get(a, s))))
            .collect();
        out.push_str(&format!("{name} : {}\n", cells.join(" ")));
    }
    out
}

pub fn emit_chain_structure(mdp: &FlatMdp, cs: &ChainStructure) -> String {
    let names = |set: &std::collections::BTreeSet<usize>| set.iter().map(|&s| mdp.states[s].as_str()).collect::<Vec<_>>().join(" ");
    let mut out = String::new();
    for (k, class) in cs.recurrent_classes.iter().enumerate() {
        out.push_str(&format!("recurrent {k} : {}\n", names(class)));
    }
    out.push_str(&format!("transient : {}\n", names(&cs.transient)));
    out.push_str(&format!("absorbing : {}\n", names(&cs.absorbing)));
    out
}

pub fn emit_partition(mdp: &FlatMdp, p: &Partition) -> String {
    let mut out = String::new();
    for (k, block) in p.blocks.iter().enumerate() {
        let names: Vec<&str> = block.iter().map(|&s| mdp.states[s].as_str()).collect();
        out.push_str(&format!("{} : {}\n", p.block_name(k), names.join(" ")));
    }
    out
}

pub fn emit_trajectory(mdp: &FlatMdp, traj: &Trajectory) -> String {
    let mut out = String::new();
    for (t, &(s, a)) in traj.steps.iter().enumerate() {
        out.push_str(&format!("{t} : {} {}\n", mdp.states[s], mdp.actions[a].name));
    }
    out.push_str(&format!("{} : {}\n", traj.steps.len(), mdp.states[traj.final_state]));
    out
}

/// Depth-first s-expression with two spaces of indentation per level and
/// branches in domain order, `else` last.
pub fn emit_tree<L>(
    tree: &DecisionTree<L>,
    var_name: &dyn Fn(VarRef) -> String,
    value_name: &dyn Fn(usize, usize) -> String,
    leaf: &dyn Fn(&L) -> String,
) -> String {
    emit_tree_at(tree, 0, var_name, value_name, leaf)
}

/// As [`emit_tree`], for a tree that starts at column `indent`.
pub fn emit_tree_at<L>(
    tree: &DecisionTree<L>,
    indent: usize,
    var_name: &dyn Fn(VarRef) -> String,
    value_name: &dyn Fn(usize, usize) -> String,
    leaf: &dyn Fn(&L) -> String,
) -> String {
    let mut out = String::new();
    write_tree(tree, indent, var_name, value_name, leaf, &mut out);
    out
}

fn write_tree<L>(
    tree: &DecisionTree<L>,
    indent: usize,
    var_name: &dyn Fn(VarRef) -> String,
    value_name: &dyn Fn(usize, usize) -> String,
    leaf: &dyn Fn(&L) -> String,
    out: &mut String,
) {
    match tree {
        DecisionTree::Leaf(l) => out.push_str(&leaf(l)),
        DecisionTree::Node(n) => {
            out.push_str(&format!("(tree {}", var_name(n.test)));
            let pad = " ".repeat(indent + 2);
            for (v, c) in &n.branches {
                out.push_str(&format!("\n{pad}({} ", value_name(n.test.var, *v)));
                write_tree(c, indent + 2, var_name, value_name, leaf, out);
                out.push(')');
            }
            if let Some(c) = &n.otherwise {
                out.push_str(&format!("\n{pad}(else "));
                write_tree(c, indent + 2, var_name, value_name, leaf, out);
                out.push(')');
            }
            out.push(')');
        }
    }
}

pub fn var_namer(fmdp: &FactoredMdp) -> impl Fn(VarRef) -> String + '_ {
    move |t: VarRef| {
        let name = &fmdp.variables[t.var].name;
        if t.post {
            format!("{name}'")
        } else {
            name.clone()
        }
    }
}

pub fn value_namer(fmdp: &FactoredMdp) -> impl Fn(usize, usize) -> String + '_ {
    move |var: usize, val: usize| fmdp.variables[var].domain[val].clone()
}

pub fn emit_value_tree(fmdp: &FactoredMdp, tree: &DecisionTree<f64>) -> String {
    emit_tree(tree, &var_namer(fmdp), &value_namer(fmdp), &|v| fmt_real(*v))
}

pub fn emit_policy_tree(fmdp: &FactoredMdp, tree: &DecisionTree<usize>) -> String {
    emit_tree(tree, &var_namer(fmdp), &value_namer(fmdp), &|&a| fmdp.actions[a].name().to_string())
}

pub fn emit_interval_tree(fmdp: &FactoredMdp, tree: &DecisionTree<Interval>) -> String {
    emit_tree(tree, &var_namer(fmdp), &value_namer(fmdp), &|i| {
        format!("(interval {} {})", fmt_real(i.lo), fmt_real(i.hi))
    })
}

/// Reads `state : action` lines; `#` starts a comment. Every state must be
/// assigned exactly once.
pub fn parse_policy(mdp: &FlatMdp, text: &str) -> Result<StationaryPolicy> {
    let mut actions: Vec<Option<usize>> = vec![None; mdp.n_states()];
    let mut diags = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let span = Span::new(k + 1, 1 + line.len() - line.trim_start().len());
        let Some((state, action)) = line.split_once(':') else {
            diags.push(Diagnostic::new(span, "expected `state : action`"));
            continue;
        };
        let action = action.split_whitespace().next().unwrap_or("");
        match (mdp.state_index(state.trim()), mdp.action_index(action)) {
            (Ok(s), Ok(a)) => {
                if actions[s].replace(a).is_some() {
                    diags.push(Diagnostic::new(span, format!("state `{}` assigned twice", state.trim())));
                }
            }
            (Err(_), _) => diags.push(Diagnostic::new(span, format!("unknown state `{}`", state.trim()))),
            (_, Err(_)) => diags.push(Diagnostic::new(span, format!("unknown action `{action}`"))),
        }
    }
    for (s, a) in actions.iter().enumerate() {
        if a.is_none() {
            diags.push(Diagnostic::new(Span::new(1, 1), format!("no action for state `{}`", mdp.states[s])));
        }
    }
    if diags.is_empty() {
        Ok(StationaryPolicy::new(actions.into_iter().map(|a| a.expect("checked")).collect()))
    } else {
        Err(Error::Parse(diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_decimals_round_half_even() {
        assert_eq!(fmt_real(0.25), "0.250000");
        assert_eq!(fmt_real(-1e-9), "0.000000");
        assert_eq!(format!("{:.1}", 0.25), "0.2");
        assert_eq!(format!("{:.2}", 0.375), "0.38");
    }

    #[test]
    fn exact_reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5, 1e-17, 123456.789] {
            assert_eq!(fmt_exact(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_exact(-0.0), "0");
    }
}
