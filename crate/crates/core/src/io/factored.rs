//! S-expression format for factored models.
//!
//! ```text
//! (fmdp
//!   (var X (t f))
//!   (reward (add (tree X (t 1) (f 0))))
//!   (action set (cost 0)
//!     (cpt X (dist (t 1))))
//!   (action flip (cost -1)
//!     (pso (tree X (t (effects ((X f) 0.5) (0.5))) (else (effects (1))))))
//!   (discount 0.9))
//! ```
//!
//! `(persist X ...)` inside a network declares that the listed variables keep
//! their values. Tests on `X'` refer to the successor state.

use std::collections::BTreeMap;

use super::output::{emit_tree_at, fmt_exact, value_namer, var_namer};
use super::sexpr::{parse_sexprs, SExpr};
use crate::error::{Diagnostic, Error, Result, Span};
use crate::factored::{
    persistence_cpt, CptTree, DecisionTree, EffectTree, FactoredAction, FactoredMdp, Outcome,
    ProbStripsOp, TwoSliceNet, ValueTree, VarRef, VariableSpec,
};
use crate::mdp::Criterion;

const SUM_TOL: f64 = 1e-9;

type Parsed<T> = std::result::Result<T, Diagnostic>;

fn diag(e: &SExpr, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(e.span(), msg)
}

fn number(e: &SExpr) -> Parsed<f64> {
    e.atom()
        .and_then(|t| t.parse::<f64>().ok())
        .filter(|x| x.is_finite())
        .ok_or_else(|| diag(e, "expected a number"))
}

fn list<'a>(e: &'a SExpr, what: &str) -> Parsed<&'a [SExpr]> {
    e.list().ok_or_else(|| diag(e, format!("expected {what}")))
}

struct Vars<'a> {
    variables: &'a [VariableSpec],
}

impl Vars<'_> {
    fn var(&self, e: &SExpr) -> Parsed<usize> {
        let name = e.atom().ok_or_else(|| diag(e, "expected a variable name"))?;
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| diag(e, format!("undeclared variable `{name}`")))
    }

    fn test(&self, e: &SExpr) -> Parsed<VarRef> {
        let name = e.atom().ok_or_else(|| diag(e, "expected a variable name"))?;
        let (base, post) = match name.strip_suffix('\'') {
            Some(b) => (b, true),
            None => (name, false),
        };
        let var = self
            .variables
            .iter()
            .position(|v| v.name == base)
            .ok_or_else(|| diag(e, format!("undeclared variable `{base}`")))?;
        Ok(VarRef { var, post })
    }

    fn value(&self, var: usize, e: &SExpr) -> Parsed<usize> {
        let name = e.atom().ok_or_else(|| diag(e, "expected a value"))?;
        self.variables[var]
            .value_index(name)
            .ok_or_else(|| diag(e, format!("`{name}` is not a value of `{}`", self.variables[var].name)))
    }

    fn tree<L>(&self, e: &SExpr, leaf: &dyn Fn(&SExpr) -> Parsed<L>) -> Parsed<DecisionTree<L>> {
        if e.head() != Some("tree") {
            return leaf(e).map(DecisionTree::Leaf);
        }
        let items = e.list().expect("head implies list");
        if items.len() < 3 {
            return Err(diag(e, "expected `(tree <var> (<value> <subtree>)+)`"));
        }
        let test = self.test(&items[1])?;
        let mut branches: Vec<(usize, DecisionTree<L>)> = Vec::new();
        let mut otherwise = None;
        for b in &items[2..] {
            let pair = list(b, "a branch `(<value> <subtree>)`")?;
            if pair.len() != 2 {
                return Err(diag(b, "expected a branch `(<value> <subtree>)`"));
            }
            let sub = self.tree(&pair[1], leaf)?;
            if pair[0].atom() == Some("else") {
                if otherwise.replace(sub).is_some() {
                    return Err(diag(b, "second `else` branch"));
                }
            } else {
                let v = self.value(test.var, &pair[0])?;
                if branches.iter().any(|(w, _)| *w == v) {
                    return Err(diag(b, "value listed twice"));
                }
                branches.push((v, sub));
            }
        }
        let covered = branches.len() == self.variables[test.var].size();
        if otherwise.is_none() && !covered {
            return Err(diag(e, format!("tree on `{}` does not cover every value", self.variables[test.var].name)));
        }
        if otherwise.is_some() && covered {
            return Err(diag(e, "`else` branch is unreachable"));
        }
        Ok(DecisionTree::node(test, branches, otherwise))
    }

    fn dist(&self, var: usize, e: &SExpr) -> Parsed<Vec<f64>> {
        if e.head() != Some("dist") {
            return Err(diag(e, "expected `(dist (<value> <real>)+)`"));
        }
        let items = e.list().expect("head implies list");
        let mut dist = vec![0.0; self.variables[var].size()];
        let mut seen = vec![false; dist.len()];
        for cell in &items[1..] {
            let pair = list(cell, "`(<value> <real>)`")?;
            if pair.len() != 2 {
                return Err(diag(cell, "expected `(<value> <real>)`"));
            }
            let v = self.value(var, &pair[0])?;
            if std::mem::replace(&mut seen[v], true) {
                return Err(diag(cell, "value listed twice"));
            }
            let p = number(&pair[1])?;
            if !(0.0..=1.0).contains(&p) {
                return Err(diag(&pair[1], format!("probability {p} is outside [0, 1]")));
            }
            dist[v] = p;
        }
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(diag(e, format!("distribution sums to {sum}, not 1")));
        }
        Ok(dist)
    }

    fn effects(&self, e: &SExpr) -> Parsed<Vec<Outcome>> {
        if e.head() != Some("effects") {
            return Err(diag(e, "expected `(effects ((<var> <value>)* <real>)+)`"));
        }
        let items = e.list().expect("head implies list");
        let mut outcomes = Vec::new();
        let mut sum = 0.0;
        for o in &items[1..] {
            let parts = list(o, "an outcome `((<var> <value>)* <real>)`")?;
            let (last, changes) = parts.split_last().ok_or_else(|| diag(o, "empty outcome"))?;
            let p = number(last)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(diag(last, format!("probability {p} is outside [0, 1]")));
            }
            let mut assigned = BTreeMap::new();
            for c in changes {
                let pair = list(c, "a change `(<var> <value>)`")?;
                if pair.len() != 2 {
                    return Err(diag(c, "expected a change `(<var> <value>)`"));
                }
                let var = self.var(&pair[0])?;
                let val = self.value(var, &pair[1])?;
                if assigned.insert(var, val).is_some() {
                    return Err(diag(c, "variable changed twice in one outcome"));
                }
            }
            sum += p;
            outcomes.push(Outcome::new(assigned.into_iter().collect(), p));
        }
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(diag(e, format!("outcome probabilities sum to {sum}, not 1")));
        }
        Ok(outcomes)
    }

    fn scalar_tree(&self, e: &SExpr) -> Parsed<ValueTree> {
        self.tree(e, &|l| number(l))
    }
}

fn parse_variable(e: &SExpr, items: &[SExpr]) -> Parsed<VariableSpec> {
    if items.len() != 3 {
        return Err(diag(e, "expected `(var <id> (<value>+))`"));
    }
    let name = items[1].atom().ok_or_else(|| diag(&items[1], "expected a variable name"))?;
    if name.ends_with('\'') {
        return Err(diag(&items[1], "variable names may not end in `'`"));
    }
    let values = list(&items[2], "a value list")?;
    if values.is_empty() {
        return Err(diag(&items[2], "empty domain"));
    }
    let mut domain: Vec<String> = Vec::new();
    for v in values {
        let text = v.atom().ok_or_else(|| diag(v, "expected a value name"))?;
        if text == "else" {
            return Err(diag(v, "`else` is reserved"));
        }
        if domain.iter().any(|d| d == text) {
            return Err(diag(v, format!("value `{text}` listed twice")));
        }
        domain.push(text.to_string());
    }
    Ok(VariableSpec {
        name: name.to_string(),
        domain,
    })
}

fn parse_action(vars: &Vars, e: &SExpr, items: &[SExpr]) -> Parsed<FactoredAction> {
    let name = items
        .get(1)
        .and_then(SExpr::atom)
        .ok_or_else(|| diag(e, "expected `(action <id> ...)`"))?
        .to_string();
    let mut cost: Option<ValueTree> = None;
    let mut cpts: Vec<Option<CptTree>> = vec![None; vars.variables.len()];
    let mut pso: Option<EffectTree> = None;
    let mut any_cpt = false;
    for part in &items[2..] {
        let body = list(part, "`(cost ...)`, `(cpt ...)`, `(persist ...)` or `(pso ...)`")?;
        match part.head() {
            Some("cost") => {
                if body.len() != 2 {
                    return Err(diag(part, "expected `(cost <tree>)`"));
                }
                if cost.replace(vars.scalar_tree(&body[1])?).is_some() {
                    return Err(diag(part, "second cost"));
                }
            }
            Some("cpt") => {
                if body.len() != 3 {
                    return Err(diag(part, "expected `(cpt <var> <tree>)`"));
                }
                let x = vars.var(&body[1])?;
                let tree = vars.tree(&body[2], &|l| vars.dist(x, l))?;
                if cpts[x].replace(tree).is_some() {
                    return Err(diag(part, format!("second CPT for `{}`", vars.variables[x].name)));
                }
                any_cpt = true;
            }
            Some("persist") => {
                for v in &body[1..] {
                    let x = vars.var(v)?;
                    if cpts[x].replace(persistence_cpt(x, vars.variables[x].size())).is_some() {
                        return Err(diag(v, format!("second CPT for `{}`", vars.variables[x].name)));
                    }
                }
                any_cpt = true;
            }
            Some("pso") => {
                if body.len() != 2 {
                    return Err(diag(part, "expected `(pso <tree>)`"));
                }
                if pso.replace(vars.tree(&body[1], &|l| vars.effects(l))?).is_some() {
                    return Err(diag(part, "second `pso`"));
                }
            }
            _ => return Err(diag(part, "expected `cost`, `cpt`, `persist` or `pso`")),
        }
    }
    let cost = cost.ok_or_else(|| diag(e, format!("action `{name}` has no cost")))?;
    match (pso, any_cpt) {
        (Some(_), true) => Err(diag(e, format!("action `{name}` mixes CPTs and a PSO"))),
        (Some(context), false) => Ok(FactoredAction::Pso(ProbStripsOp { name, cost, context })),
        (None, _) => {
            let mut complete = Vec::with_capacity(cpts.len());
            for (x, c) in cpts.into_iter().enumerate() {
                match c {
                    Some(c) => complete.push(c),
                    None => {
                        return Err(diag(
                            e,
                            format!("missing CPT for variable `{}` in `{name}`", vars.variables[x].name),
                        ))
                    }
                }
            }
            Ok(FactoredAction::Net(TwoSliceNet {
                name,
                cost,
                cpts: complete,
            }))
        }
    }
}

pub fn parse_factored(text: &str) -> Result<FactoredMdp> {
    let forms = parse_sexprs(text).map_err(Error::Parse)?;
    let root = match forms.as_slice() {
        [root] if root.head() == Some("fmdp") => root,
        [] => return Err(Error::Parse(vec![Diagnostic::new(Span::new(1, 1), "empty document")])),
        [other, ..] => return Err(Error::Parse(vec![diag(other, "expected a single `(fmdp ...)` form")])),
    };
    let items = root.list().expect("head implies list");
    let mut diags = Vec::new();
    let mut variables = Vec::new();
    for item in &items[1..] {
        if item.head() == Some("var") {
            match parse_variable(item, item.list().expect("list")) {
                Ok(v) if variables.iter().any(|w: &VariableSpec| w.name == v.name) => {
                    diags.push(diag(item, format!("duplicate variable `{}`", v.name)))
                }
                Ok(v) => variables.push(v),
                Err(d) => diags.push(d),
            }
        }
    }
    let vars = Vars { variables: &variables };
    let mut reward = Vec::new();
    let mut reward_seen = false;
    let mut actions: Vec<(Span, FactoredAction)> = Vec::new();
    let mut criterion = None;
    for item in &items[1..] {
        let body = item.list().unwrap_or(&[]);
        let result: Parsed<()> = match item.head() {
            Some("var") => Ok(()),
            Some("reward") => {
                if std::mem::replace(&mut reward_seen, true) {
                    Err(diag(item, "second reward"))
                } else if body.len() != 2 {
                    Err(diag(item, "expected `(reward (add <tree>+))`"))
                } else if body[1].head() == Some("add") {
                    body[1].list().expect("list")[1..]
                        .iter()
                        .map(|t| vars.scalar_tree(t))
                        .collect::<Parsed<Vec<_>>>()
                        .map(|trees| reward = trees)
                } else {
                    vars.scalar_tree(&body[1]).map(|t| reward = vec![t])
                }
            }
            Some("action") => parse_action(&vars, item, body).and_then(|a| {
                if actions.iter().any(|(_, b)| b.name() == a.name()) {
                    Err(diag(item, format!("duplicate action `{}`", a.name())))
                } else {
                    actions.push((item.span(), a));
                    Ok(())
                }
            }),
            Some(kind @ ("discount" | "horizon")) => {
                if body.len() != 2 {
                    Err(diag(item, format!("expected `({kind} <value>)`")))
                } else if criterion.is_some() {
                    Err(diag(item, "criterion declared twice"))
                } else if kind == "discount" {
                    number(&body[1]).map(|g| criterion = Some(Criterion::Discounted(g)))
                } else {
                    body[1]
                        .atom()
                        .and_then(|t| t.parse::<usize>().ok())
                        .ok_or_else(|| diag(&body[1], "expected a horizon"))
                        .map(|t| criterion = Some(Criterion::FiniteHorizon(t)))
                }
            }
            _ => Err(diag(item, "expected `var`, `reward`, `action`, `discount` or `horizon`")),
        };
        if let Err(d) = result {
            diags.push(d);
        }
    }
    if !diags.is_empty() {
        return Err(Error::Parse(diags));
    }
    let spans: Vec<Span> = actions.iter().map(|(s, _)| *s).collect();
    let fmdp = FactoredMdp {
        variables,
        actions: actions.into_iter().map(|(_, a)| a).collect(),
        reward,
        criterion,
    };
    if let Err(err) = fmdp.validate() {
        // locate the first action that fails on its own
        let span = fmdp
            .actions
            .iter()
            .zip(&spans)
            .find(|(a, _)| {
                FactoredMdp {
                    actions: vec![(*a).clone()],
                    reward: Vec::new(),
                    criterion: None,
                    variables: fmdp.variables.clone(),
                }
                .validate()
                .is_err()
            })
            .map_or(root.span(), |(_, s)| *s);
        return Err(Error::Parse(vec![Diagnostic::new(span, err.to_string())]));
    }
    Ok(fmdp)
}

fn emit_scalar_tree(fmdp: &FactoredMdp, tree: &ValueTree, indent: usize) -> String {
    emit_tree_at(tree, indent, &var_namer(fmdp), &value_namer(fmdp), &|v| fmt_exact(*v))
}

fn is_persistence(cpt: &CptTree, x: usize, size: usize) -> bool {
    let p = persistence_cpt(x, size);
    *cpt == p || *cpt == p.simplify(&vec![size.max(1); x + 1])
}

pub fn emit_factored(fmdp: &FactoredMdp) -> String {
    let names = value_namer(fmdp);
    let mut out = String::from("(fmdp\n");
    for v in &fmdp.variables {
        out.push_str(&format!("  (var {} ({}))\n", v.name, v.domain.join(" ")));
    }
    out.push_str("  (reward (add");
    for r in &fmdp.reward {
        out.push_str(&format!("\n    {}", emit_scalar_tree(fmdp, r, 4)));
    }
    out.push_str("))\n");
    for a in &fmdp.actions {
        out.push_str(&format!("  (action {}\n    (cost {})", a.name(), emit_scalar_tree(fmdp, a.cost(), 4)));
        match a {
            FactoredAction::Net(net) => {
                let mut persist = Vec::new();
                for (x, cpt) in net.cpts.iter().enumerate() {
                    let size = fmdp.variables[x].size();
                    if is_persistence(cpt, x, size) {
                        persist.push(fmdp.variables[x].name.as_str());
                        continue;
                    }
                    let leaf = |d: &Vec<f64>| {
                        let cells: Vec<String> = d
                            .iter()
                            .enumerate()
                            .map(|(v, p)| format!("({} {})", names(x, v), fmt_exact(*p)))
                            .collect();
                        format!("(dist {})", cells.join(" "))
                    };
                    let tree = emit_tree_at(cpt, 4, &var_namer(fmdp), &names, &leaf);
                    out.push_str(&format!("\n    (cpt {} {tree})", fmdp.variables[x].name));
                }
                if !persist.is_empty() {
                    out.push_str(&format!("\n    (persist {})", persist.join(" ")));
                }
            }
            FactoredAction::Pso(op) => {
                let leaf = |outcomes: &Vec<Outcome>| {
                    let cells: Vec<String> = outcomes
                        .iter()
                        .map(|o| {
                            let mut parts: Vec<String> = o
                                .changes
                                .iter()
                                .map(|&(v, x)| format!("({} {})", fmdp.variables[v].name, names(v, x)))
                                .collect();
                            parts.push(fmt_exact(o.prob));
                            format!("({})", parts.join(" "))
                        })
                        .collect();
                    format!("(effects {})", cells.join(" "))
                };
                let tree = emit_tree_at(&op.context, 4, &var_namer(fmdp), &names, &leaf);
                out.push_str(&format!("\n    (pso {tree})"));
            }
        }
        out.push_str(")\n");
    }
    match fmdp.criterion {
        Some(Criterion::Discounted(g)) => out.push_str(&format!("  (discount {})\n", fmt_exact(g))),
        Some(Criterion::FiniteHorizon(t)) => out.push_str(&format!("  (horizon {t})\n")),
        None => {}
    }
    out.push_str(")\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factored::ground;

    const DOC: &str = "
(fmdp
  (var X (t f))
  (var L (a b c))
  (reward (add (tree X (t 1) (f 0)) (tree L (a 2) (else 0))))
  (action stay (cost 0) (persist X L))
  (action move (cost (tree X (t -1) (f 0)))
    (cpt X (tree L (a (dist (t 0.5) (f 0.5))) (else (tree X' (t (dist (t 1))) (f (dist (f 1)))))))
    (persist L))
  (action flip (cost -0.5)
    (pso (tree X (t (effects ((X f) (L c) 0.25) (0.75))) (f (effects (1))))))
  (discount 0.9))";

    #[test]
    fn persistence_model_grounds() {
        let m = parse_factored("(fmdp (var X (t f)) (reward (add 0)) (action stay (cost 0) (persist X)))").unwrap();
        assert_eq!(ground(&m).unwrap().n_states(), 2);
    }

    #[test]
    fn round_trip() {
        let m = parse_factored(DOC);
        // X' in X's own CPT is a self-dependency
        assert!(m.is_err());
        let fixed = DOC.replace("(tree X' (t (dist (t 1))) (f (dist (f 1))))", "(dist (t 0.1) (f 0.9))");
        let m = parse_factored(&fixed).unwrap();
        let text = emit_factored(&m);
        let again = parse_factored(&text).unwrap();
        assert_eq!(m, again);
        assert_eq!(emit_factored(&again), text);
        assert_eq!(ground(&m).unwrap().n_states(), 6);
    }

    #[test]
    fn missing_cpt_is_reported() {
        let err = parse_factored("(fmdp (var X (t f)) (var Y (t f))\n (reward (add 0))\n (action a (cost 0) (persist X)))")
            .unwrap_err();
        let Error::Parse(d) = err else { panic!() };
        assert_eq!(d[0].span, Span::new(3, 2));
        assert!(d[0].message.contains("missing CPT for variable `Y`"));
    }

    #[test]
    fn bad_distribution_is_located() {
        let err = parse_factored("(fmdp (var X (t f)) (reward (add 0))\n(action a (cost 0) (cpt X (dist (t 0.4)))))").unwrap_err();
        let Error::Parse(d) = err else { panic!() };
        assert_eq!(d[0].span, Span::new(2, 27));
    }
}
