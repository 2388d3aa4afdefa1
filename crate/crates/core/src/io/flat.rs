//! Line-oriented flat model format.
//!
//! ```text
//! states s1 s2
//! discount 0.9
//! init s1 1
//! action go cost -1
//!   s1 : s2 0.5 s1 0.5
//!   costrow s2 0
//! reward
//!   default : 0
//!   s2 : 1
//! event arrive
//!   s1 : s2 1
//!   occur s1 0.2
//! ```
//!
//! Omitted rows are self-loops; omitted occurrence probabilities are zero.

use std::collections::BTreeMap;

use super::output::fmt_exact;
use crate::error::{Diagnostic, Error, Result, Span};
use crate::events::ExogenousEvent;
use crate::mdp::{most_frequent, validate_mdp, ActionRecord, Criterion, FlatMdp, TransitionMatrix};

const ROW_TOL: f64 = 1e-9;

/// A flat model together with the exogenous events declared beside it.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatDocument {
    pub mdp: FlatMdp,
    pub events: Vec<ExogenousEvent>,
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    span: Span,
}

fn tokenize(line: &str, number: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<Token> = None;
    for (k, c) in line.chars().enumerate() {
        let span = Span::new(number, k + 1);
        if c == '#' {
            break;
        }
        if c.is_whitespace() || c == ':' {
            tokens.extend(current.take());
            if c == ':' {
                tokens.push(Token { text: ":".into(), span });
            }
            continue;
        }
        match &mut current {
            Some(t) => t.text.push(c),
            None => current = Some(Token { text: c.to_string(), span }),
        }
    }
    tokens.extend(current);
    tokens
}

struct RowBlock {
    name: String,
    span: Span,
    rows: Vec<Option<Vec<(usize, f64)>>>,
}

struct ActionBlock {
    block: RowBlock,
    cost: f64,
    overrides: BTreeMap<usize, f64>,
}

struct EventBlock {
    block: RowBlock,
    occurrence: Vec<f64>,
}

enum Section {
    Top,
    Action,
    Reward,
    Event,
}

struct Parser {
    diags: Vec<Diagnostic>,
    states: Vec<String>,
    index: BTreeMap<String, usize>,
    states_span: Option<Span>,
    criterion: Option<(Criterion, Span)>,
    initial: Option<Vec<f64>>,
    actions: Vec<ActionBlock>,
    events: Vec<EventBlock>,
    reward: BTreeMap<usize, f64>,
    default_reward: Option<f64>,
    section: Section,
}

impl Parser {
    fn error(&mut self, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(span, msg));
    }

    fn real(&mut self, t: &Token) -> Option<f64> {
        match t.text.parse::<f64>() {
            Ok(x) if x.is_finite() => Some(x),
            _ => {
                self.error(t.span, format!("expected a number, found `{}`", t.text));
                None
            }
        }
    }

    fn state(&mut self, t: &Token) -> Option<usize> {
        match self.index.get(&t.text) {
            Some(&s) => Some(s),
            None => {
                self.error(t.span, format!("unknown state `{}`", t.text));
                None
            }
        }
    }

    fn expect_arity(&mut self, toks: &[Token], n: usize, form: &str) -> bool {
        if toks.len() != n {
            self.error(toks[0].span, format!("expected `{form}`"));
            false
        } else {
            true
        }
    }

    fn line(&mut self, toks: &[Token]) {
        let head = toks[0].text.as_str();
        if head != "states" && self.states_span.is_none() {
            self.error(toks[0].span, "the `states` line must come first");
            return;
        }
        match head {
            "states" => self.states_line(toks),
            "discount" => {
                if self.expect_arity(toks, 2, "discount <real>") {
                    if let Some(g) = self.real(&toks[1]) {
                        self.set_criterion(Criterion::Discounted(g), toks[0].span);
                    }
                }
            }
            "horizon" => {
                if self.expect_arity(toks, 2, "horizon <int>") {
                    match toks[1].text.parse::<usize>() {
                        Ok(t) => self.set_criterion(Criterion::FiniteHorizon(t), toks[0].span),
                        Err(_) => self.error(toks[1].span, format!("expected a horizon, found `{}`", toks[1].text)),
                    }
                }
            }
            "init" => self.init_line(toks),
            "action" => {
                self.section = Section::Top;
                if toks.len() != 4 || toks[2].text != "cost" {
                    self.error(toks[0].span, "expected `action <id> cost <real>`");
                    return;
                }
                if self.actions.iter().any(|a| a.block.name == toks[1].text) {
                    self.error(toks[1].span, format!("duplicate action `{}`", toks[1].text));
                    return;
                }
                if let Some(cost) = self.real(&toks[3]) {
                    let n = self.states.len();
                    self.actions.push(ActionBlock {
                        block: RowBlock {
                            name: toks[1].text.clone(),
                            span: toks[0].span,
                            rows: vec![None; n],
                        },
                        cost,
                        overrides: BTreeMap::new(),
                    });
                    self.section = Section::Action;
                }
            }
            "costrow" => {
                if !matches!(self.section, Section::Action) {
                    self.error(toks[0].span, "`costrow` outside an action block");
                    return;
                }
                if self.expect_arity(toks, 3, "costrow <state> <real>") {
                    if let (Some(s), Some(c)) = (self.state(&toks[1]), self.real(&toks[2])) {
                        let action = self.actions.last_mut().expect("inside an action");
                        if action.overrides.insert(s, c).is_some() {
                            self.error(toks[1].span, format!("second cost for state `{}`", toks[1].text));
                        }
                    }
                }
            }
            "reward" => {
                if toks.len() != 1 {
                    self.error(toks[0].span, "`reward` takes no arguments");
                }
                self.section = Section::Reward;
            }
            "event" => {
                self.section = Section::Top;
                if !self.expect_arity(toks, 2, "event <id>") {
                    return;
                }
                if self.events.iter().any(|e| e.block.name == toks[1].text) {
                    self.error(toks[1].span, format!("duplicate event `{}`", toks[1].text));
                    return;
                }
                let n = self.states.len();
                self.events.push(EventBlock {
                    block: RowBlock {
                        name: toks[1].text.clone(),
                        span: toks[0].span,
                        rows: vec![None; n],
                    },
                    occurrence: vec![0.0; n],
                });
                self.section = Section::Event;
            }
            "occur" => {
                if !matches!(self.section, Section::Event) {
                    self.error(toks[0].span, "`occur` outside an event block");
                    return;
                }
                if self.expect_arity(toks, 3, "occur <state> <real>") {
                    if let (Some(s), Some(p)) = (self.state(&toks[1]), self.real(&toks[2])) {
                        if !(0.0..=1.0).contains(&p) {
                            self.error(toks[2].span, format!("occurrence probability {p} is outside [0, 1]"));
                        }
                        self.events.last_mut().expect("inside an event").occurrence[s] = p;
                    }
                }
            }
            _ if toks.len() >= 2 && toks[1].text == ":" => match self.section {
                Section::Action | Section::Event => self.row_line(toks),
                Section::Reward => self.reward_line(toks),
                Section::Top => self.error(toks[0].span, "row outside an action or event block"),
            },
            _ => self.error(toks[0].span, format!("unknown keyword `{head}`")),
        }
    }

    fn states_line(&mut self, toks: &[Token]) {
        if self.states_span.is_some() {
            self.error(toks[0].span, "states declared twice");
            return;
        }
        self.states_span = Some(toks[0].span);
        if toks.len() < 2 {
            self.error(toks[0].span, "at least one state is required");
        }
        for t in &toks[1..] {
            if t.text == ":" {
                self.error(t.span, "`:` is not a state name");
            } else if self.index.insert(t.text.clone(), self.states.len()).is_some() {
                self.error(t.span, format!("duplicate state `{}`", t.text));
            } else {
                self.states.push(t.text.clone());
            }
        }
    }

    fn set_criterion(&mut self, c: Criterion, span: Span) {
        if self.criterion.is_some() {
            self.error(span, "criterion declared twice");
        } else {
            self.criterion = Some((c, span));
        }
    }

    fn init_line(&mut self, toks: &[Token]) {
        if self.initial.is_some() {
            self.error(toks[0].span, "initial distribution declared twice");
            return;
        }
        if toks.len() < 3 || toks.len() % 2 == 0 {
            self.error(toks[0].span, "expected `init (<state> <real>)+`");
            return;
        }
        let mut init = vec![0.0; self.states.len()];
        for pair in toks[1..].chunks(2) {
            if let (Some(s), Some(p)) = (self.state(&pair[0]), self.real(&pair[1])) {
                init[s] += p;
            }
        }
        let sum: f64 = init.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            self.error(toks[0].span, format!("initial distribution sums to {sum} ≠ 1"));
        }
        self.initial = Some(init);
    }

    fn row_line(&mut self, toks: &[Token]) {
        let span = toks[0].span;
        let Some(src) = self.state(&toks[0]) else { return };
        let rest = &toks[2..];
        if rest.is_empty() || rest.len() % 2 != 0 {
            self.error(span, "expected `<state> : (<state> <real>)+`");
            return;
        }
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        let mut ok = true;
        for pair in rest.chunks(2) {
            match (self.state(&pair[0]), self.real(&pair[1])) {
                (Some(j), Some(p)) => {
                    if !(0.0..=1.0).contains(&p) {
                        self.error(pair[1].span, format!("probability {p} is outside [0, 1]"));
                        ok = false;
                    }
                    if row.insert(j, p).is_some() {
                        self.error(pair[0].span, format!("successor `{}` listed twice", pair[0].text));
                        ok = false;
                    }
                }
                _ => ok = false,
            }
        }
        if !ok {
            return;
        }
        let sum: f64 = row.values().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            self.error(span, format!("row sum {sum} ≠ 1"));
        }
        let block = match self.section {
            Section::Action => &mut self.actions.last_mut().expect("inside an action").block,
            _ => &mut self.events.last_mut().expect("inside an event").block,
        };
        if block.rows[src].is_some() {
            let name = block.name.clone();
            self.error(span, format!("second row for `{}` in `{name}`", toks[0].text));
            return;
        }
        block.rows[src] = Some(row.into_iter().collect());
    }

    fn reward_line(&mut self, toks: &[Token]) {
        if !self.expect_arity(toks, 3, "<state|default> : <real>") {
            return;
        }
        let Some(r) = self.real(&toks[2]) else { return };
        if toks[0].text == "default" {
            if self.default_reward.replace(r).is_some() {
                self.error(toks[0].span, "default reward given twice");
            }
        } else if let Some(s) = self.state(&toks[0]) {
            if self.reward.insert(s, r).is_some() {
                self.error(toks[0].span, format!("second reward for `{}`", toks[0].text));
            }
        }
    }
}

fn matrix(block: &RowBlock) -> TransitionMatrix {
    TransitionMatrix::from_rows(
        block
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.clone().unwrap_or_else(|| vec![(i, 1.0)]))
            .collect(),
    )
}

pub fn parse_flat_document(text: &str) -> Result<FlatDocument> {
    let mut p = Parser {
        diags: Vec::new(),
        states: Vec::new(),
        index: BTreeMap::new(),
        states_span: None,
        criterion: None,
        initial: None,
        actions: Vec::new(),
        events: Vec::new(),
        reward: BTreeMap::new(),
        default_reward: None,
        section: Section::Top,
    };
    for (k, line) in text.lines().enumerate() {
        let toks = tokenize(line, k + 1);
        if !toks.is_empty() {
            p.line(&toks);
        }
    }
    let Some(states_span) = p.states_span else {
        return Err(Error::Parse(vec![Diagnostic::new(Span::new(1, 1), "missing `states` line")]));
    };
    if p.actions.is_empty() {
        p.error(states_span, "model declares no actions");
    }
    if !p.diags.is_empty() {
        return Err(Error::Parse(p.diags));
    }
    let default = p.default_reward.unwrap_or(0.0);
    let reward = (0..p.states.len())
        .map(|s| p.reward.get(&s).copied().unwrap_or(default))
        .collect();
    let actions = p
        .actions
        .iter()
        .map(|a| {
            let mut record = ActionRecord::new(a.block.name.clone(), matrix(&a.block), a.cost);
            record.cost_overrides = a.overrides.clone();
            record
        })
        .collect();
    let mdp = FlatMdp {
        states: p.states.clone(),
        actions,
        reward,
        criterion: p.criterion.map(|(c, _)| c),
        initial: p.initial.clone(),
    };
    let report = validate_mdp(&mdp);
    if !report.is_empty() {
        let span = p.criterion.map_or(states_span, |(_, s)| s);
        return Err(Error::Parse(
            report.issues.iter().map(|i| Diagnostic::new(span, i.to_string())).collect(),
        ));
    }
    let mut events = Vec::new();
    let mut diags = Vec::new();
    for e in &p.events {
        let event = ExogenousEvent::new(e.block.name.clone(), matrix(&e.block), e.occurrence.clone());
        match event.validate() {
            Ok(()) => events.push(event),
            Err(err) => diags.push(Diagnostic::new(e.block.span, err.to_string())),
        }
    }
    if !diags.is_empty() {
        return Err(Error::Parse(diags));
    }
    Ok(FlatDocument { mdp, events })
}

pub fn parse_flat(text: &str) -> Result<FlatMdp> {
    Ok(parse_flat_document(text)?.mdp)
}

fn emit_rows(out: &mut String, states: &[String], m: &TransitionMatrix) {
    for (i, row) in m.rows().iter().enumerate() {
        if row.as_slice() == [(i, 1.0)] {
            continue;
        }
        let cells: Vec<String> = row
            .iter()
            .map(|&(j, p)| format!("{} {}", states[j], fmt_exact(p)))
            .collect();
        out.push_str(&format!("  {} : {}\n", states[i], cells.join(" ")));
    }
}

pub fn emit_flat_document(doc: &FlatDocument) -> String {
    let mdp = &doc.mdp;
    let mut out = format!("states {}\n", mdp.states.join(" "));
    match mdp.criterion {
        Some(Criterion::Discounted(g)) => out.push_str(&format!("discount {}\n", fmt_exact(g))),
        Some(Criterion::FiniteHorizon(t)) => out.push_str(&format!("horizon {t}\n")),
        None => {}
    }
    if let Some(init) = &mdp.initial {
        let cells: Vec<String> = init
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(s, &p)| format!("{} {}", mdp.states[s], fmt_exact(p)))
            .collect();
        out.push_str(&format!("init {}\n", cells.join(" ")));
    }
    for a in &mdp.actions {
        out.push_str(&format!("action {} cost {}\n", a.name, fmt_exact(a.default_cost)));
        emit_rows(&mut out, &mdp.states, &a.matrix);
        for (&s, &c) in &a.cost_overrides {
            out.push_str(&format!("  costrow {} {}\n", mdp.states[s], fmt_exact(c)));
        }
    }
    let default = most_frequent(&mdp.reward);
    out.push_str(&format!("reward\n  default : {}\n", fmt_exact(default)));
    for (s, &r) in mdp.reward.iter().enumerate() {
        if r != default {
            out.push_str(&format!("  {} : {}\n", mdp.states[s], fmt_exact(r)));
        }
    }
    for e in &doc.events {
        out.push_str(&format!("event {}\n", e.name));
        emit_rows(&mut out, &mdp.states, &e.matrix);
        for (s, &p) in e.occurrence.iter().enumerate() {
            if p != 0.0 {
                out.push_str(&format!("  occur {} {}\n", mdp.states[s], fmt_exact(p)));
            }
        }
    }
    out
}

pub fn emit_flat(mdp: &FlatMdp) -> String {
    emit_flat_document(&FlatDocument {
        mdp: mdp.clone(),
        events: Vec::new(),
    })
}
