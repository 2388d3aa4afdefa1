//! Bundled example models and the small hand-built constructions that go
//! with them.

use crate::error::Result;
use crate::events::ExogenousEvent;
use crate::factored::FactoredMdp;
use crate::io::{parse_factored, parse_flat_document, FlatDocument};
use crate::mdp::{
    ActionRecord, FlatMdp, ObservationModel, StationaryPolicy, Trajectory, TransitionMatrix,
};

/// Four-variable office domain with operator-style actions, horizon 2.
pub const OFFICE_PSO: &str = include_str!("../../../corpus/office_pso.fmdp");
/// The same domain as independent per-variable networks, horizon 3.
pub const OFFICE_NETS: &str = include_str!("../../../corpus/office_nets.fmdp");
/// Deterministic office domain for goal regression.
pub const OFFICE_STRIPS: &str = include_str!("../../../corpus/office_strips.fmdp");
/// Six-variable office domain with locations and tidiness (400 states).
pub const OFFICE_FULL: &str = include_str!("../../../corpus/office_full.fmdp");
/// Single-action coffee room model used for minimization.
pub const COFFEE_ROOM: &str = include_str!("../../../corpus/coffee_room.fmdp");
/// Mail delivery on the location ring (20 states).
pub const MAIL_ROBOT: &str = include_str!("../../../corpus/mail_robot.fmdp");
/// Ten-state ring robot with an explicit mail-arrival event.
pub const ROBOT_RING: &str = include_str!("../../../corpus/robot_ring.flat");

/// Every bundled model as `(file name, text)`.
pub const ALL: &[(&str, &str)] = &[
    ("office_pso.fmdp", OFFICE_PSO),
    ("office_nets.fmdp", OFFICE_NETS),
    ("office_strips.fmdp", OFFICE_STRIPS),
    ("office_full.fmdp", OFFICE_FULL),
    ("coffee_room.fmdp", COFFEE_ROOM),
    ("mail_robot.fmdp", MAIL_ROBOT),
    ("robot_ring.flat", ROBOT_RING),
];

pub fn office_pso() -> FactoredMdp {
    parse_factored(OFFICE_PSO).expect("bundled model parses")
}

pub fn office_nets() -> FactoredMdp {
    parse_factored(OFFICE_NETS).expect("bundled model parses")
}

pub fn office_strips() -> FactoredMdp {
    parse_factored(OFFICE_STRIPS).expect("bundled model parses")
}

pub fn office_full() -> FactoredMdp {
    parse_factored(OFFICE_FULL).expect("bundled model parses")
}

pub fn coffee_room() -> FactoredMdp {
    parse_factored(COFFEE_ROOM).expect("bundled model parses")
}

pub fn mail_robot() -> FactoredMdp {
    parse_factored(MAIL_ROBOT).expect("bundled model parses")
}

/// Ring robot without events folded in, plus its mail-arrival event.
pub fn robot_ring() -> FlatDocument {
    parse_flat_document(ROBOT_RING).expect("bundled model parses")
}

/// Ring robot with mail arrival folded into every action.
pub fn robot_ring_compiled() -> Result<FlatMdp> {
    let doc = robot_ring();
    let mut mdp = doc.mdp;
    for action in &mut mdp.actions {
        *action = crate::events::compile_implicit_action(action, &doc.events)?;
    }
    Ok(mdp)
}

/// The mail-arrival event of the ring robot.
pub fn arrive_mail() -> ExogenousEvent {
    robot_ring().events.remove(0)
}

/// Clockwise motion of the ring robot in isolation.
pub fn robot_clk() -> ActionRecord {
    let doc = robot_ring();
    let k = doc.mdp.action_index("Clk").expect("Clk declared");
    doc.mdp.actions[k].clone()
}

/// Policy moving clockwise at the mail room and coffee room and
/// counterclockwise elsewhere.
pub fn ring_mixed_policy(mdp: &FlatMdp) -> Result<StationaryPolicy> {
    let clk = mdp.action_index("Clk")?;
    let cclk = mdp.action_index("Cclk")?;
    let actions = mdp
        .states
        .iter()
        .map(|s| if s.ends_with('M') || s.ends_with('C') { clk } else { cclk })
        .collect();
    Ok(StationaryPolicy::new(actions))
}

/// The six-stage mail delivery history over the grounded [`mail_robot`]
/// model: stay while mail arrives, pick it up, walk to the office, deliver,
/// then one more move.
pub fn mail_delivery_history(fmdp: &FactoredMdp, flat: &FlatMdp) -> Result<Trajectory> {
    let state = |text: &str| -> Result<usize> {
        let mut s = vec![0; fmdp.variables.len()];
        for (var, value) in fmdp.parse_assignment(text)? {
            s[var] = value;
        }
        Ok(fmdp.encode(&s))
    };
    let act = |name: &str| flat.action_index(name);
    let steps = vec![
        (state("Loc=M,M=f,RHM=f")?, act("Stay")?),
        (state("Loc=M,M=t,RHM=f")?, act("PUM")?),
        (state("Loc=M,M=f,RHM=t")?, act("Clk")?),
        (state("Loc=H,M=f,RHM=t")?, act("Clk")?),
        (state("Loc=O,M=f,RHM=t")?, act("DelM")?),
        (state("Loc=O,M=f,RHM=f")?, act("Clk")?),
    ];
    Ok(Trajectory::new(steps, state("Loc=L,M=f,RHM=f")?))
}

/// Ring robot with a single state-preserving `CheckM` action and a noisy
/// mail sensor: inside the mail room it reports mail with probability 0.92
/// when mail is waiting and 0.05 when it is not; elsewhere it always
/// reports no mail.
pub fn mail_sensor() -> (FlatMdp, ObservationModel) {
    let states = robot_ring().mdp.states;
    let n = states.len();
    let mdp = FlatMdp {
        states: states.clone(),
        actions: vec![ActionRecord::new("CheckM", TransitionMatrix::identity(n), 0.0)],
        reward: vec![0.0; n],
        criterion: None,
        initial: None,
    };
    let mut om = ObservationModel {
        observations: vec!["mail".into(), "nomail".into()],
        prob: Default::default(),
    };
    for (i, name) in states.iter().enumerate() {
        let p_mail = match (name.ends_with('M'), name.starts_with('m')) {
            (true, true) => 0.92,
            (true, false) => 0.05,
            _ => 0.0,
        };
        om.prob.insert((i, 0, i), vec![p_mail, 1.0 - p_mail]);
    }
    (mdp, om)
}
