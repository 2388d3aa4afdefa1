"""Quick end-to-end check of the dtplan Python module."""

import math
import pathlib

import dtplan

CORPUS = pathlib.Path(__file__).resolve().parent.parent / "corpus"


def close(a, b, tol=1e-6):
    return math.isclose(a, b, abs_tol=tol)


def office():
    fm = dtplan.FactoredModel.load(str(CORPUS / "office_pso.fmdp"))
    flat = fm.ground()
    assert len(flat) == 16, flat
    values, policy = flat.solve_finite(2)
    s = flat.states.index("M=t,RHM=f,CR=t,RHC=t")
    assert close(values[2][s], 2.43), values[2][s]
    assert policy[1][s] == "DelC", policy[1][s]

    value, action = flat.expectimax("M=t,RHM=f,CR=t,RHC=f", 2)
    assert close(value, 1.0) and action == "PUM", (value, action)

    strips = dtplan.load(str(CORPUS / "office_strips.fmdp"))
    ops, _ = strips.regress("CR=t,M=t,RHC=f,RHM=f", "CR=f,M=f")
    assert ops == ["GetC", "PUM", "DelC", "DelM"], ops
    assert strips.regress("CR=t,M=t,RHC=f,RHM=f", "CR=f,M=f", depth=3) is None


def discounted():
    mail = dtplan.FactoredModel.load(str(CORPUS / "mail_robot.fmdp"))
    flat = mail.ground()
    v_vi, pi_vi = flat.value_iteration(0.9, 1e-10)
    v_pi, pi_pi = flat.policy_iteration(0.9)
    assert all(close(a, b, 1e-6) for a, b in zip(v_vi, v_pi))
    assert all(close(a, b, 1e-9) for a, b in zip(flat.evaluate(pi_pi, 0.9), v_pi))

    value_tree, policy_tree, iterations = mail.structured_vi(gamma=0.9, eps=1e-8)
    assert value_tree and policy_tree and iterations > 0

    full = dtplan.FactoredModel.load(str(CORPUS / "office_full.fmdp"))
    assert full.state_count == 400
    assert full.relevant(["CR"]) == ["Loc", "CR", "RHC"]
    assert full.abstract_model(["CR"]).state_count == 20


def ring():
    ring = dtplan.load(str(CORPUS / "robot_ring.flat"))
    policy = ["Stay" if s == "mO" else "Clk" for s in ring.states]
    recurrent, transient, absorbing = ring.classify(policy)
    assert recurrent == [["mO"]] and absorbing == ["mO"], recurrent
    assert len(transient) == 9
    steps, final = ring.simulate(policy, "nM", 30, seed=3)
    assert len(steps) == 30 and final == "mO"
    assert set(ring.reachable(["mM"])) == {"mM", "mH", "mO", "mL", "mC"}


def coffee():
    room = dtplan.FactoredModel.load(str(CORPUS / "coffee_room.fmdp")).ground()
    blocks = room.minimize()
    assert len(blocks) == 3, blocks
    again = dtplan.FlatModel.from_text(room.to_text())
    assert again.states == room.states


if __name__ == "__main__":
    office()
    discounted()
    ring()
    coffee()
    print("smoke test ok")
