import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import run_orders
from helpers import check_conservation, check_relabeling, random_joint, random_state
from ctrld.adjudicator import IncompleteJointError, resolve
from ctrld.board import GameState
from ctrld.orders import Action, Hold, Move, SupportHold, SupportMove, parse_action, parse_order, render_order

# name, units, orders, expected outcomes (by order text), expected dislodged ("POWER K LOC")
CASES = [
    (
        "all_hold",
        {"GERMANY": ["A BER", "F KIE"], "FRANCE": ["A PAR"]},
        {},
        {"A BER H": "succeeds", "F KIE H": "succeeds", "A PAR H": "succeeds"},
        [],
    ),
    (
        "bounce_into_empty",
        {"AUSTRIA": ["A VIE"], "ITALY": ["A VEN"]},
        {"AUSTRIA": ["A VIE - TYR"], "ITALY": ["A VEN - TYR"]},
        {"A VIE - TYR": "fails", "A VEN - TYR": "fails"},
        [],
    ),
    (
        "supported_attack_dislodges",
        {"GERMANY": ["A MUN", "A BOH"], "AUSTRIA": ["A TYR"]},
        {"GERMANY": ["A MUN - TYR", "A BOH S A MUN - TYR"]},
        {"A MUN - TYR": "succeeds", "A BOH S A MUN - TYR": "succeeds", "A TYR H": "fails"},
        ["AUSTRIA A TYR"],
    ),
    (
        "unsupported_attack_on_holder_fails",
        {"GERMANY": ["A MUN"], "AUSTRIA": ["A TYR"]},
        {"GERMANY": ["A MUN - TYR"]},
        {"A MUN - TYR": "fails", "A TYR H": "succeeds"},
        [],
    ),
    (
        "support_cut_by_third_party",
        {"ITALY": ["A VEN", "A TYR"], "AUSTRIA": ["F TRI", "A VIE"]},
        {"ITALY": ["A VEN - TRI", "A TYR S A VEN - TRI"], "AUSTRIA": ["A VIE - TYR"]},
        {"A VEN - TRI": "fails", "A TYR S A VEN - TRI": "cut", "A VIE - TYR": "fails"},
        [],
    ),
    (
        "support_not_cut_from_target",
        {"GERMANY": ["A PRU", "A SIL"], "RUSSIA": ["A WAR"]},
        {"GERMANY": ["A PRU - WAR", "A SIL S A PRU - WAR"], "RUSSIA": ["A WAR - SIL"]},
        {"A PRU - WAR": "succeeds", "A SIL S A PRU - WAR": "succeeds", "A WAR - SIL": "fails"},
        ["RUSSIA A WAR"],
    ),
    (
        "supporter_dislodged_from_target",
        {"GERMANY": ["A PRU", "A SIL"], "RUSSIA": ["A WAR", "A GAL"]},
        {"GERMANY": ["A PRU - WAR", "A SIL S A PRU - WAR"], "RUSSIA": ["A WAR - SIL", "A GAL S A WAR - SIL"]},
        {"A PRU - WAR": "succeeds", "A SIL S A PRU - WAR": "cut", "A WAR - SIL": "succeeds"},
        ["GERMANY A SIL"],
    ),
    (
        "self_dislodgement_banned",
        {"GERMANY": ["A BER", "F KIE", "A MUN"]},
        {"GERMANY": ["F KIE - BER", "A MUN S F KIE - BER"]},
        {"F KIE - BER": "fails", "A BER H": "succeeds"},
        [],
    ),
    (
        "no_support_against_own_unit",
        {"AUSTRIA": ["A BOH"], "GERMANY": ["A SIL", "A MUN"]},
        {"AUSTRIA": ["A BOH - MUN"], "GERMANY": ["A SIL S A BOH - MUN"]},
        {"A BOH - MUN": "fails", "A MUN H": "succeeds"},
        [],
    ),
    (
        "head_to_head_bounce",
        {"GERMANY": ["A BER"], "RUSSIA": ["A PRU"]},
        {"GERMANY": ["A BER - PRU"], "RUSSIA": ["A PRU - BER"]},
        {"A BER - PRU": "fails", "A PRU - BER": "fails"},
        [],
    ),
    (
        "head_to_head_supported_wins",
        {"GERMANY": ["A BER", "A SIL"], "RUSSIA": ["A PRU"]},
        {"GERMANY": ["A BER - PRU", "A SIL S A BER - PRU"], "RUSSIA": ["A PRU - BER"]},
        {"A BER - PRU": "succeeds", "A PRU - BER": "fails"},
        ["RUSSIA A PRU"],
    ),
    (
        "circular_movement",
        {"TURKEY": ["F ANK", "A CON", "A SMY"]},
        {"TURKEY": ["F ANK - CON", "A CON - SMY", "A SMY - ANK"]},
        {"F ANK - CON": "succeeds", "A CON - SMY": "succeeds", "A SMY - ANK": "succeeds"},
        [],
    ),
    (
        "circular_movement_blocked",
        {"TURKEY": ["F ANK", "A CON", "A SMY"], "RUSSIA": ["A ARM"]},
        {"TURKEY": ["F ANK - CON", "A CON - SMY", "A SMY - ANK"], "RUSSIA": ["A ARM - ANK"]},
        {"F ANK - CON": "fails", "A CON - SMY": "fails", "A SMY - ANK": "fails", "A ARM - ANK": "fails"},
        [],
    ),
    (
        "beleaguered_garrison",
        {"FRANCE": ["A BUR", "A RUH"], "RUSSIA": ["A SIL", "A BOH"], "GERMANY": ["A MUN"]},
        {
            "FRANCE": ["A BUR - MUN", "A RUH S A BUR - MUN"],
            "RUSSIA": ["A SIL - MUN", "A BOH S A SIL - MUN"],
        },
        {"A BUR - MUN": "fails", "A SIL - MUN": "fails", "A MUN H": "succeeds"},
        [],
    ),
    (
        "simple_convoy",
        {"ENGLAND": ["A LON", "F NTH"]},
        {"ENGLAND": ["A LON - NWY", "F NTH C A LON - NWY"]},
        {"A LON - NWY": "succeeds", "F NTH C A LON - NWY": "succeeds"},
        [],
    ),
    (
        "convoy_fleet_dislodged",
        {"ENGLAND": ["A LON", "F NTH"], "FRANCE": ["F ENG", "F BEL"]},
        {"ENGLAND": ["A LON - HOL", "F NTH C A LON - HOL"], "FRANCE": ["F ENG - NTH", "F BEL S F ENG - NTH"]},
        {"A LON - HOL": "fails", "F NTH C A LON - HOL": "fails", "F ENG - NTH": "succeeds"},
        ["ENGLAND F NTH"],
    ),
    (
        "convoyed_swap",
        {"ENGLAND": ["A LON", "F NTH"], "FRANCE": ["A BEL", "F ENG"]},
        {"ENGLAND": ["A LON - BEL", "F NTH C A LON - BEL"], "FRANCE": ["A BEL - LON", "F ENG C A BEL - LON"]},
        {"A LON - BEL": "succeeds", "A BEL - LON": "succeeds"},
        [],
    ),
    (
        "convoy_paradox_fails_convoyed_move",
        {"ENGLAND": ["F LON", "F WAL"], "FRANCE": ["A BRE", "F ENG"]},
        {"ENGLAND": ["F LON S F WAL - ENG", "F WAL - ENG"], "FRANCE": ["A BRE - LON", "F ENG C A BRE - LON"]},
        {"A BRE - LON": "fails", "F LON S F WAL - ENG": "succeeds", "F WAL - ENG": "succeeds"},
        ["FRANCE F ENG"],
    ),
    (
        "hold_support_defends",
        {"GERMANY": ["A MUN", "A BOH"], "AUSTRIA": ["A TYR"], "ITALY": ["A VEN"]},
        {"GERMANY": ["A MUN - TYR", "A BOH S A MUN - TYR"], "ITALY": ["A VEN S A TYR"]},
        {"A MUN - TYR": "fails", "A VEN S A TYR": "succeeds"},
        [],
    ),
    (
        "illegal_move_becomes_hold",
        {"GERMANY": ["A MUN"]},
        {"GERMANY": ["A MUN - MOS"]},
        {"A MUN - MOS": "fails"},
        [],
    ),
    (
        "mismatched_support_is_void",
        {"GERMANY": ["A MUN", "A BOH"], "AUSTRIA": ["A TYR"]},
        {"GERMANY": ["A MUN - TYR", "A BOH S A MUN - VIE"]},
        {"A MUN - TYR": "fails", "A BOH S A MUN - VIE": "fails"},
        [],
    ),
]


@pytest.mark.parametrize("name,units,orders,outcomes,dislodged", CASES, ids=[c[0] for c in CASES])
def test_pinned_case(standard, name, units, orders, outcomes, dislodged):
    state, res = run_orders(standard, units, orders)
    got = {render_order(o): r for o, r in res.outcomes}
    for text, expected in outcomes.items():
        assert got[text] == expected, (text, got)
    assert [f"{u.power} {u}" for u in res.dislodged] == dislodged
    assert len(res.outcomes) == len(state.units)


def test_all_hold_is_fixpoint(standard):
    state = GameState.initial(standard, "S1901M", {"GERMANY": ["A BER", "A MUN", "F KIE"], "FRANCE": ["A PAR"]})
    res = resolve(state, {})
    assert res.next_state == state


def test_capture_on_arrival_only(standard):
    state, res = run_orders(standard, {"ENGLAND": ["A LON", "F NTH"]}, {"ENGLAND": ["A LON - NWY", "F NTH C A LON - NWY"]})
    assert res.next_state.centers_of("ENGLAND") == {"NWY"}
    # a unit that merely holds on an unowned center does not take it
    state, res = run_orders(standard, {"ENGLAND": ["A NWY"]}, {})
    assert res.next_state.centers_of("ENGLAND") == frozenset()


def test_dislodged_unit_loses_nothing_but_itself(standard):
    state, res = run_orders(
        standard,
        {"GERMANY": ["A TYR", "A BOH"], "AUSTRIA": ["A VIE"]},
        {"GERMANY": ["A BOH - VIE", "A TYR S A BOH - VIE"]},
        centers={"AUSTRIA": ["VIE"]},
    )
    nxt = res.next_state
    assert nxt.units_of("AUSTRIA") == ()
    assert nxt.centers_of("GERMANY") == {"VIE"}
    assert nxt.centers_of("AUSTRIA") == frozenset()


def test_fleet_coast_needed(standard):
    state, res = run_orders(standard, {"FRANCE": ["F MAO"]}, {"FRANCE": ["F MAO - SPA"]})
    assert res.outcomes[0][1] == "fails"
    assert res.invalid
    state, res = run_orders(standard, {"FRANCE": ["F MAO"]}, {"FRANCE": ["F MAO - SPA/NC"]})
    assert res.outcomes[0][1] == "succeeds"
    assert str(res.next_state.units[0]) == "F SPA/NC"


def test_incomplete_action_rejected(standard):
    state = GameState.build(standard, "S1901M", {"GERMANY": ["A BER", "A MUN"]})
    partial = Action("GERMANY", (Hold(state.unit_at("BER")),))
    with pytest.raises(IncompleteJointError):
        resolve(state, {"GERMANY": partial})
    with pytest.raises(IncompleteJointError):
        resolve(state, {"FRANCE": parse_action([], "GERMANY", state)})


def test_outcome_order_independent_of_joint_order(standard):
    units = {"GERMANY": ["A MUN", "A BOH"], "AUSTRIA": ["A TYR", "A VIE"]}
    state = GameState.build(standard, "S1901M", units)
    g = parse_action(["A MUN - TYR", "A BOH S A MUN - TYR"], "GERMANY", state)
    a = parse_action(["A VIE - BOH"], "AUSTRIA", state)
    assert resolve(state, {"GERMANY": g, "AUSTRIA": a}) == resolve(state, {"AUSTRIA": a, "GERMANY": g})


# -- properties on random small joints ------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_conservation_and_no_teleport(mini, seed):
    rng = random.Random(seed)
    state = random_state(mini, rng)
    res = resolve(state, random_joint(state, rng))
    check_conservation(state, res)
    assert len(res.outcomes) == len(state.units)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_relabeling_invariance(mini, seed):
    """Renaming provinces and powers (which reorders every internal iteration) maps results onto each other."""
    rng = random.Random(seed)
    state = random_state(mini, rng)
    joint = random_joint(state, rng)
    check_relabeling(state, joint, resolve(state, joint), rng)


def _hold_equivalent(state, joint, res, move):
    """A failed move can be swapped for Hold without side effects when nothing else hinges on it."""
    orders = [o for a in joint.values() for o in a.orders]
    dest = move.dest.split("/")[0]
    for o in orders:
        if o is move:
            continue
        if isinstance(o, Move) and o.dest.split("/")[0] == dest:
            return False
        if isinstance(o, Move) and o.unit.province == dest and o.dest.split("/")[0] == move.unit.province:
            return False
        if isinstance(o, SupportHold) and o.target == move.unit:
            return False
        if o.unit.province == dest and isinstance(o, (SupportHold, SupportMove)):
            return False
    return True


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_failed_move_replaced_by_hold(mini, seed):
    rng = random.Random(seed)
    state = random_state(mini, rng)
    joint = random_joint(state, rng)
    res = resolve(state, joint)
    for o, r in res.outcomes:
        if isinstance(o, Move) and r == "fails" and _hold_equivalent(state, joint, res, o):
            power = o.unit.power
            changed = dict(joint)
            changed[power] = joint[power].replace(Hold(o.unit))
            assert resolve(state, changed).next_state == res.next_state, render_order(o)


def test_parse_round_trip_on_outcomes(standard):
    state, res = run_orders(standard, {"ITALY": ["A TUN", "F ION"]}, {"ITALY": ["A TUN - ALB VIA", "F ION C A TUN - ALB"]})
    assert dict((render_order(o), r) for o, r in res.outcomes) == {
        "A TUN - ALB VIA": "succeeds",
        "F ION C A TUN - ALB": "succeeds",
    }
    assert res.outcome(parse_order("A TUN - ALB VIA", state)) == "succeeds"
