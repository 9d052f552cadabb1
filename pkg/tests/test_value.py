import random

import pytest

from helpers import random_state
from ctrld.board import GameState, load_map
from ctrld.orders import Action, Hold, hold_action, parse_action
from ctrld.value import (
    AffineValue,
    GreedyPolicy,
    HeuristicValue,
    NoUnitsError,
    PolicyConfig,
    SizeLimitError,
    ValueWeights,
    argmax_action,
    brute_force_best,
    joint_key,
)


@pytest.fixture(scope="module")
def value():
    return HeuristicValue()


def test_centers_without_units(standard, value):
    s = GameState.build(standard, "S1901M", {"FRANCE": []}, {"FRANCE": ["PAR", "MAR"]})
    scores = value.evaluate(s, {})
    assert scores["FRANCE"] == 2.0
    assert scores["GERMANY"] == 0.0


def test_missing_powers_hold(standard, value):
    s = GameState.build(standard, "S1901M", {"FRANCE": ["A PAR"], "ITALY": ["A ROM"]}, {})
    explicit = {p: hold_action(s, p) for p in ("FRANCE", "ITALY")}
    assert value.evaluate(s, {}) == value.evaluate(s, explicit)
    assert joint_key(s, {}) == joint_key(s, explicit)


def test_defending_beats_believing(standard, value):
    # Germany brings a supported attack on Burgundy; France either supports the hold or walks away
    s = GameState.build(
        standard,
        "S1901M",
        {"FRANCE": ["A BUR", "A MAR"], "GERMANY": ["A MUN", "A RUH"]},
        {"FRANCE": ["PAR", "MAR", "BRE"]},
    )
    attack = parse_action(["A MUN - BUR", "A RUH S A MUN - BUR"], "GERMANY", s)
    defend = parse_action(["A MAR S A BUR"], "FRANCE", s)
    believe = parse_action(["A MAR - PIE"], "FRANCE", s)
    # 3 centres + 2 units + threats on BEL, MUN, SPA
    assert value.evaluate(s, {"GERMANY": attack, "FRANCE": defend})["FRANCE"] == pytest.approx(4.2, abs=1e-12)
    # BUR dislodged; one unit left in PIE threatening VEN
    assert value.evaluate(s, {"GERMANY": attack, "FRANCE": believe})["FRANCE"] == pytest.approx(3.0, abs=1e-12)


def test_weights_are_configurable(standard):
    s = GameState.build(standard, "S1901M", {"FRANCE": ["A PAR"]}, {"FRANCE": ["PAR"]})
    v = HeuristicValue(ValueWeights(sc=2.0, unit=0.0, threat=0.0, dislodge=0.0))
    assert v.evaluate(s, {})["FRANCE"] == 2.0


def test_lone_army_takes_neutral_center(fixtures, value):
    m = load_map(fixtures / "mini3.json")
    s = GameState.build(m, "S1901M", {"SOLO": ["A BBB"]}, {})
    act = GreedyPolicy(value).sample(s, "SOLO")
    assert act.rendered() == ("A BBB - AAA",)


def test_sample_rejects_power_without_units(standard, value):
    s = GameState.build(standard, "S1901M", {"FRANCE": ["A PAR"]}, {})
    with pytest.raises(NoUnitsError):
        GreedyPolicy(value).sample(s, "ITALY")
    with pytest.raises(NoUnitsError):
        brute_force_best(s, "ITALY", {}, value)


def test_policy_config_validated(value):
    with pytest.raises(ValueError):
        GreedyPolicy(value, PolicyConfig(passes=0))


def test_forbid_never_returned(mini, value):
    policy = GreedyPolicy(value)
    checked = 0
    for seed in range(60):
        s = random_state(mini, random.Random(seed))
        for power in s.powers:
            if not s.units_of(power):
                continue
            best = policy.sample(s, power)
            alt = policy.sample(s, power, forbid=best)
            if any(len(policy.candidates(s, u)) > 1 for u in s.units_of(power)):
                assert alt != best
                checked += 1
    assert checked > 20


def test_brute_force_size_limits(standard, value):
    s = GameState.build(standard, "S1901M", {"FRANCE": ["A PAR", "A MAR", "F BRE", "A BUR"]}, {})
    with pytest.raises(SizeLimitError):
        brute_force_best(s, "FRANCE", {}, value)
    one = GameState.build(standard, "S1901M", {"FRANCE": ["A BUR"]}, {})
    with pytest.raises(SizeLimitError):
        brute_force_best(one, "FRANCE", {}, value, max_cands=2)


def test_brute_force_exclude(mini, value):
    s = GameState.build(mini, "S1901M", {"RED": ["A BRK"]}, {})
    best_v, best = brute_force_best(s, "RED", {}, value)
    second_v, second = brute_force_best(s, "RED", {}, value, exclude=best)
    assert second != best and second_v <= best_v


def test_argmax_tie_break_is_canonical(mini):
    s = GameState.build(mini, "S1901M", {"RED": ["A BRK"]}, {})
    u = s.units_of("RED")[0]
    hold = Action.of("RED", [Hold(u)])
    move = parse_action(["A BRK - ARX"], "RED", s)
    assert argmax_action([(1.0, move), (1.0 + 1e-12, hold)])[1] == hold
    assert argmax_action([(1.0, move), (1.1, hold)])[1] == hold
    assert argmax_action([(1.2, move), (1.1, hold)])[1] == move
    with pytest.raises(ValueError):
        argmax_action([])


def test_more_centers_is_better(standard, value):
    base = GameState.build(standard, "S1901M", {"ITALY": ["A ROM"]}, {"ITALY": ["ROM"]})
    more = GameState.build(standard, "S1901M", {"ITALY": ["A ROM"]}, {"ITALY": ["ROM", "NAP"]})
    assert value.evaluate(more, {})["ITALY"] > value.evaluate(base, {})["ITALY"]


def test_affine_value(mini, value):
    s = random_state(mini, random.Random(3))
    aff = AffineValue(value, scale=2.5, offset=-7.0)
    raw = value.evaluate(s, {})
    for p, v in aff.evaluate(s, {}).items():
        assert v == pytest.approx(2.5 * raw[p] - 7.0)


def test_sample_matches_exhaustive_optimum(mini, value):
    policy = GreedyPolicy(value)
    n = 0
    for seed in range(400):
        s = random_state(mini, random.Random(seed))
        for power in s.powers:
            units = s.units_of(power)
            if not units or len(units) > 3:
                continue
            try:
                best_v, _ = brute_force_best(s, power, {}, value, candidates=policy.candidates)
            except SizeLimitError:
                continue
            act = policy.sample(s, power)
            got = value.evaluate(s, {power: act})[power]
            assert got == pytest.approx(best_v, abs=1e-9), (seed, power, act)
            n += 1
    assert n >= 50


def test_sample_deterministic(mini, value):
    s = random_state(mini, random.Random(11))
    power = next(p for p in s.powers if s.units_of(p))
    assert GreedyPolicy(HeuristicValue()).sample(s, power) == GreedyPolicy(value).sample(s, power)
