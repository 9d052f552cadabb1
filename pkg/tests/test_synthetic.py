import pytest

from ctrld.extract import LIE, TRUTH, Extractor
from ctrld.synthetic import DEFAULT_MIX, SCENARIOS, SynthSpec, UnknownScenarioError, generate_synthetic

SMALL = SynthSpec({"center_stab": 5, "honest_support": 5, "false_promise": 5, "chitchat": 5})


@pytest.fixture(scope="module")
def log_():
    return generate_synthetic(SMALL, seed=3)


def test_counts_and_tags(log_):
    tags = list(log_.tags.values())
    assert len(log_.messages) == 20
    assert {t: tags.count(t) for t in set(tags)} == dict(SMALL.scenarios)
    assert sum(DEFAULT_MIX.values()) == 200


def test_labels_follow_final_orders(log_):
    for m in log_.messages:
        sc = SCENARIOS[log_.tags[m.msg_id]]
        expected = LIE if sc.has_proposal and sc.actual is not None else TRUTH
        assert m.annotation == expected, m.text


def test_proposals_ground(log_):
    ex = Extractor(log_.map)
    for m in log_.messages:
        frag = ex.fragment(m, log_.state_for(m))
        assert (frag is not None) == SCENARIOS[log_.tags[m.msg_id]].has_proposal, m.text


def test_every_message_has_its_own_position(log_):
    assert len({m.phase for m in log_.messages}) == len(log_.messages)
    assert len(set(log_.states.values())) == len(log_.states)


def test_seeded(log_):
    again = generate_synthetic(SMALL, seed=3)
    assert again.messages == log_.messages and again.states == log_.states
    other = generate_synthetic(SMALL, seed=4)
    assert other.messages != log_.messages


def test_unknown_scenario():
    with pytest.raises(UnknownScenarioError):
        generate_synthetic(SynthSpec({"nonsense": 1}))
