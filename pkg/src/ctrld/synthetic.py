"""Scripted negotiation scenarios with known ground truth.

Each scenario fixes a small local position, a pool of message phrasings and the
proposer's real orders. A message is a lie exactly when the proposer's final
orders differ from what the message promised. Every instance is placed in its
own phase and padded with far-away third-party units so no two positions repeat.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from .board import ARMY, GameState, MapDef, Unit, get_map
from .dataset import GameLog
from .extract import LIE, TRUTH, Extractor, Message
from .orders import Action, parse_order


class UnknownScenarioError(KeyError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    proposer: str
    recipient: str
    units: Mapping[str, tuple[str, ...]]
    centers: Mapping[str, tuple[str, ...]]
    # phrasings; {name} slots are filled with a random alias of that province
    texts: tuple[str, ...]
    # proposer's real orders; None means it keeps its promise
    actual: tuple[str, ...] | None = None
    has_proposal: bool = True


_BALKANS = dict(
    units={"ITALY": ("A TRI", "A VEN"), "AUSTRIA": ("A VIE", "A SER", "A BUD")},
    centers={
        "ITALY": ("ROM", "NAP", "VEN", "TRI"),
        "AUSTRIA": ("VIE", "BUD"),
        "TURKEY": ("SER", "CON", "ANK", "SMY"),
    },
)

SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in (
        # the proposer vacates a centre so the victim walks out of its own, then takes it
        Scenario(
            "center_stab",
            "AUSTRIA",
            "ITALY",
            texts=(
                "Could you move {TRI} to {SER}? I will move {SER} to {BUL}.",
                "I'm going to move {SER} to {BUL}, so can you move {TRI} into {SER}?",
                "Please move {TRI} to {SER}. I plan to move {SER} to {BUL} this turn.",
                "We both gain here: I will move {SER} to {BUL} and you should move {TRI} to {SER}.",
            ),
            actual=("A VIE - TRI", "A SER - BUL", "A BUD - RUM"),
            **_BALKANS,
        ),
        # the proposer asks for support and really makes the supported move
        Scenario(
            "honest_support",
            "AUSTRIA",
            "ITALY",
            units={"ITALY": ("A TRI", "A VEN"), "AUSTRIA": ("A VIE", "A BUD"), "TURKEY": ("A SER",)},
            centers=_BALKANS["centers"],
            texts=(
                "Could you support me into {SER}? I will move {BUD} to {SER}.",
                "I will move {BUD} to {SER}. Can you support me there?",
                "Please support me into {SER}, I am moving {BUD} to {SER} this turn.",
                "My plan is to move {BUD} into {SER}. Would you support me into {SER}?",
            ),
        ),
        # a promise to move away, so the victim leaves home open to the proposer
        Scenario(
            "false_promise",
            "ITALY",
            "FRANCE",
            units={"ITALY": ("A PIE", "A VEN"), "FRANCE": ("A MAR", "A BUR")},
            centers={"ITALY": ("ROM", "NAP", "VEN"), "FRANCE": ("MAR", "PAR", "BRE", "SPA")},
            texts=(
                "I will move {PIE} to {TUS}. Could you move {MAR} to {GAS}?",
                "I'm heading from {PIE} to {TUS}, you can safely move {MAR} to {GAS}. Please move {MAR} to {GAS}.",
                "No threat from me: I am moving {PIE} to {TUS}. Can you move {MAR} into {GAS}?",
            ),
            actual=("A PIE - MAR",),
        ),
        Scenario(
            "chitchat",
            "ENGLAND",
            "GERMANY",
            units={"ENGLAND": ("F LON", "A LVP"), "GERMANY": ("A BER", "F KIE")},
            centers={"ENGLAND": ("LON", "LVP", "EDI"), "GERMANY": ("BER", "KIE", "MUN")},
            texts=(
                "Good luck this turn, hope it goes well for you.",
                "How is your evening going? Busy week here.",
                "Nice game so far. Talk again after the adjustments.",
                "Thanks for the quick reply earlier, appreciated.",
            ),
            has_proposal=False,
        ),
    )
}

DEFAULT_MIX = {"center_stab": 40, "false_promise": 20, "honest_support": 60, "chitchat": 80}


@dataclass(frozen=True)
class SynthSpec:
    scenarios: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_MIX))
    map_name: str = "standard"
    game_id: str = "synth"
    decorations: int = 3


def _distances(mapdef: MapDef, sources) -> dict[str, int]:
    adj: dict[str, set[str]] = {p: set() for p in mapdef.provinces}
    for a, bs in mapdef.army_adj.items():
        adj[a] |= set(bs)
    for loc, targets in mapdef.fleet_adj.items():
        a = loc.split("/")[0]
        adj[a] |= {t.split("/")[0] for t in targets}
    dist = {s: 0 for s in sources}
    queue = deque(sources)
    while queue:
        p = queue.popleft()
        for q in sorted(adj[p]):
            if q not in dist:
                dist[q] = dist[p] + 1
                queue.append(q)
    return dist


def _phase(k: int) -> str:
    return f"{'SF'[k % 2]}{1901 + k // 2}M"


def _aliases(mapdef: MapDef) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for alias, owners in mapdef.alias_table.items():
        if len(owners) == 1 and "-" not in alias:
            out.setdefault(owners[0], []).append(alias)
    return {p: sorted(v) for p, v in out.items()}


def _instance(sc: Scenario, mapdef: MapDef, rng: random.Random, phase: str, n_decor: int):
    units = [Unit(p, tok.split()[0], tok.split()[1]) for p, toks in sc.units.items() for tok in toks]
    taken = {u.province for u in units}
    dist = _distances(mapdef, sorted(taken))
    owned = {c for cs in sc.centers.values() for c in cs}
    far = sorted(p for p, d in dist.items() if d >= 3 and mapdef.provinces[p].kind != "sea")
    others = [p for p in mapdef.powers if p not in sc.units]
    for prov in rng.sample(far, min(n_decor, len(far))):
        units.append(Unit(rng.choice(others), ARMY, prov))
    centers = {p: list(c) for p, c in sc.centers.items()}
    spare = sorted(c for c in mapdef.supply_centers if c not in owned and dist.get(c, 99) >= 3)
    for c in rng.sample(spare, min(2, len(spare))):
        centers.setdefault(rng.choice(others), []).append(c)
    return GameState.build(mapdef, phase, units, centers)


def generate_synthetic(spec: SynthSpec = SynthSpec(), seed: int = 0) -> GameLog:
    """A single game log holding the requested number of instances of each scenario."""
    for name in spec.scenarios:
        if name not in SCENARIOS:
            raise UnknownScenarioError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
    mapdef = get_map(spec.map_name)
    extractor = Extractor(mapdef)
    aliases = _aliases(mapdef)
    rng = random.Random(seed)
    plan = [name for name in sorted(spec.scenarios) for _ in range(spec.scenarios[name])]
    rng.shuffle(plan)

    states, messages, finals, tags = {}, [], {}, {}
    for k, name in enumerate(plan):
        sc = SCENARIOS[name]
        phase = _phase(k)
        state = _instance(sc, mapdef, rng, phase, spec.decorations)
        template = rng.choice(sc.texts)
        slots = {p: rng.choice(aliases[p]).title() if rng.random() < 0.5 else p for p in mapdef.provinces}
        text = template.format(**slots)
        draft = Message(spec.game_id, k, phase, sc.proposer, sc.recipient, text)
        final = {p: Action.of(p, (), state) for p in state.powers if state.units_of(p)}
        annotation = TRUTH
        if sc.has_proposal:
            frag = extractor.fragment(draft, state)
            if frag is None or not frag.proposer_orders:
                raise AssertionError(f"scenario {name}: text yields no two-sided proposal: {text!r}")
            promised = Action.of(sc.proposer, frag.proposer_orders, state)
            final[sc.recipient] = Action.of(sc.recipient, frag.recipient_orders, state)
            if sc.actual is None:
                final[sc.proposer] = promised
            else:
                final[sc.proposer] = Action.of(sc.proposer, [parse_order(t, state) for t in sc.actual], state)
            if final[sc.proposer].rendered() != promised.rendered():
                annotation = LIE
        msg = Message(spec.game_id, k, phase, sc.proposer, sc.recipient, text, annotation)
        states[phase] = state
        messages.append(msg)
        finals[phase] = final
        tags[msg.msg_id] = name
    return GameLog(spec.game_id, spec.map_name, states, messages, finals, tags)
