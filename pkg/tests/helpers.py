"""Random positions and joints on small maps, shared by property tests."""

import json
import random
from importlib import resources

import numpy as np

from ctrld.adjudicator import resolve
from ctrld.board import ARMY, FLEET, GameState, Unit, build_map
from ctrld.orders import Action, Move, legal_orders, parse_action, render_order


def random_state(mapdef, rng: random.Random, min_units=2, max_units=None, phase="S1901M"):
    provs = sorted(mapdef.provinces)
    max_units = min(max_units or len(provs), len(provs))
    chosen = rng.sample(provs, rng.randint(min_units, max_units))
    powers = mapdef.powers
    units = []
    for prov in sorted(chosen):
        kind = mapdef.provinces[prov].kind
        k = FLEET if kind == "sea" else ARMY if kind == "land" else rng.choice([ARMY, FLEET])
        loc = prov
        if k == FLEET and mapdef.provinces[prov].coasts:
            loc = f"{prov}/{rng.choice(mapdef.provinces[prov].coasts)}"
        units.append(Unit(rng.choice(powers), k, loc))
    centers = {}
    for sc in sorted(mapdef.supply_centers):
        if rng.random() < 0.5:
            centers.setdefault(rng.choice(powers), []).append(sc)
    return GameState.build(mapdef, phase, units, centers)


def random_joint(state, rng: random.Random, via_rate=0.1):
    m = state.map
    joint = {}
    for power in state.powers:
        orders = []
        for u in state.units_of(power):
            options = legal_orders(state, u)
            o = rng.choice(options)
            if u.kind == ARMY and m.is_coastal(u.province) and rng.random() < via_rate:
                targets = sorted(p for p in m.provinces if m.is_coastal(p) and p != u.province)
                o = Move(u, rng.choice(targets), via_convoy=True)
            orders.append(o)
        if orders:
            joint[power] = Action.of(power, orders, state)
    return joint


def relabel_map(name: str, mapping: dict, power_map: dict | None = None):
    """Copy of a built-in map with province ids (and optionally power names) renamed."""
    doc = json.loads((resources.files("ctrld") / "data" / f"{name}.json").read_text())
    power_map = power_map or {}
    for p in doc["provinces"]:
        p["id"] = mapping[p["id"]]
        p["aliases"] = []
    for e in doc["edges"]:
        e["a"], e["b"] = mapping[e["a"]], mapping[e["b"]]
    doc["home_centers"] = {
        power_map.get(k, k): [mapping[x] for x in v] for k, v in doc["home_centers"].items()
    }
    return build_map(doc, source=f"relabel:{name}")


def random_proposal(state, rng: random.Random, sampler, plan_rate=0.25, silent_rate=0.2):
    """A two-power proposal on ``state``; None when fewer than one power has units.

    With probability ``plan_rate`` the recipient is asked for exactly its own
    unprompted plan; with ``silent_rate`` the proposer promises nothing.
    """
    from ctrld.extract import Fragment, complete

    armed = [p for p in state.powers if state.units_of(p)]
    if not armed:
        return None
    recipient = rng.choice(armed)
    proposer = rng.choice([p for p in state.powers if p != recipient])
    if rng.random() < plan_rate:
        ask = tuple(sampler.sample(state, recipient).orders)
    else:
        units = state.units_of(recipient)
        picked = rng.sample(units, rng.randint(1, len(units)))
        ask = tuple(rng.choice(legal_orders(state, u)) for u in picked)
    offer = ()
    if state.units_of(proposer) and rng.random() >= silent_rate:
        offer = tuple(rng.choice(legal_orders(state, u)) for u in state.units_of(proposer))
    return complete(Fragment(proposer, recipient, ask, offer), state, sampler)


def separable_points(n=50, dim=12, seed=0, margin=0.2):
    """``n`` points split by a random hyperplane, none closer than ``margin`` to it."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=dim)
    w /= np.linalg.norm(w)
    rows = []
    while len(rows) < n:
        x = rng.normal(size=dim)
        d = float(x @ w)
        if abs(d) >= margin:
            rows.append((x, d > 0))
    return rows


def grad_check(model, X, y, w=None, h=1e-5, rel=1e-5, floor=1e-9):
    """Worst ratio of |analytic - central difference| to the allowed error; <= 1 passes."""
    _, gW, gb = model.loss_and_grads(X, y, w)
    worst = 0.0
    for params, grads in ((model.weights, gW), (model.biases, gb)):
        for P, G in zip(params, grads):
            for idx in np.ndindex(P.shape):
                old = P[idx]
                P[idx] = old + h
                up = model.loss_and_grads(X, y, w)[0]
                P[idx] = old - h
                down = model.loss_and_grads(X, y, w)[0]
                P[idx] = old
                fd = (up - down) / (2 * h)
                g = G[idx]
                allowed = rel * max(abs(fd), abs(g)) + floor
                worst = max(worst, abs(fd - g) / allowed)
    return worst


def check_conservation(state, res):
    """Units are kept or dislodged, never duplicated, and only move where a Move sent them."""
    assert len(res.next_state.units) == len(state.units) - len(res.dislodged)
    provs = [u.province for u in res.next_state.units]
    assert len(provs) == len(set(provs))
    ordered = {o.unit: o for o, _ in res.outcomes}
    for u in res.next_state.units:
        if state.unit_at(u.province) is not None and state.unit_at(u.province).power == u.power and state.unit_at(u.province).kind == u.kind and state.unit_at(u.province).loc == u.loc:
            continue
        movers = [o for o in ordered.values() if isinstance(o, Move) and o.unit.power == u.power and o.unit.kind == u.kind]
        assert any(o.dest.split("/")[0] == u.province for o in movers), u
    for d in res.dislodged:
        assert d not in res.next_state.units or state.unit_at(d.province) != d


def check_relabeling(state, joint, res, rng):
    """Renaming provinces and powers maps the resolution onto itself."""
    mini = state.map
    ids = sorted(mini.provinces)
    fresh = ["ZZA", "YYB", "XXC", "WWD", "VVE", "UUF"]
    rng.shuffle(fresh)
    pmap = dict(zip(ids, fresh))
    powers = list(mini.powers)
    shuffled = powers[:]
    rng.shuffle(shuffled)
    wmap = dict(zip(powers, shuffled))
    other = relabel_map(mini.name, pmap, wmap)

    def tr(text):
        toks = text.split()
        return " ".join(pmap.get(t, t) for t in toks)

    units = {}
    for u in state.units:
        units.setdefault(wmap[u.power], []).append(f"{u.kind} {pmap[u.loc]}")
    centers = {wmap[p]: [pmap[c] for c in cs] for p, cs in state.centers}
    state2 = GameState.build(other, "S1901M", units, centers)
    joint2 = {}
    for power in reversed(sorted(joint)):
        texts = [tr(t) for t in joint[power].rendered()]
        joint2[wmap[power]] = parse_action(texts, wmap[power], state2)
    res2 = resolve(state2, joint2)

    got = sorted((tr(render_order(o)), r) for o, r in res.outcomes)
    got2 = sorted((render_order(o), r) for o, r in res2.outcomes)
    assert got == got2
    nxt = sorted((wmap[u.power], u.kind, pmap[u.loc]) for u in res.next_state.units)
    nxt2 = sorted((u.power, u.kind, u.loc) for u in res2.next_state.units)
    assert nxt == nxt2
