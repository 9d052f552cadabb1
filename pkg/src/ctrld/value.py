"""Value function and policy sampler over one-step adjudicated outcomes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Protocol

from .adjudicator import resolve
from .board import GameState, Unit, province_of
from .orders import Action, Hold, Move, Order, action_key, legal_orders


class NoUnitsError(ValueError):
    pass


class SizeLimitError(ValueError):
    pass


Joint = Mapping[str, Action]


class ValueFunction(Protocol):
    def evaluate(self, state: GameState, joint: Joint) -> dict[str, float]: ...


@dataclass(frozen=True)
class ValueWeights:
    sc: float = 1.0
    unit: float = 0.3
    threat: float = 0.2
    dislodge: float = 0.5


def joint_key(state: GameState, joint: Joint) -> tuple:
    """Canonical cache key: missing powers and explicit all-hold Actions collapse together.

    Joints are validated by the adjudicator on a cache miss, not here.
    """
    moves = []
    for power, action in joint.items():
        for o in action.orders:
            if type(o) is not Hold:
                moves.append((power, o.unit.loc, o))
    moves.sort(key=lambda t: (t[0], t[1]))
    return (state, tuple(o for _, _, o in moves))


class HeuristicValue:
    """Score each power on the adjudicated next position.

    centers, units and threatened uncontrolled centers count for a power,
    units dislodged this step count against it.
    """

    def __init__(self, weights: ValueWeights = ValueWeights(), cache_limit: int = 200_000):
        self.weights = weights
        self.cache_limit = cache_limit
        self._cache: dict[tuple, dict[str, float]] = {}
        self.calls = 0

    def evaluate(self, state: GameState, joint: Joint) -> dict[str, float]:
        key = joint_key(state, joint)
        hit = self._cache.get(key)
        if hit is not None:
            return dict(hit)
        self.calls += 1
        res = resolve(state, joint)
        out = self.score(res.next_state, res.dislodged)
        if len(self._cache) >= self.cache_limit:
            self._cache.clear()
        self._cache[key] = out
        return dict(out)

    def score(self, nxt: GameState, dislodged: Iterable[Unit] = ()) -> dict[str, float]:
        w = self.weights
        m = nxt.map
        lost: dict[str, int] = {}
        for u in dislodged:
            lost[u.power] = lost.get(u.power, 0) + 1
        out = {}
        for power in nxt.powers:
            units = nxt.units_of(power)
            owned = nxt.centers_of(power)
            threatened: set[str] = set()
            for u in units:
                threatened |= m.reachable_provinces(u.kind, u.loc)
            threatened = {p for p in threatened if m.provinces[p].is_supply_center and p not in owned}
            out[power] = (
                w.sc * len(owned)
                + w.unit * len(units)
                + w.threat * len(threatened)
                - w.dislodge * lost.get(power, 0)
            )
        return out


class AffineValue:
    """``scale * base + offset`` for every power; used to check invariances."""

    def __init__(self, base: ValueFunction, scale: float = 1.0, offset: float = 0.0):
        self.base = base
        self.scale = scale
        self.offset = offset

    def evaluate(self, state: GameState, joint: Joint) -> dict[str, float]:
        return {p: self.scale * v + self.offset for p, v in self.base.evaluate(state, joint).items()}


def _tol(v: float) -> float:
    return 1e-9 * max(1.0, abs(v))


def argmax_action(scored: Iterable[tuple[float, Action]]) -> tuple[float, Action]:
    """Highest value; near-ties (relative 1e-9) go to the canonically smallest Action."""
    items = list(scored)
    if not items:
        raise ValueError("argmax over an empty candidate set")
    best = max(v for v, _ in items)
    tied = [(v, a) for v, a in items if v >= best - _tol(best)]
    return min(tied, key=lambda va: action_key(va[1]))


@dataclass(frozen=True)
class PolicyConfig:
    passes: int = 2
    cand_cap: int = 12
    pair_moves: bool = True


class PolicySampler(Protocol):
    def sample(
        self,
        state: GameState,
        power: str,
        forbid: Action | None = None,
        context: Joint | None = None,
    ) -> Action: ...

    def candidates(self, state: GameState, unit: Unit) -> list[Order]: ...


class GreedyPolicy:
    """Coordinate ascent on one power's orders, other powers fixed (all-hold by default).

    Units are visited in canonical order for ``passes`` sweeps. Besides single-unit
    changes, each unit may change together with one neighbouring own unit, and any
    step that empties an own province may be extended by a unit moving in behind.
    Supported attacks, rotations and vacate-and-follow moves are worthless one order
    at a time.
    """

    def __init__(self, value: ValueFunction, config: PolicyConfig = PolicyConfig()):
        if config.passes < 1 or config.cand_cap < 1:
            raise ValueError("passes and cand_cap must be >= 1")
        self.value = value
        self.config = config

    def candidates(self, state: GameState, unit: Unit) -> list[Order]:
        return legal_orders(state, unit)[: self.config.cand_cap]

    @staticmethod
    def _interacts(state: GameState, u: Unit, w: Unit) -> bool:
        m = state.map
        ru = m.reachable_provinces(u.kind, u.loc)
        rw = m.reachable_provinces(w.kind, w.loc)
        return w.province in ru or u.province in rw or bool(ru & rw)

    def _steps(self, units, cands, unit, interacts) -> list[dict[Unit, Order]]:
        steps: list[dict[Unit, Order]] = [{unit: o} for o in cands[unit]]
        if not self.config.pair_moves:
            return steps
        for w in units:
            if w != unit and interacts(unit, w):
                for o in cands[unit]:
                    if not isinstance(o, Hold):
                        steps.extend({unit: o, w: p} for p in cands[w])
        # followers: an own unit may step into a province the step vacates, and so on
        into: dict[str, list[Move]] = {}
        for w in units:
            for o in cands[w]:
                if isinstance(o, Move):
                    into.setdefault(province_of(o.dest), []).append(o)
        out = []
        seen = set()
        frontier = steps
        for _ in range(len(units) + 1):
            grown = []
            for step in frontier:
                key = frozenset(step.items())
                if key in seen:
                    continue
                seen.add(key)
                out.append(step)
                for w, o in step.items():
                    if not isinstance(o, Move):
                        continue
                    for f in into.get(w.province, ()):
                        if f.unit not in step:
                            grown.append({**step, f.unit: f})
            frontier = grown
        return out

    def sample(
        self,
        state: GameState,
        power: str,
        forbid: Action | None = None,
        context: Joint | None = None,
    ) -> Action:
        units = state.units_of(power)
        if not units:
            raise NoUnitsError(f"{power} has no units")
        others = {p: a for p, a in (context or {}).items() if p != power}
        cands = {u: self.candidates(state, u) for u in units}
        current: dict[Unit, Order] = {u: Hold(u) for u in units}
        pairs = {(u, w): self._interacts(state, u, w) for u in units for w in units}
        interacts = lambda u, w: pairs[(u, w)]  # noqa: E731

        def value_of(orders: Mapping[Unit, Order]) -> tuple[float, Action]:
            act = Action.of(power, orders.values())
            return self.value.evaluate(state, {**others, power: act})[power], act

        cur_val, cur_act = value_of(current)
        last_improved: Unit | None = None
        for _ in range(self.config.passes):
            for u in units:
                steps = self._steps(units, cands, u, interacts)
                scored = [value_of({**current, **step}) for step in steps]
                best_val, best_act = argmax_action(scored + [(cur_val, cur_act)])
                if best_act != cur_act:
                    if best_val > cur_val + _tol(cur_val):
                        last_improved = u
                    current = {o.unit: o for o in best_act.orders}
                    cur_val, cur_act = best_val, best_act

        if forbid is not None and cur_act == forbid:
            order = ([last_improved] if last_improved else []) + list(reversed(units))
            for u in order:
                scored = [value_of({**current, u: o}) for o in cands[u]]
                scored = [(v, a) for v, a in scored if a != forbid]
                if scored:
                    return argmax_action(scored)[1]
        return cur_act


def brute_force_best(
    state: GameState,
    power: str,
    background: Joint,
    value: ValueFunction,
    max_units: int = 3,
    max_cands: int = 8,
    candidates: Callable[[GameState, Unit], list[Order]] = legal_orders,
    exclude: Action | None = None,
) -> tuple[float, Action]:
    """Exhaustive argmax over the product of per-unit candidates."""
    units = state.units_of(power)
    if not units:
        raise NoUnitsError(f"{power} has no units")
    if len(units) > max_units:
        raise SizeLimitError(f"{power} has {len(units)} units (limit {max_units})")
    per_unit = [candidates(state, u) for u in units]
    for u, c in zip(units, per_unit):
        if len(c) > max_cands:
            raise SizeLimitError(f"{u} has {len(c)} candidates (limit {max_cands})")
    others = {p: a for p, a in background.items() if p != power}
    scored = []
    for combo in itertools.product(*per_unit):
        act = Action.of(power, combo)
        if exclude is not None and act == exclude:
            continue
        scored.append((value.evaluate(state, {**others, power: act})[power], act))
    return argmax_action(scored)
